//! Holder-side deviations for soundness testing.
//!
//! Syntax, one spec per `;`-separated item:
//! `linear_share(L)`, `nonlinear_input(L)`, `opened_diff(I)`, `mac_share(I)`
//! each with an optional `,delta=D` (default 1), and `gc_input_label(L,W)`,
//! which flips the low bit of wire `W`'s label. `L` is a layer index, `I` an
//! index into the opened-value ledger.

use std::fmt;
use std::str::FromStr;

use crate::engine::{Architecture, LayerKind, LedgerTamper};
use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::nonlinear::NlTamper;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TamperTarget {
    /// Holder's value share of the first output of linear layer `layer`.
    LinearShare { layer: usize },
    /// Holder's garbled-circuit input for the first activation of ReLU layer `layer`.
    NonlinearInput { layer: usize },
    /// Holder's share of opened value `index` as sent.
    OpenedDiff { index: usize },
    /// Holder's MAC share of opened value `index` in the check.
    MacShare { index: usize },
    /// One evaluator input label of the first activation of ReLU layer `layer`.
    GcInputLabel { layer: usize, wire: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TamperSpec {
    pub target: TamperTarget,
    /// Ignored by label flips.
    pub delta: i64,
}

impl TamperSpec {
    pub fn new(target: TamperTarget) -> Self {
        Self { target, delta: 1 }
    }

    pub fn parse_list(s: &str) -> Result<Vec<TamperSpec>> {
        s.split(';').map(str::trim).filter(|t| !t.is_empty()).map(str::parse).collect()
    }
}

impl FromStr for TamperSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::parse("--tamper", format!("{m} in {s:?}"));
        let open = s.find('(').ok_or_else(|| bad("missing '('"))?;
        let close = s.find(')').ok_or_else(|| bad("missing ')'"))?;
        if close < open {
            return Err(bad("unbalanced parentheses"));
        }
        let name = s[..open].trim();
        let args: Vec<usize> = s[open + 1..close]
            .split(',')
            .map(|a| a.trim().parse::<usize>().map_err(|_| bad("non-numeric argument")))
            .collect::<Result<_>>()?;
        let mut delta = 1i64;
        let rest = s[close + 1..].trim();
        if !rest.is_empty() {
            let d = rest
                .strip_prefix(',')
                .and_then(|r| r.trim().strip_prefix("delta="))
                .ok_or_else(|| bad("expected ',delta=D'"))?;
            delta = d.trim().parse().map_err(|_| bad("non-numeric delta"))?;
        }
        let one = |args: &[usize]| match args {
            [a] => Ok(*a),
            _ => Err(bad("expected one argument")),
        };
        let target = match name {
            "linear_share" => TamperTarget::LinearShare { layer: one(&args)? },
            "nonlinear_input" => TamperTarget::NonlinearInput { layer: one(&args)? },
            "opened_diff" => TamperTarget::OpenedDiff { index: one(&args)? },
            "mac_share" => TamperTarget::MacShare { index: one(&args)? },
            "gc_input_label" => match args[..] {
                [layer, wire] => TamperTarget::GcInputLabel { layer, wire },
                _ => return Err(bad("expected (layer, wire)")),
            },
            _ => return Err(bad("unknown tamper target")),
        };
        Ok(TamperSpec { target, delta })
    }
}

impl fmt::Display for TamperSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            TamperTarget::LinearShare { layer } => write!(f, "linear_share({layer}),delta={}", self.delta),
            TamperTarget::NonlinearInput { layer } => write!(f, "nonlinear_input({layer}),delta={}", self.delta),
            TamperTarget::OpenedDiff { index } => write!(f, "opened_diff({index}),delta={}", self.delta),
            TamperTarget::MacShare { index } => write!(f, "mac_share({index}),delta={}", self.delta),
            TamperTarget::GcInputLabel { layer, wire } => write!(f, "gc_input_label({layer},{wire})"),
        }
    }
}

/// Rejects specs naming a layer of the wrong kind or a wire the sign
/// circuit does not have.
pub fn check_targets(specs: &[TamperSpec], arch: &Architecture) -> Result<()> {
    let kind = |layer: usize| arch.layers.get(layer);
    for s in specs {
        let ok = match s.target {
            TamperTarget::LinearShare { layer } => kind(layer).is_some_and(LayerKind::is_linear),
            TamperTarget::NonlinearInput { layer } => matches!(kind(layer), Some(LayerKind::Relu)),
            TamperTarget::GcInputLabel { layer, wire } => {
                matches!(kind(layer), Some(LayerKind::Relu)) && wire < 2 * arch.field.kappa as usize
            }
            TamperTarget::OpenedDiff { .. } | TamperTarget::MacShare { .. } => true,
        };
        if !ok {
            return Err(Error::parse("--tamper", format!("{s} does not fit the model's layers")));
        }
    }
    Ok(())
}

/// The ledger-level part of a tamper list.
pub fn ledger_tamper(field: &Field, specs: &[TamperSpec]) -> LedgerTamper {
    let mut t = LedgerTamper::default();
    for s in specs {
        match s.target {
            TamperTarget::OpenedDiff { index } => t.opened.push((index, field.from_i64(s.delta))),
            TamperTarget::MacShare { index } => t.mac.push((index, field.from_i64(s.delta))),
            _ => {}
        }
    }
    t
}

/// Offset applied to linear layer `layer`'s first output share, if any.
pub fn linear_delta(field: &Field, specs: &[TamperSpec], layer: usize) -> Option<Fe> {
    let mut acc = None;
    for s in specs {
        if s.target == (TamperTarget::LinearShare { layer }) {
            acc = Some(field.add(acc.unwrap_or(Fe::ZERO), field.from_i64(s.delta)));
        }
    }
    acc
}

/// Garbled-evaluation deviations for ReLU layer `layer`.
pub fn nonlinear_tamper(field: &Field, specs: &[TamperSpec], layer: usize) -> NlTamper {
    let mut t = NlTamper::default();
    for s in specs {
        match s.target {
            TamperTarget::NonlinearInput { layer: l } if l == layer => t.input_delta.push((0, field.from_i64(s.delta))),
            TamperTarget::GcInputLabel { layer: l, wire } if l == layer => t.label_flip.push((0, wire)),
            _ => {}
        }
    }
    t
}
