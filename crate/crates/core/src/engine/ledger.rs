use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::field::{Fe, Field};
use crate::sharing::{MacKey, Party};

/// One opened value as seen by one party.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Opened {
    /// The reconstructed value, or `None` when it was opened to the other
    /// party only.
    pub value: Option<Fe>,
    /// Opened to the client alone. The client then checks it against the full
    /// key and the holder contributes only its MAC share.
    pub private: bool,
    /// This party's share of `alpha * value`.
    pub mac: Fe,
}

/// Holder-side deviations applied to ledger traffic, for soundness testing.
#[derive(Clone, Debug, Default)]
pub struct LedgerTamper {
    /// Added to the holder's value share of opened entry `index` before sending.
    pub opened: Vec<(usize, Fe)>,
    /// Added to the holder's MAC share of opened entry `index` at check time.
    pub mac: Vec<(usize, Fe)>,
}

/// Append-only record of everything the batched consistency check covers.
///
/// Both parties append in the same order, so entry `j` names the same opened
/// value on both sides.
#[derive(Clone, Debug, Default)]
pub struct CheckLedger {
    opened: Vec<Opened>,
    pairs: Vec<(Fe, Fe)>,
    tamper: LedgerTamper,
}

impl CheckLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_tamper(tamper: LedgerTamper) -> Self {
        Self {
            tamper,
            ..Self::default()
        }
    }

    pub fn opened(&self) -> &[Opened] {
        &self.opened
    }

    /// `(tau, xi)` pairs: two independently derived shares of `alpha * v` for
    /// every ReLU input `v`.
    pub fn pairs(&self) -> &[(Fe, Fe)] {
        &self.pairs
    }

    pub fn open_count(&self) -> usize {
        self.opened.len()
    }

    pub fn record_opened(&mut self, values: &[Fe], macs: &[Fe]) {
        assert_eq!(values.len(), macs.len());
        self.opened.extend(values.iter().zip(macs).map(|(&v, &m)| Opened {
            value: Some(v),
            private: false,
            mac: m,
        }));
    }

    /// Records a value revealed to the client alone.
    pub fn record_private(&mut self, values: Option<&[Fe]>, macs: &[Fe]) {
        if let Some(v) = values {
            assert_eq!(v.len(), macs.len());
        }
        self.opened.extend(macs.iter().enumerate().map(|(i, &m)| Opened {
            value: values.map(|v| v[i]),
            private: true,
            mac: m,
        }));
    }

    pub fn record_pairs(&mut self, tau: &[Fe], xi: &[Fe]) {
        assert_eq!(tau.len(), xi.len());
        self.pairs.extend(tau.iter().copied().zip(xi.iter().copied()));
    }

    /// Offsets the holder adds to the value shares of the next `n` openings.
    pub(crate) fn open_offsets(&self, n: usize) -> Vec<(usize, Fe)> {
        let start = self.opened.len();
        self.tamper
            .opened
            .iter()
            .filter(|(i, _)| (start..start + n).contains(i))
            .map(|&(i, d)| (i - start, d))
            .collect()
    }

    /// This party's share of the check value `q`. The two shares sum to zero
    /// when every opened value and every pair is consistent with the MAC key.
    ///
    /// Coefficients are expanded from `seed`, opened entries first, then pairs.
    pub fn q_share(&self, field: &Field, key: &MacKey, seed: [u8; 32]) -> Fe {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let mut q = Fe::ZERO;
        for (j, o) in self.opened.iter().enumerate() {
            let r = field.random(&mut rng);
            let mut mac = o.mac;
            if key.party == Party::Holder {
                for &(i, d) in &self.tamper.mac {
                    if i == j {
                        mac = field.add(mac, d);
                    }
                }
            }
            let term = match (o.value, o.private) {
                (Some(a), false) => field.sub(mac, field.mul(key.alpha_share, a)),
                (Some(a), true) => {
                    let alpha = key.alpha.expect("private openings land at the client");
                    field.sub(mac, field.mul(alpha, a))
                }
                (None, _) => mac,
            };
            q = field.add(q, field.mul(r, term));
        }
        for &(tau, xi) in &self.pairs {
            let r = field.random(&mut rng);
            q = field.add(q, field.mul(r, field.sub(tau, xi)));
        }
        q
    }
}

impl CheckLedger {
    /// Opened entries then pairs; the tamper settings are not stored.
    pub fn to_bytes(&self, field: &Field) -> Vec<u8> {
        let mut w = crate::wire::Writer::new();
        w.u64(self.opened.len() as u64);
        for o in &self.opened {
            let tag = o.value.is_some() as u8 | (o.private as u8) << 1;
            w.u8(tag);
            if let Some(v) = o.value {
                w.fe(field, v);
            }
            w.fe(field, o.mac);
        }
        w.u64(self.pairs.len() as u64);
        for &(t, x) in &self.pairs {
            w.fe(field, t).fe(field, x);
        }
        w.finish()
    }

    pub fn from_bytes(field: &Field, bytes: &[u8], tamper: LedgerTamper) -> crate::error::Result<Self> {
        let mut r = crate::wire::Reader::new(bytes);
        let n = r.u64()? as usize;
        let mut opened = Vec::with_capacity(n.min(r.remaining()));
        for _ in 0..n {
            let tag = r.u8()?;
            let value = if tag & 1 == 1 { Some(r.fe(field)?) } else { None };
            opened.push(Opened {
                value,
                private: tag & 2 == 2,
                mac: r.fe(field)?,
            });
        }
        let m = r.u64()? as usize;
        let mut pairs = Vec::with_capacity(m.min(r.remaining()));
        for _ in 0..m {
            pairs.push((r.fe(field)?, r.fe(field)?));
        }
        r.finish()?;
        Ok(Self { opened, pairs, tamper })
    }
}
