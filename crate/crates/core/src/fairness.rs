//! Per-group empirical risk, the empirical fairness gap, and the audit report.

use std::collections::BTreeMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Fe, Field};
use crate::harness::channel::{ByteCounters, Phase};

/// One labelled, group-annotated test point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
    pub group: String,
}

/// Index of the largest logit under the signed decoding; ties go to the
/// lowest index.
pub fn argmax(field: &Field, logits: &[Fe]) -> Option<usize> {
    let mut best: Option<(usize, i64)> = None;
    for (i, &v) in logits.iter().enumerate() {
        let x = field.decode_int(v);
        if best.is_none_or(|(_, b)| x > b) {
            best = Some((i, x));
        }
    }
    best.map(|(i, _)| i)
}

fn check_len(preds: &[usize], samples: &[Sample]) -> Result<()> {
    if preds.len() != samples.len() {
        return Err(Error::LengthMismatch {
            expected: samples.len(),
            got: preds.len(),
        });
    }
    Ok(())
}

/// Misclassification rate within `group`.
pub fn empirical_conditional_risk(preds: &[usize], samples: &[Sample], group: &str) -> Result<Ratio<u64>> {
    check_len(preds, samples)?;
    let (mut n, mut wrong) = (0u64, 0u64);
    for (p, s) in preds.iter().zip(samples) {
        if s.group == group {
            n += 1;
            wrong += (*p != s.label) as u64;
        }
    }
    if n == 0 {
        return Err(Error::EmptyGroup(group.to_string()));
    }
    Ok(Ratio::new(wrong, n))
}

/// Group names in first-seen order.
pub fn groups(samples: &[Sample]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in samples {
        if !out.contains(&s.group) {
            out.push(s.group.clone());
        }
    }
    out
}

/// Largest pairwise risk difference among `risks`.
pub fn max_gap(risks: &[Ratio<u64>]) -> Result<Ratio<u64>> {
    if risks.len() < 2 {
        return Err(Error::InsufficientGroups(risks.len()));
    }
    let hi = risks.iter().max().expect("non-empty");
    let lo = risks.iter().min().expect("non-empty");
    Ok(hi - lo)
}

/// Empirical fairness gap over every group present in `samples`.
pub fn efg(preds: &[usize], samples: &[Sample]) -> Result<Ratio<u64>> {
    let risks = groups(samples)
        .iter()
        .map(|g| empirical_conditional_risk(preds, samples, g))
        .collect::<Result<Vec<_>>>()?;
    max_gap(&risks)
}

pub fn is_eps_fair(efg: Ratio<u64>, epsilon: f64) -> bool {
    ratio_f64(efg) <= epsilon
}

fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRisk {
    pub group: String,
    pub count: u64,
    pub errors: u64,
    /// Exact value as `errors/count` in lowest terms.
    pub risk: String,
    pub risk_decimal: f64,
}

/// Cost counters gathered during a session.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Bytes in both directions, per phase.
    pub bytes: BTreeMap<String, u64>,
    pub total_bytes: u64,
    pub queries: u64,
    pub relu_count: u64,
    pub rotations: u64,
    pub ct_mults: u64,
    pub seconds: BTreeMap<String, f64>,
}

impl Metrics {
    pub fn from_counters(c: &ByteCounters) -> Self {
        let mut m = Metrics::default();
        for p in Phase::ALL {
            m.bytes.insert(phase_name(p).to_string(), c.phase_total(p));
        }
        m.total_bytes = c.total();
        m
    }
}

pub fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Offline => "offline",
        Phase::Online => "online",
        Phase::Check => "check",
    }
}

pub const DISCLAIMER: &str = "The verdict compares the empirical gap on this single test set with epsilon. \
delta is recorded as supplied; no confidence level is derived from it.";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub aborted: bool,
    pub epsilon: f64,
    pub delta: f64,
    pub samples: u64,
    pub groups: Vec<GroupRisk>,
    /// Groups that were requested but had no samples.
    pub excluded_groups: Vec<String>,
    pub efg: Option<String>,
    pub efg_decimal: Option<f64>,
    /// Present only when the session passed the check.
    pub fair: Option<bool>,
    pub metrics: Metrics,
    pub disclaimer: String,
}

impl FairnessReport {
    /// Report for a session that failed the check: no risks, no verdict.
    pub fn aborted(epsilon: f64, delta: f64, samples: usize, metrics: Metrics) -> Self {
        Self {
            aborted: true,
            epsilon,
            delta,
            samples: samples as u64,
            groups: Vec::new(),
            excluded_groups: Vec::new(),
            efg: None,
            efg_decimal: None,
            fair: None,
            metrics,
            disclaimer: DISCLAIMER.to_string(),
        }
    }

    pub fn efg_ratio(&self) -> Option<Ratio<u64>> {
        let s = self.efg.as_ref()?;
        let (n, d) = s.split_once('/').unwrap_or((s, "1"));
        Some(Ratio::new(n.parse().ok()?, d.parse().ok()?))
    }
}

fn ratio_string(r: Ratio<u64>) -> String {
    if *r.denom() == 1 {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Builds the report from verified predictions. `expected_groups` lists
/// groups that should appear; those without samples are excluded from the
/// gap and listed separately.
pub fn build_report(
    preds: &[usize],
    samples: &[Sample],
    expected_groups: &[String],
    epsilon: f64,
    delta: f64,
    metrics: Metrics,
) -> Result<FairnessReport> {
    check_len(preds, samples)?;
    let mut names = groups(samples);
    let mut excluded = Vec::new();
    for g in expected_groups {
        if !names.contains(g) {
            excluded.push(g.clone());
        }
    }
    names.sort();
    let mut rows = Vec::with_capacity(names.len());
    let mut risks = Vec::with_capacity(names.len());
    for g in &names {
        let r = empirical_conditional_risk(preds, samples, g)?;
        let count = samples.iter().filter(|s| &s.group == g).count() as u64;
        let errors = preds
            .iter()
            .zip(samples)
            .filter(|(p, s)| &s.group == g && **p != s.label)
            .count() as u64;
        rows.push(GroupRisk {
            group: g.clone(),
            count,
            errors,
            risk: ratio_string(r),
            risk_decimal: ratio_f64(r),
        });
        risks.push(r);
    }
    let gap = max_gap(&risks)?;
    Ok(FairnessReport {
        aborted: false,
        epsilon,
        delta,
        samples: samples.len() as u64,
        groups: rows,
        excluded_groups: excluded,
        efg: Some(ratio_string(gap)),
        efg_decimal: Some(ratio_f64(gap)),
        fair: Some(is_eps_fair(gap, epsilon)),
        metrics,
        disclaimer: DISCLAIMER.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(label: usize, group: &str) -> Sample {
        Sample {
            features: vec![],
            label,
            group: group.into(),
        }
    }

    #[test]
    fn one_error_in_four() {
        let samples = vec![s(0, "A"), s(1, "A"), s(1, "A"), s(0, "A"), s(1, "B")];
        let preds = vec![0, 1, 0, 0, 1];
        assert_eq!(empirical_conditional_risk(&preds, &samples, "A").unwrap(), Ratio::new(1, 4));
        assert_eq!(empirical_conditional_risk(&preds, &samples, "B").unwrap(), Ratio::new(0, 1));
        assert!(matches!(
            empirical_conditional_risk(&preds, &samples, "C"),
            Err(Error::EmptyGroup(g)) if g == "C"
        ));
    }

    #[test]
    fn gap_examples() {
        let r = |n, d| Ratio::new(n, d);
        assert_eq!(max_gap(&[r(1, 4), r(1, 2)]).unwrap(), r(1, 4));
        assert_eq!(max_gap(&[r(1, 3), r(1, 3)]).unwrap(), r(0, 1));
        assert_eq!(max_gap(&[r(0, 1), r(1, 5), r(7, 10)]).unwrap(), r(7, 10));
        assert!(matches!(max_gap(&[r(0, 1)]), Err(Error::InsufficientGroups(1))));
    }

    #[test]
    fn threshold_is_inclusive() {
        assert!(is_eps_fair(Ratio::new(1, 4), 0.3));
        assert!(is_eps_fair(Ratio::new(1, 4), 0.25));
        assert!(is_eps_fair(Ratio::new(3, 10), 0.3));
        assert!(!is_eps_fair(Ratio::new(1, 2), 0.3));
    }

    #[test]
    fn argmax_signed_and_ties() {
        let f = Field::with_prime(101).unwrap();
        assert_eq!(argmax(&f, &[f.from_i64(-3), f.elem(2), f.elem(2)]), Some(1));
        assert_eq!(argmax(&f, &[f.from_i64(-3), f.from_i64(-1)]), Some(1));
        assert_eq!(argmax(&f, &[]), None);
    }

    #[test]
    fn report_lists_excluded_groups() {
        let samples = vec![s(0, "A"), s(1, "A"), s(1, "B"), s(1, "B")];
        let preds = vec![0, 0, 1, 0];
        let rep = build_report(&preds, &samples, &["A".into(), "B".into(), "Z".into()], 0.1, 0.05, Metrics::default())
            .unwrap();
        assert_eq!(rep.efg.as_deref(), Some("0"));
        assert_eq!(rep.efg_ratio(), Some(Ratio::new(0, 1)));
        assert_eq!(rep.excluded_groups, vec!["Z".to_string()]);
        assert_eq!(rep.groups[0].risk, "1/2");
        assert_eq!(rep.fair, Some(true));
        let back: FairnessReport = serde_json::from_str(&serde_json::to_string(&rep).unwrap()).unwrap();
        assert_eq!(back, rep);
    }

    proptest! {
        #[test]
        fn risks_and_gap_in_unit_interval(rows in prop::collection::vec((0usize..3, 0usize..3, 0u8..3), 2..60)) {
            let samples: Vec<Sample> = rows.iter().map(|&(y, _, g)| s(y, &g.to_string())).collect();
            let preds: Vec<usize> = rows.iter().map(|&(_, p, _)| p).collect();
            let gs = groups(&samples);
            for g in &gs {
                let r = empirical_conditional_risk(&preds, &samples, g).unwrap();
                prop_assert!(r <= Ratio::new(1, 1));
            }
            match efg(&preds, &samples) {
                Ok(gap) => prop_assert!(gs.len() >= 2 && gap <= Ratio::new(1, 1)),
                Err(Error::InsufficientGroups(n)) => prop_assert_eq!(n, 1),
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
