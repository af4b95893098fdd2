//! Compile and test pass rates per stratum.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::BigRational;
use num_traits::Zero;

use super::{pass_at_k_exact, MetricsError, PassStats};
use crate::corpus::{BenchmarkCase, Scenario, Stratum};
use crate::harness::CaseOutcome;

/// Samples per case that pass@k selects from, at most.
pub const DEFAULT_K: u64 = 5;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MetricsRow {
    pub project: String,
    pub model: String,
    pub scenario: Scenario,
    pub stratum: Stratum,
    /// Percentages, exact.
    pub cpr: BigRational,
    pub tpr: BigRational,
    pub cases: u64,
}

/// The stratum an original-restricted row is restricted to.
pub fn restriction_for(scenario: Scenario) -> Stratum {
    match scenario {
        Scenario::Generation => Stratum::Structure,
        Scenario::Completion => Stratum::Semantic,
    }
}

#[derive(Default)]
struct Acc {
    cpr: BigRational,
    tpr: BigRational,
    cases: u64,
}

pub(crate) fn check_row(row: &MetricsRow) -> Result<(), MetricsError> {
    if row.tpr > row.cpr {
        return Err(MetricsError::RateInvariant {
            project: row.project.clone(),
            model: row.model.clone(),
            scenario: row.scenario.to_string(),
            stratum: row.stratum.to_string(),
            cpr: super::report::fmt1(&row.cpr),
            tpr: super::report::fmt1(&row.tpr),
        });
    }
    Ok(())
}

/// CPR and TPR per (project, scenario, stratum) as the mean over cases of
/// pass@k with k = min(`k`, samples for the case). Also emits the
/// original-restricted stratum: original cases whose variant exists in the
/// scenario's structural/semantic stratum.
pub fn compute_rates(
    outcomes: &[CaseOutcome],
    cases: &[BenchmarkCase],
    model: &str,
    k: u64,
) -> Result<Vec<MetricsRow>, MetricsError> {
    let by_id: BTreeMap<&str, &BenchmarkCase> = cases.iter().map(|c| (c.id.as_str(), c)).collect();
    // case id → (n, compile passes, test passes)
    let mut counts: BTreeMap<&str, (u64, u64, u64)> = BTreeMap::new();
    for o in outcomes {
        if !by_id.contains_key(o.case_id.as_str()) {
            return Err(MetricsError::UnknownCaseId(o.case_id.clone()));
        }
        let e = counts.entry(o.case_id.as_str()).or_default();
        e.0 += 1;
        e.1 += o.compile_pass as u64;
        e.2 += o.test_pass as u64;
    }

    let mut variants: BTreeSet<(Scenario, Stratum, &str)> = BTreeSet::new();
    for c in cases {
        let st = c.stratum().ok_or_else(|| MetricsError::BadLineage(c.id.clone()))?;
        variants.insert((c.scenario, st, c.base_id()));
    }

    let mut acc: BTreeMap<(String, Scenario, Stratum), Acc> = BTreeMap::new();
    for (id, (n, cc, tc)) in &counts {
        let case = by_id[id];
        let st = case.stratum().ok_or_else(|| MetricsError::BadLineage(case.id.clone()))?;
        let kk = k.min(*n).max(1);
        let cpr = pass_at_k_exact(PassStats::new(*n, *cc, kk)?);
        let tpr = pass_at_k_exact(PassStats::new(*n, *tc, kk)?);
        let mut targets = vec![st];
        if st == Stratum::Original && variants.contains(&(case.scenario, restriction_for(case.scenario), case.base_id())) {
            targets.push(Stratum::OriginalRestricted);
        }
        for t in targets {
            let a = acc.entry((case.project.clone(), case.scenario, t)).or_default();
            a.cpr += &cpr;
            a.tpr += &tpr;
            a.cases += 1;
        }
    }

    let hundred = BigRational::from_integer(100.into());
    let mut rows = Vec::new();
    for ((project, scenario, stratum), a) in acc {
        if a.cases == 0 {
            continue;
        }
        let n = BigRational::from_integer(a.cases.into());
        let row = MetricsRow {
            project,
            model: model.to_string(),
            scenario,
            stratum,
            cpr: if a.cpr.is_zero() { BigRational::zero() } else { &a.cpr * &hundred / &n },
            tpr: if a.tpr.is_zero() { BigRational::zero() } else { &a.tpr * &hundred / &n },
            cases: a.cases,
        };
        check_row(&row)?;
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::case::tests::sample_case;
    use crate::corpus::{variant_id, ObfuscationRecord, Strategy};

    fn case(id: &str, lineage: Vec<ObfuscationRecord>) -> BenchmarkCase {
        BenchmarkCase { id: id.into(), lineage, ..sample_case() }
    }

    fn outcome(id: &str, i: usize, compile: bool, test: bool) -> CaseOutcome {
        CaseOutcome {
            case_id: id.into(),
            sample_index: i,
            compile_pass: compile,
            test_runs: vec![test],
            test_pass: test,
            compile_log: String::new(),
            test_log: String::new(),
        }
    }

    fn pct(n: i64) -> BigRational {
        BigRational::from_integer(n.into())
    }

    #[test]
    fn four_cases_one_sample() {
        let cases: Vec<_> = ["a", "b", "c", "d"].iter().map(|i| case(i, vec![])).collect();
        let outs = vec![outcome("a", 0, true, true), outcome("b", 0, true, false), outcome("c", 0, false, false), outcome("d", 0, false, false)];
        let rows = compute_rates(&outs, &cases, "m", DEFAULT_K).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].cpr.clone(), rows[0].tpr.clone(), rows[0].cases), (pct(50), pct(25), 4));
        assert!(compute_rates(&[], &cases, "m", DEFAULT_K).unwrap().is_empty());
    }

    #[test]
    fn unknown_and_invariant() {
        let cases = vec![case("a", vec![])];
        assert_eq!(
            compute_rates(&[outcome("zz", 0, true, true)], &cases, "m", 5).unwrap_err(),
            MetricsError::UnknownCaseId("zz".into())
        );
        let err = compute_rates(&[outcome("a", 0, false, true)], &cases, "m", 5).unwrap_err();
        assert!(matches!(err, MetricsError::RateInvariant { ref stratum, .. } if stratum == "original"));
    }

    #[test]
    fn restricted_original() {
        let rec = ObfuscationRecord { strategy: Strategy::Structure, seed: 0, rename_map: None, inlined_callees: Some(vec![]), templates_applied: None, verified: true };
        let cases = vec![case("a", vec![]), case("b", vec![]), case(&variant_id("a", Stratum::Structure), vec![rec])];
        let outs = vec![outcome("a", 0, true, true), outcome("b", 0, false, false), outcome("a#structure", 0, true, false)];
        let rows = compute_rates(&outs, &cases, "m", 5).unwrap();
        let get = |s: Stratum| rows.iter().find(|r| r.stratum == s).unwrap();
        assert_eq!(get(Stratum::Original).cpr, pct(50));
        assert_eq!(get(Stratum::OriginalRestricted).cpr, pct(100));
        assert_eq!(get(Stratum::OriginalRestricted).cases, 1);
        assert_eq!(get(Stratum::Structure).tpr, pct(0));
    }

    #[test]
    fn k_capped_by_samples() {
        let cases = vec![case("a", vec![])];
        let outs: Vec<_> = (0..3).map(|i| outcome("a", i, i == 0, false)).collect();
        let rows = compute_rates(&outs, &cases, "m", 5).unwrap();
        assert_eq!(rows[0].cpr, pct(100));
        let rows = compute_rates(&outs, &cases, "m", 1).unwrap();
        assert_eq!(rows[0].cpr, BigRational::new(100.into(), 3.into()));
    }
}
