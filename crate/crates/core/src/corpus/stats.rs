//! Dataset statistics: the mining funnel and case counts per stratum.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::case::{BenchmarkCase, Stratum};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelCounts {
    pub merged_prs: u64,
    pub prs_with_tests_modified: u64,
    pub modified_functions: u64,
    pub test_covered_functions: u64,
}

/// One row of a funnel export.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelRow {
    pub project: String,
    #[serde(flatten)]
    pub counts: FunnelCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectStats {
    pub funnel: FunnelCounts,
    /// Distinct functions per stratum.
    pub strata: BTreeMap<Stratum, u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub projects: BTreeMap<String, ProjectStats>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("funnel violation in {project}: {message}")]
    FunnelViolation { project: String, message: String },
    #[error("case {id} has an unsupported lineage")]
    BadLineage { id: String },
    #[error("cannot read funnel {path}: {message}")]
    Io { path: String, message: String },
}

pub fn load_funnel(path: &Path) -> Result<Vec<FunnelRow>, StatsError> {
    let err = |message: String| StatsError::Io { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

fn check(project: &str, s: &ProjectStats) -> Result<(), StatsError> {
    let f = &s.funnel;
    let fail = |message: String| Err(StatsError::FunnelViolation { project: project.to_string(), message });
    if f.prs_with_tests_modified > f.merged_prs {
        return fail(format!("{} PRs with tests > {} merged PRs", f.prs_with_tests_modified, f.merged_prs));
    }
    if f.test_covered_functions > f.modified_functions {
        return fail(format!("{} covered functions > {} modified functions", f.test_covered_functions, f.modified_functions));
    }
    let original = s.strata.get(&Stratum::Original).copied().unwrap_or(0);
    if f != &FunnelCounts::default() && original > f.test_covered_functions {
        return fail(format!("{original} original functions > {} covered functions", f.test_covered_functions));
    }
    for st in Stratum::BENCHMARK {
        let n = s.strata.get(&st).copied().unwrap_or(0);
        if st != Stratum::Original && n > original && original > 0 {
            return fail(format!("{n} {st} functions > {original} original functions"));
        }
    }
    Ok(())
}

/// Per-project funnel and stratum counts. Functions are counted once per
/// stratum even when a store holds several scenarios of the same function.
pub fn dataset_stats(cases: &[BenchmarkCase], funnel: &[FunnelRow]) -> Result<DatasetStats, StatsError> {
    let mut seen: BTreeMap<(String, Stratum), BTreeSet<&str>> = BTreeMap::new();
    for c in cases {
        let st = c.stratum().ok_or_else(|| StatsError::BadLineage { id: c.id.clone() })?;
        seen.entry((c.project.clone(), st)).or_default().insert(c.id.as_str());
    }
    let mut out = DatasetStats::default();
    for row in funnel {
        out.projects.entry(row.project.clone()).or_default().funnel = row.counts;
    }
    for ((project, st), ids) in seen {
        out.projects.entry(project).or_default().strata.insert(st, ids.len() as u64);
    }
    for (project, s) in &out.projects {
        check(project, s)?;
    }
    Ok(out)
}

impl DatasetStats {
    pub fn total_funnel(&self) -> FunnelCounts {
        self.projects.values().fold(FunnelCounts::default(), |a, p| FunnelCounts {
            merged_prs: a.merged_prs + p.funnel.merged_prs,
            prs_with_tests_modified: a.prs_with_tests_modified + p.funnel.prs_with_tests_modified,
            modified_functions: a.modified_functions + p.funnel.modified_functions,
            test_covered_functions: a.test_covered_functions + p.funnel.test_covered_functions,
        })
    }

    pub fn total_stratum(&self, st: Stratum) -> u64 {
        self.projects.values().map(|p| p.strata.get(&st).copied().unwrap_or(0)).sum()
    }

    /// Two CSV tables: the funnel, then counts per stratum.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("project,merged_prs,prs_with_tests_modified,modified_functions,test_covered_functions\n");
        let row = |name: &str, f: &FunnelCounts| {
            format!("{name},{},{},{},{}\n", f.merged_prs, f.prs_with_tests_modified, f.modified_functions, f.test_covered_functions)
        };
        for (name, p) in &self.projects {
            out += &row(name, &p.funnel);
        }
        out += &row("total", &self.total_funnel());
        out.push('\n');
        out += "project";
        for st in Stratum::BENCHMARK {
            out += &format!(",{st}");
        }
        out.push('\n');
        for (name, p) in &self.projects {
            out += name;
            for st in Stratum::BENCHMARK {
                out += &format!(",{}", p.strata.get(&st).copied().unwrap_or(0));
            }
            out.push('\n');
        }
        out += "total";
        for st in Stratum::BENCHMARK {
            out += &format!(",{}", self.total_stratum(st));
        }
        out.push('\n');
        out
    }
}
