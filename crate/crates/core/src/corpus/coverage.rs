//! lcov `.info` ingestion and coverage filtering.

use std::collections::BTreeMap;

use thiserror::Error;

use super::mining::CandidateFunction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverageError {
    #[error("malformed coverage at line {line}: {message}")]
    MalformedCoverage { line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FileCoverage {
    pub path: String,
    /// Function name → (start line, execution count).
    pub functions: BTreeMap<String, (Option<u32>, u64)>,
    /// Line → execution count.
    pub lines: BTreeMap<u32, u64>,
}

const KNOWN_KEYS: &[&str] = &["TN", "FNF", "FNH", "LF", "LH", "BRDA", "BRF", "BRH", "VER", "FNL", "FNA"];

fn bad(line: usize, message: impl Into<String>) -> CoverageError {
    CoverageError::MalformedCoverage { line, message: message.into() }
}

fn num<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T, CoverageError> {
    s.trim().parse().map_err(|_| bad(line, format!("invalid {what} `{s}`")))
}

pub fn parse_lcov(text: &str) -> Result<Vec<FileCoverage>, CoverageError> {
    let mut out = Vec::new();
    let mut cur: Option<FileCoverage> = None;
    for (i, raw) in text.lines().enumerate() {
        let n = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "end_of_record" {
            out.push(cur.take().ok_or_else(|| bad(n, "end_of_record outside a record"))?);
            continue;
        }
        let (key, value) = line.split_once(':').ok_or_else(|| bad(n, format!("expected KEY:VALUE, got `{line}`")))?;
        if key == "SF" {
            if cur.is_some() {
                return Err(bad(n, "SF before end_of_record"));
            }
            cur = Some(FileCoverage { path: value.to_string(), ..Default::default() });
            continue;
        }
        if KNOWN_KEYS.contains(&key) {
            continue;
        }
        let rec = cur.as_mut().ok_or_else(|| bad(n, format!("{key} outside a record")))?;
        let parts: Vec<&str> = value.split(',').collect();
        match key {
            // FN:<line>,<name> or FN:<start>,<end>,<name>
            "FN" if parts.len() >= 2 => {
                let start = num(parts[0], n, "line number")?;
                let name = parts[parts.len() - 1].to_string();
                rec.functions.entry(name).or_insert((None, 0)).0 = Some(start);
            }
            "FNDA" if parts.len() == 2 => {
                let count: u64 = num(parts[0], n, "count")?;
                rec.functions.entry(parts[1].to_string()).or_insert((None, 0)).1 += count;
            }
            "DA" if parts.len() >= 2 => {
                let ln = num(parts[0], n, "line number")?;
                let count: u64 = num(parts[1], n, "count")?;
                *rec.lines.entry(ln).or_insert(0) += count;
            }
            "FN" | "FNDA" | "DA" => return Err(bad(n, format!("wrong field count in `{line}`"))),
            other => return Err(bad(n, format!("unknown record `{other}`"))),
        }
    }
    if cur.is_some() {
        return Err(bad(text.lines().count(), "missing end_of_record"));
    }
    Ok(out)
}

fn same_file(report_path: &str, rel: &str) -> bool {
    let r = report_path.trim_start_matches("./");
    r == rel || r.ends_with(&format!("/{rel}"))
}

/// Whether the candidate ran at least once: its function record has a
/// positive count, or some line inside its definition executed.
pub fn is_covered(candidate: &CandidateFunction, fc: &FileCoverage) -> bool {
    if fc.functions.get(&candidate.name).is_some_and(|(_, c)| *c > 0) {
        return true;
    }
    let (lo, hi) = candidate.lines;
    fc.lines.range(lo..=hi).any(|(_, c)| *c > 0)
}

pub fn filter_by_coverage(candidates: &[CandidateFunction], lcov: &str) -> Result<Vec<CandidateFunction>, CoverageError> {
    let files = parse_lcov(lcov)?;
    let mut kept = Vec::new();
    for c in candidates {
        let matching: Vec<&FileCoverage> = files.iter().filter(|f| same_file(&f.path, &c.file)).collect();
        if matching.is_empty() {
            log::warn!("{}: not in coverage report; dropping {}", c.file, c.name);
            continue;
        }
        if matching.iter().any(|fc| is_covered(c, fc)) {
            kept.push(c.clone());
        }
    }
    Ok(kept)
}
