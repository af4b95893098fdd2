//! Pass rates, pass@k, change markers, sample sizes and reports.

pub mod rates;
pub mod report;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

pub use rates::{compute_rates, MetricsRow};
pub use report::{average_rows, decrease_ratio, emit_report, parse_rows_csv, ChangeMarker, Direction, Magnitude, ReportFormat};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("outcome references unknown case {0}")]
    UnknownCaseId(String),
    #[error("case {0} has a lineage outside the benchmark strata")]
    BadLineage(String),
    #[error("TPR {tpr} exceeds CPR {cpr} for {project} / {model} / {scenario} / stratum {stratum}")]
    RateInvariant { project: String, model: String, scenario: String, stratum: String, cpr: String, tpr: String },
    #[error("invalid pass statistics n={n} c={c} k={k}")]
    InvalidStats { n: u64, c: u64, k: u64 },
    #[error("ratio undefined: base is 0 and the obfuscated rate is {obf}")]
    UndefinedBase { obf: String },
    #[error("invalid sample-size parameters: {0}")]
    InvalidParams(String),
    #[error("report input line {line}: {message}")]
    Input { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassStats {
    pub n: u64,
    pub c: u64,
    pub k: u64,
}

impl PassStats {
    pub fn new(n: u64, c: u64, k: u64) -> Result<PassStats, MetricsError> {
        if c > n || k == 0 || k > n {
            return Err(MetricsError::InvalidStats { n, c, k });
        }
        Ok(PassStats { n, c, k })
    }
}

fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// 1 − C(n−c, k) / C(n, k), exactly.
pub fn pass_at_k_exact(s: PassStats) -> BigRational {
    let fail = binomial(s.n - s.c, s.k);
    let all = binomial(s.n, s.k);
    BigRational::one() - BigRational::new(fail.into(), all.into())
}

pub fn pass_at_k(s: PassStats) -> f64 {
    pass_at_k_exact(s).to_f64().unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSizeParams {
    pub population: u64,
    pub confidence: f64,
    pub margin: f64,
    pub p: f64,
}

impl SampleSizeParams {
    pub fn new(population: u64, confidence: f64, margin: f64) -> SampleSizeParams {
        SampleSizeParams { population, confidence, margin, p: 0.5 }
    }
}

/// Two-sided critical value. Conventional two-decimal values are used for
/// the usual levels so that hand calculations agree.
pub fn z_for_confidence(confidence: f64) -> Result<f64, MetricsError> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(MetricsError::InvalidParams(format!("confidence {confidence} outside (0, 1)")));
    }
    const TABLE: [(f64, f64); 5] = [(0.80, 1.28), (0.90, 1.645), (0.95, 1.96), (0.98, 2.33), (0.99, 2.576)];
    if let Some((_, z)) = TABLE.iter().find(|(c, _)| (c - confidence).abs() < 1e-12) {
        return Ok(*z);
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + confidence / 2.0))
}

/// Share of the population above which the finite population correction
/// is applied.
pub const FPC_THRESHOLD: f64 = 0.05;

/// Cochran's sample size. n0 = z²·p(1−p)/e²; when n0/N exceeds
/// [`FPC_THRESHOLD`] the corrected n0 / (1 + (n0 − 1)/N) is rounded to the
/// nearest integer, otherwise n0 is rounded up. Never more than N.
pub fn sample_size(params: SampleSizeParams) -> Result<u64, MetricsError> {
    let SampleSizeParams { population: n_pop, confidence, margin: e, p } = params;
    if n_pop == 0 {
        return Err(MetricsError::InvalidParams("population must be at least 1".into()));
    }
    if !(e > 0.0 && e < 1.0) {
        return Err(MetricsError::InvalidParams(format!("margin {e} outside (0, 1)")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(MetricsError::InvalidParams(format!("proportion {p} outside [0, 1]")));
    }
    let z = z_for_confidence(confidence)?;
    let n0 = z * z * p * (1.0 - p) / (e * e);
    let big_n = n_pop as f64;
    let n = if n0 / big_n > FPC_THRESHOLD {
        (n0 / (1.0 + (n0 - 1.0) / big_n)).round()
    } else {
        // Guard against 384.16000000000003-style float noise.
        (n0 - 1e-9).ceil()
    };
    Ok((n.max(if p > 0.0 && p < 1.0 { 1.0 } else { 0.0 }) as u64).min(n_pop))
}
