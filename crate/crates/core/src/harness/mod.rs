//! Prompting, sampling, splicing and sandboxed evaluation.

pub mod generate;
pub mod mask;
pub mod prompt;
pub mod sandbox;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

pub use generate::{generate_samples, ClientError, GenerationSample, Generator, HttpConfig, HttpGenerator, ReplayGenerator};
pub use mask::{mask_for_completion, mask_with_count, top_level_statements, MaskError, DEFAULT_KEEP_RATIO};
pub use prompt::{build_prompt, extract_code, ExtractError, PromptSpec};
pub use sandbox::{
    evaluate_code, run_case, splice, splice_text, CaseOutcome, PassPolicy, SandboxConfig, SandboxFailure, SpliceError,
};

use crate::cfront::TestMatcher;
use crate::corpus::BenchmarkCase;

/// Evaluate every sample against its case with up to `parallelism` workers.
///
/// Outcomes come back sorted by `(case_id, sample_index)` regardless of
/// completion order. Samples whose case is unknown are skipped with a warning.
pub fn evaluate_samples(
    project_root: &Path,
    cases: &[BenchmarkCase],
    samples: &[GenerationSample],
    sandbox: &SandboxConfig,
    tests: &TestMatcher,
    parallelism: usize,
) -> Result<Vec<CaseOutcome>, SandboxFailure> {
    let by_id: BTreeMap<&str, &BenchmarkCase> = cases.iter().map(|c| (c.id.as_str(), c)).collect();
    let work: Vec<(&BenchmarkCase, &GenerationSample)> = samples
        .iter()
        .filter_map(|s| match by_id.get(s.case_id.as_str()) {
            Some(c) => Some((*c, s)),
            None => {
                log::warn!("sample for unknown case {}", s.case_id);
                None
            }
        })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| SandboxFailure(e.to_string()))?;
    let mut outcomes = pool.install(|| {
        work.par_iter()
            .map(|(case, s)| evaluate_code(project_root, case, &s.extracted_code, s.sample_index, sandbox, tests))
            .collect::<Result<Vec<_>, _>>()
    })?;
    outcomes.sort_by(|a, b| (&a.case_id, a.sample_index).cmp(&(&b.case_id, b.sample_index)));
    Ok(outcomes)
}

pub fn write_outcomes(w: &mut dyn Write, outcomes: &[CaseOutcome]) -> std::io::Result<()> {
    for o in outcomes {
        serde_json::to_writer(&mut *w, o)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
