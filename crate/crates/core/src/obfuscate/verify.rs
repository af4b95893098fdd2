//! Compile-and-test oracle for transformed cases.

use std::path::Path;

use serde::Serialize;

use crate::cfront::TestMatcher;
use crate::corpus::BenchmarkCase;
use crate::harness::{evaluate_code, SandboxConfig, SandboxFailure};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    CompileFail { log: String },
    TestFail { log: String },
}

impl Verdict {
    pub fn is_pass(&self) -> bool {
        matches!(self, Verdict::Pass)
    }
}

/// Splice the transformed reference body into a project copy and run the
/// project's build and tests.
///
/// The untransformed case is checked first; if the project does not pass
/// with its own reference code, no verdict about the transform is possible
/// and a [`SandboxFailure`] is returned.
pub fn verify_equivalence(
    original: &BenchmarkCase,
    transformed: &BenchmarkCase,
    project_root: &Path,
    sandbox: &SandboxConfig,
    tests: &TestMatcher,
) -> Result<Verdict, SandboxFailure> {
    let baseline = evaluate_code(project_root, original, &original.reference_body, 0, sandbox, tests)?;
    if !baseline.test_pass {
        return Err(SandboxFailure(format!(
            "case {} does not pass with its reference implementation:\n{}{}",
            original.id, baseline.compile_log, baseline.test_log
        )));
    }
    let out = evaluate_code(project_root, transformed, &transformed.reference_body, 0, sandbox, tests)?;
    Ok(if !out.compile_pass {
        Verdict::CompileFail { log: out.compile_log }
    } else if !out.test_pass {
        Verdict::TestFail { log: out.test_log }
    } else {
        Verdict::Pass
    })
}

/// Verify and, on a pass, flag the latest lineage record as verified.
pub fn verify_and_mark(
    original: &BenchmarkCase,
    transformed: &BenchmarkCase,
    project_root: &Path,
    sandbox: &SandboxConfig,
    tests: &TestMatcher,
) -> Result<(Verdict, BenchmarkCase), SandboxFailure> {
    let verdict = verify_equivalence(original, transformed, project_root, sandbox, tests)?;
    let mut out = transformed.clone();
    if verdict.is_pass() {
        if let Some(last) = out.lineage.last_mut() {
            last.verified = true;
        }
    }
    Ok((verdict, out))
}
