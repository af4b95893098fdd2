//! Turning candidate functions into benchmark cases.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::case::{case_id, BenchmarkCase, ContextBundle, Scenario};
use super::mining::CandidateFunction;
use crate::cfront::Project;
use crate::context::{build_context, ContextError};
use crate::harness::mask::{mask_for_completion, MaskError};

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("no description for {file}:{function}")]
    MissingDescription { file: String, function: String },
    #[error("{function}: {source}")]
    Mask { function: String, source: MaskError },
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("function {function} not found in {file}")]
    NotFound { file: String, function: String },
    #[error("cannot read descriptions {path}: {message}")]
    Descriptions { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageOptions {
    pub test_cmd: String,
    pub keep_ratio: f64,
}

impl Default for PackageOptions {
    fn default() -> Self {
        PackageOptions { test_cmd: "make test".into(), keep_ratio: crate::harness::mask::DEFAULT_KEEP_RATIO }
    }
}

pub fn package_case(
    candidate: &CandidateFunction,
    description: &str,
    bundle: ContextBundle,
    scenario: Scenario,
    options: &PackageOptions,
    typedefs: &HashSet<String>,
) -> Result<BenchmarkCase, PackageError> {
    if description.trim().is_empty() {
        return Err(PackageError::MissingDescription { file: candidate.file.clone(), function: candidate.name.clone() });
    }
    let partial_body = match scenario {
        Scenario::Generation => None,
        Scenario::Completion => Some(
            mask_for_completion(&candidate.post_body, typedefs, options.keep_ratio)
                .map_err(|source| PackageError::Mask { function: candidate.name.clone(), source })?,
        ),
    };
    Ok(BenchmarkCase {
        id: case_id(&candidate.project, &candidate.file, &candidate.name, &candidate.commit),
        project: candidate.project.clone(),
        commit: candidate.commit.clone(),
        file: candidate.file.clone(),
        function: candidate.name.clone(),
        signature: candidate.signature.clone(),
        description: description.to_string(),
        reference_body: candidate.post_body.clone(),
        partial_body,
        scenario,
        context: bundle,
        test_cmd: options.test_cmd.clone(),
        lineage: Vec::new(),
    })
}

/// Human-written description of one function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionDescription {
    pub file: String,
    pub function: String,
    pub description: String,
}

pub fn load_descriptions(path: &Path) -> Result<Vec<FunctionDescription>, PackageError> {
    let err = |message: String| PackageError::Descriptions { path: path.display().to_string(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| err(e.to_string()))
}

/// Treat a function as it currently stands in a checkout as a candidate.
pub fn candidate_from_project(
    project: &Project,
    name: &str,
    file: &str,
    function: &str,
    commit: &str,
) -> Result<CandidateFunction, PackageError> {
    let not_found = || PackageError::NotFound { file: file.to_string(), function: function.to_string() };
    let unit = &project.file(file).ok_or_else(not_found)?.unit;
    let (tl, f) = unit.function(function).ok_or_else(not_found)?;
    let last = &unit.tokens[tl.span.end - 1];
    Ok(CandidateFunction {
        project: name.to_string(),
        file: file.to_string(),
        name: function.to_string(),
        signature: unit.text(&f.signature).trim().to_string(),
        pre_body: String::new(),
        post_body: unit.text(&tl.span),
        pr_id: String::new(),
        commit: commit.to_string(),
        lines: (unit.tokens[tl.span.start].line, last.line),
    })
}

/// Package every described function of a checkout for one scenario. The
/// context order seed is `seed`; distractor counts use the default.
pub fn cases_from_project(
    project: &Project,
    name: &str,
    commit: &str,
    descriptions: &[FunctionDescription],
    scenario: Scenario,
    options: &PackageOptions,
    seed: u64,
) -> Result<Vec<BenchmarkCase>, PackageError> {
    let typedefs = project.typedefs();
    let mut out = Vec::new();
    for d in descriptions {
        let cand = candidate_from_project(project, name, &d.file, &d.function, commit)?;
        let bundle = build_context(project, &d.file, &d.function, None, seed)?;
        match package_case(&cand, &d.description, bundle, scenario, options, &typedefs) {
            Ok(c) => out.push(c),
            // Too short to leave a proper prefix; not a completion case.
            Err(e @ PackageError::Mask { .. }) => log::warn!("skipping {}: {e}", d.function),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfront::TestMatcher;

    fn fixture() -> Project {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/miniproj");
        Project::load(&root, &TestMatcher::default()).unwrap()
    }

    #[test]
    fn ids_and_errors() {
        let p = fixture();
        let cand = candidate_from_project(&p, "mini", "src/mathx.c", "sum_of_squares", "c0").unwrap();
        let typedefs = p.typedefs();
        let opts = PackageOptions::default();
        let a = package_case(&cand, "Sum of squares.", ContextBundle::default(), Scenario::Generation, &opts, &typedefs).unwrap();
        let b = package_case(&cand, "Sum of squares.", ContextBundle::default(), Scenario::Generation, &opts, &typedefs).unwrap();
        assert_eq!(a.id, b.id);
        assert_eq!(a.id, case_id("mini", "src/mathx.c", "sum_of_squares", "c0"));
        assert!(a.reference_body.starts_with("int sum_of_squares(int n)"));
        assert!(matches!(
            package_case(&cand, "  ", ContextBundle::default(), Scenario::Generation, &opts, &typedefs),
            Err(PackageError::MissingDescription { .. })
        ));
    }

    #[test]
    fn completion_prefix() {
        let p = fixture();
        let cand = candidate_from_project(&p, "mini", "src/mathx.c", "sum_of_squares", "c0").unwrap();
        let c = package_case(&cand, "d", ContextBundle::default(), Scenario::Completion, &PackageOptions::default(), &p.typedefs()).unwrap();
        let partial = c.partial_body.unwrap();
        assert!(c.reference_body.starts_with(partial.trim_end()));
        assert!(partial.len() < c.reference_body.len());
    }
}
