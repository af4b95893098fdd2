//! Symbol, structure and semantic obfuscation of benchmark cases.

pub mod inline;
pub mod rename;
pub mod segment;
pub mod structure;
pub mod symbol;
pub mod templates;
pub mod verify;

use thiserror::Error;

use crate::cfront::FrontError;

pub use inline::{inline_call_site, FreshNames, ParsedFunction, SiteLocator};
pub use rename::{builtin_wordlist, make_rename_map, parse_wordlist, RenameError, RenameMap};
pub use segment::segment_identifier;
pub use structure::apply_structure_obfuscation;
pub use symbol::{apply_rename_map, apply_symbol_obfuscation, SymbolEnv};
pub use templates::{apply_semantic_obfuscation, apply_semantic_template, SemanticTemplate};
pub use verify::{verify_and_mark, verify_equivalence, Verdict};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ObfuscateError {
    #[error(transparent)]
    Rename(#[from] RenameError),
    #[error(transparent)]
    Front(#[from] FrontError),
    #[error("cannot inline: {reason}")]
    Unsupported { reason: String },
    #[error("{what} not applicable: {reason}")]
    NotApplicable { what: String, reason: String },
    #[error("cannot parse target: {reason}")]
    TargetParse { reason: String },
}

/// Apply the strategies of `stratum` to an unobfuscated case, in order, and
/// give the result its variant id.
pub fn obfuscate_case(
    case: &crate::corpus::BenchmarkCase,
    stratum: crate::corpus::Stratum,
    seed: u64,
    project: &crate::cfront::Project,
    env: &SymbolEnv,
) -> Result<crate::corpus::BenchmarkCase, ObfuscateError> {
    use crate::corpus::{variant_id, Strategy};
    if !case.lineage.is_empty() {
        return Err(ObfuscateError::NotApplicable {
            what: stratum.to_string(),
            reason: format!("case {} is already obfuscated", case.id),
        });
    }
    let typedefs = project.typedefs();
    let mut out = case.clone();
    for s in stratum.strategies() {
        out = match s {
            Strategy::Symbol => apply_symbol_obfuscation(&out, seed, env)?,
            Strategy::Structure => apply_structure_obfuscation(&out, project)?,
            Strategy::Semantic => apply_semantic_obfuscation(&out, &typedefs)?,
        };
    }
    out.id = variant_id(&case.id, stratum);
    Ok(out)
}
