//! Structure obfuscation: unfold the target's callees into its body.

use std::collections::{BTreeMap, BTreeSet};

use super::inline::{callee_shape, inline_call_site, FreshNames, ParsedFunction, SiteLocator};
use super::ObfuscateError;
use crate::cfront::lexer::TokenKind;
use crate::cfront::symbols::resolve_symbols;
use crate::cfront::Project;
use crate::context::{assemble_bundle, extract_for_text};
use crate::corpus::{BenchmarkCase, DepKind, ObfuscationRecord, Scenario, Strategy};

fn not_applicable(reason: impl Into<String>) -> ObfuscateError {
    ObfuscateError::NotApplicable { what: "structure".into(), reason: reason.into() }
}

/// Top-level names a file can see at token `upto`: everything declared in a
/// project header plus what the file itself declared before that point.
fn visible_names(project: &Project, file: usize, upto: usize) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (i, f) in project.files.iter().enumerate() {
        if !f.is_header && i != file {
            continue;
        }
        let st = resolve_symbols(&f.unit, &[]);
        for ((_, name), e) in &st.frames[0].names {
            if i != file || e.decl_token.is_none_or(|t| t < upto) {
                out.insert(name.clone());
            }
        }
        if i == file {
            out.extend(st.directive_idents.iter().filter(|d| d.token < upto).map(|d| d.name.clone()));
        } else {
            out.extend(st.directive_idents.iter().map(|d| d.name.clone()));
        }
    }
    out
}

fn system_includes(project: &Project, file: usize) -> BTreeSet<String> {
    project.files[file]
        .unit
        .tokens
        .iter()
        .filter(|t| t.kind == TokenKind::PreprocessorDirective)
        .filter_map(|t| {
            let s = t.text.trim_start().trim_start_matches('#').trim_start();
            s.strip_prefix("include").map(|r| r.trim().to_string())
        })
        .filter(|r| r.starts_with('<'))
        .collect()
}

/// Inline every eligible call site of the target's direct callees.
///
/// A callee is eligible when its body is part of the case's relevant context,
/// it passes the inliner's preconditions at every one of its call sites, it is
/// not recursive in the project call graph, and everything its body refers to
/// is visible at the target's position. A callee that another eligible
/// callee calls is dropped so that one pass never exposes new eligible calls.
pub fn apply_structure_obfuscation(case: &BenchmarkCase, project: &Project) -> Result<BenchmarkCase, ObfuscateError> {
    if case.scenario != Scenario::Generation {
        return Err(not_applicable("structure obfuscation targets generation cases"));
    }
    if case.lineage.iter().any(|r| r.strategy == Strategy::Symbol) {
        return Err(not_applicable("identifiers already renamed; apply structure first"));
    }
    let typedefs = project.typedefs();
    let caller = ParsedFunction::parse(&case.reference_body, &typedefs)?;
    let fi = project
        .file_index(&case.file)
        .ok_or_else(|| not_applicable(format!("{} is not part of the project", case.file)))?;
    let target_start = project.files[fi]
        .unit
        .function(&case.function)
        .map(|(tl, _)| tl.span.start)
        .ok_or_else(|| not_applicable(format!("`{}` not found in {}", case.function, case.file)))?;
    let visible = visible_names(project, fi, target_start);
    let target_includes = system_includes(project, fi);
    let graph = project.call_graph();

    let bodies: BTreeMap<&str, &str> = case
        .context
        .deps
        .iter()
        .filter(|d| d.relevant && d.kind == DepKind::FunctionBody)
        .map(|d| (d.name.as_str(), d.text.as_str()))
        .collect();

    let mut eligible: BTreeMap<String, ParsedFunction> = BTreeMap::new();
    for name in caller.direct_callees() {
        let Some(text) = bodies.get(name.as_str()) else { continue };
        let reject = |why: String| log::debug!("{}: not inlining `{name}`: {why}", case.id);
        if name == case.function || graph.is_recursive(&name) {
            reject("recursive".into());
            continue;
        }
        let callee = match ParsedFunction::parse(text, &typedefs) {
            Ok(c) => c,
            Err(e) => {
                reject(e.to_string());
                continue;
            }
        };
        let shape = match callee_shape(&callee) {
            Ok(s) => s,
            Err(e) => {
                reject(e.to_string());
                continue;
            }
        };
        let origin = case.context.deps.iter().find(|d| d.kind == DepKind::FunctionBody && d.name == name).map(|d| d.origin.clone());
        let cross_file = origin.as_deref() != Some(case.file.as_str());
        if cross_file {
            let callee_file = origin.as_deref().and_then(|o| project.file_index(o));
            let covered = callee_file.is_some_and(|cf| system_includes(project, cf).is_subset(&target_includes));
            if !covered {
                reject("callee relies on includes the target's file lacks".into());
                continue;
            }
        }
        let defined_in_project = |n: &str| project.files.iter().any(|f| resolve_symbols(&f.unit, &[]).frames[0].names.keys().any(|(_, k)| k == n));
        let hidden: Vec<&String> = shape
            .free_names
            .iter()
            .filter(|n| **n != name && !visible.contains(*n) && defined_in_project(n))
            .collect();
        if !hidden.is_empty() {
            reject(format!("refers to names not visible at the target: {hidden:?}"));
            continue;
        }
        let sites = caller.calls_to(&name).len();
        let all_ok = (0..sites).all(|ordinal| {
            let mut scratch = FreshNames::default();
            inline_call_site(&caller, &callee, &SiteLocator { callee: name.clone(), ordinal }, &mut scratch)
                .map_err(|e| reject(e.to_string()))
                .is_ok()
        });
        if sites > 0 && all_ok {
            eligible.insert(name.clone(), callee);
        }
    }
    let exposed: BTreeSet<String> =
        eligible.values().flat_map(|c| c.direct_callees()).filter(|n| eligible.contains_key(n)).collect();
    eligible.retain(|n, _| !exposed.contains(n));
    if eligible.is_empty() {
        return Err(not_applicable("no eligible call sites"));
    }

    let mut fresh = FreshNames::new(
        project.files.iter().flat_map(|f| f.unit.tokens.iter()).filter(|t| t.kind == TokenKind::Identifier).map(|t| t.text.clone()),
    );
    let mut current = caller;
    for (name, callee) in &eligible {
        while !current.calls_to(name).is_empty() {
            let text = inline_call_site(&current, callee, &SiteLocator { callee: name.clone(), ordinal: 0 }, &mut fresh)?;
            current = ParsedFunction::parse(&text, &typedefs)?;
        }
    }
    let new_body = current.text();

    let relevant = extract_for_text(project, &case.file, &new_body)
        .map_err(|e| not_applicable(format!("context re-extraction failed: {e}")))?;
    let relevant_names: BTreeSet<&str> = relevant.iter().map(|d| d.name.as_str()).collect();
    let distractors: Vec<_> = case
        .context
        .deps
        .iter()
        .filter(|d| !d.relevant && !relevant_names.contains(d.name.as_str()))
        .cloned()
        .collect();
    let context = assemble_bundle(relevant, distractors, case.context.order_seed)
        .map_err(|e| not_applicable(e.to_string()))?;

    let mut out = case.clone();
    out.reference_body = new_body;
    out.context = context;
    out.lineage.push(ObfuscationRecord {
        strategy: Strategy::Structure,
        seed: 0,
        rename_map: None,
        inlined_callees: Some(eligible.keys().cloned().collect()),
        templates_applied: None,
        verified: false,
    });
    Ok(out)
}
