//! Contextual dependencies of a target function, plus distractors.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cfront::ast::*;
use crate::cfront::lexer::{is_keyword, TokenKind};
use crate::cfront::symbols::{resolve_symbols, Resolution};
use crate::cfront::Project;
use crate::corpus::{ContextBundle, DepKind, Dependency};
use crate::obfuscate::{segment_identifier, ParsedFunction};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ContextError {
    #[error("function `{function}` not found in {file}")]
    TargetNotFound { file: String, function: String },
    #[error("dependency names appear in both relevant and distractor sets: {names:?}")]
    NameCollision { names: Vec<String> },
}

#[derive(Debug, Clone)]
struct Located {
    file: usize,
    span: Span,
    kind: DepKind,
    name: String,
}

/// Top-level definitions of all non-test files, keyed by name.
#[derive(Debug, Clone, Default)]
struct Index {
    functions: BTreeMap<String, Vec<Located>>,
    prototypes: BTreeMap<String, Vec<Located>>,
    /// Struct tags and typedef names.
    types: BTreeMap<String, Vec<Located>>,
    enum_consts: BTreeMap<String, Vec<Located>>,
    macros: BTreeMap<String, Vec<Located>>,
    /// Globals, definitions before `extern` declarations.
    globals: BTreeMap<String, Vec<Located>>,
}

impl Index {
    fn build(project: &Project) -> Index {
        let mut ix = Index::default();
        for (fi, f) in project.files.iter().enumerate() {
            if f.is_test {
                continue;
            }
            for tl in &f.unit.decls {
                let loc = |kind, name: &str| Located { file: fi, span: tl.span.clone(), kind, name: name.to_string() };
                match &tl.node {
                    Node::Function(d) => ix.functions.entry(d.name.clone()).or_default().push(loc(DepKind::FunctionBody, &d.name)),
                    Node::Declaration(d) => match &d.kind {
                        DeclarationKind::Prototype { name, .. } => {
                            ix.prototypes.entry(name.clone()).or_default().push(loc(DepKind::FunctionDecl, name))
                        }
                        DeclarationKind::Typedef => {
                            for decl in &d.declarators {
                                ix.types.entry(decl.name.clone()).or_default().push(loc(DepKind::Typedef, &decl.name));
                            }
                        }
                        DeclarationKind::Other => {}
                    },
                    Node::GlobalVar(g) => {
                        for decl in g.declarators.iter().filter(|d| !d.is_function) {
                            let e = ix.globals.entry(decl.name.clone()).or_default();
                            let l = loc(DepKind::GlobalVar, &decl.name);
                            if g.is_extern {
                                e.push(l);
                            } else {
                                e.insert(0, l);
                            }
                        }
                    }
                    Node::Struct(s) => {
                        let name = s
                            .tag
                            .clone()
                            .or_else(|| s.declarators.first().map(|d| d.name.clone()))
                            .or_else(|| s.enumerators.first().map(|(n, _)| n.clone()));
                        let Some(name) = name else { continue };
                        let l = loc(DepKind::Struct, &name);
                        if let Some(tag) = &s.tag {
                            ix.types.entry(tag.clone()).or_default().push(l.clone());
                        }
                        if s.is_typedef {
                            for d in &s.declarators {
                                ix.types.entry(d.name.clone()).or_default().push(l.clone());
                            }
                        }
                        for (c, _) in &s.enumerators {
                            ix.enum_consts.entry(c.clone()).or_default().push(l.clone());
                        }
                    }
                    Node::Macro(m) => ix.macros.entry(m.name.clone()).or_default().push(loc(DepKind::Macro, &m.name)),
                    Node::Directive | Node::Opaque => {}
                }
            }
        }
        ix
    }
}

/// Prefer a definition from `file`, then from a header, then the first one.
fn pick<'a>(project: &Project, cands: Option<&'a Vec<Located>>, file: usize) -> Option<&'a Located> {
    let cands = cands?;
    cands
        .iter()
        .find(|l| l.file == file)
        .or_else(|| cands.iter().find(|l| project.files[l.file].is_header))
        .or_else(|| cands.first())
}

fn dep_of(project: &Project, l: &Located) -> Dependency {
    let f = &project.files[l.file];
    Dependency {
        kind: l.kind,
        name: l.name.clone(),
        text: f.unit.text(&l.span).trim().to_string(),
        origin: f.rel_path.clone(),
        relevant: true,
    }
}

/// Prototype text for a function definition: its signature plus `;`.
fn synthesized_prototype(project: &Project, l: &Located) -> Option<Dependency> {
    let f = &project.files[l.file];
    let tl = f.unit.decls.iter().find(|d| d.span == l.span)?;
    let Node::Function(def) = &tl.node else { return None };
    Some(Dependency {
        kind: DepKind::FunctionDecl,
        name: def.name.clone(),
        text: format!("{};", f.unit.text(&def.signature).trim()),
        origin: f.rel_path.clone(),
        relevant: true,
    })
}

/// Identifiers of `unit` within `span` that are not locals, parameters,
/// struct members or labels.
fn free_identifiers(unit: &SourceUnit, span: &Span) -> Vec<String> {
    let st = resolve_symbols(unit, &[]);
    let sig: Vec<usize> = unit.significant(span).collect();
    let mut out = Vec::new();
    for (k, &i) in sig.iter().enumerate() {
        let t = &unit.tokens[i];
        if t.kind != TokenKind::Identifier {
            continue;
        }
        if k > 0 && (unit.tokens[sig[k - 1]].is_punct(".") || unit.tokens[sig[k - 1]].is_punct("->")) {
            continue;
        }
        match st.resolution(i) {
            Some(Resolution::Symbol { frame, .. }) if frame != 0 => {}
            _ => out.push(t.text.clone()),
        }
    }
    for d in &st.directive_idents {
        if span.contains(&d.token) && d.resolution != Resolution::MacroParam {
            out.push(d.name.clone());
        }
    }
    out
}

fn kind_rank(k: DepKind) -> u8 {
    match k {
        DepKind::Macro => 0,
        DepKind::Struct | DepKind::Typedef => 1,
        DepKind::GlobalVar => 2,
        DepKind::FunctionDecl => 3,
        DepKind::Comment => 4,
        DepKind::FunctionBody => 5,
    }
}

/// Relevant dependencies of the function definition `text`, resolved against
/// the project as seen from `file`.
///
/// Callees contribute their prototype, body and leading comment (depth 1).
/// Types, macros and enum constants are closed transitively over the target,
/// callee prototypes, globals and the type definitions themselves.
pub fn extract_for_text(project: &Project, file: &str, text: &str) -> Result<Vec<Dependency>, ContextError> {
    let not_found = || ContextError::TargetNotFound { file: file.to_string(), function: String::new() };
    let fi = project.file_index(file).ok_or_else(not_found)?;
    let target = ParsedFunction::parse(text, &project.typedefs()).map_err(|_| not_found())?;
    let ix = Index::build(project);
    let own_name = target.def().name.clone();
    let span = target.span();

    let mut out: Vec<(Located, Dependency)> = Vec::new();
    let mut seen: BTreeSet<(DepKind, String)> = BTreeSet::new();
    let mut queue: Vec<String> = Vec::new();
    let mut push = |l: &Located, dep: Dependency, out: &mut Vec<(Located, Dependency)>, queue: &mut Vec<String>| {
        if seen.insert((dep.kind, dep.name.clone())) {
            if dep.kind != DepKind::FunctionBody && dep.kind != DepKind::Comment {
                if let Ok(toks) = crate::cfront::lexer::lex(&dep.text) {
                    let u = crate::cfront::parser::parse_with_typedefs(&dep.origin, toks, &project.typedefs());
                    queue.extend(free_identifiers(&u, &(0..u.tokens.len())));
                }
            }
            out.push((l.clone(), dep));
        }
    };

    // Direct callees.
    for callee in target.direct_callees() {
        if callee == own_name || ix.macros.contains_key(&callee) {
            continue;
        }
        let Some(def) = pick(project, ix.functions.get(&callee), fi) else { continue };
        let proto = pick(project, ix.prototypes.get(&callee), fi)
            .map(|l| (l.clone(), dep_of(project, l)))
            .or_else(|| synthesized_prototype(project, def).map(|d| (def.clone(), d)));
        if let Some((l, d)) = proto {
            push(&l, d, &mut out, &mut queue);
        }
        push(def, dep_of(project, def), &mut out, &mut queue);
        let unit = &project.files[def.file].unit;
        if let Some(c) = unit.leading_comment(def.span.start) {
            let dep = Dependency {
                kind: DepKind::Comment,
                name: callee.clone(),
                text: unit.text(&c).trim().to_string(),
                origin: project.files[def.file].rel_path.clone(),
                relevant: true,
            };
            push(def, dep, &mut out, &mut queue);
        }
    }

    // Globals referenced by the target itself.
    let target_names = free_identifiers(&target.unit, &span);
    for name in &target_names {
        if let Some(l) = pick(project, ix.globals.get(name), fi) {
            push(l, dep_of(project, l), &mut out, &mut queue);
        }
    }

    // Types, enum constants and macros, transitively.
    queue.extend(target_names);
    let mut visited = HashSet::new();
    while let Some(name) = queue.pop() {
        if is_keyword(&name) || !visited.insert(name.clone()) {
            continue;
        }
        for map in [&ix.types, &ix.enum_consts, &ix.macros] {
            if let Some(l) = pick(project, map.get(&name), fi) {
                push(l, dep_of(project, l), &mut out, &mut queue);
            }
        }
    }

    out.sort_by(|(a, da), (b, db)| {
        (kind_rank(da.kind), &project.files[a.file].rel_path, a.span.start, &da.name)
            .cmp(&(kind_rank(db.kind), &project.files[b.file].rel_path, b.span.start, &db.name))
    });
    Ok(out.into_iter().map(|(_, d)| d).collect())
}

/// Relevant dependencies of `function` defined in `file`.
pub fn extract_dependencies(project: &Project, file: &str, function: &str) -> Result<Vec<Dependency>, ContextError> {
    let not_found = || ContextError::TargetNotFound { file: file.to_string(), function: function.to_string() };
    let pf = project.file(file).ok_or_else(not_found)?;
    let (tl, _) = pf.unit.function(function).ok_or_else(not_found)?;
    extract_for_text(project, file, &pf.unit.text(&tl.span))
}

/// Every top-level definition of the non-test files, as candidate distractors.
pub fn dependency_pool(project: &Project) -> Vec<Dependency> {
    let ix = Index::build(project);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for map in [&ix.functions, &ix.prototypes, &ix.types, &ix.macros, &ix.globals] {
        for locs in map.values() {
            for l in locs {
                if seen.insert((l.kind, l.name.clone(), l.file, l.span.start)) {
                    out.push(dep_of(project, l));
                }
            }
        }
    }
    for locs in ix.functions.values() {
        for l in locs {
            if !ix.prototypes.contains_key(&l.name) {
                out.extend(synthesized_prototype(project, l));
            }
        }
    }
    out.sort_by(|a, b| (a.kind, &a.name, &a.origin).cmp(&(b.kind, &b.name, &b.origin)));
    out.dedup_by(|a, b| a.kind == b.kind && a.name == b.name);
    out
}

/// Jaccard similarity of the segment-word sets of two names.
pub fn name_similarity(a: &str, b: &str) -> f64 {
    let wa: BTreeSet<String> = segment_identifier(a).into_iter().collect();
    let wb: BTreeSet<String> = segment_identifier(b).into_iter().collect();
    let union = wa.union(&wb).count();
    if union == 0 {
        return 0.0;
    }
    wa.intersection(&wb).count() as f64 / union as f64
}

/// Default number of distractors: one per relevant non-comment dependency, at most five.
pub fn default_distractor_count(relevant: &[Dependency]) -> usize {
    relevant.iter().filter(|d| d.kind != DepKind::Comment).count().min(5)
}

/// Pick up to `count` look-alike dependencies from `pool`.
///
/// Relevant dependencies are visited in a seed-determined order; each one
/// takes the unused pool item of the same kind with the most similar name.
pub fn select_distractors(relevant: &[Dependency], pool: &[Dependency], count: usize, seed: u64) -> Vec<Dependency> {
    if count == 0 {
        return Vec::new();
    }
    let relevant_names: BTreeSet<&str> = relevant.iter().map(|d| d.name.as_str()).collect();
    let mut available: Vec<&Dependency> = pool.iter().filter(|d| !relevant_names.contains(d.name.as_str())).collect();
    if available.is_empty() {
        log::warn!("distractor pool is empty");
        return Vec::new();
    }
    let mut order: Vec<&Dependency> = relevant.iter().filter(|d| d.kind != DepKind::Comment).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = Vec::new();
    for r in order {
        if out.len() == count {
            break;
        }
        let best = available
            .iter()
            .enumerate()
            .filter(|(_, d)| d.kind == r.kind)
            .max_by(|(_, a), (_, b)| {
                let (sa, sb) = (name_similarity(&r.name, &a.name), name_similarity(&r.name, &b.name));
                let (ea, eb) = (strsim::levenshtein(&r.name, &a.name), strsim::levenshtein(&r.name, &b.name));
                sa.total_cmp(&sb).then(eb.cmp(&ea)).then(b.name.cmp(&a.name))
            })
            .map(|(i, _)| i);
        if let Some(i) = best {
            let picked = available.remove(i);
            // A function's body and prototype share a name; never split them.
            available.retain(|d| d.name != picked.name);
            let mut d = picked.clone();
            d.relevant = false;
            out.push(d);
        }
    }
    out
}

/// Shuffle relevant and distractor dependencies into one bundle.
pub fn assemble_bundle(
    relevant: Vec<Dependency>,
    distractors: Vec<Dependency>,
    order_seed: u64,
) -> Result<ContextBundle, ContextError> {
    let names: BTreeSet<&str> = relevant.iter().map(|d| d.name.as_str()).collect();
    let clash: BTreeSet<String> =
        distractors.iter().filter(|d| names.contains(d.name.as_str())).map(|d| d.name.clone()).collect();
    if !clash.is_empty() {
        return Err(ContextError::NameCollision { names: clash.into_iter().collect() });
    }
    let mut deps: Vec<Dependency> = relevant
        .into_iter()
        .map(|mut d| {
            d.relevant = true;
            d
        })
        .chain(distractors)
        .collect();
    deps.shuffle(&mut ChaCha8Rng::seed_from_u64(order_seed));
    Ok(ContextBundle { deps, order_seed })
}

/// Extract, pick distractors and assemble in one step.
pub fn build_context(
    project: &Project,
    file: &str,
    function: &str,
    distractors: Option<usize>,
    seed: u64,
) -> Result<ContextBundle, ContextError> {
    let relevant = extract_dependencies(project, file, function)?;
    let pool: Vec<Dependency> = dependency_pool(project).into_iter().filter(|d| d.name != function).collect();
    let count = distractors.unwrap_or_else(|| default_distractor_count(&relevant));
    let picked = select_distractors(&relevant, &pool, count, seed);
    assemble_bundle(relevant, picked, seed)
}

#[cfg(test)]
mod tests {
    use std::path::Path;

    use super::*;
    use crate::cfront::TestMatcher;

    fn fixture() -> Project {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/miniproj");
        Project::load(&root, &TestMatcher::default()).unwrap()
    }

    fn dep(kind: DepKind, name: &str) -> Dependency {
        Dependency { kind, name: name.into(), text: String::new(), origin: "x.c".into(), relevant: true }
    }

    fn names(deps: &[Dependency]) -> Vec<(DepKind, &str)> {
        deps.iter().map(|d| (d.kind, d.name.as_str())).collect()
    }

    #[test]
    fn callee_and_struct() {
        let p = fixture();
        let deps = extract_dependencies(&p, "src/ringbuf.c", "rb_push").unwrap();
        let n = names(&deps);
        for want in [
            (DepKind::FunctionBody, "rb_scale_value"),
            (DepKind::FunctionDecl, "rb_scale_value"),
            (DepKind::FunctionBody, "rb_note_push"),
            (DepKind::Struct, "ring_buffer"),
            (DepKind::Struct, "rb_config"),
            (DepKind::Macro, "RB_CAPACITY"),
        ] {
            assert!(n.contains(&want), "missing {want:?} in {n:?}");
        }
        let comment = deps.iter().find(|d| d.kind == DepKind::Comment);
        assert!(comment.is_none(), "rb_push's callees have no comments");
    }

    #[test]
    fn self_contained_target() {
        let p = fixture();
        assert!(extract_dependencies(&p, "src/mathx.c", "square").unwrap().is_empty());
        assert!(extract_dependencies(&p, "src/mathx.c", "sign_label").unwrap().is_empty());
    }

    #[test]
    fn macros_match_textual_defines() {
        let p = fixture();
        let deps = extract_dependencies(&p, "src/mathx.c", "clamp_add").unwrap();
        let header = std::fs::read_to_string(p.root.join("include/mathx.h")).unwrap();
        let m = deps.iter().find(|d| d.kind == DepKind::Macro && d.name == "LIMIT").unwrap();
        assert!(header.lines().any(|l| l.trim() == m.text), "{}", m.text);
        let comments: Vec<_> = deps.iter().filter(|d| d.kind == DepKind::Comment).map(|d| d.name.as_str()).collect();
        assert_eq!(comments, vec!["add", "clamp"]);
    }

    #[test]
    fn enum_constants_pull_enum() {
        let p = fixture();
        let deps = extract_dependencies(&p, "src/mathx.c", "day_kind").unwrap();
        let n = names(&deps);
        assert!(n.contains(&(DepKind::Struct, "day_of_week")), "{n:?}");
        assert!(n.contains(&(DepKind::Macro, "WEEKEND")), "{n:?}");
    }

    #[test]
    fn missing_target() {
        let p = fixture();
        assert!(matches!(extract_dependencies(&p, "src/mathx.c", "nope"), Err(ContextError::TargetNotFound { .. })));
    }

    #[test]
    fn distractor_similarity() {
        let relevant = vec![dep(DepKind::FunctionBody, "vips_pack")];
        let pool = vec![dep(DepKind::FunctionBody, "strlen"), dep(DepKind::FunctionBody, "vips_unpack")];
        let d = select_distractors(&relevant, &pool, 1, 0);
        assert_eq!(d[0].name, "vips_unpack");
        assert!(!d[0].relevant);
        assert!(select_distractors(&relevant, &pool, 0, 0).is_empty());
        assert!(select_distractors(&relevant, &[], 3, 0).is_empty());
    }

    #[test]
    fn distractors_match_kind_and_avoid_relevant() {
        let p = fixture();
        let relevant = extract_dependencies(&p, "src/ringbuf.c", "rb_push").unwrap();
        let pool = dependency_pool(&p);
        let d = select_distractors(&relevant, &pool, 5, 3);
        assert!(!d.is_empty());
        let rel: BTreeSet<_> = relevant.iter().map(|r| r.name.clone()).collect();
        let kinds: BTreeSet<_> = relevant.iter().map(|r| r.kind).collect();
        for x in &d {
            assert!(!rel.contains(&x.name));
            assert!(kinds.contains(&x.kind));
        }
    }

    #[test]
    fn bundle_shuffle() {
        let rel = vec![dep(DepKind::Macro, "A"), dep(DepKind::Macro, "B")];
        let dis = vec![dep(DepKind::Macro, "C"), dep(DepKind::Macro, "D")];
        let a = assemble_bundle(rel.clone(), dis.clone(), 7).unwrap();
        let b = assemble_bundle(rel.clone(), dis.clone(), 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.deps.len(), 4);
        let sorted = |bundle: &ContextBundle| {
            let mut v: Vec<_> = bundle.deps.iter().map(|d| d.name.clone()).collect();
            v.sort();
            v
        };
        let orders: BTreeSet<Vec<String>> = (0..16)
            .map(|s| assemble_bundle(rel.clone(), dis.clone(), s).unwrap().deps.iter().map(|d| d.name.clone()).collect())
            .collect();
        assert!(orders.len() > 1);
        for s in 0..4 {
            assert_eq!(sorted(&assemble_bundle(rel.clone(), dis.clone(), s).unwrap()), sorted(&a));
        }
        assert_eq!(assemble_bundle(rel.clone(), vec![], 1).unwrap().deps.len(), 2);
        let clash = assemble_bundle(rel.clone(), vec![dep(DepKind::Macro, "A")], 1);
        assert!(matches!(clash, Err(ContextError::NameCollision { .. })));
    }
}
