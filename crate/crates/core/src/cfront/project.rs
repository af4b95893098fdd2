//! Loading a C project tree into parsed units.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use walkdir::WalkDir;

use super::ast::{FunctionDef, SourceUnit};
use super::callgraph::{build_call_graph, CallGraph};
use super::lexer::lex;
use super::parser::{declared_typedefs, parse_with_typedefs};
use super::symbols::{resolve_symbols, SymbolTable};
use super::FrontError;

pub const DEFAULT_TEST_GLOBS: &[&str] = &["tests/**", "test/**", "**/*test*"];

/// Classifies project-relative paths as test files.
#[derive(Debug, Clone)]
pub struct TestMatcher {
    set: GlobSet,
    pub patterns: Vec<String>,
}

impl TestMatcher {
    pub fn new<S: AsRef<str>>(patterns: &[S]) -> Result<Self, globset::Error> {
        let mut b = GlobSetBuilder::new();
        for p in patterns {
            b.add(Glob::new(p.as_ref())?);
        }
        Ok(TestMatcher { set: b.build()?, patterns: patterns.iter().map(|p| p.as_ref().to_string()).collect() })
    }

    pub fn is_test(&self, rel_path: &str) -> bool {
        self.set.is_match(rel_path)
    }
}

impl Default for TestMatcher {
    fn default() -> Self {
        TestMatcher::new(DEFAULT_TEST_GLOBS).expect("default globs are valid")
    }
}

#[derive(Debug, Clone)]
pub struct ProjectFile {
    pub rel_path: String,
    pub unit: SourceUnit,
    pub is_header: bool,
    pub is_test: bool,
}

#[derive(Debug, Clone)]
pub struct Project {
    pub root: PathBuf,
    pub files: Vec<ProjectFile>,
    /// Files that failed to lex, with the reason.
    pub skipped: Vec<(String, FrontError)>,
}

fn is_c_file(p: &Path) -> bool {
    matches!(p.extension().and_then(|e| e.to_str()), Some("c" | "h"))
}

impl Project {
    /// Load every `.c`/`.h` file under `root`, skipping hidden and `build` directories.
    pub fn load(root: &Path, tests: &TestMatcher) -> Result<Project, FrontError> {
        let mut sources = Vec::new();
        let walker = WalkDir::new(root).sort_by_file_name().into_iter().filter_entry(|e| {
            let name = e.file_name().to_string_lossy();
            e.depth() == 0 || !(name.starts_with('.') || (e.file_type().is_dir() && name == "build"))
        });
        for entry in walker {
            let entry = entry.map_err(|e| FrontError::Io { path: root.display().to_string(), message: e.to_string() })?;
            if !entry.file_type().is_file() || !is_c_file(entry.path()) {
                continue;
            }
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            let rel = rel.to_string_lossy().replace('\\', "/");
            let bytes = std::fs::read(entry.path())
                .map_err(|e| FrontError::Io { path: rel.clone(), message: e.to_string() })?;
            sources.push((rel, String::from_utf8_lossy(&bytes).into_owned()));
        }
        Ok(Project::from_sources(root, sources, tests))
    }

    /// Build a project from in-memory `(relative path, text)` pairs.
    pub fn from_sources(root: &Path, sources: Vec<(String, String)>, tests: &TestMatcher) -> Project {
        let mut lexed = Vec::new();
        let mut skipped = Vec::new();
        for (rel, text) in sources {
            match lex(&text) {
                Ok(toks) => lexed.push((rel, toks)),
                Err(e) => {
                    log::warn!("skipping {rel}: {e}");
                    skipped.push((rel, e));
                }
            }
        }
        // Header typedefs first so that .c files parse with them known.
        let mut typedefs = HashSet::new();
        for _ in 0..2 {
            for (rel, toks) in lexed.iter().filter(|(r, _)| r.ends_with(".h")) {
                let unit = parse_with_typedefs(rel, toks.clone(), &typedefs);
                typedefs.extend(declared_typedefs(&unit));
            }
        }
        let files = lexed
            .into_iter()
            .map(|(rel, toks)| {
                let unit = parse_with_typedefs(&rel, toks, &typedefs);
                ProjectFile { is_header: rel.ends_with(".h"), is_test: tests.is_test(&rel), rel_path: rel, unit }
            })
            .collect();
        Project { root: root.to_path_buf(), files, skipped }
    }

    pub fn file(&self, rel_path: &str) -> Option<&ProjectFile> {
        self.files.iter().find(|f| f.rel_path == rel_path)
    }

    pub fn file_index(&self, rel_path: &str) -> Option<usize> {
        self.files.iter().position(|f| f.rel_path == rel_path)
    }

    pub fn headers(&self) -> Vec<&SourceUnit> {
        self.files.iter().filter(|f| f.is_header).map(|f| &f.unit).collect()
    }

    /// Symbol table of one file, using every project header as context.
    pub fn symbols(&self, index: usize) -> SymbolTable {
        let unit = &self.files[index].unit;
        let headers: Vec<&SourceUnit> = self.headers().into_iter().filter(|h| h.path != unit.path).collect();
        resolve_symbols(unit, &headers)
    }

    /// Call graph over non-test files.
    pub fn call_graph(&self) -> CallGraph {
        let units: Vec<SourceUnit> = self.files.iter().filter(|f| !f.is_test).map(|f| f.unit.clone()).collect();
        build_call_graph(&units)
    }

    /// Every typedef name declared anywhere in the project.
    pub fn typedefs(&self) -> HashSet<String> {
        self.files.iter().flat_map(|f| declared_typedefs(&f.unit)).collect()
    }

    /// Definitions named `name` as `(file index, definition)`.
    pub fn find_functions(&self, name: &str) -> Vec<(usize, &FunctionDef)> {
        self.files
            .iter()
            .enumerate()
            .filter_map(|(i, f)| f.unit.function(name).map(|(_, d)| (i, d)))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn test_globs() {
        let m = TestMatcher::default();
        assert!(m.is_test("tests/test_main.c"));
        assert!(m.is_test("src/foo_test.c"));
        assert!(!m.is_test("src/foo.c"));
    }

    #[test]
    fn header_typedefs_reach_sources() {
        let p = Project::from_sources(
            Path::new("/x"),
            vec![
                ("inc/t.h".into(), "typedef struct node node_t;\n".into()),
                ("src/a.c".into(), "#include \"t.h\"\nint f(node *n) { node *m = n; return m != 0; }\n".into()),
            ],
            &TestMatcher::default(),
        );
        let (_, f) = p.files[1].unit.function("f").unwrap();
        assert!(matches!(f.body.compound_items().unwrap()[0].kind, crate::cfront::StmtKind::Decl(_)));
        assert!(p.skipped.is_empty());
    }

    #[test]
    fn lex_failures_are_skipped() {
        let p = Project::from_sources(Path::new("/x"), vec![("a.c".into(), "char *s = \"oops;\n".into())], &TestMatcher::default());
        assert!(p.files.is_empty());
        assert_eq!(p.skipped.len(), 1);
    }

    #[test]
    fn fixture_parses_without_opaque_regions() {
        let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/miniproj");
        let p = Project::load(&root, &TestMatcher::default()).unwrap();
        assert_eq!(p.files.len(), 5);
        for f in &p.files {
            for d in &f.unit.decls {
                assert!(!matches!(d.node, crate::cfront::Node::Opaque), "{}: {}", f.rel_path, f.unit.text(&d.span));
                if let crate::cfront::Node::Function(def) = &d.node {
                    def.body.walk(&mut |s| {
                        assert!(!matches!(s.kind, crate::cfront::StmtKind::Opaque), "{}: {}", f.rel_path, f.unit.text(&s.span))
                    });
                }
            }
            assert_eq!(crate::cfront::render(&f.unit, false), std::fs::read_to_string(root.join(&f.rel_path)).unwrap());
        }
        assert!(p.file("tests/test_main.c").unwrap().is_test);
        let g = p.call_graph();
        assert!(g.edges.contains(&("clamp_add".to_string(), "add".to_string())));
        assert!(g.is_recursive("factorial"));
        assert_eq!(g.unresolved.len(), 1);
    }
}
