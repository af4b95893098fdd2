//! Benchmark case model and its JSON Lines persistence.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::obfuscate::RenameMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DepKind {
    FunctionDecl,
    FunctionBody,
    GlobalVar,
    Struct,
    Macro,
    Comment,
    /// A `typedef` that is not itself a struct definition.
    Typedef,
}

impl DepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DepKind::FunctionDecl => "function-decl",
            DepKind::FunctionBody => "function-body",
            DepKind::GlobalVar => "global-var",
            DepKind::Struct => "struct",
            DepKind::Macro => "macro",
            DepKind::Comment => "comment",
            DepKind::Typedef => "typedef",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dependency {
    pub kind: DepKind,
    pub name: String,
    pub text: String,
    pub origin: String,
    pub relevant: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub deps: Vec<Dependency>,
    pub order_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Generation,
    Completion,
}

impl FromStr for Scenario {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "generation" => Ok(Scenario::Generation),
            "completion" => Ok(Scenario::Completion),
            other => Err(format!("unknown scenario `{other}`")),
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::Generation => "generation",
            Scenario::Completion => "completion",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Symbol,
    Structure,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObfuscationRecord {
    pub strategy: Strategy,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rename_map: Option<RenameMap>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inlined_callees: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub templates_applied: Option<Vec<String>>,
    pub verified: bool,
}

/// Benchmark slice by obfuscation lineage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stratum {
    #[serde(rename = "original")]
    Original,
    #[serde(rename = "symbol")]
    Symbol,
    #[serde(rename = "structure")]
    Structure,
    #[serde(rename = "semantic")]
    Semantic,
    #[serde(rename = "symbol+structure")]
    SymbolStructure,
    #[serde(rename = "symbol+semantic")]
    SymbolSemantic,
    /// Original cases restricted to those that also have an obfuscated variant.
    #[serde(rename = "original-restricted")]
    OriginalRestricted,
}

impl Stratum {
    pub const BENCHMARK: [Stratum; 6] = [
        Stratum::Original,
        Stratum::Symbol,
        Stratum::Structure,
        Stratum::Semantic,
        Stratum::SymbolStructure,
        Stratum::SymbolSemantic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stratum::Original => "original",
            Stratum::Symbol => "symbol",
            Stratum::Structure => "structure",
            Stratum::Semantic => "semantic",
            Stratum::SymbolStructure => "symbol+structure",
            Stratum::SymbolSemantic => "symbol+semantic",
            Stratum::OriginalRestricted => "original-restricted",
        }
    }

    /// Stratum of a lineage, independent of application order.
    pub fn of_lineage(lineage: &[ObfuscationRecord]) -> Option<Stratum> {
        let has = |s: Strategy| lineage.iter().any(|r| r.strategy == s);
        let n = [Strategy::Symbol, Strategy::Structure, Strategy::Semantic].iter().filter(|s| has(**s)).count();
        if n != lineage.len() {
            return None;
        }
        Some(match (has(Strategy::Symbol), has(Strategy::Structure), has(Strategy::Semantic)) {
            (false, false, false) => Stratum::Original,
            (true, false, false) => Stratum::Symbol,
            (false, true, false) => Stratum::Structure,
            (false, false, true) => Stratum::Semantic,
            (true, true, false) => Stratum::SymbolStructure,
            (true, false, true) => Stratum::SymbolSemantic,
            _ => return None,
        })
    }

    /// Strategies applied, in application order, to obtain this stratum.
    pub fn strategies(self) -> &'static [Strategy] {
        match self {
            Stratum::Original | Stratum::OriginalRestricted => &[],
            Stratum::Symbol => &[Strategy::Symbol],
            Stratum::Structure => &[Strategy::Structure],
            Stratum::Semantic => &[Strategy::Semantic],
            // Renaming runs last so that names introduced by the other
            // strategies are covered as well.
            Stratum::SymbolStructure => &[Strategy::Structure, Strategy::Symbol],
            Stratum::SymbolSemantic => &[Strategy::Semantic, Strategy::Symbol],
        }
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stratum {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        Stratum::BENCHMARK
            .iter()
            .chain(std::iter::once(&Stratum::OriginalRestricted))
            .find(|x| x.as_str() == s)
            .copied()
            .ok_or_else(|| format!("unknown stratum `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkCase {
    pub id: String,
    pub project: String,
    pub commit: String,
    pub file: String,
    pub function: String,
    pub signature: String,
    pub description: String,
    /// Full definition text: signature followed by the body.
    pub reference_body: String,
    #[serde(default)]
    pub partial_body: Option<String>,
    pub scenario: Scenario,
    pub context: ContextBundle,
    pub test_cmd: String,
    #[serde(default)]
    pub lineage: Vec<ObfuscationRecord>,
}

impl BenchmarkCase {
    pub fn stratum(&self) -> Option<Stratum> {
        Stratum::of_lineage(&self.lineage)
    }

    /// Id of the unobfuscated case this one derives from.
    pub fn base_id(&self) -> &str {
        base_id(&self.id)
    }

    /// Rename map of the symbol step, if any.
    pub fn rename_map(&self) -> Option<&RenameMap> {
        self.lineage.iter().find_map(|r| r.rename_map.as_ref())
    }
}

pub fn base_id(id: &str) -> &str {
    id.split('#').next().unwrap_or(id)
}

/// Id of an obfuscated variant: the base id tagged with its stratum.
pub fn variant_id(base: &str, stratum: Stratum) -> String {
    match stratum {
        Stratum::Original | Stratum::OriginalRestricted => base.to_string(),
        s => format!("{base}#{s}"),
    }
}

/// Stable case id derived from (project, file, function, commit).
pub fn case_id(project: &str, file: &str, function: &str, commit: &str) -> String {
    let mut h = Sha256::new();
    for part in [project, file, function, commit] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    let digest = h.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{line}: {source}")]
    Json { path: String, line: usize, source: serde_json::Error },
}

/// Read any JSON Lines file of `T`, skipping blank lines.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let p = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|e| StoreError::Io { path: p.clone(), source: e })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| StoreError::Io { path: p.clone(), source: e })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| StoreError::Json { path: p.clone(), line: i + 1, source: e })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), StoreError> {
    let p = path.display().to_string();
    let io = |e| StoreError::Io { path: p.clone(), source: e };
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(item).expect("case types serialize");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_cases(path: &Path) -> Result<Vec<BenchmarkCase>, StoreError> {
    read_jsonl(path)
}

pub fn save_cases(path: &Path, cases: &[BenchmarkCase]) -> Result<(), StoreError> {
    write_jsonl(path, cases)
}
