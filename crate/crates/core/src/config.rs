//! Run configuration shared by the command-line subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harness::{HttpConfig, SandboxConfig, DEFAULT_KEEP_RATIO};

/// Seed used for renaming, distractor choice and bundle order when none is
/// given.
pub const DEFAULT_SEED: u64 = 20240501;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectConfig {
    pub name: String,
    pub root: Option<PathBuf>,
    pub commit: String,
    pub test_globs: Vec<String>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        ProjectConfig {
            name: "project".into(),
            root: None,
            commit: String::new(),
            test_globs: crate::cfront::project::DEFAULT_TEST_GLOBS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub project: ProjectConfig,
    pub sandbox: SandboxConfig,
    pub generator: HttpConfig,
    /// Distractors per case; the default depends on the relevant set.
    pub distractor_count: Option<usize>,
    pub keep_ratio: f64,
    pub seed: u64,
    pub parallelism: usize,
    /// Samples drawn per case.
    pub samples: usize,
    /// Largest k for pass@k.
    pub k: u64,
    pub wordlist: Option<PathBuf>,
    pub diagnostic_rules: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            project: ProjectConfig::default(),
            sandbox: SandboxConfig::default(),
            generator: HttpConfig::default(),
            distractor_count: None,
            keep_ratio: DEFAULT_KEEP_RATIO,
            seed: DEFAULT_SEED,
            parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            samples: 5,
            k: 5,
            wordlist: None,
            diagnostic_rules: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("invalid config {path}: {message}")]
    Invalid { path: String, message: String },
    #[error("{what} {path} does not exist")]
    MissingPath { what: &'static str, path: String },
}

impl Config {
    /// Load a TOML file. Relative paths inside it are taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read { path: p.clone(), message: e.to_string() })?;
        let mut cfg: Config = toml::from_str(&text).map_err(|e| ConfigError::Invalid { path: p, message: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |q: &mut PathBuf| {
            if q.is_relative() {
                *q = base.join(&*q);
            }
        };
        if let Some(r) = cfg.project.root.as_mut() {
            rebase(r);
        }
        if let Some(w) = cfg.wordlist.as_mut() {
            rebase(w);
        }
        if let Some(r) = cfg.diagnostic_rules.as_mut() {
            rebase(r);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Check that every referenced path exists.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let check = |what, p: &Option<PathBuf>| match p {
            Some(p) if !p.exists() => Err(ConfigError::MissingPath { what, path: p.display().to_string() }),
            _ => Ok(()),
        };
        check("project root", &self.project.root)?;
        check("wordlist", &self.wordlist)?;
        check("diagnostic rules", &self.diagnostic_rules)?;
        if !(0.0..1.0).contains(&self.keep_ratio) {
            return Err(ConfigError::Invalid { path: "keep_ratio".into(), message: format!("{} is outside [0, 1)", self.keep_ratio) });
        }
        Ok(())
    }
}
