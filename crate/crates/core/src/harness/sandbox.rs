//! Splicing candidate code into a project copy and running its build and tests.

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use walkdir::WalkDir;

use crate::cfront::lexer::lex;
use crate::cfront::parser::parse_with_typedefs;
use crate::cfront::{parse_source, Node, TestMatcher};
use crate::corpus::{BenchmarkCase, Scenario};
use crate::obfuscate::rename::rename_source;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PassPolicy {
    #[default]
    Majority,
    Any,
    All,
}

impl PassPolicy {
    pub fn decide(self, runs: &[bool]) -> bool {
        let passed = runs.iter().filter(|r| **r).count();
        match self {
            _ if runs.is_empty() => false,
            PassPolicy::Majority => passed * 2 > runs.len(),
            PassPolicy::Any => passed > 0,
            PassPolicy::All => passed == runs.len(),
        }
    }
}

impl std::str::FromStr for PassPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "majority" => Ok(PassPolicy::Majority),
            "any" => Ok(PassPolicy::Any),
            "all" => Ok(PassPolicy::All),
            other => Err(format!("unknown pass policy `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxConfig {
    pub workdir_root: PathBuf,
    pub compile_cmd: String,
    pub test_cmd: String,
    pub timeout_s: u64,
    pub retries: u32,
    pub pass_policy: PassPolicy,
    /// Keep spliced working directories after the run.
    pub keep_workdirs: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            workdir_root: std::env::temp_dir(),
            compile_cmd: "make".into(),
            test_cmd: "make test".into(),
            timeout_s: 60,
            retries: 5,
            pass_policy: PassPolicy::Majority,
            keep_workdirs: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub case_id: String,
    pub sample_index: usize,
    pub compile_pass: bool,
    pub test_runs: Vec<bool>,
    pub test_pass: bool,
    pub compile_log: String,
    pub test_log: String,
}

#[derive(Debug, Error)]
pub enum SpliceError {
    #[error("no definition of `{function}` with the expected signature in {file}")]
    FunctionNotFound { file: String, function: String },
    #[error("{count} definitions of `{function}` match in {file}")]
    AmbiguousMatch { file: String, function: String, count: usize },
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("cannot lex {file}: {message}")]
    Lex { file: String, message: String },
}

#[derive(Debug, Error)]
#[error("sandbox failure: {0}")]
pub struct SandboxFailure(pub String);

/// Copy `src` into `dst`, skipping version-control metadata.
pub fn copy_tree(src: &Path, dst: &Path) -> std::io::Result<()> {
    for entry in WalkDir::new(src).into_iter().filter_entry(|e| e.depth() == 0 || e.file_name() != ".git") {
        let entry = entry.map_err(std::io::Error::other)?;
        let rel = entry.path().strip_prefix(src).map_err(std::io::Error::other)?;
        let target = dst.join(rel);
        if entry.file_type().is_dir() {
            std::fs::create_dir_all(&target)?;
        } else if entry.file_type().is_file() {
            std::fs::copy(entry.path(), &target)?;
        }
    }
    Ok(())
}

fn significant(text: &str) -> Vec<String> {
    lex(text).map(|t| t.into_iter().filter(|t| !t.is_trivia()).map(|t| t.text).collect()).unwrap_or_default()
}

/// Apply every rename map in the case's lineage to the non-test C sources of
/// a project copy, so that renamed code compiles against renamed headers.
pub fn rename_project(root: &Path, case: &BenchmarkCase, tests: &TestMatcher) -> Result<(), SpliceError> {
    let maps: Vec<_> = case.lineage.iter().filter_map(|r| r.rename_map.as_ref()).collect();
    if maps.is_empty() {
        return Ok(());
    }
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(std::io::Error::other)?;
        let path = entry.path();
        if !entry.file_type().is_file() || !matches!(path.extension().and_then(|e| e.to_str()), Some("c" | "h")) {
            continue;
        }
        let rel = path.strip_prefix(root).unwrap_or(path).to_string_lossy().replace('\\', "/");
        if tests.is_test(&rel) {
            continue;
        }
        let mut text = std::fs::read_to_string(path)?;
        for m in &maps {
            text = rename_source(&text, m, false).map_err(|e| SpliceError::Lex { file: rel.clone(), message: e.to_string() })?;
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

/// Replace the target definition inside `file_text` with `code`.
pub fn splice_text(file_text: &str, path: &str, case: &BenchmarkCase, code: &str) -> Result<String, SpliceError> {
    let unit = parse_source(path, file_text).map_err(|e| SpliceError::Lex { file: path.into(), message: e.to_string() })?;
    let want = significant(&case.signature);
    let matches: Vec<_> = unit
        .decls
        .iter()
        .filter(|tl| match &tl.node {
            Node::Function(f) => f.name == case.function && significant(&unit.text(&f.signature)) == want,
            _ => false,
        })
        .collect();
    let not_found = || SpliceError::FunctionNotFound { file: path.into(), function: case.function.clone() };
    let tl = match matches.as_slice() {
        [] => return Err(not_found()),
        [one] => *one,
        many => return Err(SpliceError::AmbiguousMatch { file: path.into(), function: case.function.clone(), count: many.len() }),
    };
    let replacement = match (&case.scenario, &case.partial_body) {
        (Scenario::Completion, Some(partial)) if !defines(code, &case.function) => format!("{partial}{code}"),
        _ => code.to_string(),
    };
    let before = unit.text(&(0..tl.span.start));
    let after = unit.text(&(tl.span.end..unit.tokens.len()));
    let replacement = if replacement.ends_with('\n') && after.starts_with('\n') {
        replacement.trim_end_matches('\n').to_string()
    } else {
        replacement
    };
    Ok(format!("{before}{replacement}{after}"))
}

/// True when `code` contains a definition of `function`.
fn defines(code: &str, function: &str) -> bool {
    let Ok(tokens) = lex(code) else { return false };
    let unit = parse_with_typedefs("<code>", tokens, &Default::default());
    unit.function(function).is_some()
}

/// Copy the project into a fresh working directory and splice `code` in
/// place of the target function.
pub fn splice(
    project_root: &Path,
    case: &BenchmarkCase,
    code: &str,
    workdir_root: &Path,
    tests: &TestMatcher,
) -> Result<PathBuf, SpliceError> {
    std::fs::create_dir_all(workdir_root)?;
    let dir = tempfile::Builder::new().prefix("obfusbench-").tempdir_in(workdir_root)?.keep();
    let result = (|| {
        copy_tree(project_root, &dir)?;
        rename_project(&dir, case, tests)?;
        let path = dir.join(&case.file);
        let text = std::fs::read_to_string(&path)?;
        let spliced = splice_text(&text, &case.file, case, code)?;
        std::fs::write(&path, spliced)?;
        Ok(())
    })();
    match result {
        Ok(()) => Ok(dir),
        Err(e) => {
            let _ = std::fs::remove_dir_all(&dir);
            Err(e)
        }
    }
}

struct StepResult {
    success: bool,
    log: String,
}

/// Run `cmd` through `sh -c` in `dir`, killing its process group on timeout.
fn run_step(cmd: &str, dir: &Path, timeout: Duration) -> Result<StepResult, SandboxFailure> {
    use std::os::unix::process::CommandExt;
    let (mut reader, writer) = std::io::pipe().map_err(|e| SandboxFailure(e.to_string()))?;
    let writer2 = writer.try_clone().map_err(|e| SandboxFailure(e.to_string()))?;
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(cmd)
        .current_dir(dir)
        .stdin(Stdio::null())
        .stdout(writer)
        .stderr(writer2)
        .process_group(0)
        .spawn()
        .map_err(|e| SandboxFailure(format!("cannot start `sh`: {e}")))?;
    let pump = std::thread::spawn(move || {
        let mut buf = Vec::new();
        let _ = reader.read_to_end(&mut buf);
        buf
    });
    let deadline = Instant::now() + timeout;
    let mut timed_out = false;
    let status = loop {
        match child.try_wait() {
            Ok(Some(s)) => break s,
            Ok(None) if Instant::now() >= deadline => {
                timed_out = true;
                // SAFETY: killpg only sends a signal to the group we created.
                unsafe {
                    libc::killpg(child.id() as libc::pid_t, libc::SIGKILL);
                }
                break child.wait().map_err(|e| SandboxFailure(e.to_string()))?;
            }
            Ok(None) => std::thread::sleep(Duration::from_millis(5)),
            Err(e) => return Err(SandboxFailure(e.to_string())),
        }
    };
    // Background processes may hold the pipe open; the group kill covers timeouts.
    let output = pump.join().unwrap_or_default();
    let mut log = String::from_utf8_lossy(&output).into_owned();
    if timed_out {
        log.push_str(&format!("\n[timed out after {} s]\n", timeout.as_secs()));
        return Ok(StepResult { success: false, log });
    }
    if status.code() == Some(127) {
        return Err(SandboxFailure(format!("command not found while running `{cmd}`: {}", log.trim())));
    }
    Ok(StepResult { success: status.success(), log })
}

fn scrub(log: &str, dir: &Path) -> String {
    let mut out = log.replace(&dir.display().to_string(), "<workdir>");
    if let Ok(canon) = dir.canonicalize() {
        out = out.replace(&canon.display().to_string(), "<workdir>");
    }
    out
}

/// Compile, then run the tests `retries` times.
pub fn run_case(
    workdir: &Path,
    sandbox: &SandboxConfig,
    case_id: &str,
    sample_index: usize,
) -> Result<CaseOutcome, SandboxFailure> {
    let timeout = Duration::from_secs(sandbox.timeout_s.max(1));
    let compile = run_step(&sandbox.compile_cmd, workdir, timeout)?;
    let mut outcome = CaseOutcome {
        case_id: case_id.to_string(),
        sample_index,
        compile_pass: compile.success,
        test_runs: Vec::new(),
        test_pass: false,
        compile_log: scrub(&compile.log, workdir),
        test_log: String::new(),
    };
    if !compile.success {
        return Ok(outcome);
    }
    for k in 0..sandbox.retries.max(1) {
        let run = run_step(&sandbox.test_cmd, workdir, timeout)?;
        outcome.test_log.push_str(&format!("--- run {} ---\n{}", k + 1, scrub(&run.log, workdir)));
        outcome.test_runs.push(run.success);
    }
    outcome.test_pass = sandbox.pass_policy.decide(&outcome.test_runs);
    Ok(outcome)
}

/// Splice, run and clean up one candidate.
///
/// Splice failures (target not found) count as a failed compile rather than an
/// infrastructure error, since they are caused by the candidate case.
pub fn evaluate_code(
    project_root: &Path,
    case: &BenchmarkCase,
    code: &str,
    sample_index: usize,
    sandbox: &SandboxConfig,
    tests: &TestMatcher,
) -> Result<CaseOutcome, SandboxFailure> {
    let dir = match splice(project_root, case, code, &sandbox.workdir_root, tests) {
        Ok(d) => d,
        Err(SpliceError::Io(e)) => return Err(SandboxFailure(e.to_string())),
        Err(e) => {
            return Ok(CaseOutcome {
                case_id: case.id.clone(),
                sample_index,
                compile_pass: false,
                test_runs: vec![],
                test_pass: false,
                compile_log: format!("splice failed: {e}\n"),
                test_log: String::new(),
            })
        }
    };
    let result = run_case(&dir, sandbox, &case.id, sample_index);
    if !sandbox.keep_workdirs {
        let _ = std::fs::remove_dir_all(&dir);
    }
    result
}
