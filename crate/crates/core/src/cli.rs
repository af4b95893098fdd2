//! Command-line front end.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::cfront::{Project, TestMatcher};
use crate::config::Config;
use crate::context::build_context;
use crate::corpus::{
    self, dataset_stats, filter_by_coverage, filter_prs, load_cases, load_pr_export, read_jsonl, save_cases,
    BenchmarkCase, CandidateFunction, FunnelRow, FunnelCounts, PackageOptions, Scenario, Stratum,
};
use crate::diagnostics::{parse_diagnostics, taxonomy_proportions, Classification, RuleSet};
use crate::harness::{
    build_prompt, evaluate_samples, generate_samples, write_outcomes, CaseOutcome, GenerationSample, Generator, HttpGenerator,
    ReplayGenerator,
};
use crate::metrics::report::{average_rows, emit_report, parse_rows_csv, ReportFormat};
use crate::metrics::{compute_rates, sample_size, SampleSizeParams};
use crate::obfuscate::{builtin_wordlist, obfuscate_case, parse_wordlist, verify_equivalence, ObfuscateError, SymbolEnv};

type Result<T> = std::result::Result<T, Box<dyn std::error::Error + Send + Sync>>;

#[derive(Parser, Debug)]
#[command(name = "obfusbench", version, about = "Obfuscation-hardened C code-generation benchmark toolkit")]
struct Cli {
    /// TOML run configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Download merged PRs from a GitHub-compatible API as a PR export.
    FetchPrs(FetchArgs),
    /// Filter PRs, extract modified functions and keep test-covered ones.
    Mine(MineArgs),
    /// Package described functions of a checkout as benchmark cases.
    Package(PackageArgs),
    /// Build the context bundle of one function.
    Context(ContextArgs),
    /// Produce obfuscated variants of original cases.
    Obfuscate(ObfuscateArgs),
    /// Render prompts for cases.
    Prompt(PromptArgs),
    /// Draw model samples for cases.
    Generate(GenerateArgs),
    /// Splice samples into the project and run build and tests.
    Evaluate(EvaluateArgs),
    /// Compute CPR/TPR tables.
    Report(ReportArgs),
    /// Classify compile errors into the error taxonomy.
    ClassifyErrors(ClassifyArgs),
    /// Sample size with finite population correction.
    SampleSize(SampleSizeArgs),
    /// Dataset funnel and stratum counts.
    Stats(StatsArgs),
}

#[derive(Args, Debug)]
struct FetchArgs {
    /// `owner/name`.
    #[arg(long)]
    repo: String,
    /// Keep PRs merged strictly after this instant (RFC 3339).
    #[arg(long)]
    since: DateTime<Utc>,
    #[arg(long, default_value = "https://api.github.com")]
    api: String,
    /// Environment variable holding the API token.
    #[arg(long, default_value = "GITHUB_TOKEN")]
    token_env: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MineArgs {
    /// JSON array of PR records.
    #[arg(long)]
    prs: PathBuf,
    /// Keep PRs merged strictly after this instant (RFC 3339).
    #[arg(long)]
    cutoff: DateTime<Utc>,
    /// Post-merge tree; `<tree>/<pr id>/` is used instead when present.
    #[arg(long)]
    tree: PathBuf,
    /// lcov report used to keep covered functions only.
    #[arg(long)]
    coverage: Option<PathBuf>,
    #[arg(long)]
    project: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write this project's funnel counts as JSON.
    #[arg(long)]
    funnel_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PackageArgs {
    /// JSON array of {file, function, description}.
    #[arg(long)]
    descriptions: PathBuf,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Scenario,
    /// Project name recorded in the cases.
    #[arg(long)]
    project: Option<String>,
    /// Commit the cases are taken from.
    #[arg(long)]
    commit: Option<String>,
    /// Mined candidates to package instead of the checkout's current functions.
    #[arg(long)]
    candidates: Option<PathBuf>,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    keep_ratio: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ContextArgs {
    #[arg(long)]
    file: String,
    #[arg(long)]
    function: String,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    distractors: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ObfuscateArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long, value_parser = parse_strategy)]
    strategy: Stratum,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Keep only variants that build and pass the project tests.
    #[arg(long)]
    verify: bool,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON Lines record of cases the strategy did not apply to.
    #[arg(long)]
    skipped: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PromptArgs {
    #[arg(long)]
    cases: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ClientKind {
    Http,
    Replay,
}

#[derive(Args, Debug, Clone)]
struct ClientArgs {
    #[arg(long, value_enum)]
    client: Option<ClientKind>,
    /// Recorded samples for the replay client.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Samples per case.
    #[arg(long = "num-samples")]
    num_samples: Option<usize>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    cases: PathBuf,
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    cases: PathBuf,
    /// Samples to evaluate; otherwise they are drawn with `--client`.
    #[arg(long)]
    samples: Option<PathBuf>,
    #[command(flatten)]
    client: ClientArgs,
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Case files the outcomes refer to.
    #[arg(long)]
    cases: Vec<PathBuf>,
    #[arg(long)]
    outcomes: Vec<PathBuf>,
    #[arg(long, default_value = "model")]
    model: String,
    /// Previously computed rows (CSV) instead of outcomes.
    #[arg(long)]
    rows: Vec<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: ReportFormat,
    /// Append per-project and overall averages over models.
    #[arg(long)]
    averages: bool,
    /// Only emit the averages.
    #[arg(long)]
    averages_only: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    /// Evaluation outcomes whose compile logs are classified.
    #[arg(long)]
    outcomes: Vec<PathBuf>,
    /// Raw compiler logs.
    #[arg(long)]
    log: Vec<PathBuf>,
    #[arg(long)]
    rules: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of the first error category per failing sample.
    #[arg(long)]
    per_case: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleSizeArgs {
    #[arg(long = "N")]
    population: u64,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
    #[arg(long, default_value_t = 0.05)]
    margin: f64,
    #[arg(long, default_value_t = 0.5)]
    p: f64,
}

#[derive(Args, Debug)]
struct StatsArgs {
    #[arg(long)]
    cases: Vec<PathBuf>,
    #[arg(long)]
    funnel: Option<PathBuf>,
    #[arg(long, default_value = "csv")]
    format: StatsFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StatsFormat {
    Csv,
    Json,
}

fn parse_scenario(s: &str) -> std::result::Result<Scenario, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> std::result::Result<Stratum, String> {
    match s.parse::<Stratum>() {
        Ok(Stratum::Original | Stratum::OriginalRestricted) | Err(_) => Err(format!(
            "unknown strategy `{s}`; expected symbol, structure, semantic, symbol+structure or symbol+semantic"
        )),
        Ok(st) => Ok(st),
    }
}

/// Run with full argv (program name first); returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    match cli.command {
        Command::FetchPrs(a) => fetch_prs(a),
        Command::Mine(a) => mine(&cfg, a),
        Command::Package(a) => package(&cfg, a),
        Command::Context(a) => context(&cfg, a),
        Command::Obfuscate(a) => obfuscate(&cfg, a),
        Command::Prompt(a) => prompt(a),
        Command::Generate(a) => generate(&cfg, a),
        Command::Evaluate(a) => evaluate(&cfg, a),
        Command::Report(a) => report(&cfg, a),
        Command::ClassifyErrors(a) => classify(&cfg, a),
        Command::SampleSize(a) => {
            let n = sample_size(SampleSizeParams { population: a.population, confidence: a.confidence, margin: a.margin, p: a.p })?;
            println!("{n}");
            Ok(())
        }
        Command::Stats(a) => stats(a),
    }
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| format!("{}: {e}", p.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn jsonl<T: Serialize>(items: &[T]) -> String {
    let mut s = String::new();
    for item in items {
        s += &serde_json::to_string(item).expect("serializable");
        s.push('\n');
    }
    s
}

fn test_matcher(cfg: &Config) -> Result<TestMatcher> {
    Ok(TestMatcher::new(&cfg.project.test_globs)?)
}

fn project_root(cfg: &Config, flag: &Option<PathBuf>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.project.root.clone())
        .ok_or_else(|| "no project root: pass --root or set project.root in the config".into())
}

fn load_project(cfg: &Config, flag: &Option<PathBuf>) -> Result<(PathBuf, Project)> {
    let root = project_root(cfg, flag)?;
    let project = Project::load(&root, &test_matcher(cfg)?)?;
    Ok((root, project))
}

fn fetch_prs(a: FetchArgs) -> Result<()> {
    let config = corpus::FetchConfig {
        api: a.api,
        token: std::env::var(&a.token_env).ok().filter(|t| !t.is_empty()),
        ..corpus::FetchConfig::new(&a.repo)
    };
    let prs = corpus::PrFetcher::new(config).fetch(a.since)?;
    write_output(&a.out, &(serde_json::to_string_pretty(&prs)? + "\n"))
}

fn mine(cfg: &Config, a: MineArgs) -> Result<()> {
    let tests = test_matcher(cfg)?;
    let name = a.project.clone().unwrap_or_else(|| cfg.project.name.clone());
    let records = load_pr_export(&a.prs)?;
    let merged = records.iter().filter(|r| r.merged_at > a.cutoff).count() as u64;
    let kept = filter_prs(&records, a.cutoff, &tests);
    let mut candidates: Vec<CandidateFunction> = Vec::new();
    for pr in &kept {
        let per_pr = a.tree.join(&pr.id);
        let tree = if per_pr.is_dir() { per_pr } else { a.tree.clone() };
        let (before, after) = corpus::mining::revisions_from_checkout(&tree, pr)?;
        candidates.extend(corpus::extract_modified_functions(&name, pr, &before, &after, &tests));
    }
    let modified = candidates.len() as u64;
    if let Some(cov) = &a.coverage {
        let text = std::fs::read_to_string(cov).map_err(|e| format!("{}: {e}", cov.display()))?;
        candidates = filter_by_coverage(&candidates, &text)?;
    }
    log::info!("{name}: {merged} merged PRs, {} with tests, {modified} modified functions, {} kept", kept.len(), candidates.len());
    if let Some(f) = &a.funnel_out {
        let row = FunnelRow {
            project: name.clone(),
            counts: FunnelCounts {
                merged_prs: merged,
                prs_with_tests_modified: kept.len() as u64,
                modified_functions: modified,
                test_covered_functions: candidates.len() as u64,
            },
        };
        std::fs::write(f, serde_json::to_string_pretty(&[row])? + "\n")?;
    }
    write_output(&a.out, &jsonl(&candidates))
}

fn package(cfg: &Config, a: PackageArgs) -> Result<()> {
    let (_, project) = load_project(cfg, &a.root)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let options = PackageOptions { test_cmd: cfg.sandbox.test_cmd.clone(), keep_ratio: a.keep_ratio.unwrap_or(cfg.keep_ratio) };
    let descriptions = corpus::package::load_descriptions(&a.descriptions)?;
    let name = a.project.clone().unwrap_or_else(|| cfg.project.name.clone());
    let commit = a.commit.clone().unwrap_or_else(|| cfg.project.commit.clone());
    let cases = match &a.candidates {
        None if a.distractors.is_none() && cfg.distractor_count.is_none() => {
            corpus::cases_from_project(&project, &name, &commit, &descriptions, a.scenario, &options, seed)?
        }
        _ => {
            let candidates: Vec<CandidateFunction> = match &a.candidates {
                Some(p) => read_jsonl(p)?,
                None => descriptions
                    .iter()
                    .map(|d| {
                        corpus::package::candidate_from_project(&project, &name, &d.file, &d.function, &commit)
                    })
                    .collect::<std::result::Result<_, _>>()?,
            };
            let by_key: BTreeMap<(&str, &str), &str> =
                descriptions.iter().map(|d| ((d.file.as_str(), d.function.as_str()), d.description.as_str())).collect();
            let typedefs = project.typedefs();
            let mut out = Vec::new();
            for c in &candidates {
                let desc = by_key.get(&(c.file.as_str(), c.name.as_str())).copied().unwrap_or("");
                let bundle = build_context(&project, &c.file, &c.name, a.distractors.or(cfg.distractor_count), seed)?;
                match corpus::package_case(c, desc, bundle, a.scenario, &options, &typedefs) {
                    Ok(case) => out.push(case),
                    Err(e @ corpus::PackageError::Mask { .. }) => log::warn!("skipping {}: {e}", c.name),
                    Err(e) => return Err(e.into()),
                }
            }
            out
        }
    };
    write_output(&a.out, &jsonl(&cases))
}

fn context(cfg: &Config, a: ContextArgs) -> Result<()> {
    let (_, project) = load_project(cfg, &a.root)?;
    let bundle = build_context(&project, &a.file, &a.function, a.distractors.or(cfg.distractor_count), a.seed.unwrap_or(cfg.seed))?;
    write_output(&a.out, &(serde_json::to_string_pretty(&bundle)? + "\n"))
}

#[derive(Serialize)]
struct Skipped {
    case_id: String,
    stratum: String,
    reason: String,
}

fn obfuscate(cfg: &Config, a: ObfuscateArgs) -> Result<()> {
    let (root, project) = load_project(cfg, &a.root)?;
    let tests = test_matcher(cfg)?;
    let seed = a.seed.unwrap_or(cfg.seed);
    let wordlist = match &cfg.wordlist {
        Some(p) => parse_wordlist(&std::fs::read_to_string(p)?),
        None => builtin_wordlist(),
    };
    let env = SymbolEnv::from_project(&project, wordlist);
    let cases = load_cases(&a.cases)?;
    let mut out = Vec::new();
    let mut skipped = Vec::new();
    for case in &cases {
        let skip = |reason: String| Skipped { case_id: case.id.clone(), stratum: a.strategy.to_string(), reason };
        let mut variant = match obfuscate_case(case, a.strategy, seed, &project, &env) {
            Ok(v) => v,
            Err(e @ (ObfuscateError::NotApplicable { .. } | ObfuscateError::Unsupported { .. } | ObfuscateError::TargetParse { .. })) => {
                log::info!("{}: {e}", case.id);
                skipped.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(format!("{}: {e}", case.id).into()),
        };
        if a.verify {
            let verdict = verify_equivalence(case, &variant, &root, &cfg.sandbox, &tests)?;
            if !verdict.is_pass() {
                log::warn!("{}: transformed code failed verification", case.id);
                skipped.push(skip(format!("verification failed: {}", serde_json::to_string(&verdict)?)));
                continue;
            }
            variant.lineage.iter_mut().for_each(|r| r.verified = true);
        }
        out.push(variant);
    }
    if let Some(p) = &a.skipped {
        std::fs::write(p, jsonl(&skipped))?;
    }
    log::info!("{} variants, {} skipped", out.len(), skipped.len());
    match &a.out {
        Some(p) => save_cases(p, &out)?,
        None => write_output(&None, &jsonl(&out))?,
    }
    Ok(())
}

#[derive(Serialize)]
struct PromptRecord<'a> {
    case_id: &'a str,
    prompt: String,
}

fn prompt(a: PromptArgs) -> Result<()> {
    let cases = load_cases(&a.cases)?;
    let records: Vec<PromptRecord> = cases.iter().map(|c| PromptRecord { case_id: &c.id, prompt: build_prompt(c) }).collect();
    write_output(&a.out, &jsonl(&records))
}

fn make_client(cfg: &Config, a: &ClientArgs) -> Result<Box<dyn Generator>> {
    match a.client.unwrap_or(ClientKind::Http) {
        ClientKind::Http => Ok(Box::new(HttpGenerator::new(cfg.generator.clone()))),
        ClientKind::Replay => {
            let p = a.replay.as_ref().ok_or("the replay client needs --replay FILE")?;
            Ok(Box::new(ReplayGenerator::load(p)?))
        }
    }
}

fn draw(cfg: &Config, cases: &[BenchmarkCase], a: &ClientArgs) -> Result<Vec<GenerationSample>> {
    let client = make_client(cfg, a)?;
    let n = a.num_samples.unwrap_or(cfg.samples);
    let mut out = Vec::new();
    for c in cases {
        out.extend(generate_samples(client.as_ref(), &c.id, &c.function, &build_prompt(c), n)?);
    }
    Ok(out)
}

fn generate(cfg: &Config, a: GenerateArgs) -> Result<()> {
    let cases = load_cases(&a.cases)?;
    let samples = draw(cfg, &cases, &a.client)?;
    write_output(&a.out, &jsonl(&samples))
}

fn evaluate(cfg: &Config, a: EvaluateArgs) -> Result<()> {
    let root = project_root(cfg, &a.root)?;
    let cases = load_cases(&a.cases)?;
    let samples = match &a.samples {
        Some(p) => read_jsonl(p)?,
        None => draw(cfg, &cases, &a.client)?,
    };
    let outcomes = evaluate_samples(&root, &cases, &samples, &cfg.sandbox, &test_matcher(cfg)?, a.parallelism.unwrap_or(cfg.parallelism))?;
    let mut buf = Vec::new();
    write_outcomes(&mut buf, &outcomes)?;
    write_output(&a.out, &String::from_utf8(buf)?)
}

fn report(cfg: &Config, a: ReportArgs) -> Result<()> {
    let mut rows = Vec::new();
    for p in &a.rows {
        rows.extend(parse_rows_csv(&std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?)?);
    }
    if !a.outcomes.is_empty() {
        let mut cases = Vec::new();
        for p in &a.cases {
            cases.extend(load_cases(p)?);
        }
        let mut outcomes: Vec<CaseOutcome> = Vec::new();
        for p in &a.outcomes {
            outcomes.extend(read_jsonl::<CaseOutcome>(p)?);
        }
        rows.extend(compute_rates(&outcomes, &cases, &a.model, cfg.k)?);
    }
    if a.averages || a.averages_only {
        let mut averaged = average_rows(&rows, true)?;
        averaged.extend(average_rows(&rows, false)?);
        if a.averages_only {
            rows = averaged;
        } else {
            rows.extend(averaged);
        }
    }
    write_output(&a.out, &emit_report(&rows, a.format))
}

fn classify(cfg: &Config, a: ClassifyArgs) -> Result<()> {
    let rules = match a.rules.as_ref().or(cfg.diagnostic_rules.as_ref()) {
        Some(p) => RuleSet::parse(&std::fs::read_to_string(p)?)?,
        None => RuleSet::builtin(),
    };
    // (source, sample index, log)
    let mut logs: Vec<(String, String, String)> = Vec::new();
    for p in &a.outcomes {
        for o in read_jsonl::<CaseOutcome>(p)? {
            if !o.compile_pass {
                logs.push((o.case_id, o.sample_index.to_string(), o.compile_log));
            }
        }
    }
    for p in &a.log {
        logs.push((p.display().to_string(), String::new(), std::fs::read_to_string(p)?));
    }
    let mut all = Vec::new();
    let mut per_case = String::from("source,sample_index,major,sub\n");
    for (source, index, log) in &logs {
        let parsed = parse_diagnostics(log);
        if let Some(c) = parsed.diagnostics.iter().find_map(|d| match rules.classify(d) {
            Classification::Error(c) => Some(c),
            Classification::Ignored => None,
        }) {
            per_case += &format!("\"{}\",{index},\"{}\",\"{}\"\n", source.replace('"', "\"\""), c.major(), c.sub());
        }
        all.extend(parsed.diagnostics);
    }
    if let Some(p) = &a.per_case {
        std::fs::write(p, per_case)?;
    }
    let dist = taxonomy_proportions(&rules, &all)?;
    write_output(&a.out, &dist.to_csv())
}

fn stats(a: StatsArgs) -> Result<()> {
    let mut cases = Vec::new();
    for p in &a.cases {
        cases.extend(load_cases(p)?);
    }
    let funnel = match &a.funnel {
        Some(p) => corpus::stats::load_funnel(p)?,
        None => Vec::new(),
    };
    let s = dataset_stats(&cases, &funnel)?;
    let text = match a.format {
        StatsFormat::Csv => s.to_csv(),
        StatsFormat::Json => serde_json::to_string_pretty(&s)? + "\n",
    };
    write_output(&a.out, &text)
}
