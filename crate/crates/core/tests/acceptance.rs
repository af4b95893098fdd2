//! Acceptance checks. Runs without the libtest harness so that every
//! criterion prints its own PASS/FAIL line.

use std::collections::BTreeSet;
use std::panic::AssertUnwindSafe;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rayon::prelude::*;

use obfusbench::cfront::lexer::lex;
use obfusbench::cfront::{Project, TestMatcher};
use obfusbench::corpus::package::load_descriptions;
use obfusbench::corpus::{cases_from_project, dataset_stats, BenchmarkCase, PackageOptions, Scenario, Stratum};
use obfusbench::diagnostics::{parse_diagnostics, taxonomy_proportions, Classification, ErrorCategory, RuleSet};
use obfusbench::harness::{splice_text, CaseOutcome, SandboxConfig};
use obfusbench::metrics::report::{average_rows, changes, parse_rows_csv, round1, Change};
use obfusbench::metrics::{compute_rates, pass_at_k, sample_size, MetricsError, PassStats, SampleSizeParams};
use obfusbench::obfuscate::{
    apply_semantic_template, builtin_wordlist, obfuscate_case, verify_equivalence, ParsedFunction, SemanticTemplate, SymbolEnv,
};

// Tolerances.
const SYMBOL_WALL_LIMIT: Duration = Duration::from_secs(120);
const PASS_AT_K_TOL: f64 = 1e-12;
const PASS_AT_K_WALL_LIMIT: Duration = Duration::from_secs(1);
const TABLE_TOL_PP: f64 = 0.1;
const PROPORTION_TOL_PP: f64 = 0.01;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn mini_root() -> PathBuf {
    fixtures().join("miniproj")
}

struct Mini {
    project: Project,
    env: SymbolEnv,
    generation: Vec<BenchmarkCase>,
    sandbox: SandboxConfig,
    tests: TestMatcher,
}

impl Mini {
    fn load() -> Mini {
        let tests = TestMatcher::default();
        let project = Project::load(&mini_root(), &tests).expect("fixture project");
        let descs = load_descriptions(&fixtures().join("miniproj-descriptions.json")).unwrap();
        let generation =
            cases_from_project(&project, "mini", "fixture", &descs, Scenario::Generation, &PackageOptions::default(), 1).unwrap();
        let env = SymbolEnv::from_project(&project, builtin_wordlist());
        let sandbox = SandboxConfig { retries: 1, ..SandboxConfig::default() };
        Mini { project, env, generation, sandbox, tests }
    }

    fn case(&self, function: &str) -> &BenchmarkCase {
        self.generation.iter().find(|c| c.function == function).unwrap_or_else(|| panic!("no case for {function}"))
    }

    fn verify(&self, original: &BenchmarkCase, variant: &BenchmarkCase) -> Result<(), String> {
        let v = verify_equivalence(original, variant, &mini_root(), &self.sandbox, &self.tests).map_err(|e| e.0)?;
        if v.is_pass() {
            Ok(())
        } else {
            Err(format!("{}: {v:?}", original.function))
        }
    }
}

type Outcome = Result<String, String>;

fn symbol_preservation(mini: &Mini) -> Outcome {
    let start = Instant::now();
    let seeds = [1u64, 2, 3];
    let jobs: Vec<(u64, &BenchmarkCase)> = seeds.iter().flat_map(|&s| mini.generation.iter().map(move |c| (s, c))).collect();
    let failures: Vec<String> = jobs
        .par_iter()
        .filter_map(|(seed, case)| {
            let r = obfuscate_case(case, Stratum::Symbol, *seed, &mini.project, &mini.env)
                .map_err(|e| e.to_string())
                .and_then(|v| mini.verify(case, &v));
            r.err().map(|e| format!("seed {seed}: {e}"))
        })
        .collect();
    let wall = start.elapsed();
    if !failures.is_empty() {
        return Err(failures.join("; "));
    }
    if mini.generation.len() < 10 {
        return Err(format!("only {} functions", mini.generation.len()));
    }
    if wall > SYMBOL_WALL_LIMIT {
        return Err(format!("{wall:.1?} exceeds {SYMBOL_WALL_LIMIT:?}"));
    }
    Ok(format!("{} functions x {} seeds verified in {wall:.1?}", mini.generation.len(), seeds.len()))
}

fn structure_preservation(mini: &Mini) -> Outcome {
    let eligible = ["sum_of_squares", "clamp_add", "double_next", "rb_push"];
    let mut inlined_total = 0;
    for name in eligible {
        let case = mini.case(name);
        let v = obfuscate_case(case, Stratum::Structure, 0, &mini.project, &mini.env).map_err(|e| format!("{name}: {e}"))?;
        mini.verify(case, &v)?;
        let inlined: BTreeSet<String> = v.lineage[0].inlined_callees.clone().unwrap_or_default().into_iter().collect();
        if inlined.is_empty() {
            return Err(format!("{name}: nothing inlined"));
        }
        inlined_total += inlined.len();
        // Rebuild the call graph from the project with the variant spliced in.
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        obfusbench::harness::sandbox::copy_tree(&mini_root(), dir.path()).map_err(|e| e.to_string())?;
        let path = dir.path().join(&case.file);
        let text = std::fs::read_to_string(&path).map_err(|e| e.to_string())?;
        let spliced = splice_text(&text, &case.file, case, &v.reference_body).map_err(|e| e.to_string())?;
        std::fs::write(&path, spliced).map_err(|e| e.to_string())?;
        let graph = Project::load(dir.path(), &mini.tests).map_err(|e| e.to_string())?.call_graph();
        let left: Vec<&str> = graph.callees(name).into_iter().filter(|c| inlined.contains(*c)).collect();
        if !left.is_empty() {
            return Err(format!("{name} still calls {left:?}"));
        }
    }
    Ok(format!("{} functions verified, {inlined_total} callees inlined, no residual edges", eligible.len()))
}

fn significant_tokens(text: &str) -> Vec<String> {
    lex(text).unwrap().into_iter().filter(|t| !t.is_trivia()).map(|t| t.text).collect()
}

fn semantic_preservation(mini: &Mini) -> Outcome {
    let fixtures = [
        (SemanticTemplate::T1, "sum_of_squares"),
        (SemanticTemplate::T1, "rb_max"),
        (SemanticTemplate::T2, "sum_of_squares"),
        (SemanticTemplate::T2, "rb_sum"),
        (SemanticTemplate::T3, "sign_label"),
        (SemanticTemplate::T4, "in_range"),
        (SemanticTemplate::T5, "day_kind"),
    ];
    let typedefs = mini.project.typedefs();
    for (t, name) in fixtures {
        let case = mini.case(name);
        let f = ParsedFunction::parse(&case.reference_body, &typedefs).map_err(|e| format!("{name}: {e}"))?;
        let out = apply_semantic_template(&f, t, 0).map_err(|e| format!("{t} on {name}: {e}"))?;
        if significant_tokens(&out) == significant_tokens(&case.reference_body) {
            return Err(format!("{t} on {name} left the token stream unchanged"));
        }
        let variant = BenchmarkCase { reference_body: out, ..case.clone() };
        mini.verify(case, &variant).map_err(|e| format!("{t}: {e}"))?;
    }
    Ok(format!("{} template fixtures rewritten and verified", fixtures.len()))
}

fn binomial(n: u64, k: u64) -> BigUint {
    (0..k).fold(BigUint::from(1u32), |acc, i| acc * BigUint::from(n - i) / BigUint::from(i + 1))
}

fn pass_at_k_oracle() -> Outcome {
    let start = Instant::now();
    let mut checked = 0;
    let mut worst = 0f64;
    for n in 1..=8u32 {
        for c in 0..=n {
            // Samples 0..c are correct; count k-subsets containing one.
            for k in 1..=n {
                let mut hit = 0u64;
                let mut total = 0u64;
                for mask in 0u32..(1 << n) {
                    if mask.count_ones() == k {
                        total += 1;
                        if mask & ((1 << c) - 1) != 0 {
                            hit += 1;
                        }
                    }
                }
                let brute = hit as f64 / total as f64;
                let est = pass_at_k(PassStats::new(n as u64, c as u64, k as u64).map_err(|e| e.to_string())?);
                worst = worst.max((brute - est).abs());
                if total != binomial(n as u64, k as u64).to_u64().unwrap() {
                    return Err("subset count mismatch".into());
                }
                checked += 1;
            }
        }
    }
    let wall = start.elapsed();
    if worst > PASS_AT_K_TOL {
        return Err(format!("max deviation {worst:e}"));
    }
    if wall > PASS_AT_K_WALL_LIMIT {
        return Err(format!("{wall:?} exceeds {PASS_AT_K_WALL_LIMIT:?}"));
    }
    Ok(format!("{checked} (n, c, k) triples, max deviation {worst:e}, {wall:.1?}"))
}

fn table_replay() -> Outcome {
    // (scenario file, stratum, printed average CPR, TPR, printed TPR decrease %)
    let expected = [
        ("table-generation.csv", Stratum::Symbol, 27.5, 15.8, 25.1),
        ("table-generation.csv", Stratum::Structure, 29.7, 12.5, 32.1),
        ("table-generation.csv", Stratum::SymbolStructure, 20.4, 6.9, 62.5),
        ("table-completion.csv", Stratum::Symbol, 25.4, 15.2, 24.0),
        ("table-completion.csv", Stratum::Semantic, 29.1, 16.6, 15.3),
        ("table-completion.csv", Stratum::SymbolSemantic, 26.6, 15.6, 20.4),
    ];
    let mut lines = Vec::new();
    for (file, stratum, cpr, tpr, ratio) in expected {
        let text = std::fs::read_to_string(fixtures().join(file)).map_err(|e| e.to_string())?;
        let rows = parse_rows_csv(&text).map_err(|e| e.to_string())?;
        let avg = average_rows(&rows, false).map_err(|e| e.to_string())?;
        let row = avg.iter().find(|r| r.stratum == stratum).ok_or(format!("{file}: no {stratum} average"))?;
        let f = |x: &BigRational| round1(x).to_f64().unwrap();
        let (_, tpr_change) = changes(row, &avg).ok_or(format!("{stratum}: no base row"))?;
        let Change::Marker(m) = tpr_change else { return Err(format!("{stratum}: undefined ratio")) };
        let got = m.ratio.to_f64().unwrap() * 100.0;
        for (what, g, e) in [("CPR", f(&row.cpr), cpr), ("TPR", f(&row.tpr), tpr), ("TPR decrease", got, ratio)] {
            if (g - e).abs() > TABLE_TOL_PP + 1e-9 {
                return Err(format!("{file} {stratum} {what}: {g:.3} vs printed {e}"));
            }
        }
        lines.push(format!("{stratum} {got:.1}%"));
    }
    Ok(lines.join(", "))
}

fn sample_sizes() -> Outcome {
    let n = sample_size(SampleSizeParams::new(1354, 0.95, 0.05)).map_err(|e| e.to_string())?;
    let inf = sample_size(SampleSizeParams::new(1_000_000_000, 0.95, 0.05)).map_err(|e| e.to_string())?;
    // Unbounded population: n0 = 1.96^2 * 0.25 / 0.05^2 = 384.16, rounded up.
    let limit = (1.96f64 * 1.96 * 0.25 / 0.0025).ceil() as u64;
    if n != 299 || inf != limit || limit != 385 {
        return Err(format!("N=1354 -> {n}, N=1e9 -> {inf} (limit {limit})"));
    }
    Ok(format!("N=1354 -> {n}, large N -> {inf}"))
}

fn taxonomy() -> Outcome {
    let rules = RuleSet::builtin();
    let text = std::fs::read_to_string(fixtures().join("diagnostics-reference.jsonl")).map_err(|e| e.to_string())?;
    let mut all = Vec::new();
    let mut correct = 0;
    let mut total = 0;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let (log, major, sub) = (v["log"].as_str().unwrap(), v["major"].as_str().unwrap(), v["sub"].as_str().unwrap());
        let parsed = parse_diagnostics(log);
        let got = parsed.diagnostics.iter().find_map(|d| match rules.classify(d) {
            Classification::Error(c) => Some(c),
            Classification::Ignored => None,
        });
        total += 1;
        match got {
            Some(c) if c.sub() == sub && c.major().name() == major => correct += 1,
            other => return Err(format!("{log:?}: got {:?}, expected {sub}", other.map(ErrorCategory::sub))),
        }
        all.extend(parsed.diagnostics);
    }
    let dist = taxonomy_proportions(&rules, &all).map_err(|e| e.to_string())?;
    let sum: f64 = ErrorCategory::all().map(|c| dist.sub_share(c).to_f64().unwrap()).sum();
    if total != 21 || (sum - 100.0).abs() > PROPORTION_TOL_PP {
        return Err(format!("{total} messages, proportions sum to {sum}"));
    }
    Ok(format!("{correct}/{total} correct, proportions sum to {sum:.4}%"))
}

fn run_cli(args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_obfusbench")).args(args).output().map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |n: &str| dir.path().join(n).to_string_lossy().into_owned();
    let root = mini_root().to_string_lossy().into_owned();
    let descs = fixtures().join("miniproj-descriptions.json").to_string_lossy().into_owned();
    run_cli(&["package", "--root", &root, "--descriptions", &descs, "--scenario", "generation", "--out", &p("cases.jsonl")])?;

    let cases = obfusbench::corpus::load_cases(Path::new(&p("cases.jsonl"))).map_err(|e| e.to_string())?;
    let mut replay = String::new();
    for (i, c) in cases.iter().enumerate() {
        for s in 0..2 {
            let body = if (i + s) % 3 == 0 { c.reference_body.replacen(';', " ", 1) } else { c.reference_body.clone() };
            let rec = serde_json::json!({"case_id": c.id, "sample_index": s, "raw_response": format!("```c\n{body}\n```"), "model_id": "replay"});
            replay += &format!("{rec}\n");
        }
    }
    std::fs::write(p("replay.jsonl"), replay).map_err(|e| e.to_string())?;

    let mut checked = Vec::new();
    for strategy in ["symbol", "symbol+structure"] {
        let runs: Vec<Vec<u8>> = (0..2)
            .map(|_| run_cli(&["obfuscate", "--root", &root, "--cases", &p("cases.jsonl"), "--strategy", strategy, "--seed", "9"]))
            .collect::<Result<_, _>>()?;
        if runs[0] != runs[1] || runs[0].is_empty() {
            return Err(format!("obfuscate --strategy {strategy} differs between runs"));
        }
        checked.push(format!("obfuscate {strategy}"));
        std::fs::write(p(&format!("{strategy}.jsonl")), &runs[0]).map_err(|e| e.to_string())?;
    }
    let prompts: Vec<Vec<u8>> = (0..2).map(|_| run_cli(&["prompt", "--cases", &p("symbol.jsonl")])).collect::<Result<_, _>>()?;
    if prompts[0] != prompts[1] {
        return Err("prompt differs between runs".into());
    }
    checked.push("prompt".into());
    let evals: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            run_cli(&[
                "evaluate", "--root", &root, "--cases", &p("cases.jsonl"), "--client", "replay", "--replay", &p("replay.jsonl"),
                "--num-samples", "2", "--parallelism", "4",
            ])
        })
        .collect::<Result<_, _>>()?;
    if evals[0] != evals[1] {
        return Err("evaluate --client replay differs between runs".into());
    }
    checked.push(format!("evaluate ({} outcome lines)", evals[0].iter().filter(|&&b| b == b'\n').count()));
    Ok(checked.join(", ") + " byte-identical")
}

fn outcome(id: &str, i: usize, compile: bool, test: bool) -> CaseOutcome {
    CaseOutcome {
        case_id: id.into(),
        sample_index: i,
        compile_pass: compile,
        test_runs: vec![test],
        test_pass: test,
        compile_log: String::new(),
        test_log: String::new(),
    }
}

fn rate_invariant(mini: &Mini) -> Outcome {
    let mut cases = mini.generation.clone();
    for c in &mini.generation {
        for st in [Stratum::Symbol, Stratum::Structure] {
            if let Ok(v) = obfuscate_case(c, st, 4, &mini.project, &mini.env) {
                cases.push(v);
            }
        }
    }
    // Deterministic mixed outcomes; test passes imply compile passes.
    let mut outs = Vec::new();
    for (i, c) in cases.iter().enumerate() {
        for s in 0..5 {
            let h = (i * 7 + s * 3) % 5;
            outs.push(outcome(&c.id, s, h < 3, h < 1));
        }
    }
    let rows = compute_rates(&outs, &cases, "fixture", 5).map_err(|e| e.to_string())?;
    if let Some(r) = rows.iter().find(|r| r.tpr > r.cpr) {
        return Err(format!("{} row has TPR > CPR", r.stratum));
    }
    if rows.iter().all(|r| r.tpr.is_zero()) {
        return Err("degenerate outcomes".into());
    }
    let victim = cases.iter().find(|c| c.stratum() == Some(Stratum::Symbol)).unwrap();
    let mut bad: Vec<CaseOutcome> = outs.iter().filter(|o| o.case_id != victim.id).cloned().collect();
    bad.extend((0..5).map(|s| outcome(&victim.id, s, false, true)));
    match compute_rates(&bad, &cases, "fixture", 5) {
        Err(e @ MetricsError::RateInvariant { .. }) if e.to_string().contains("symbol") => {
            Ok(format!("{} rows hold TPR <= CPR; injected violation rejected: {e}", rows.len()))
        }
        other => Err(format!("injected violation not rejected with the stratum: {other:?}")),
    }
}

fn funnel_replay() -> Outcome {
    let funnel = obfusbench::corpus::stats::load_funnel(&fixtures().join("funnel.json")).map_err(|e| e.to_string())?;
    let stats = dataset_stats(&[], &funnel).map_err(|e| e.to_string())?;
    let redis = &stats.projects.get("redis").ok_or("no redis row")?.funnel;
    let got = [redis.merged_prs, redis.prs_with_tests_modified, redis.modified_functions, redis.test_covered_functions];
    if got != [740, 114, 3142, 681] {
        return Err(format!("redis funnel {got:?}"));
    }
    Ok(format!("redis {}/{}/{}/{}", got[0], got[1], got[2], got[3]))
}

fn main() {
    let mini = Mini::load();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("symbol obfuscation preserves behaviour", Box::new(|| symbol_preservation(&mini))),
        ("structure obfuscation preserves behaviour", Box::new(|| structure_preservation(&mini))),
        ("semantic templates preserve behaviour", Box::new(|| semantic_preservation(&mini))),
        ("pass@k matches subset enumeration", Box::new(pass_at_k_oracle)),
        ("average-row decrease ratios replay", Box::new(table_replay)),
        ("sample size", Box::new(sample_sizes)),
        ("error taxonomy reference corpus", Box::new(taxonomy)),
        ("pipeline determinism", Box::new(determinism)),
        ("TPR <= CPR invariant", Box::new(|| rate_invariant(&mini))),
        ("funnel replay", Box::new(funnel_replay)),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let result = std::panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
