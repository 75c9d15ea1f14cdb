//! `rta` — reuse-transformer laboratory CLI.
//!
//! Subcommands: `train`, `similarity`, `theory {lemma1|lemma2}`, `cost`,
//! `gradcheck`, `sweep`, `compare-random`. Exit codes: 0 success, 1
//! assertion/tolerance failure, 2 usage or configuration error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use reuse_transformer::cost::{cost_sweep, model_cost, FlopConvention};
use reuse_transformer::model::{
    gradient_check, tiny_config, tiny_schedules, Checkpoint, ModelConfig, ReuseSchedule,
    ScheduleVariant,
};
use reuse_transformer::similarity::{
    analyze_capture, convergence_curve, heatmap_svg, read_capture, write_capture,
    AttentionCapture,
};
use reuse_transformer::tasks::{
    ablation_sweep, capture_attention, gen_examples, run_training, trained_vs_random_similarity,
    TaskKind, TaskSpec, TrainRunConfig,
};
use reuse_transformer::theory::{
    lemma1_mc, lemma2_check, sample_lemma2_instance, Distribution,
};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const SCHEMA_VERSION: u32 = 1;

#[derive(Parser)]
#[command(name = "rta", version, about = "Reuse-transformer laboratory")]
struct Cli {
    /// Worker threads for data-parallel sections (1 = fully sequential,
    /// bitwise reproducible).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model on a synthetic task and write checkpoint + metrics.
    Train(TrainArgs),
    /// Analyze attention-score similarity from a checkpoint or capture dump.
    Similarity(SimilarityArgs),
    /// Numerically verify the supporting lemmas.
    #[command(subcommand)]
    Theory(TheoryCmd),
    /// Closed-form parameter/FLOP accounting and ratios.
    Cost(CostArgs),
    /// Analytic-vs-finite-difference gradient verification.
    Gradcheck(GradcheckArgs),
    /// Train one model per reuse-head count K and tabulate final metrics.
    Sweep(SweepArgs),
    /// Trained-vs-random-init adjacent-layer similarity comparison.
    CompareRandom(CompareRandomArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// JSON run configuration (schema_version + train block).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output directory for checkpoint, metrics and manifest.
    #[arg(long)]
    out: PathBuf,
    /// Override the configured task kind.
    #[arg(long)]
    task: Option<TaskKindArg>,
    /// Override the configured step count.
    #[arg(long)]
    steps: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskKindArg {
    Copy,
    Reverse,
    Sort,
    Masked,
}

impl From<TaskKindArg> for TaskKind {
    fn from(v: TaskKindArg) -> TaskKind {
        match v {
            TaskKindArg::Copy => TaskKind::Copy,
            TaskKindArg::Reverse => TaskKind::Reverse,
            TaskKindArg::Sort => TaskKind::Sort,
            TaskKindArg::Masked => TaskKind::MaskedToken,
        }
    }
}

#[derive(Args)]
struct SimilarityArgs {
    /// Checkpoint to capture attention from (mutually exclusive with
    /// --capture-file).
    #[arg(long, conflicts_with = "capture_file")]
    checkpoint: Option<PathBuf>,
    /// Pre-recorded capture dump to analyze directly.
    #[arg(long)]
    capture_file: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Probe set size when capturing from a checkpoint.
    #[arg(long, default_value_t = 256)]
    probe_count: usize,
    /// Probe sequence length (defaults to the model's maximum).
    #[arg(long)]
    seq_len: Option<usize>,
    /// Comma-separated sample sizes for a convergence table, e.g. 32,128,256.
    #[arg(long, value_delimiter = ',')]
    convergence: Option<Vec<usize>>,
    /// Also persist the captured scores next to the report.
    #[arg(long, default_value_t = false)]
    save_capture: bool,
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Monte-Carlo check of the random-attention dissimilarity identity.
    Lemma1(Lemma1Args),
    /// Direct evaluation of the two-layer linear reuse-error bound.
    Lemma2(Lemma2Args),
}

#[derive(Args)]
struct Lemma1Args {
    #[arg(long, default_value_t = 16)]
    d: usize,
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Lemma2Args {
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Total instances, split evenly across the epsilon targets.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    /// Comma-separated epsilon targets.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.05, 0.1, 0.25, 0.5])]
    epsilon: Vec<f64>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    /// JSON model configuration (schema_version + model block).
    #[arg(long)]
    config: PathBuf,
    /// Optional alternate baseline config; defaults to the same architecture
    /// with the all-exact schedule.
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Sequence length the FLOP count is stated at.
    #[arg(long, default_value_t = 512)]
    n: usize,
    /// Count output-head parameters separately instead of tying them to the
    /// embedding table.
    #[arg(long, default_value_t = false)]
    untied_output: bool,
    /// Emit one CSV row per K over an inclusive range, e.g. 0..12.
    #[arg(long)]
    sweep_k: Option<String>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long)]
    seed: u64,
    /// Which schedule variant to check (default: all).
    #[arg(long)]
    schedule: Option<ScheduleArg>,
    /// Deliberately corrupt the analytic gradient (negative control).
    #[arg(long, hide = true, default_value_t = false)]
    corrupt: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Baseline,
    PartialLayer,
    FullLayer,
    Alternate,
    AllEnd,
    Skip,
}

impl From<ScheduleArg> for ScheduleVariant {
    fn from(v: ScheduleArg) -> ScheduleVariant {
        match v {
            ScheduleArg::Baseline => ScheduleVariant::Baseline,
            ScheduleArg::PartialLayer => ScheduleVariant::PartialLayer,
            ScheduleArg::FullLayer => ScheduleVariant::FullLayer,
            ScheduleArg::Alternate => ScheduleVariant::Alternate,
            ScheduleArg::AllEnd => ScheduleVariant::AllEnd,
            ScheduleArg::Skip => ScheduleVariant::Skip,
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    /// JSON run configuration (schema_version + train block).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated reuse-head counts to train with.
    #[arg(long, value_delimiter = ',')]
    k_values: Vec<usize>,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareRandomArgs {
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 300)]
    steps: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Every output directory gets exactly one of these.
#[derive(Serialize)]
struct RunManifest {
    command: String,
    tool_version: &'static str,
    seeds: Vec<u64>,
    threads: usize,
    config: serde_json::Value,
    artifacts: Vec<String>,
    created_unix: u64,
}

impl RunManifest {
    fn new(
        command: &str,
        seeds: Vec<u64>,
        threads: usize,
        config: serde_json::Value,
        artifacts: Vec<String>,
    ) -> Self {
        RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION"),
            seeds,
            threads,
            config,
            artifacts,
            created_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    fn write(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(self).unwrap() + "\n")
            .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainConfigFile {
    schema_version: u32,
    train: TrainRunConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelConfigFile {
    schema_version: u32,
    model: ModelConfig,
}

enum CliError {
    /// Exit 1: an asserted tolerance or bound failed.
    Tolerance(String),
    /// Exit 2: usage, configuration, or I/O problem.
    Config(String),
}

type CliResult<T> = Result<T, CliError>;

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl From<reuse_transformer::Error> for CliError {
    fn from(e: reuse_transformer::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

fn read_json_file<T: serde::de::DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| {
        config_err(format!(
            "invalid config {}: {e} (line {}, column {})",
            path.display(),
            e.line(),
            e.column()
        ))
    })
}

fn check_schema(version: u32, path: &Path) -> CliResult<()> {
    if version != SCHEMA_VERSION {
        return Err(config_err(format!(
            "{}: unsupported schema_version {version}, expected {SCHEMA_VERSION}",
            path.display()
        )));
    }
    Ok(())
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| config_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)
        .map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.max(1);
    let parallel = threads > 1;
    #[cfg(feature = "parallel")]
    if parallel {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.cmd {
        Cmd::Train(args) => cmd_train(args, threads, parallel),
        Cmd::Similarity(args) => cmd_similarity(args, threads, parallel),
        Cmd::Theory(args) => cmd_theory(args, parallel),
        Cmd::Cost(args) => cmd_cost(args),
        Cmd::Gradcheck(args) => cmd_gradcheck(args),
        Cmd::Sweep(args) => cmd_sweep(args, threads, parallel),
        Cmd::CompareRandom(args) => cmd_compare_random(args, threads, parallel),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Tolerance(msg)) => {
            eprintln!("FAIL: {msg}");
            ExitCode::from(1)
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn cmd_train(args: TrainArgs, threads: usize, parallel: bool) -> CliResult<()> {
    let file: TrainConfigFile = read_json_file(&args.config)?;
    check_schema(file.schema_version, &args.config)?;
    let mut config = file.train;
    config.seed = args.seed;
    if let Some(task) = args.task {
        config.task.kind = task.into();
    }
    if let Some(steps) = args.steps {
        config.steps = steps;
    }
    config.validate()?;
    ensure_dir(&args.out)?;

    let result = run_training(&config, parallel)?;
    let ckpt_path = args.out.join("checkpoint.bin");
    result.checkpoint.save(&ckpt_path)?;
    let mut metrics = String::new();
    for record in &result.metrics {
        metrics.push_str(&serde_json::to_string(record).unwrap());
        metrics.push('\n');
    }
    write_text(&args.out.join("metrics.jsonl"), &metrics)?;
    RunManifest::new(
        "train",
        vec![config.seed],
        threads,
        serde_json::to_value(&config).unwrap(),
        vec!["checkpoint.bin".into(), "metrics.jsonl".into()],
    )
    .write(&args.out)?;
    println!(
        "trained {} steps: final loss {:.6}, token accuracy {:.4}",
        config.steps, result.final_loss, result.final_accuracy
    );
    Ok(())
}

fn load_capture(args: &SimilarityArgs, parallel: bool) -> CliResult<AttentionCapture> {
    if let Some(path) = &args.capture_file {
        return Ok(read_capture(path)?);
    }
    let ckpt_path = args
        .checkpoint
        .as_ref()
        .ok_or_else(|| config_err("either --checkpoint or --capture-file is required"))?;
    let ckpt = Checkpoint::load(ckpt_path)?;
    let cfg = &ckpt.params.config;
    let seq_len = args.seq_len.unwrap_or(cfg.max_n.min(32));
    let spec = TaskSpec {
        kind: TaskKind::MaskedToken,
        vocab: cfg.vocab,
        seq_len,
        mask_rate: 0.15,
        corpus_source: reuse_transformer::tasks::CorpusSource::Structured,
    };
    spec.validate()?;
    let probe = gen_examples(&spec, args.seed, args.probe_count);
    Ok(capture_attention(&ckpt.params, &probe, parallel)?)
}

fn csv_matrix(matrix: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

fn cmd_similarity(args: SimilarityArgs, threads: usize, parallel: bool) -> CliResult<()> {
    ensure_dir(&args.out)?;
    let capture = load_capture(&args, parallel)?;
    let source = if args.capture_file.is_some() {
        "capture-file"
    } else {
        "checkpoint"
    };
    let report = analyze_capture(&capture, source, "probe", parallel)?;
    for row in &report.all_pairs {
        for v in row {
            if !(0.0..=1.0 + 1e-12).contains(v) {
                return Err(CliError::Tolerance(format!(
                    "similarity value {v} outside [0, 1]"
                )));
            }
        }
    }
    let mut artifacts = vec![
        "report.json".into(),
        "all_pairs.csv".into(),
        "heatmap.svg".into(),
    ];
    write_text(
        &args.out.join("report.json"),
        &(serde_json::to_string_pretty(&report).unwrap() + "\n"),
    )?;
    write_text(&args.out.join("all_pairs.csv"), &csv_matrix(&report.all_pairs))?;
    write_text(
        &args.out.join("heatmap.svg"),
        &heatmap_svg(&report.all_pairs, "best-head similarity by layer pair"),
    )?;
    if let Some(sizes) = &args.convergence {
        let curve = convergence_curve(&capture, sizes, parallel)?;
        let mut csv = String::from("samples,source_layer,target_layer,similarity\n");
        for (s, matrix) in &curve {
            for (l, row) in matrix.iter().enumerate() {
                for (l2, v) in row.iter().enumerate() {
                    csv.push_str(&format!("{s},{},{},{v:.6}\n", l + 1, l2 + 1));
                }
            }
        }
        write_text(&args.out.join("convergence.csv"), &csv)?;
        artifacts.push("convergence.csv".into());
    }
    if args.save_capture {
        write_capture(&args.out.join("capture.bin"), &capture)?;
        artifacts.push("capture.bin".into());
    }
    RunManifest::new(
        "similarity",
        vec![args.seed],
        threads,
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "capture_file": args.capture_file,
            "probe_count": args.probe_count,
            "seq_len": args.seq_len,
            "convergence": args.convergence,
        }),
        artifacts,
    )
    .write(&args.out)?;
    println!(
        "analyzed {} examples over {} layers x {} heads; mean adjacent similarity {:.4}",
        report.examples,
        report.layers,
        report.heads,
        report.mean_adjacent_similarity()
    );
    Ok(())
}

fn cmd_theory(cmd: TheoryCmd, parallel: bool) -> CliResult<()> {
    match cmd {
        TheoryCmd::Lemma1(args) => {
            let tol = if args.samples >= 100_000 { 0.05 } else { 0.15 };
            let mut verdicts = Vec::new();
            let mut failures = Vec::new();
            for distribution in [Distribution::Gaussian, Distribution::Rademacher] {
                let v = lemma1_mc(args.d, args.n, args.samples, distribution, args.seed, parallel)?;
                if (v.ratio - 1.0).abs() > tol {
                    failures.push(format!("{distribution:?} ratio {:.4} not within {tol} of 1", v.ratio));
                }
                verdicts.push(v);
            }
            let json = serde_json::json!({
                "lemma": "dissimilarity-at-random-init",
                "tolerance": tol,
                "verdicts": verdicts,
                "pass": failures.is_empty(),
            });
            let text = serde_json::to_string_pretty(&json).unwrap();
            println!("{text}");
            if let Some(path) = &args.out {
                write_text(path, &(text + "\n"))?;
            }
            if let Some(first) = failures.into_iter().next() {
                return Err(CliError::Tolerance(first));
            }
            Ok(())
        }
        TheoryCmd::Lemma2(args) => {
            if args.epsilon.is_empty() {
                return Err(config_err("at least one --epsilon target is required"));
            }
            let per_target = (args.trials / args.epsilon.len()).max(1);
            let mut rows = Vec::new();
            let mut all_hold = true;
            for (i, &target) in args.epsilon.iter().enumerate() {
                for trial in 0..per_target {
                    let inst = sample_lemma2_instance(
                        args.n,
                        args.d,
                        args.seed ^ ((i as u64) << 32) ^ trial as u64,
                        target,
                    )?;
                    let v = lemma2_check(&inst)?;
                    all_hold &= v.holds;
                    rows.push((target, v));
                }
            }
            let mut csv = String::from("epsilon_target,epsilon,err,bound,err_over_bound,holds\n");
            for (target, v) in &rows {
                let ratio = if v.bound > 0.0 { v.err / v.bound } else { 0.0 };
                csv.push_str(&format!(
                    "{target},{:.6},{:.6},{:.6},{:.4},{}\n",
                    v.epsilon, v.err, v.bound, ratio, v.holds
                ));
            }
            print!("{csv}");
            if let Some(path) = &args.out {
                write_text(path, &csv)?;
            }
            if !all_hold {
                return Err(CliError::Tolerance(
                    "reuse-error bound violated on at least one instance".into(),
                ));
            }
            Ok(())
        }
    }
}

fn cmd_cost(args: CostArgs) -> CliResult<()> {
    let file: ModelConfigFile = read_json_file(&args.config)?;
    check_schema(file.schema_version, &args.config)?;
    let config = file.model;
    config.validate()?;
    let convention = FlopConvention::default();
    let tie = !args.untied_output;

    if let Some(range) = &args.sweep_k {
        let (lo, hi) = range
            .split_once("..")
            .ok_or_else(|| config_err(format!("--sweep-k expects lo..hi, got {range}")))?;
        let lo: usize = lo.trim().parse().map_err(|_| config_err("bad sweep lower bound"))?;
        let hi: usize = hi.trim().parse().map_err(|_| config_err("bad sweep upper bound"))?;
        if lo > hi || hi > config.heads {
            return Err(config_err(format!(
                "sweep range {lo}..{hi} invalid for H={}",
                config.heads
            )));
        }
        let ks: Vec<usize> = (lo..=hi).collect();
        let table = cost_sweep(&config, args.n, &ks, tie, convention)?;
        println!("k,params_total,flops_total,params_ratio,flops_ratio");
        for (k, report) in &table {
            let s = report.summary();
            println!(
                "{k},{:.0},{:.0},{:.6},{:.6}",
                s.params_total, s.flops_total, s.params_ratio, s.flops_ratio
            );
        }
        return Ok(());
    }

    let report = model_cost(&config, args.n, tie, convention)?;
    let (params_ratio, flops_ratio) = if let Some(baseline_path) = &args.baseline {
        let base_file: ModelConfigFile = read_json_file(baseline_path)?;
        check_schema(base_file.schema_version, baseline_path)?;
        let base = model_cost(&base_file.model, args.n, tie, convention)?;
        let ps = report.summary();
        let bs = base.summary();
        (ps.params_total / bs.params_total, ps.flops_total / bs.flops_total)
    } else {
        (report.params_ratio, report.flops_ratio)
    };
    let summary = report.summary();
    let json = serde_json::json!({
        "n": args.n,
        "params_total": summary.params_total,
        "flops_total": summary.flops_total,
        "params_ratio": params_ratio,
        "flops_ratio": flops_ratio,
        "breakdown": summary.breakdown,
    });
    println!("{}", serde_json::to_string_pretty(&json).unwrap());
    Ok(())
}

fn cmd_gradcheck(args: GradcheckArgs) -> CliResult<()> {
    let schedules: Vec<(ScheduleVariant, ReuseSchedule)> = match args.schedule {
        None => tiny_schedules(),
        Some(which) => {
            let target: ScheduleVariant = which.into();
            tiny_schedules()
                .into_iter()
                .filter(|(v, _)| *v == target)
                .collect()
        }
    };
    let mut worst = 0.0f64;
    let mut failed = false;
    for (variant, schedule) in schedules {
        let config = tiny_config(schedule);
        let report = gradient_check(&config, args.seed, 1e-5, args.corrupt)?;
        let ok = report.max_rel_error < 1e-4;
        failed |= !ok;
        worst = worst.max(report.max_rel_error);
        println!(
            "{variant:?}: max relative error {:.3e} over {} parameters [{}]",
            report.max_rel_error,
            report.num_params,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed {
        return Err(CliError::Tolerance(format!(
            "gradient check failed; worst relative error {worst:.3e}"
        )));
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs, threads: usize, parallel: bool) -> CliResult<()> {
    if args.k_values.is_empty() {
        return Err(config_err("--k-values must list at least one K"));
    }
    let file: TrainConfigFile = read_json_file(&args.config)?;
    check_schema(file.schema_version, &args.config)?;
    let mut config = file.train;
    config.seed = args.seed;
    ensure_dir(&args.out)?;
    let rows = ablation_sweep(&config, &args.k_values, parallel)?;
    let mut csv = String::from("k,final_loss,final_accuracy\n");
    for row in &rows {
        csv.push_str(&format!(
            "{},{:.6},{:.4}\n",
            row.k, row.final_loss, row.final_accuracy
        ));
    }
    write_text(&args.out.join("sweep.csv"), &csv)?;
    RunManifest::new(
        "sweep",
        vec![args.seed],
        threads,
        serde_json::json!({
            "train": serde_json::to_value(&config).unwrap(),
            "k_values": args.k_values,
        }),
        vec!["sweep.csv".into()],
    )
    .write(&args.out)?;
    print!("{csv}");
    Ok(())
}

fn cmd_compare_random(args: CompareRandomArgs, threads: usize, parallel: bool) -> CliResult<()> {
    ensure_dir(&args.out)?;
    let report = trained_vs_random_similarity(args.seed, args.steps, parallel)?;
    let text = serde_json::to_string_pretty(&report).unwrap();
    write_text(&args.out.join("comparison.json"), &(text.clone() + "\n"))?;
    RunManifest::new(
        "compare-random",
        vec![args.seed],
        threads,
        serde_json::json!({ "steps": args.steps }),
        vec!["comparison.json".into()],
    )
    .write(&args.out)?;
    println!("{text}");
    Ok(())
}
