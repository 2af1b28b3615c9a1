use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::{json, Value};

use driftgauge::bench::{bench_swd, BenchResult};
use driftgauge::config::{RunConfig, SEED_ENV};
use driftgauge::descriptors::{compute_delta, config_digest, Execution, ShiftDescriptor};
use driftgauge::evaluator::{load_model, predict, save_model, train, Evaluator};
use driftgauge::meta::{adapt_to_model, meta_train, MetaTask};
use driftgauge::metaset::{
    draw_sample_sets, plan_budget, read_meta_set, worst_case_bound, write_meta_set,
    BudgetLedger, ChargeKind, MetaInstance,
};
use driftgauge::metrics::{
    conformal_interval, em_csv, execution_accuracy, hooks, mae, score_exact_match, AccuracyReport,
    PredictionRecord,
};
use driftgauge::synth::{gen_gaussian_workload, shift_family, synthetic_accuracy_fn, GaussianWorkloadSpec};
use driftgauge::workload::{load_embedding_set, save_embedding_set, EmbeddingSet};
use driftgauge::{fsutil, seed, Error, Result};

#[derive(Parser)]
#[command(name = "driftgauge", version, about = "Label-free accuracy estimation from embedding shift")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Configuration override, `section.key=value`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed; takes precedence over DRIFTGAUGE_SEED.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Shift descriptors between embedding sets.
    #[command(subcommand)]
    Descriptors(DescriptorsCmd),
    /// Train an evaluator on a meta-set.
    Train {
        #[arg(long = "meta-set", alias = "meta")]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate target accuracy, optionally with a conformal interval.
    Predict(PredictArgs),
    /// Meta-train an initialization over per-model task files.
    MetaTrain {
        /// Directory of `.jsonl` meta-sets; instances are grouped by task_id.
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Adapt a meta-initialization to a new model with probe instances.
    Adapt {
        #[arg(long)]
        init: PathBuf,
        #[arg(long)]
        probe: PathBuf,
        /// Use only the first N probe instances.
        #[arg(long)]
        probe_size: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cost planning and ledger accounting.
    #[command(subcommand)]
    Budget(BudgetCmd),
    /// Latency benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Synthetic workloads and labels.
    #[command(subcommand)]
    Synth(SynthCmd),
    /// Accuracy and error metrics.
    #[command(subcommand)]
    Metrics(MetricsCmd),
    /// Print a readable summary of a report or bench JSON file.
    Report {
        input: PathBuf,
    },
}

#[derive(Subcommand)]
enum DescriptorsCmd {
    Compute {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long, requires = "target", conflicts_with = "delta")]
    source: Option<PathBuf>,
    #[arg(long, requires = "source")]
    target: Option<PathBuf>,
    /// Precomputed descriptor JSON instead of --source/--target.
    #[arg(long, required_unless_present = "source")]
    delta: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Calibration meta-set for the conformal interval.
    #[arg(long)]
    calib: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum BudgetCmd {
    /// Expected cost of N accepted pairs and the worst-case bound.
    Plan {
        #[arg(long)]
        pairs: u64,
        /// Database count for the worst-case bound.
        #[arg(long)]
        dbs: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply a JSON-lines file of charges and write the ledger snapshot.
    Ledger {
        /// Lines of `{"db_id": .., "kind": "gen"|"val"|"exec", "count": ..}`.
        #[arg(long)]
        charges: PathBuf,
        /// Snapshot to resume from.
        #[arg(long)]
        from: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum BenchCmd {
    Swd {
        /// Comma-separated `n x m x D` triples, e.g. `5000x5000x32`.
        #[arg(long, value_delimiter = ',', default_value = "5000x5000x32")]
        sizes: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "8,16,32,64,128")]
        slices: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "all_random,hybrid")]
        modes: Vec<String>,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        /// Evaluate slices on the thread pool.
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        csv: PathBuf,
        #[arg(long)]
        json: PathBuf,
    },
}

#[derive(Subcommand)]
enum SynthCmd {
    /// Sample a Gaussian workload.
    Gen {
        /// GaussianWorkloadSpec JSON; otherwise isotropic from the flags.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        mean: f64,
        #[arg(long, default_value_t = 1.0)]
        std: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One workload per mean shift along the first axis.
    Family {
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, value_delimiter = ',', required = true)]
        shifts: Vec<f64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Label target sets with the synthetic accuracy function.
    Label {
        #[arg(long)]
        source: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        targets: Vec<PathBuf>,
        #[arg(long, default_value = "synthetic")]
        task_id: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        task_bias: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw sample sets from a corpus and label each one.
    Metaset {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        n_sets: usize,
        #[arg(long, default_value_t = 100)]
        min_size: usize,
        #[arg(long, default_value_t = 10_000)]
        max_size: usize,
        #[arg(long, default_value = "synthetic")]
        task_id: String,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        task_bias: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum MetricsCmd {
    /// Mean absolute error between two JSON arrays of numbers.
    Mae {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
    },
    /// Exact match (and EX through a named hook) over line-aligned SQL files.
    Em {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Equivalence hook for execution accuracy.
        #[arg(long)]
        ex_hook: Option<String>,
        /// Per-record EM CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

struct Ctx {
    cfg: RunConfig,
    command: &'static str,
}

impl Ctx {
    fn provenance(&self) -> Value {
        json!({
            "tool": "driftgauge",
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "master_seed": self.cfg.seed,
            "config_digest": config_digest(&self.cfg.swd, self.cfg.variance_floor),
            "config": self.cfg.to_json(),
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            println!("{}", serde_json::to_string(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(1)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Descriptors(_) => "descriptors compute",
        Command::Train { .. } => "train",
        Command::Predict(_) => "predict",
        Command::MetaTrain { .. } => "meta-train",
        Command::Adapt { .. } => "adapt",
        Command::Budget(BudgetCmd::Plan { .. }) => "budget plan",
        Command::Budget(BudgetCmd::Ledger { .. }) => "budget ledger",
        Command::Bench(_) => "bench swd",
        Command::Synth(SynthCmd::Gen { .. }) => "synth gen",
        Command::Synth(SynthCmd::Family { .. }) => "synth family",
        Command::Synth(SynthCmd::Label { .. }) => "synth label",
        Command::Synth(SynthCmd::Metaset { .. }) => "synth metaset",
        Command::Metrics(MetricsCmd::Mae { .. }) => "metrics mae",
        Command::Metrics(MetricsCmd::Em { .. }) => "metrics em",
        Command::Report { .. } => "report",
    }
}

fn run(cli: Cli) -> Result<Value> {
    let seed_override = cli.seed.map(|s| s.to_string()).or_else(|| std::env::var(SEED_ENV).ok());
    let text = match &cli.config {
        Some(p) => Some(String::from_utf8(fsutil::read(p)?).map_err(|e| Error::ParseError(e.to_string()))?),
        None => None,
    };
    let cfg = RunConfig::resolve(text.as_deref(), &cli.set, seed_override.as_deref())?;
    let ctx = Ctx {
        cfg,
        command: command_name(&cli.command),
    };
    match cli.command {
        Command::Descriptors(DescriptorsCmd::Compute { source, target, out }) => {
            let delta = descriptor(&ctx, &source, &target)?;
            write_with_provenance(&ctx, &out, &delta)?;
            Ok(serde_json::to_value(&delta)?)
        }
        Command::Train { meta, out } => {
            let set = read_meta_set(&meta)?;
            let model = train(&set, &ctx.cfg.train)?;
            save_model(&model, &out, Some(&ctx.provenance()))?;
            let r = model.report.as_ref();
            Ok(json!({
                "model": out,
                "epochs_run": r.map(|r| r.epochs_run),
                "best_val_mae": r.map(|r| r.best_val_mae),
                "stopped_early": r.map(|r| r.stopped_early),
            }))
        }
        Command::Predict(args) => predict_cmd(&ctx, args),
        Command::MetaTrain { tasks, out } => {
            let tasks = read_task_dir(&tasks)?;
            let model = meta_train(&tasks, &ctx.cfg.reptile)?;
            save_model(&model, &out, Some(&ctx.provenance()))?;
            Ok(json!({ "model": out, "tasks": tasks.len() }))
        }
        Command::Adapt { init, probe, probe_size, out } => {
            let init = load_model(&init)?;
            let mut probe = read_meta_set(&probe)?;
            if let Some(k) = probe_size {
                probe.truncate(k);
            }
            let adapted = adapt_to_model(&init, &probe, &ctx.cfg.reptile)?;
            save_model(&adapted, &out, Some(&ctx.provenance()))?;
            Ok(json!({ "model": out, "probe_instances": probe.len() }))
        }
        Command::Budget(cmd) => budget_cmd(&ctx, cmd),
        Command::Bench(BenchCmd::Swd { sizes, slices, modes, trials, parallel, csv, json: json_out }) => {
            let sizes = sizes.iter().map(|s| parse_size(s)).collect::<Result<Vec<_>>>()?;
            let modes: Vec<&str> = modes.iter().map(String::as_str).collect();
            let exec = if parallel { Execution::Parallel } else { Execution::Serial };
            let result: BenchResult = bench_swd(&sizes, &slices, &modes, trials, ctx.cfg.seed, exec)?;
            fsutil::atomic_write(&csv, &result.to_csv()?)?;
            let mut summary = result.summary_json();
            summary["provenance"] = ctx.provenance();
            fsutil::write_json(&json_out, &summary)?;
            Ok(json!({ "rows": result.rows.len(), "csv": csv, "json": json_out }))
        }
        Command::Synth(cmd) => synth_cmd(&ctx, cmd),
        Command::Metrics(cmd) => metrics_cmd(cmd),
        Command::Report { input } => report_cmd(&input),
    }
}

fn descriptor(ctx: &Ctx, source: &Path, target: &Path) -> Result<ShiftDescriptor> {
    let src = load_embedding_set(source)?;
    let tgt = load_embedding_set(target)?;
    compute_delta(&src, &tgt, &ctx.cfg.swd, ctx.cfg.variance_floor)
}

fn write_with_provenance<T: serde::Serialize>(ctx: &Ctx, path: &Path, value: &T) -> Result<()> {
    let mut v = serde_json::to_value(value)?;
    v["provenance"] = ctx.provenance();
    fsutil::write_json(path, &v)
}

fn predict_cmd(ctx: &Ctx, args: PredictArgs) -> Result<Value> {
    let model = load_model(&args.model)?;
    let (delta, n_target) = match (&args.delta, &args.source, &args.target) {
        (Some(path), _, _) => {
            let delta: ShiftDescriptor = fsutil::read_json(path)?;
            (delta, 0)
        }
        (None, Some(s), Some(t)) => {
            let tgt = load_embedding_set(t)?;
            let src = load_embedding_set(s)?;
            (compute_delta(&src, &tgt, &ctx.cfg.swd, ctx.cfg.variance_floor)?, tgt.rows())
        }
        _ => return Err(Error::InvalidArgument("need --delta or both --source and --target".into())),
    };
    let m_hat = predict(&model, &delta)?;
    let mut report = AccuracyReport::point(m_hat, &delta.config_digest, n_target);
    if let Some(calib) = &args.calib {
        let alpha = args.alpha.unwrap_or(ctx.cfg.alpha);
        let residuals = calibration_residuals(&model, &read_meta_set(calib)?)?;
        report = report.with_interval(alpha, conformal_interval(&residuals, alpha)?);
    }
    report.provenance = Some(ctx.provenance());
    fsutil::write_json(&args.out, &report)?;
    report.provenance = None;
    Ok(serde_json::to_value(&report)?)
}

fn calibration_residuals(model: &Evaluator, calib: &[MetaInstance]) -> Result<Vec<f64>> {
    calib
        .iter()
        .map(|c| Ok((predict(model, &c.delta)? - c.accuracy).abs()))
        .collect()
}

fn read_task_dir(dir: &Path) -> Result<Vec<MetaTask>> {
    let entries = std::fs::read_dir(dir).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(dir.to_path_buf()),
        _ => Error::InvalidArgument(format!("{}: {e}", dir.display())),
    })?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    files.sort();
    let mut all = Vec::new();
    for f in &files {
        all.extend(read_meta_set(f)?);
    }
    Ok(MetaTask::group(all))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ChargeLine {
    db_id: String,
    kind: ChargeKind,
    count: u64,
}

fn budget_cmd(ctx: &Ctx, cmd: BudgetCmd) -> Result<Value> {
    match cmd {
        BudgetCmd::Plan { pairs, dbs, out } => {
            let plan = plan_budget(&ctx.cfg.cost, pairs)?;
            let mut v = serde_json::to_value(&plan)?;
            if let Some(dbs) = dbs {
                let caps = ctx.cfg.caps;
                let bound = worst_case_bound(&ctx.cfg.cost, dbs, caps.gen, caps.exec)?;
                v["worst_case"] = json!({
                    "db_count": dbs,
                    "cap_gen": caps.gen,
                    "cap_exec": caps.exec,
                    "bound": bound,
                    "within_budget": bound <= ctx.cfg.cost.budget,
                });
            }
            if let Some(out) = out {
                write_with_provenance(ctx, &out, &v)?;
            }
            Ok(v)
        }
        BudgetCmd::Ledger { charges, from, out } => {
            let mut ledger = match from {
                Some(p) => BudgetLedger::from_snapshot(fsutil::read_json(&p)?)?,
                None => BudgetLedger::new(&ctx.cfg.cost, ctx.cfg.caps)?,
            };
            let lines: Vec<ChargeLine> = fsutil::read_jsonl(&charges)?;
            let mut rejected = Vec::new();
            for (i, c) in lines.iter().enumerate() {
                if let Err(e) = ledger.charge(&c.db_id, c.kind, c.count) {
                    rejected.push(json!({ "line": i + 1, "error": e.kind(), "message": e.to_string() }));
                }
            }
            let mut snap = ledger.snapshot_json();
            snap["provenance"] = ctx.provenance();
            fsutil::write_json(&out, &snap)?;
            Ok(json!({
                "accepted": lines.len() - rejected.len(),
                "rejected": rejected,
                "total_cost": ledger.total_cost(),
            }))
        }
    }
}

fn parse_size(s: &str) -> Result<(usize, usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    let bad = || Error::InvalidArgument(format!("size {s:?} is not NxMxD"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums = parts
        .iter()
        .map(|p| p.trim().parse::<usize>().map_err(|_| bad()))
        .collect::<Result<Vec<_>>>()?;
    Ok((nums[0], nums[1], nums[2]))
}

fn spec_or_isotropic(spec: &Option<PathBuf>, dim: usize, count: usize, mean: f64, std: f64) -> Result<GaussianWorkloadSpec> {
    match spec {
        Some(p) => fsutil::read_json(p),
        None => Ok(GaussianWorkloadSpec::isotropic(dim, count, mean, std)),
    }
}

fn label_instance(
    ctx: &Ctx,
    src: &EmbeddingSet,
    tgt: &EmbeddingSet,
    task_id: &str,
    set_id: &str,
    task_bias: f64,
    noise_seed: u64,
    noise: f64,
) -> Result<MetaInstance> {
    let delta = compute_delta(src, tgt, &ctx.cfg.swd, ctx.cfg.variance_floor)?;
    let accuracy = synthetic_accuracy_fn(&delta, task_bias, noise_seed, noise)?;
    Ok(MetaInstance {
        task_id: task_id.to_string(),
        sample_set_id: set_id.to_string(),
        sample_set_size: tgt.rows(),
        delta,
        accuracy,
    })
}

fn synth_cmd(ctx: &Ctx, cmd: SynthCmd) -> Result<Value> {
    let master = ctx.cfg.seed;
    match cmd {
        SynthCmd::Gen { spec, dim, count, mean, std, out } => {
            let spec = spec_or_isotropic(&spec, dim, count, mean, std)?;
            let set = gen_gaussian_workload(&spec, seed::derive(master, seed::tag::SYNTH))?;
            save_embedding_set(&set, &out)?;
            Ok(json!({ "out": out, "rows": set.rows(), "dim": set.dim() }))
        }
        SynthCmd::Family { spec, dim, count, shifts, out_dir } => {
            let base = spec_or_isotropic(&spec, dim, count, 0.0, 1.0)?;
            let family = shift_family(&base, &shifts)?;
            std::fs::create_dir_all(&out_dir).map_err(|e| Error::InvalidArgument(format!("{}: {e}", out_dir.display())))?;
            let mut files = Vec::new();
            for (i, s) in family.iter().enumerate() {
                let set = gen_gaussian_workload(s, seed::derive(seed::derive(master, seed::tag::SYNTH), i as u64))?;
                let path = out_dir.join(format!("shift_{i:03}.fsemb"));
                save_embedding_set(&set, &path)?;
                files.push(path);
            }
            Ok(json!({ "files": files, "shifts": shifts }))
        }
        SynthCmd::Label { source, targets, task_id, task_bias, noise, out } => {
            let src = load_embedding_set(&source)?;
            let noise_base = seed::derive(master, seed::tag::SYNTH);
            let mut instances = Vec::new();
            for (i, t) in targets.iter().enumerate() {
                let tgt = load_embedding_set(t)?;
                let id = t.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| i.to_string());
                instances.push(label_instance(ctx, &src, &tgt, &task_id, &id, task_bias, seed::derive(noise_base, i as u64), noise)?);
            }
            write_meta_set(&out, &instances)?;
            Ok(json!({ "out": out, "instances": instances.len() }))
        }
        SynthCmd::Metaset { source, corpus, n_sets, min_size, max_size, task_id, task_bias, noise, out } => {
            let src = load_embedding_set(&source)?;
            let corpus = load_embedding_set(&corpus)?;
            let sets = draw_sample_sets(corpus.rows(), n_sets, max_size, min_size, seed::derive(master, seed::tag::SUBSAMPLE))?;
            let noise_base = seed::derive(master, seed::tag::SYNTH);
            let mut instances = Vec::with_capacity(sets.len());
            for (i, idx) in sets.iter().enumerate() {
                let rows: Vec<Vec<f64>> = idx.iter().map(|&r| corpus.row(r).iter().map(|&v| v as f64).collect()).collect();
                let tgt = EmbeddingSet::from_rows(&rows)?;
                let id = format!("{task_id}-{i}");
                instances.push(label_instance(ctx, &src, &tgt, &task_id, &id, task_bias, seed::derive(noise_base, i as u64), noise)?);
            }
            write_meta_set(&out, &instances)?;
            Ok(json!({ "out": out, "instances": instances.len() }))
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = String::from_utf8(fsutil::read(path)?).map_err(|e| Error::ParseError(e.to_string()))?;
    Ok(text.lines().map(str::to_string).collect())
}

fn metrics_cmd(cmd: MetricsCmd) -> Result<Value> {
    match cmd {
        MetricsCmd::Mae { pred, gold } => {
            let p: Vec<f64> = fsutil::read_json(&pred)?;
            let g: Vec<f64> = fsutil::read_json(&gold)?;
            Ok(json!({ "mae": mae(&p, &g)?, "n": p.len() }))
        }
        MetricsCmd::Em { pred, gold, ex_hook, csv } => {
            let p = read_lines(&pred)?;
            let g = read_lines(&gold)?;
            if p.len() != g.len() {
                return Err(Error::LengthMismatch { left: p.len(), right: g.len() });
            }
            let mut records: Vec<PredictionRecord> = p
                .iter()
                .zip(&g)
                .map(|(p, g)| PredictionRecord::new(p.as_str(), Some(g.as_str())))
                .collect();
            let em = score_exact_match(&mut records)?;
            let ex = match &ex_hook {
                Some(name) => Some(execution_accuracy(&records, Some(hooks().get(name)?))?),
                None => None,
            };
            if let Some(csv) = &csv {
                fsutil::atomic_write(csv, &em_csv(&records)?)?;
            }
            Ok(json!({ "em": em, "ex": ex, "n": records.len() }))
        }
    }
}

fn int(v: &Value) -> u64 {
    v.as_u64().unwrap_or(0)
}

fn report_cmd(input: &Path) -> Result<Value> {
    let v: Value = fsutil::read_json(input)?;
    if let Some(m_hat) = v.get("m_hat").and_then(Value::as_f64) {
        let mut line = format!("estimated accuracy {:.2}%", 100.0 * m_hat);
        if let (Some(lo), Some(hi)) = (v["interval"][0].as_f64(), v["interval"][1].as_f64()) {
            line += &format!(
                ", interval [{:.2}%, {:.2}%] at alpha {}",
                100.0 * lo,
                100.0 * hi,
                v["alpha"]
            );
        }
        eprintln!("{line}");
        return Ok(json!({ "kind": "prediction", "m_hat": m_hat, "interval": v["interval"] }));
    }
    if let Some(rows) = v.get("summary").and_then(Value::as_array) {
        eprintln!("{:<11} {:>5} {:>3} {:>4} {:>7} {:>7} {:>4} {:>10} {:>12}", "mode", "L", "k", "R", "n", "m", "D", "median_ms", "peak_bytes");
        for r in rows {
            eprintln!(
                "{:<11} {:>5} {:>3} {:>4} {:>7} {:>7} {:>4} {:>10.3} {:>12}",
                r["mode"].as_str().unwrap_or("?"),
                int(&r["L"]), int(&r["k"]), int(&r["R"]), int(&r["n"]), int(&r["m"]), int(&r["D"]),
                r["median_ms"].as_f64().unwrap_or(f64::NAN),
                int(&r["peak_bytes"])
            );
        }
        return Ok(json!({ "kind": "bench", "configurations": rows.len() }));
    }
    Err(Error::InvalidArgument(format!("{} is neither a prediction report nor a bench summary", input.display())))
}
