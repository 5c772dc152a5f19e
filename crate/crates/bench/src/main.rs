use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use unlearn_bench::checkpoint::Checkpoint;
use unlearn_bench::data::{read_csv, synth_dataset, write_csv, DatasetKind};
use unlearn_bench::experiment::{trial_seed, validate_record, write_jsonl};
use unlearn_bench::problems::dataset_kind;
use unlearn_bench::risk::{risk_curve, to_csv, trend_violations};
use unlearn_bench::script::parse_script;
use unlearn_bench::verify::EngineKind;
use unlearn_bench::{run_unlearn_experiment, summarize, verify_coupling, ExperimentConfig, VerifyConfig};

#[derive(Parser)]
#[command(name = "unlearn-bench", version, about = "Exact unlearning for noisy iterative learners")]
struct Cli {
    /// Overrides the config seed.
    #[arg(long, global = true, env = "UNLEARN_SEED")]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a model and save a checkpoint.
    Learn(LearnArgs),
    /// Delete rows from a checkpoint.
    Unlearn(UnlearnArgs),
    /// Apply an insert/delete script to a stream checkpoint.
    Stream(StreamArgs),
    /// Run the learn, delete, unlearn experiment and emit one JSON record per trial.
    Bench(BenchArgs),
    /// Compare unlearned and retrained models on a tiny instance.
    VerifyCoupling(VerifyArgs),
    /// Held-out risk over a grid of n and rho, as CSV.
    RiskCurve(RiskArgs),
    /// Write a synthetic dataset as CSV.
    Synth(SynthArgs),
}

#[derive(Args)]
struct LearnArgs {
    #[arg(long)]
    config: PathBuf,
    /// Headed CSV; synthesized from the config when absent.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    checkpoint: PathBuf,
}

#[derive(Args)]
struct UnlearnArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Original row id (0-based), or 1-based position for stream checkpoints. Repeatable.
    #[arg(long, required = true)]
    row: Vec<usize>,
}

#[derive(Args)]
struct StreamArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// One request per line: `I <csv row>` or `D <position>`.
    #[arg(long)]
    script: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    /// JSON-lines output; defaults to the config's output path, then stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Fail when the retrain fraction exceeds this value.
    #[arg(long)]
    max_retrain_fraction: Option<f64>,
    #[arg(long)]
    wall_time: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "prefix")]
    engine: EngineArg,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, default_value_t = 2)]
    d: usize,
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
    #[arg(long, default_value_t = 0.01)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Iterations of the linear engine.
    #[arg(long, default_value_t = 4)]
    steps: usize,
    /// Invert the accept ratio; the check is expected to fail.
    #[arg(long)]
    mutate: bool,
    /// Identical points and no noise.
    #[arg(long)]
    duplicate: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EngineArg {
    Prefix,
    Linear,
}

#[derive(Args)]
struct RiskArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    ns: Vec<usize>,
    /// Defaults to the config's rho.
    #[arg(long, value_delimiter = ',')]
    rhos: Vec<f64>,
    #[arg(long)]
    output: Option<PathBuf>,
    /// Significance of the paired trend tests.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "logistic")]
    kind: DatasetKind,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 1.0)]
    radius: f64,
    #[arg(long)]
    output: PathBuf,
}

fn load_config(path: &Path, seed: Option<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn sink(path: Option<&PathBuf>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

// Checkpoints carry no generator; learning uses stream 0 and every later
// command a stream keyed by the checkpoint's progress.
fn command_rng(seed: u64, salt: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(trial_seed(seed, salt))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let seed = cli.seed;
    match cli.command {
        Command::Learn(a) => {
            let cfg = load_config(&a.config, seed)?;
            let rows = match &a.data {
                Some(p) => read_csv(p)?,
                None => synth_dataset(dataset_kind(&cfg), cfg.n, cfg.d, cfg.loss.data_radius, cfg.seed)?.rows,
            };
            let mut rng = command_rng(cfg.seed, 0);
            let (model, ck) = Checkpoint::learn(cfg, rows, &mut rng)?;
            ck.save(&a.checkpoint)?;
            println!("{}", json!({ "n": ck.config.n, "model": model }));
        }
        Command::Unlearn(a) => {
            let mut ck = Checkpoint::load(&a.checkpoint)?;
            let mut rng = command_rng(seed.unwrap_or(ck.config.seed), 1 + ck.progress());
            for row in a.row {
                let (model, rep) = ck.unlearn(row, &mut rng)?;
                println!("{}", json!({ "row": row, "retrained": rep.retrained, "queries": rep.queries_made, "model": model }));
            }
            ck.save(&a.checkpoint)?;
        }
        Command::Stream(a) => {
            let mut ck = Checkpoint::load(&a.checkpoint)?;
            let text = std::fs::read_to_string(&a.script).with_context(|| format!("reading {}", a.script.display()))?;
            let script = parse_script(&text)?;
            let mut rng = command_rng(seed.unwrap_or(ck.config.seed), 1 + ck.progress());
            for (i, req) in script.into_iter().enumerate() {
                let (model, rep) = ck.stream_step(req, &mut rng)?;
                println!("{}", json!({ "request": i + 1, "retrained": rep.retrained, "queries": rep.queries_made, "model": model }));
            }
            ck.save(&a.checkpoint)?;
        }
        Command::Bench(a) => {
            let mut cfg = load_config(&a.config, seed)?;
            cfg.record_wall_time |= a.wall_time;
            let records = run_unlearn_experiment(&cfg)?;
            let mut ok = true;
            for r in &records {
                if let Err(e) = validate_record(&serde_json::to_value(r)?) {
                    eprintln!("trial {}: {e:#}", r.trial);
                    ok = false;
                }
            }
            let mut out = sink(a.output.as_ref().or(cfg.output.as_ref()))?;
            write_jsonl(&mut *out, &records)?;
            out.flush()?;
            let summary = summarize(&records);
            eprintln!("{}", serde_json::to_string(&summary)?);
            if let Some(max) = a.max_retrain_fraction {
                if summary.retrain_fraction > max {
                    eprintln!("retrain fraction {} exceeds {max}", summary.retrain_fraction);
                    ok = false;
                }
            }
            return Ok(ok);
        }
        Command::VerifyCoupling(a) => {
            let cfg = VerifyConfig {
                engine: match a.engine {
                    EngineArg::Prefix => EngineKind::Prefix,
                    EngineArg::Linear => EngineKind::Linear,
                },
                n: a.n,
                d: a.d,
                trials: a.trials,
                alpha: a.alpha,
                sigma: a.sigma,
                steps: a.steps,
                seed: seed.unwrap_or(0),
                mutate: a.mutate,
                duplicate: a.duplicate,
            };
            let rep = verify_coupling(&cfg)?;
            println!("{}", serde_json::to_string(&rep)?);
            return Ok(rep.passed);
        }
        Command::RiskCurve(a) => {
            let cfg = load_config(&a.config, seed)?;
            let rhos = if a.rhos.is_empty() { vec![cfg.rho] } else { a.rhos };
            let points = risk_curve(&cfg, &a.ns, &rhos)?;
            let mut out = sink(a.output.as_ref())?;
            out.write_all(to_csv(&points)?.as_bytes())?;
            out.flush()?;
            let violations = trend_violations(&points, a.alpha);
            for v in &violations {
                eprintln!("risk increases from (n={}, rho={}) to (n={}, rho={}), p = {:.4}", v.from.0, v.from.1, v.to.0, v.to.1, v.p_value);
            }
            return Ok(violations.is_empty());
        }
        Command::Synth(a) => {
            let ds = synth_dataset(a.kind, a.n, a.d, a.radius, seed.unwrap_or(0))?;
            write_csv(&a.output, &ds.rows, a.kind != DatasetKind::Blobs)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
