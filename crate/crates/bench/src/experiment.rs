//! Learn, delete one random point, unlearn; one record per trial.

use std::io::Write;
use std::time::Instant;

use anyhow::Context;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unlearn_core::engine::{learn, tree_unlearn_row};
use unlearn_core::linalg::VecD;
use unlearn_core::linear::{fit_linear, unlearn_linear};
use unlearn_core::stream::{StreamMode, StreamRequest, StreamState};

use crate::config::{ExperimentConfig, Problem};
use crate::data::synth_dataset;
use crate::problems::{build_learner, dataset_kind, learn_config, linear_sigma, reference_model, risk, stream_schedule, Learner};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    pub problem: Problem,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub rho: f64,
    pub final_model: VecD,
    /// Empirical risk on the remaining training points minus that of a
    /// noiseless full-batch reference.
    pub excess_empirical_risk: f64,
    /// Mean loss on a held-out sample ten times the training size.
    pub heldout_risk: f64,
    pub retrained: bool,
    /// Retraining events; at most one outside stream problems.
    pub retrains: usize,
    pub deletions: usize,
    pub learn_queries: u64,
    pub unlearn_queries: u64,
    pub wall_time_ms: Option<f64>,
}

/// Field names every record carries, in schema order.
pub const RECORD_FIELDS: [&str; 15] = [
    "schema_version",
    "problem",
    "trial",
    "seed",
    "n",
    "rho",
    "final_model",
    "excess_empirical_risk",
    "heldout_risk",
    "retrained",
    "retrains",
    "deletions",
    "learn_queries",
    "unlearn_queries",
    "wall_time_ms",
];

/// Checks a JSON value against the record schema.
pub fn validate_record(value: &serde_json::Value) -> anyhow::Result<RunRecord> {
    let obj = value.as_object().context("record is not an object")?;
    for f in RECORD_FIELDS {
        anyhow::ensure!(obj.contains_key(f), "record lacks `{f}`");
    }
    let rec: RunRecord = serde_json::from_value(value.clone())?;
    anyhow::ensure!(rec.schema_version == SCHEMA_VERSION, "schema version {} != {SCHEMA_VERSION}", rec.schema_version);
    Ok(rec)
}

/// Per-trial seed; distinct trials get unrelated streams.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    let mut z = seed ^ (trial as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Training rows, held-out rows and spare rows for stream insertions.
pub struct TrialData {
    pub train: Vec<Vec<f64>>,
    pub heldout: Vec<Vec<f64>>,
    pub spare: Vec<Vec<f64>>,
}

/// Training rows come first, so a larger `n` extends a smaller one.
pub fn trial_data(cfg: &ExperimentConfig, data_seed: u64) -> anyhow::Result<TrialData> {
    let spare = if cfg.problem.is_stream() { cfg.deletions } else { 0 };
    let total = cfg.n + spare + 10 * cfg.n;
    let ds = synth_dataset(dataset_kind(cfg), total, cfg.d, cfg.loss.data_radius, data_seed)?;
    let mut rows = ds.rows;
    let heldout = rows.split_off(cfg.n + spare);
    let spare_rows = rows.split_off(cfg.n);
    Ok(TrialData { train: rows, heldout, spare: spare_rows })
}

struct Outcome {
    model: VecD,
    remaining: Vec<Vec<f64>>,
    retrains: usize,
    deletions: usize,
    learn_queries: u64,
    unlearn_queries: u64,
}

fn run_prefix(cfg: &ExperimentConfig, data: TrialData, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let Learner::Prefix(alg) = build_learner(cfg, &data.train)? else { unreachable!() };
    let lc = learn_config(cfg, alg.as_ref())?;
    let (_, mut state) = learn(alg.as_ref(), data.train, &lc, rng)?;
    let victim = rng.random_range(0..cfg.n);
    let (model, report) = tree_unlearn_row(alg.as_ref(), &mut state, victim, rng)?;
    let remaining = state.order.iter().map(|&r| state.rows[r].clone()).collect();
    Ok(Outcome {
        model,
        remaining,
        retrains: report.retrained as usize,
        deletions: 1,
        learn_queries: cfg.n as u64,
        unlearn_queries: report.queries_made,
    })
}

fn run_linear(cfg: &ExperimentConfig, data: TrialData, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let Learner::Linear(alg) = build_learner(cfg, &data.train)? else { unreachable!() };
    let sigma = linear_sigma(cfg, alg.as_ref())?;
    let (_, mut state) = fit_linear(alg.as_ref(), data.train, cfg.steps, sigma, rng)?;
    let learn_queries = state.learn_cost();
    let victim = rng.random_range(0..cfg.n);
    let (model, report) = unlearn_linear(alg.as_ref(), &mut state, victim, rng)?;
    let remaining = state.active.iter().map(|&r| state.rows[r].clone()).collect();
    Ok(Outcome {
        model,
        remaining,
        retrains: report.retrained as usize,
        deletions: 1,
        learn_queries,
        unlearn_queries: report.queries_made,
    })
}

/// Random interleaving of `deletions` deletions and as many insertions.
pub fn random_script(deletions: usize, spare: &[Vec<f64>], start: usize, rng: &mut impl Rng) -> Vec<StreamRequest> {
    let mut kinds: Vec<bool> = (0..2 * deletions).map(|i| i < deletions).collect();
    kinds.shuffle(rng);
    let mut inserts = spare.iter();
    let mut size = start;
    kinds
        .into_iter()
        .map(|delete| {
            if delete && size > 1 {
                let pos = rng.random_range(1..=size);
                size -= 1;
                StreamRequest::Delete(pos)
            } else {
                size += 1;
                StreamRequest::Insert(inserts.next().cloned().unwrap_or_else(|| spare[0].clone()))
            }
        })
        .collect()
}

fn run_stream(cfg: &ExperimentConfig, data: TrialData, rng: &mut ChaCha8Rng) -> anyhow::Result<Outcome> {
    let Learner::Prefix(alg) = build_learner(cfg, &data.train)? else { unreachable!() };
    let mode = if cfg.problem == Problem::StreamExact { StreamMode::Exact } else { StreamMode::Weak };
    let schedule = stream_schedule(cfg, alg.as_ref())?;
    let mut state = StreamState::with_schedule(alg.as_ref(), data.train, cfg.rho, schedule, mode, rng)?;
    let script = random_script(cfg.deletions, &data.spare, cfg.n, rng);
    let (mut retrains, mut queries, mut deletions) = (0, 0, 0);
    for req in script {
        deletions += matches!(req, StreamRequest::Delete(_)) as usize;
        let (_, rep) = state.step(alg.as_ref(), req, rng)?;
        retrains += rep.retrained as usize;
        queries += rep.queries_made;
    }
    let l = &state.learn;
    Ok(Outcome {
        model: state.model(alg.as_ref()),
        remaining: l.order.iter().map(|&r| l.rows[r].clone()).collect(),
        retrains,
        deletions,
        learn_queries: cfg.n as u64,
        unlearn_queries: queries,
    })
}

/// Retrain flag and query counts of one deletion, without risk evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeletionCost {
    pub retrains: usize,
    pub deletions: usize,
    pub learn_queries: u64,
    pub unlearn_queries: u64,
}

/// The learn, delete, unlearn part of [`run_trial`] on training rows only.
pub fn deletion_cost(cfg: &ExperimentConfig, trial: usize) -> anyhow::Result<DeletionCost> {
    let seed = trial_seed(cfg.seed, trial);
    let spare = if cfg.problem.is_stream() { cfg.deletions } else { 0 };
    let mut train = synth_dataset(dataset_kind(cfg), cfg.n + spare, cfg.d, cfg.loss.data_radius, seed)?.rows;
    let spare = train.split_off(cfg.n);
    let data = TrialData { train, heldout: Vec::new(), spare };
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let out = if cfg.problem.is_linear() {
        run_linear(cfg, data, &mut rng)?
    } else if cfg.problem.is_stream() {
        run_stream(cfg, data, &mut rng)?
    } else {
        run_prefix(cfg, data, &mut rng)?
    };
    Ok(DeletionCost {
        retrains: out.retrains,
        deletions: out.deletions,
        learn_queries: out.learn_queries,
        unlearn_queries: out.unlearn_queries,
    })
}

pub fn run_trial(cfg: &ExperimentConfig, trial: usize) -> anyhow::Result<RunRecord> {
    let started = Instant::now();
    let seed = trial_seed(cfg.seed, trial);
    let data = trial_data(cfg, seed)?;
    let heldout = data.heldout.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let out = if cfg.problem.is_linear() {
        run_linear(cfg, data, &mut rng)?
    } else if cfg.problem.is_stream() {
        run_stream(cfg, data, &mut rng)?
    } else {
        run_prefix(cfg, data, &mut rng)?
    };
    let reference = reference_model(cfg, &out.remaining)?;
    let excess = risk(cfg, &out.model, &out.remaining)? - risk(cfg, &reference, &out.remaining)?;
    let heldout_risk = risk(cfg, &out.model, &heldout)?;
    Ok(RunRecord {
        schema_version: SCHEMA_VERSION,
        problem: cfg.problem,
        trial,
        seed,
        n: cfg.n,
        rho: cfg.rho,
        final_model: out.model,
        excess_empirical_risk: excess,
        heldout_risk,
        retrained: out.retrains > 0,
        retrains: out.retrains,
        deletions: out.deletions,
        learn_queries: out.learn_queries,
        unlearn_queries: out.unlearn_queries,
        wall_time_ms: cfg.record_wall_time.then(|| started.elapsed().as_secs_f64() * 1e3),
    })
}

/// Runs every trial (in parallel); records come back ordered by trial id.
pub fn run_unlearn_experiment(cfg: &ExperimentConfig) -> anyhow::Result<Vec<RunRecord>> {
    cfg.validate()?;
    (0..cfg.trials).into_par_iter().map(|t| run_trial(cfg, t)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub retrain_fraction: f64,
    pub mean_retrains: f64,
    /// Mean unlearning queries over mean learning queries.
    pub relative_complexity: f64,
    pub mean_heldout_risk: f64,
    pub mean_excess_empirical_risk: f64,
}

pub fn summarize(records: &[RunRecord]) -> Summary {
    let n = records.len().max(1) as f64;
    let sum = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>();
    let learn = sum(&|r| r.learn_queries as f64);
    Summary {
        trials: records.len(),
        retrain_fraction: sum(&|r| r.retrained as u8 as f64) / n,
        mean_retrains: sum(&|r| r.retrains as f64) / n,
        relative_complexity: if learn > 0.0 { sum(&|r| r.unlearn_queries as f64) / learn } else { 0.0 },
        mean_heldout_risk: sum(&|r| r.heldout_risk) / n,
        mean_excess_empirical_risk: sum(&|r| r.excess_empirical_risk) / n,
    }
}

pub fn write_jsonl(out: &mut dyn Write, records: &[RunRecord]) -> anyhow::Result<()> {
    for r in records {
        serde_json::to_writer(&mut *out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
