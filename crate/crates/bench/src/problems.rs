//! Builds learners, datasets and risk functionals from an experiment config.

use anyhow::bail;
use unlearn_core::engine::{LearnConfig, PrefixSumLearner};
use unlearn_core::linalg::{self, VecD};
use unlearn_core::linear::{linear_noise_scale, lloyd_step, FedAvg, LinearLearner, LocalGradientSteps, Lloyd};
use unlearn_core::sco::{
    embedded_radius, jl_dimension_lipschitz, jl_dimension_smooth, ConvexBody, DualAveraging, GlmLoss, JlMethod, JlSketch, LossModel,
    StepSize, VrFrankWolfe,
};
use unlearn_core::tree::NoiseSchedule;
use unlearn_core::{stream, NoiseScale};

use crate::config::{ExperimentConfig, LossKind, Problem};
use crate::data::DatasetKind;

pub type DynPrefix = Box<dyn PrefixSumLearner + Send + Sync>;
pub type DynLinear = Box<dyn LinearLearner + Send + Sync>;

pub enum Learner {
    Prefix(DynPrefix),
    Linear(DynLinear),
}

/// Seed of the JL sketch; shared by all trials of one config.
pub fn sketch_seed(cfg: &ExperimentConfig) -> u64 {
    cfg.seed.wrapping_add(0x0005_EED5_0F00_0001)
}

pub fn dataset_kind(cfg: &ExperimentConfig) -> DatasetKind {
    match cfg.problem {
        Problem::LinearFedavg | Problem::Lloyd => DatasetKind::Blobs,
        _ => match cfg.loss.kind {
            LossKind::Logistic => DatasetKind::Logistic,
            LossKind::Hinge => DatasetKind::Hinge,
            LossKind::ClippedQuadratic => DatasetKind::Regression,
        },
    }
}

/// Sketch dimension used by the JL problems.
pub fn sketch_dim(cfg: &ExperimentConfig) -> usize {
    cfg.k.unwrap_or_else(|| match cfg.problem {
        Problem::JlSmoothGlm => jl_dimension_smooth(cfg.n, cfg.rho),
        _ => jl_dimension_lipschitz(cfg.n, cfg.rho),
    })
}

fn smooth_loss(cfg: &ExperimentConfig, radius: f64) -> anyhow::Result<GlmLoss> {
    let loss = cfg.loss.glm(radius)?;
    if loss.smoothness().is_none() {
        bail!("{:?} needs a smooth loss, got {:?}", cfg.problem, cfg.loss.kind);
    }
    Ok(loss)
}

/// Builds the learner; `rows` seeds data-dependent initialisations (Lloyd).
pub fn build_learner(cfg: &ExperimentConfig, rows: &[Vec<f64>]) -> anyhow::Result<Learner> {
    let r = cfg.loss.data_radius;
    let d = cfg.d;
    Ok(match cfg.problem {
        Problem::VrfwSco => Learner::Prefix(Box::new(VrFrankWolfe::new(smooth_loss(cfg, r)?, cfg.geometry.body(d)?)?)),
        Problem::DaSco => {
            Learner::Prefix(Box::new(DualAveraging::tuned(cfg.loss.glm(r)?, cfg.geometry.body(d)?, cfg.n, cfg.rho)))
        }
        Problem::JlSmoothGlm => {
            let k = sketch_dim(cfg);
            let sketch = JlSketch::gaussian(k, d, sketch_seed(cfg))?;
            let inner = VrFrankWolfe::new(smooth_loss(cfg, embedded_radius(r))?, cfg.geometry.body(k)?)?;
            Learner::Prefix(Box::new(JlMethod::new(sketch, inner, r)?))
        }
        Problem::JlLipschitzGlm => {
            let k = sketch_dim(cfg);
            let sketch = JlSketch::gaussian(k, d, sketch_seed(cfg))?;
            let loss = cfg.loss.glm(embedded_radius(r))?;
            let inner = DualAveraging::tuned(loss, cfg.geometry.body(k)?, cfg.n, cfg.rho);
            Learner::Prefix(Box::new(JlMethod::new(sketch, inner, r)?))
        }
        Problem::StreamWeak | Problem::StreamExact => Learner::Prefix(Box::new(DualAveraging::new(
            cfg.loss.glm(r)?,
            cfg.geometry.body(d)?,
            StepSize::DoublingHorizon { rho: cfg.rho },
        ))),
        Problem::LinearFedavg => Learner::Linear(Box::new(FedAvg::new(
            d,
            cfg.clip,
            cfg.n,
            LocalGradientSteps { dim: d, ..Default::default() },
        )?)),
        Problem::Lloyd => {
            if rows.len() < cfg.clusters {
                bail!("need at least {} rows to seed the centers", cfg.clusters);
            }
            Learner::Linear(Box::new(Lloyd::new(rows[..cfg.clusters].to_vec(), r)?))
        }
    })
}

/// Tree noise for prefix problems: calibrated for `n` points, or the
/// configured override.
pub fn learn_config(cfg: &ExperimentConfig, alg: &(dyn PrefixSumLearner + Send + Sync)) -> anyhow::Result<LearnConfig> {
    Ok(match cfg.sigma {
        Some(s) => LearnConfig::with_sigma(NoiseScale::new(s)?, cfg.rho),
        None => LearnConfig::calibrated(alg, cfg.n, cfg.rho)?,
    })
}

pub fn stream_schedule(cfg: &ExperimentConfig, alg: &(dyn PrefixSumLearner + Send + Sync)) -> anyhow::Result<NoiseSchedule> {
    Ok(match cfg.sigma {
        Some(s) => NoiseSchedule::constant(NoiseScale::new(s)?),
        None => stream::anytime_schedule(alg.sensitivity(), cfg.rho)?,
    })
}

pub fn linear_sigma(cfg: &ExperimentConfig, alg: &(dyn LinearLearner + Send + Sync)) -> anyhow::Result<NoiseScale> {
    Ok(match cfg.sigma {
        Some(s) => NoiseScale::new(s)?,
        None => linear_noise_scale(alg.sensitivity(), cfg.steps, cfg.rho)?,
    })
}

/// Mean loss of `model` over `rows`, in the original feature space.
pub fn risk(cfg: &ExperimentConfig, model: &[f64], rows: &[Vec<f64>]) -> anyhow::Result<f64> {
    if rows.is_empty() {
        bail!("risk of an empty sample");
    }
    let n = rows.len() as f64;
    Ok(match cfg.problem {
        Problem::LinearFedavg => rows.iter().map(|x| 0.5 * linalg::dist_sq(model, x)).sum::<f64>() / n,
        Problem::Lloyd => {
            let centers: Vec<&[f64]> = model.chunks_exact(cfg.d).collect();
            rows.iter()
                .map(|x| centers.iter().map(|c| linalg::dist_sq(c, x)).fold(f64::INFINITY, f64::min))
                .sum::<f64>()
                / n
        }
        _ => {
            let loss = cfg.loss.glm(cfg.loss.data_radius)?;
            rows.iter().map(|z| loss.value(model, z)).sum::<f64>() / n
        }
    })
}

/// Noiseless reference optimum of the empirical objective over `rows`,
/// used for the excess empirical risk.
pub fn reference_model(cfg: &ExperimentConfig, rows: &[Vec<f64>]) -> anyhow::Result<VecD> {
    Ok(match cfg.problem {
        Problem::LinearFedavg => linalg::mean(rows).unwrap_or_else(|| linalg::zeros(cfg.d)),
        Problem::Lloyd => {
            let mut c: Vec<VecD> = rows[..cfg.clusters.min(rows.len())].to_vec();
            for _ in 0..50 {
                c = lloyd_step(rows, &c)?;
            }
            c.concat()
        }
        _ => {
            let loss = cfg.loss.glm(cfg.loss.data_radius)?;
            let body = cfg.geometry.body(cfg.d)?;
            full_batch_minimizer(&loss, &body, rows, 400)
        }
    })
}

fn full_gradient(loss: &GlmLoss, w: &[f64], rows: &[Vec<f64>]) -> VecD {
    let mut g = linalg::zeros(w.len());
    for z in rows {
        linalg::add_assign(&mut g, &loss.gradient(w, z));
    }
    linalg::scale(&g, 1.0 / rows.len() as f64)
}

/// Projected gradient descent with step `1/H` for smooth losses, averaged
/// projected subgradient descent otherwise.
pub fn full_batch_minimizer(loss: &GlmLoss, body: &ConvexBody, rows: &[Vec<f64>], iters: usize) -> VecD {
    let mut w = body.center();
    match loss.smoothness() {
        Some(h) => {
            for _ in 0..iters {
                let g = full_gradient(loss, &w, rows);
                linalg::axpy(&mut w, -1.0 / h, &g);
                w = body.project(&w);
            }
            w
        }
        None => {
            let mut avg = linalg::zeros(w.len());
            let step = body.diameter() / (loss.lipschitz() * (iters as f64).sqrt());
            for _ in 0..iters {
                let g = full_gradient(loss, &w, rows);
                linalg::axpy(&mut w, -step, &g);
                w = body.project(&w);
                linalg::axpy(&mut avg, 1.0 / iters as f64, &w);
            }
            avg
        }
    }
}
