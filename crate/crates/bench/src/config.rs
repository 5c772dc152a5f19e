use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};
use unlearn_core::sco::{ConvexBody, GlmLoss, Link};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Problem {
    VrfwSco,
    DaSco,
    JlSmoothGlm,
    JlLipschitzGlm,
    LinearFedavg,
    Lloyd,
    StreamWeak,
    StreamExact,
}

impl Problem {
    pub fn is_linear(self) -> bool {
        matches!(self, Problem::LinearFedavg | Problem::Lloyd)
    }

    pub fn is_stream(self) -> bool {
        matches!(self, Problem::StreamWeak | Problem::StreamExact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeometryKind {
    Ball,
    Box,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub kind: GeometryKind,
    /// Ball radius or box half-width.
    pub radius: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        GeometryConfig { kind: GeometryKind::Ball, radius: 1.0 }
    }
}

impl GeometryConfig {
    pub fn body(&self, dim: usize) -> anyhow::Result<ConvexBody> {
        Ok(match self.kind {
            GeometryKind::Ball => ConvexBody::ball(dim, self.radius)?,
            GeometryKind::Box => ConvexBody::cube(dim, self.radius)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Logistic,
    Hinge,
    ClippedQuadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Declared feature radius `‖X‖`.
    #[serde(default = "one")]
    pub data_radius: f64,
    /// Residual clip level of the clipped quadratic.
    #[serde(default = "one")]
    pub clip: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { kind: LossKind::Logistic, data_radius: 1.0, clip: 1.0 }
    }
}

impl LossConfig {
    pub fn link(&self) -> Link {
        match self.kind {
            LossKind::Logistic => Link::Logistic,
            LossKind::Hinge => Link::Hinge,
            LossKind::ClippedQuadratic => Link::ClippedQuadratic { clip: self.clip },
        }
    }

    pub fn glm(&self, data_radius: f64) -> anyhow::Result<GlmLoss> {
        Ok(GlmLoss::new(self.link(), data_radius)?)
    }
}

fn one() -> f64 {
    1.0
}

fn default_trials() -> usize {
    20
}

fn default_steps() -> usize {
    16
}

fn default_clusters() -> usize {
    3
}

fn default_deletions() -> usize {
    20
}

fn default_clip() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    pub d: usize,
    pub rho: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub loss: LossConfig,
    /// JSON-lines destination of `bench`; stdout when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Iterations `T` of the linear-query problems.
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Sketch dimension of the JL problems; the rate-optimal default when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "default_clusters")]
    pub clusters: usize,
    /// FedAvg clip radius.
    #[serde(default = "default_clip")]
    pub clip: f64,
    /// Deletions per stream (as many insertions are interleaved).
    #[serde(default = "default_deletions")]
    pub deletions: usize,
    /// Overrides the calibrated noise scale (0 disables noise).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    /// Record wall time; off by default so records are reproducible byte
    /// for byte.
    #[serde(default)]
    pub record_wall_time: bool,
}

impl ExperimentConfig {
    pub fn new(problem: Problem, n: usize, d: usize, rho: f64) -> Self {
        ExperimentConfig {
            problem,
            n,
            d,
            rho,
            seed: 0,
            trials: default_trials(),
            geometry: GeometryConfig::default(),
            loss: LossConfig::default(),
            output: None,
            steps: default_steps(),
            k: None,
            clusters: default_clusters(),
            clip: default_clip(),
            deletions: default_deletions(),
            sigma: None,
            record_wall_time: false,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if !(self.rho > 0.0 && self.rho <= 1.0) {
            bail!("rho must lie in (0, 1], got {}", self.rho);
        }
        if self.n < 2 {
            bail!("n must be at least 2, got {}", self.n);
        }
        if self.d == 0 {
            bail!("d must be positive");
        }
        if self.trials == 0 {
            bail!("trials must be positive");
        }
        if self.problem.is_linear() && self.steps == 0 {
            bail!("steps must be positive");
        }
        if self.problem == Problem::Lloyd && (self.clusters == 0 || self.clusters > self.n) {
            bail!("clusters must lie in 1..=n, got {}", self.clusters);
        }
        if let Some(s) = self.sigma {
            if !(s >= 0.0 && s.is_finite()) {
                bail!("sigma must be finite and non-negative, got {s}");
            }
        }
        if !(self.geometry.radius > 0.0) || !(self.loss.data_radius > 0.0) || !(self.clip > 0.0) {
            bail!("radii and clip levels must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> anyhow::Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn to_toml(&self) -> anyhow::Result<String> {
        Ok(toml::to_string(self)?)
    }
}
