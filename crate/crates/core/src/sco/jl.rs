//! Johnson-Lindenstrauss method: solve the GLM on randomly projected
//! features, then lift the low-dimensional model back with `Φᵀ`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::engine::{PrefixQuery, UpdateRule};
use crate::linalg::{self, check_dim, VecD};
use crate::{Error, Result};

/// `k × d` Gaussian sketch with i.i.d. `N(0, 1/k)` entries, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlSketch {
    pub k: usize,
    pub d: usize,
    pub seed: u64,
    pub matrix: Vec<f64>,
}

impl JlSketch {
    pub fn gaussian(k: usize, d: usize, seed: u64) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("sketch needs k, d >= 1 (got {k}, {d})")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0 / (k as f64).sqrt()).expect("valid normal");
        let matrix = (0..k * d).map(|_| normal.sample(&mut rng)).collect();
        Ok(JlSketch { k, d, seed, matrix })
    }

    pub fn identity(d: usize) -> Self {
        let mut matrix = vec![0.0; d * d];
        for i in 0..d {
            matrix[i * d + i] = 1.0;
        }
        JlSketch { k: d, d, seed: 0, matrix }
    }

    /// `Φx`.
    pub fn apply(&self, x: &[f64]) -> Result<VecD> {
        check_dim(self.d, x.len())?;
        Ok(self.matrix.chunks_exact(self.d).map(|row| linalg::dot(row, x)).collect())
    }

    /// `Φᵀy`.
    pub fn lift(&self, y: &[f64]) -> Result<VecD> {
        check_dim(self.k, y.len())?;
        let mut out = linalg::zeros(self.d);
        for (row, &c) in self.matrix.chunks_exact(self.d).zip(y) {
            linalg::axpy(&mut out, c, row);
        }
        Ok(out)
    }
}

/// Projects the feature part of each `[x, y]` row; labels are kept.
pub fn jl_embed(rows: &[Vec<f64>], sketch: &JlSketch) -> Result<Vec<Vec<f64>>> {
    rows.iter()
        .map(|row| {
            if row.len() != sketch.d + 1 {
                return Err(Error::DimensionMismatch { expected: sketch.d + 1, got: row.len() });
            }
            let mut out = sketch.apply(&row[..sketch.d])?;
            out.push(row[sketch.d]);
            Ok(out)
        })
        .collect()
}

pub fn jl_lift(w_tilde: &[f64], sketch: &JlSketch) -> Result<VecD> {
    sketch.lift(w_tilde)
}

/// Lipschitz and smoothness constants for the embedded problem:
/// `(2G‖X‖, 2H‖X‖²)` from link constants `G`, `H` and data radius `‖X‖`.
pub fn rescaled_constants(link_lipschitz: f64, link_smoothness: f64, data_radius: f64) -> (f64, f64) {
    (2.0 * link_lipschitz * data_radius, 2.0 * link_smoothness * data_radius * data_radius)
}

/// Sketch dimension `⌈(nρ)^{2/3}⌉` for smooth GLMs.
pub fn jl_dimension_smooth(n: usize, rho: f64) -> usize {
    ((n as f64 * rho).powf(2.0 / 3.0).ceil() as usize).max(1)
}

/// Sketch dimension `⌈√(nρ)⌉` for Lipschitz GLMs.
pub fn jl_dimension_lipschitz(n: usize, rho: f64) -> usize {
    ((n as f64 * rho).sqrt().ceil() as usize).max(1)
}

/// Feature radius `√2‖X‖` to declare for the inner GLM loss.
pub fn embedded_radius(data_radius: f64) -> f64 {
    std::f64::consts::SQRT_2 * data_radius
}

/// Runs `inner` (built for dimension `k`) on embedded points. Embedded
/// features are clipped to `√2‖X‖`, so an inner GLM declared with data
/// radius `√2‖X‖` has constants within [`rescaled_constants`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JlMethod<A> {
    pub sketch: JlSketch,
    pub inner: A,
    pub feature_clip: f64,
}

impl<A: PrefixQuery + UpdateRule> JlMethod<A> {
    pub fn new(sketch: JlSketch, inner: A, data_radius: f64) -> Result<Self> {
        check_dim(sketch.k, inner.query_dim())?;
        Ok(JlMethod { sketch, inner, feature_clip: embedded_radius(data_radius) })
    }

    pub fn embed_point(&self, row: &[f64]) -> VecD {
        let d = self.sketch.d;
        let mut out = linalg::clip_norm(&self.sketch.apply(&row[..d]).expect("row width checked"), self.feature_clip);
        out.extend_from_slice(&row[d..]);
        out
    }
}

impl<A: PrefixQuery + UpdateRule> PrefixQuery for JlMethod<A> {
    fn query_dim(&self) -> usize {
        self.inner.query_dim()
    }

    fn sensitivity(&self) -> f64 {
        self.inner.sensitivity()
    }

    fn label(&self) -> &str {
        "jl-method"
    }

    fn increment(&self, history: &[VecD], point: &[f64]) -> VecD {
        self.inner.increment(history, &self.embed_point(point))
    }
}

impl<A: PrefixQuery + UpdateRule> UpdateRule for JlMethod<A> {
    fn initial_model(&self) -> VecD {
        self.inner.initial_model()
    }

    fn update(&self, history: &[VecD], response: &[f64]) -> VecD {
        self.inner.update(history, response)
    }

    fn select(&self, models: &[VecD]) -> VecD {
        self.sketch.lift(&self.inner.select(models)).expect("inner model has sketch dimension")
    }
}
