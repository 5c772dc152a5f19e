//! Isotropic Gaussian sampling and the rejection-plus-reflection maximal
//! coupling between `N(u, σ²I)` and `N(u', σ²I)`.
//!
//! Given `r ~ N(u, σ²I)`, [`couple`] keeps `r` with probability
//! `min(1, φ_{u'}(r) / φ_u(r))` and otherwise reflects it across the
//! hyperplane bisecting `u` and `u'`. The output is distributed as
//! `N(u', σ²I)` and differs from `r` with probability exactly
//! `TV(N(u, σ²I), N(u', σ²I))`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::linalg::{self, check_dim, VecD};
use crate::{Error, Result};

/// Per-coordinate standard deviation of the Gaussian noise.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NoiseScale(f64);

impl NoiseScale {
    pub fn new(sigma: f64) -> Result<Self> {
        if sigma.is_finite() && sigma >= 0.0 {
            Ok(Self(sigma))
        } else {
            Err(Error::InvalidNoise(sigma))
        }
    }

    /// Noiseless debug mode.
    pub const ZERO: NoiseScale = NoiseScale(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0.0
    }
}

/// Accept rule used by [`couple_with`].
///
/// `InvertedRatio` swaps the numerator and denominator of the acceptance
/// ratio. It is not a valid coupling and exists so the verification harness
/// can show that it detects a broken engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CouplingMode {
    #[default]
    Maximal,
    InvertedRatio,
}

/// Result of one rejection-sample/reflect step.
#[derive(Debug, Clone, PartialEq)]
pub struct CouplingOutcome {
    pub accepted: bool,
    pub response: VecD,
}

/// `log(φ_{N(u_new,σ²I)}(r) / φ_{N(u,σ²I)}(r))`, i.e.
/// `(‖r−u‖² − ‖r−u_new‖²) / (2σ²)`.
pub fn log_density_ratio(u: &[f64], u_new: &[f64], r: &[f64], sigma: NoiseScale) -> Result<f64> {
    check_dim(u.len(), u_new.len())?;
    check_dim(u.len(), r.len())?;
    if sigma.is_zero() {
        return Err(Error::ZeroNoise(sigma.value()));
    }
    let s2 = sigma.value() * sigma.value();
    // Expanded form: (‖r−u‖² − ‖r−u'‖²) = Σ (u'−u)(2r − u − u').
    let num: f64 = u
        .iter()
        .zip(u_new)
        .zip(r)
        .map(|((a, b), x)| (b - a) * (2.0 * x - a - b))
        .sum();
    Ok(num / (2.0 * s2))
}

/// Householder reflection of `x` taking `N(u, σ²I)` onto `N(u_new, σ²I)`:
/// `u_new + (I − 2eeᵀ)(x − u)` with `e = (u_new − u)/‖u_new − u‖`.
///
/// When `u = u_new` this is the identity.
pub fn reflect(u: &[f64], u_new: &[f64], x: &[f64]) -> VecD {
    let e = linalg::sub(u_new, u);
    let len = linalg::norm(&e);
    let centered = linalg::sub(x, u);
    if len == 0.0 {
        return linalg::add(u_new, &centered);
    }
    let proj = linalg::dot(&e, &centered) / (len * len);
    let mut out = linalg::add(u_new, &centered);
    linalg::axpy(&mut out, -2.0 * proj, &e);
    out
}

/// Maximal coupling step: reuse `r` when the rejection test accepts,
/// otherwise reflect it. `unif` must be drawn uniformly on `[0, 1)`.
pub fn couple(
    u: &[f64],
    u_new: &[f64],
    r: &[f64],
    sigma: NoiseScale,
    unif: f64,
) -> Result<CouplingOutcome> {
    couple_with(CouplingMode::Maximal, u, u_new, r, sigma, unif)
}

pub fn couple_with(
    mode: CouplingMode,
    u: &[f64],
    u_new: &[f64],
    r: &[f64],
    sigma: NoiseScale,
    unif: f64,
) -> Result<CouplingOutcome> {
    check_dim(u.len(), u_new.len())?;
    check_dim(u.len(), r.len())?;
    if sigma.is_zero() {
        return Ok(if u == u_new {
            CouplingOutcome { accepted: true, response: r.to_vec() }
        } else {
            CouplingOutcome { accepted: false, response: u_new.to_vec() }
        });
    }
    let mut log_ratio = log_density_ratio(u, u_new, r, sigma)?;
    if mode == CouplingMode::InvertedRatio {
        log_ratio = -log_ratio;
    }
    if unif.ln() <= log_ratio {
        Ok(CouplingOutcome { accepted: true, response: r.to_vec() })
    } else {
        Ok(CouplingOutcome { accepted: false, response: reflect(u, u_new, r) })
    }
}

/// Total variation between `N(u, σ²I)` and `N(u', σ²I)` with
/// `‖u − u'‖ = delta_norm`: `2Φ(δ/(2σ)) − 1 = erf(δ / (2√2 σ))`.
pub fn gaussian_tv(delta_norm: f64, sigma: NoiseScale) -> Result<f64> {
    if sigma.is_zero() {
        return Err(Error::ZeroNoise(sigma.value()));
    }
    if !(delta_norm >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative distance {delta_norm}")));
    }
    if delta_norm.is_infinite() {
        return Ok(1.0);
    }
    Ok(erf(delta_norm / (2.0 * std::f64::consts::SQRT_2 * sigma.value())).clamp(0.0, 1.0))
}

/// `mean + σ·ξ` with `ξ` i.i.d. standard normal; returns `mean` unchanged
/// when `σ = 0` (no randomness is consumed in that case).
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[f64], sigma: NoiseScale, rng: &mut R) -> VecD {
    if sigma.is_zero() {
        return mean.to_vec();
    }
    mean.iter()
        .map(|m| {
            let z: f64 = rng.sample(StandardNormal);
            m + sigma.value() * z
        })
        .collect()
}
