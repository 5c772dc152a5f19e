//! Small dense-vector helpers. Vectors are plain `Vec<f64>`; dimensions are
//! at most a few hundred, so no BLAS is involved.

use crate::{Error, Result};

/// A model, gradient or query response in `R^d`.
pub type VecD = Vec<f64>;

pub fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

pub fn add(a: &[f64], b: &[f64]) -> VecD {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn sub(a: &[f64], b: &[f64]) -> VecD {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], c: f64) -> VecD {
    a.iter().map(|x| x * c).collect()
}

/// `a += c * b`
pub fn axpy(a: &mut [f64], c: f64, b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += c * y;
    }
}

pub fn add_assign(a: &mut [f64], b: &[f64]) {
    axpy(a, 1.0, b);
}

/// Rescales `a` onto the ball of radius `radius` if it lies outside.
pub fn clip_norm(a: &[f64], radius: f64) -> VecD {
    let n = norm(a);
    if n > radius && n > 0.0 {
        scale(a, radius / n)
    } else {
        a.to_vec()
    }
}

pub fn zeros(d: usize) -> VecD {
    vec![0.0; d]
}

/// Componentwise mean of a nonempty set of equal-length vectors.
pub fn mean(vs: &[VecD]) -> Option<VecD> {
    let first = vs.first()?;
    let mut acc = zeros(first.len());
    for v in vs {
        add_assign(&mut acc, v);
    }
    Some(scale(&acc, 1.0 / vs.len() as f64))
}
