use serde::{Deserialize, Serialize};

use super::LinearQuery;
use crate::engine::UpdateRule;
use crate::linalg::{self, VecD};
use crate::{Error, Result};

/// Index of the closest center; ties go to the lowest index.
pub fn nearest_center<'a, I>(centers: I, z: &[f64]) -> usize
where
    I: IntoIterator<Item = &'a [f64]>,
{
    let mut best = (0, f64::INFINITY);
    for (i, c) in centers.into_iter().enumerate() {
        let d = linalg::dist_sq(c, z);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

/// One exact Lloyd iteration. A center without points stays where it is.
pub fn lloyd_step(points: &[VecD], centers: &[VecD]) -> Result<Vec<VecD>> {
    if centers.is_empty() {
        return Err(Error::InvalidArgument("need at least one center".into()));
    }
    let d = centers[0].len();
    let mut sums = vec![linalg::zeros(d); centers.len()];
    let mut counts = vec![0usize; centers.len()];
    for p in points {
        linalg::check_dim(d, p.len())?;
        let c = nearest_center(centers.iter().map(Vec::as_slice), p);
        linalg::add_assign(&mut sums[c], p);
        counts[c] += 1;
    }
    Ok(sums
        .into_iter()
        .zip(&counts)
        .zip(centers)
        .map(|((s, &n), old)| if n == 0 { old.clone() } else { linalg::scale(&s, 1.0 / n as f64) })
        .collect())
}

/// Lloyd's k-means as a linear query. The model is the `k` centers laid out
/// back to back; a point contributes `[z, 1]` to the block of its nearest
/// center, so the query holds per-cluster sums and counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lloyd {
    pub k: usize,
    pub dim: usize,
    /// Points are clipped to this norm.
    pub radius: f64,
    pub init: VecD,
    /// Noisy counts at or below this keep the previous center.
    pub min_count: f64,
}

impl Lloyd {
    pub fn new(init: Vec<VecD>, radius: f64) -> Result<Self> {
        let k = init.len();
        if k == 0 || !(radius > 0.0) {
            return Err(Error::InvalidArgument(format!("lloyd needs k >= 1 and radius > 0 (got {k}, {radius})")));
        }
        let dim = init[0].len();
        for c in &init {
            linalg::check_dim(dim, c.len())?;
        }
        Ok(Lloyd { k, dim, radius, init: init.concat(), min_count: 0.5 })
    }

    pub fn centers(&self, model: &[f64]) -> Vec<VecD> {
        model.chunks_exact(self.dim).map(<[f64]>::to_vec).collect()
    }
}

impl LinearQuery for Lloyd {
    fn query_dim(&self) -> usize {
        self.k * (self.dim + 1)
    }

    /// `2·√(R² + 1)`.
    fn sensitivity(&self) -> f64 {
        2.0 * (self.radius * self.radius + 1.0).sqrt()
    }

    fn label(&self) -> &str {
        "lloyd"
    }

    fn contribution(&self, history: &[VecD], point: &[f64]) -> VecD {
        let w = &history[history.len() - 1];
        let z = linalg::clip_norm(point, self.radius);
        let c = nearest_center(w.chunks_exact(self.dim), &z);
        let mut out = linalg::zeros(self.query_dim());
        let block = c * (self.dim + 1);
        out[block..block + self.dim].copy_from_slice(&z);
        out[block + self.dim] = 1.0;
        out
    }
}

impl UpdateRule for Lloyd {
    fn initial_model(&self) -> VecD {
        self.init.clone()
    }

    fn update(&self, history: &[VecD], response: &[f64]) -> VecD {
        let w = &history[history.len() - 1];
        let mut next = Vec::with_capacity(w.len());
        for (c, block) in response.chunks_exact(self.dim + 1).enumerate() {
            let count = block[self.dim];
            if count > self.min_count {
                next.extend(linalg::clip_norm(&linalg::scale(&block[..self.dim], 1.0 / count), self.radius));
            } else {
                next.extend_from_slice(&w[c * self.dim..(c + 1) * self.dim]);
            }
        }
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::NoiseScale;
    use crate::linear::fit_linear;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn fixed_point_and_single_cluster() {
        let c = vec![vec![0.0, 0.0], vec![3.0, 3.0]];
        assert_eq!(lloyd_step(&c, &c).unwrap(), c);
        let pts = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]];
        assert_eq!(lloyd_step(&pts, &[vec![9.0, 9.0]]).unwrap(), vec![vec![1.0, 1.0]]);
    }

    #[test]
    fn empty_cluster_keeps_center_and_ties_go_low() {
        let pts = vec![vec![0.0], vec![0.2]];
        let out = lloyd_step(&pts, &[vec![0.1], vec![5.0]]).unwrap();
        assert_relative_eq!(out[0][0], 0.1);
        assert_eq!(out[1], vec![5.0]);
        // 1.0 is equidistant from both centers
        assert_eq!(nearest_center([&[0.0][..], &[2.0][..]], &[1.0]), 0);
        assert_eq!(lloyd_step(&[vec![1.0]], &[vec![0.0], vec![2.0]]).unwrap(), vec![vec![1.0], vec![2.0]]);
    }

    /// All assignments of `pts` to two clusters; returns the best centers.
    fn brute_force_two_means(pts: &[VecD]) -> Vec<VecD> {
        let n = pts.len();
        let mut best = (f64::INFINITY, vec![]);
        for mask in 1..(1u32 << n) - 1 {
            let (a, b): (Vec<_>, Vec<_>) = (0..n).partition(|i| mask >> i & 1 == 1);
            let ma = linalg::mean(&a.iter().map(|&i| pts[i].clone()).collect::<Vec<_>>()).unwrap();
            let mb = linalg::mean(&b.iter().map(|&i| pts[i].clone()).collect::<Vec<_>>()).unwrap();
            let cost: f64 = a.iter().map(|&i| linalg::dist_sq(&pts[i], &ma)).sum::<f64>()
                + b.iter().map(|&i| linalg::dist_sq(&pts[i], &mb)).sum::<f64>();
            if cost < best.0 {
                best = (cost, vec![ma, mb]);
            }
        }
        best.1
    }

    #[test]
    fn separated_blobs_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut pts = vec![];
        for i in 0..16 {
            let c = if i % 2 == 0 { [-4.0, 0.0] } else { [4.0, 1.0] };
            pts.push(c.iter().map(|m| m + 0.3 * rng.sample::<f64, _>(StandardNormal)).collect::<VecD>());
        }
        let mut centers = vec![pts[0].clone(), pts[2].clone()];
        for _ in 0..5 {
            centers = lloyd_step(&pts, &centers).unwrap();
        }
        let mut oracle = brute_force_two_means(&pts);
        oracle.sort_by(|a, b| a[0].total_cmp(&b[0]));
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        for (c, o) in centers.iter().zip(&oracle) {
            assert!(linalg::dist(c, o) < 1e-9);
        }
    }

    #[test]
    fn noiseless_linear_run_matches_lloyd() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<VecD> = (0..20).map(|_| (0..2).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let init = vec![pts[0].clone(), pts[1].clone(), pts[2].clone()];
        let alg = Lloyd::new(init.clone(), 2.0).unwrap();
        let (w, _) = fit_linear(&alg, pts.clone(), 4, NoiseScale::ZERO, &mut rng).unwrap();
        let mut c = init;
        for _ in 0..4 {
            c = lloyd_step(&pts, &c).unwrap();
        }
        for (a, b) in alg.centers(&w).iter().zip(&c) {
            assert!(linalg::dist(a, b) < 1e-12);
        }
    }

    #[test]
    fn swap_sensitivity_holds() {
        let alg = Lloyd::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]], 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let a: VecD = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: VecD = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            let h = [alg.init.clone()];
            assert!(linalg::dist(&alg.contribution(&h, &a), &alg.contribution(&h, &b)) <= alg.sensitivity());
        }
    }
}
