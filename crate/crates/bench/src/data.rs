//! Synthetic datasets and CSV input/output.

use std::path::Path;
use std::str::FromStr;

use anyhow::{bail, Context};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use unlearn_core::linalg::{self, VecD};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Labels in {−1, +1} drawn from the logistic model of a planted `w*`.
    Logistic,
    /// `sign⟨w*, x⟩` with 5% of labels flipped.
    Hinge,
    /// `⟨w*, x⟩ + N(0, 0.1²)`.
    Regression,
    /// Three Gaussian blobs, no labels.
    Blobs,
}

impl FromStr for DatasetKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "logistic" => DatasetKind::Logistic,
            "hinge" => DatasetKind::Hinge,
            "regression" => DatasetKind::Regression,
            "blobs" => DatasetKind::Blobs,
            other => bail!("unknown dataset kind `{other}`"),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// GLM rows are `[x_1, …, x_d, y]`; blob rows are points.
    pub rows: Vec<Vec<f64>>,
    /// Planted model (GLM kinds) or blob centers laid out back to back.
    pub planted: VecD,
}

/// Norm of the planted GLM model relative to `1/radius`.
const SIGNAL: f64 = 4.0;

fn gaussian(rng: &mut ChaCha8Rng, d: usize) -> VecD {
    (0..d).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(rng: &mut ChaCha8Rng, d: usize) -> VecD {
    loop {
        let g = gaussian(rng, d);
        let n = linalg::norm(&g);
        if n > 0.0 {
            return linalg::scale(&g, 1.0 / n);
        }
    }
}

/// Feature vector with `‖x‖ ≤ radius`.
fn feature(rng: &mut ChaCha8Rng, d: usize, radius: f64) -> VecD {
    let g = gaussian(rng, d);
    linalg::scale(&linalg::clip_norm(&linalg::scale(&g, 1.0 / (d as f64).sqrt()), 1.0), radius)
}

/// Deterministic in `seed`. Rows of GLM kinds are `[x, y]` with
/// `‖x‖ ≤ radius`; blob points are clipped to `radius`.
pub fn synth_dataset(kind: DatasetKind, n: usize, d: usize, radius: f64, seed: u64) -> anyhow::Result<Dataset> {
    if n == 0 || d == 0 {
        bail!("dataset needs n, d >= 1 (got {n}, {d})");
    }
    if !(radius > 0.0) {
        bail!("radius must be positive, got {radius}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if kind == DatasetKind::Blobs {
        let k = 3;
        let centers: Vec<VecD> = (0..k).map(|_| linalg::scale(&unit(&mut rng, d), 0.6 * radius)).collect();
        let rows = (0..n)
            .map(|i| {
                let c = &centers[i % k];
                let p: VecD = c.iter().map(|m| m + 0.1 * radius * rng.sample::<f64, _>(StandardNormal)).collect();
                linalg::clip_norm(&p, radius)
            })
            .collect();
        return Ok(Dataset { rows, planted: centers.concat() });
    }
    let w_star = linalg::scale(&unit(&mut rng, d), SIGNAL / radius);
    let rows = (0..n)
        .map(|_| {
            let mut x = feature(&mut rng, d, radius);
            let m = linalg::dot(&w_star, &x);
            let y = match kind {
                DatasetKind::Logistic => {
                    if rng.random::<f64>() < 1.0 / (1.0 + (-m).exp()) {
                        1.0
                    } else {
                        -1.0
                    }
                }
                DatasetKind::Hinge => {
                    let s = if m >= 0.0 { 1.0 } else { -1.0 };
                    if rng.random::<f64>() < 0.05 {
                        -s
                    } else {
                        s
                    }
                }
                DatasetKind::Regression => m * radius / SIGNAL + 0.1 * rng.sample::<f64, _>(StandardNormal),
                DatasetKind::Blobs => unreachable!(),
            };
            x.push(y);
            x
        })
        .collect();
    let planted = if kind == DatasetKind::Regression { linalg::scale(&w_star, radius / SIGNAL) } else { w_star };
    Ok(Dataset { rows, planted })
}

/// Reads a headed CSV of decimal floats.
pub fn read_csv(path: &Path) -> anyhow::Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("{}: record {}", path.display(), i + 1))?;
        let row = rec
            .iter()
            .map(|f| f.trim().parse::<f64>().with_context(|| format!("{}: record {}: bad number `{f}`", path.display(), i + 1)))
            .collect::<anyhow::Result<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        bail!("{} holds no rows", path.display());
    }
    Ok(rows)
}

/// Writes rows under a header `x1, …, xd[, y]`.
pub fn write_csv(path: &Path, rows: &[Vec<f64>], labelled: bool) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    let width = rows.first().map_or(0, Vec::len);
    let features = if labelled { width.saturating_sub(1) } else { width };
    let mut header: Vec<String> = (1..=features).map(|i| format!("x{i}")).collect();
    if labelled {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let a = synth_dataset(DatasetKind::Logistic, 50, 3, 1.0, 9).unwrap();
        let b = synth_dataset(DatasetKind::Logistic, 50, 3, 1.0, 9).unwrap();
        assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
        let c = synth_dataset(DatasetKind::Logistic, 50, 3, 1.0, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn glm_rows_respect_radius_and_labels() {
        for kind in [DatasetKind::Logistic, DatasetKind::Hinge] {
            let ds = synth_dataset(kind, 500, 4, 2.0, 1).unwrap();
            for r in &ds.rows {
                assert_eq!(r.len(), 5);
                assert!(linalg::norm(&r[..4]) <= 2.0 + 1e-12);
                assert!(r[4] == 1.0 || r[4] == -1.0);
            }
        }
        let blobs = synth_dataset(DatasetKind::Blobs, 30, 2, 1.0, 1).unwrap();
        assert!(blobs.rows.iter().all(|r| r.len() == 2 && linalg::norm(r) <= 1.0 + 1e-12));
        assert_eq!(blobs.planted.len(), 6);
    }

    #[test]
    fn unknown_kind_is_an_error() {
        assert!("gaussian".parse::<DatasetKind>().is_err());
        assert_eq!("blobs".parse::<DatasetKind>().unwrap(), DatasetKind::Blobs);
        assert!(synth_dataset(DatasetKind::Blobs, 0, 2, 1.0, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let ds = synth_dataset(DatasetKind::Regression, 20, 3, 1.0, 2).unwrap();
        write_csv(&path, &ds.rows, true).unwrap();
        assert_eq!(read_csv(&path).unwrap(), ds.rows);
    }
}
