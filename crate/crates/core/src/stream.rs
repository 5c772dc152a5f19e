//! Insert/delete streams over an anytime tree whose capacity doubles on
//! demand. Level `ℓ` gets budget `ρ/2^{ℓ+1}` and noise `σ_ℓ = 8B/ρ_ℓ`.
//!
//! Weak mode keeps arrival order and only guarantees that the model output
//! matches a fresh run. Exact mode keeps the processing order a uniform
//! permutation: an insertion lands at a uniform position and the point it
//! displaces moves to the end.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{CouplingMode, NoiseScale};
use crate::engine::{check_rho, replace_and_couple, run_steps, tree_unlearn, LearnConfig, LearnState, PrefixSumLearner, UnlearnReport};
use crate::linalg::VecD;
use crate::tree::NoiseSchedule;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StreamRequest {
    Insert(Vec<f64>),
    /// 1-based position in the current processing order.
    Delete(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum StreamMode {
    #[default]
    Weak,
    Exact,
}

/// `ρ_ℓ = ρ/2^{ℓ+1}`.
pub fn level_budget(rho: f64, level: u32) -> f64 {
    rho / 2f64.powi(level as i32 + 1)
}

/// `σ_ℓ = 8B/ρ_ℓ`.
pub fn level_sigma(sensitivity: f64, rho: f64, level: u32) -> f64 {
    8.0 * sensitivity / level_budget(rho, level)
}

/// Geometric schedule with leaf noise `16B/ρ`.
pub fn anytime_schedule(sensitivity: f64, rho: f64) -> Result<NoiseSchedule> {
    check_rho(rho)?;
    Ok(NoiseSchedule::Geometric { leaf_sigma: NoiseScale::new(level_sigma(sensitivity, rho, 0))? })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamState {
    pub mode: StreamMode,
    pub learn: LearnState,
    /// Requests processed so far.
    pub requests: usize,
}

impl StreamState {
    /// Learns the initial dataset. Exact mode shuffles it first.
    pub fn new<A, R>(alg: &A, rows: Vec<Vec<f64>>, rho: f64, mode: StreamMode, rng: &mut R) -> Result<Self>
    where
        A: PrefixSumLearner + ?Sized,
        R: Rng + ?Sized,
    {
        let schedule = anytime_schedule(alg.sensitivity(), rho)?;
        Self::with_schedule(alg, rows, rho, schedule, mode, rng)
    }

    /// As [`StreamState::new`] with an explicit schedule (e.g. zero noise).
    pub fn with_schedule<A, R>(
        alg: &A,
        rows: Vec<Vec<f64>>,
        rho: f64,
        schedule: NoiseSchedule,
        mode: StreamMode,
        rng: &mut R,
    ) -> Result<Self>
    where
        A: PrefixSumLearner + ?Sized,
        R: Rng + ?Sized,
    {
        let config = LearnConfig { rho, schedule, permute: mode == StreamMode::Exact, coupling: CouplingMode::Maximal };
        let (_, learn) = crate::engine::learn(alg, rows, &config, rng)?;
        Ok(StreamState { mode, learn, requests: 0 })
    }

    pub fn len(&self) -> usize {
        self.learn.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learn.is_empty()
    }

    pub fn model<A: PrefixSumLearner + ?Sized>(&self, alg: &A) -> VecD {
        self.learn.final_model(alg)
    }

    /// Dispatches on the configured mode.
    pub fn step<A, R>(&mut self, alg: &A, request: StreamRequest, rng: &mut R) -> Result<(VecD, UnlearnReport)>
    where
        A: PrefixSumLearner + ?Sized,
        R: Rng + ?Sized,
    {
        match self.mode {
            StreamMode::Weak => weak_stream_step(alg, self, request, rng),
            StreamMode::Exact => exact_stream_step(alg, self, request, rng),
        }
    }
}

fn append_row<A, R>(alg: &A, state: &mut LearnState, row: Vec<f64>, rng: &mut R) -> Result<u64>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    state.rows.push(row);
    state.order.push(state.rows.len() - 1);
    run_steps(alg, state, rng)
}

fn delete<A, R>(alg: &A, state: &mut StreamState, position: usize, rng: &mut R) -> Result<(VecD, UnlearnReport)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    if state.len() <= 1 {
        return Err(Error::InvalidArgument("a deletion may not empty the dataset".into()));
    }
    tree_unlearn(alg, &mut state.learn, position, rng)
}

/// Insertions append one step; deletions run the coupling walk.
pub fn weak_stream_step<A, R>(
    alg: &A,
    state: &mut StreamState,
    request: StreamRequest,
    rng: &mut R,
) -> Result<(VecD, UnlearnReport)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    state.requests += 1;
    match request {
        StreamRequest::Insert(row) => {
            let queries = append_row(alg, &mut state.learn, row, rng)?;
            Ok((state.model(alg), UnlearnReport { queries_made: queries, ..Default::default() }))
        }
        StreamRequest::Delete(position) => delete(alg, state, position, rng),
    }
}

/// Insertions pick a uniform position `j` in `1..=size+1`. Unless `j` is
/// the end, the new point replaces the one at `j` through the coupling walk
/// and the displaced point is appended as a fresh last step.
pub fn exact_stream_step<A, R>(
    alg: &A,
    state: &mut StreamState,
    request: StreamRequest,
    rng: &mut R,
) -> Result<(VecD, UnlearnReport)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    state.requests += 1;
    match request {
        StreamRequest::Insert(row) => {
            let learn = &mut state.learn;
            let size = learn.len();
            let j = rng.random_range(1..=size + 1);
            let mut report = UnlearnReport::default();
            if j == size + 1 {
                report.queries_made = append_row(alg, learn, row, rng)?;
                return Ok((state.model(alg), report));
            }
            let displaced = learn.order[j - 1];
            let history = &learn.models[..j];
            let g = alg.increment(history, &learn.rows[displaced]);
            let g_new = alg.increment(history, &row);
            report.queries_made = 2;
            learn.rows.push(row);
            let new_id = learn.rows.len() - 1;
            replace_and_couple(alg, learn, j, new_id, &g, &g_new, rng, &mut report)?;
            learn.order.push(displaced);
            report.queries_made += run_steps(alg, learn, rng)?;
            Ok((state.model(alg), report))
        }
        StreamRequest::Delete(position) => delete(alg, state, position, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{PrefixQuery, UpdateRule};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    struct RunningSum;

    impl PrefixQuery for RunningSum {
        fn query_dim(&self) -> usize {
            1
        }
        fn sensitivity(&self) -> f64 {
            2.0
        }
        fn increment(&self, _h: &[VecD], z: &[f64]) -> VecD {
            z.to_vec()
        }
    }

    impl UpdateRule for RunningSum {
        fn initial_model(&self) -> VecD {
            vec![0.0]
        }
        fn update(&self, _h: &[VecD], r: &[f64]) -> VecD {
            r.to_vec()
        }
    }

    fn zero() -> NoiseSchedule {
        NoiseSchedule::constant(NoiseScale::ZERO)
    }

    #[test]
    fn budgets_and_sigmas() {
        assert_relative_eq!(level_sigma(1.0, 1.0, 0), 16.0);
        assert_relative_eq!(level_sigma(1.0, 1.0, 1), 32.0);
        let total: f64 = (0..60).map(|l| level_budget(0.3, l)).sum();
        assert!(total <= 0.3);
        let s = anytime_schedule(0.5, 0.25).unwrap();
        for l in 0..10 {
            assert_relative_eq!(s.sigma_at(l).value(), 8.0 * 0.5 / level_budget(0.25, l));
        }
    }

    #[test]
    fn noiseless_stream_sums_are_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut st = StreamState::with_schedule(&RunningSum, vec![vec![1.0]], 1.0, zero(), StreamMode::Weak, &mut rng).unwrap();
        let mut total = 1.0;
        for i in 0..100 {
            let x = (i % 7) as f64 - 3.0;
            total += x;
            let (m, rep) = st.step(&RunningSum, StreamRequest::Insert(vec![x]), &mut rng).unwrap();
            assert_eq!(m, vec![total]);
            assert_eq!(rep.queries_made, 1);
            assert!(!rep.retrained);
        }
        assert_eq!(st.learn.tree.capacity(), 128);
        assert_eq!(st.requests, 100);
    }

    #[test]
    fn insert_only_never_retrains() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut st = StreamState::new(&RunningSum, vec![vec![0.5]; 4], 0.5, StreamMode::Weak, &mut rng).unwrap();
        let mut queries = 0;
        for _ in 0..200 {
            let (_, rep) = st.step(&RunningSum, StreamRequest::Insert(vec![0.1]), &mut rng).unwrap();
            assert_eq!(rep.rejection_samplings, 0);
            queries += rep.queries_made;
        }
        assert_eq!(queries, 200);
        assert_eq!(st.len(), 204);
        // realized per-level noise follows the budget split
        for l in 0..=st.learn.tree.height() {
            let b = crate::tree::NodeId::new(st.learn.tree.height() - l, 0).unwrap();
            assert_relative_eq!(st.learn.tree.sigma_at(b).value(), level_sigma(2.0, 0.5, l));
        }
    }

    #[test]
    fn alternating_requests_keep_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for mode in [StreamMode::Weak, StreamMode::Exact] {
            let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64 * 0.1]).collect();
            let mut st = StreamState::new(&RunningSum, rows, 0.5, mode, &mut rng).unwrap();
            for i in 0..30 {
                st.step(&RunningSum, StreamRequest::Insert(vec![0.2]), &mut rng).unwrap();
                st.step(&RunningSum, StreamRequest::Delete(1 + i % 9), &mut rng).unwrap();
                assert_eq!(st.len(), 8);
                assert_eq!(st.learn.tree.filled(), 8);
            }
        }
    }

    #[test]
    fn cannot_empty_the_dataset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut st = StreamState::new(&RunningSum, vec![vec![1.0]], 0.5, StreamMode::Exact, &mut rng).unwrap();
        assert!(st.step(&RunningSum, StreamRequest::Delete(1), &mut rng).is_err());
    }

    #[test]
    fn exact_noiseless_duplicate_insert_accepts_everywhere() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rows = vec![vec![2.0]; 6];
        let mut st = StreamState::with_schedule(&RunningSum, rows, 1.0, zero(), StreamMode::Exact, &mut rng).unwrap();
        for _ in 0..40 {
            let (m, rep) = st.step(&RunningSum, StreamRequest::Insert(vec![2.0]), &mut rng).unwrap();
            assert!(!rep.retrained);
            assert_eq!(rep.accepted_nodes, rep.rejection_samplings);
            assert_eq!(m, vec![2.0 * st.len() as f64]);
        }
    }

    #[test]
    fn exact_noiseless_insert_matches_fresh_run_on_final_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let mut st = StreamState::with_schedule(&RunningSum, rows, 1.0, zero(), StreamMode::Exact, &mut rng).unwrap();
        let mut saw_interior = false;
        for i in 0..30 {
            let (_, rep) = st.step(&RunningSum, StreamRequest::Insert(vec![10.0 + i as f64]), &mut rng).unwrap();
            saw_interior |= rep.rejection_samplings > 0;
            let mut fresh = LearnState::new(&RunningSum, st.learn.rows.clone(), st.learn.order.clone(), &LearnConfig {
                rho: 1.0,
                schedule: zero(),
                permute: false,
                coupling: CouplingMode::Maximal,
            })
            .unwrap();
            crate::engine::tree_learn(&RunningSum, &mut fresh, 1, &mut rng).unwrap();
            for (a, b) in st.learn.models.iter().zip(&fresh.models) {
                assert_relative_eq!(a[0], b[0], max_relative = 1e-12);
            }
        }
        assert!(saw_interior);
    }
}
