//! Tree-based learning over bounded-sensitivity prefix-sum queries and
//! single-deletion unlearning by maximally coupling the binary trees of the
//! old and the updated dataset.
//!
//! Learning processes a (permuted) dataset one point per step: the increment
//! `p_t(w_1..w_t, z_t)` is appended to a [`PrefixTree`], the noisy prefix sum
//! over `[1..t]` is released and the update rule produces `w_{t+1}`.
//!
//! Deleting the point at position `j` first undoes the last step and moves
//! the last point `z'` into position `j`. Only the noisy nodes on the path
//! from leaf `j` to the root used the deleted point explicitly; each is
//! re-targeted from `N(u, σ²I)` to `N(u − g + g', σ²I)` with the maximal
//! coupling. The first rejection reflects that node's response and training
//! resumes right after the node's interval.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{couple_with, CouplingMode, NoiseScale};
use crate::linalg::{self, check_dim, VecD};
use crate::tree::{NoiseSchedule, PrefixTree};
use crate::{Error, Result};

/// Increment family `p_t` of a prefix-sum query.
pub trait PrefixQuery {
    /// Dimension of the increments and responses.
    fn query_dim(&self) -> usize;

    /// Declared bound on `‖p_t(h, z) − p_t(h, z')‖` over histories and points.
    fn sensitivity(&self) -> f64;

    fn label(&self) -> &str {
        "prefix-query"
    }

    /// `p_t(w_1..w_t, z)`; `t = history.len()`.
    fn increment(&self, history: &[VecD], point: &[f64]) -> VecD;
}

/// Update family `U_t` and selector of an iterative learner.
pub trait UpdateRule {
    fn initial_model(&self) -> VecD;

    /// `w_{t+1} = U_t(w_1..w_t, response)`; `t = history.len()`.
    fn update(&self, history: &[VecD], response: &[f64]) -> VecD;

    /// Final output from `w_1..w_{T+1}`. Defaults to the last iterate.
    fn select(&self, models: &[VecD]) -> VecD {
        models.last().cloned().unwrap_or_default()
    }
}

/// A learner expressible as prefix-sum query release.
pub trait PrefixSumLearner: PrefixQuery + UpdateRule {}

impl<T: PrefixQuery + UpdateRule + ?Sized> PrefixSumLearner for T {}

/// `σ = 8·B·log₂(n)/ρ`, the per-node noise making the whole tree release
/// `ρ`-TV stable.
pub fn noise_scale(sensitivity: f64, n: usize, rho: f64) -> Result<NoiseScale> {
    check_rho(rho)?;
    if !(sensitivity > 0.0) || n < 2 {
        return Err(Error::InvalidArgument(format!(
            "noise scale needs B > 0 and n >= 2 (got B={sensitivity}, n={n})"
        )));
    }
    NoiseScale::new(8.0 * sensitivity * (n as f64).log2() / rho)
}

pub(crate) fn check_rho(rho: f64) -> Result<()> {
    if rho > 0.0 && rho <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidRho(rho))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub rho: f64,
    pub schedule: NoiseSchedule,
    /// Shuffle the dataset before the first step.
    pub permute: bool,
    #[serde(default)]
    pub coupling: CouplingMode,
}

impl LearnConfig {
    /// Constant-σ tree calibrated by [`noise_scale`] for `n` points.
    pub fn calibrated<A: PrefixQuery + ?Sized>(alg: &A, n: usize, rho: f64) -> Result<Self> {
        Ok(LearnConfig {
            rho,
            schedule: NoiseSchedule::constant(noise_scale(alg.sensitivity(), n, rho)?),
            permute: true,
            coupling: CouplingMode::Maximal,
        })
    }

    /// Fixed σ, bypassing calibration (σ = 0 gives the noiseless mode).
    pub fn with_sigma(sigma: NoiseScale, rho: f64) -> Self {
        LearnConfig { rho, schedule: NoiseSchedule::constant(sigma), permute: true, coupling: CouplingMode::Maximal }
    }
}

/// Everything learning leaves behind and unlearning needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnState {
    pub tree: PrefixTree,
    /// Every row ever supplied, addressed by row id. Deleted rows stay here
    /// but are no longer referenced by `order`.
    pub rows: Vec<Vec<f64>>,
    /// Processing order: position `t` (1-based) holds row id `order[t − 1]`.
    pub order: Vec<usize>,
    /// `w_1 ..= w_{filled + 1}`.
    pub models: Vec<VecD>,
    pub rho: f64,
    #[serde(default)]
    pub coupling: CouplingMode,
}

impl LearnState {
    /// Fresh state with the given processing order and nothing learned yet.
    pub fn new<A: PrefixSumLearner + ?Sized>(
        alg: &A,
        rows: Vec<Vec<f64>>,
        order: Vec<usize>,
        config: &LearnConfig,
    ) -> Result<Self> {
        check_rho(config.rho)?;
        if order.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        if let Some(&bad) = order.iter().find(|&&i| i >= rows.len()) {
            return Err(Error::UnknownRow(bad));
        }
        let tree = PrefixTree::for_len(order.len(), alg.query_dim(), config.schedule)?;
        Ok(LearnState {
            tree,
            rows,
            order,
            models: vec![alg.initial_model()],
            rho: config.rho,
            coupling: config.coupling,
        })
    }

    /// Current dataset size.
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based position of an original row id.
    pub fn position_of_row(&self, row: usize) -> Option<usize> {
        self.order.iter().position(|&r| r == row).map(|p| p + 1)
    }

    pub fn point_at(&self, position: usize) -> &[f64] {
        &self.rows[self.order[position - 1]]
    }

    pub fn final_model<A: UpdateRule + ?Sized>(&self, alg: &A) -> VecD {
        alg.select(&self.models)
    }
}

/// Outcome of one unlearning (or replacement) request.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UnlearnReport {
    pub retrained: bool,
    /// Coupled nodes whose response was kept.
    pub accepted_nodes: usize,
    /// Rejection tests performed.
    pub rejection_samplings: usize,
    /// First step recomputed by retraining.
    pub resume_leaf: Option<usize>,
    /// Unit computations (single-point query evaluations).
    pub queries_made: u64,
}

/// Runs steps `filled + 1 ..= len`. Returns the number of unit queries.
pub(crate) fn run_steps<A, R>(alg: &A, state: &mut LearnState, rng: &mut R) -> Result<u64>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    let mut queries = 0;
    for t in state.tree.filled() + 1..=state.order.len() {
        debug_assert_eq!(state.models.len(), t);
        let row = state.order[t - 1];
        let u = alg.increment(&state.models[..t], &state.rows[row]);
        check_dim(state.tree.dim(), u.len())?;
        queries += 1;
        let leaf = state.tree.anytime_append(&u, rng)?;
        let response = state.tree.get_prefix_sum(t)?;
        let next = alg.update(&state.models[..t], &response);
        let node = state.tree.node_mut(leaf)?;
        node.w = Some(state.models[t - 1].clone());
        node.z = Some(row);
        state.models.push(next);
    }
    Ok(queries)
}

/// Learns from step `t0` onward (`t0 = 1` for a fresh run). Anything the
/// state holds from step `t0` on is discarded first; `w_{t0}` must already
/// be known. Returns the selected model and the number of unit queries.
pub fn tree_learn<A, R>(alg: &A, state: &mut LearnState, t0: usize, rng: &mut R) -> Result<(VecD, u64)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    if t0 == 0 || t0 > state.order.len() || t0 > state.models.len() {
        return Err(Error::OutOfRange { index: t0, max: state.order.len().min(state.models.len()) });
    }
    state.tree.truncate(t0 - 1)?;
    state.models.truncate(t0);
    let queries = run_steps(alg, state, rng)?;
    Ok((state.final_model(alg), queries))
}

/// Permutes `rows` (when configured) and learns from scratch.
pub fn learn<A, R>(alg: &A, rows: Vec<Vec<f64>>, config: &LearnConfig, rng: &mut R) -> Result<(VecD, LearnState)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    let mut order: Vec<usize> = (0..rows.len()).collect();
    if config.permute {
        use rand::seq::SliceRandom;
        order.shuffle(rng);
    }
    let mut state = LearnState::new(alg, rows, order, config)?;
    let (model, _) = tree_learn(alg, &mut state, 1, rng)?;
    Ok((model, state))
}

/// Replaces the point at position `j` by row `new_row`, coupling every noisy
/// node on the leaf-to-root path. `g`/`g'` are the old and new increments at
/// step `j`. Retrains from the end of the first rejected node's interval.
#[allow(clippy::too_many_arguments)]
pub(crate) fn replace_and_couple<A, R>(
    alg: &A,
    state: &mut LearnState,
    j: usize,
    new_row: usize,
    g: &[f64],
    g_new: &[f64],
    rng: &mut R,
    report: &mut UnlearnReport,
) -> Result<()>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    let s = state.tree.leaf(j)?;
    let delta = linalg::sub(g_new, g);
    state.tree.adjust_path(s, &delta)?;
    {
        let leaf = state.tree.node_mut(s)?;
        leaf.u = g_new.to_vec();
        leaf.z = Some(new_row);
    }
    state.order[j - 1] = new_row;

    let path: Vec<_> = state.tree.path_to_root(s).collect();
    for b in path {
        if !b.is_noisy() {
            continue;
        }
        let node = state.tree.get(b)?;
        // Nodes left incomplete by the shrink are never released.
        let Some(r) = node.r.as_ref() else { continue };
        let u_new = node.u.clone();
        let u_old = linalg::sub(&u_new, &delta);
        let sigma = state.tree.sigma_at(b);
        let unif: f64 = rng.random();
        let outcome = couple_with(state.coupling, &u_old, &u_new, r, sigma, unif)?;
        report.rejection_samplings += 1;
        if outcome.accepted {
            report.accepted_nodes += 1;
            continue;
        }
        state.tree.node_mut(b)?.r = Some(outcome.response);
        let (_, end) = state.tree.interval(b);
        state.tree.truncate(end)?;
        state.models.truncate(end);
        let response = state.tree.get_prefix_sum(end)?;
        let next = alg.update(&state.models[..end], &response);
        state.models.push(next);
        report.retrained = true;
        report.resume_leaf = Some(end + 1);
        report.queries_made += run_steps(alg, state, rng)?;
        break;
    }
    Ok(())
}

/// Deletes the point at 1-based position `j`.
pub fn tree_unlearn<A, R>(alg: &A, state: &mut LearnState, j: usize, rng: &mut R) -> Result<(VecD, UnlearnReport)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    let n = state.tree.filled();
    if n != state.order.len() {
        return Err(Error::InvalidArgument(format!(
            "state holds {} points but only {n} were learned",
            state.order.len()
        )));
    }
    if j == 0 || j > n {
        return Err(Error::OutOfRange { index: j, max: n });
    }
    if n == 1 {
        return Err(Error::EmptyModel);
    }
    let history = &state.models[..j];
    let g = alg.increment(history, state.point_at(j));
    let g_new = alg.increment(history, state.point_at(n));
    let mut report = UnlearnReport { queries_made: 2, ..Default::default() };

    // Undo the last step.
    let last = state.tree.leaf(n)?;
    let u_last = state.tree.get(last)?.u.clone();
    state.tree.adjust_path(last, &linalg::scale(&u_last, -1.0))?;
    state.tree.remove_last_leaf()?;
    state.models.truncate(n);
    let moved = state.order.pop().expect("nonempty order");

    if j < n {
        replace_and_couple(alg, state, j, moved, &g, &g_new, rng, &mut report)?;
    }
    Ok((state.final_model(alg), report))
}

/// Deletes an original row id, resolved through the stored permutation.
pub fn tree_unlearn_row<A, R>(alg: &A, state: &mut LearnState, row: usize, rng: &mut R) -> Result<(VecD, UnlearnReport)>
where
    A: PrefixSumLearner + ?Sized,
    R: Rng + ?Sized,
{
    let j = state.position_of_row(row).ok_or(Error::UnknownRow(row))?;
    tree_unlearn(alg, state, j, rng)
}

/// Mean unlearning query count divided by the learning query count.
pub fn relative_unlearning_complexity(reports: &[UnlearnReport], learn_cost: u64) -> Result<f64> {
    if reports.is_empty() {
        return Err(Error::InvalidArgument("no unlearning reports".into()));
    }
    if learn_cost == 0 {
        return Err(Error::InvalidArgument("learn cost must be positive".into()));
    }
    let total: u64 = reports.iter().map(|r| r.queries_made).sum();
    Ok(total as f64 / reports.len() as f64 / learn_cost as f64)
}
