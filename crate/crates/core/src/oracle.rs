//! Brute-force checks.
//!
//! The truncated chain is assembled transition by transition from the model
//! (not from [`crate::qsf::QsfBlocks`]) and solved by GTH state reduction,
//! which involves no subtractions. The censoring and sojourn-time identities
//! are checked on arbitrary transient generators.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::finite::{self, BlockingPolicy, TopMatrix, VariableRatePlan};
use crate::linalg::{self, Matrix};
use crate::model::{BatchService, QueueModel};
use crate::qsf::censor_state;
use crate::solver::{self, SolverOptions, StationaryDistribution};

/// Largest state space the oracle will build.
pub const MAX_STATES: usize = 50_000;

/// Behaviour of arrivals at the top level of a truncated chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapBehavior {
    /// Arrivals out of the top level are deleted; the phase is unchanged.
    Drop,
    /// A finite queue under the given blocking policy.
    Blocking(BlockingPolicy),
}

/// Band matrix with `lower` subdiagonals and `upper` superdiagonals.
struct Band {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl Band {
    fn new(n: usize, lower: usize, upper: usize) -> Self {
        Band {
            n,
            lower,
            upper,
            data: vec![0.0; n * (lower + upper + 1)],
        }
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.lower >= i && j <= i + self.upper, "({i}, {j}) outside the band");
        i * (self.lower + self.upper + 1) + j + self.lower - i
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.slot(i, j)]
    }

    fn add(&mut self, i: usize, j: usize, value: f64) {
        let s = self.slot(i, j);
        self.data[s] += value;
    }
}

/// Enumerates the off-diagonal transitions of the truncated chain.
fn for_each_transition(
    model: &QueueModel,
    level_cap: usize,
    cap: CapBehavior,
    law_at: &dyn Fn(usize) -> BatchService,
    emit: &mut dyn FnMut(usize, usize, f64),
) -> Result<()> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("the oracle needs a finite number of phases".into()))?;
    let index = |m: usize, i: usize| m * k + i;
    for m in 0..=level_cap {
        let full = m == level_cap;
        for i in 0..k {
            let rate = model.arrival.rate(i);
            let q = model.arrival.continuation(i);
            let from = index(m, i);
            match (full, cap) {
                (true, CapBehavior::Blocking(BlockingPolicy::HoldPhase)) => {
                    if i + 1 < k {
                        emit(from, index(m, i + 1), rate);
                    }
                }
                _ => {
                    if i + 1 < k && q > 0.0 {
                        emit(from, index(m, i + 1), q * rate);
                    }
                    let completion = (1.0 - q) * rate;
                    if completion > 0.0 {
                        if !full {
                            emit(from, index(m + 1, 0), completion);
                        } else if cap == CapBehavior::Blocking(BlockingPolicy::LostRestart) && i != 0 {
                            emit(from, index(m, 0), completion);
                        }
                    }
                }
            }
            if m >= 1 {
                let law = law_at(m);
                for j in 1..=law.max_batch() {
                    let p = law.prob(j);
                    if p > 0.0 {
                        emit(from, index(m.saturating_sub(j), i), p * law.rate());
                    }
                }
            }
        }
    }
    Ok(())
}

fn state_count(model: &QueueModel, level_cap: usize) -> Result<usize> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("the oracle needs a finite number of phases".into()))?;
    let states = (level_cap + 1) * k;
    if states > MAX_STATES {
        return Err(Error::CapacityExceeded {
            states,
            limit: MAX_STATES,
        });
    }
    Ok(states)
}

/// Dense generator of the truncated chain with levels `0..=level_cap`.
pub fn truncated_generator(model: &QueueModel, level_cap: usize, cap: CapBehavior) -> Result<Matrix> {
    let n = state_count(model, level_cap)?;
    let mut g = Matrix::zeros(n, n);
    let law = |_: usize| model.service.clone();
    for_each_transition(model, level_cap, cap, &law, &mut |from, to, rate| {
        if from != to {
            g[(from, to)] += rate;
            g[(from, from)] -= rate;
        }
    })?;
    Ok(g)
}

fn gth_chain(model: &QueueModel, level_cap: usize, cap: CapBehavior, law_at: &dyn Fn(usize) -> BatchService) -> Result<Vec<f64>> {
    let n = state_count(model, level_cap)?;
    let k = n / (level_cap + 1);
    let max_batch = (1..=level_cap).map(|m| law_at(m).max_batch()).max().unwrap_or(1);
    let mut band = Band::new(n, max_batch * k, k);
    for_each_transition(model, level_cap, cap, law_at, &mut |from, to, rate| {
        if from != to {
            band.add(from, to, rate);
        }
    })?;
    gth_band(band)
}

/// GTH state reduction on a band-stored rate matrix (diagonal ignored).
fn gth_band(mut p: Band) -> Result<Vec<f64>> {
    let n = p.n;
    let mut exit = vec![0.0; n];
    for s in (1..n).rev() {
        let lo_j = s.saturating_sub(p.lower);
        let lo_i = s.saturating_sub(p.upper);
        let total: f64 = (lo_j..s).map(|j| p.get(s, j)).sum();
        if total <= 0.0 {
            return Err(Error::InvalidBlocks(format!("state {s} cannot reach lower states; chain is reducible")));
        }
        exit[s] = total;
        for i in lo_i..s {
            let into = p.get(i, s);
            if into == 0.0 {
                continue;
            }
            let factor = into / total;
            for j in lo_j..s {
                if j != i {
                    let v = p.get(s, j);
                    if v != 0.0 {
                        p.add(i, j, factor * v);
                    }
                }
            }
        }
    }
    let mut pi = vec![0.0; n];
    pi[0] = 1.0;
    for s in 1..n {
        let lo_i = s.saturating_sub(p.upper);
        pi[s] = (lo_i..s).map(|i| pi[i] * p.get(i, s)).sum::<f64>() / exit[s];
    }
    let total: f64 = pi.iter().sum();
    pi.iter_mut().for_each(|x| *x /= total);
    Ok(pi)
}

/// Stationary vector of the chain truncated at `level_cap` (arrivals out of
/// the top level dropped), in `(m, i) ↦ m·k + i` order.
pub fn oracle_stationary(model: &QueueModel, level_cap: usize) -> Result<Vec<f64>> {
    let law = |_: usize| model.service.clone();
    gth_chain(model, level_cap, CapBehavior::Drop, &law)
}

/// Stationary vector of the finite queue with capacity `capacity`.
pub fn oracle_finite(model: &QueueModel, capacity: usize, policy: BlockingPolicy) -> Result<Vec<f64>> {
    let law = |_: usize| model.service.clone();
    gth_chain(model, capacity, CapBehavior::Blocking(policy), &law)
}

/// Stationary vector under a level-dependent plan, truncated at `level_cap`.
pub fn oracle_variable_rates(model: &QueueModel, plan: &VariableRatePlan, level_cap: usize) -> Result<Vec<f64>> {
    let law = |m: usize| plan.law(m).unwrap_or(&model.service).clone();
    gth_chain(model, level_cap, CapBehavior::Drop, &law)
}

/// Comparison of the product form against the truncated chain.
#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub level_cap: usize,
    /// Highest level included in the comparison.
    pub compared_levels: usize,
    pub max_abs_error: f64,
    /// Over states whose oracle probability exceeds `1e−12`.
    pub max_rel_error: f64,
    /// Analytic probability of the levels above the cap.
    pub tail_mass_bound: f64,
}

/// Compare a product-form distribution with the oracle on levels
/// `0..=compared_levels`.
pub fn compare_with_oracle(
    model: &QueueModel,
    dist: &StationaryDistribution,
    level_cap: usize,
    compared_levels: usize,
) -> Result<OracleReport> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("the oracle needs a finite number of phases".into()))?;
    let oracle = oracle_stationary(model, level_cap)?;
    let compared_levels = compared_levels.min(level_cap);
    let mut max_abs: f64 = 0.0;
    let mut max_rel: f64 = 0.0;
    for m in 0..=compared_levels {
        for i in 0..k {
            let exact = oracle[m * k + i];
            let err = (dist.stationary_prob(m, i)? - exact).abs();
            max_abs = max_abs.max(err);
            if exact > 1e-12 {
                max_rel = max_rel.max(err / exact);
            }
        }
    }
    Ok(OracleReport {
        level_cap,
        compared_levels,
        max_abs_error: max_abs,
        max_rel_error: max_rel,
        tail_mass_bound: dist.tail_mass(level_cap + 1),
    })
}

/// Solve the model and compare with the oracle.
pub fn oracle_check(
    model: &QueueModel,
    options: &SolverOptions,
    level_cap: usize,
    compared_levels: usize,
) -> Result<OracleReport> {
    let dist = solver::stationary_distribution(model, options)?;
    compare_with_oracle(model, &dist, level_cap, compared_levels)
}

/// How each top-level matrix fares against each blocking policy.
#[derive(Debug, Clone, Serialize)]
pub struct TopMatrixComparison {
    pub top: TopMatrix,
    pub policy: BlockingPolicy,
    pub max_abs_error: f64,
    pub balance_residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TopMatrixReport {
    pub capacity: usize,
    pub comparisons: Vec<TopMatrixComparison>,
}

impl TopMatrixReport {
    /// The top matrix that reproduces the given policy, if any does to `tol`.
    pub fn matching(&self, policy: BlockingPolicy, tol: f64) -> Option<TopMatrix> {
        self.comparisons
            .iter()
            .filter(|c| c.policy == policy && c.max_abs_error < tol)
            .min_by(|a, b| a.max_abs_error.total_cmp(&b.max_abs_error))
            .map(|c| c.top)
    }
}

/// Run the finite recursion from both top matrices and compare each with
/// the oracle for both blocking policies.
pub fn top_matrix_report(model: &QueueModel, capacity: usize) -> Result<TopMatrixReport> {
    let mut comparisons = Vec::new();
    for top in [TopMatrix::Printed, TopMatrix::QWeighted] {
        let solution = finite::solve_finite_with(model, capacity, top)?;
        let flat = solution.flatten();
        for policy in [BlockingPolicy::LostRestart, BlockingPolicy::HoldPhase] {
            let oracle = oracle_finite(model, capacity, policy)?;
            let generator = truncated_generator(model, capacity, CapBehavior::Blocking(policy))?;
            comparisons.push(TopMatrixComparison {
                top,
                policy,
                max_abs_error: max_abs_diff(&flat, &oracle),
                balance_residual: solution.balance_residual(&generator)?,
            });
        }
    }
    Ok(TopMatrixReport { capacity, comparisons })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Outcome of [`censoring_identity_check`].
#[derive(Debug, Clone, Serialize)]
pub struct CensoringReport {
    pub order: usize,
    pub removed_state: usize,
    /// `max |q̃⁻¹_ij − q⁻¹_ij|` over the kept states.
    pub kept_error: f64,
    /// `max |q⁻¹_sj − Σ_{r≠s} (q_sr/q_s) q̃⁻¹_rj|`.
    pub removed_error: f64,
    /// `max |q⁻¹_ij|`.
    pub scale: f64,
}

impl CensoringReport {
    pub fn max_error(&self) -> f64 {
        self.kept_error.max(self.removed_error)
    }

    pub fn relative_error(&self) -> f64 {
        self.max_error() / self.scale
    }
}

fn check_transient(q: &Matrix) -> Result<()> {
    if !q.is_square() {
        return Err(Error::DimensionMismatch {
            expected: q.rows(),
            found: q.cols(),
        });
    }
    let scale = q.max_abs().max(1.0);
    for i in 0..q.rows() {
        for j in 0..q.cols() {
            if i != j && q[(i, j)] < 0.0 {
                return Err(Error::NotTransient(format!("negative rate at ({i}, {j})")));
            }
        }
        let sum: f64 = q.row(i).iter().sum();
        if sum > 1e-12 * scale {
            return Err(Error::NotTransient(format!("row {i} sums to {sum:e} > 0")));
        }
    }
    Ok(())
}

/// `−q⁻¹`: expected time spent in `j` starting from `i` before absorption.
fn sojourn_matrix(q: &Matrix) -> Result<Matrix> {
    let inverse = linalg::invert(q).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::NotTransient("generator is singular".into()),
        other => other,
    })?;
    let tau = inverse.scaled(-1.0);
    for i in 0..tau.rows() {
        if !(tau[(i, i)] > 0.0) {
            return Err(Error::NotTransient(format!("expected sojourn in state {i} is {}", tau[(i, i)])));
        }
    }
    Ok(tau)
}

/// Remove state `s` from a transient generator and verify that the inverse
/// on the remaining states is unchanged and that row `s` of the inverse is
/// the jump-weighted average of the reduced rows.
pub fn censoring_identity_check(q: &Matrix, s: usize) -> Result<CensoringReport> {
    check_transient(q)?;
    let n = q.rows();
    if n < 2 {
        return Err(Error::InvalidArgument("censoring needs at least two states".into()));
    }
    if s >= n {
        return Err(Error::DimensionMismatch { expected: n, found: s });
    }
    let full = sojourn_matrix(q)?.scaled(-1.0);
    let reduced = censor_state(q, s)?;
    let reduced_inverse = sojourn_matrix(&reduced)?.scaled(-1.0);
    let keep: Vec<usize> = (0..n).filter(|&i| i != s).collect();
    let out_rate = -q[(s, s)];

    let mut kept_error: f64 = 0.0;
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            kept_error = kept_error.max((reduced_inverse[(a, b)] - full[(i, j)]).abs());
        }
    }
    let mut removed_error: f64 = 0.0;
    for (b, &j) in keep.iter().enumerate() {
        let mix: f64 = keep
            .iter()
            .enumerate()
            .map(|(a, &r)| q[(s, r)] / out_rate * reduced_inverse[(a, b)])
            .sum();
        removed_error = removed_error.max((full[(s, j)] - mix).abs());
    }
    Ok(CensoringReport {
        order: n,
        removed_state: s,
        kept_error,
        removed_error,
        scale: full.max_abs(),
    })
}

/// Outcome of [`sojourn_series_check`].
#[derive(Debug, Clone, Serialize)]
pub struct SojournReport {
    pub terms: usize,
    /// `max |Σ_{n<N} P^n diag(1/q_j) − (−q⁻¹)|`.
    pub max_error: f64,
    /// `max_error / max |q⁻¹|`.
    pub relative_error: f64,
    /// `‖P^N‖∞ ‖(I−P)⁻¹‖∞ max_j 1/q_j`, a bound on the omitted terms.
    pub remainder_bound: f64,
}

fn jump_chain(q: &Matrix) -> Result<(Matrix, Vec<f64>)> {
    let n = q.rows();
    let mut p = Matrix::zeros(n, n);
    let mut holding = vec![0.0; n];
    for i in 0..n {
        let out = -q[(i, i)];
        if !(out > 0.0) {
            return Err(Error::NotTransient(format!("state {i} has no exit rate")));
        }
        holding[i] = 1.0 / out;
        for j in 0..n {
            if i != j {
                p[(i, j)] = q[(i, j)] / out;
            }
        }
    }
    Ok((p, holding))
}

/// Sum the first `terms` terms of the jump-chain series for the expected
/// sojourn times and compare with `−q⁻¹`.
pub fn sojourn_series_check(q: &Matrix, terms: usize) -> Result<SojournReport> {
    check_transient(q)?;
    let tau = sojourn_matrix(q)?;
    let (p, holding) = jump_chain(q)?;
    let n = q.rows();
    let resolvent = linalg::invert(&Matrix::identity(n).sub(&p)?)
        .map_err(|_| Error::NotTransient("jump chain does not leak".into()))?;

    let mut power = Matrix::identity(n);
    let mut sum = Matrix::zeros(n, n);
    for _ in 0..terms {
        sum = sum.add(&power)?;
        power = power.mul(&p)?;
    }
    let series = sum.mul(&Matrix::from_diag(&holding))?;
    let max_holding = holding.iter().copied().fold(0.0, f64::max);
    let max_error = series.sub(&tau)?.max_abs();
    Ok(SojournReport {
        terms,
        max_error,
        relative_error: max_error / tau.max_abs(),
        remainder_bound: power.norm_inf() * resolvent.norm_inf() * max_holding,
    })
}

/// [`sojourn_series_check`] with the smallest number of terms (up to
/// `max_terms`) whose remainder bound is below `bound`.
pub fn sojourn_series_check_to(q: &Matrix, bound: f64, max_terms: usize) -> Result<SojournReport> {
    check_transient(q)?;
    let (p, holding) = jump_chain(q)?;
    let n = q.rows();
    let resolvent = linalg::invert(&Matrix::identity(n).sub(&p)?)
        .map_err(|_| Error::NotTransient("jump chain does not leak".into()))?;
    let scale = resolvent.norm_inf() * holding.iter().copied().fold(0.0, f64::max);
    let mut power = Matrix::identity(n);
    for terms in 0..=max_terms {
        if power.norm_inf() * scale < bound {
            return sojourn_series_check(q, terms);
        }
        power = power.mul(&p)?;
    }
    Err(Error::NoConvergence {
        iterations: max_terms,
        residual: power.norm_inf() * scale,
    })
}

/// A random transient generator: off-diagonal rates uniform on `(0, 1)`,
/// and an extra leak uniform on `(0, 0.5)` from a random nonempty subset of
/// the states.
pub fn random_transient_generator(order: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = Matrix::zeros(order, order);
    for i in 0..order {
        for j in 0..order {
            if i != j {
                q[(i, j)] = rng.gen_range(f64::EPSILON..1.0);
            }
        }
    }
    let mut leaking: Vec<bool> = (0..order).map(|_| rng.gen_bool(0.5)).collect();
    if !leaking.iter().any(|&l| l) {
        leaking[rng.gen_range(0..order)] = true;
    }
    for i in 0..order {
        let leak = if leaking[i] {
            rng.gen_range(f64::EPSILON..0.5)
        } else {
            0.0
        };
        let out: f64 = (0..order).filter(|&j| j != i).map(|j| q[(i, j)]).sum();
        q[(i, i)] = -(out + leak);
    }
    q
}
