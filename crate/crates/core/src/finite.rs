//! Finite capacity and level-dependent service.
//!
//! Both solvers use the level recursion `π_m = −(Σ_i π_{m+i} Ã_i^{(m)}) Q̃_m⁻¹`:
//! `Q̃_m` is level `m` censored with the higher levels taboo (a service
//! completion re-enters the level at phase 0), and `Ã_i^{(m)}` collects the
//! rates from level `m+i` that first hit level `m`. At level 0 nothing lies
//! below, so `Q̃_0 = W_0` and `Ã_i^{(0)} = μ P(Y ≥ i)·I`.
//!
//! For capacity `S` the recursion is started from the null vector of the
//! top-level matrix `Q̃_S`. For a level-dependent plan it is started from the
//! geometric tail of the homogeneous law above the threshold.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::model::{BatchService, CoxianArrival, QueueModel};
use crate::solver::{self, SolverOptions};

/// What an arrival does when the system is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingPolicy {
    /// The customer is lost and the arrival process restarts at phase 0.
    #[default]
    LostRestart,
    /// Phases advance at their full rates without producing customers; the
    /// last phase waits until a service completion frees a place.
    HoldPhase,
}

/// Candidate forms of the top-level matrix `Q̃_S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopMatrix {
    /// Off-diagonal phase rates `λ_i`, last row `(μ, 0, …, −μ)`. This is the
    /// censored top level under [`BlockingPolicy::HoldPhase`].
    Printed,
    /// Phase rates `q_iλ_i` with lost arrivals returning to phase 0. This is
    /// the censored top level under [`BlockingPolicy::LostRestart`].
    QWeighted,
}

impl BlockingPolicy {
    pub fn top_matrix(self) -> TopMatrix {
        match self {
            BlockingPolicy::LostRestart => TopMatrix::QWeighted,
            BlockingPolicy::HoldPhase => TopMatrix::Printed,
        }
    }
}

fn finite_phases(arrival: &CoxianArrival) -> Result<usize> {
    arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("finite-capacity solves need a finite number of phases".into()))
}

/// `Q̃_m` for `m ≥ 1` with service rate `mu` at level `m`.
fn level_q(arrival: &CoxianArrival, mu: f64) -> Result<Matrix> {
    let k = finite_phases(arrival)?;
    let mut q = Matrix::zeros(k, k);
    for i in 0..k {
        let rate = arrival.rate(i);
        if i == 0 {
            q[(0, 0)] = -rate;
        } else {
            q[(i, 0)] = mu;
            q[(i, i)] = -(rate + mu);
        }
        if i + 1 < k {
            q[(i, i + 1)] = arrival.continuation(i) * rate;
        }
    }
    Ok(q)
}

/// `W_0`: level 0 with the up-transitions removed.
fn floor_q(arrival: &CoxianArrival) -> Result<Matrix> {
    let k = finite_phases(arrival)?;
    let mut q = Matrix::zeros(k, k);
    for i in 0..k {
        q[(i, i)] = -arrival.rate(i);
        if i + 1 < k {
            q[(i, i + 1)] = arrival.continuation(i) * arrival.rate(i);
        }
    }
    Ok(q)
}

/// `Ã_i^{(m)}`: rates from level `m+i` (served by `law`) into level `m`.
fn level_a(k: usize, law: &BatchService, i: usize, target: usize) -> Matrix {
    let mu = law.rate();
    if target == 0 {
        return Matrix::identity(k).scaled(mu * law.tail(i));
    }
    let mut a = Matrix::identity(k).scaled(mu * law.prob(i));
    a[(0, 0)] = mu * law.tail(i);
    for r in 1..k {
        a[(r, 0)] = mu * law.tail(i + 1);
    }
    a
}

/// The top-level matrix `Q̃_S`.
pub fn top_level_matrix(model: &QueueModel, form: TopMatrix) -> Result<Matrix> {
    let arrival = &model.arrival;
    let k = finite_phases(arrival)?;
    let mu = model.service.rate();
    let mut q = Matrix::zeros(k, k);
    match form {
        TopMatrix::Printed => {
            for i in 0..k {
                let rate = if i + 1 < k { arrival.rate(i) } else { 0.0 };
                if i + 1 < k {
                    q[(i, i + 1)] = rate;
                }
                if i == 0 {
                    q[(0, 0)] = -rate;
                } else {
                    q[(i, 0)] = mu;
                    q[(i, i)] = -(rate + mu);
                }
            }
        }
        TopMatrix::QWeighted => {
            for i in 0..k {
                let rate = arrival.rate(i);
                let cont = arrival.continuation(i);
                if i + 1 < k {
                    q[(i, i + 1)] = cont * rate;
                }
                if i == 0 {
                    q[(0, 0)] = -cont * rate;
                } else {
                    q[(i, 0)] = mu + (1.0 - cont) * rate;
                    q[(i, i)] = -(rate + mu);
                }
            }
        }
    }
    Ok(q)
}

/// Null vector of a conservative generator, normalized so entry 0 is 1.
fn null_vector(q: &Matrix) -> Result<Vec<f64>> {
    let k = q.rows();
    if k == 1 {
        return Ok(vec![1.0]);
    }
    let mut sub = Matrix::zeros(k - 1, k - 1);
    for i in 1..k {
        for j in 1..k {
            sub[(i - 1, j - 1)] = q[(i, j)];
        }
    }
    let rhs: Vec<f64> = (1..k).map(|j| -q[(0, j)]).collect();
    let tail = linalg::solve_left(&sub, &rhs)?;
    Ok(std::iter::once(1.0).chain(tail).collect())
}

/// One downward step of the recursion: `π_m` from the levels above it.
/// `above(l)` returns `π_l` and the law serving level `l`; sources
/// `target + 1..=target + max_jump` are consulted.
fn step_down(
    arrival: &CoxianArrival,
    target: usize,
    above: &dyn Fn(usize) -> (Vec<f64>, BatchService),
    max_jump: usize,
    level_mu: f64,
) -> Result<Vec<f64>> {
    let k = finite_phases(arrival)?;
    let mut rhs = vec![0.0; k];
    for i in 1..=max_jump {
        let (pi, law) = above(target + i);
        if i <= law.max_batch() {
            let a = level_a(k, &law, i, target);
            for (r, x) in a.left_mul(&pi)?.into_iter().enumerate() {
                rhs[r] -= x;
            }
        }
    }
    let q = if target == 0 { floor_q(arrival)? } else { level_q(arrival, level_mu)? };
    linalg::solve_left(&q, &rhs)
}

/// Stationary distribution on levels `0..=capacity`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteSolution {
    pub capacity: usize,
    pub top: TopMatrix,
    /// `pi[m][i] = π_(m,i)`.
    pub pi: Vec<Vec<f64>>,
}

impl FiniteSolution {
    pub fn prob(&self, level: usize, phase: usize) -> Result<f64> {
        self.pi
            .get(level)
            .and_then(|row| row.get(phase))
            .copied()
            .ok_or(Error::IndexOutOfRange { level, phase })
    }

    pub fn level_marginal(&self, level: usize) -> f64 {
        self.pi.get(level).map_or(0.0, |row| row.iter().sum())
    }

    pub fn total_mass(&self) -> f64 {
        self.pi.iter().flatten().sum()
    }

    /// States in `(m, i) ↦ m·k + i` order.
    pub fn flatten(&self) -> Vec<f64> {
        self.pi.iter().flatten().copied().collect()
    }

    /// `‖π·Γ‖∞` against an explicitly assembled generator.
    pub fn balance_residual(&self, generator: &Matrix) -> Result<f64> {
        Ok(generator.left_mul(&self.flatten())?.iter().fold(0.0, |acc, x| acc.max(x.abs())))
    }
}

fn normalize(rows: &mut [Vec<f64>], extra: f64) -> f64 {
    // Sum small entries first so that the total is not dominated by rounding
    // of the largest levels.
    let mut values: Vec<f64> = rows.iter().flatten().copied().collect();
    values.push(extra);
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    let total: f64 = values.iter().sum();
    rows.iter_mut().flatten().for_each(|x| *x /= total);
    total
}

/// Finite capacity `S` under the default [`BlockingPolicy::LostRestart`].
pub fn solve_finite(model: &QueueModel, capacity: usize) -> Result<FiniteSolution> {
    solve_finite_with(model, capacity, BlockingPolicy::default().top_matrix())
}

/// Finite capacity `S` started from the chosen top-level matrix.
pub fn solve_finite_with(model: &QueueModel, capacity: usize, top: TopMatrix) -> Result<FiniteSolution> {
    if capacity < 1 {
        return Err(Error::InvalidArgument("capacity must be at least 1".into()));
    }
    let arrival = &model.arrival;
    let mut pi = vec![Vec::new(); capacity + 1];
    pi[capacity] = null_vector(&top_level_matrix(model, top)?)?;
    for m in (0..capacity).rev() {
        let known = &pi;
        let above = |level: usize| (known[level].clone(), model.service.clone());
        let jump = model.service.max_batch().min(capacity - m);
        pi[m] = step_down(arrival, m, &above, jump, model.service.rate())?;
    }
    normalize(&mut pi, 0.0);
    Ok(FiniteSolution { capacity, top, pi })
}

/// Service laws for levels `1..=threshold`; the model's own law applies
/// above. Level 0 has no law because nothing is served there.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableRatePlan {
    laws: Vec<BatchService>,
}

impl VariableRatePlan {
    /// `laws[m-1]` serves level `m`.
    pub fn new(laws: Vec<BatchService>) -> Self {
        VariableRatePlan { laws }
    }

    /// `threshold` levels sharing one law.
    pub fn uniform(threshold: usize, law: BatchService) -> Self {
        VariableRatePlan {
            laws: vec![law; threshold],
        }
    }

    pub fn threshold(&self) -> usize {
        self.laws.len()
    }

    pub fn law(&self, level: usize) -> Option<&BatchService> {
        level.checked_sub(1).and_then(|m| self.laws.get(m))
    }

    fn law_or<'a>(&'a self, level: usize, default: &'a BatchService) -> &'a BatchService {
        self.law(level).unwrap_or(default)
    }
}

/// Distribution with level-dependent service: explicit up to the threshold,
/// geometric above it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableRateSolution {
    pub threshold: usize,
    pub gamma: f64,
    /// `pi[m][i]` for `m ≤ threshold`.
    pub pi: Vec<Vec<f64>>,
    /// `π_(threshold+1, ·)`; level `threshold + j` is this times `γ^{j−1}`.
    pub tail_head: Vec<f64>,
}

impl VariableRateSolution {
    pub fn prob(&self, level: usize, phase: usize) -> Result<f64> {
        if phase >= self.tail_head.len() {
            return Err(Error::IndexOutOfRange { level, phase });
        }
        if level <= self.threshold {
            return Ok(self.pi[level][phase]);
        }
        Ok(self.tail_head[phase] * self.gamma.powi((level - self.threshold - 1) as i32))
    }

    pub fn level_marginal(&self, level: usize) -> f64 {
        (0..self.tail_head.len()).map(|i| self.prob(level, i).unwrap_or(0.0)).sum()
    }

    pub fn total_mass(&self) -> f64 {
        let explicit: f64 = self.pi.iter().flatten().sum();
        explicit + self.tail_head.iter().sum::<f64>() / (1.0 - self.gamma)
    }
}

/// Stationary distribution under a level-dependent service plan.
pub fn solve_variable_rates(
    model: &QueueModel,
    plan: &VariableRatePlan,
    options: &SolverOptions,
) -> Result<VariableRateSolution> {
    let arrival = &model.arrival;
    let k = finite_phases(arrival)?;
    let solution = solver::solve_gamma(model, options)?;
    let gamma = solution.gamma;
    let threshold = plan.threshold();

    let mut tail_head = vec![1.0; k];
    for i in 1..k {
        tail_head[i] = tail_head[i - 1] * arrival.continuation(i - 1) * solution.alphas[i - 1];
    }

    let max_jump = plan
        .laws
        .iter()
        .chain(std::iter::once(&model.service))
        .map(BatchService::max_batch)
        .max()
        .unwrap_or(1);
    let mut pi: Vec<Vec<f64>> = vec![Vec::new(); threshold + 1];
    for m in (0..=threshold).rev() {
        let known = &pi;
        let head = &tail_head;
        let above = |level: usize| {
            let vector = if level <= threshold {
                known[level].clone()
            } else {
                let scale = gamma.powi((level - threshold - 1) as i32);
                head.iter().map(|x| x * scale).collect()
            };
            (vector, plan.law_or(level, &model.service).clone())
        };
        let mu = plan.law_or(m, &model.service).rate();
        pi[m] = step_down(arrival, m, &above, max_jump, mu)?;
    }

    let tail_total = tail_head.iter().sum::<f64>() / (1.0 - gamma);
    let total = normalize(&mut pi, tail_total);
    tail_head.iter_mut().for_each(|x| *x /= total);
    Ok(VariableRateSolution {
        threshold,
        gamma,
        pi,
        tail_head,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{self, CapBehavior};

    fn table_service() -> BatchService {
        BatchService::new(0.8, vec![0.25, 0.5, 0.25]).unwrap()
    }

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn finite_mm1_is_truncated_geometric() {
        let m = QueueModel::new(CoxianArrival::exponential(0.5).unwrap(), BatchService::single(0.8).unwrap());
        let sol = solve_finite(&m, 3).unwrap();
        let rho: f64 = 0.625;
        let norm: f64 = (0..=3).map(|l| rho.powi(l)).sum();
        for l in 0..=3 {
            assert!((sol.prob(l, 0).unwrap() - rho.powi(l as i32) / norm).abs() < 1e-14);
        }
        assert!(sol.prob(4, 0).is_err());
    }

    #[test]
    fn finite_matches_dense_generator() {
        let m = QueueModel::new(CoxianArrival::homogeneous(2, 0.5, 0.5).unwrap(), table_service());
        for policy in [BlockingPolicy::LostRestart, BlockingPolicy::HoldPhase] {
            let sol = solve_finite_with(&m, 5, policy.top_matrix()).unwrap();
            let g = oracle::truncated_generator(&m, 5, CapBehavior::Blocking(policy)).unwrap();
            assert!(sol.balance_residual(&g).unwrap() < 1e-14);
            let exact = oracle::oracle_finite(&m, 5, policy).unwrap();
            assert!(max_diff(&sol.flatten(), &exact) < 1e-12);
            assert!((sol.total_mass() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn large_capacity_approaches_infinite_queue() {
        let m = QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service());
        let dist = solver::stationary_distribution(&m, &SolverOptions::default()).unwrap();
        let mut last = f64::INFINITY;
        for cap in [20, 40, 60] {
            let sol = solve_finite(&m, cap).unwrap();
            let err = (0..=10)
                .flat_map(|l| (0..5).map(move |i| (l, i)))
                .map(|(l, i)| (sol.prob(l, i).unwrap() - dist.stationary_prob(l, i).unwrap()).abs())
                .fold(0.0, f64::max);
            assert!(err < last || err < 1e-14, "cap {cap}: {err:e} after {last:e}");
            last = err;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn uniform_plan_reproduces_the_homogeneous_queue() {
        let m = QueueModel::new(
            CoxianArrival::new(vec![0.7, 1.9, 0.4], vec![0.6, 0.3, 0.0]).unwrap(),
            table_service(),
        );
        let dist = solver::stationary_distribution(&m, &SolverOptions::default()).unwrap();
        for threshold in [0, 1, 4] {
            let plan = VariableRatePlan::uniform(threshold, m.service.clone());
            let sol = solve_variable_rates(&m, &plan, &SolverOptions::default()).unwrap();
            for l in 0..12 {
                for i in 0..3 {
                    assert!((sol.prob(l, i).unwrap() - dist.stationary_prob(l, i).unwrap()).abs() < 1e-12);
                }
            }
            assert!((sol.total_mass() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn slower_service_below_threshold_matches_oracle() {
        let m = QueueModel::new(CoxianArrival::homogeneous(3, 1.2, 0.7).unwrap(), table_service());
        let plan = VariableRatePlan::new(vec![
            BatchService::single(0.3).unwrap(),
            BatchService::new(0.5, vec![0.5, 0.5]).unwrap(),
        ]);
        let sol = solve_variable_rates(&m, &plan, &SolverOptions::default()).unwrap();
        let exact = oracle::oracle_variable_rates(&m, &plan, 400).unwrap();
        for l in 0..60 {
            for i in 0..3 {
                assert!((sol.prob(l, i).unwrap() - exact[l * 3 + i]).abs() < 1e-10, "({l},{i})");
            }
        }
        assert!((sol.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn top_matrices() {
        let m = QueueModel::new(CoxianArrival::homogeneous(2, 1.0, 0.5).unwrap(), BatchService::single(1.0).unwrap());
        let printed = top_level_matrix(&m, TopMatrix::Printed).unwrap();
        assert_eq!(printed, Matrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap());
        let weighted = top_level_matrix(&m, TopMatrix::QWeighted).unwrap();
        assert_eq!(weighted, Matrix::from_rows(&[vec![-0.5, 0.5], vec![2.0, -2.0]]).unwrap());
        assert!(solve_finite(&m, 0).is_err());
    }
}
