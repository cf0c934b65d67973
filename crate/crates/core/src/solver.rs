//! Level factor, phase factors and the product-form stationary distribution.
//!
//! With `φ = φ_Y(γ)`, the phase factors are
//! `α_i = λ_{i−1} / (λ_i + μ − μφ)` and the level factor `γ` is the unique
//! root below 1 of `γ = F(γ)`, where
//!
//! ```text
//! F(γ) = [λ_0(1−q_0) + Σ_{i≥1} (Π_{l=1..i} q_{l−1} α_l)(1−q_i)λ_i + γμφ] / (λ_0 + μ).
//! ```
//!
//! Above level 0 the distribution is `π_(m,i) = π_(1,0)·γ^{m−1}·t_i` with
//! `t_i = Π_{l=1..i} q_{l−1} α_l`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::QueueModel;

/// Upper end of the root bracket; roots closer to 1 are treated as null
/// recurrence.
pub const GAMMA_CEILING: f64 = 1.0 - 1e-8;

const NEWTON_STEP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    #[default]
    FixedPoint,
    Newton,
    Bisection,
}

impl SolveMethod {
    pub fn default_max_iter(self) -> usize {
        match self {
            SolveMethod::FixedPoint => 1_000_000,
            SolveMethod::Newton | SolveMethod::Bisection => 200,
        }
    }
}

impl fmt::Display for SolveMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolveMethod::FixedPoint => "fixed-point",
            SolveMethod::Newton => "newton",
            SolveMethod::Bisection => "bisection",
        })
    }
}

impl FromStr for SolveMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed-point" | "fixedpoint" | "fixed_point" => Ok(SolveMethod::FixedPoint),
            "newton" => Ok(SolveMethod::Newton),
            "bisection" => Ok(SolveMethod::Bisection),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub method: SolveMethod,
    pub gamma0: f64,
    /// Stopping tolerance on `|F(γ) − γ|`.
    pub tol: f64,
    /// `None` uses [`SolveMethod::default_max_iter`].
    pub max_iter: Option<usize>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: SolveMethod::FixedPoint,
            gamma0: 0.5,
            tol: 1e-12,
            max_iter: None,
        }
    }
}

impl SolverOptions {
    pub fn with_method(method: SolveMethod) -> Self {
        SolverOptions {
            method,
            ..SolverOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.gamma0 > 0.0 && self.gamma0 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma0 must lie in (0, 1), got {}",
                self.gamma0
            )));
        }
        if self.max_iter == Some(0) {
            return Err(Error::InvalidArgument("max_iter must be positive".into()));
        }
        Ok(())
    }
}

/// Level factor and phase factors of a solved model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralSolution {
    pub gamma: f64,
    /// `α_1..α_{k−1}`; empty for infinite order.
    pub alphas: Vec<f64>,
    /// The common phase factor `λ/(λ + μ − μφ_Y(γ))` when all rates are
    /// equal.
    pub alpha: Option<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
    /// `|F(γ) − γ|` at the returned `γ`.
    pub residual: f64,
}

fn phase_factor(model: &QueueModel, from_rate: f64, to_rate: f64, phi: f64) -> f64 {
    from_rate / (to_rate + model.service.rate() * (1.0 - phi))
}

/// Phase factors `α_1..α_{k−1}` at `γ`.
pub fn phase_factors(model: &QueueModel, gamma: f64) -> Vec<f64> {
    let phi = model.service.pgf(gamma);
    match model.arrival.phases() {
        Some(k) => (1..k)
            .map(|i| phase_factor(model, model.arrival.rate(i - 1), model.arrival.rate(i), phi))
            .collect(),
        None => Vec::new(),
    }
}

/// The common phase factor, if the arrival rates are homogeneous.
pub fn common_alpha(model: &QueueModel, gamma: f64) -> Option<f64> {
    model.arrival.has_homogeneous_rates().then(|| {
        let rate = model.arrival.rate(0);
        phase_factor(model, rate, rate, model.service.pgf(gamma))
    })
}

/// The fixpoint map, using the simplified homogeneous, Erlang or Cox(∞)
/// form when the model has one.
pub fn fixpoint_f(model: &QueueModel, gamma: f64) -> f64 {
    let arrival = &model.arrival;
    let phi = model.service.pgf(gamma);
    if arrival.is_infinite() {
        let rate = arrival.rate(0);
        let q = arrival.continuation(0);
        let arrivals = rate * (1.0 - q);
        let service = model.service.rate() * (1.0 - phi);
        if arrivals + service == 0.0 {
            // Only reachable at γ = 1 with a source that never fires.
            return 1.0;
        }
        return arrivals / (arrivals + service);
    }
    if !arrival.has_homogeneous_rates() {
        return fixpoint_f_general(model, gamma);
    }
    let k = arrival.phases().expect("finite order");
    let rate = arrival.rate(0);
    let alpha = phase_factor(model, rate, rate, phi);
    if arrival.is_erlang() {
        return alpha.powi(k as i32);
    }
    let mut reach = 1.0;
    let mut power = alpha;
    let mut total = 0.0;
    for i in 0..k {
        let q = arrival.continuation(i);
        total += reach * power * (1.0 - q);
        reach *= q;
        power *= alpha;
    }
    total
}

/// The fixpoint map in its general form, without specialization.
///
/// For infinite order the phase sum is a geometric series:
/// `[λ(1−q)/(1−qα) + γμφ] / (λ + μ)`.
pub fn fixpoint_f_general(model: &QueueModel, gamma: f64) -> f64 {
    let arrival = &model.arrival;
    let mu = model.service.rate();
    let phi = model.service.pgf(gamma);
    let head = arrival.rate(0);
    let numerator = match arrival.phases() {
        Some(k) => {
            let mut total = head * (1.0 - arrival.continuation(0));
            let mut t = 1.0;
            for i in 1..k {
                t *= arrival.continuation(i - 1) * phase_factor(model, arrival.rate(i - 1), arrival.rate(i), phi);
                total += t * (1.0 - arrival.continuation(i)) * arrival.rate(i);
            }
            total
        }
        None => {
            let q = arrival.continuation(0);
            let alpha = phase_factor(model, head, head, phi);
            head * (1.0 - q) / (1.0 - q * alpha)
        }
    };
    (numerator + gamma * mu * phi) / (head + mu)
}

fn residual(model: &QueueModel, gamma: f64) -> f64 {
    fixpoint_f(model, gamma) - gamma
}

/// The unique fixpoint `γ < 1` of `F`.
pub fn solve_gamma(model: &QueueModel, options: &SolverOptions) -> Result<SpectralSolution> {
    options.validate()?;
    model.require_ergodic()?;
    let max_iter = options.max_iter.unwrap_or_else(|| options.method.default_max_iter());

    // g(γ) = F(γ) − γ is convex with g(0) ≥ 0 and g(1) = 0. For an ergodic
    // model g is negative just below 1; if it is not at the ceiling the root
    // is too close to 1 to separate from the trivial one.
    let g_hi = residual(model, GAMMA_CEILING);
    if g_hi >= 0.0 {
        return Err(Error::NoConvergence {
            iterations: 0,
            residual: g_hi,
        });
    }

    let (gamma, iterations) = match options.method {
        SolveMethod::FixedPoint => fixed_point(model, options.gamma0, options.tol, max_iter)?,
        SolveMethod::Newton => newton(model, options.gamma0, options.tol, max_iter)?,
        SolveMethod::Bisection => bisection(model, options.tol, max_iter)?,
    };
    if gamma >= GAMMA_CEILING {
        return Err(Error::NoConvergence {
            iterations,
            residual: residual(model, gamma).abs(),
        });
    }
    Ok(SpectralSolution {
        gamma,
        alphas: phase_factors(model, gamma),
        alpha: common_alpha(model, gamma),
        method: options.method,
        iterations,
        residual: residual(model, gamma).abs(),
    })
}

fn fixed_point(model: &QueueModel, gamma0: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let mut gamma = gamma0;
    let mut last = f64::INFINITY;
    for iteration in 1..=max_iter {
        let next = fixpoint_f(model, gamma);
        last = (next - gamma).abs();
        gamma = next;
        if last < tol {
            return Ok((gamma, iteration));
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: last,
    })
}

fn newton(model: &QueueModel, gamma0: f64, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    // Safeguarded: the iterate never leaves the sign bracket, and a step that
    // would is replaced by bisection.
    let (mut lo, mut hi) = (0.0, GAMMA_CEILING);
    if residual(model, lo) <= tol {
        return Ok((lo, 0));
    }
    let mut gamma = gamma0.clamp(lo, hi);
    let mut g = residual(model, gamma);
    for iteration in 1..=max_iter {
        if g.abs() < tol {
            return Ok((gamma, iteration - 1));
        }
        if g > 0.0 {
            lo = gamma;
        } else {
            hi = gamma;
        }
        let slope = (residual(model, gamma + NEWTON_STEP) - residual(model, gamma - NEWTON_STEP)) / (2.0 * NEWTON_STEP);
        let step = gamma - g / slope;
        gamma = if slope.is_finite() && slope != 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
        g = residual(model, gamma);
    }
    if g.abs() < tol {
        return Ok((gamma, max_iter));
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: g.abs(),
    })
}

fn bisection(model: &QueueModel, tol: f64, max_iter: usize) -> Result<(f64, usize)> {
    let (mut lo, mut hi) = (0.0, GAMMA_CEILING);
    if residual(model, lo) <= tol {
        return Ok((lo, 0));
    }
    let mut last = f64::INFINITY;
    for iteration in 1..=max_iter {
        let mid = 0.5 * (lo + hi);
        let g = residual(model, mid);
        last = g.abs();
        if last < tol || mid <= lo || mid >= hi {
            return Ok((mid, iteration));
        }
        if g > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: last,
    })
}

#[derive(Debug, Clone, PartialEq)]
enum Phases {
    /// `t_i` and the boundary probabilities `π_(0,i)`.
    Finite { weights: Vec<f64>, boundary: Vec<f64> },
    /// Homogeneous Cox(∞): `t_i = (qα)^i`, `π_(0,i) = π_(0,0) q^i (1 + Σ_{j≤i} α^j)`.
    Infinite { q: f64, alpha: f64 },
}

/// Stationary distribution of an ergodic Cox(k)/M^Y/1 queue.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryDistribution {
    pub solution: SpectralSolution,
    pub pi00: f64,
    pub pi10: f64,
    phases: Phases,
}

/// Serializable summary of a [`StationaryDistribution`].
#[derive(Debug, Clone, Serialize)]
pub struct DistributionSummary {
    pub gamma: f64,
    pub alphas: Vec<f64>,
    pub alpha: Option<f64>,
    pub pi00: f64,
    pub pi10: f64,
    pub boundary: Vec<f64>,
    pub method: SolveMethod,
    pub iterations: usize,
    pub residual: f64,
}

/// `π_(1,0) / π_(0,0) = λ_0(1−γ) / (μ(1−φ_Y(γ)))`.
fn level_one_ratio(model: &QueueModel, gamma: f64) -> f64 {
    model.arrival.rate(0) * (1.0 - gamma) / (model.service.rate() * (1.0 - model.service.pgf(gamma)))
}

/// Full distribution from a solved level factor.
///
/// The boundary follows from balance at the states `(0, i)`: phase `i` of
/// level 0 is entered from phase `i−1` and, for every level `m ≥ 1`, by a
/// batch that empties the queue. The latter inflow sums to `λ_0 t_i π_(0,0)`,
/// so `a_i = π_(0,i)/π_(0,0)` obeys `λ_i a_i = q_{i−1}λ_{i−1}a_{i−1} + λ_0 t_i`.
pub fn boundary_distribution(model: &QueueModel, solution: &SpectralSolution) -> Result<StationaryDistribution> {
    let gamma = solution.gamma;
    let ratio = level_one_ratio(model, gamma);
    let arrival = &model.arrival;
    let (pi00, phases) = match arrival.phases() {
        Some(k) => {
            let mut weights = vec![1.0; k];
            let mut boundary = vec![1.0; k];
            for i in 1..k {
                weights[i] = weights[i - 1] * arrival.continuation(i - 1) * solution.alphas[i - 1];
                boundary[i] = (arrival.continuation(i - 1) * arrival.rate(i - 1) * boundary[i - 1]
                    + arrival.rate(0) * weights[i])
                    / arrival.rate(i);
            }
            let upper = ratio * weights.iter().sum::<f64>() / (1.0 - gamma);
            let pi00 = 1.0 / (boundary.iter().sum::<f64>() + upper);
            boundary.iter_mut().for_each(|b| *b *= pi00);
            (pi00, Phases::Finite { weights, boundary })
        }
        None => {
            let q = arrival.continuation(0);
            let alpha = solution
                .alpha
                .ok_or_else(|| Error::InvalidModel("missing common phase factor".into()))?;
            let pi00 = (1.0 - q) * (1.0 - alpha);
            if pi00 <= 0.0 {
                return Err(Error::InvalidModel(
                    "an arrival source that never fires has no stationary distribution".into(),
                ));
            }
            (pi00, Phases::Infinite { q, alpha })
        }
    };
    Ok(StationaryDistribution {
        solution: solution.clone(),
        pi00,
        pi10: pi00 * ratio,
        phases,
    })
}

/// Solve for `γ` and assemble the distribution.
pub fn stationary_distribution(model: &QueueModel, options: &SolverOptions) -> Result<StationaryDistribution> {
    let solution = solve_gamma(model, options)?;
    boundary_distribution(model, &solution)
}

/// `π_(0,0)` from its closed form:
/// `[(1 + λ_0/(μ(1−φ))) (1 + Σ_{i≥1} (λ_0/λ_i) Π_{j<i} q_j)]⁻¹`.
pub fn closed_form_pi00(model: &QueueModel, gamma: f64) -> f64 {
    let arrival = &model.arrival;
    let head = arrival.rate(0);
    let first = 1.0 + head / (model.service.rate() * (1.0 - model.service.pgf(gamma)));
    let second = match arrival.phases() {
        Some(k) => {
            let mut reach = 1.0;
            let mut total = 1.0;
            for i in 1..k {
                reach *= arrival.continuation(i - 1);
                total += head / arrival.rate(i) * reach;
            }
            total
        }
        None => 1.0 / (1.0 - arrival.continuation(0)),
    };
    1.0 / (first * second)
}

/// Boundary vector from the alternative closed form
/// `π_(0,i) = π_(0,0) (λ_0/λ_i) Π_{s<i} q_s (1 + K Σ_{j≤i} Π_{l≤j} α_l)` with
/// `K = (1−γ)φ/(γ(1−φ))`.
///
/// `K = 1` when `Y ≡ 1` and then this agrees with [`boundary_distribution`];
/// with batches it does not satisfy the balance equations. Kept for
/// comparison only.
pub fn printed_boundary(model: &QueueModel, solution: &SpectralSolution) -> Result<Vec<f64>> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("needs a finite number of phases".into()))?;
    let gamma = solution.gamma;
    let phi = model.service.pgf(gamma);
    let factor = (1.0 - gamma) * phi / (gamma * (1.0 - phi));
    let pi00 = closed_form_pi00(model, gamma);
    let head = model.arrival.rate(0);
    let mut out = vec![pi00; k];
    let mut reach = 1.0;
    let mut alpha_product = 1.0;
    let mut alpha_sum = 0.0;
    for i in 1..k {
        reach *= model.arrival.continuation(i - 1);
        alpha_product *= solution.alphas[i - 1];
        alpha_sum += alpha_product;
        out[i] = pi00 * head / model.arrival.rate(i) * reach * (1.0 + factor * alpha_sum);
    }
    Ok(out)
}

impl StationaryDistribution {
    pub fn gamma(&self) -> f64 {
        self.solution.gamma
    }

    /// Number of phases, `None` for infinite order.
    pub fn phases(&self) -> Option<usize> {
        match &self.phases {
            Phases::Finite { weights, .. } => Some(weights.len()),
            Phases::Infinite { .. } => None,
        }
    }

    /// `π_(0,·)`; empty for infinite order.
    pub fn boundary(&self) -> &[f64] {
        match &self.phases {
            Phases::Finite { boundary, .. } => boundary,
            Phases::Infinite { .. } => &[],
        }
    }

    fn check_phase(&self, level: usize, phase: usize) -> Result<()> {
        match self.phases() {
            Some(k) if phase >= k => Err(Error::IndexOutOfRange { level, phase }),
            _ => Ok(()),
        }
    }

    /// Product-form weight `t_i = Π_{l≤i} q_{l−1} α_l`.
    pub fn phase_weight(&self, phase: usize) -> Result<f64> {
        self.check_phase(1, phase)?;
        Ok(match &self.phases {
            Phases::Finite { weights, .. } => weights[phase],
            Phases::Infinite { q, alpha } => (q * alpha).powi(phase as i32),
        })
    }

    fn weight_sum(&self) -> f64 {
        match &self.phases {
            Phases::Finite { weights, .. } => weights.iter().sum(),
            Phases::Infinite { q, alpha } => 1.0 / (1.0 - q * alpha),
        }
    }

    /// `π_(m,i)`.
    pub fn stationary_prob(&self, level: usize, phase: usize) -> Result<f64> {
        self.check_phase(level, phase)?;
        if level == 0 {
            return Ok(match &self.phases {
                Phases::Finite { boundary, .. } => boundary[phase],
                Phases::Infinite { q, alpha } => {
                    let alpha_sum: f64 = (1..=phase).map(|j| alpha.powi(j as i32)).sum();
                    self.pi00 * q.powi(phase as i32) * (1.0 + alpha_sum)
                }
            });
        }
        Ok(self.pi10 * self.gamma().powi(level as i32 - 1) * self.phase_weight(phase)?)
    }

    /// `π̄_m = Σ_i π_(m,i)`.
    pub fn level_marginal(&self, level: usize) -> f64 {
        if level == 0 {
            return 1.0 - self.tail_mass(1);
        }
        self.pi10 * self.gamma().powi(level as i32 - 1) * self.weight_sum()
    }

    /// `Σ_{m≥level} π̄_m`, with the geometric tail summed in closed form.
    pub fn tail_mass(&self, level: usize) -> f64 {
        if level == 0 {
            return 1.0;
        }
        let gamma = self.gamma();
        self.pi10 * self.weight_sum() * gamma.powi(level as i32 - 1) / (1.0 - gamma)
    }

    /// Total probability: boundary plus the closed-form tail. Equals 1 up to
    /// rounding.
    pub fn total_mass(&self) -> f64 {
        let boundary: f64 = match &self.phases {
            Phases::Finite { boundary, .. } => boundary.iter().sum(),
            Phases::Infinite { q, alpha } => self.pi00 / ((1.0 - q) * (1.0 - q * alpha)),
        };
        boundary + self.tail_mass(1)
    }

    /// `E[N] = Σ_m m π̄_m`.
    pub fn mean_level(&self) -> f64 {
        let gamma = self.gamma();
        self.pi10 * self.weight_sum() / (1.0 - gamma).powi(2)
    }

    /// `Var[N]`.
    pub fn level_variance(&self) -> f64 {
        let gamma = self.gamma();
        let second = self.pi10 * self.weight_sum() * (1.0 + gamma) / (1.0 - gamma).powi(3);
        second - self.mean_level().powi(2)
    }

    /// Probabilities on levels `0..=max_level`, row per level.
    pub fn table(&self, max_level: usize) -> Result<Vec<Vec<f64>>> {
        let k = self
            .phases()
            .ok_or_else(|| Error::InvalidModel("cannot tabulate infinitely many phases".into()))?;
        (0..=max_level)
            .map(|m| (0..k).map(|i| self.stationary_prob(m, i)).collect())
            .collect()
    }

    pub fn summary(&self) -> DistributionSummary {
        DistributionSummary {
            gamma: self.solution.gamma,
            alphas: self.solution.alphas.clone(),
            alpha: self.solution.alpha,
            pi00: self.pi00,
            pi10: self.pi10,
            boundary: self.boundary().to_vec(),
            method: self.solution.method,
            iterations: self.solution.iterations,
            residual: self.solution.residual,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BatchService, CoxianArrival};

    fn table_service() -> BatchService {
        BatchService::new(0.8, vec![0.25, 0.5, 0.25]).unwrap()
    }

    fn mm1() -> QueueModel {
        QueueModel::new(CoxianArrival::exponential(0.5).unwrap(), BatchService::single(0.8).unwrap())
    }

    fn solve(model: &QueueModel) -> SpectralSolution {
        solve_gamma(model, &SolverOptions::default()).unwrap()
    }

    #[test]
    fn f_at_one_is_one() {
        let models = [
            mm1(),
            QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service()),
            QueueModel::new(CoxianArrival::infinite(0.5, 0.3).unwrap(), table_service()),
            QueueModel::new(CoxianArrival::erlang(7, 2.0).unwrap(), table_service()),
        ];
        for m in &models {
            assert!((fixpoint_f(m, 1.0) - 1.0).abs() < 1e-14);
            assert!((fixpoint_f_general(m, 1.0) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn mm1_fixpoint_is_rho() {
        assert!((fixpoint_f(&mm1(), 0.625) - 0.625).abs() < 1e-15);
        let sol = solve(&mm1());
        assert!((sol.gamma - 0.625).abs() < 1e-11);
        assert!(sol.alphas.is_empty());
    }

    #[test]
    fn table_cell_is_a_fixpoint() {
        let m = QueueModel::new(CoxianArrival::homogeneous(2, 0.5, 0.1).unwrap(), table_service());
        assert!((fixpoint_f(&m, 0.4168) - 0.4168).abs() < 5e-5);
    }

    #[test]
    fn table_cells_solve() {
        let m = QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service());
        let options = SolverOptions {
            gamma0: 0.35,
            ..SolverOptions::default()
        };
        let sol = solve_gamma(&m, &options).unwrap();
        assert!((sol.gamma - 0.2585).abs() < 5e-5);
        assert!((sol.alpha.unwrap() - 0.4105).abs() < 5e-5);

        let erlang = QueueModel::new(CoxianArrival::erlang(20, 0.5).unwrap(), table_service());
        let sol = solve(&erlang);
        assert!(sol.gamma < 5e-5);
        assert!((sol.alpha.unwrap() - 0.3846).abs() < 5e-5);
    }

    #[test]
    fn specialized_and_general_maps_share_fixpoints() {
        let models = [
            QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service()),
            QueueModel::new(CoxianArrival::erlang(4, 1.3).unwrap(), table_service()),
            QueueModel::new(CoxianArrival::infinite(0.7, 0.6).unwrap(), table_service()),
            QueueModel::new(
                CoxianArrival::new(vec![0.9; 3], vec![0.2, 0.8, 0.0]).unwrap(),
                BatchService::single(1.1).unwrap(),
            ),
        ];
        // The simplified maps differ from the general one away from the
        // fixpoints but share them, and agree in sign of F(γ) − γ.
        for m in &models {
            let gamma = solve(m).gamma;
            assert!((fixpoint_f_general(m, gamma) - gamma).abs() < 1e-12);
            for step in 1..20 {
                let g = step as f64 / 20.0;
                if (g - gamma).abs() > 1e-3 {
                    assert_eq!(fixpoint_f(m, g) > g, fixpoint_f_general(m, g) > g, "γ={g}");
                }
            }
        }
    }

    #[test]
    fn methods_agree() {
        let m = QueueModel::new(
            CoxianArrival::new(vec![0.7, 1.9, 0.4], vec![0.6, 0.3, 0.0]).unwrap(),
            table_service(),
        );
        let gammas: Vec<f64> = [SolveMethod::FixedPoint, SolveMethod::Newton, SolveMethod::Bisection]
            .into_iter()
            .map(|method| solve_gamma(&m, &SolverOptions::with_method(method)).unwrap().gamma)
            .collect();
        assert!((gammas[0] - gammas[1]).abs() < 1e-10);
        assert!((gammas[0] - gammas[2]).abs() < 1e-10);
    }

    #[test]
    fn non_ergodic_and_bad_options() {
        let critical = QueueModel::new(CoxianArrival::exponential(1.0).unwrap(), BatchService::single(1.0).unwrap());
        assert!(matches!(
            solve_gamma(&critical, &SolverOptions::default()),
            Err(Error::NotErgodic { .. })
        ));
        let bad = SolverOptions {
            gamma0: 1.0,
            ..SolverOptions::default()
        };
        assert!(matches!(solve_gamma(&mm1(), &bad), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn nearly_critical_reports_no_convergence() {
        let m = QueueModel::new(
            CoxianArrival::exponential(1.0 - 1e-10).unwrap(),
            BatchService::single(1.0).unwrap(),
        );
        assert!(matches!(
            solve_gamma(&m, &SolverOptions::with_method(SolveMethod::Bisection)),
            Err(Error::NoConvergence { .. })
        ));
    }

    #[test]
    fn iteration_cap_is_reported() {
        let m = QueueModel::new(CoxianArrival::exponential(0.79).unwrap(), BatchService::single(0.8).unwrap());
        let options = SolverOptions {
            max_iter: Some(3),
            ..SolverOptions::default()
        };
        assert!(matches!(
            solve_gamma(&m, &options),
            Err(Error::NoConvergence { iterations: 3, .. })
        ));
    }

    #[test]
    fn mm1_distribution() {
        let m = mm1();
        let dist = boundary_distribution(&m, &solve(&m)).unwrap();
        assert!((dist.pi00 - 0.375).abs() < 1e-11);
        for level in 0..10 {
            let expected = 0.375 * 0.625f64.powi(level as i32);
            assert!((dist.stationary_prob(level, 0).unwrap() - expected).abs() < 1e-11);
        }
        assert!((dist.mean_level() - 0.625 / 0.375).abs() < 1e-9);
        assert!(matches!(
            dist.stationary_prob(2, 1),
            Err(Error::IndexOutOfRange { level: 2, phase: 1 })
        ));
    }

    #[test]
    fn seam_between_levels() {
        let m = QueueModel::new(CoxianArrival::homogeneous(4, 0.6, 0.7).unwrap(), table_service());
        let sol = solve(&m);
        let dist = boundary_distribution(&m, &sol).unwrap();
        let phi = m.service.pgf(sol.gamma);
        let expected = dist.pi00 * 0.6 / 0.8 * (1.0 - sol.gamma) / (1.0 - phi);
        assert!((dist.stationary_prob(1, 0).unwrap() - expected).abs() < 1e-15);
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn closed_forms_of_the_idle_probability() {
        // Erlang: π_(0,0) = (1 − α)/k.
        let erlang = QueueModel::new(CoxianArrival::erlang(3, 1.2).unwrap(), table_service());
        let sol = solve(&erlang);
        let dist = boundary_distribution(&erlang, &sol).unwrap();
        assert!((dist.pi00 - (1.0 - sol.alpha.unwrap()) / 3.0).abs() < 1e-12);
        assert!((sol.gamma - sol.alpha.unwrap().powi(3)).abs() < 1e-11);

        // Equal rates and equal q: π_(0,0) = (1 − q)(1 − α)/(1 − q^k).
        let hom = QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service());
        let sol = solve(&hom);
        let dist = boundary_distribution(&hom, &sol).unwrap();
        let expected = 0.5 * (1.0 - sol.alpha.unwrap()) / (1.0 - 0.5f64.powi(5));
        assert!((dist.pi00 - expected).abs() < 1e-12);

        let general = QueueModel::new(
            CoxianArrival::new(vec![0.7, 1.9, 0.4], vec![0.6, 0.3, 0.0]).unwrap(),
            table_service(),
        );
        let sol = solve(&general);
        let dist = boundary_distribution(&general, &sol).unwrap();
        assert!((dist.pi00 - closed_form_pi00(&general, sol.gamma)).abs() < 1e-12);
    }

    #[test]
    fn infinite_order_distribution() {
        let m = QueueModel::new(CoxianArrival::infinite(0.6, 0.4).unwrap(), table_service());
        let sol = solve(&m);
        let alpha = sol.alpha.unwrap();
        assert!((sol.gamma - alpha * 0.6 / (1.0 - 0.4 * alpha)).abs() < 1e-11);
        let dist = boundary_distribution(&m, &sol).unwrap();
        assert!((dist.total_mass() - 1.0).abs() < 1e-12);
        assert!((dist.pi00 - closed_form_pi00(&m, sol.gamma)).abs() < 1e-12);
        let head: f64 = (0..200).map(|i| dist.stationary_prob(0, i).unwrap()).sum();
        assert!((head - dist.level_marginal(0)).abs() < 1e-12);

        let silent = QueueModel::new(CoxianArrival::infinite(0.5, 1.0).unwrap(), table_service());
        let sol = solve(&silent);
        assert_eq!(sol.gamma, 0.0);
        assert!(boundary_distribution(&silent, &sol).is_err());
    }

    #[test]
    fn printed_boundary_agrees_only_for_single_service() {
        let single = QueueModel::new(
            CoxianArrival::new(vec![0.7, 1.9, 0.4], vec![0.6, 0.3, 0.0]).unwrap(),
            BatchService::single(1.0).unwrap(),
        );
        let sol = solve(&single);
        let dist = boundary_distribution(&single, &sol).unwrap();
        let printed = printed_boundary(&single, &sol).unwrap();
        for (a, b) in dist.boundary().iter().zip(&printed) {
            assert!((a - b).abs() < 1e-12);
        }

        let batch = QueueModel::new(single.arrival.clone(), table_service());
        let sol = solve(&batch);
        let dist = boundary_distribution(&batch, &sol).unwrap();
        let printed = printed_boundary(&batch, &sol).unwrap();
        assert!((dist.boundary()[0] - printed[0]).abs() < 1e-12);
        assert!((dist.boundary()[2] - printed[2]).abs() > 1e-4);
    }

    #[test]
    fn marginals_and_moments() {
        let m = QueueModel::new(CoxianArrival::homogeneous(3, 0.9, 0.6).unwrap(), table_service());
        let dist = stationary_distribution(&m, &SolverOptions::default()).unwrap();
        let sum: f64 = (0..2000).map(|l| dist.level_marginal(l)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let mean: f64 = (0..2000).map(|l| l as f64 * dist.level_marginal(l)).sum();
        let second: f64 = (0..2000).map(|l| (l * l) as f64 * dist.level_marginal(l)).sum();
        assert!((mean - dist.mean_level()).abs() < 1e-10);
        assert!((second - mean * mean - dist.level_variance()).abs() < 1e-9);
        let table = dist.table(3).unwrap();
        assert_eq!(table.len(), 4);
        assert!((table[0].iter().sum::<f64>() - dist.level_marginal(0)).abs() < 1e-14);
    }
}
