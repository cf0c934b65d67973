//! Families with a fixed mean inter-arrival time, performance metrics, and
//! the deterministic-arrival limit.
//!
//! With `ρ = λ*/μ` and `φ = φ_Y(γ)`, every Cox(k)/M^Y/1 queue has
//! `π̄_m = ρ(1−γ)²γ^{m−1}/(1−φ)` for `m ≥ 1`, so
//! `L = ρ/(1−φ)`, `W = L/λ*` and `V = L((1+γ)/(1−γ) − L)`.
//! As the number of Erlang phases grows, `γ_k` decreases to the root `σ` of
//! `σ = exp(−(1−φ_Y(σ))/ρ)`, the level factor of the D/M^Y/1 queue.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{BatchService, CoxianArrival, Order, QueueModel};
use crate::solver::{self, SolverOptions, SpectralSolution};

/// Homogeneous Cox(k, λ_k, q) with mean inter-arrival time `1/λ*`:
/// `λ_k = λ*(1−q^k)/(1−q)`, or `kλ*` when `q = 1`.
pub fn calibrate(lambda_star: f64, q: f64, k: usize) -> Result<CoxianArrival> {
    CoxianArrival::homogeneous(k, calibrated_rate(lambda_star, q, Order::Finite(k))?, q)
}

/// Cox(∞, λ, q) with mean `1/λ*`, i.e. `λ = λ*/(1−q)`.
pub fn calibrate_infinite(lambda_star: f64, q: f64) -> Result<CoxianArrival> {
    CoxianArrival::infinite(calibrated_rate(lambda_star, q, Order::Infinite)?, q)
}

/// Per-phase rate of the calibrated family member.
pub fn calibrated_rate(lambda_star: f64, q: f64, order: Order) -> Result<f64> {
    if !(lambda_star > 0.0 && lambda_star.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda* must be positive, got {lambda_star}")));
    }
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::InvalidArgument(format!("q must lie in (0, 1], got {q}")));
    }
    match order {
        Order::Finite(k) if q == 1.0 => Ok(k as f64 * lambda_star),
        Order::Finite(k) => Ok(lambda_star * (1.0 - q.powi(k as i32)) / (1.0 - q)),
        Order::Infinite if q == 1.0 => Err(Error::InvalidArgument(
            "an infinite Erlang chain has no finite mean inter-arrival time to calibrate".into(),
        )),
        Order::Infinite => Ok(lambda_star / (1.0 - q)),
    }
}

/// Level-marginal summary of one queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    /// Number of phases; `None` for infinite order.
    pub k: Option<usize>,
    pub lambda_k: f64,
    pub gamma: f64,
    pub alpha: Option<f64>,
    pub pi0_bar: f64,
    /// Mean number of customers.
    pub l: f64,
    /// Mean sojourn time.
    pub w: f64,
    /// Variance of the number of customers.
    pub v: f64,
}

/// Metrics from the closed forms at the solved `γ`, with `λ* = 1/E[C]`.
pub fn metrics(model: &QueueModel, solution: &SpectralSolution) -> MetricsRow {
    let lambda_star = model.arrival.arrival_rate();
    let rho = model.rho();
    let gamma = solution.gamma;
    let phi = model.service.pgf(gamma);
    let l = rho / (1.0 - phi);
    MetricsRow {
        k: model.arrival.phases(),
        lambda_k: model.arrival.rate(0),
        gamma,
        alpha: solution.alpha,
        pi0_bar: 1.0 - rho * (1.0 - gamma) / (1.0 - phi),
        l,
        w: l / lambda_star,
        v: l * ((1.0 + gamma) / (1.0 - gamma) - l),
    }
}

/// `Σ_{m≥level} π̄_m` in closed form.
pub fn tail_mass(rho: f64, gamma: f64, service: &BatchService, level: usize) -> f64 {
    if level == 0 {
        return 1.0;
    }
    rho * (1.0 - gamma) * gamma.powi(level as i32 - 1) / (1.0 - service.pgf(gamma))
}

const STAR_TOL: f64 = 1e-15;

/// The root `ξ < 1` of `ξ = exp(−(1−φ_Y(ξ))/ρ)`.
pub fn gamma_star(rho: f64, service: &BatchService) -> Result<f64> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::InvalidArgument(format!("rho must be positive, got {rho}")));
    }
    let capacity = service.mean_batch();
    if rho >= capacity {
        return Err(Error::NotErgodic {
            arrival_rate: rho * service.rate(),
            service_capacity: service.capacity(),
        });
    }
    let h = |x: f64| (-(1.0 - service.pgf(x)) / rho).exp() - x;
    // h > 0 at 0 and h(1) = 0 with h'(1) > 0, so h is negative just below 1.
    let mut gap = 1e-2;
    let mut hi = 1.0 - gap;
    while h(hi) >= 0.0 {
        gap *= 0.1;
        if gap < 1e-15 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: h(hi),
            });
        }
        hi = 1.0 - gap;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < STAR_TOL {
            break;
        }
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Level marginals of the D/M^Y/1 queue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeterministicLimit {
    pub rho: f64,
    pub sigma: f64,
    pub pi0: f64,
    /// `1 − φ_Y(σ)`.
    #[serde(skip)]
    one_minus_phi: f64,
}

impl DeterministicLimit {
    /// `π̄_m^D`.
    pub fn marginal(&self, level: usize) -> f64 {
        if level == 0 {
            return self.pi0;
        }
        self.rho * (1.0 - self.sigma).powi(2) * self.sigma.powi(level as i32 - 1) / self.one_minus_phi
    }

    /// `Σ_{m≥level} π̄_m^D`.
    pub fn tail(&self, level: usize) -> f64 {
        if level == 0 {
            return 1.0;
        }
        self.rho * (1.0 - self.sigma) * self.sigma.powi(level as i32 - 1) / self.one_minus_phi
    }

    pub fn head(&self, levels: usize) -> Vec<f64> {
        (0..levels).map(|m| self.marginal(m)).collect()
    }
}

pub fn dm1_distribution(rho: f64, service: &BatchService) -> Result<DeterministicLimit> {
    let sigma = gamma_star(rho, service)?;
    let one_minus_phi = 1.0 - service.pgf(sigma);
    Ok(DeterministicLimit {
        rho,
        sigma,
        pi0: 1.0 - rho * (1.0 - sigma) / one_minus_phi,
        one_minus_phi,
    })
}

/// Levels over which tail dominance is checked.
pub const DOMINANCE_LEVELS: usize = 50;
/// Slack allowed in monotonicity comparisons.
pub const MONOTONE_SLACK: f64 = 1e-12;

/// Checks over a calibrated family, in increasing `k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdicts {
    pub erlang: bool,
    pub single_service: bool,
    /// Reported for every family; only expected for Erlang families.
    pub gamma_strictly_decreasing: bool,
    pub pi0_constant: bool,
    pub pi0_strictly_decreasing: bool,
    pub l_nonincreasing: bool,
    pub w_nonincreasing: bool,
    pub v_nonincreasing: bool,
    pub alpha_strictly_increasing: bool,
    pub alpha_below_one: bool,
    /// `Σ_{m≥M} π̄^{k+1} ≤ Σ_{m≥M} π̄^k` for `M ≤ 50`.
    pub tail_dominance: bool,
    /// `σ < γ_k` for every member; `None` when `σ` does not exist.
    pub sigma_below_gamma: Option<bool>,
}

impl Verdicts {
    /// Whether every property expected for this kind of family holds.
    /// Families with `q < 1` carry no expectations.
    pub fn as_expected(&self) -> bool {
        if !self.erlang {
            return true;
        }
        let pi0 = if self.single_service {
            self.pi0_constant
        } else {
            self.pi0_strictly_decreasing
        };
        let single = !self.single_service
            || (self.alpha_strictly_increasing && self.alpha_below_one && self.tail_dominance);
        self.gamma_strictly_decreasing
            && pi0
            && self.l_nonincreasing
            && self.w_nonincreasing
            && self.v_nonincreasing
            && single
            && self.sigma_below_gamma != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub lambda_star: f64,
    pub q: f64,
    pub rho: f64,
    pub sigma: Option<f64>,
    pub rows: Vec<MetricsRow>,
    pub verdicts: Verdicts,
}

fn pairwise(values: &[f64], ok: impl Fn(f64, f64) -> bool) -> bool {
    values.windows(2).all(|w| ok(w[0], w[1]))
}

/// Solve every member of the calibrated family and check the orderings.
pub fn monotonicity_sweep(
    lambda_star: f64,
    q: f64,
    k_list: &[usize],
    service: &BatchService,
    options: &SolverOptions,
) -> Result<SweepReport> {
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) || k_list[0] == 0 {
        return Err(Error::InvalidArgument("k values must be positive and strictly increasing".into()));
    }
    let rho = lambda_star / service.rate();
    let mut rows = Vec::with_capacity(k_list.len());
    for &k in k_list {
        let model = QueueModel::new(calibrate(lambda_star, q, k)?, service.clone());
        let solution = solver::solve_gamma(&model, options)?;
        rows.push(metrics(&model, &solution));
    }
    let sigma = gamma_star(rho, service).ok();

    let column = |f: fn(&MetricsRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
    let gammas = column(|r| r.gamma);
    let pi0 = column(|r| r.pi0_bar);
    let alphas = column(|r| r.alpha.unwrap_or(f64::NAN));
    let tails_ok = rows.windows(2).all(|w| {
        (0..=DOMINANCE_LEVELS).all(|level| {
            tail_mass(rho, w[1].gamma, service, level) <= tail_mass(rho, w[0].gamma, service, level) + MONOTONE_SLACK
        })
    });
    let verdicts = Verdicts {
        erlang: q == 1.0,
        single_service: service.is_single(),
        gamma_strictly_decreasing: pairwise(&gammas, |a, b| b < a),
        pi0_constant: pi0.iter().all(|p| (p - (1.0 - rho)).abs() < MONOTONE_SLACK),
        pi0_strictly_decreasing: pairwise(&pi0, |a, b| b < a),
        l_nonincreasing: pairwise(&column(|r| r.l), |a, b| b <= a + MONOTONE_SLACK),
        w_nonincreasing: pairwise(&column(|r| r.w), |a, b| b <= a + MONOTONE_SLACK),
        v_nonincreasing: pairwise(&column(|r| r.v), |a, b| b <= a + MONOTONE_SLACK),
        alpha_strictly_increasing: pairwise(&alphas, |a, b| b > a),
        alpha_below_one: alphas.iter().all(|&a| a < 1.0),
        tail_dominance: tails_ok,
        sigma_below_gamma: sigma.map(|s| gammas.iter().all(|&g| s < g)),
    };
    Ok(SweepReport {
        lambda_star,
        q,
        rho,
        sigma,
        rows,
        verdicts,
    })
}

/// One cell of a reproduced table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCell {
    pub q: f64,
    /// `None` for infinite order.
    pub k: Option<usize>,
    pub gamma: f64,
    pub alpha: f64,
}

impl TableCell {
    /// Level factors below this print as zero at four decimals.
    pub const APPROX_ZERO: f64 = 5e-5;

    pub fn approx_zero(&self) -> bool {
        self.gamma < Self::APPROX_ZERO
    }
}

/// The service law shared by both tables: `μ = 0.8`, `p = (0.25, 0.5, 0.25)`.
pub fn table_service() -> BatchService {
    BatchService::new(0.8, vec![0.25, 0.5, 0.25]).expect("valid pmf")
}

fn grid_q(steps: usize) -> Vec<f64> {
    (1..=steps).map(|i| i as f64 / 10.0).collect()
}

fn solve_cell(arrival: CoxianArrival, q: f64, options: &SolverOptions) -> Result<TableCell> {
    let model = QueueModel::new(arrival, table_service());
    let solution = solver::solve_gamma(&model, options)?;
    Ok(TableCell {
        q,
        k: model.arrival.phases(),
        gamma: solution.gamma,
        alpha: solution.alpha.expect("homogeneous rates"),
    })
}

/// Equal phase rates `λ = 0.5` for `q ∈ {0.1, …, 1}` and
/// `k ∈ {2, 5, 20, 1000, ∞}`, ordered by `(q, k)`.
pub fn table1(options: &SolverOptions) -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for q in grid_q(10) {
        for k in [2, 5, 20, 1000] {
            cells.push(solve_cell(CoxianArrival::homogeneous(k, 0.5, q)?, q, options)?);
        }
        cells.push(solve_cell(CoxianArrival::infinite(0.5, q)?, q, options)?);
    }
    Ok(cells)
}

/// Calibrated to `λ* = 0.5` for `q ∈ {0.1, …, 0.9}` and
/// `k ∈ {2, 5, 10, 20, 50, 1000}`, ordered by `(q, k)`.
pub fn table2(options: &SolverOptions) -> Result<Vec<TableCell>> {
    let mut cells = Vec::new();
    for q in grid_q(9) {
        for k in [2, 5, 10, 20, 50, 1000] {
            cells.push(solve_cell(calibrate(0.5, q, k)?, q, options)?);
        }
    }
    Ok(cells)
}
