//! Level-homogeneous quasi-skip-free block machinery.
//!
//! Orientation: level `m` is the number of customers. The generator moves up
//! by exactly one level through the block `U` and down by `s ∈ 1..=b` levels
//! through `D_s`. At level 0 nothing moves down; at level `m < b` every
//! downward jump of size `≥ m` lands on level 0 (`D′_m = Σ_{s≥m} D_s`).
//!
//! When `U` has a single nonzero column `e`, every up-crossing into a level
//! enters it at phase `e` (the entrance state). Censoring a level on itself
//! with all higher levels taboo then gives the explicit embedded generator
//! `Q̌ = W + (Σ_s D_s)·1·e_eᵀ` and absorption blocks
//! `Ǎ_i = D_i + (Σ_{s>i} D_s)·1·e_eᵀ`, and the level vectors satisfy
//! `π_m = Σ_i π_{m+i} R_i` with `R_i = −Ǎ_i Q̌⁻¹`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix, EIGEN_MAX_ITER};
use crate::model::QueueModel;

const ROW_SUM_TOL: f64 = 1e-12;

/// What happens to upward transitions out of the top level of a truncated
/// generator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TopLevel {
    /// The transition is deleted and the diagonal compensated, so the state
    /// is kept.
    #[default]
    Drop,
    /// The transition is folded back into the top level, landing where it
    /// would have entered the next level.
    Reenter,
}

/// Blocks of a level-homogeneous QSF generator.
#[derive(Debug, Clone, PartialEq)]
pub struct QsfBlocks {
    w0: Matrix,
    w: Matrix,
    up: Matrix,
    down: Vec<Matrix>,
}

fn check_offdiag_nonneg(name: &str, m: &Matrix, diagonal_block: bool) -> Result<()> {
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            if diagonal_block && i == j {
                continue;
            }
            if m[(i, j)] < 0.0 || !m[(i, j)].is_finite() {
                return Err(Error::InvalidBlocks(format!(
                    "{name}[{i}][{j}] = {} is not a valid rate",
                    m[(i, j)]
                )));
            }
        }
    }
    Ok(())
}

impl QsfBlocks {
    /// `down[s-1]` is the block for a jump of `s` levels down.
    pub fn new(w0: Matrix, w: Matrix, up: Matrix, down: Vec<Matrix>) -> Result<Self> {
        let n = w.rows();
        if down.is_empty() {
            return Err(Error::InvalidBlocks("at least one downward block is required".into()));
        }
        for (name, m) in [("W0", &w0), ("W", &w), ("U", &up)].into_iter().chain(down.iter().map(|d| ("D", d))) {
            if m.rows() != n || m.cols() != n {
                return Err(Error::InvalidBlocks(format!(
                    "{name} is {}x{}, expected {n}x{n}",
                    m.rows(),
                    m.cols()
                )));
            }
        }
        check_offdiag_nonneg("W0", &w0, true)?;
        check_offdiag_nonneg("W", &w, true)?;
        check_offdiag_nonneg("U", &up, false)?;
        for (s, d) in down.iter().enumerate() {
            check_offdiag_nonneg(&format!("D{}", s + 1), d, false)?;
        }
        let blocks = QsfBlocks { w0, w, up, down };
        let up_sums = blocks.up.row_sums();
        let scale = [&blocks.w0, &blocks.w].iter().map(|m| m.max_abs()).fold(1.0, f64::max);
        let total_down = blocks.total_down_rates();
        for i in 0..n {
            let boundary = blocks.w0.row(i).iter().sum::<f64>() + up_sums[i];
            let interior = blocks.w.row(i).iter().sum::<f64>() + up_sums[i] + total_down[i];
            if boundary.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidBlocks(format!("boundary row {i} sums to {boundary:e}")));
            }
            if interior.abs() > ROW_SUM_TOL * scale {
                return Err(Error::InvalidBlocks(format!("interior row {i} sums to {interior:e}")));
            }
        }
        Ok(blocks)
    }

    /// Blocks of a finite-order Cox(k)/M^Y/1 queue.
    pub fn from_model(model: &QueueModel) -> Result<Self> {
        let k = model
            .arrival
            .phases()
            .ok_or_else(|| Error::InvalidModel("block form needs a finite number of phases".into()))?;
        let mu = model.service.rate();
        let mut w0 = Matrix::zeros(k, k);
        let mut up = Matrix::zeros(k, k);
        for i in 0..k {
            let rate = model.arrival.rate(i);
            let q = model.arrival.continuation(i);
            w0[(i, i)] = -rate;
            if i + 1 < k {
                w0[(i, i + 1)] = q * rate;
            }
            up[(i, 0)] = (1.0 - q) * rate;
        }
        let w = w0.sub(&Matrix::identity(k).scaled(mu))?;
        let down = (1..=model.service.max_batch())
            .map(|j| Matrix::identity(k).scaled(model.service.prob(j) * mu))
            .collect();
        QsfBlocks::new(w0, w, up, down)
    }

    pub fn phases(&self) -> usize {
        self.w.rows()
    }

    /// Largest downward jump `b`.
    pub fn max_jump(&self) -> usize {
        self.down.len()
    }

    pub fn w0(&self) -> &Matrix {
        &self.w0
    }

    pub fn w(&self) -> &Matrix {
        &self.w
    }

    pub fn up(&self) -> &Matrix {
        &self.up
    }

    /// `D_s` for `1 ≤ s ≤ b`, zero beyond.
    pub fn down(&self, s: usize) -> Matrix {
        assert!(s >= 1, "jump sizes start at 1");
        self.down
            .get(s - 1)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(self.phases(), self.phases()))
    }

    /// `D′_s = Σ_{t≥s} D_t`: jumps from level `s` that land on level 0.
    pub fn down_to_floor(&self, s: usize) -> Matrix {
        let n = self.phases();
        self.down
            .iter()
            .skip(s.saturating_sub(1))
            .fold(Matrix::zeros(n, n), |acc, d| acc.add(d).expect("equal shapes"))
    }

    /// Row sums of `Σ_s D_s`: the total downward rate out of each phase.
    fn total_down_rates(&self) -> Vec<f64> {
        self.down_to_floor(1).row_sums()
    }

    /// Generator restricted to levels `0..=level_cap`, states ordered
    /// `(m, i) ↦ m·n + i`.
    pub fn assemble_truncated_generator(&self, level_cap: usize, top: TopLevel) -> Result<Matrix> {
        if level_cap < 1 {
            return Err(Error::InvalidBlocks("level cap must be at least 1".into()));
        }
        let n = self.phases();
        let size = (level_cap + 1) * n;
        let mut g = Matrix::zeros(size, size);
        let put = |g: &mut Matrix, from: usize, to: usize, block: &Matrix| {
            for i in 0..n {
                for j in 0..n {
                    g[(from * n + i, to * n + j)] += block[(i, j)];
                }
            }
        };
        for m in 0..=level_cap {
            put(&mut g, m, m, if m == 0 { &self.w0 } else { &self.w });
            if m < level_cap {
                put(&mut g, m, m + 1, &self.up);
            } else {
                match top {
                    TopLevel::Drop => {
                        let sums = self.up.row_sums();
                        for (i, s) in sums.iter().enumerate() {
                            g[(m * n + i, m * n + i)] += s;
                        }
                    }
                    TopLevel::Reenter => put(&mut g, m, m, &self.up),
                }
            }
            for target in 0..m {
                let jump = m - target;
                if target == 0 {
                    put(&mut g, m, 0, &self.down_to_floor(jump));
                } else if jump <= self.max_jump() {
                    put(&mut g, m, target, &self.down[jump - 1]);
                }
            }
        }
        Ok(g)
    }

    /// The phase through which every up-crossing enters a level: the single
    /// nonzero column of `U`.
    pub fn entrance_state(&self) -> Option<usize> {
        let n = self.phases();
        let mut nonzero = (0..n).filter(|&j| (0..n).any(|i| self.up[(i, j)] != 0.0));
        let first = nonzero.next()?;
        nonzero.next().is_none().then_some(first)
    }

    /// Whether the up-block has the single-column structure that makes the
    /// explicit lumping possible.
    pub fn has_exit_state(&self) -> bool {
        self.entrance_state().is_some()
    }

    fn require_entrance(&self) -> Result<usize> {
        self.entrance_state().ok_or(Error::NoExitState)
    }

    /// Generator on one level plus an aggregate state standing for all lower
    /// levels. Downward jumps lead to the aggregate; the aggregate returns
    /// through the entrance state. Censoring the aggregate out gives
    /// [`QsfBlocks::lumped_q`].
    pub fn extended_generator(&self) -> Result<Matrix> {
        let entrance = self.require_entrance()?;
        let n = self.phases();
        let down = self.total_down_rates();
        let mut g = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = self.w[(i, j)];
            }
            g[(i, n)] = down[i];
        }
        let return_rate: f64 = (0..n).map(|i| self.up[(i, entrance)]).sum();
        g[(n, entrance)] = return_rate;
        g[(n, n)] = -return_rate;
        Ok(g)
    }

    /// Embedded generator `Q̌` of a level censored on itself with the higher
    /// levels taboo.
    pub fn lumped_q(&self) -> Result<Matrix> {
        let entrance = self.require_entrance()?;
        let mut q = self.w.clone();
        for (i, d) in self.total_down_rates().into_iter().enumerate() {
            q[(i, entrance)] += d;
        }
        Ok(q)
    }

    /// Absorption block `Ǎ_s` from level `m+s` into level `m` (`m ≥ 1`).
    pub fn lumped_a(&self, s: usize) -> Result<Matrix> {
        let entrance = self.require_entrance()?;
        let mut a = self.down(s);
        for (i, d) in self.down_to_floor(s + 1).row_sums().into_iter().enumerate() {
            a[(i, entrance)] += d;
        }
        Ok(a)
    }

    /// `Ǎ_1, …, Ǎ_b` stacked vertically (`b·n × n`).
    pub fn stacked_a(&self) -> Result<Matrix> {
        stack(&(1..=self.max_jump()).map(|s| self.lumped_a(s)).collect::<Result<Vec<_>>>()?)
    }
}

fn stack(blocks: &[Matrix]) -> Result<Matrix> {
    let n = blocks[0].cols();
    let data: Vec<f64> = blocks.iter().flat_map(|b| b.as_slice().iter().copied()).collect();
    Matrix::from_row_major(data.len() / n, n, data)
}

/// Removes state `s` from a generator, redirecting every path through `s`:
/// `q̃_ij = q_ij + q_is·q_sj / q_s` on the remaining states.
pub fn censor_state(q: &Matrix, s: usize) -> Result<Matrix> {
    let n = q.rows();
    if !q.is_square() || s >= n || n < 2 {
        return Err(Error::DimensionMismatch { expected: n, found: s });
    }
    let out_rate = -q[(s, s)];
    if out_rate <= 0.0 {
        return Err(Error::InvalidBlocks(format!("state {s} is absorbing")));
    }
    let keep: Vec<usize> = (0..n).filter(|&i| i != s).collect();
    let mut c = Matrix::zeros(n - 1, n - 1);
    for (a, &i) in keep.iter().enumerate() {
        for (b, &j) in keep.iter().enumerate() {
            c[(a, b)] = q[(i, j)] + q[(i, s)] * q[(s, j)] / out_rate;
        }
    }
    Ok(c)
}

/// The embedded level generator of a Cox(k)/M^Y/1 queue, written out
/// directly: phase `i` advances at `q_i λ_i`, a service returns the level to
/// phase 0 at rate `μ`.
pub fn embedded_q_tilde(model: &QueueModel) -> Result<Matrix> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("embedded generator needs a finite number of phases".into()))?;
    let mu = model.service.rate();
    let mut q = Matrix::zeros(k, k);
    for i in 0..k {
        let rate = model.arrival.rate(i);
        if i == 0 {
            q[(0, 0)] = -rate;
        } else {
            q[(i, 0)] = mu;
            q[(i, i)] = -(rate + mu);
        }
        if i + 1 < k {
            q[(i, i + 1)] = model.arrival.continuation(i) * rate;
        }
    }
    Ok(q)
}

/// The absorption blocks `Ã_1..Ã_b` of a Cox(k)/M^Y/1 queue, written out
/// directly from the batch law.
pub fn embedded_a_tilde(model: &QueueModel) -> Result<Vec<Matrix>> {
    let k = model
        .arrival
        .phases()
        .ok_or_else(|| Error::InvalidModel("embedded blocks need a finite number of phases".into()))?;
    let service = &model.service;
    let mu = service.rate();
    Ok((1..=service.max_batch())
        .map(|i| {
            let mut a = Matrix::identity(k).scaled(service.prob(i) * mu);
            a[(0, 0)] = service.tail(i) * mu;
            for r in 1..k {
                a[(r, 0)] = service.tail(i + 1) * mu;
            }
            a
        })
        .collect())
}

/// Level factor and phase profile extracted from the rate matrices.
#[derive(Debug, Clone, Serialize)]
pub struct RateMatrixResult {
    /// `R_s = −Ǎ_s Q̌⁻¹` for `s = 1..=b`.
    pub r_blocks: Vec<Matrix>,
    /// Block companion matrix of the recursion `π_m = Σ_s π_{m+s} R_s`; equal
    /// to `R_1` when `b = 1`.
    pub companion: Matrix,
    pub gamma: f64,
    /// Positive phase profile of every level `m ≥ 1`, normalized to sum 1.
    pub phase_vector: Vec<f64>,
    /// `‖β·R(γ) − β/γ‖∞` where `R(γ) = Σ_s γ^{s−1} R_s`.
    pub eigen_residual: f64,
    pub iterations: usize,
}

impl RateMatrixResult {
    /// `R(γ) = Σ_s γ^{s−1} R_s`, the matrix with `β·R(γ) = β/γ`.
    pub fn effective_rate_matrix(&self) -> Matrix {
        let n = self.phase_vector.len();
        self.r_blocks
            .iter()
            .enumerate()
            .fold(Matrix::zeros(n, n), |acc, (s, r)| {
                acc.add(&r.scaled(self.gamma.powi(s as i32))).expect("equal shapes")
            })
    }
}

/// Rate matrices and their Perron pair, with default eigen-solver settings.
pub fn rate_matrix(blocks: &QsfBlocks) -> Result<RateMatrixResult> {
    rate_matrix_with(blocks, 1e-14, EIGEN_MAX_ITER)
}

pub fn rate_matrix_with(blocks: &QsfBlocks, tol: f64, max_iter: usize) -> Result<RateMatrixResult> {
    let n = blocks.phases();
    let b = blocks.max_jump();
    let q_inv = linalg::invert(&blocks.lumped_q()?)?;
    let r_blocks = (1..=b)
        .map(|s| Ok(blocks.lumped_a(s)?.mul(&q_inv)?.scaled(-1.0)))
        .collect::<Result<Vec<_>>>()?;

    let mut companion = Matrix::zeros(b * n, b * n);
    for (s, r) in r_blocks.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                // Clamp round-off below zero; the blocks are nonnegative.
                companion[(s * n + i, j)] = r[(i, j)].max(0.0);
            }
        }
        if s + 1 < b {
            for i in 0..n {
                companion[(s * n + i, (s + 1) * n + i)] = 1.0;
            }
        }
    }

    let pair = linalg::dominant_left_eigenpair(&companion, tol, max_iter)?;
    let gamma = 1.0 / pair.value;
    let head = &pair.left_vector[..n];
    let total: f64 = head.iter().sum();
    let phase_vector: Vec<f64> = head.iter().map(|x| x / total).collect();

    let mut result = RateMatrixResult {
        r_blocks,
        companion,
        gamma,
        phase_vector,
        eigen_residual: 0.0,
        iterations: pair.iterations,
    };
    let lhs = result.effective_rate_matrix().left_mul(&result.phase_vector)?;
    result.eigen_residual = lhs
        .iter()
        .zip(&result.phase_vector)
        .map(|(l, beta)| (l - beta / gamma).abs())
        .fold(0.0, f64::max);
    Ok(result)
}
