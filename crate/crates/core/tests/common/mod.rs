#![allow(dead_code)]

use coxqueue::{BatchService, CoxianArrival, QueueModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn table_service() -> BatchService {
    BatchService::new(0.8, vec![0.25, 0.5, 0.25]).unwrap()
}

pub fn random_pmf(rng: &mut ChaCha8Rng, b: usize) -> Vec<f64> {
    let mut pmf: Vec<f64> = (0..b).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = pmf.iter().sum();
    pmf.iter_mut().for_each(|p| *p /= total);
    // Absorb rounding so the pmf sums to 1 within the model tolerance.
    let head: f64 = pmf[..b - 1].iter().sum();
    pmf[b - 1] = 1.0 - head;
    pmf
}

pub fn random_arrival(rng: &mut ChaCha8Rng, k: usize) -> CoxianArrival {
    let rates: Vec<f64> = (0..k).map(|_| rng.gen_range(0.2..3.0)).collect();
    let mut q: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..=1.0)).collect();
    q[k - 1] = 0.0;
    CoxianArrival::new(rates, q).unwrap()
}

/// Random finite-order model with load `λ*/(μE[Y])` in `(0.2, 0.9)`.
pub fn random_ergodic_model(seed: u64, max_k: usize, max_b: usize) -> QueueModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=max_k);
    let b = rng.gen_range(1..=max_b);
    let arrival = random_arrival(&mut rng, k);
    let pmf = random_pmf(&mut rng, b);
    let mean_batch: f64 = pmf.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum();
    let load = rng.gen_range(0.2..0.9);
    let mu = arrival.arrival_rate() / (load * mean_batch);
    QueueModel::new(arrival, BatchService::new(mu, pmf).unwrap())
}

/// Random model without any load constraint.
pub fn random_model(seed: u64) -> QueueModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=6);
    let b = rng.gen_range(1..=4);
    let arrival = random_arrival(&mut rng, k);
    let pmf = random_pmf(&mut rng, b);
    let mu = rng.gen_range(0.1..3.0);
    QueueModel::new(arrival, BatchService::new(mu, pmf).unwrap())
}
