//! Model types for the Cox(k)/M^Y/1 queue.
//!
//! Arrivals follow a Coxian distribution: phase `i` lasts an exponential time
//! with rate `λ_i`, after which the next phase starts with probability `q_i`
//! or a customer arrives with probability `1 − q_i` (and `q_{k−1} = 0`).
//! A single exponential server with rate `μ` removes batches of `Y`
//! customers, `P(Y = j) = p_j` for `1 ≤ j ≤ b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ p_j = 1`.
pub const PMF_SUM_TOL: f64 = 1e-12;

/// Order of a Coxian distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    Finite(usize),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
enum Shape {
    Finite { rates: Vec<f64>, continuation: Vec<f64> },
    Infinite { rate: f64, continuation: f64 },
}

/// Coxian inter-arrival distribution of finite or infinite order.
///
/// The infinite-order variant is homogeneous: every phase has the same rate
/// and the same continuation probability.
#[derive(Debug, Clone, PartialEq)]
pub struct CoxianArrival {
    shape: Shape,
}

fn check_rate(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidModel(format!("{name} must be positive and finite, got {value}")))
    }
}

impl CoxianArrival {
    /// General Cox(k) with per-phase rates and continuation probabilities.
    /// `continuation` must have length `k` and end in `0`.
    pub fn new(rates: Vec<f64>, continuation: Vec<f64>) -> Result<Self> {
        let k = rates.len();
        if k == 0 {
            return Err(Error::InvalidModel("arrival.lambda: at least one phase is required".into()));
        }
        if continuation.len() != k {
            return Err(Error::InvalidModel(format!(
                "arrival.q: expected {k} continuation probabilities, got {}",
                continuation.len()
            )));
        }
        for (i, &rate) in rates.iter().enumerate() {
            check_rate(&format!("arrival.lambda[{i}]"), rate)?;
        }
        for (i, &q) in continuation[..k - 1].iter().enumerate() {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::InvalidModel(format!("arrival.q[{i}] must lie in (0, 1], got {q}")));
            }
        }
        if continuation[k - 1] != 0.0 {
            return Err(Error::InvalidModel(format!(
                "arrival.q[{}] must be 0 (last phase), got {}",
                k - 1,
                continuation[k - 1]
            )));
        }
        Ok(CoxianArrival {
            shape: Shape::Finite { rates, continuation },
        })
    }

    /// Cox(k) with equal rates and equal continuation probabilities `q`
    /// in every phase but the last.
    pub fn homogeneous(k: usize, rate: f64, q: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidModel("arrival.k must be at least 1".into()));
        }
        let mut continuation = vec![q; k];
        continuation[k - 1] = 0.0;
        CoxianArrival::new(vec![rate; k], continuation)
    }

    /// Erlang(k, λ): every phase must be completed.
    pub fn erlang(k: usize, rate: f64) -> Result<Self> {
        CoxianArrival::homogeneous(k, rate, 1.0)
    }

    pub fn exponential(rate: f64) -> Result<Self> {
        CoxianArrival::new(vec![rate], vec![0.0])
    }

    /// Homogeneous Cox(∞). `q = 1` is accepted and describes a source that
    /// never produces a customer.
    pub fn infinite(rate: f64, q: f64) -> Result<Self> {
        check_rate("arrival.lambda", rate)?;
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidModel(format!("arrival.q must lie in (0, 1], got {q}")));
        }
        Ok(CoxianArrival {
            shape: Shape::Infinite { rate, continuation: q },
        })
    }

    pub fn order(&self) -> Order {
        match &self.shape {
            Shape::Finite { rates, .. } => Order::Finite(rates.len()),
            Shape::Infinite { .. } => Order::Infinite,
        }
    }

    /// Number of phases, `None` for infinite order.
    pub fn phases(&self) -> Option<usize> {
        match self.order() {
            Order::Finite(k) => Some(k),
            Order::Infinite => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self.shape, Shape::Infinite { .. })
    }

    /// Rate of phase `i`.
    pub fn rate(&self, i: usize) -> f64 {
        match &self.shape {
            Shape::Finite { rates, .. } => rates[i],
            Shape::Infinite { rate, .. } => *rate,
        }
    }

    /// Continuation probability after phase `i`.
    pub fn continuation(&self, i: usize) -> f64 {
        match &self.shape {
            Shape::Finite { continuation, .. } => continuation[i],
            Shape::Infinite { continuation, .. } => *continuation,
        }
    }

    pub fn rates(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Finite { rates, .. } => Some(rates),
            Shape::Infinite { .. } => None,
        }
    }

    pub fn continuations(&self) -> Option<&[f64]> {
        match &self.shape {
            Shape::Finite { continuation, .. } => Some(continuation),
            Shape::Infinite { .. } => None,
        }
    }

    /// True when every phase has the same rate.
    pub fn has_homogeneous_rates(&self) -> bool {
        match &self.shape {
            Shape::Finite { rates, .. } => rates.iter().all(|&r| r == rates[0]),
            Shape::Infinite { .. } => true,
        }
    }

    /// The common continuation probability of phases `0..k−1`, if they share
    /// one. `None` for a single phase.
    pub fn common_continuation(&self) -> Option<f64> {
        match &self.shape {
            Shape::Finite { continuation, .. } => {
                let head = &continuation[..continuation.len() - 1];
                let first = *head.first()?;
                head.iter().all(|&q| q == first).then_some(first)
            }
            Shape::Infinite { continuation, .. } => Some(*continuation),
        }
    }

    /// Erlang: homogeneous rates and no early arrivals. Cox(1) counts.
    pub fn is_erlang(&self) -> bool {
        match &self.shape {
            Shape::Finite { continuation, .. } => {
                self.has_homogeneous_rates() && continuation[..continuation.len() - 1].iter().all(|&q| q == 1.0)
            }
            Shape::Infinite { .. } => false,
        }
    }

    /// Mean inter-arrival time `E[C] = Σ_i (Π_{l<i} q_l) / λ_i`.
    pub fn mean(&self) -> f64 {
        match &self.shape {
            Shape::Finite { rates, continuation } => {
                let mut reach = 1.0;
                let mut mean = 0.0;
                for (rate, q) in rates.iter().zip(continuation) {
                    mean += reach / rate;
                    reach *= q;
                }
                mean
            }
            Shape::Infinite { rate, continuation } => 1.0 / (rate * (1.0 - continuation)),
        }
    }

    /// Long-run arrival rate `1 / E[C]`.
    pub fn arrival_rate(&self) -> f64 {
        match &self.shape {
            Shape::Finite { .. } => 1.0 / self.mean(),
            Shape::Infinite { rate, continuation } => rate * (1.0 - continuation),
        }
    }
}

/// Exponential batch server: rate `μ`, batch-size pmf `p_1..p_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchService {
    rate: f64,
    pmf: Vec<f64>,
}

impl BatchService {
    /// `pmf[j-1] = P(Y = j)`. Trailing zero probabilities are dropped so that
    /// the maximum batch size has positive probability.
    pub fn new(rate: f64, pmf: Vec<f64>) -> Result<Self> {
        check_rate("service.mu", rate)?;
        for (j, &p) in pmf.iter().enumerate() {
            if !(p.is_finite() && p >= 0.0) {
                return Err(Error::InvalidModel(format!("service.p[{j}] must be a probability, got {p}")));
            }
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOL {
            return Err(Error::InvalidModel(format!("service.p must sum to 1, sums to {total}")));
        }
        let mut pmf = pmf;
        while pmf.last() == Some(&0.0) {
            pmf.pop();
        }
        Ok(BatchService { rate, pmf })
    }

    /// Single-customer service, `Y ≡ 1`.
    pub fn single(rate: f64) -> Result<Self> {
        BatchService::new(rate, vec![1.0])
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Largest batch size `b`.
    pub fn max_batch(&self) -> usize {
        self.pmf.len()
    }

    /// `P(Y = j)`, zero outside `1..=b`.
    pub fn prob(&self, j: usize) -> f64 {
        if j == 0 {
            0.0
        } else {
            self.pmf.get(j - 1).copied().unwrap_or(0.0)
        }
    }

    /// `P(Y ≥ j)`.
    pub fn tail(&self, j: usize) -> f64 {
        if j <= 1 {
            1.0
        } else {
            self.pmf.iter().skip(j - 1).sum()
        }
    }

    pub fn is_single(&self) -> bool {
        self.pmf.len() == 1
    }

    pub fn mean_batch(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(j, p)| (j + 1) as f64 * p).sum()
    }

    /// Probability generating function `φ_Y(x) = Σ_j p_j x^j` (Horner).
    pub fn pgf(&self, x: f64) -> f64 {
        self.pmf.iter().rev().fold(0.0, |acc, p| (acc + p) * x)
    }

    pub fn pgf_derivative(&self, x: f64) -> f64 {
        self.pmf
            .iter()
            .enumerate()
            .rev()
            .fold(0.0, |acc, (j, p)| acc * x + (j + 1) as f64 * p)
    }

    /// Maximum service throughput `μ·E[Y]`.
    pub fn capacity(&self) -> f64 {
        self.rate * self.mean_batch()
    }
}

/// A Cox(k)/M^Y/1 queue.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueModel {
    pub arrival: CoxianArrival,
    pub service: BatchService,
}

impl QueueModel {
    pub fn new(arrival: CoxianArrival, service: BatchService) -> Self {
        QueueModel { arrival, service }
    }

    /// Ergodic iff `1/E[C] < μ·E[Y]`.
    pub fn is_ergodic(&self) -> bool {
        self.arrival.arrival_rate() < self.service.capacity()
    }

    /// `NotErgodic` unless [`QueueModel::is_ergodic`].
    pub fn require_ergodic(&self) -> Result<()> {
        if self.is_ergodic() {
            Ok(())
        } else {
            Err(Error::NotErgodic {
                arrival_rate: self.arrival.arrival_rate(),
                service_capacity: self.service.capacity(),
            })
        }
    }

    /// `ρ = λ*/μ` with `λ* = 1/E[C]`.
    pub fn rho(&self) -> f64 {
        self.arrival.arrival_rate() / self.service.rate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ModelSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidModel(format!("malformed model JSON: {e}")))?;
        spec.into_model()
    }

    pub fn to_spec(&self) -> ModelSpec {
        let arrival = match &self.arrival.shape {
            Shape::Finite { rates, continuation } => ArrivalSpec {
                k: OrderSpec::Count(rates.len()),
                lambda: ScalarOrList::List(rates.clone()),
                q: Some(ScalarOrList::List(continuation.clone())),
            },
            Shape::Infinite { rate, continuation } => ArrivalSpec {
                k: OrderSpec::Named("inf".into()),
                lambda: ScalarOrList::Scalar(*rate),
                q: Some(ScalarOrList::Scalar(*continuation)),
            },
        };
        ModelSpec {
            arrival,
            service: ServiceSpec {
                mu: self.service.rate,
                p: self.service.pmf.clone(),
            },
        }
    }
}

/// Free-function form of [`BatchService::pgf`].
pub fn phi_y(service: &BatchService, x: f64) -> f64 {
    service.pgf(x)
}

/// Free-function form of [`CoxianArrival::mean`].
pub fn mean_interarrival(arrival: &CoxianArrival) -> f64 {
    arrival.mean()
}

/// Free-function form of [`QueueModel::is_ergodic`].
pub fn is_ergodic(model: &QueueModel) -> bool {
    model.is_ergodic()
}

/// JSON model file:
/// `{"arrival": {"k": int|"inf", "lambda": x|[..], "q": x|[..]}, "service": {"mu": x, "p": [..]}}`.
///
/// A scalar `lambda` is broadcast to every phase. A scalar `q` is broadcast to
/// phases `0..k−1` and the last phase gets `0`; a list may have length `k−1`
/// (last entry implied) or `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub arrival: ArrivalSpec,
    pub service: ServiceSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalSpec {
    pub k: OrderSpec,
    pub lambda: ScalarOrList,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<ScalarOrList>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceSpec {
    pub mu: f64,
    pub p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Count(usize),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarOrList {
    Scalar(f64),
    List(Vec<f64>),
}

impl ModelSpec {
    pub fn into_model(self) -> Result<QueueModel> {
        let service = BatchService::new(self.service.mu, self.service.p)?;
        let a = self.arrival;
        let arrival = match a.k {
            OrderSpec::Named(name) if name == "inf" || name == "infinite" => {
                let rate = match a.lambda {
                    ScalarOrList::Scalar(x) => x,
                    ScalarOrList::List(_) => {
                        return Err(Error::InvalidModel("arrival.lambda must be a scalar for k = \"inf\"".into()))
                    }
                };
                let q = match a.q {
                    Some(ScalarOrList::Scalar(x)) => x,
                    _ => return Err(Error::InvalidModel("arrival.q must be a scalar for k = \"inf\"".into())),
                };
                CoxianArrival::infinite(rate, q)?
            }
            OrderSpec::Named(name) => {
                return Err(Error::InvalidModel(format!(
                    "arrival.k must be a positive integer or \"inf\", got {name:?}"
                )))
            }
            OrderSpec::Count(0) => return Err(Error::InvalidModel("arrival.k must be at least 1".into())),
            OrderSpec::Count(k) => {
                let rates = match a.lambda {
                    ScalarOrList::Scalar(x) => vec![x; k],
                    ScalarOrList::List(v) if v.len() == k => v,
                    ScalarOrList::List(v) => {
                        return Err(Error::InvalidModel(format!(
                            "arrival.lambda: expected {k} rates, got {}",
                            v.len()
                        )))
                    }
                };
                let continuation = match a.q {
                    None if k == 1 => vec![0.0],
                    None => return Err(Error::InvalidModel("arrival.q is required when k > 1".into())),
                    Some(ScalarOrList::Scalar(q)) => {
                        let mut v = vec![q; k];
                        v[k - 1] = 0.0;
                        v
                    }
                    Some(ScalarOrList::List(mut v)) if v.len() + 1 == k => {
                        v.push(0.0);
                        v
                    }
                    Some(ScalarOrList::List(v)) if v.len() == k => v,
                    Some(ScalarOrList::List(v)) => {
                        return Err(Error::InvalidModel(format!(
                            "arrival.q: expected {} or {k} probabilities, got {}",
                            k - 1,
                            v.len()
                        )))
                    }
                };
                CoxianArrival::new(rates, continuation)?
            }
        };
        Ok(QueueModel::new(arrival, service))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table_service() -> BatchService {
        BatchService::new(0.8, vec![0.25, 0.5, 0.25]).unwrap()
    }

    #[test]
    fn pgf_examples() {
        assert_eq!(BatchService::single(1.0).unwrap().pgf(0.5), 0.5);
        let s = table_service();
        assert!((s.pgf(1.0) - 1.0).abs() < 1e-15);
        let expected = 0.25 * 0.35 + 0.5 * 0.1225 + 0.25 * 0.042875;
        assert!((s.pgf(0.35) - expected).abs() < 1e-15);
        assert!((s.pgf_derivative(1.0) - s.mean_batch()).abs() < 1e-15);
    }

    #[test]
    fn mean_interarrival_examples() {
        assert_eq!(CoxianArrival::exponential(2.0).unwrap().mean(), 0.5);
        assert_eq!(CoxianArrival::erlang(4, 2.0).unwrap().mean(), 2.0);
        let cox2 = CoxianArrival::new(vec![1.0, 1.0], vec![0.5, 0.0]).unwrap();
        assert!((cox2.mean() - 1.5).abs() < 1e-15);
        let inf = CoxianArrival::infinite(0.5, 0.5).unwrap();
        assert!((inf.mean() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn ergodicity_examples() {
        let table = QueueModel::new(CoxianArrival::homogeneous(5, 0.5, 0.5).unwrap(), table_service());
        assert!(table.is_ergodic());
        let mm1 = QueueModel::new(
            CoxianArrival::exponential(1.0).unwrap(),
            BatchService::single(1.0).unwrap(),
        );
        assert!(!mm1.is_ergodic());
        assert!(matches!(mm1.require_ergodic(), Err(Error::NotErgodic { .. })));
        let cox2 = QueueModel::new(
            CoxianArrival::new(vec![1.0, 1.0], vec![0.5, 0.0]).unwrap(),
            BatchService::single(1.0).unwrap(),
        );
        assert!(cox2.is_ergodic());
    }

    #[test]
    fn infinite_order_ergodicity_uses_effective_rate() {
        // Arrival rate λ(1−q) = 0.25 against capacity 0.3.
        let m = QueueModel::new(
            CoxianArrival::infinite(0.5, 0.5).unwrap(),
            BatchService::single(0.3).unwrap(),
        );
        assert!(m.is_ergodic());
        let never = CoxianArrival::infinite(0.5, 1.0).unwrap();
        assert_eq!(never.arrival_rate(), 0.0);
        assert!(never.mean().is_infinite());
    }

    #[test]
    fn validation_errors() {
        assert!(CoxianArrival::new(vec![1.0, 1.0], vec![0.5, 0.1]).is_err());
        assert!(CoxianArrival::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(CoxianArrival::new(vec![1.0, -1.0], vec![0.5, 0.0]).is_err());
        assert!(CoxianArrival::new(vec![1.0], vec![0.5, 0.0]).is_err());
        assert!(CoxianArrival::new(vec![], vec![]).is_err());
        assert!(CoxianArrival::infinite(1.0, 0.0).is_err());
        assert!(BatchService::new(1.0, vec![0.5, 0.4]).is_err());
        assert!(BatchService::new(1.0, vec![-0.5, 1.5]).is_err());
        assert!(BatchService::new(0.0, vec![1.0]).is_err());
        assert_eq!(BatchService::new(1.0, vec![0.5, 0.5, 0.0]).unwrap().max_batch(), 2);
    }

    #[test]
    fn classification() {
        assert!(CoxianArrival::erlang(3, 1.0).unwrap().is_erlang());
        assert!(CoxianArrival::exponential(1.0).unwrap().is_erlang());
        let h = CoxianArrival::homogeneous(4, 1.0, 0.3).unwrap();
        assert!(!h.is_erlang());
        assert_eq!(h.common_continuation(), Some(0.3));
        let g = CoxianArrival::new(vec![1.0, 2.0, 3.0], vec![0.3, 0.4, 0.0]).unwrap();
        assert!(!g.has_homogeneous_rates());
        assert_eq!(g.common_continuation(), None);
    }

    #[test]
    fn tail_probabilities() {
        let s = table_service();
        assert_eq!(s.tail(1), 1.0);
        assert_eq!(s.tail(2), 0.75);
        assert_eq!(s.tail(3), 0.25);
        assert_eq!(s.tail(4), 0.0);
        assert_eq!(s.prob(0), 0.0);
        assert_eq!(s.prob(2), 0.5);
    }

    #[test]
    fn json_scalars_broadcast() {
        let text = r#"{"arrival": {"k": 5, "lambda": 0.5, "q": 0.5},
                       "service": {"mu": 0.8, "p": [0.25, 0.5, 0.25]}}"#;
        let m = QueueModel::from_json(text).unwrap();
        assert_eq!(m.arrival.phases(), Some(5));
        assert_eq!(m.arrival.continuations().unwrap(), &[0.5, 0.5, 0.5, 0.5, 0.0]);
        assert_eq!(m.arrival.rates().unwrap(), &[0.5; 5]);

        let inf = r#"{"arrival": {"k": "inf", "lambda": 0.5, "q": 0.3}, "service": {"mu": 0.8, "p": [1]}}"#;
        assert!(QueueModel::from_json(inf).unwrap().arrival.is_infinite());

        let mm1 = r#"{"arrival": {"k": 1, "lambda": 0.5}, "service": {"mu": 0.8, "p": [1.0]}}"#;
        assert!(QueueModel::from_json(mm1).unwrap().arrival.is_erlang());

        let short_q = r#"{"arrival": {"k": 3, "lambda": [1, 2, 3], "q": [0.2, 0.9]}, "service": {"mu": 1, "p": [1]}}"#;
        assert_eq!(
            QueueModel::from_json(short_q).unwrap().arrival.continuations().unwrap(),
            &[0.2, 0.9, 0.0]
        );
    }

    #[test]
    fn json_errors_name_the_field() {
        let bad_q = r#"{"arrival": {"k": 3, "lambda": 1, "q": [0.2]}, "service": {"mu": 1, "p": [1]}}"#;
        let err = QueueModel::from_json(bad_q).unwrap_err().to_string();
        assert!(err.contains("arrival.q"), "{err}");
        let bad_p = r#"{"arrival": {"k": 1, "lambda": 1}, "service": {"mu": 1, "p": [0.3]}}"#;
        assert!(QueueModel::from_json(bad_p).unwrap_err().to_string().contains("service.p"));
        let bad_k = r#"{"arrival": {"k": "many", "lambda": 1}, "service": {"mu": 1, "p": [1]}}"#;
        assert!(QueueModel::from_json(bad_k).unwrap_err().to_string().contains("arrival.k"));
        assert!(QueueModel::from_json("{").is_err());
    }

    #[test]
    fn json_round_trip() {
        let m = QueueModel::new(
            CoxianArrival::new(vec![1.0, 2.0, 0.5], vec![0.4, 0.7, 0.0]).unwrap(),
            table_service(),
        );
        let text = serde_json::to_string(&m.to_spec()).unwrap();
        assert_eq!(QueueModel::from_json(&text).unwrap(), m);
    }

    fn pmf_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1.0, 1..6).prop_filter_map("positive mass", |w| {
            let total: f64 = w.iter().sum();
            (total > 1e-3).then(|| w.iter().map(|x| x / total).collect())
        })
    }

    proptest! {
        #[test]
        fn pgf_is_normalized_monotone_and_convex(pmf in pmf_strategy(), x in 0.0f64..0.98) {
            let s = BatchService::new(1.0, pmf).unwrap();
            prop_assert!((s.pgf(1.0) - 1.0).abs() < 1e-12);
            let h = 0.01;
            prop_assert!(s.pgf(x + h) >= s.pgf(x) - 1e-15);
            let second = s.pgf(x + 2.0 * h) - 2.0 * s.pgf(x + h) + s.pgf(x);
            prop_assert!(second >= -1e-14);
        }

        #[test]
        fn erlang_mean_is_k_over_lambda(k in 1usize..40, rate in 0.1f64..10.0) {
            let a = CoxianArrival::erlang(k, rate).unwrap();
            prop_assert!((a.mean() - k as f64 / rate).abs() < 1e-12 * k as f64 / rate);
        }

        #[test]
        fn ergodicity_matches_sign_of_load(k in 1usize..6, rate in 0.1f64..3.0, q in 0.05f64..1.0, mu in 0.1f64..3.0, pmf in pmf_strategy()) {
            let model = QueueModel::new(
                CoxianArrival::homogeneous(k, rate, q).unwrap(),
                BatchService::new(mu, pmf).unwrap(),
            );
            let sign = model.service.capacity() * model.arrival.mean() - 1.0;
            prop_assert_eq!(model.is_ergodic(), sign > 0.0);
        }
    }
}
