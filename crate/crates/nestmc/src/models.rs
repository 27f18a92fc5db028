//! Built-in benchmark models.
//!
//! - [`NormalNormalModel`]: θ ~ N(0,1), h(θ;ξ) = θ + ξ with ξ ~ N(0,1).
//!   Every quantity of interest has a closed form, which makes it the
//!   reference model for coverage and bias experiments.
//! - [`MM1Model`]: an M/M/1 queue whose arrival and service rates carry
//!   Bayesian Gamma posteriors fit from exponential observations; each
//!   response draw is one customer's sojourn time along the Lindley
//!   recursion from an empty system, restarting every `cycles` customers,
//!   so M = `cycles` inner draws average the first `cycles` sojourn times.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use rand_distr::{Distribution, Exp, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{AnalyticTruth, ResponseModel};
use crate::rng::RngStream;
use crate::special::{norm_pdf, norm_quantile};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("observation {index} is not strictly positive ({value})")]
    NonPositiveObservation { index: usize, value: f64 },
    #[error("data set must contain at least one observation")]
    EmptyData,
    #[error("unstable queue: lambda {lambda} >= mu {mu}")]
    UnstableQueue { lambda: f64, mu: f64 },
    #[error("stability rejection guard exhausted after {0} redraws")]
    RejectionGuardExhausted(usize),
    #[error("failed to read data file {path}: {reason}")]
    DataFile { path: String, reason: String },
}

// ---------------------------------------------------------------------------
// Normal + normal benchmark
// ---------------------------------------------------------------------------

/// Sum-of-two-standard-normals benchmark: H(θ) = θ, τ²_θ ≡ 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct NormalNormalModel;

/// Closed forms for the normal-normal model: v_α = Φ⁻¹(α),
/// c_α = φ(v_α)/(1−α), f = φ, Λ(t) = φ(t)/2.
pub struct NormalNormalTruth;

impl AnalyticTruth for NormalNormalTruth {
    fn var_alpha(&self, alpha: f64) -> f64 {
        norm_quantile(alpha)
    }

    fn cvar_alpha(&self, alpha: f64) -> f64 {
        norm_pdf(norm_quantile(alpha)) / (1.0 - alpha)
    }

    fn density(&self, t: f64) -> f64 {
        norm_pdf(t)
    }

    fn bias_lambda(&self, t: f64) -> f64 {
        0.5 * norm_pdf(t)
    }

    fn bias_lambda_prime(&self, t: f64) -> f64 {
        -0.5 * t * norm_pdf(t)
    }

    /// σ_v = √(α(1−α))/φ(v_α); σ_c from the truncated-normal moments
    /// E[(Z−v)⁺] = φ(v) − v(1−α) and E[((Z−v)⁺)²] = (1+v²)(1−α) − vφ(v);
    /// τ_v = τ_c = 1 since τ²_θ ≡ 1.
    fn variance_terms(&self, alpha: f64) -> Option<crate::ci::VarianceTerms> {
        let v = norm_quantile(alpha);
        let tail = 1.0 - alpha;
        let hinge_mean = norm_pdf(v) - v * tail;
        let hinge_sq = (1.0 + v * v) * tail - v * norm_pdf(v);
        Some(crate::ci::VarianceTerms {
            sigma_v: (alpha * tail).sqrt() / norm_pdf(v),
            sigma_c: (hinge_sq - hinge_mean * hinge_mean).max(0.0).sqrt() / tail,
            tau_v: 1.0,
            tau_c: 1.0,
            source: crate::ci::VarianceSource::Analytic,
        })
    }
}

static NORMAL_NORMAL_TRUTH: NormalNormalTruth = NormalNormalTruth;

impl ResponseModel for NormalNormalModel {
    type Theta = f64;

    fn draw_scenario(&self, rng: &mut RngStream) -> Result<f64, String> {
        Ok(rng.sample(StandardNormal))
    }

    fn draw_response(&self, theta: &f64, rng: &mut RngStream) -> Result<f64, String> {
        let xi: f64 = rng.sample(StandardNormal);
        Ok(theta + xi)
    }

    fn truth(&self) -> Option<&dyn AnalyticTruth> {
        Some(&NORMAL_NORMAL_TRUTH)
    }
}

// ---------------------------------------------------------------------------
// Data sets and conjugate posteriors
// ---------------------------------------------------------------------------

/// Historical interarrival observations x and service observations y.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl DataSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ModelError> {
        if x.is_empty() || y.is_empty() {
            return Err(ModelError::EmptyData);
        }
        for (index, &value) in x.iter().chain(y.iter()).enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositiveObservation { index, value });
            }
        }
        Ok(Self { x, y })
    }

    /// Synthesize observations at true rates (λ₀, μ₀): n interarrival
    /// times Exp(λ₀) and n service times Exp(μ₀).
    pub fn synthesize(lambda0: f64, mu0: f64, n: usize, seed: u64) -> Result<Self, ModelError> {
        assert!(lambda0 > 0.0 && mu0 > 0.0 && n >= 1);
        let mut rng = RngStream::new(seed, 0);
        let exp_l = Exp::new(lambda0).expect("positive rate");
        let exp_m = Exp::new(mu0).expect("positive rate");
        let x = (0..n).map(|_| exp_l.sample(&mut rng)).collect();
        let y = (0..n).map(|_| exp_m.sample(&mut rng)).collect();
        Self::new(x, y)
    }

    /// One positive decimal per line.
    pub fn load_column(path: &str) -> Result<Vec<f64>, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::DataFile {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim().parse::<f64>().map_err(|e| ModelError::DataFile {
                    path: path.to_string(),
                    reason: format!("bad line {l:?}: {e}"),
                })
            })
            .collect()
    }

    pub fn write_column(path: &str, values: &[f64]) -> Result<(), ModelError> {
        let body: String = values.iter().map(|v| format!("{v}\n")).collect();
        std::fs::write(path, body).map_err(|e| ModelError::DataFile {
            path: path.to_string(),
            reason: e.to_string(),
        })
    }
}

/// Gamma(shape, rate) posterior of an exponential rate parameter.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GammaPosterior {
    pub shape: f64,
    pub rate: f64,
}

impl GammaPosterior {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("valid gamma parameters")
            .sample(rng)
    }
}

/// Conjugate update under the non-informative prior ∝ 1/rate:
/// n exponential observations with sum S give Gamma(shape n, rate S).
pub fn posterior_from_data(data: &DataSet) -> (GammaPosterior, GammaPosterior) {
    let lambda = GammaPosterior {
        shape: data.x.len() as f64,
        rate: data.x.iter().sum(),
    };
    let mu = GammaPosterior {
        shape: data.y.len() as f64,
        rate: data.y.iter().sum(),
    };
    (lambda, mu)
}

// ---------------------------------------------------------------------------
// M/M/1 queue
// ---------------------------------------------------------------------------

/// Belief over one rate parameter: a Gamma posterior or a point mass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RateBelief {
    Gamma(GammaPosterior),
    Point(f64),
}

impl RateBelief {
    fn sample(&self, rng: &mut RngStream) -> f64 {
        match self {
            RateBelief::Gamma(g) => g.sample(rng),
            RateBelief::Point(v) => *v,
        }
    }
}

/// Mean sojourn time of the first `cycles` customers, from the Lindley
/// recursion started at an empty system: W₁ = 0,
/// W_{k+1} = max(0, W_k + S_k − A_{k+1}), T_k = W_k + S_k.
pub fn sojourn_mean_from_draws(services: &[f64], interarrivals: &[f64]) -> f64 {
    let cycles = services.len();
    assert!(cycles >= 1);
    assert_eq!(interarrivals.len(), cycles - 1);
    let mut wait = 0.0f64;
    let mut total = 0.0f64;
    for k in 0..cycles {
        total += wait + services[k];
        if k + 1 < cycles {
            wait = (wait + services[k] - interarrivals[k]).max(0.0);
        }
    }
    total / cycles as f64
}

/// Simulate the queue's first `cycles` sojourn times at fixed rates and
/// return their mean.
pub fn simulate_sojourn_mean(
    lambda: f64,
    mu: f64,
    cycles: usize,
    rng: &mut RngStream,
) -> Result<f64, ModelError> {
    if !(lambda > 0.0 && lambda < mu) {
        return Err(ModelError::UnstableQueue { lambda, mu });
    }
    assert!(cycles >= 1);
    let service = Exp::new(mu).expect("positive rate");
    let arrival = Exp::new(lambda).expect("positive rate");
    let mut wait = 0.0f64;
    let mut total = 0.0f64;
    for k in 0..cycles {
        let s = service.sample(rng);
        total += wait + s;
        if k + 1 < cycles {
            let a = arrival.sample(rng);
            wait = (wait + s - a).max(0.0);
        }
    }
    Ok(total / cycles as f64)
}

/// One sampled (λ, μ) scenario together with the queue state of its
/// simulation lane. Successive response draws walk the sojourn sequence
/// of a queue started empty, restarting from empty every `cycles` draws,
/// so the inner mean over M = `cycles` draws is exactly the mean sojourn
/// time of the queue's first `cycles` customers.
///
/// The Lindley state sits behind atomics because the engine hands out
/// shared references; all draws for one scenario happen sequentially on
/// one thread, so relaxed load/store ordering is sufficient.
#[derive(Debug)]
pub struct MM1Scenario {
    pub lambda: f64,
    pub mu: f64,
    /// f64 bits of the pending waiting time W_k.
    wait_bits: AtomicU64,
    /// Sojourn cycles emitted since the last restart from empty.
    cycle: AtomicU64,
}

impl MM1Scenario {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self {
            lambda,
            mu,
            wait_bits: AtomicU64::new(0.0f64.to_bits()),
            cycle: AtomicU64::new(0),
        }
    }
}

impl Clone for MM1Scenario {
    fn clone(&self) -> Self {
        Self {
            lambda: self.lambda,
            mu: self.mu,
            wait_bits: AtomicU64::new(self.wait_bits.load(Ordering::Relaxed)),
            cycle: AtomicU64::new(self.cycle.load(Ordering::Relaxed)),
        }
    }
}

impl PartialEq for MM1Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.lambda == other.lambda
            && self.mu == other.mu
            && self.wait_bits.load(Ordering::Relaxed) == other.wait_bits.load(Ordering::Relaxed)
            && self.cycle.load(Ordering::Relaxed) == other.cycle.load(Ordering::Relaxed)
    }
}

/// M/M/1 response model: θ = (λ, μ) drawn from the rate beliefs subject to
/// λ < μ (stability). Each response draw is one customer's sojourn time,
/// advancing the scenario's Lindley recursion by one cycle; the queue
/// restarts from empty every `cycles` draws.
#[derive(Debug, Clone)]
pub struct MM1Model {
    pub lambda_belief: RateBelief,
    pub mu_belief: RateBelief,
    pub cycles: usize,
    pub max_redraws: usize,
}

pub const DEFAULT_CYCLES: usize = 200;
pub const DEFAULT_MAX_REDRAWS: usize = 1_000_000;

impl MM1Model {
    pub fn from_data(data: &DataSet, cycles: usize) -> Self {
        let (lambda, mu) = posterior_from_data(data);
        Self {
            lambda_belief: RateBelief::Gamma(lambda),
            mu_belief: RateBelief::Gamma(mu),
            cycles,
            max_redraws: DEFAULT_MAX_REDRAWS,
        }
    }

    /// Posteriors from synthetic data at true rates (λ₀, μ₀) with n
    /// observations each.
    pub fn from_true_rates(
        lambda0: f64,
        mu0: f64,
        n: usize,
        cycles: usize,
        data_seed: u64,
    ) -> Result<Self, ModelError> {
        let data = DataSet::synthesize(lambda0, mu0, n, data_seed)?;
        Ok(Self::from_data(&data, cycles))
    }

    pub fn point_mass(lambda: f64, mu: f64, cycles: usize) -> Self {
        Self {
            lambda_belief: RateBelief::Point(lambda),
            mu_belief: RateBelief::Point(mu),
            cycles,
            max_redraws: DEFAULT_MAX_REDRAWS,
        }
    }
}

impl ResponseModel for MM1Model {
    type Theta = MM1Scenario;

    fn draw_scenario(&self, rng: &mut RngStream) -> Result<MM1Scenario, String> {
        for _ in 0..=self.max_redraws {
            let lambda = self.lambda_belief.sample(rng);
            let mu = self.mu_belief.sample(rng);
            if lambda > 0.0 && lambda < mu {
                return Ok(MM1Scenario::new(lambda, mu));
            }
            // Point-mass beliefs never change; redrawing cannot help.
            if matches!(
                (self.lambda_belief, self.mu_belief),
                (RateBelief::Point(_), RateBelief::Point(_))
            ) {
                break;
            }
        }
        Err(ModelError::RejectionGuardExhausted(self.max_redraws).to_string())
    }

    fn draw_response(&self, theta: &MM1Scenario, rng: &mut RngStream) -> Result<f64, String> {
        let k = theta.cycle.load(Ordering::Relaxed);
        let wait = if k % self.cycles as u64 == 0 {
            0.0
        } else {
            f64::from_bits(theta.wait_bits.load(Ordering::Relaxed))
        };
        let service = Exp::new(theta.mu)
            .map_err(|e| e.to_string())?
            .sample(rng);
        let sojourn = wait + service;
        let gap = Exp::new(theta.lambda)
            .map_err(|e| e.to_string())?
            .sample(rng);
        let next_wait = (wait + service - gap).max(0.0);
        theta.wait_bits.store(next_wait.to_bits(), Ordering::Relaxed);
        theta.cycle.store(k + 1, Ordering::Relaxed);
        Ok(sojourn)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn posterior_conjugate_formulas() {
        let data = DataSet::new(vec![1.0, 1.0], vec![0.5, 0.5]).unwrap();
        let (lambda, mu) = posterior_from_data(&data);
        assert_eq!(lambda.shape, 2.0);
        assert_eq!(lambda.rate, 2.0);
        assert_eq!(lambda.mean(), 1.0);
        assert_eq!(mu.rate, 1.0);

        let single = DataSet::new(vec![2.0], vec![1.0]).unwrap();
        let (l1, _) = posterior_from_data(&single);
        assert_eq!((l1.shape, l1.rate), (1.0, 2.0)); // Exponential(rate 2)
    }

    #[test]
    fn posterior_concentrates_on_truth() {
        let data = DataSet::synthesize(50.0, 500.0, 10_000, 42).unwrap();
        let (lambda, _) = posterior_from_data(&data);
        // Posterior mean n/Σx within 3 posterior sds of λ₀.
        assert!((lambda.mean() - 50.0).abs() < 3.0 * 50.0 / 100.0);
    }

    #[test]
    fn non_positive_observation_rejected() {
        let err = DataSet::new(vec![1.0, -2.0], vec![1.0]).unwrap_err();
        assert!(matches!(
            err,
            ModelError::NonPositiveObservation { index: 1, .. }
        ));
    }

    #[test]
    fn lindley_deterministic_case() {
        // Constant service 1 and interarrival 2: no queueing, sojourn = 1.
        let services = vec![1.0; 10];
        let gaps = vec![2.0; 9];
        assert_eq!(sojourn_mean_from_draws(&services, &gaps), 1.0);
    }

    #[test]
    fn no_queueing_limit() {
        // mu enormous: sojourn collapses to the service mean 1/mu.
        let mut rng = RngStream::new(7, 1);
        let mean = simulate_sojourn_mean(1.0, 1e9, 200, &mut rng).unwrap();
        assert!(mean < 1e-8, "mean sojourn {mean} should be ~1/mu");
    }

    #[test]
    fn unstable_pair_is_error() {
        let mut rng = RngStream::new(7, 1);
        assert!(matches!(
            simulate_sojourn_mean(5.0, 2.0, 10, &mut rng),
            Err(ModelError::UnstableQueue { .. })
        ));
    }

    #[test]
    fn stationary_sojourn_cross_check() {
        // rho = 0.1: transient bias from the empty start is small, so the
        // average over many seeds is close to 1/(mu - lambda).
        let mut total = 0.0;
        let reps = 10_000;
        for s in 0..reps {
            let mut rng = RngStream::new(1234, s);
            total += simulate_sojourn_mean(50.0, 500.0, 200, &mut rng).unwrap();
        }
        let mean = total / reps as f64;
        assert_abs_diff_eq!(mean, 1.0 / 450.0, epsilon = 0.05 / 450.0);
    }

    #[test]
    fn infeasible_stability_constraint() {
        let model = MM1Model {
            lambda_belief: RateBelief::Point(10.0),
            mu_belief: RateBelief::Point(5.0),
            cycles: 10,
            max_redraws: 100,
        };
        let mut rng = RngStream::new(1, 0);
        assert!(model.draw_scenario(&mut rng).is_err());
    }

    #[test]
    fn response_draws_follow_lindley_recursion() {
        // Replay the model's own randomness: per cycle it draws service
        // then interarrival, so the sojourns must match a hand-rolled
        // Lindley recursion over the same exponential stream.
        let model = MM1Model::point_mass(150.0, 500.0, 200);
        let theta = MM1Scenario::new(150.0, 500.0);
        let mut rng = RngStream::new(31, 5);
        let mut replay = RngStream::new(31, 5);
        let service = Exp::new(500.0).unwrap();
        let arrival = Exp::new(150.0).unwrap();
        let mut wait = 0.0f64;
        for _ in 0..50 {
            let got = model.draw_response(&theta, &mut rng).unwrap();
            let s = service.sample(&mut replay);
            let a = arrival.sample(&mut replay);
            assert_eq!(got, wait + s);
            wait = (wait + s - a).max(0.0);
        }
    }

    #[test]
    fn cycles_one_restarts_every_draw() {
        // With a one-cycle horizon every draw starts from an empty queue,
        // so sojourn = service time and the sample mean approaches 1/mu
        // with the fast sqrt(M) i.i.d. rate.
        let model = MM1Model::point_mass(450.0, 500.0, 1);
        let theta = MM1Scenario::new(450.0, 500.0);
        let mut rng = RngStream::new(8, 3);
        let m = 200_000;
        let mean: f64 = (0..m)
            .map(|_| model.draw_response(&theta, &mut rng).unwrap())
            .sum::<f64>()
            / m as f64;
        // At rho = 0.9 the stationary mean is 1/50; restarting kills the
        // queueing entirely, leaving the service mean 1/500.
        assert_abs_diff_eq!(mean, 1.0 / 500.0, epsilon = 3.0 * 0.002 / (m as f64).sqrt());
    }

    #[test]
    fn inner_mean_matches_first_cycles_sojourn_average() {
        // Averaged over scenarios, the mean of `cycles` response draws
        // agrees with the transient mean-sojourn helper at the same rates.
        let model = MM1Model::point_mass(150.0, 500.0, 200);
        let reps = 2000;
        let mut via_draws = 0.0;
        let mut via_helper = 0.0;
        for s in 0..reps {
            let theta = MM1Scenario::new(150.0, 500.0);
            let mut rng = RngStream::new(77, s);
            via_draws += (0..200)
                .map(|_| model.draw_response(&theta, &mut rng).unwrap())
                .sum::<f64>()
                / 200.0;
            let mut rng2 = RngStream::new(1077, s);
            via_helper += simulate_sojourn_mean(150.0, 500.0, 200, &mut rng2).unwrap();
        }
        via_draws /= reps as f64;
        via_helper /= reps as f64;
        assert_abs_diff_eq!(via_draws, via_helper, epsilon = 0.03 * via_helper);
    }

    #[test]
    fn gamma_sampler_ks_check() {
        use statrs::distribution::{ContinuousCDF, Gamma as GammaDist};
        let post = GammaPosterior {
            shape: 2.0,
            rate: 2.0,
        };
        let n = 100_000usize;
        let mut rng = RngStream::new(99, 1);
        let mut draws: Vec<f64> = (0..n).map(|_| post.sample(&mut rng)).collect();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cdf = GammaDist::new(2.0, 2.0).unwrap();
        let mut d = 0.0f64;
        for (i, &x) in draws.iter().enumerate() {
            let f = cdf.cdf(x);
            d = d.max((f - i as f64 / n as f64).abs());
            d = d.max(((i + 1) as f64 / n as f64 - f).abs());
        }
        // Asymptotic Kolmogorov p-value.
        let lambda = d * (n as f64).sqrt();
        let p: f64 = 2.0
            * (1..=100)
                .map(|k| {
                    (-1.0f64).powi(k as i32 - 1) * (-2.0 * (k as f64 * lambda).powi(2)).exp()
                })
                .sum::<f64>();
        assert!(p > 0.01, "KS p-value {p} too small (D={d})");
    }

    #[test]
    fn normal_normal_truth_values() {
        let t = NormalNormalTruth;
        assert_abs_diff_eq!(t.var_alpha(0.95), 1.6448536269514722, epsilon = 1e-9);
        assert_abs_diff_eq!(t.cvar_alpha(0.95), 2.0627128075074257, epsilon = 1e-9);
        assert_abs_diff_eq!(t.bias_lambda(0.0), 0.5 * 0.3989422804014327, epsilon = 1e-12);
    }
}
