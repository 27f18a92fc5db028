//! Two-layer sampling engine.
//!
//! N outer scenarios θ_i are drawn from the belief distribution; for each
//! scenario, M i.i.d. responses h(θ_i;ξ) are drawn and summarized by their
//! mean and unbiased sample variance. The result is a pure function of
//! `(model, n, m, seed)`: scenario i always consumes substream
//! `(seed, i + 1)`, so parallel and sequential execution are bit-identical.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::RngStream;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("belief sampler failed at scenario {scenario}: {reason}")]
    ScenarioDraw { scenario: usize, reason: String },
    #[error("non-finite response sample at scenario {scenario}, draw {draw}")]
    NonFiniteResponse { scenario: usize, draw: usize },
    #[error("response sampler failed at scenario {scenario}, draw {draw}: {reason}")]
    ResponseDraw {
        scenario: usize,
        draw: usize,
        reason: String,
    },
    #[error("sample size must be at least 1 (got n={n}, m={m})")]
    EmptyDesign { n: usize, m: usize },
    #[error("cost accumulator overflowed for n={n}, m={m}")]
    CostOverflow { n: usize, m: usize },
}

/// Closed-form quantities of a benchmark model, used by bias diagnostics
/// and coverage experiments.
pub trait AnalyticTruth {
    /// v_α: the α-quantile of the mean response H(θ).
    fn var_alpha(&self, alpha: f64) -> f64;
    /// c_α: the α-tail conditional expectation of H(θ).
    fn cvar_alpha(&self, alpha: f64) -> f64;
    /// f(t): density of H(θ).
    fn density(&self, t: f64) -> f64;
    /// Λ(t) = ½ f(t) E[τ²_θ | H(θ)=t], the bias-generating function.
    fn bias_lambda(&self, t: f64) -> f64;
    /// Λ′(t).
    fn bias_lambda_prime(&self, t: f64) -> f64;
    /// Closed-form variance terms (σ_v, σ_c, τ_v, τ_c) at level α, when
    /// the model admits them. Lets coverage experiments isolate the CI
    /// procedure from variance-estimation noise.
    fn variance_terms(&self, _alpha: f64) -> Option<crate::ci::VarianceTerms> {
        None
    }
}

/// A simulation model: a belief sampler over input parameters θ and a
/// conditional response sampler h(θ;ξ).
///
/// Conditioned on θ, the response must have finite mean and variance;
/// non-finite samples are rejected as hard errors by the engine.
pub trait ResponseModel: Sync {
    type Theta: Clone + Send + Sync;

    /// Draw one θ scenario from the belief distribution p(θ|x).
    fn draw_scenario(&self, rng: &mut RngStream) -> Result<Self::Theta, String>;

    /// Draw one response h(θ;ξ) conditioned on `theta`.
    fn draw_response(&self, theta: &Self::Theta, rng: &mut RngStream) -> Result<f64, String>;

    /// Closed-form truth, when the model has one.
    fn truth(&self) -> Option<&dyn AnalyticTruth> {
        None
    }
}

/// Per-scenario inner-sample summaries of a nested simulation.
///
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct NestedSampleSet<T> {
    scenarios: Vec<T>,
    inner_mean: Vec<f64>,
    inner_var: Vec<f64>,
    inner_longrun_var: Vec<f64>,
    inner_count: usize,
}

impl<T> NestedSampleSet<T> {
    pub fn new(
        scenarios: Vec<T>,
        inner_mean: Vec<f64>,
        inner_var: Vec<f64>,
        inner_count: usize,
    ) -> Self {
        let n = scenarios.len();
        assert!(n >= 1, "NestedSampleSet requires at least one scenario");
        assert!(inner_count >= 1, "inner_count must be at least 1");
        assert_eq!(inner_mean.len(), n);
        assert_eq!(inner_var.len(), n);
        assert!(
            inner_var.iter().all(|v| *v >= 0.0),
            "inner variances must be non-negative"
        );
        Self {
            scenarios,
            inner_mean,
            inner_longrun_var: inner_var.clone(),
            inner_var,
            inner_count,
        }
    }

    /// Replace the long-run variance column (defaults to `inner_var`).
    pub fn with_longrun_var(mut self, inner_longrun_var: Vec<f64>) -> Self {
        assert_eq!(inner_longrun_var.len(), self.scenarios.len());
        assert!(
            inner_longrun_var.iter().all(|v| *v >= 0.0),
            "long-run variances must be non-negative"
        );
        self.inner_longrun_var = inner_longrun_var;
        self
    }

    pub fn n_outer(&self) -> usize {
        self.scenarios.len()
    }

    pub fn m_inner(&self) -> usize {
        self.inner_count
    }

    pub fn scenarios(&self) -> &[T] {
        &self.scenarios
    }

    /// Ĥ_M(θ_i) for each scenario.
    pub fn inner_mean(&self) -> &[f64] {
        &self.inner_mean
    }

    /// Unbiased (M−1 denominator) per-scenario sample variance of the
    /// responses; 0 when M = 1.
    pub fn inner_var(&self) -> &[f64] {
        &self.inner_var
    }

    /// Per-scenario batch-means estimate of the long-run response variance
    /// M·Var(Ĥ_M): equals τ²_θ for i.i.d. inner draws, and additionally
    /// accounts for serial correlation in trajectory-based samplers. Falls
    /// back to `inner_var` when M is too small for two batches.
    pub fn inner_longrun_var(&self) -> &[f64] {
        &self.inner_longrun_var
    }
}

/// Outer cost c₁ per scenario plus inner cost c₂ per response sample.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimulationCost {
    pub c1: f64,
    pub c2: f64,
}

impl SimulationCost {
    pub fn new(c1: f64, c2: f64) -> Self {
        assert!(c1 >= 0.0 && c2 > 0.0, "require c1 >= 0 and c2 > 0");
        Self { c1, c2 }
    }
}

/// Total cost C(N,M) = c₁N + c₂NM.
pub fn total_cost(cost: SimulationCost, n: usize, m: usize) -> Result<f64, SimError> {
    if n < 1 || m < 1 {
        return Err(SimError::EmptyDesign { n, m });
    }
    let total = cost.c1 * n as f64 + cost.c2 * n as f64 * m as f64;
    if !total.is_finite() {
        return Err(SimError::CostOverflow { n, m });
    }
    Ok(total)
}

/// Draw `n` i.i.d. scenarios from the model's belief distribution.
pub fn draw_outer<M: ResponseModel>(
    model: &M,
    n: usize,
    rng: &mut RngStream,
) -> Result<Vec<M::Theta>, SimError> {
    if n < 1 {
        return Err(SimError::EmptyDesign { n, m: 1 });
    }
    (0..n)
        .map(|i| {
            model
                .draw_scenario(rng)
                .map_err(|reason| SimError::ScenarioDraw {
                    scenario: i,
                    reason,
                })
        })
        .collect()
}

fn simulate_scenario<M: ResponseModel>(
    model: &M,
    theta: &M::Theta,
    index: usize,
    m: usize,
    seed: u64,
) -> Result<(f64, f64, f64), SimError> {
    let mut rng = RngStream::scenario(seed, index);
    // Welford's online mean/variance: numerically stable, and exactly
    // zero variance when every response is identical.
    let mut mean = 0.0;
    let mut m2 = 0.0;
    // Batch-means accumulator for the long-run variance: √M batches of
    // √M consecutive draws (trailing remainder ignored).
    let batch_size = (m as f64).sqrt().floor().max(1.0) as usize;
    let batch_count = m / batch_size;
    let mut batch_sum = 0.0;
    let mut batch_index = 0usize;
    let mut bm_mean = 0.0;
    let mut bm_m2 = 0.0;
    for j in 0..m {
        let h = model
            .draw_response(theta, &mut rng)
            .map_err(|reason| SimError::ResponseDraw {
                scenario: index,
                draw: j,
                reason,
            })?;
        if !h.is_finite() {
            return Err(SimError::NonFiniteResponse {
                scenario: index,
                draw: j,
            });
        }
        let delta = h - mean;
        mean += delta / (j + 1) as f64;
        m2 += delta * (h - mean);
        if batch_index < batch_count {
            batch_sum += h;
            if (j + 1) % batch_size == 0 {
                let y = batch_sum / batch_size as f64;
                batch_index += 1;
                let d = y - bm_mean;
                bm_mean += d / batch_index as f64;
                bm_m2 += d * (y - bm_mean);
                batch_sum = 0.0;
            }
        }
    }
    let var = if m >= 2 {
        (m2 / (m as f64 - 1.0)).max(0.0)
    } else {
        0.0
    };
    // Long-run variance: batch size × variance of batch means. For i.i.d.
    // responses this estimates the same τ²_θ as `var`; for serially
    // correlated response samplers (e.g. queue trajectories) it also picks
    // up the autocovariance that governs the error of the inner mean.
    let longrun_var = if batch_count >= 2 {
        (batch_size as f64 * bm_m2 / (batch_count as f64 - 1.0)).max(0.0)
    } else {
        var
    };
    Ok((mean, var, longrun_var))
}

fn assemble_sample_set<T>(
    scenarios: Vec<T>,
    summaries: Vec<(f64, f64, f64)>,
    m: usize,
) -> NestedSampleSet<T> {
    let mut inner_mean = Vec::with_capacity(summaries.len());
    let mut inner_var = Vec::with_capacity(summaries.len());
    let mut inner_longrun_var = Vec::with_capacity(summaries.len());
    for (mean, var, longrun) in summaries {
        inner_mean.push(mean);
        inner_var.push(var);
        inner_longrun_var.push(longrun);
    }
    NestedSampleSet::new(scenarios, inner_mean, inner_var, m)
        .with_longrun_var(inner_longrun_var)
}

/// Nested simulation, sequential scenario loop.
///
/// Kept public alongside [`simulate_nested`] so the two execution paths can
/// be compared for bit-identical output and benchmarked against each other.
pub fn simulate_nested_serial<M: ResponseModel>(
    model: &M,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<NestedSampleSet<M::Theta>, SimError> {
    if n < 1 || m < 1 {
        return Err(SimError::EmptyDesign { n, m });
    }
    let scenarios = draw_outer(model, n, &mut RngStream::outer(seed))?;
    let summaries: Vec<(f64, f64, f64)> = scenarios
        .iter()
        .enumerate()
        .map(|(i, theta)| simulate_scenario(model, theta, i, m, seed))
        .collect::<Result<_, _>>()?;
    Ok(assemble_sample_set(scenarios, summaries, m))
}

/// Nested simulation: N outer scenarios × M inner responses each.
///
/// With the `parallel` feature, scenarios run on the rayon pool; the result
/// is bit-identical to [`simulate_nested_serial`].
#[cfg(feature = "parallel")]
pub fn simulate_nested<M: ResponseModel>(
    model: &M,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<NestedSampleSet<M::Theta>, SimError> {
    use rayon::prelude::*;

    if n < 1 || m < 1 {
        return Err(SimError::EmptyDesign { n, m });
    }
    let scenarios = draw_outer(model, n, &mut RngStream::outer(seed))?;
    let summaries: Vec<(f64, f64, f64)> = scenarios
        .par_iter()
        .enumerate()
        .map(|(i, theta)| simulate_scenario(model, theta, i, m, seed))
        .collect::<Result<_, _>>()?;
    Ok(assemble_sample_set(scenarios, summaries, m))
}

#[cfg(not(feature = "parallel"))]
pub fn simulate_nested<M: ResponseModel>(
    model: &M,
    n: usize,
    m: usize,
    seed: u64,
) -> Result<NestedSampleSet<M::Theta>, SimError> {
    simulate_nested_serial(model, n, m, seed)
}

/// Run `f` over lanes `0..count` (in parallel when the feature is on),
/// preserving lane order in the output. Used for experiment replications.
pub fn map_lanes<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..count).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..count).map(f).collect()
    }
}
