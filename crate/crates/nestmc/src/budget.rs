//! Pilot experiments and CI-width budget allocation.
//!
//! A small pilot run is summarized by (i) a density projection of the
//! inner means onto a parametric family (KL-minimizing, i.e. MLE) and
//! (ii) a cubic regression of the inner variance against the inner mean.
//! The four variance terms are then computed from the fitted density by
//! quadrature and plugged into the CI half-width objectives, which are
//! minimized over feasible (N, M) pairs by a grid sweep.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};
use statrs::function::gamma::digamma;
use thiserror::Error;

use crate::ci::{VarianceSource, VarianceTerms};
use crate::engine::{NestedSampleSet, SimulationCost};
use crate::risk::RiskKind;
use crate::special::{norm_pdf, norm_quantile, quad_gk, t_quantile};

#[derive(Debug, Error)]
pub enum BudgetError {
    #[error("density projection needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("density projection: degenerate sample (zero variance)")]
    DegenerateVariance,
    #[error("{family} projection requires strictly positive values; found {value} at index {index}")]
    NonPositiveValue {
        family: &'static str,
        index: usize,
        value: f64,
    },
    #[error("gamma shape MLE did not converge")]
    GammaMleDiverged,
    #[error("quadrature for {integral} failed: {reason}")]
    Quadrature {
        integral: &'static str,
        reason: String,
    },
    #[error("pilot floor violated: {what} = {got}, need at least {min}")]
    PilotFloor {
        what: &'static str,
        got: usize,
        min: usize,
    },
    #[error("no feasible (N, M): binding constraint is {binding}")]
    Infeasible { binding: String },
}

// ---------------------------------------------------------------------------
// Density projection (KL projection == MLE on the samples)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityFamily {
    Gaussian,
    LogNormal,
    Gamma,
}

/// Fitted member of a projection family.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum FittedDensity {
    Gaussian { mean: f64, var: f64 },
    LogNormal { mu: f64, sigma2: f64 },
    Gamma { shape: f64, rate: f64 },
}

impl FittedDensity {
    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            FittedDensity::Gaussian { mean, var } => {
                norm_pdf((x - mean) / var.sqrt()) / var.sqrt()
            }
            FittedDensity::LogNormal { mu, sigma2 } => {
                if x <= 0.0 {
                    0.0
                } else {
                    norm_pdf((x.ln() - mu) / sigma2.sqrt()) / (x * sigma2.sqrt())
                }
            }
            FittedDensity::Gamma { shape, rate } => {
                if x <= 0.0 {
                    0.0
                } else {
                    statrs::distribution::Gamma::new(shape, rate)
                        .expect("valid gamma")
                        .pdf(x)
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        assert!(p > 0.0 && p < 1.0);
        match *self {
            FittedDensity::Gaussian { mean, var } => mean + var.sqrt() * norm_quantile(p),
            FittedDensity::LogNormal { mu, sigma2 } => {
                (mu + sigma2.sqrt() * norm_quantile(p)).exp()
            }
            FittedDensity::Gamma { shape, rate } => {
                statrs::distribution::Gamma::new(shape, rate)
                    .expect("valid gamma")
                    .inverse_cdf(p)
            }
        }
    }

    /// Upper integration bound: the 1 − 1e−12 quantile.
    pub fn upper_truncation(&self) -> f64 {
        self.quantile(1.0 - 1e-12)
    }
}

/// KL projection of the empirical distribution of `values` onto `family`,
/// computed as maximum likelihood (the two coincide for i.i.d. samples).
/// The Gaussian fit uses the population (1/N) variance, which makes it
/// exact two-moment matching.
pub fn density_projection(
    values: &[f64],
    family: DensityFamily,
) -> Result<FittedDensity, BudgetError> {
    if values.len() < 2 {
        return Err(BudgetError::TooFewValues(values.len()));
    }
    let n = values.len() as f64;
    match family {
        DensityFamily::Gaussian => {
            let mean = values.iter().sum::<f64>() / n;
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if !(var > 0.0) {
                return Err(BudgetError::DegenerateVariance);
            }
            Ok(FittedDensity::Gaussian { mean, var })
        }
        DensityFamily::LogNormal => {
            let logs = positive_logs(values, "lognormal")?;
            let mu = logs.iter().sum::<f64>() / n;
            let sigma2 = logs.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
            if !(sigma2 > 0.0) {
                return Err(BudgetError::DegenerateVariance);
            }
            Ok(FittedDensity::LogNormal { mu, sigma2 })
        }
        DensityFamily::Gamma => {
            for (index, &value) in values.iter().enumerate() {
                if !(value > 0.0) {
                    return Err(BudgetError::NonPositiveValue {
                        family: "gamma",
                        index,
                        value,
                    });
                }
            }
            let mean = values.iter().sum::<f64>() / n;
            let mean_log = values.iter().map(|v| v.ln()).sum::<f64>() / n;
            let s = mean.ln() - mean_log;
            if !(s > 0.0) {
                return Err(BudgetError::DegenerateVariance);
            }
            // Newton on ln k − ψ(k) = s, tolerance 1e-10.
            let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
            let mut converged = false;
            for _ in 0..200 {
                let g = k.ln() - digamma(k) - s;
                let gp = 1.0 / k - trigamma(k);
                let next = (k - g / gp).max(k * 0.1);
                if (next - k).abs() <= 1e-10 * k {
                    k = next;
                    converged = true;
                    break;
                }
                k = next;
            }
            if !converged {
                return Err(BudgetError::GammaMleDiverged);
            }
            Ok(FittedDensity::Gamma {
                shape: k,
                rate: k / mean,
            })
        }
    }
}

fn positive_logs(values: &[f64], family: &'static str) -> Result<Vec<f64>, BudgetError> {
    values
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value > 0.0 {
                Ok(value.ln())
            } else {
                Err(BudgetError::NonPositiveValue {
                    family,
                    index,
                    value,
                })
            }
        })
        .collect()
}

/// ψ₁(x): recurrence to x ≥ 8 plus the asymptotic series.
fn trigamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 20.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + inv
        * (1.0
            + 0.5 * inv
            + inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 / 30.0))))
}

// ---------------------------------------------------------------------------
// tau^2 regression
// ---------------------------------------------------------------------------

/// Cubic fit of the inner variance against the inner mean,
/// τ²(y) ≈ b₀ + b₁y + b₂y² + b₃y³, clamped at 0 when evaluated.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Tau2Fit {
    pub coefficients: [f64; 4],
    /// True when the design was rank deficient and the fit fell back to
    /// the constant mean inner variance.
    pub degenerate: bool,
}

impl Tau2Fit {
    pub fn evaluate(&self, y: f64) -> f64 {
        let [b0, b1, b2, b3] = self.coefficients;
        (b0 + y * (b1 + y * (b2 + y * b3))).max(0.0)
    }
}

/// Ordinary least squares of the per-scenario long-run inner variance on
/// {1, y, y², y³} at y = inner_mean. Fitted in standardized coordinates
/// for conditioning, then expanded back.
///
/// The regression targets the batch-means long-run variance rather than
/// the plain sample variance: the τ² entering the CI-width objectives is
/// the one that governs Var(Ĥ_M) = τ²/M, and for serially correlated
/// inner samplers (queue trajectories) the plain sample variance misses
/// the autocovariance part entirely. For i.i.d. inner draws the two
/// estimates agree in expectation.
pub fn fit_tau2_regression<T>(samples: &NestedSampleSet<T>) -> Result<Tau2Fit, BudgetError> {
    let n = samples.n_outer();
    if n < 8 {
        return Err(BudgetError::PilotFloor {
            what: "N",
            got: n,
            min: 8,
        });
    }
    if samples.m_inner() < 2 {
        return Err(BudgetError::PilotFloor {
            what: "M",
            got: samples.m_inner(),
            min: 2,
        });
    }
    let ys = samples.inner_mean();
    let targets = samples.inner_longrun_var();
    let nf = n as f64;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let y_sd = (ys.iter().map(|y| (y - y_mean).powi(2)).sum::<f64>() / nf).sqrt();
    let mean_var = targets.iter().sum::<f64>() / nf;
    if !(y_sd > 0.0) {
        return Ok(Tau2Fit {
            coefficients: [mean_var, 0.0, 0.0, 0.0],
            degenerate: true,
        });
    }

    // Normal equations in z = (y - y_mean)/y_sd.
    let mut ata = [[0.0f64; 4]; 4];
    let mut atb = [0.0f64; 4];
    for (i, &y) in ys.iter().enumerate() {
        let z = (y - y_mean) / y_sd;
        let row = [1.0, z, z * z, z * z * z];
        for p in 0..4 {
            atb[p] += row[p] * targets[i];
            for q in 0..4 {
                ata[p][q] += row[p] * row[q];
            }
        }
    }
    let Some(c) = solve4(ata, atb) else {
        return Ok(Tau2Fit {
            coefficients: [mean_var, 0.0, 0.0, 0.0],
            degenerate: true,
        });
    };

    // Expand b0 + b1 z + b2 z^2 + b3 z^3 with z = (y - a)/s into powers of y.
    let a = y_mean;
    let s = y_sd;
    let (c0, c1, c2, c3) = (c[0], c[1], c[2], c[3]);
    let s2 = s * s;
    let s3 = s2 * s;
    let b3 = c3 / s3;
    let b2 = c2 / s2 - 3.0 * c3 * a / s3;
    let b1 = c1 / s - 2.0 * c2 * a / s2 + 3.0 * c3 * a * a / s3;
    let b0 = c0 - c1 * a / s + c2 * a * a / s2 - c3 * a * a * a / s3;
    Ok(Tau2Fit {
        coefficients: [b0, b1, b2, b3],
        degenerate: false,
    })
}

/// Gaussian elimination with partial pivoting; None when rank deficient.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    let scale: f64 = (0..4)
        .map(|i| a[i].iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0f64, f64::max);
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() <= 1e-12 * scale.max(1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let factor = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = [0.0f64; 4];
    for row in (0..4).rev() {
        let mut acc = b[row];
        for k in row + 1..4 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

// ---------------------------------------------------------------------------
// Pilot summary
// ---------------------------------------------------------------------------

/// Everything the allocation solver needs from a pilot run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PilotSummary {
    pub n_pilot: usize,
    pub m_pilot: usize,
    pub projected_density: FittedDensity,
    pub tau2_regression: Tau2Fit,
    pub terms: VarianceTerms,
}

pub const DEFAULT_PILOT_N: usize = 50;
pub const DEFAULT_PILOT_M: usize = 100;

/// Quadrature tolerance for the variance-term integrals.
const QUAD_REL_TOL: f64 = 1e-8;

/// Variance terms from a fitted density and τ² fit at level α.
///
/// σ̃_v = √(α(1−α))/f̃(q_α); σ̃_c = √(Var_f̃[(Y−q_α)⁺])/(1−α) and
/// τ̃_c = √(E_f̃[τ²(Y) | Y ≥ q_α]), both by adaptive quadrature on the tail
/// truncated at the 1−1e−12 quantile; τ̃_v = √(τ²(q_α)).
pub fn variance_terms_from_density(
    density: &FittedDensity,
    tau2: &Tau2Fit,
    alpha: f64,
) -> Result<VarianceTerms, BudgetError> {
    assert!(alpha > 0.0 && alpha < 1.0);
    let q = density.quantile(alpha);
    let upper = density.upper_truncation();
    let tail = 1.0 - alpha;

    let sigma_v = (alpha * tail).sqrt() / density.pdf(q);

    let hinge_mean = quad_gk(&|y| (y - q) * density.pdf(y), q, upper, QUAD_REL_TOL).map_err(
        |reason| BudgetError::Quadrature {
            integral: "E[(Y-q)+]",
            reason,
        },
    )?;
    let hinge_sq = quad_gk(
        &|y| (y - q) * (y - q) * density.pdf(y),
        q,
        upper,
        QUAD_REL_TOL,
    )
    .map_err(|reason| BudgetError::Quadrature {
        integral: "E[((Y-q)+)^2]",
        reason,
    })?;
    let sigma_c = (hinge_sq - hinge_mean * hinge_mean).max(0.0).sqrt() / tail;

    let tau_v = tau2.evaluate(q).sqrt();
    let tau_c2 = quad_gk(&|y| tau2.evaluate(y) * density.pdf(y), q, upper, QUAD_REL_TOL)
        .map_err(|reason| BudgetError::Quadrature {
            integral: "E[tau2(Y); Y>=q]",
            reason,
        })?
        / tail;
    Ok(VarianceTerms {
        sigma_v,
        sigma_c,
        tau_v,
        tau_c: tau_c2.max(0.0).sqrt(),
        source: VarianceSource::PilotProjected,
    })
}

/// Fits the density projection and τ² regression on a pilot sample and
/// derives the four variance terms.
pub fn derive_pilot_terms<T>(
    pilot: &NestedSampleSet<T>,
    alpha: f64,
    family: DensityFamily,
) -> Result<PilotSummary, BudgetError> {
    if pilot.n_outer() < 30 {
        return Err(BudgetError::PilotFloor {
            what: "N",
            got: pilot.n_outer(),
            min: 30,
        });
    }
    if pilot.m_inner() < 2 {
        return Err(BudgetError::PilotFloor {
            what: "M",
            got: pilot.m_inner(),
            min: 2,
        });
    }
    let projected_density = density_projection(pilot.inner_mean(), family)?;
    let tau2_regression = fit_tau2_regression(pilot)?;
    let terms = variance_terms_from_density(&projected_density, &tau2_regression, alpha)?;
    Ok(PilotSummary {
        n_pilot: pilot.n_outer(),
        m_pilot: pilot.m_inner(),
        projected_density,
        tau2_regression,
        terms,
    })
}

// ---------------------------------------------------------------------------
// CI-width objectives and the allocation sweep
// ---------------------------------------------------------------------------

/// W_v(N,M) = t_{1−β_O/2,N−1}σ_v/√N + t_{1−β_I/2,M−1}τ_v/√M.
pub fn ci_width_var(
    n: usize,
    m: usize,
    beta_outer: f64,
    beta_inner: f64,
    sigma_v: f64,
    tau_v: f64,
) -> f64 {
    assert!(n >= 2 && m >= 2);
    let nf = n as f64;
    let mf = m as f64;
    t_quantile(1.0 - beta_outer / 2.0, nf - 1.0) * sigma_v / nf.sqrt()
        + t_quantile(1.0 - beta_inner / 2.0, mf - 1.0) * tau_v / mf.sqrt()
}

/// W_c(N,M) = t_{1−β_O/2,N−1}σ_c/√N + t_{1−β_I/2,(1−α)NM−1}τ_c/√((1−α)NM).
pub fn ci_width_cvar(
    n: usize,
    m: usize,
    alpha: f64,
    beta_outer: f64,
    beta_inner: f64,
    sigma_c: f64,
    tau_c: f64,
) -> f64 {
    assert!(n >= 2 && m >= 2);
    let nf = n as f64;
    let tail = (1.0 - alpha) * nf * m as f64;
    assert!(tail >= 2.0, "(1-alpha)NM must be at least 2");
    t_quantile(1.0 - beta_outer / 2.0, nf - 1.0) * sigma_c / nf.sqrt()
        + t_quantile(1.0 - beta_inner / 2.0, tail - 1.0) * tau_c / tail.sqrt()
}

/// The chosen allocation plus the evaluated grid (for width-vs-N plots).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BudgetPlan {
    pub target: RiskKind,
    pub n: usize,
    pub m: usize,
    pub predicted_half_width: f64,
    pub budget: f64,
    pub cost: SimulationCost,
    pub gamma0: usize,
    pub feasible_grid_size: usize,
    /// (N, M, predicted width) for every feasible candidate evaluated.
    pub grid: Vec<(usize, usize, f64)>,
}

/// Minimizes the CI half-width over feasible (N, M) subject to
/// c₁N + c₂NM ≤ CB, N ≥ Γ₀, M ≥ Γ₀ (and (1−α)NM ≥ Γ₀ for CVaR).
///
/// N runs over a geometric grid (ratio ≤ 1.05); for each N, M saturates
/// the budget, which is optimal because the width is decreasing in M at
/// fixed N. Ties break toward smaller N.
pub fn allocate_budget(
    pilot: &PilotSummary,
    alpha: f64,
    beta_outer: f64,
    beta_inner: f64,
    cost: SimulationCost,
    budget: f64,
    gamma0: usize,
    target: RiskKind,
) -> Result<BudgetPlan, BudgetError> {
    assert!(gamma0 >= 2);
    let terms = &pilot.terms;
    let n_max = ((budget / (cost.c1 + cost.c2 * gamma0 as f64)).floor()) as usize;
    if n_max < gamma0 {
        return Err(BudgetError::Infeasible {
            binding: format!(
                "budget {budget} cannot afford N = M = Gamma0 = {gamma0} at c1 = {}, c2 = {}",
                cost.c1, cost.c2
            ),
        });
    }
    let mut grid = Vec::new();
    let mut best: Option<(usize, usize, f64)> = None;
    let mut n = gamma0;
    while n <= n_max {
        let m = ((budget / n as f64 - cost.c1) / cost.c2).floor() as usize;
        if m >= gamma0 {
            let feasible_cvar =
                target != RiskKind::CVaR || (1.0 - alpha) * (n * m) as f64 >= gamma0 as f64;
            if feasible_cvar {
                let width = match target {
                    RiskKind::VaR => {
                        ci_width_var(n, m, beta_outer, beta_inner, terms.sigma_v, terms.tau_v)
                    }
                    RiskKind::CVaR => ci_width_cvar(
                        n,
                        m,
                        alpha,
                        beta_outer,
                        beta_inner,
                        terms.sigma_c,
                        terms.tau_c,
                    ),
                };
                grid.push((n, m, width));
                let better = match best {
                    None => true,
                    Some((_, _, w)) => width < w,
                };
                if better {
                    best = Some((n, m, width));
                }
            }
        }
        n = (n + 1).max((n as f64 * 1.05).floor() as usize);
    }
    let (n, m, predicted_half_width) = best.ok_or_else(|| BudgetError::Infeasible {
        binding: if target == RiskKind::CVaR {
            format!("(1-alpha)NM >= {gamma0} (alpha = {alpha})")
        } else {
            format!("M >= {gamma0} within budget {budget}")
        },
    })?;
    Ok(BudgetPlan {
        target,
        n,
        m,
        predicted_half_width,
        budget,
        cost,
        gamma0,
        feasible_grid_size: grid.len(),
        grid,
    })
}
