//! VaR/CVaR estimators.
//!
//! One-layer estimators act on exact mean responses H(θ_i); nested
//! estimators act on the inner-sample means Ĥ_M(θ_i) of a
//! [`NestedSampleSet`]. VaR is the upper empirical quantile (order
//! statistic at ceil(αN), ties broken by original index) and CVaR uses the
//! Rockafellar–Uryasev form v̂ + Σ(x−v̂)⁺/((1−α)N).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::NestedSampleSet;
use crate::special;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("risk estimators require a non-empty sample")]
    EmptySample,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("alpha must lie in (0,1), got {0}")]
    InvalidAlpha(f64),
    #[error("KDE requires at least 2 values, got {0}")]
    KdeTooFewValues(usize),
    #[error("KDE bandwidth undefined: sample has zero spread")]
    KdeZeroSpread,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RiskKind {
    VaR,
    CVaR,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    OneLayer,
    Nested,
}

/// A point estimate of v_α or c_α with the sample-design metadata needed
/// to interpret it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub kind: RiskKind,
    pub layer: Layer,
    pub alpha: f64,
    pub value: f64,
    pub n_outer: usize,
    pub m_inner: usize,
}

/// 1-based order-statistic index for the α-quantile: ceil(αn) clamped to
/// [1, n]. When αn is an integer (up to fp noise) the index is αn itself.
pub fn quantile_index(alpha: f64, n: usize) -> usize {
    assert!(alpha > 0.0 && alpha < 1.0, "alpha must be in (0,1)");
    assert!(n >= 1);
    let target = alpha * n as f64;
    let rounded = target.round();
    let idx = if (target - rounded).abs() < 1e-9 * n as f64 {
        rounded as usize
    } else {
        target.ceil() as usize
    };
    idx.clamp(1, n)
}

fn check_values(values: &[f64]) -> Result<(), RiskError> {
    if values.is_empty() {
        return Err(RiskError::EmptySample);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(RiskError::NonFinite(i));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<(), RiskError> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(RiskError::InvalidAlpha(alpha))
    }
}

/// Stable ascending sort; ties keep original scenario order so the
/// α-order statistic is well defined even with duplicate values.
fn sorted_with_ties(values: &[f64]) -> Vec<f64> {
    let mut indexed: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    indexed.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
    indexed.into_iter().map(|(_, v)| v).collect()
}

fn empirical_var(values: &[f64], alpha: f64) -> f64 {
    let sorted = sorted_with_ties(values);
    sorted[quantile_index(alpha, values.len()) - 1]
}

fn empirical_cvar(values: &[f64], alpha: f64) -> f64 {
    let v = empirical_var(values, alpha);
    let excess: f64 = values.iter().map(|&x| (x - v).max(0.0)).sum();
    v + excess / ((1.0 - alpha) * values.len() as f64)
}

/// v̂_α: order statistic of exact mean responses at the α-quantile index.
pub fn var_one_layer(values: &[f64], alpha: f64) -> Result<RiskEstimate, RiskError> {
    check_alpha(alpha)?;
    check_values(values)?;
    Ok(RiskEstimate {
        kind: RiskKind::VaR,
        layer: Layer::OneLayer,
        alpha,
        value: empirical_var(values, alpha),
        n_outer: values.len(),
        m_inner: 1,
    })
}

/// ĉ_α = v̂_α + Σ(H(θ_i) − v̂_α)⁺ / ((1−α)N).
pub fn cvar_one_layer(values: &[f64], alpha: f64) -> Result<RiskEstimate, RiskError> {
    check_alpha(alpha)?;
    check_values(values)?;
    Ok(RiskEstimate {
        kind: RiskKind::CVaR,
        layer: Layer::OneLayer,
        alpha,
        value: empirical_cvar(values, alpha),
        n_outer: values.len(),
        m_inner: 1,
    })
}

/// ṽ_α: the one-layer VaR applied to the inner-sample means.
pub fn var_nested<T>(samples: &NestedSampleSet<T>, alpha: f64) -> Result<RiskEstimate, RiskError> {
    check_alpha(alpha)?;
    check_values(samples.inner_mean())?;
    Ok(RiskEstimate {
        kind: RiskKind::VaR,
        layer: Layer::Nested,
        alpha,
        value: empirical_var(samples.inner_mean(), alpha),
        n_outer: samples.n_outer(),
        m_inner: samples.m_inner(),
    })
}

/// c̃_α: the one-layer CVaR applied to the inner-sample means.
pub fn cvar_nested<T>(samples: &NestedSampleSet<T>, alpha: f64) -> Result<RiskEstimate, RiskError> {
    check_alpha(alpha)?;
    check_values(samples.inner_mean())?;
    Ok(RiskEstimate {
        kind: RiskKind::CVaR,
        layer: Layer::Nested,
        alpha,
        value: empirical_cvar(samples.inner_mean(), alpha),
        n_outer: samples.n_outer(),
        m_inner: samples.m_inner(),
    })
}

/// γ-quantile of a t distribution with `dof` degrees of freedom.
#[derive(Debug, Clone, Copy)]
pub struct TQuantileRequest {
    pub gamma: f64,
    pub dof: u64,
}

pub fn t_quantile(req: TQuantileRequest) -> f64 {
    assert!(req.gamma > 0.0 && req.gamma < 1.0);
    assert!(req.dof >= 1);
    special::t_quantile(req.gamma, req.dof as f64)
}

/// Silverman bandwidth h = 1.06 σ̂ N^{−1/5} with σ̂ = min(sd, IQR/1.349).
pub fn silverman_bandwidth(values: &[f64]) -> Result<f64, RiskError> {
    if values.len() < 2 {
        return Err(RiskError::KdeTooFewValues(values.len()));
    }
    check_values(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let q1 = empirical_var(values, 0.25);
    let q3 = empirical_var(values, 0.75);
    let iqr_scale = (q3 - q1) / 1.349;
    let spread = if iqr_scale > 0.0 {
        sd.min(iqr_scale)
    } else {
        sd
    };
    if spread <= 0.0 {
        return Err(RiskError::KdeZeroSpread);
    }
    Ok(1.06 * spread * n.powf(-0.2))
}

/// Gaussian KDE evaluated at `at`, with the Silverman bandwidth.
pub fn kde_density(values: &[f64], at: f64) -> Result<f64, RiskError> {
    let h = silverman_bandwidth(values)?;
    Ok(kde_density_with_bandwidth(values, at, h))
}

/// Gaussian KDE with a caller-supplied bandwidth (also accepts a single
/// value, the degenerate one-kernel case).
pub fn kde_density_with_bandwidth(values: &[f64], at: f64, h: f64) -> f64 {
    assert!(h > 0.0, "bandwidth must be positive");
    let sum: f64 = values
        .iter()
        .map(|&x| special::norm_pdf((at - x) / h))
        .sum();
    sum / (values.len() as f64 * h)
}
