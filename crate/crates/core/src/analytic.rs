//! Quantities of the continuous-time model that follow from the survival
//! function: criticality, the Malthusian parameters and the asymptotic ratios
//! of the counted statistics.
//!
//! Every half-line integral `∫₀^∞ (...) e^{-αt} S(t) dt` is rewritten with
//! `u = e^{-ct}` as `(1/c) ∫₀¹ u^{(α+1+b)/c - 1} e^{I(u)} du`, where
//! `I(u) = (1/c) ∫_u^1 g_ε(v)/v dv`.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::ModelParams;
use crate::numerics::{
    find_root, integrate_inner_exponent, integrate_power_log_weighted, integrate_power_weighted,
    NumericsError, QuadratureSpec,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("process is not supercritical (criticality index {0} ≤ 1)")]
    Subcritical(f64),
    #[error("degree process is not supercritical (criticality index {0} ≤ 2)")]
    DegreeSubcritical(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

fn inner_spec() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-13,
        abs_tol: 1e-15,
        ..QuadratureSpec::default()
    }
}

/// Runs `body` with an integrand that may fail; the first inner failure wins.
fn with_inner_exponent<T>(
    params: &ModelParams,
    body: impl FnOnce(&dyn Fn(f64) -> f64) -> Result<T, NumericsError>,
) -> Result<T, NumericsError> {
    let failure = RefCell::new(None);
    let spec = inner_spec();
    let exp_inner = |u: f64| match integrate_inner_exponent(params, u, &spec) {
        Ok(v) => v.exp(),
        Err(e) => {
            failure.borrow_mut().get_or_insert(e);
            0.0
        }
    };
    let out = body(&exp_inner);
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    out
}

/// `S(t) = P(λ > t)`.
pub fn survival(params: &ModelParams, t: f64) -> Result<f64, AnalyticError> {
    if t.is_nan() || t < 0.0 {
        return Err(AnalyticError::InvalidArgument(format!("negative time {t}")));
    }
    let u = (-params.c() * t).exp();
    let inner = integrate_inner_exponent(params, u, &inner_spec())?;
    Ok((-(1.0 + params.b()) * t + inner).exp())
}

/// Left-hand side of the Malthusian equation at `alpha`:
/// `(E ε / c) ∫₀¹ u^{(α+1+b)/c - 1} e^{I(u)} du`.
pub fn malthus_lhs(params: &ModelParams, alpha: f64) -> Result<f64, AnalyticError> {
    Ok(params.mean_eps() * discounted_lifetime_moment(params, alpha, 0)?)
}

/// `m = E ξ(∞)`; the process survives with positive probability iff `m > 1`.
pub fn criticality_index(params: &ModelParams) -> Result<f64, AnalyticError> {
    malthus_lhs(params, 0.0)
}

/// `∫₀^∞ t^order e^{-αt} S(t) dt` for `order ∈ {0, 1}`.
pub fn discounted_lifetime_moment(
    params: &ModelParams,
    alpha: f64,
    order: u8,
) -> Result<f64, AnalyticError> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(AnalyticError::InvalidArgument(format!("alpha must be ≥ 0, got {alpha}")));
    }
    let c = params.c();
    let theta = (alpha + 1.0 + params.b()) / c;
    let spec = QuadratureSpec::default();
    let value = with_inner_exponent(params, |f| match order {
        0 => integrate_power_weighted(f, theta, &spec).map(|v| v / c),
        1 => integrate_power_log_weighted(f, theta, &spec).map(|v| v / (c * c)),
        _ => Err(NumericsError::Domain(f64::from(order))),
    })?;
    Ok(value)
}

/// Solves `malthus_lhs(x) = target` for `x > 0`, given `malthus_lhs(0) > target`.
fn solve_malthus(params: &ModelParams, target: f64) -> Result<f64, AnalyticError> {
    let mut hi = 1.0;
    while malthus_lhs(params, hi)? >= target {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(AnalyticError::InvalidArgument(
                "Malthusian bracket search diverged".into(),
            ));
        }
    }
    let failure = RefCell::new(None);
    let root = find_root(
        |a| match malthus_lhs(params, a) {
            Ok(v) => v - target,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        0.0,
        hi,
        1e-13,
    )?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }
    Ok(root)
}

/// Malthusian parameter α: the positive root of `malthus_lhs(α) = 1`.
pub fn malthusian_alpha(params: &ModelParams) -> Result<f64, AnalyticError> {
    let m = criticality_index(params)?;
    if m <= 1.0 {
        return Err(AnalyticError::Subcritical(m));
    }
    solve_malthus(params, 1.0)
}

/// Malthusian parameter β of a fixed vertex's degree process: `malthus_lhs(β) = 2`.
pub fn degree_beta(params: &ModelParams) -> Result<f64, AnalyticError> {
    let m = criticality_index(params)?;
    if m <= 2.0 {
        return Err(AnalyticError::DegreeSubcritical(m));
    }
    solve_malthus(params, 2.0)
}

/// Analytic constants of one model instance. Fields that need a positive
/// Malthusian parameter are `None` below criticality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticSummary {
    pub criticality_index: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    /// `lim E_n / n`.
    pub edges_per_step: Option<f64>,
    /// `lim V_n / n`.
    pub vertices_per_step: Option<f64>,
    /// `lim H(t) / E(t)`, events per living edge.
    pub events_per_edge: Option<f64>,
    /// `lim O_n / E_n`.
    pub childless_fraction: Option<f64>,
    /// `J_n ~ jn_coefficient · n²`.
    pub jn_coefficient: Option<f64>,
    /// `lim B_n / T_n`.
    pub litters_per_edge: f64,
    /// `lim λ̂₁(t)`.
    pub lifetime_est_censored: f64,
    /// `lim λ̂₂(t)`; undefined when `E ε = 1`.
    pub lifetime_est_uncensored: Option<f64>,
}

impl AnalyticSummary {
    /// Computes everything available for `params`, leaving α-dependent fields empty
    /// when the process is not supercritical.
    pub fn compute(params: &ModelParams) -> Result<Self, AnalyticError> {
        let m = criticality_index(params)?;
        let mean_eps = params.mean_eps();
        let mut summary = Self {
            criticality_index: m,
            alpha: None,
            beta: None,
            edges_per_step: None,
            vertices_per_step: None,
            events_per_edge: None,
            childless_fraction: None,
            jn_coefficient: None,
            litters_per_edge: 1.0 / mean_eps,
            lifetime_est_censored: 1.0 / mean_eps,
            lifetime_est_uncensored: None,
        };
        if m <= 1.0 {
            return Ok(summary);
        }
        let alpha = solve_malthus(params, 1.0)?;
        let beta = if m > 2.0 { Some(solve_malthus(params, 2.0)?) } else { None };
        let denom = mean_eps + 1.0 - alpha;
        summary.alpha = Some(alpha);
        summary.beta = beta;
        summary.edges_per_step = Some(alpha / denom);
        summary.vertices_per_step = Some(params.mean_kappa() / denom);
        summary.events_per_edge = Some(denom / alpha);
        summary.childless_fraction = Some(mean_eps / (1.0 + params.b() + alpha));
        summary.jn_coefficient = Some(alpha / (2.0 * denom));
        if mean_eps != 1.0 {
            let moment = discounted_lifetime_moment(params, alpha, 1)?;
            summary.lifetime_est_uncensored =
                Some((1.0 - alpha * mean_eps * moment) / (mean_eps - 1.0));
        }
        Ok(summary)
    }

    /// Checks the algebraic relations between the fields.
    pub fn check_invariants(&self, params: &ModelParams) -> Result<(), String> {
        let mean_eps = params.mean_eps();
        match (self.alpha, self.criticality_index > 1.0) {
            (Some(_), false) | (None, true) => {
                return Err("alpha must be present exactly when m > 1".into())
            }
            _ => {}
        }
        if self.beta.is_some() != (self.criticality_index > 2.0) {
            return Err("beta must be present exactly when m > 2".into());
        }
        if let (Some(a), Some(b)) = (self.alpha, self.beta) {
            if b >= a {
                return Err(format!("beta {b} not below alpha {a}"));
            }
        }
        if let (Some(e), Some(h)) = (self.edges_per_step, self.events_per_edge) {
            if !(e > 0.0 && e < mean_eps) {
                return Err(format!("edges_per_step {e} outside (0, Eε)"));
            }
            if (e * h - 1.0).abs() > 1e-12 {
                return Err("events_per_edge is not the reciprocal of edges_per_step".into());
            }
        }
        if let (Some(j), Some(e)) = (self.jn_coefficient, self.edges_per_step) {
            if (j - 0.5 * e).abs() > 1e-12 * e {
                return Err("jn_coefficient differs from edges_per_step / 2".into());
            }
        }
        if let Some(o) = self.childless_fraction {
            if !(o > 0.0 && o < 1.0) {
                return Err(format!("childless_fraction {o} outside (0, 1)"));
            }
        }
        Ok(())
    }
}

/// The full set of asymptotic ratios; fails below criticality.
pub fn ratios(params: &ModelParams) -> Result<AnalyticSummary, AnalyticError> {
    let summary = AnalyticSummary::compute(params)?;
    if summary.alpha.is_none() {
        return Err(AnalyticError::Subcritical(summary.criticality_index));
    }
    Ok(summary)
}

/// Asymptotic ratios from plug-in values of `α`, `E ε`, `E κ` and `b`.
pub fn ratios_from(alpha: f64, mean_eps: f64, mean_kappa: f64, b: f64) -> [f64; 4] {
    let denom = mean_eps + 1.0 - alpha;
    [
        alpha / denom,
        mean_kappa / denom,
        denom / alpha,
        mean_eps / (1.0 + b + alpha),
    ]
}
