//! Generating functions of one edge's lifetime offspring and the fixed-point
//! problems built on them.
//!
//! `G(x, y)` solves the linear ODE `c t h'(t) + (1 + b - g(t)) h(t) = 1` along
//! rays, which gives
//!
//! ```text
//! G(x, y) = (1/c) ∫₀¹ u^{(1+b)/c - 1} exp{ (1/c) ∫_u^1 g_{κ,ε}(x/y, s y) / s ds } du
//! ```
//!
//! and the joint pgf of `(π'(λ), ξ(λ))` is `f(x, y) = 1 - [1 - g_{κ,ε}(x, y)] G(x y, y)`.
//! Every composite pgf argument here is kept in `[0, 1]`; in particular the
//! degree pgf is evaluated through `a(s, z) = s (2 p s z + (1 - p)(1 + z)) / 2`
//! instead of the literal `f((1+z)²/(4z), 2z/(1+z))`.
//!
//! Inner `s`-integrals use a fixed 64-node Gauss–Legendre rule; the outer
//! `u`-integral is adaptive.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analytic::{criticality_index, AnalyticError};
use crate::model::{unit_arg, ModelError, ModelParams};
use crate::numerics::{gauss_legendre_64, integrate_power_weighted, NumericsError, QuadratureSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenfunError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
}

const MAX_ITERATIONS: usize = 1_000_000;
const INCREMENT_TOL: f64 = 1e-13;
const POLISH_ITERATIONS: usize = 1_000;

fn outer_spec() -> QuadratureSpec {
    QuadratureSpec {
        rel_tol: 1e-12,
        abs_tol: 1e-14,
        ..QuadratureSpec::default()
    }
}

/// `(1/c) ∫₀¹ u^{(1+b)/c - 1} exp{(1/c) ∫_u^1 h(s) ds} du`, with `h(s)` the
/// already divided-by-`s` integrand.
fn life_integral<H: Fn(f64) -> f64>(params: &ModelParams, h: H) -> Result<f64, NumericsError> {
    let c = params.c();
    let rule = gauss_legendre_64();
    let theta = (1.0 + params.b()) / c;
    let outer = integrate_power_weighted(
        |u| (rule.integrate(&h, u, 1.0) / c).exp(),
        theta,
        &outer_spec(),
    )?;
    Ok(outer / c)
}

/// `G(x, y)`. Requires `x, y ≥ 0` and `x (p y + 1 - p) ≤ 1`, so that every
/// argument `x s (p s y + 1 - p)` of `g_κ` stays in `[0, 1]`.
pub fn big_g(params: &ModelParams, x: f64, y: f64) -> Result<f64, GenfunError> {
    let p = params.p();
    if !(x >= 0.0 && y >= 0.0) {
        return Err(ModelError::Domain(x.min(y)).into());
    }
    unit_arg(x * (p * y + 1.0 - p))?;
    let kappa = params.kappa();
    // g_{κ,ε}(x/y, s y) / s = x (p s y + 1 - p) E(A^{κ-1}),  A = x s (p s y + 1 - p)
    let value = life_integral(params, |s| {
        let factor = x * (p * s * y + 1.0 - p);
        factor * kappa.pgf_shifted_unchecked((s * factor).min(1.0))
    })?;
    Ok(value)
}

/// Joint pgf `f(x, y) = E(x^{π'(λ)} y^{ξ(λ)})`.
pub fn joint_life_pgf(params: &ModelParams, x: f64, y: f64) -> Result<f64, GenfunError> {
    let g = params.joint_pgf_kappa_eps(x, y)?;
    Ok(1.0 - (1.0 - g) * big_g(params, x * y, y)?)
}

/// Pgf of the lifetime offspring count `ξ(λ)`:
/// `1 - ((1 - g_ε(z))/c) ∫₀¹ u^{(1+b)/c-1} exp{(1/c) ∫_u^1 g_ε(s z)/s ds} du`.
pub fn pgf_xi_lambda(params: &ModelParams, z: f64) -> Result<f64, GenfunError> {
    let z = unit_arg(z)?;
    let g = params.pgf_eps(z)?;
    if g == 1.0 {
        return Ok(1.0);
    }
    let integral = life_integral(params, |s| z * params.eps_ratio_unchecked(s * z))?;
    Ok(1.0 - (1.0 - g) * integral)
}

/// `a(s, z)`: the `g_κ` argument of the degree pgf after cancelling `(1+z)²/(4z)`.
fn degree_arg(p: f64, s: f64, z: f64) -> f64 {
    0.5 * s * (2.0 * p * s * z + (1.0 - p) * (1.0 + z))
}

/// Pgf of the lifetime degree contribution `η(λ)` of one edge at a fixed vertex.
pub fn pgf_eta_lambda(params: &ModelParams, z: f64) -> Result<f64, GenfunError> {
    let z = unit_arg(z)?;
    let p = params.p();
    let kappa = params.kappa();
    let g = params.pgf_kappa(degree_arg(p, 1.0, z))?;
    if g == 1.0 {
        return Ok(1.0);
    }
    // g_κ(a(s,z)) / s = (a(s,z)/s) E(a^{κ-1})
    let integral = life_integral(params, |s| {
        let slope = 0.5 * (2.0 * p * s * z + (1.0 - p) * (1.0 + z));
        slope * kappa.pgf_shifted_unchecked((s * slope).min(1.0))
    })?;
    Ok(1.0 - (1.0 - g) * integral)
}

/// The degree pgf through the literal composition `f((1+z)²/(4z), 2z/(1+z))`.
/// Only defined for `z > 0`.
pub fn pgf_eta_lambda_literal(params: &ModelParams, z: f64) -> Result<f64, GenfunError> {
    if !(z > 0.0 && z <= 1.0) {
        return Err(ModelError::Domain(z).into());
    }
    joint_life_pgf(params, (1.0 + z).powi(2) / (4.0 * z), 2.0 * z / (1.0 + z))
}

/// Outcome of a monotone fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPointResult {
    pub root: f64,
    pub iterations: usize,
    /// `|g(root) - root|`.
    pub residual: f64,
}

/// Iterates `z ← g(z)` from `z = 0`. For a pgf the sequence is nondecreasing
/// and converges to the smallest fixed point in `[0, 1]`. Once the increment
/// drops below `1e-13` the iteration continues until it stops increasing,
/// so the result approaches the root from below to rounding level.
pub fn monotone_fixed_point<F>(mut g: F) -> Result<FixedPointResult, GenfunError>
where
    F: FnMut(f64) -> Result<f64, GenfunError>,
{
    let mut z = 0.0;
    let mut settled_at = None;
    for iterations in 0..MAX_ITERATIONS {
        let next = g(z)?.min(1.0);
        let step = next - z;
        let polished = settled_at.is_some_and(|s| iterations - s >= POLISH_ITERATIONS);
        if step <= 0.0 || polished {
            return Ok(FixedPointResult {
                root: z,
                iterations,
                residual: step.abs(),
            });
        }
        if step < INCREMENT_TOL && settled_at.is_none() {
            settled_at = Some(iterations);
        }
        z = next;
    }
    let residual = (g(z)? - z).abs();
    Ok(FixedPointResult {
        root: z,
        iterations: MAX_ITERATIONS,
        residual,
    })
}

/// The first `n` iterates of `z ← g(z)` starting at 0.
pub fn fixed_point_iterates<F>(mut g: F, n: usize) -> Result<Vec<f64>, GenfunError>
where
    F: FnMut(f64) -> Result<f64, GenfunError>,
{
    let mut out = Vec::with_capacity(n + 1);
    let mut z = 0.0;
    out.push(z);
    for _ in 0..n {
        z = g(z)?;
        out.push(z);
    }
    Ok(out)
}

/// Probability that the graph eventually loses all its edges.
pub fn extinction_probability(params: &ModelParams) -> Result<FixedPointResult, GenfunError> {
    if criticality_index(params)? <= 1.0 {
        return Ok(FixedPointResult {
            root: 1.0,
            iterations: 0,
            residual: (pgf_xi_lambda(params, 1.0)? - 1.0).abs(),
        });
    }
    monotone_fixed_point(|z| pgf_xi_lambda(params, z))
}

/// How a tracked vertex enters the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttachmentKind {
    /// Born with two edges.
    Cherry,
    /// Born with one edge.
    Semi,
    /// Born as a cherry with probability `p`, otherwise as a semi-cherry.
    Generic,
}

/// Smallest fixed point of the degree pgf: the isolation probability of a
/// vertex that starts with a single edge.
pub fn isolation_root(params: &ModelParams) -> Result<FixedPointResult, GenfunError> {
    // E η(λ) = m / 2
    if criticality_index(params)? <= 2.0 {
        return Ok(FixedPointResult {
            root: 1.0,
            iterations: 0,
            residual: (pgf_eta_lambda(params, 1.0)? - 1.0).abs(),
        });
    }
    monotone_fixed_point(|z| pgf_eta_lambda(params, z))
}

/// Probability that a fixed vertex eventually reaches degree 0.
pub fn isolation_probability(
    params: &ModelParams,
    kind: AttachmentKind,
) -> Result<f64, GenfunError> {
    let z = isolation_root(params)?.root;
    Ok(isolation_from_root(params.p(), z, kind))
}

pub fn isolation_from_root(p: f64, z: f64, kind: AttachmentKind) -> f64 {
    match kind {
        AttachmentKind::Cherry => z * z,
        AttachmentKind::Semi => z,
        AttachmentKind::Generic => p * z * z + (1.0 - p) * z,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OffspringDist;
    use approx::assert_abs_diff_eq;

    fn k1(b: f64, c: f64, p: f64) -> ModelParams {
        ModelParams::new(b, c, p, OffspringDist::Constant { k: 1 }).unwrap()
    }

    fn instances() -> Vec<ModelParams> {
        vec![
            k1(0.1, 0.1, 1.0),
            k1(1.0, 1.0, 0.5),
            k1(1.0, 1.0, 0.0),
            ModelParams::new(0.5, 0.5, 0.3, OffspringDist::ShiftedPoisson { rate: 1.0 }).unwrap(),
            ModelParams::new(0.2, 2.0, 0.6, OffspringDist::ShiftedGeometric { q: 0.5 }).unwrap(),
        ]
    }

    #[test]
    fn big_g_boundary_value() {
        for m in instances() {
            let g0 = big_g(&m, 0.0, 0.7).unwrap();
            assert_abs_diff_eq!(g0, 1.0 / (1.0 + m.b()), epsilon = 1e-12);
            // G(1, 1) is the mean lifetime, and the hazard is at least b
            let g11 = big_g(&m, 1.0, 1.0).unwrap();
            assert!(g11 > 0.0 && g11 < 1.0 / m.b());
        }
        assert!(big_g(&k1(1.0, 1.0, 0.5), 2.0, 1.0).is_err());
    }

    #[test]
    fn big_g_against_series_for_stems() {
        // κ ≡ 1, p = 0, x = y = z: G = (1/c) e^{z/c} Σ_n (-z/c)^n / (n! (θ + n))
        for (b, c) in [(1.0, 1.0), (0.5, 2.0), (0.3, 0.7)] {
            let m = k1(b, c, 0.0);
            let z = 0.5;
            let theta = (1.0 + b) / c;
            let r = z / c;
            let mut term = 1.0;
            let mut series = 0.0;
            for n in 0..80 {
                if n > 0 {
                    term *= -r / n as f64;
                }
                series += term / (theta + n as f64);
            }
            let expected = r.exp() * series / c;
            assert_abs_diff_eq!(big_g(&m, z, z).unwrap(), expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn pgf_xi_anchors() {
        for m in instances() {
            assert_abs_diff_eq!(pgf_xi_lambda(&m, 1.0).unwrap(), 1.0, epsilon = 1e-15);
            assert_abs_diff_eq!(pgf_xi_lambda(&m, 0.0).unwrap(), m.b() / (1.0 + m.b()), epsilon = 1e-10);
            assert_abs_diff_eq!(pgf_eta_lambda(&m, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        }
        assert!(pgf_xi_lambda(&k1(1.0, 1.0, 0.5), 1.2).is_err());
    }

    #[test]
    fn pgf_eta_at_zero_for_pure_cherries() {
        let m = k1(0.7, 0.4, 1.0);
        assert_abs_diff_eq!(pgf_eta_lambda(&m, 0.0).unwrap(), 0.7 / 1.7, epsilon = 1e-12);
    }

    #[test]
    fn xi_pgf_factors_through_big_g() {
        for m in instances() {
            for i in 0..=10 {
                let z = i as f64 / 10.0;
                let lhs = 1.0 - pgf_xi_lambda(&m, z).unwrap();
                let rhs = (1.0 - m.pgf_eps(z).unwrap()) * big_g(&m, z, z).unwrap();
                assert!((lhs - rhs).abs() < 1e-11, "z={z}: {lhs} vs {rhs}");
                assert!((pgf_xi_lambda(&m, z).unwrap() - joint_life_pgf(&m, 1.0, z).unwrap()).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn reduced_and_literal_degree_pgf_agree() {
        for m in instances() {
            for i in 1..=10 {
                let z = i as f64 / 10.0;
                let reduced = pgf_eta_lambda(&m, z).unwrap();
                let literal = pgf_eta_lambda_literal(&m, z).unwrap();
                assert!((reduced - literal).abs() < 1e-11, "z={z}: {reduced} vs {literal}");
            }
        }
    }

    #[test]
    fn pgfs_are_nondecreasing_and_convex() {
        for m in instances() {
            for pgf in [pgf_xi_lambda, pgf_eta_lambda] {
                let v: Vec<f64> = (0..=100).map(|i| pgf(&m, i as f64 / 100.0).unwrap()).collect();
                for w in v.windows(2) {
                    assert!(w[1] >= w[0] - 1e-12);
                }
                for w in v.windows(3) {
                    assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-9);
                }
            }
        }
    }

    #[test]
    fn derivatives_at_one_match_means() {
        let h = 1e-5;
        let d = |f: &dyn Fn(f64) -> f64| (3.0 * f(1.0) - 4.0 * f(1.0 - h) + f(1.0 - 2.0 * h)) / (2.0 * h);
        for m in instances() {
            let crit = criticality_index(&m).unwrap();
            let dxi = d(&|z| pgf_xi_lambda(&m, z).unwrap());
            let deta = d(&|z| pgf_eta_lambda(&m, z).unwrap());
            assert!((dxi - crit).abs() < 1e-5 * crit, "{dxi} vs {crit}");
            assert!((deta - 0.5 * crit).abs() < 1e-5 * crit, "{deta} vs {}", crit / 2.0);
        }
    }

    #[test]
    fn extinction_fixed_point() {
        let sub = k1(1.0, 1.0, 0.0);
        let r = extinction_probability(&sub).unwrap();
        assert_abs_diff_eq!(r.root, 1.0, epsilon = 1e-9);
        // the fixed-point equation is always satisfied at z = 1
        for m in instances() {
            assert_abs_diff_eq!(pgf_xi_lambda(&m, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        }
        let sup = k1(0.1, 0.1, 1.0);
        let r = extinction_probability(&sup).unwrap();
        assert!(r.root < 1.0 && r.root > 0.0);
        assert!(r.residual <= 1e-11);
        assert!((pgf_xi_lambda(&sup, r.root).unwrap() - r.root).abs() <= 1e-11);
    }

    #[test]
    fn subcritical_extinction_by_iteration() {
        // the short-circuit agrees with brute iteration when m < 1
        let sub = k1(1.0, 1.0, 0.0);
        let r = monotone_fixed_point(|z| pgf_xi_lambda(&sub, z)).unwrap();
        assert!((r.root - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iterates_are_monotone_and_bounded() {
        for m in instances() {
            let it = fixed_point_iterates(|z| pgf_xi_lambda(&m, z), 60).unwrap();
            for w in it.windows(2) {
                assert!(w[1] >= w[0] - 1e-15 && w[1] <= 1.0);
            }
            let it = fixed_point_iterates(|z| pgf_eta_lambda(&m, z), 60).unwrap();
            for w in it.windows(2) {
                assert!(w[1] >= w[0] - 1e-15 && w[1] <= 1.0);
            }
        }
    }

    #[test]
    fn isolation_cases() {
        // m ≤ 2: the degree process dies out
        let low = k1(1.0, 1.0, 0.5);
        for kind in [AttachmentKind::Cherry, AttachmentKind::Semi, AttachmentKind::Generic] {
            assert_eq!(isolation_probability(&low, kind).unwrap(), 1.0);
        }
        let m = ModelParams::new(0.5, 0.5, 0.3, OffspringDist::ShiftedPoisson { rate: 1.0 }).unwrap();
        let cherry = isolation_probability(&m, AttachmentKind::Cherry).unwrap();
        let semi = isolation_probability(&m, AttachmentKind::Semi).unwrap();
        let generic = isolation_probability(&m, AttachmentKind::Generic).unwrap();
        assert!(semi < 1.0);
        assert_abs_diff_eq!(generic, 0.3 * cherry + 0.7 * semi, epsilon = 1e-15);
        // isolation includes extinction of the whole graph
        let ext = extinction_probability(&m).unwrap().root;
        assert!(cherry >= ext);
    }
}
