//! Quadrature and root finding.
//!
//! Integrals of the form `∫₀¹ u^(θ-1) f(u) du` are reduced to bounded
//! integrands with the exact substitution `u = w^(1/θ)` and then handled by
//! an adaptive 21-point Gauss–Kronrod scheme. Half-line integrals never reach
//! this module: callers map them onto `(0, 1]` first.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::ModelParams;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("quadrature did not converge: estimate {estimate}, error bound {error}")]
    NoConvergence { estimate: f64, error: f64 },
    #[error("invalid bracket [{lo}, {hi}]: f(lo) = {f_lo}, f(hi) = {f_hi}")]
    InvalidBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
    #[error("argument {0} outside the admissible range")]
    Domain(f64),
    #[error("invalid quadrature settings: {0}")]
    InvalidSpec(String),
}

/// Tolerances for adaptive quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-13,
            max_subdivisions: 2000,
        }
    }
}

impl QuadratureSpec {
    fn validate(&self) -> Result<(), NumericsError> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(NumericsError::InvalidSpec("tolerances must be positive".into()));
        }
        if self.max_subdivisions == 0 {
            return Err(NumericsError::InvalidSpec("need at least one subdivision".into()));
        }
        Ok(())
    }
}

// Kronrod abscissae; odd indices are the 10-point Gauss nodes.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_428_439,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// One Gauss–Kronrod 21-point panel: `(integral, error estimate)`.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut res_k = fc * WGK[10];
    let mut res_g = 0.0;
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let integral = res_k * half;
    res_abs *= half.abs();
    res_asc *= half.abs();
    let mut err = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * res_abs);
    }
    (integral, err)
}

struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Adaptive Gauss–Kronrod quadrature of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    spec.validate()?;
    if a == b {
        return Ok(0.0);
    }
    let (value, error) = gk21(&f, a, b);
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error });
    let mut panels = 1;
    loop {
        let target = spec.abs_tol.max(spec.rel_tol * total.abs());
        if total_err <= target {
            return Ok(total);
        }
        if panels >= spec.max_subdivisions {
            break;
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine precision
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2 });
        panels += 1;
    }
    // recompute from the panels to shed accumulated cancellation in the running sums
    let estimate: f64 = heap.iter().map(|p| p.value).sum();
    let error: f64 = heap.iter().map(|p| p.error).sum();
    if error <= spec.abs_tol.max(spec.rel_tol * estimate.abs()) {
        return Ok(estimate);
    }
    Err(NumericsError::NoConvergence { estimate, error })
}

/// `∫₀¹ u^(θ-1) f(u) du` for bounded, continuous `f` on `(0, 1]`.
///
/// Computed as `(1/θ) ∫₀¹ f(w^(1/θ)) dw`.
pub fn integrate_power_weighted<F: Fn(f64) -> f64>(
    f: F,
    theta: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(NumericsError::Domain(theta));
    }
    let inv = 1.0 / theta;
    let value = integrate(|w| f(w.powf(inv)), 0.0, 1.0, spec).map_err(|e| match e {
        NumericsError::NoConvergence { estimate, error } => NumericsError::NoConvergence {
            estimate: estimate * inv,
            error: error * inv,
        },
        other => other,
    })?;
    Ok(value * inv)
}

/// `∫₀¹ u^(θ-1) (-ln u) f(u) du`.
///
/// Half of the power weight absorbs the logarithm: `u^(θ/2) (-ln u)` is bounded
/// and vanishes at `u = 0`.
pub fn integrate_power_log_weighted<F: Fn(f64) -> f64>(
    f: F,
    theta: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    if !(theta.is_finite() && theta > 0.0) {
        return Err(NumericsError::Domain(theta));
    }
    let half = 0.5 * theta;
    integrate_power_weighted(
        |u| {
            if u <= 0.0 {
                0.0
            } else {
                u.powf(half) * (-u.ln()) * f(u)
            }
        },
        half,
        spec,
    )
}

/// `(1/c) ∫_u^1 g_ε(v)/v dv`, the exponent shared by the survival function and
/// the Malthusian equation.
pub fn integrate_inner_exponent(
    params: &ModelParams,
    u: f64,
    spec: &QuadratureSpec,
) -> Result<f64, NumericsError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(NumericsError::Domain(u));
    }
    if u == 1.0 {
        return Ok(0.0);
    }
    let integral = integrate(|v| params.eps_ratio_unchecked(v), u, 1.0, spec)?;
    Ok(integral / params.c())
}

/// Fixed Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes by Newton iteration on `P_n`.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F, a: f64, b: f64) -> f64 {
        let center = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let sum: f64 = self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(center + half * x))
            .sum();
        sum * half
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// The shared 64-node rule.
pub fn gauss_legendre_64() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(64))
}

/// Root of `f` on `[lo, hi]` by bisection with secant acceleration.
///
/// Stops once `|f(x)| ≤ tol` or the bracket is narrower than `tol`.
pub fn find_root<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.is_nan() || fb.is_nan() || fa.signum() == fb.signum() {
        return Err(NumericsError::InvalidBracket {
            lo: a,
            hi: b,
            f_lo: fa,
            f_hi: fb,
        });
    }
    let mut width = b - a;
    let mut force_bisect = false;
    for _ in 0..500 {
        let mid = 0.5 * (a + b);
        let secant = b - fb * (b - a) / (fb - fa);
        let x = if !force_bisect && secant.is_finite() && secant > a && secant < b {
            secant
        } else {
            mid
        };
        let fx = f(x);
        if fx == 0.0 || fx.abs() <= tol {
            return Ok(x);
        }
        if fx.signum() == fa.signum() {
            a = x;
            fa = fx;
        } else {
            b = x;
            fb = fx;
        }
        let new_width = b - a;
        if new_width <= tol {
            return Ok(if fa.abs() < fb.abs() { a } else { b });
        }
        force_bisect = new_width > 0.5 * width;
        width = new_width;
    }
    Ok(if fa.abs() < fb.abs() { a } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::OffspringDist;
    use approx::assert_abs_diff_eq;

    #[test]
    fn gauss_kronrod_is_exact_for_low_degree_polynomials() {
        // a single panel integrates degree ≤ 31 exactly; the embedded Gauss rule to 19
        for k in 0..=19 {
            let (v, _) = gk21(&|x: f64| x.powi(k), 0.0, 1.0);
            assert_abs_diff_eq!(v, 1.0 / (k as f64 + 1.0), epsilon = 1e-15);
        }
        for k in 20..=31 {
            let (v, _) = gk21(&|x: f64| x.powi(k), 0.0, 1.0);
            assert_abs_diff_eq!(v, 1.0 / (k as f64 + 1.0), epsilon = 1e-14);
        }
    }

    #[test]
    fn power_weighted_examples() {
        let spec = QuadratureSpec::default();
        assert_abs_diff_eq!(integrate_power_weighted(|_| 1.0, 0.5, &spec).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(integrate_power_weighted(|u| u, 1.0, &spec).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(
            integrate_power_weighted(f64::exp, 2.0, &spec).unwrap(),
            1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn exp_weight_against_riemann_sum() {
        // midpoint sum of u e^u on 10^7 cells
        let n = 10_000_000;
        let h = 1.0 / n as f64;
        let riemann: f64 = (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                u * u.exp()
            })
            .sum::<f64>()
            * h;
        let quad = integrate_power_weighted(f64::exp, 2.0, &QuadratureSpec::default()).unwrap();
        assert!((riemann - quad).abs() < 1e-12, "{riemann} vs {quad}");
    }

    #[test]
    fn power_weighted_reproduces_monomials() {
        let spec = QuadratureSpec::default();
        for theta in [0.25, 1.0, 4.0] {
            for k in 0..=5 {
                let v = integrate_power_weighted(|u| u.powi(k), theta, &spec).unwrap();
                let exact = 1.0 / (theta + k as f64);
                assert!((v - exact).abs() < 1e-12, "theta={theta} k={k}: {v} vs {exact}");
            }
        }
    }

    #[test]
    fn log_weight_calibration() {
        let spec = QuadratureSpec::default();
        assert_abs_diff_eq!(integrate_power_log_weighted(|_| 1.0, 1.0, &spec).unwrap(), 1.0, epsilon = 1e-12);
        // ∫ u^(θ-1) (-ln u) du = 1/θ²
        for theta in [0.3, 2.0, 11.0] {
            let v = integrate_power_log_weighted(|_| 1.0, theta, &spec).unwrap();
            assert!((v - 1.0 / (theta * theta)).abs() < 1e-11 * (1.0 / (theta * theta)).max(1.0));
        }
    }

    #[test]
    fn non_convergence_is_reported_with_estimate() {
        let spec = QuadratureSpec {
            max_subdivisions: 3,
            ..QuadratureSpec::default()
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 1e-6, 1.0, &spec).unwrap_err();
        match err {
            NumericsError::NoConvergence { estimate, error } => {
                assert!(estimate.is_finite());
                assert!(error > 0.0);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(integrate_power_weighted(|_| 1.0, -1.0, &QuadratureSpec::default()).is_err());
    }

    #[test]
    fn inner_exponent_closed_forms() {
        let spec = QuadratureSpec::default();
        let k1 = OffspringDist::Constant { k: 1 };
        let cherries = ModelParams::new(1.0, 0.7, 1.0, k1.clone()).unwrap();
        let stems = ModelParams::new(1.0, 0.7, 0.0, k1).unwrap();
        assert_eq!(integrate_inner_exponent(&cherries, 1.0, &spec).unwrap(), 0.0);
        for u in [0.0, 1e-9, 0.2, 0.5, 0.99] {
            let a = integrate_inner_exponent(&cherries, u, &spec).unwrap();
            assert_abs_diff_eq!(a, (1.0 - u * u) / (2.0 * 0.7), epsilon = 1e-13);
            let b = integrate_inner_exponent(&stems, u, &spec).unwrap();
            assert_abs_diff_eq!(b, (1.0 - u) / 0.7, epsilon = 1e-13);
        }
        assert!(integrate_inner_exponent(&stems, 1.5, &spec).is_err());
    }

    #[test]
    fn gauss_legendre_64_is_exact_to_high_degree() {
        let rule = gauss_legendre_64();
        assert_eq!(rule.len(), 64);
        for k in [0, 1, 10, 63, 100, 127] {
            let v = rule.integrate(|x| x.powi(k), 0.0, 1.0);
            assert_abs_diff_eq!(v, 1.0 / (k as f64 + 1.0), epsilon = 1e-14);
        }
        let w_sum = rule.integrate(|_| 1.0, -1.0, 1.0);
        assert_abs_diff_eq!(w_sum, 2.0, epsilon = 1e-14);
    }

    #[test]
    fn root_examples() {
        let tol = 1e-12;
        assert_abs_diff_eq!(find_root(|x| x - 0.3, 0.0, 1.0, tol).unwrap(), 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(
            find_root(|x| x * x - 2.0, 1.0, 2.0, tol).unwrap(),
            std::f64::consts::SQRT_2,
            epsilon = 1e-11
        );
        assert_abs_diff_eq!(
            find_root(f64::cos, 1.0, 2.0, tol).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-11
        );
    }

    #[test]
    fn root_rejects_invalid_bracket() {
        assert!(matches!(
            find_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12),
            Err(NumericsError::InvalidBracket { .. })
        ));
    }

    #[test]
    fn root_stays_in_bracket_with_bounded_residual() {
        type Case = (Box<dyn Fn(f64) -> f64>, f64, f64);
        let cases: Vec<Case> = vec![
            (Box::new(|x| x.powi(3) - x - 2.0), 1.0, 2.0),
            (Box::new(|x| (x - 0.999).powi(5)), 0.0, 1.0),
            (Box::new(|x| x.exp() - 10.0), 0.0, 5.0),
            (Box::new(|x| 1e6 * (x - 0.123456)), 0.0, 1.0),
            (Box::new(|x| x.atan()), -3.0, 100.0),
        ];
        for tol in [1e-6, 1e-10, 1e-13] {
            for (f, lo, hi) in &cases {
                let x = find_root(f, *lo, *hi, tol).unwrap();
                assert!(x >= *lo && x <= *hi);
                let bound = 10.0 * tol * 1f64.max(f(*lo).abs()).max(f(*hi).abs());
                assert!(f(x).abs() <= bound, "residual {} > {bound}", f(x).abs());
            }
        }
    }
}
