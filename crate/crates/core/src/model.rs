//! Model parameters and the offspring-size laws.
//!
//! A model instance is the quadruple `(b, c, p, κ)`: `b` is the base deletion
//! hazard of an edge, `c` the extra hazard per child edge, `p` the probability
//! that a new vertex forms a cherry (two edges) rather than a semi-cherry (one
//! edge), and `κ` the number of new vertices per reproduction event.
//!
//! All generating functions here are only ever evaluated on `[0, 1]`.

use rand::distr::weighted::WeightedIndex;
use rand::Rng;
use rand_distr::{Binomial, Distribution, Geometric, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed when a composite pgf argument is rounded just outside `[0, 1]`.
const UNIT_SLACK: f64 = 1e-12;

/// Tolerance on the total mass of an explicit pmf.
const PMF_MASS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("pgf argument {0} outside [0, 1]")]
    Domain(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid offspring distribution: {0}")]
    InvalidDistribution(String),
}

/// Clamps `x` into `[0, 1]` when it is within rounding distance, errors otherwise.
pub(crate) fn unit_arg(x: f64) -> Result<f64, ModelError> {
    if x.is_nan() || !(-UNIT_SLACK..=1.0 + UNIT_SLACK).contains(&x) {
        return Err(ModelError::Domain(x));
    }
    Ok(x.clamp(0.0, 1.0))
}

/// Law of the number of new vertices per litter. Always supported on `{1, 2, ...}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OffspringDist {
    Constant { k: u32 },
    /// `1 + Poisson(rate)`.
    ShiftedPoisson { rate: f64 },
    /// `P(κ = k) = q (1 - q)^(k-1)` for `k ≥ 1`.
    ShiftedGeometric { q: f64 },
    /// Finite pmf as `(value, probability)` pairs.
    Explicit { pmf: Vec<(u32, f64)> },
}

impl OffspringDist {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            Self::Constant { k } => {
                if *k == 0 {
                    return Err(ModelError::InvalidDistribution(
                        "constant litter size must be at least 1".into(),
                    ));
                }
            }
            Self::ShiftedPoisson { rate } => {
                if !(rate.is_finite() && *rate > 0.0) {
                    return Err(ModelError::InvalidDistribution(format!(
                        "poisson rate must be positive, got {rate}"
                    )));
                }
            }
            Self::ShiftedGeometric { q } => {
                if !(*q > 0.0 && *q < 1.0) {
                    return Err(ModelError::InvalidDistribution(format!(
                        "geometric parameter must lie in (0, 1), got {q}"
                    )));
                }
            }
            Self::Explicit { pmf } => {
                if pmf.is_empty() {
                    return Err(ModelError::InvalidDistribution("empty pmf".into()));
                }
                let mut total = 0.0;
                for &(value, prob) in pmf {
                    if value == 0 {
                        return Err(ModelError::InvalidDistribution(
                            "litters of size 0 are not allowed".into(),
                        ));
                    }
                    if !(prob.is_finite() && prob >= 0.0) {
                        return Err(ModelError::InvalidDistribution(format!(
                            "negative or non-finite probability {prob}"
                        )));
                    }
                    total += prob;
                }
                if (total - 1.0).abs() > PMF_MASS_TOL {
                    return Err(ModelError::InvalidDistribution(format!(
                        "pmf sums to {total}, expected 1"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Constant { k } => f64::from(*k),
            Self::ShiftedPoisson { rate } => 1.0 + rate,
            Self::ShiftedGeometric { q } => 1.0 / q,
            Self::Explicit { pmf } => pmf.iter().map(|&(v, p)| f64::from(v) * p).sum(),
        }
    }

    /// `E(s^κ)` for `s ∈ [0, 1]`.
    pub fn pgf(&self, s: f64) -> Result<f64, ModelError> {
        let s = unit_arg(s)?;
        Ok(s * self.pgf_shifted_unchecked(s))
    }

    /// `E(s^(κ-1))`, i.e. `g_κ(s)/s` extended continuously to `s = 0`.
    pub fn pgf_shifted(&self, s: f64) -> Result<f64, ModelError> {
        let s = unit_arg(s)?;
        Ok(self.pgf_shifted_unchecked(s))
    }

    pub(crate) fn pgf_shifted_unchecked(&self, s: f64) -> f64 {
        match self {
            Self::Constant { k } => s.powi(*k as i32 - 1),
            Self::ShiftedPoisson { rate } => (rate * (s - 1.0)).exp(),
            Self::ShiftedGeometric { q } => q / (1.0 - (1.0 - q) * s),
            Self::Explicit { pmf } => pmf.iter().map(|&(v, p)| p * s.powi(v as i32 - 1)).sum(),
        }
    }

    /// `P(κ = k)`.
    pub fn pmf(&self, k: u32) -> f64 {
        if k == 0 {
            return 0.0;
        }
        match self {
            Self::Constant { k: c } => {
                if k == *c {
                    1.0
                } else {
                    0.0
                }
            }
            Self::ShiftedPoisson { rate } => {
                let n = f64::from(k - 1);
                (n * rate.ln() - rate - ln_factorial(k - 1)).exp()
            }
            Self::ShiftedGeometric { q } => q * (1.0 - q).powi(k as i32 - 1),
            Self::Explicit { pmf } => pmf.iter().filter(|(v, _)| *v == k).map(|(_, p)| p).sum(),
        }
    }

    /// Smallest `K` with `P(κ > K) < tail`; exact support bound for finite laws.
    pub fn truncation_point(&self, tail: f64) -> u32 {
        match self {
            Self::Constant { k } => *k,
            Self::Explicit { pmf } => pmf
                .iter()
                .filter(|(_, p)| *p > 0.0)
                .map(|(v, _)| *v)
                .max()
                .unwrap_or(1),
            _ => {
                let mut cdf = 0.0;
                let mut k = 0;
                loop {
                    k += 1;
                    cdf += self.pmf(k);
                    if 1.0 - cdf < tail || k >= 100_000 {
                        return k;
                    }
                }
            }
        }
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|i| f64::from(i).ln()).sum()
}

/// One model instance. Construction validates every constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    b: f64,
    c: f64,
    p: f64,
    kappa: OffspringDist,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    b: f64,
    c: f64,
    p: f64,
    kappa: OffspringDist,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = ModelError;

    fn try_from(raw: RawParams) -> Result<Self, Self::Error> {
        ModelParams::new(raw.b, raw.c, raw.p, raw.kappa)
    }
}

impl From<ModelParams> for RawParams {
    fn from(m: ModelParams) -> Self {
        RawParams {
            b: m.b,
            c: m.c,
            p: m.p,
            kappa: m.kappa,
        }
    }
}

impl ModelParams {
    pub fn new(b: f64, c: f64, p: f64, kappa: OffspringDist) -> Result<Self, ModelError> {
        if !(b.is_finite() && b > 0.0) {
            return Err(ModelError::InvalidParameter(format!("b must be positive, got {b}")));
        }
        if !(c.is_finite() && c > 0.0) {
            return Err(ModelError::InvalidParameter(format!("c must be positive, got {c}")));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(ModelError::InvalidParameter(format!("p must lie in [0, 1], got {p}")));
        }
        kappa.validate()?;
        Ok(Self { b, c, p, kappa })
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn kappa(&self) -> &OffspringDist {
        &self.kappa
    }

    pub fn pgf_kappa(&self, s: f64) -> Result<f64, ModelError> {
        self.kappa.pgf(s)
    }

    /// `g_ε(z) = g_κ(p z² + (1-p) z)`.
    pub fn pgf_eps(&self, z: f64) -> Result<f64, ModelError> {
        let z = unit_arg(z)?;
        Ok(z * self.eps_ratio_unchecked(z))
    }

    /// `g_ε(v)/v`, continuous at `v = 0` because `ε ≥ 1`.
    pub fn eps_ratio(&self, v: f64) -> Result<f64, ModelError> {
        let v = unit_arg(v)?;
        Ok(self.eps_ratio_unchecked(v))
    }

    pub(crate) fn eps_ratio_unchecked(&self, v: f64) -> f64 {
        let factor = self.p * v + 1.0 - self.p;
        factor * self.kappa.pgf_shifted_unchecked(v * factor)
    }

    /// `E(x^κ y^ε) = g_κ(x y (p y + 1 - p))`.
    pub fn joint_pgf_kappa_eps(&self, x: f64, y: f64) -> Result<f64, ModelError> {
        self.kappa.pgf(x * y * (self.p * y + 1.0 - self.p))
    }

    pub fn mean_kappa(&self) -> f64 {
        self.kappa.mean()
    }

    /// `E(ε) = (1 + p) E(κ)`.
    pub fn mean_eps(&self) -> f64 {
        (1.0 + self.p) * self.kappa.mean()
    }

    /// Weight of a living edge with `xi` child edges.
    #[inline]
    pub fn weight(&self, xi: u64) -> f64 {
        1.0 + self.b + self.c * xi as f64
    }

    /// Joint pmf `P(κ = l, ε = l + k)`: κ = l and `k` of the `l` new vertices are cherries.
    pub fn litter_pmf(&self, l: u32, k: u32) -> f64 {
        if k > l {
            return 0.0;
        }
        self.kappa.pmf(l) * binomial_pmf(l, k, self.p)
    }

    pub fn litter_sampler(&self) -> LitterSampler {
        LitterSampler::new(self)
    }
}

pub(crate) fn binomial_pmf(n: u32, k: u32, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p == 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln_choose = ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k);
    (ln_choose + f64::from(k) * p.ln() + f64::from(n - k) * (1.0 - p).ln()).exp()
}

/// A drawn litter: `kappa` new vertices, of which `cherries` attach to both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Litter {
    pub kappa: u32,
    pub cherries: u32,
}

impl Litter {
    /// Number of new edges `ε = κ + cherries`.
    pub fn edges(&self) -> u32 {
        self.kappa + self.cherries
    }
}

#[derive(Debug, Clone)]
enum KappaSampler {
    Constant(u32),
    Poisson(Poisson<f64>),
    Geometric(Geometric),
    Explicit(Vec<u32>, WeightedIndex<f64>),
}

/// Prepared sampler for `(κ, cherries)`.
#[derive(Debug, Clone)]
pub struct LitterSampler {
    kappa: KappaSampler,
    p: f64,
}

impl LitterSampler {
    fn new(params: &ModelParams) -> Self {
        let kappa = match params.kappa() {
            OffspringDist::Constant { k } => KappaSampler::Constant(*k),
            OffspringDist::ShiftedPoisson { rate } => {
                KappaSampler::Poisson(Poisson::new(*rate).expect("validated rate"))
            }
            OffspringDist::ShiftedGeometric { q } => {
                KappaSampler::Geometric(Geometric::new(*q).expect("validated q"))
            }
            OffspringDist::Explicit { pmf } => {
                let values = pmf.iter().map(|(v, _)| *v).collect();
                let weights = WeightedIndex::new(pmf.iter().map(|(_, p)| *p))
                    .expect("validated pmf");
                KappaSampler::Explicit(values, weights)
            }
        };
        Self { kappa, p: params.p() }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Litter {
        let kappa = match &self.kappa {
            KappaSampler::Constant(k) => *k,
            KappaSampler::Poisson(d) => 1 + d.sample(rng) as u32,
            KappaSampler::Geometric(d) => 1 + d.sample(rng) as u32,
            KappaSampler::Explicit(values, d) => values[d.sample(rng)],
        };
        let cherries = if self.p == 0.0 {
            0
        } else if self.p == 1.0 {
            kappa
        } else if kappa <= 32 {
            (0..kappa).filter(|_| rng.random::<f64>() < self.p).count() as u32
        } else {
            Binomial::new(u64::from(kappa), self.p)
                .expect("valid binomial")
                .sample(rng) as u32
        };
        Litter { kappa, cherries }
    }
}

/// Draws one litter `(κ, cherries)`.
pub fn sample_litter<R: Rng + ?Sized>(params: &ModelParams, rng: &mut R) -> Litter {
    params.litter_sampler().sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params(kappa: OffspringDist, p: f64) -> ModelParams {
        ModelParams::new(1.0, 1.0, p, kappa).unwrap()
    }

    fn all_variants() -> Vec<OffspringDist> {
        vec![
            OffspringDist::Constant { k: 1 },
            OffspringDist::Constant { k: 3 },
            OffspringDist::ShiftedPoisson { rate: 2.0 },
            OffspringDist::ShiftedGeometric { q: 0.4 },
            OffspringDist::Explicit {
                pmf: vec![(1, 0.5), (2, 0.25), (5, 0.25)],
            },
        ]
    }

    #[test]
    fn pgf_kappa_examples() {
        let one = OffspringDist::Constant { k: 1 };
        assert_eq!(one.pgf(0.5).unwrap(), 0.5);
        for d in all_variants() {
            assert_abs_diff_eq!(d.pgf(1.0).unwrap(), 1.0, epsilon = 1e-15);
        }
        let pois = OffspringDist::ShiftedPoisson { rate: 2.0 };
        assert_abs_diff_eq!(pois.pgf(0.5).unwrap(), 0.5 * (-1.0f64).exp(), epsilon = 1e-15);
        assert!((pois.pgf(0.5).unwrap() - 0.18394).abs() < 1e-5);
    }

    #[test]
    fn pgf_rejects_outside_unit_interval() {
        let d = OffspringDist::Constant { k: 2 };
        assert_eq!(d.pgf(1.5), Err(ModelError::Domain(1.5)));
        assert!(d.pgf(-0.1).is_err());
        assert!(d.pgf(f64::NAN).is_err());
    }

    #[test]
    fn pgf_eps_examples() {
        let p1 = params(OffspringDist::Constant { k: 1 }, 1.0);
        assert_abs_diff_eq!(p1.pgf_eps(0.5).unwrap(), 0.25, epsilon = 1e-15);
        let p0 = params(OffspringDist::Constant { k: 1 }, 0.0);
        assert_abs_diff_eq!(p0.pgf_eps(0.3).unwrap(), 0.3, epsilon = 1e-15);
        let two = params(OffspringDist::Constant { k: 2 }, 0.5);
        assert_abs_diff_eq!(two.pgf_eps(0.5).unwrap(), 0.140625, epsilon = 1e-15);
        assert!(two.pgf_eps(1.01).is_err());
    }

    #[test]
    fn joint_pgf_examples() {
        for d in all_variants() {
            let m = params(d, 0.3);
            assert_abs_diff_eq!(m.joint_pgf_kappa_eps(1.0, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        }
        let p1 = params(OffspringDist::Constant { k: 1 }, 1.0);
        assert_abs_diff_eq!(p1.joint_pgf_kappa_eps(1.0, 0.5).unwrap(), 0.25, epsilon = 1e-15);
        let half = params(OffspringDist::Constant { k: 1 }, 0.5);
        assert_abs_diff_eq!(half.joint_pgf_kappa_eps(2.0, 0.5).unwrap(), 0.75, epsilon = 1e-15);
        assert!(half.joint_pgf_kappa_eps(4.0, 1.0).is_err());
    }

    #[test]
    fn mean_eps_examples() {
        assert_eq!(params(OffspringDist::Constant { k: 1 }, 1.0).mean_eps(), 2.0);
        assert_eq!(params(OffspringDist::Constant { k: 1 }, 0.0).mean_eps(), 1.0);
        let pois = params(OffspringDist::ShiftedPoisson { rate: 2.0 }, 0.5);
        assert_abs_diff_eq!(pois.mean_eps(), 4.5, epsilon = 1e-15);
    }

    #[test]
    fn construction_errors() {
        let k1 = OffspringDist::Constant { k: 1 };
        assert!(ModelParams::new(0.0, 1.0, 0.5, k1.clone()).is_err());
        assert!(ModelParams::new(1.0, -1.0, 0.5, k1.clone()).is_err());
        assert!(ModelParams::new(1.0, 1.0, 1.5, k1).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.5, OffspringDist::Constant { k: 0 }).is_err());
        let zero_litter = OffspringDist::Explicit {
            pmf: vec![(0, 0.5), (1, 0.5)],
        };
        assert!(zero_litter.validate().is_err());
        let short = OffspringDist::Explicit {
            pmf: vec![(1, 0.5), (2, 0.4999)],
        };
        assert!(short.validate().is_err());
        assert!(OffspringDist::ShiftedGeometric { q: 1.0 }.validate().is_err());
    }

    #[test]
    fn json_shape() {
        let json = r#"{"b":0.5,"c":0.25,"p":0.3,"kappa":{"type":"shifted_poisson","rate":1.0}}"#;
        let m = ModelParams::from_json(json).unwrap();
        assert_eq!(m.kappa(), &OffspringDist::ShiftedPoisson { rate: 1.0 });
        assert_eq!(serde_json::to_string(&m).unwrap(), json);
        let explicit = r#"{"b":1.0,"c":1.0,"p":0.0,"kappa":{"type":"explicit","pmf":[[1,0.5],[3,0.5]]}}"#;
        assert!(ModelParams::from_json(explicit).is_ok());
        let bad = r#"{"b":-1.0,"c":1.0,"p":0.0,"kappa":{"type":"constant","k":1}}"#;
        assert!(ModelParams::from_json(bad).is_err());
    }

    #[test]
    fn pmf_matches_pgf_coefficients() {
        for d in all_variants() {
            let k_max = d.truncation_point(1e-15);
            let total: f64 = (1..=k_max).map(|k| d.pmf(k)).sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
            let s: f64 = 0.7;
            let series: f64 = (1..=k_max).map(|k| d.pmf(k) * s.powi(k as i32)).sum();
            assert_abs_diff_eq!(series, d.pgf(s).unwrap(), epsilon = 1e-12);
        }
    }

    #[test]
    fn derivative_of_pgf_eps_at_one_is_mean() {
        // one-sided second-order difference: the contract stops at z = 1
        let h = 1e-6;
        for d in all_variants() {
            for p in [0.0, 0.3, 1.0] {
                let m = params(d.clone(), p);
                let g = |z: f64| m.pgf_eps(z).unwrap();
                let deriv = (3.0 * g(1.0) - 4.0 * g(1.0 - h) + g(1.0 - 2.0 * h)) / (2.0 * h);
                let rel = (deriv - m.mean_eps()).abs() / m.mean_eps();
                assert!(rel < 1e-6, "{d:?} p={p}: {deriv} vs {}", m.mean_eps());
            }
        }
    }

    #[test]
    fn sample_litter_degenerate_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = params(OffspringDist::Constant { k: 3 }, 1.0);
        let none = params(OffspringDist::Constant { k: 2 }, 0.0);
        for _ in 0..1000 {
            assert_eq!(sample_litter(&all, &mut rng), Litter { kappa: 3, cherries: 3 });
            assert_eq!(sample_litter(&none, &mut rng), Litter { kappa: 2, cherries: 0 });
        }
    }

    #[test]
    fn sampled_eps_mean_within_four_standard_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for (d, p) in [
            (OffspringDist::Constant { k: 2 }, 0.5),
            (OffspringDist::ShiftedPoisson { rate: 2.0 }, 0.3),
            (OffspringDist::ShiftedGeometric { q: 0.4 }, 0.7),
            (
                OffspringDist::Explicit {
                    pmf: vec![(1, 0.5), (40, 0.5)],
                },
                0.5,
            ),
        ] {
            let m = params(d, p);
            let sampler = m.litter_sampler();
            let n = 1_000_000;
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..n {
                let e = f64::from(sampler.sample(&mut rng).edges());
                s += e;
                s2 += e * e;
            }
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - m.mean_eps()).abs() < 4.0 * se,
                "{:?}: {mean} vs {}",
                m.kappa(),
                m.mean_eps()
            );
        }
    }

    proptest! {
        #[test]
        fn pgfs_are_monotone_and_bounded(s in 0.0f64..1.0, ds in 0.0f64..1.0, p in 0.0f64..=1.0) {
            let t = (s + ds).min(1.0);
            for d in all_variants() {
                let a = d.pgf(s).unwrap();
                let b = d.pgf(t).unwrap();
                prop_assert!((0.0..=1.0).contains(&a));
                prop_assert!(a <= b + 1e-15);
                let m = params(d, p);
                let e = m.pgf_eps(s).unwrap();
                prop_assert!((e - m.joint_pgf_kappa_eps(1.0, s).unwrap()).abs() <= 1e-14);
            }
        }
    }
}
