//! Brute-force reference computations that share no code path with the
//! quadrature formulas: an exact recursion for the joint law of one edge's
//! lifetime offspring, Galton–Watson iteration on that law, and a direct
//! simulation of a single edge in isolation.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{binomial_pmf, ModelParams};
use crate::montecarlo::derive_seed;

/// κ tail mass dropped by the recursion.
pub const KAPPA_TAIL: f64 = 1e-12;
/// Largest admissible Galton–Watson bracket width.
pub const MAX_BRACKET_WIDTH: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("extinction bracket width {width:e} exceeds {MAX_BRACKET_WIDTH:e}; raise i_max")]
    Refinement { width: f64, lower: f64, upper: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(String),
}

/// Truncated joint law of `(π'(λ), ξ(λ))`: vertices and edges produced by one
/// edge over its whole life. `rows[i][j]` holds `P(π' = i, ξ = i + j)`, `0 ≤ j ≤ i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointLifePmf {
    rows: Vec<Vec<f64>>,
    pub i_max: usize,
    pub tail_mass: f64,
}

impl JointLifePmf {
    fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let i_max = rows.len() - 1;
        let total: f64 = rows.iter().flatten().sum();
        Self {
            rows,
            i_max,
            tail_mass: (1.0 - total).max(0.0),
        }
    }

    /// `P(π' = i, ξ = k)`; zero outside `i ≤ k ≤ 2i` or beyond `i_max`.
    pub fn get(&self, i: usize, k: usize) -> f64 {
        if i > self.i_max || k < i || k > 2 * i {
            return 0.0;
        }
        self.rows[i][k - i]
    }

    /// All tracked `(i, k, probability)` triples in increasing `(i, k)` order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &p)| (i, i + j, p)))
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().flatten().sum()
    }

    /// Marginal law of `ξ(λ)` indexed by edge count, length `2 i_max + 1`.
    pub fn xi_marginal(&self) -> Vec<f64> {
        let mut out = vec![0.0; 2 * self.i_max + 1];
        for (_, k, p) in self.iter() {
            out[k] += p;
        }
        out
    }

    /// `Σ P(ξ = k) z^k` over tracked entries.
    pub fn pgf_xi(&self, z: f64) -> f64 {
        self.xi_marginal().iter().rev().fold(0.0, |acc, &p| acc * z + p)
    }

    /// CSV with header `i,k,probability`, one row per tracked entry.
    pub fn to_csv(&self) -> Result<String, OracleError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| OracleError::Csv(e.to_string());
        w.write_record(["i", "k", "probability"]).map_err(err)?;
        for (i, k, p) in self.iter() {
            w.write_record([i.to_string(), k.to_string(), p.to_string()])
                .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| OracleError::Csv(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| OracleError::Csv(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self, OracleError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for rec in r.records() {
            let rec = rec.map_err(|e| OracleError::Csv(e.to_string()))?;
            let field = |n: usize| rec.get(n).ok_or_else(|| OracleError::Csv("short row".into()));
            let parse_usize = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| OracleError::Csv(format!("{s}: {e}")))
            };
            let i = parse_usize(field(0)?)?;
            let k = parse_usize(field(1)?)?;
            let p: f64 = field(2)?
                .parse()
                .map_err(|e| OracleError::Csv(format!("{}: {e}", rec.as_slice())))?;
            if i != rows.len().saturating_sub(1) && i != rows.len() {
                return Err(OracleError::Csv(format!("row i={i} out of order")));
            }
            if i == rows.len() {
                rows.push(Vec::with_capacity(i + 1));
            }
            if k != i + rows[i].len() {
                return Err(OracleError::Csv(format!("row ({i},{k}) out of order")));
            }
            rows[i].push(p);
        }
        if rows.is_empty() || rows.iter().enumerate().any(|(i, r)| r.len() != i + 1) {
            return Err(OracleError::Csv("incomplete triangle".into()));
        }
        Ok(Self::from_rows(rows))
    }
}

/// Exact dynamic programme for the joint law of `(π'(λ), ξ(λ))`.
///
/// `v[i][j]` is the expected time an edge spends having produced `i` vertices
/// and `i + j` edges; it satisfies
/// `(1 + b + c(i+j)) v[i][j] = Σ_{ℓ,k} v[i-ℓ][j-k] P(κ=ℓ) Bin(ℓ,p)(k)` with
/// `v[0][0] = 1/(1+b)`, and the entry is the death rate times `v`.
pub fn v_recursion(params: &ModelParams, i_max: usize) -> JointLifePmf {
    let (b, c, p) = (params.b(), params.c(), params.p());
    let big_k = (params.kappa().truncation_point(KAPPA_TAIL) as usize).min(i_max);
    // litter[ℓ][k] = P(κ = ℓ, k cherries)
    let litter: Vec<Vec<f64>> = (0..=big_k)
        .map(|l| {
            (0..=l)
                .map(|k| {
                    if l == 0 {
                        0.0
                    } else {
                        params.kappa().pmf(l as u32) * binomial_pmf(l as u32, k as u32, p)
                    }
                })
                .collect()
        })
        .collect();
    let mut v: Vec<Vec<f64>> = Vec::with_capacity(i_max + 1);
    for i in 0..=i_max {
        let mut row = vec![0.0; i + 1];
        for (j, slot) in row.iter_mut().enumerate() {
            let inflow = if i == 0 {
                1.0
            } else {
                let mut s = 0.0;
                for (l, lit) in litter.iter().enumerate().take(i.min(big_k) + 1).skip(1) {
                    let prev = &v[i - l];
                    // need 0 ≤ j - k ≤ i - l
                    let k_lo = j.saturating_sub(i - l);
                    for k in k_lo..=j.min(l) {
                        s += prev[j - k] * lit[k];
                    }
                }
                s
            };
            *slot = inflow / (1.0 + b + c * (i + j) as f64);
        }
        v.push(row);
    }
    let rows = v
        .into_iter()
        .enumerate()
        .map(|(i, row)| {
            row.into_iter()
                .enumerate()
                .map(|(j, x)| (b + c * (i + j) as f64) * x)
                .collect()
        })
        .collect();
    JointLifePmf::from_rows(rows)
}

/// Rigorous enclosure of a Galton–Watson extinction probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwBracket {
    pub lower: f64,
    pub upper: f64,
    pub root: f64,
    pub width: f64,
}

fn smallest_fixed_point(coeffs: &[f64]) -> f64 {
    let f = |z: f64| coeffs.iter().rev().fold(0.0, |acc, &p| acc * z + p);
    let mut z = 0.0_f64;
    for _ in 0..1_000_000 {
        let next = f(z).min(1.0);
        if (next - z).abs() < 1e-15 {
            return next.max(z);
        }
        z = next.max(z);
    }
    z
}

/// Extinction probability of a Galton–Watson process whose offspring law is
/// `pmf` (indexed by count) plus `tail_mass` on untracked counts.
///
/// The lower bound discards the tail, which only lowers the pgf; the upper
/// bound moves it to 0 offspring, which only raises it.
pub fn gw_extinction(pmf: &[f64], tail_mass: f64) -> Result<GwBracket, OracleError> {
    if pmf.is_empty() || pmf.iter().any(|&p| p.is_nan() || p < 0.0) || tail_mass.is_nan() || tail_mass < 0.0 {
        return Err(OracleError::InvalidArgument("pmf must be nonnegative".into()));
    }
    let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let upper = if mean <= 1.0 {
        1.0
    } else {
        let mut with_tail = pmf.to_vec();
        with_tail[0] += tail_mass;
        smallest_fixed_point(&with_tail)
    };
    let lower = if tail_mass == 0.0 && mean <= 1.0 {
        1.0
    } else {
        smallest_fixed_point(pmf)
    };
    let width = upper - lower;
    if width > MAX_BRACKET_WIDTH {
        return Err(OracleError::Refinement { width, lower, upper });
    }
    Ok(GwBracket {
        lower,
        upper,
        root: 0.5 * (lower + upper),
        width,
    })
}

/// [`gw_extinction`] on the `ξ(λ)` marginal of a truncated joint law.
pub fn gw_extinction_joint(joint: &JointLifePmf) -> Result<GwBracket, OracleError> {
    gw_extinction(&joint.xi_marginal(), joint.tail_mass)
}

/// Pgf of the degree contribution `η(λ)` built from the joint law: each cherry
/// adds one edge at the fixed vertex and each semi-cherry adds one with
/// probability 1/2.
pub fn eta_transform(joint: &JointLifePmf, z: f64) -> f64 {
    let half = 0.5 * (1.0 + z);
    joint
        .iter()
        .map(|(i, k, p)| p * z.powi((k - i) as i32) * half.powi((2 * i - k) as i32))
        .sum()
}

/// Result of simulating single edges in isolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEdgeMc {
    pub reps: u64,
    pub grid: Vec<f64>,
    /// Fraction of lifetimes exceeding each grid time.
    pub survival: Vec<f64>,
    /// Counts of terminal `(π', ξ)`.
    pub joint_counts: BTreeMap<(u32, u32), u64>,
    /// Runs where the edge died before its first birth event.
    pub died_before_birth: u64,
    pub mean_lifetime: f64,
}

impl SingleEdgeMc {
    pub fn joint_frequency(&self, i: u32, k: u32) -> f64 {
        self.joint_counts.get(&(i, k)).copied().unwrap_or(0) as f64 / self.reps as f64
    }

    /// Total variation distance to a truncated joint law; untracked mass on
    /// either side counts in full.
    pub fn total_variation(&self, joint: &JointLifePmf) -> f64 {
        let mut diff = 0.0;
        let mut covered = 0.0;
        for (i, k, p) in joint.iter() {
            let f = self.joint_frequency(i as u32, k as u32);
            covered += f;
            diff += (f - p).abs();
        }
        let outside = (1.0 - covered).max(0.0);
        0.5 * (diff + outside + joint.tail_mass)
    }
}

#[derive(Default)]
struct Block {
    alive: Vec<u64>,
    joint: BTreeMap<(u32, u32), u64>,
    early: u64,
    life_sum: f64,
}

impl Block {
    fn merge(mut self, other: Block) -> Block {
        for (a, b) in self.alive.iter_mut().zip(&other.alive) {
            *a += b;
        }
        for (key, n) in other.joint {
            *self.joint.entry(key).or_insert(0) += n;
        }
        self.early += other.early;
        self.life_sum += other.life_sum;
        self
    }
}

const BLOCK: u64 = 1 << 14;

/// Simulates `reps` independent edges: holding time `Exp(1 + b + cξ)`, then
/// death with probability `(b + cξ)/(1 + b + cξ)`, otherwise a litter adds
/// `ε` to `ξ`. `grid` must be nondecreasing.
pub fn single_edge_life_mc(params: &ModelParams, reps: u64, grid: &[f64], seed: u64) -> SingleEdgeMc {
    let sampler = params.litter_sampler();
    let (b, c) = (params.b(), params.c());
    let blocks = reps.div_ceil(BLOCK);
    let merged = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, blk));
            let n = BLOCK.min(reps - blk * BLOCK);
            let mut acc = Block {
                alive: vec![0; grid.len() + 1],
                ..Block::default()
            };
            for _ in 0..n {
                let (mut t, mut xi, mut verts) = (0.0_f64, 0u32, 0u32);
                loop {
                    let hazard = b + c * f64::from(xi);
                    let rate = 1.0 + hazard;
                    let e: f64 = Exp1.sample(&mut rng);
                    t += e / rate;
                    if rng.random::<f64>() * rate < hazard {
                        break;
                    }
                    let litter = sampler.sample(&mut rng);
                    verts += litter.kappa;
                    xi += litter.edges();
                }
                if verts == 0 {
                    acc.early += 1;
                }
                acc.life_sum += t;
                *acc.joint.entry((verts, xi)).or_insert(0) += 1;
                // grid points strictly below t
                acc.alive[grid.partition_point(|&g| g < t)] += 1;
            }
            acc
        })
        .reduce(
            || Block {
                alive: vec![0; grid.len() + 1],
                ..Block::default()
            },
            Block::merge,
        );
    // lifetimes exceeding grid[g] are those whose count index is > g
    let mut survival = vec![0.0; grid.len()];
    let mut above = 0u64;
    for g in (0..grid.len()).rev() {
        above += merged.alive[g + 1];
        survival[g] = above as f64 / reps as f64;
    }
    SingleEdgeMc {
        reps,
        grid: grid.to_vec(),
        survival,
        joint_counts: merged.joint,
        died_before_birth: merged.early,
        mean_lifetime: merged.life_sum / reps as f64,
    }
}
