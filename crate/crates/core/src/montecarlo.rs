//! Replicated simulation campaigns with reproducible per-run seeds.
//!
//! Ratio statistics are conditioned on the run surviving to its horizon;
//! frequencies are taken over all runs.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::AnalyticSummary;
use crate::genfun::{extinction_probability, isolation_from_root, isolation_root, AttachmentKind};
use crate::model::ModelParams;
use crate::sim::{run, Counters, RunConfig, RunStatus, SimError, Tracker, TrackerKind};

/// Seed of replication `index`: one splitmix64 round over the mixed pair.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(17);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub params: ModelParams,
    pub run: RunConfig,
    pub reps: u64,
    pub master_seed: u64,
}

/// End state of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: u64,
    pub seed: u64,
    pub status: RunStatus,
    pub last: Counters,
    pub lambda_hat_1: Option<f64>,
    pub lambda_hat_2: Option<f64>,
    pub trackers: Vec<Tracker>,
    pub first_edge_lifetime: Option<f64>,
}

impl RunRecord {
    pub fn survived(&self) -> bool {
        self.status == RunStatus::Completed
    }

    /// Whether the edge set was empty at or before step `n`.
    pub fn extinct_by(&self, n: u64) -> bool {
        matches!(self.status, RunStatus::Extinct { step } if step <= n)
    }

    /// For tracker `i`: `None` if unbound by step `n`, else whether isolated by `n`.
    pub fn isolated_by(&self, i: usize, n: u64) -> Option<bool> {
        let tr = &self.trackers[i];
        tr.bound_step.filter(|&s| s <= n)?;
        Some(tr.isolated_at.is_some_and(|s| s <= n))
    }
}

/// Runs all replications in parallel; output is ordered by run index and
/// independent of the thread count.
pub fn run_campaign(c: &Campaign) -> Result<Vec<RunRecord>, SimError> {
    if c.reps == 0 {
        return Err(SimError::InvalidConfig("reps must be positive".into()));
    }
    c.run.validate()?;
    (0..c.reps)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(c.master_seed, index);
            let tr = run(&c.params, &c.run, seed)?;
            Ok(RunRecord {
                index,
                seed,
                status: tr.status,
                last: *tr.last(),
                lambda_hat_1: tr.lambda_hat_1,
                lambda_hat_2: tr.lambda_hat_2,
                trackers: tr.trackers,
                first_edge_lifetime: tr.first_edge_lifetime,
            })
        })
        .collect()
}

/// One compared statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub name: String,
    pub analytic: Option<f64>,
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    /// Runs contributing to the denominator before conditioning.
    pub total: u64,
    /// Runs that survived to the horizon.
    pub surviving: u64,
    pub z: Option<f64>,
    /// Whether the estimate is conditioned on survival.
    pub conditional: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    /// `ok`, or `warning: ...` when conditional rows could not be estimated.
    pub status: String,
    pub reps: u64,
    pub surviving: u64,
    pub rows: Vec<McRow>,
}

impl McReport {
    pub fn row(&self, name: &str) -> Option<&McRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Sample mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return Some((mean, 0.0));
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, (var / n).sqrt()))
}

/// Frequency row; the z-score uses the binomial standard error under the
/// analytic value.
fn frequency_row(name: &str, hits: u64, total: u64, surviving: u64, analytic: Option<f64>) -> McRow {
    let (estimate, std_error) = if total > 0 {
        let f = hits as f64 / total as f64;
        (Some(f), Some((f * (1.0 - f) / total as f64).sqrt()))
    } else {
        (None, None)
    };
    let z = match (estimate, analytic) {
        (Some(f), Some(p)) if p > 0.0 && p < 1.0 => Some((f - p) / (p * (1.0 - p) / total as f64).sqrt()),
        _ => None,
    };
    McRow {
        name: name.into(),
        analytic,
        estimate,
        std_error,
        total,
        surviving,
        z,
        conditional: false,
    }
}

fn mean_row(name: &str, xs: &[f64], total: u64, analytic: Option<f64>) -> McRow {
    let ms = mean_se(xs);
    let z = match (ms, analytic) {
        (Some((m, se)), Some(a)) if se > 0.0 => Some((m - a) / se),
        _ => None,
    };
    McRow {
        name: name.into(),
        analytic,
        estimate: ms.map(|(m, _)| m),
        std_error: ms.map(|(_, se)| se),
        total,
        surviving: xs.len() as u64,
        z,
        conditional: true,
    }
}

/// Analytic values a campaign is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTargets {
    pub summary: AnalyticSummary,
    pub extinction: Option<f64>,
    /// Degree pgf fixed point; isolation probabilities follow from it.
    pub isolation_root: Option<f64>,
}

impl McTargets {
    pub fn compute(params: &ModelParams) -> Self {
        Self {
            summary: AnalyticSummary::compute(params).unwrap_or(AnalyticSummary {
                criticality_index: f64::NAN,
                alpha: None,
                beta: None,
                edges_per_step: None,
                vertices_per_step: None,
                events_per_edge: None,
                childless_fraction: None,
                jn_coefficient: None,
                litters_per_edge: 1.0 / params.mean_eps(),
                lifetime_est_censored: 1.0 / params.mean_eps(),
                lifetime_est_uncensored: None,
            }),
            extinction: extinction_probability(params).ok().map(|r| r.root),
            isolation_root: isolation_root(params).ok().map(|r| r.root),
        }
    }

    pub fn isolation(&self, p: f64, kind: TrackerKind) -> Option<f64> {
        let attach = match kind {
            TrackerKind::FirstSemi => AttachmentKind::Semi,
            TrackerKind::FirstCherry => AttachmentKind::Cherry,
            TrackerKind::FirstVertex => AttachmentKind::Generic,
        };
        self.isolation_root.map(|z| isolation_from_root(p, z, attach))
    }
}

fn tracker_name(kind: TrackerKind) -> &'static str {
    match kind {
        TrackerKind::FirstSemi => "isolation_frequency_first_semi",
        TrackerKind::FirstCherry => "isolation_frequency_first_cherry",
        TrackerKind::FirstVertex => "isolation_frequency_first_vertex",
    }
}

/// Compares end-of-horizon statistics of `runs` with `targets`.
pub fn build_report(params: &ModelParams, runs: &[RunRecord], targets: &McTargets) -> McReport {
    let total = runs.len() as u64;
    let surv: Vec<&RunRecord> = runs.iter().filter(|r| r.survived()).collect();
    let k = surv.len() as u64;
    let s = &targets.summary;
    let mut rows = vec![frequency_row(
        "extinction_frequency",
        runs.iter().filter(|r| !r.survived()).count() as u64,
        total,
        k,
        targets.extinction,
    )];
    if let Some(first) = runs.first() {
        for (i, tr) in first.trackers.iter().enumerate() {
            let outcomes: Vec<bool> = runs.iter().filter_map(|r| r.isolated_by(i, u64::MAX)).collect();
            let hits = outcomes.iter().filter(|&&x| x).count() as u64;
            rows.push(frequency_row(
                tracker_name(tr.kind),
                hits,
                outcomes.len() as u64,
                k,
                targets.isolation(params.p(), tr.kind),
            ));
        }
    }
    let stat = |f: &dyn Fn(&RunRecord) -> Option<f64>| -> Vec<f64> { surv.iter().filter_map(|r| f(r)).collect() };
    let n = |r: &RunRecord| r.last.n as f64;
    let e = |r: &RunRecord| r.last.edges as f64;
    rows.push(mean_row("edges_per_step", &stat(&|r| Some(e(r) / n(r))), total, s.edges_per_step));
    rows.push(mean_row(
        "vertices_per_step",
        &stat(&|r| Some(r.last.vertices as f64 / n(r))),
        total,
        s.vertices_per_step,
    ));
    rows.push(mean_row(
        "childless_fraction",
        &stat(&|r| Some(r.last.childless as f64 / e(r))),
        total,
        s.childless_fraction,
    ));
    rows.push(mean_row(
        "litters_per_edge",
        &stat(&|r| Some(r.last.births as f64 / r.last.edges_ever as f64)),
        total,
        Some(s.litters_per_edge),
    ));
    rows.push(mean_row(
        "time_on_test_per_step_squared",
        &stat(&|r| Some(r.last.jn as f64 / (n(r) * n(r)))),
        total,
        s.jn_coefficient,
    ));
    rows.push(mean_row(
        "time_on_test_per_step_and_edge",
        &stat(&|r| Some(r.last.jn as f64 / (n(r) * e(r)))),
        total,
        s.alpha.map(|_| 0.5),
    ));
    rows.push(mean_row(
        "lambda_hat_1",
        &stat(&|r| r.lambda_hat_1),
        total,
        Some(s.lifetime_est_censored),
    ));
    rows.push(mean_row(
        "lambda_hat_2",
        &stat(&|r| r.lambda_hat_2),
        total,
        s.lifetime_est_uncensored,
    ));
    let status = if k == 0 && s.alpha.is_some() {
        "warning: no surviving runs; conditional rows are absent".to_string()
    } else {
        "ok".to_string()
    };
    McReport {
        status,
        reps: total,
        surviving: k,
        rows,
    }
}

pub const RUNS_CSV_HEADER: &str = "index,seed,status,extinct_step,n,t,E,V,O,B,T,D,Jn,Jt,lambda1,lambda2,isolated_step";

/// One line per run; optional values are empty, multiple trackers are `;`-joined.
pub fn runs_to_csv(runs: &[RunRecord]) -> String {
    let opt = |x: Option<f64>| x.map_or_else(String::new, |v| v.to_string());
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for r in runs {
        let (status, step) = match r.status {
            RunStatus::Extinct { step } => ("extinct", step.to_string()),
            RunStatus::Completed => ("completed", String::new()),
        };
        let iso: Vec<String> = r
            .trackers
            .iter()
            .map(|t| match (t.vertex, t.isolated_at) {
                (None, _) => "NA".into(),
                (Some(_), None) => String::new(),
                (Some(_), Some(s)) => s.to_string(),
            })
            .collect();
        let c = &r.last;
        let _ = writeln!(
            out,
            "{},{},{status},{step},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            c.n,
            c.t,
            c.edges,
            c.vertices,
            c.childless,
            c.births,
            c.edges_ever,
            c.deaths,
            c.jn,
            c.jt,
            opt(r.lambda_hat_1),
            opt(r.lambda_hat_2),
            iso.join(";")
        );
    }
    out
}
