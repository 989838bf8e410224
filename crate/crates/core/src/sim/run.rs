use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::state::{Counters, GraphState, Tracker, TrackerKind};
use super::SimError;
use crate::model::ModelParams;

/// Horizon, clocks, sampling and tracking for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub n_max: Option<u64>,
    /// Forces clocks on.
    pub t_max: Option<f64>,
    pub clocks: bool,
    pub stride: u64,
    pub trackers: Vec<TrackerKind>,
    /// Run the full invariant check at every sampled row.
    pub check_invariants: bool,
}

impl RunConfig {
    pub fn steps(n_max: u64) -> Self {
        Self {
            n_max: Some(n_max),
            t_max: None,
            clocks: false,
            stride: n_max.max(1),
            trackers: Vec::new(),
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::InvalidConfig(m.into()));
        match (self.n_max, self.t_max) {
            (None, None) => return bad("a step or time horizon is required"),
            (Some(0), _) => return bad("n_max must be positive"),
            (_, Some(t)) if !(t > 0.0 && t.is_finite()) => return bad("t_max must be positive"),
            _ => {}
        }
        if self.stride == 0 {
            return bad("stride must be positive");
        }
        Ok(())
    }

    fn clocks_on(&self) -> bool {
        self.clocks || self.t_max.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Extinct { step: u64 },
    Completed,
}

/// One sampled row: scalar statistics and the current degree of each bound tracker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub counters: Counters,
    pub tracked: Vec<Option<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub seed: u64,
    /// Strictly increasing in `n`; always includes the start and the end.
    pub rows: Vec<Row>,
    pub status: RunStatus,
    pub trackers: Vec<Tracker>,
    /// Present when clocks ran.
    pub lambda_hat_1: Option<f64>,
    pub lambda_hat_2: Option<f64>,
    /// Lifetime of the initial edge if it died.
    pub first_edge_lifetime: Option<f64>,
}

impl Trajectory {
    pub fn last(&self) -> &Counters {
        &self.rows.last().expect("nonempty").counters
    }

    pub const CSV_HEADER: &'static str = "n,t,E,V,O,B,T,D,Jn,Jt,deg_tracked";

    /// Rows as CSV plus a trailing status comment. Tracked degrees are joined
    /// by `;`, with `NA` for unbound trackers.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 2));
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            let c = &row.counters;
            let deg: Vec<String> = row
                .tracked
                .iter()
                .map(|d| d.map_or_else(|| "NA".to_string(), |d| d.to_string()))
                .collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
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
                deg.join(";")
            );
        }
        match self.status {
            RunStatus::Extinct { step } => {
                let _ = writeln!(out, "# status=extinct@{step}");
            }
            RunStatus::Completed => out.push_str("# status=completed\n"),
        }
        out
    }
}

/// Topology and clock streams of one seed.
pub(crate) fn streams(seed: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut topo = ChaCha8Rng::seed_from_u64(seed);
    topo.set_stream(0);
    let mut clock = ChaCha8Rng::seed_from_u64(seed);
    clock.set_stream(1);
    (topo, clock)
}

fn snapshot(state: &GraphState) -> Row {
    Row {
        counters: state.counters(),
        tracked: (0..state.trackers().len())
            .map(|i| state.tracked_degree(i))
            .collect(),
    }
}

/// Runs the process from a single edge until the horizon or extinction.
pub fn run(params: &ModelParams, config: &RunConfig, seed: u64) -> Result<Trajectory, SimError> {
    config.validate()?;
    let clocks = config.clocks_on();
    let mut state = GraphState::init(params, &config.trackers);
    let (mut topo, mut clock) = streams(seed);
    let mut rows = vec![snapshot(&state)];
    let mut jn_check = 0u64;
    let status = loop {
        if state.is_extinct() {
            break RunStatus::Extinct { step: state.counters().n };
        }
        if config.n_max.is_some_and(|n| state.counters().n >= n) {
            break RunStatus::Completed;
        }
        if clocks {
            let dt = state.holding_time(&mut clock);
            if let Some(t_max) = config.t_max {
                let t = state.counters().t;
                if t + dt > t_max {
                    state.apply_elapsed(t_max - t);
                    break RunStatus::Completed;
                }
            }
            state.apply_elapsed(dt);
        }
        state.step(&mut topo)?;
        let c = state.counters();
        jn_check += c.edges;
        if c.n.is_multiple_of(config.stride) {
            rows.push(snapshot(&state));
            if config.check_invariants {
                let fail = |message| SimError::Invariant { step: c.n, message };
                state.check_invariants().map_err(fail)?;
                if c.jn != jn_check {
                    return Err(fail(format!("Jn={} but ΣE={jn_check}", c.jn)));
                }
            }
        }
    };
    let last = snapshot(&state);
    if rows.last().expect("nonempty").counters.n == last.counters.n {
        *rows.last_mut().expect("nonempty") = last;
    } else {
        rows.push(last);
    }
    let (l1, l2) = state.lifetime_estimators();
    Ok(Trajectory {
        seed,
        rows,
        status,
        trackers: state.trackers().to_vec(),
        lambda_hat_1: clocks.then_some(l1),
        lambda_hat_2: if clocks { l2 } else { None },
        first_edge_lifetime: state.first_edge_death().filter(|_| clocks).map(|(_, t)| t),
    })
}
