//! `cherry`: analytic reports, single runs, Monte Carlo campaigns and oracle
//! dumps for the generalized random cherry tree.
//!
//! Exit codes: 0 success, 1 configuration error, 2 the instance is
//! subcritical (analysis still printed), 3 oracle truncation too coarse.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use cherry_core::analytic::{malthus_lhs, AnalyticSummary};
use cherry_core::genfun::{
    extinction_probability, isolation_from_root, isolation_root, pgf_eta_lambda, pgf_xi_lambda,
    AttachmentKind, FixedPointResult,
};
use cherry_core::montecarlo::{build_report, run_campaign, runs_to_csv, Campaign, McTargets};
use cherry_core::oracle::{eta_transform, gw_extinction_joint, v_recursion, GwBracket, OracleError};
use cherry_core::sim::{run, RunConfig, TrackerKind};
use cherry_core::ModelParams;

const MAX_ORACLE_TAIL: f64 = 1e-10;

#[derive(Parser)]
#[command(name = "cherry", version, about = "Generalized random cherry tree toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic constants, extinction and isolation probabilities as JSON.
    Analyze(Common),
    /// One run; writes the sampled trajectory as CSV.
    Simulate(Common),
    /// Replicated runs compared against the analytic values.
    Montecarlo(Common),
    /// Exact joint offspring law and its agreement with the quadrature formulas.
    Oracle(Common),
}

#[derive(Clone, Copy, ValueEnum)]
#[allow(clippy::enum_variant_names)]
enum Track {
    FirstVertex,
    FirstSemi,
    FirstCherry,
}

impl From<Track> for TrackerKind {
    fn from(t: Track) -> Self {
        match t {
            Track::FirstVertex => TrackerKind::FirstVertex,
            Track::FirstSemi => TrackerKind::FirstSemi,
            Track::FirstCherry => TrackerKind::FirstCherry,
        }
    }
}

#[derive(Args)]
struct Common {
    /// JSON file with `b`, `c`, `p` and `kappa`.
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Step horizon.
    #[arg(long)]
    steps: Option<u64>,
    /// Time horizon; turns clocks on.
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long, default_value_t = 100)]
    reps: u64,
    /// Rows are sampled every `stride` steps.
    #[arg(long)]
    stride: Option<u64>,
    /// Largest vertex count tracked by the oracle recursion.
    #[arg(long, default_value_t = 100)]
    imax: usize,
    /// Output directory; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Track the degree of a vertex; repeatable.
    #[arg(long, value_enum)]
    track: Vec<Track>,
    /// Run exponential clocks in step-horizon runs.
    #[arg(long)]
    clocks: bool,
}

impl Common {
    fn load_params(&self) -> Result<ModelParams> {
        let text = fs::read_to_string(&self.params)
            .with_context(|| format!("reading {}", self.params.display()))?;
        ModelParams::from_json(&text).with_context(|| format!("parsing {}", self.params.display()))
    }

    fn run_config(&self) -> Result<RunConfig> {
        let n_max = match (self.steps, self.tmax) {
            (None, None) => Some(10_000),
            (s, _) => s,
        };
        let cfg = RunConfig {
            n_max,
            t_max: self.tmax,
            clocks: self.clocks,
            stride: self.stride.unwrap_or_else(|| n_max.map_or(1_000, |n| (n / 100).max(1))),
            trackers: self.track.iter().map(|&t| t.into()).collect(),
            check_invariants: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn emit(&self, name: &str, contents: &str) -> Result<()> {
        match &self.out {
            Some(dir) => write_file(dir, name, contents),
            None => {
                print!("{contents}");
                Ok(())
            }
        }
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[derive(Serialize)]
struct Isolation {
    cherry: f64,
    semi: f64,
    generic: f64,
    fixed_point: FixedPointResult,
}

#[derive(Serialize)]
struct Analysis {
    params: ModelParams,
    #[serde(flatten)]
    summary: AnalyticSummary,
    alpha_reason: Option<&'static str>,
    beta_reason: Option<&'static str>,
    /// `LHS(α) - 1`.
    alpha_residual: Option<f64>,
    /// `LHS(β) - 2`.
    beta_residual: Option<f64>,
    extinction_probability: f64,
    extinction: FixedPointResult,
    isolation: Isolation,
}

fn cmd_analyze(args: &Common) -> Result<ExitCode> {
    let params = args.load_params()?;
    let summary = AnalyticSummary::compute(&params)?;
    let extinction = extinction_probability(&params)?;
    let iso = isolation_root(&params)?;
    let z = iso.root;
    let p = params.p();
    let subcritical = summary.alpha.is_none();
    let analysis = Analysis {
        alpha_reason: subcritical.then_some("subcritical"),
        beta_reason: match (subcritical, summary.beta) {
            (true, _) => Some("subcritical"),
            (false, None) => Some("degree-subcritical"),
            _ => None,
        },
        alpha_residual: summary.alpha.map(|a| malthus_lhs(&params, a).map(|v| v - 1.0)).transpose()?,
        beta_residual: summary.beta.map(|b| malthus_lhs(&params, b).map(|v| v - 2.0)).transpose()?,
        extinction_probability: extinction.root,
        extinction,
        isolation: Isolation {
            cherry: isolation_from_root(p, z, AttachmentKind::Cherry),
            semi: isolation_from_root(p, z, AttachmentKind::Semi),
            generic: isolation_from_root(p, z, AttachmentKind::Generic),
            fixed_point: iso,
        },
        summary,
        params,
    };
    args.emit("analysis.json", &to_json(&analysis)?)?;
    Ok(if subcritical { ExitCode::from(2) } else { ExitCode::SUCCESS })
}

#[derive(Serialize)]
struct RunSummary<'a> {
    seed: u64,
    status: &'a cherry_core::sim::RunStatus,
    last: &'a cherry_core::sim::Counters,
    lambda_hat_1: Option<f64>,
    lambda_hat_2: Option<f64>,
    trackers: &'a [cherry_core::sim::Tracker],
}

fn cmd_simulate(args: &Common) -> Result<ExitCode> {
    let params = args.load_params()?;
    let cfg = args.run_config()?;
    let tr = run(&params, &cfg, args.seed)?;
    args.emit("trajectory.csv", &tr.to_csv())?;
    if let Some(dir) = &args.out {
        let summary = RunSummary {
            seed: tr.seed,
            status: &tr.status,
            last: tr.last(),
            lambda_hat_1: tr.lambda_hat_1,
            lambda_hat_2: tr.lambda_hat_2,
            trackers: &tr.trackers,
        };
        write_file(dir, "run.json", &to_json(&summary)?)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_montecarlo(args: &Common) -> Result<ExitCode> {
    let params = args.load_params()?;
    if args.reps == 0 {
        bail!("--reps must be positive");
    }
    if args.reps < 30 {
        eprintln!("warning: fewer than 30 replications; z-scores are not meaningful");
    }
    let campaign = Campaign {
        params: params.clone(),
        run: RunConfig {
            stride: u64::MAX,
            ..args.run_config()?
        },
        reps: args.reps,
        master_seed: args.seed,
    };
    let runs = run_campaign(&campaign)?;
    let report = build_report(&params, &runs, &McTargets::compute(&params));
    if report.status != "ok" {
        eprintln!("{}", report.status);
    }
    let json = to_json(&report)?;
    if let Some(dir) = &args.out {
        write_file(dir, "runs.csv", &runs_to_csv(&runs))?;
        write_file(dir, "report.json", &json)?;
    } else {
        print!("{json}");
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct PgfComparison {
    z: f64,
    xi_quadrature: f64,
    xi_oracle: f64,
    eta_quadrature: f64,
    eta_oracle: f64,
}

#[derive(Serialize)]
struct OracleComparison {
    i_max: usize,
    tail_mass: f64,
    pgf: Vec<PgfComparison>,
    extinction_fixed_point: f64,
    extinction_bracket: GwBracket,
    max_abs_diff: f64,
}

fn cmd_oracle(args: &Common) -> Result<ExitCode> {
    let params = args.load_params()?;
    if args.imax == 0 {
        bail!("--imax must be positive");
    }
    let joint = v_recursion(&params, args.imax);
    let raise = |detail: String| {
        eprintln!("oracle truncation insufficient ({detail}); raise --imax above {}", args.imax);
        Ok(ExitCode::from(3))
    };
    if joint.tail_mass > MAX_ORACLE_TAIL {
        return raise(format!("tail mass {:e}", joint.tail_mass));
    }
    let bracket = match gw_extinction_joint(&joint) {
        Ok(b) => b,
        Err(e @ OracleError::Refinement { .. }) => return raise(e.to_string()),
        Err(e) => return Err(e.into()),
    };
    let mut pgf = Vec::new();
    for i in 0..=10 {
        let z = f64::from(i) / 10.0;
        pgf.push(PgfComparison {
            z,
            xi_quadrature: pgf_xi_lambda(&params, z)?,
            xi_oracle: joint.pgf_xi(z),
            eta_quadrature: pgf_eta_lambda(&params, z)?,
            eta_oracle: eta_transform(&joint, z),
        });
    }
    let fixed = extinction_probability(&params)?.root;
    let max_abs_diff = pgf
        .iter()
        .flat_map(|r| [(r.xi_quadrature - r.xi_oracle).abs(), (r.eta_quadrature - r.eta_oracle).abs()])
        .fold((fixed - bracket.root).abs(), f64::max);
    let comparison = OracleComparison {
        i_max: joint.i_max,
        tail_mass: joint.tail_mass,
        pgf,
        extinction_fixed_point: fixed,
        extinction_bracket: bracket,
        max_abs_diff,
    };
    let csv = joint.to_csv()?;
    let json = to_json(&comparison)?;
    match &args.out {
        Some(dir) => {
            write_file(dir, "joint_pmf.csv", &csv)?;
            write_file(dir, "comparison.json", &json)?;
        }
        None => {
            print!("{csv}");
            eprint!("{json}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Montecarlo(a) => cmd_montecarlo(a),
        Command::Oracle(a) => cmd_oracle(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(1)
    })
}
