//! Experiment runner behind the `cluster-dcg` binary.
//!
//! `run` builds the network and objective, integrates the continuous flow
//! and/or iterates the discrete scheme, writes CSV traces, SVG plots and
//! `report.json`. `verify` writes only the report, with the identity suite and
//! the cluster-structure condition.

pub mod config;
pub mod output;
pub mod report;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::discrete::{run_discrete, DiscreteError, DiscreteRun};
use crate::dynamics::{
    integrate, lemma_monitors, rate_certificate, theorem_check, two_time_scale, DynamicsError, GammaSchedule,
    IntegratorConfig, TheoremReport, Trajectory,
};
use crate::graph::{spectral_constants, GraphError, SpectralConstants};
use crate::objective::ObjectiveError;
use config::{gaussian_state, Experiment, ExperimentConfig};
use report::{
    assumption_report, identity_suite, Checks, DiscreteSection, GradBoundSource, LemmaSection, NetworkSummary,
    ObjectiveSummary, Report, TheoremSection, TwoTimeScaleSection, SCHEMA_VERSION,
};

pub const OUT_ENV: &str = "CLUSTER_DCG_OUT";
pub const DEFAULT_OUT: &str = "cluster-dcg-out";

/// Exit status for a completed run with every enabled check passing.
pub const EXIT_PASS: i32 = 0;
/// Exit status when a verification fails or the dynamics diverge.
pub const EXIT_VERIFY_FAIL: i32 = 1;
/// Exit status for unusable configurations or inputs.
pub const EXIT_CONFIG: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Discrete(#[from] DiscreteError),
    #[error("cannot write outputs to {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Dynamics(DynamicsError::Diverged { .. }) | Self::Discrete(DiscreteError::Diverged { .. }) => {
                EXIT_VERIFY_FAIL
            }
            _ => EXIT_CONFIG,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cluster-dcg", version, about = "Consensus-based gradient dynamics on cluster networks")]
pub struct Cli {
    /// Output directory (default: the config's "outputs", then $CLUSTER_DCG_OUT, then ./cluster-dcg-out/<config name>).
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Replace every seed in the config.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Suppress the summary on stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Simulate and verify; writes traces, plots and report.json.
    Run { config: PathBuf },
    /// Identity suite and cluster-structure condition only; writes report.json.
    Verify { config: PathBuf },
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    /// Value of `CLUSTER_DCG_OUT`.
    pub env_out: Option<PathBuf>,
}

pub struct Outcome {
    pub report: Report,
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_PASS
        } else {
            EXIT_VERIFY_FAIL
        }
    }
}

fn output_dir(config: &ExperimentConfig, config_path: &Path, base_dir: &Path, opts: &Options) -> PathBuf {
    if let Some(out) = &opts.out {
        return out.clone();
    }
    if let Some(out) = &config.outputs {
        return if out.is_absolute() { out.clone() } else { base_dir.join(out) };
    }
    let stem = config_path.file_stem().map_or_else(|| "experiment".into(), |s| s.to_string_lossy().into_owned());
    opts.env_out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT)).join(stem)
}

fn load(config_path: &Path, opts: &Options) -> Result<(Experiment, PathBuf), CliError> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = opts.seed {
        config.override_seed(seed);
    }
    let base_dir = config_path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let out_dir = output_dir(&config, config_path, &base_dir, opts);
    Ok((Experiment::prepare(config, &base_dir)?, out_dir))
}

fn summaries(exp: &Experiment) -> Result<(NetworkSummary, ObjectiveSummary), CliError> {
    let net = &exp.net;
    let radius = exp.region_radius();
    let k = exp.obj.estimate_constants(radius)?;
    Ok((
        NetworkSummary {
            nodes: net.num_nodes(),
            clusters: net.num_clusters(),
            cluster_sizes: net.cluster_sizes().to_vec(),
            internal_edges: net.internal_edges().count(),
            external_edges: net.external_edges().count(),
            seed: net.seed(),
        },
        ObjectiveSummary {
            d: exp.obj.dim(),
            l: exp.obj.rows_per_node(),
            mu: exp.obj.mu(),
            x_star: exp.obj.x_star().iter().copied().collect(),
            f_star: exp.obj.f_star(),
            region_radius: radius,
            node_grad_bound: k.node_grad_bound,
            stacked_grad_bound: k.stacked_grad_bound,
        },
    ))
}

/// `L` for the condition: config override, else a trajectory maximum, else the a priori bound.
fn grad_bound(exp: &Experiment, traj: Option<&Trajectory>, a_priori: f64) -> (f64, GradBoundSource) {
    match (exp.config.continuous.and_then(|c| c.grad_bound), traj) {
        (Some(l), _) => (l, GradBoundSource::Override),
        (None, Some(t)) => (t.grad_norm_max(), GradBoundSource::Trajectory),
        (None, None) => (a_priori, GradBoundSource::APriori),
    }
}

fn two_time_scale_section(
    exp: &Experiment,
    sc: &SpectralConstants,
) -> Result<Option<TwoTimeScaleSection>, CliError> {
    let Some(tts) = exp.config.verify.two_time_scale else {
        return Ok(None);
    };
    let x0 = gaussian_state(exp.net.num_nodes(), exp.obj.dim(), 1.0, tts.seed);
    let cfg = IntegratorConfig {
        t0: 1.0,
        t_end: 1.0 + tts.duration,
        dt: tts.dt,
        sample_every: tts.sample_every,
        gamma: GammaSchedule::Zero,
    };
    let traj = integrate(&exp.net, &exp.obj, &x0, &cfg)?;
    let report = two_time_scale(&traj, sc, tts.factor);
    Ok(Some(TwoTimeScaleSection {
        passed: report.is_some_and(|r| r.holds),
        margin: report.map_or(f64::NAN, |r| r.margin),
        report,
    }))
}

fn write_file(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let path = output::write(dir, name, contents).map_err(|source| CliError::Io { path: dir.join(name), source })?;
    files.push(path);
    Ok(())
}

struct Continuous {
    traj: Trajectory,
    theorem: TheoremReport,
    start_err: f64,
}

fn continuous_run(exp: &Experiment, sc: &SpectralConstants) -> Result<(Continuous, TheoremSection), CliError> {
    let cfg = exp.config.integrator(&exp.net, &exp.obj).expect("validated");
    let traj = integrate(&exp.net, &exp.obj, &exp.x0, &cfg)?;
    let l = exp.config.continuous.and_then(|c| c.grad_bound);
    let cert = rate_certificate(sc, &exp.obj, &traj, l)?;
    let theorem = theorem_check(&traj, &cert, &exp.obj)?;
    let x_star = exp.obj.x_star();
    let start = &traj.first().state;
    let start_err = (0..start.nrows())
        .map(|p| (start.row(p).transpose() - x_star).norm_squared())
        .fold(0.0, f64::max);
    let section = TheoremSection::new(theorem.clone(), cert, exp.config.verify.tail_r2_min);
    Ok((Continuous { traj, theorem, start_err }, section))
}

fn discrete_run(exp: &Experiment) -> Result<DiscreteRun, CliError> {
    let mut cfg = exp.config.discrete.clone().expect("validated");
    if cfg.track.is_empty() {
        cfg.track.push(0);
    }
    Ok(run_discrete(&exp.net, &exp.obj, &exp.x0, &cfg)?)
}

/// Runs `command` and writes its artifacts.
pub fn execute(command: &Command, opts: &Options) -> Result<Outcome, CliError> {
    let (name, config_path) = match command {
        Command::Run { config } => ("run", config),
        Command::Verify { config } => ("verify", config),
    };
    let (exp, out_dir) = load(config_path, opts)?;
    let verify = exp.config.verify;
    let sc = spectral_constants(&exp.net)?;
    let (network, objective) = summaries(&exp)?;
    let mut checks = Checks::default();
    let mut skipped = Vec::new();
    let mut files = Vec::new();
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io { path: out_dir.clone(), source })?;

    if verify.identities {
        checks.identities = Some(identity_suite(&exp)?);
    }

    let full_run = name == "run";
    let mut continuous = None;
    if full_run && exp.config.mode.continuous() {
        let (c, theorem) = continuous_run(&exp, &sc)?;
        if verify.lemmas {
            let l = exp.config.continuous.and_then(|c| c.grad_bound);
            let lemmas = lemma_monitors(&exp.net, &exp.obj, &sc, &c.traj, l, verify.slack_rel)?;
            checks.lemmas = Some(LemmaSection::new(lemmas));
        }
        if verify.theorem {
            checks.theorem = Some(theorem);
        }
        continuous = Some(c);
    }

    // `verify` takes L from a one-time-unit probe of the continuous flow.
    let probe = if !full_run && exp.config.mode.continuous() && verify.assumption3 {
        let mut cfg = exp.config.integrator(&exp.net, &exp.obj).expect("validated");
        cfg.t_end = cfg.t_end.min(cfg.t0 + 1.0);
        Some(integrate(&exp.net, &exp.obj, &exp.x0, &cfg)?)
    } else {
        None
    };
    if verify.assumption3 {
        let traj = continuous.as_ref().map(|c| &c.traj).or(probe.as_ref());
        let (l, source) = grad_bound(&exp, traj, objective.stacked_grad_bound);
        checks.assumption3 =
            Some(assumption_report(&sc, l, source, exp.obj.mu(), verify.assumption3_criterion)?);
    }

    if full_run {
        checks.two_time_scale = two_time_scale_section(&exp, &sc)?;
    }

    let mut discrete = None;
    if full_run && exp.config.mode.discrete() {
        let run = discrete_run(&exp)?;
        if verify.discrete_convergence {
            checks.discrete = Some(DiscreteSection::new(&run, run.records.last().map_or(0, |r| r.k)));
        }
        discrete = Some(run);
    }

    if !full_run {
        skipped.extend(["lemmas", "theorem", "two_time_scale", "discrete"]);
    }

    if let Some(c) = &continuous {
        write_file(&out_dir, "trajectory.csv", &output::trajectory_csv(&c.traj, &c.theorem, c.start_err), &mut files)?;
        write_file(&out_dir, "convergence.svg", &output::continuous_plot(&c.traj, &c.theorem).render(), &mut files)?;
    }
    if let Some(run) = &discrete {
        write_file(&out_dir, "discrete.csv", &output::discrete_csv(run, 0), &mut files)?;
        for (slot, p) in run.tracked.iter().enumerate().skip(1) {
            write_file(&out_dir, &format!("discrete_p{p}.csv"), &output::discrete_csv(run, slot), &mut files)?;
        }
        let svg = if continuous.is_some() { "convergence_discrete.svg" } else { "convergence.svg" };
        write_file(&out_dir, svg, &output::discrete_plot(run).render(), &mut files)?;
    }

    let failures = checks.failures();
    let report = Report {
        schema_version: SCHEMA_VERSION,
        command: name,
        name: exp.config.name.clone(),
        passed: failures.is_empty(),
        failures,
        skipped,
        network,
        spectral: sc,
        objective,
        checks,
    };
    let json = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    write_file(&out_dir, "report.json", &json, &mut files)?;
    Ok(Outcome { report, out_dir, files })
}

fn summary(outcome: &Outcome) -> String {
    let r = &outcome.report;
    let mut lines = vec![format!(
        "{} {}: {} nodes, {} clusters, mu = {:.4}",
        r.command,
        r.name.as_deref().unwrap_or("experiment"),
        r.network.nodes,
        r.network.clusters,
        r.objective.mu
    )];
    let c = &r.checks;
    let mut line = |name: &str, passed: bool, margin: f64| {
        lines.push(format!("  {:<15} {} (margin {margin:.4e})", name, if passed { "pass" } else { "FAIL" }));
    };
    if let Some(x) = &c.identities {
        line("identities", x.passed, x.margin);
    }
    if let Some(x) = &c.assumption3 {
        line("assumption3", x.holds, x.margin);
    }
    if let Some(x) = &c.lemmas {
        line("lemmas", x.passed, x.margin);
    }
    if let Some(x) = &c.theorem {
        line("theorem", x.passed, x.margin);
    }
    if let Some(x) = &c.two_time_scale {
        line("two_time_scale", x.passed, x.margin);
    }
    if let Some(x) = &c.discrete {
        line("discrete", x.passed, x.margin);
    }
    lines.push(format!("  outputs in {}", outcome.out_dir.display()));
    lines.join("\n")
}

/// Parses `args` (including the program name), runs, and returns the exit status.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
        }
    };
    let opts = Options { out: cli.out, seed: cli.seed, env_out: std::env::var_os(OUT_ENV).map(PathBuf::from) };
    match execute(&cli.command, &opts) {
        Ok(outcome) => {
            if !cli.quiet {
                println!("{}", summary(&outcome));
            }
            if !outcome.report.passed {
                eprintln!("verification failed: {}", outcome.report.failures.join(", "));
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn divergence_is_a_verification_failure() {
        assert_eq!(CliError::Dynamics(DynamicsError::Diverged { t: 1.0 }).exit_code(), EXIT_VERIFY_FAIL);
        assert_eq!(CliError::Discrete(DiscreteError::Diverged { k: 3 }).exit_code(), EXIT_VERIFY_FAIL);
        assert_eq!(CliError::Graph(GraphError::DisconnectedAggregate).exit_code(), EXIT_CONFIG);
        assert_eq!(CliError::Config("x".into()).exit_code(), EXIT_CONFIG);
    }

    #[test]
    fn output_dir_priority() {
        let c: ExperimentConfig =
            serde_json::from_str(r#"{"network":{"file":"n"},"objective":{"file":"o"},"outputs":"res"}"#).unwrap();
        let path = Path::new("cfg/exp.json");
        let base = Path::new("cfg");
        let mut opts = Options { out: Some("flag".into()), seed: None, env_out: Some("env".into()) };
        assert_eq!(output_dir(&c, path, base, &opts), PathBuf::from("flag"));
        opts.out = None;
        assert_eq!(output_dir(&c, path, base, &opts), PathBuf::from("cfg/res"));
        let mut c = c;
        c.outputs = None;
        assert_eq!(output_dir(&c, path, base, &opts), PathBuf::from("env/exp"));
        opts.env_out = None;
        assert_eq!(output_dir(&c, path, base, &opts), PathBuf::from("cluster-dcg-out/exp"));
    }

    #[test]
    fn parses_global_flags_after_subcommand() {
        let cli = Cli::try_parse_from(["cluster-dcg", "run", "c.json", "--seed", "7", "--quiet", "--out", "o"]).unwrap();
        assert_eq!((cli.seed, cli.quiet, cli.out), (Some(7), true, Some(PathBuf::from("o"))));
        assert!(matches!(cli.command, Command::Run { .. }));
    }

    #[test]
    fn bad_arguments_exit_with_config_status() {
        assert_eq!(main_entry(["cluster-dcg", "launch", "x"]), EXIT_CONFIG);
        assert_eq!(main_entry(["cluster-dcg", "verify", "/nonexistent/config.json", "--quiet"]), EXIT_CONFIG);
    }
}
