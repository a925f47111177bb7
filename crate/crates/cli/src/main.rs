//! `edge-sim`: run offloading policies on a scenario and write CSV results.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! failures while running or writing outputs.

mod manifest;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use edge_sim_core::gain_model::{export_synthetic_trace, write_trace};
use edge_sim_core::metrics::{compare_policies, write_comparison_csv, Trajectory};
use edge_sim_core::oracle::{dual_bound_ceiling, solve_p1, OracleSolution};
use edge_sim_core::par;
use edge_sim_core::policies::{build_instance, load_trace, run_with_source, RunError, SlotSource};
use edge_sim_core::scenario::{load_scenario, GainSource, PolicyKind, Scenario};

use manifest::RunManifest;

const THREADS_VAR: &str = "EDGE_SIM_THREADS";

#[derive(Debug)]
enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Scenario(_) => CliError::Config(e.into()),
            other => CliError::Runtime(other.into()),
        }
    }
}

fn config_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Config(e.into())
}

fn runtime_err(e: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(e.into())
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(
    name = "edge-sim",
    version,
    about = "Online task offloading simulator for edge analytics",
    after_help = "Flags override the matching scenario fields, which override built-in \
                  defaults.\nEDGE_SIM_THREADS caps the number of worker threads."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one policy and write its per-slot trajectory CSV.
    Run(RunArgs),
    /// Solve the static program with true means and print the optimum.
    Oracle(OracleArgs),
    /// Run the same scenario once per step size.
    Sweep(SweepArgs),
    /// Run several policies and write one summary row per policy.
    Compare(CompareArgs),
    /// Dump the synthesized gains as a trace CSV.
    TraceExport(TraceExportArgs),
}

/// Flags that override scenario fields.
#[derive(Debug, Clone, Args)]
struct Overrides {
    /// Scenario JSON file.
    #[arg(long)]
    config: PathBuf,
    /// Number of slots (overrides `algorithm.horizon`).
    #[arg(long)]
    horizon: Option<usize>,
    /// Dual step size (overrides `algorithm.alpha`).
    #[arg(long)]
    alpha: Option<f64>,
    /// Random seed (overrides `algorithm.seed`).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// onalgo, onalgo_k, ato, rco or no (overrides `algorithm.policy`).
    #[arg(long)]
    policy: Option<String>,
    /// Emit every n-th slot (overrides `algorithm.params.emit_every`).
    #[arg(long)]
    emit_every: Option<usize>,
    /// Output CSV; stdout when omitted (no manifest is written then).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite outputs whose manifest names another scenario.
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// Comma-separated step sizes.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    alphas: Vec<f64>,
    #[arg(long)]
    emit_every: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: Overrides,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    policies: Vec<String>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

#[derive(Debug, Args)]
struct TraceExportArgs {
    #[command(flatten)]
    scenario: Overrides,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|()| match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::TraceExport(a) => cmd_trace_export(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Config(inner) | CliError::Runtime(inner)) = &e;
            eprintln!("error: {inner:#}");
            ExitCode::from(e.code())
        }
    }
}

fn configure_threads() -> CliResult<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n >= 1).ok_or_else(|| {
        config_err(anyhow!(
            "{THREADS_VAR} must be a positive integer, got `{raw}`"
        ))
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(runtime_err)
}

/// A validated scenario and the context needed to run it.
struct Loaded {
    scenario: Scenario,
    /// Digest after flag overrides, before any path resolution.
    digest: String,
}

impl Overrides {
    fn load(&self, extra: impl FnOnce(&mut Value)) -> CliResult<Loaded> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))
            .map_err(config_err)?;
        let mut doc: Value = serde_json::from_str(&text)
            .with_context(|| format!("parsing {}", self.config.display()))
            .map_err(config_err)?;
        {
            let alg = algorithm_section(&mut doc)?;
            if let Some(h) = self.horizon {
                alg.insert("horizon".into(), h.into());
            }
            if let Some(a) = self.alpha {
                alg.insert("alpha".into(), a.into());
            }
            if let Some(s) = self.seed {
                alg.insert("seed".into(), s.into());
            }
        }
        extra(&mut doc);
        let mut scenario = load_scenario(&doc.to_string()).map_err(config_err)?;
        let digest = scenario.digest();
        if let GainSource::Csv { path } = &mut scenario.gain_source {
            if path.is_relative() {
                let base = self.config.parent().unwrap_or(Path::new(""));
                *path = base.join(&*path);
            }
        }
        Ok(Loaded { scenario, digest })
    }
}

fn algorithm_section(doc: &mut Value) -> CliResult<&mut serde_json::Map<String, Value>> {
    doc.get_mut("algorithm")
        .and_then(Value::as_object_mut)
        .ok_or_else(|| config_err(anyhow!("scenario has no `algorithm` object")))
}

fn set_policy(doc: &mut Value, policy: &str) {
    if let Some(alg) = doc.get_mut("algorithm").and_then(Value::as_object_mut) {
        alg.insert("policy".into(), policy.into());
    }
}

fn set_emit_every(doc: &mut Value, every: usize) {
    if let Some(alg) = doc.get_mut("algorithm").and_then(Value::as_object_mut) {
        let params = alg
            .entry("params")
            .or_insert_with(|| Value::Object(Default::default()));
        if let Some(p) = params.as_object_mut() {
            p.insert("emit_every".into(), every.into());
        }
    }
}

fn parse_policy(name: &str) -> CliResult<PolicyKind> {
    name.parse().map_err(config_err)
}

fn simulate(scenario: &Scenario, kind: PolicyKind) -> Result<Trajectory, RunError> {
    let trace = load_trace(scenario)?;
    let instance = build_instance(scenario, trace.as_deref())?;
    let source = SlotSource::new(scenario, trace)?;
    run_with_source(scenario, kind, source, instance, |_, _, _| {})
}

fn warn_assumption(scenario: &Scenario) {
    if scenario.correlated {
        eprintln!(
            "warning: scenario declares correlated processes; the convergence guarantees do not apply"
        );
    }
}

fn manifest_for(loaded: &Loaded, policy: &str, outputs: Vec<String>) -> RunManifest {
    let s = &loaded.scenario;
    RunManifest {
        scenario_digest: loaded.digest.clone(),
        policy: policy.to_string(),
        seed: s.seed,
        horizon: s.horizon,
        alpha: s.alpha,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
        out_of_assumption: s.correlated,
    }
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(runtime_err)
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    if let Some(p) = &args.policy {
        parse_policy(p)?;
    }
    let loaded = args.scenario.load(|doc| {
        if let Some(p) = &args.policy {
            set_policy(doc, p);
        }
        if let Some(e) = args.emit_every {
            set_emit_every(doc, e);
        }
    })?;
    let s = &loaded.scenario;
    warn_assumption(s);
    let manifest = args
        .out
        .as_ref()
        .map(|out| manifest_for(&loaded, s.policy.name(), vec![out.display().to_string()]));
    if let (Some(m), Some(out)) = (&manifest, &args.out) {
        m.check_overwrite(out, args.force).map_err(runtime_err)?;
    }
    let traj = simulate(s, s.policy)?;
    match (&args.out, &manifest) {
        (Some(out), Some(m)) => {
            traj.write_csv(create(out)?, s.params.emit_every)
                .map_err(runtime_err)?;
            m.write(out).map_err(runtime_err)?;
        }
        _ => {
            let stdout = io::stdout();
            traj.write_csv(stdout.lock(), s.params.emit_every)
                .map_err(runtime_err)?;
        }
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct OracleReport {
    f_star: f64,
    y_star: Vec<Vec<f64>>,
    mu_star: Vec<f64>,
    xi_star: f64,
    zeta_star: Option<f64>,
    slack: Vec<f64>,
    sigma_g: f64,
    bound: f64,
    /// `None` when the zero decision is not strictly feasible.
    dual_ceiling: Option<f64>,
}

fn cmd_oracle(args: OracleArgs) -> CliResult<()> {
    let loaded = args.scenario.load(|_| {})?;
    let s = &loaded.scenario;
    let trace = load_trace(s)?;
    let instance = build_instance(s, trace.as_deref())?;
    let single = instance.problem.as_single().ok_or_else(|| {
        config_err(anyhow!(
            "oracle solves single-cloudlet scenarios only; this one has {} cloudlets",
            instance.problem.k()
        ))
    })?;
    let slack = single.slater_slack();
    if slack <= 0.0 {
        eprintln!(
            "warning: Slater condition fails (zero-decision slack {slack}); multipliers may be unbounded"
        );
    }
    let sol: OracleSolution = solve_p1(&single).map_err(runtime_err)?;
    let report = OracleReport {
        f_star: sol.f_star,
        y_star: sol.y_star,
        mu_star: sol.mu_star,
        xi_star: sol.xi_star,
        zeta_star: sol.zeta_star,
        slack: sol.slack,
        sigma_g: instance.sigma_g,
        bound: instance.bound,
        dual_ceiling: dual_bound_ceiling(&single, s.alpha, 0.0).ok(),
    };
    let stdout = io::stdout();
    let mut out = stdout.lock();
    let text = if args.json {
        serde_json::to_string_pretty(&report).map_err(runtime_err)?
    } else {
        oracle_text(&report)
    };
    writeln!(out, "{text}").map_err(runtime_err)
}

fn oracle_text(r: &OracleReport) -> String {
    let list = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let mut lines = vec![format!("f_star {}", r.f_star)];
    for (n, row) in r.y_star.iter().enumerate() {
        lines.push(format!("y_star[{n}] {}", list(row)));
    }
    lines.push(format!("mu_star {}", list(&r.mu_star)));
    lines.push(format!("xi_star {}", r.xi_star));
    if let Some(z) = r.zeta_star {
        lines.push(format!("zeta_star {z}"));
    }
    lines.push(format!("slack {}", list(&r.slack)));
    lines.push(format!("sigma_g {}", r.sigma_g));
    lines.push(format!("bound {}", r.bound));
    match r.dual_ceiling {
        Some(c) => lines.push(format!("dual_ceiling {c}")),
        None => lines.push("dual_ceiling none".into()),
    }
    lines.join("\n")
}

#[derive(Debug, Serialize)]
struct SweepRow {
    alpha: f64,
    terminal_gap: f64,
    bound: f64,
    f_ybar: f64,
    f_star: f64,
    feas_norm: f64,
}

fn cmd_sweep(args: SweepArgs) -> CliResult<()> {
    if args.alphas.is_empty() {
        return Err(config_err(anyhow!("--alphas needs at least one step size")));
    }
    let runs = args
        .alphas
        .iter()
        .map(|&alpha| {
            let mut ov = args.scenario.clone();
            ov.alpha = Some(alpha);
            ov.load(|doc| {
                if let Some(e) = args.emit_every {
                    set_emit_every(doc, e);
                }
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))
        .map_err(runtime_err)?;
    let paths: Vec<PathBuf> = args
        .alphas
        .iter()
        .map(|a| args.out_dir.join(format!("alpha_{a}.csv")))
        .collect();
    let manifests: Vec<RunManifest> = runs
        .iter()
        .zip(&paths)
        .map(|(l, p)| manifest_for(l, l.scenario.policy.name(), vec![p.display().to_string()]))
        .collect();
    for (m, p) in manifests.iter().zip(&paths) {
        m.check_overwrite(p, args.force).map_err(runtime_err)?;
    }
    if let Some(l) = runs.first() {
        warn_assumption(&l.scenario);
    }

    let trajectories = par::map(&runs, |l| simulate(&l.scenario, l.scenario.policy));
    let mut summary = Vec::with_capacity(runs.len());
    for (((traj, l), path), m) in trajectories
        .into_iter()
        .zip(&runs)
        .zip(&paths)
        .zip(&manifests)
    {
        let traj = traj?;
        traj.write_csv(create(path)?, l.scenario.params.emit_every)
            .map_err(runtime_err)?;
        m.write(path).map_err(runtime_err)?;
        let last = traj.last();
        summary.push(SweepRow {
            alpha: l.scenario.alpha,
            terminal_gap: last.map_or(f64::NAN, |r| r.gap),
            bound: traj.bound,
            f_ybar: last.map_or(f64::NAN, |r| r.f_ybar),
            f_star: traj.f_star,
            feas_norm: last.map_or(f64::NAN, |r| r.feas_norm),
        });
    }
    let summary_path = args.out_dir.join("summary.csv");
    let mut w = csv::Writer::from_writer(create(&summary_path)?);
    for row in &summary {
        w.serialize(row).map_err(runtime_err)?;
    }
    w.flush().map_err(runtime_err)?;
    Ok(())
}

/// Keeps the first occurrence of each name, warning about the rest.
fn dedupe_policies(names: &[String]) -> CliResult<Vec<PolicyKind>> {
    let mut kinds = Vec::with_capacity(names.len());
    for name in names {
        let kind = parse_policy(name.trim())?;
        if kinds.contains(&kind) {
            eprintln!("warning: policy `{kind}` listed more than once; running it once");
        } else {
            kinds.push(kind);
        }
    }
    if kinds.is_empty() {
        return Err(config_err(anyhow!("--policies needs at least one name")));
    }
    Ok(kinds)
}

fn cmd_compare(args: CompareArgs) -> CliResult<()> {
    let kinds = dedupe_policies(&args.policies)?;
    let loaded = args.scenario.load(|_| {})?;
    let s = &loaded.scenario;
    warn_assumption(s);
    let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    let manifest = manifest_for(
        &loaded,
        &names.join(","),
        vec![args.out.display().to_string()],
    );
    manifest
        .check_overwrite(&args.out, args.force)
        .map_err(runtime_err)?;

    let trajectories = par::map(&kinds, |&k| simulate(s, k))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let rows = compare_policies(&trajectories).map_err(runtime_err)?;
    write_comparison_csv(create(&args.out)?, &rows).map_err(runtime_err)?;
    manifest.write(&args.out).map_err(runtime_err)
}

fn cmd_trace_export(args: TraceExportArgs) -> CliResult<()> {
    let loaded = args.scenario.load(|_| {})?;
    let s = &loaded.scenario;
    let GainSource::Synthetic { confidence, noise } = &s.gain_source else {
        return Err(config_err(anyhow!(
            "trace-export needs a synthetic gain source"
        )));
    };
    let manifest = manifest_for(&loaded, "trace", vec![args.out.display().to_string()]);
    manifest
        .check_overwrite(&args.out, args.force)
        .map_err(runtime_err)?;
    let rows = export_synthetic_trace(s, confidence.clone(), noise.clone(), s.horizon);
    write_trace(create(&args.out)?, &rows).map_err(runtime_err)?;
    manifest.write(&args.out).map_err(runtime_err)
}
