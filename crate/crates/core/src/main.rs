use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use drive_robust::agents::resolve_policy_names;
use drive_robust::config::{env_help, Config, ENV_VARS, SWEEP_ENV_VARS};
use drive_robust::harness::{load_sweep, paper_preset, run_route, run_sweep, SweepSpec};
use drive_robust::latency::{ticks_from_ms, LatencyMode};
use drive_robust::metrics::driving_score;
use drive_robust::report::write_report;
use drive_robust::verify::run_checks;
use drive_robust::world::{RouteSpec, RouteSuite};
use drive_robust::Error;

#[derive(Parser)]
#[command(
    name = "drive-robust",
    version,
    about = "Closed-loop robustness evaluation of scripted driving policies"
)]
struct Cli {
    /// TOML configuration file; flags override it and environment variables override both.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy on one route under one setting.
    Run(RunArgs),
    /// Run the baseline and every setting for every policy on a route suite.
    Sweep(SweepArgs),
    /// Rebuild report files from the run records of a sweep.
    Report(ReportArgs),
    /// Check the perturbation and metric code against independent oracles.
    Verify(VerifyArgs),
}

#[derive(Args, Default)]
struct CommonArgs {
    /// Global seed for every perturbation stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Simulation and control rate in Hz.
    #[arg(long)]
    sim_rate: Option<u32>,
    /// Directory of route files (default: the bundled suite).
    #[arg(long)]
    routes_dir: Option<PathBuf>,
    /// Log the perturbed camera raster on every tick.
    #[arg(long)]
    record_rasters: bool,
    /// Per-tick burst onset probability.
    #[arg(long)]
    burst_probability: Option<f64>,
    /// Standard deviation of the speed multiplier.
    #[arg(long)]
    speed_std: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    policy: Option<String>,
    #[arg(long)]
    route: Option<String>,
    #[command(flatten)]
    common: CommonArgs,
    /// Occluded fraction of the camera image.
    #[arg(long)]
    occlusion: Option<f64>,
    /// Cached burst length in ticks.
    #[arg(long)]
    burst_ticks: Option<u64>,
    /// GPS noise standard deviation in metres.
    #[arg(long)]
    gps_std: Option<f64>,
    /// Mean of the speed multiplier.
    #[arg(long)]
    speed_mean: Option<f64>,
    /// Fixed inference latency in milliseconds.
    #[arg(long)]
    latency_ms: Option<f64>,
    /// Per-tick inference times in ms, one per line (realtime mode).
    #[arg(long)]
    latency_trace: Option<PathBuf>,
    /// Write the run record (JSON lines) here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Named settings grid: `paper` or `none`.
    #[arg(long)]
    preset: Option<String>,
    /// Comma-separated settings such as `gps:15,latency:200`; `none` for baseline only.
    #[arg(long)]
    settings: Option<String>,
    /// Comma-separated policy names, or `all`.
    #[arg(long, value_delimiter = ',')]
    policies: Option<Vec<String>>,
    #[command(flatten)]
    common: CommonArgs,
    /// Output root; records go to <out-dir>/<name>/<policy>/<setting>/<route>.jsonl.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Sweep name (default: the preset name, or `custom`).
    #[arg(long)]
    name: Option<String>,
    /// Worker threads for route-level parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Reuse run records whose header matches the requested run.
    #[arg(long)]
    resume: bool,
}

#[derive(Args)]
struct ReportArgs {
    /// Sweep directory containing <policy>/<setting>/<route>.jsonl.
    dir: PathBuf,
    /// Where to write report files (default: the sweep directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run only this check; may be repeated.
    #[arg(long = "check")]
    checks: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupt the inputs of one check so that it must fail.
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn common_layer(c: &CommonArgs) -> Config {
    let mut cfg = Config {
        seed: c.seed,
        sim_rate: c.sim_rate,
        routes_dir: c.routes_dir.clone(),
        record_rasters: c.record_rasters.then_some(true),
        ..Config::default()
    };
    cfg.robustness.burst_probability = c.burst_probability;
    cfg.robustness.speed_bias_std = c.speed_std;
    cfg
}

fn run_layer(a: &RunArgs) -> Config {
    let mut cfg = common_layer(&a.common);
    cfg.run.policy = a.policy.clone();
    cfg.run.route = a.route.clone();
    cfg.run.out = a.out.clone();
    let r = &mut cfg.robustness;
    r.partial_obs_ratio = a.occlusion;
    r.burst_max_ticks = a.burst_ticks;
    r.gps_noise_std = a.gps_std;
    r.speed_bias_mean = a.speed_mean;
    if a.occlusion.is_some()
        || a.burst_ticks.is_some()
        || a.gps_std.is_some()
        || a.speed_mean.is_some()
    {
        r.enable = Some(true);
    }
    cfg.latency.ms = a.latency_ms;
    cfg.latency.trace = a.latency_trace.clone();
    if a.latency_ms.is_some() || a.latency_trace.is_some() {
        cfg.latency.enable = Some(true);
    }
    cfg
}

fn sweep_layer(a: &SweepArgs) -> Config {
    let mut cfg = common_layer(&a.common);
    cfg.jobs = a.jobs;
    cfg.sweep.preset = a.preset.clone();
    cfg.sweep.settings = a.settings.clone();
    cfg.sweep.policies = a.policies.clone();
    cfg.sweep.out_dir = a.out_dir.clone();
    cfg.sweep.name = a.name.clone();
    cfg.sweep.resume = a.resume.then_some(true);
    cfg
}

fn file_layer(path: Option<&PathBuf>) -> Result<Config, Error> {
    path.map(|p| Config::load(p))
        .transpose()
        .map(Option::unwrap_or_default)
}

fn env_layer() -> Result<Config, Error> {
    Config::from_env(|k| std::env::var(k).ok())
}

fn suite(cfg: &Config) -> Result<RouteSuite, Error> {
    match &cfg.routes_dir {
        Some(dir) => RouteSuite::load_dir(dir),
        None => Ok(RouteSuite::bundled()),
    }
}

fn cmd_run(cfg: Config) -> anyhow::Result<()> {
    let eval = cfg.eval_config()?;
    let setting = cfg.run_setting()?;
    let policy = cfg
        .run
        .policy
        .clone()
        .unwrap_or_else(|| "full-pursuit".into());
    let route_id =
        cfg.run.route.clone().ok_or_else(|| {
            Error::InvalidArgument("no route given (--route or [run] route)".into())
        })?;
    let suite = suite(&cfg)?;
    let route: Arc<RouteSpec> = Arc::new(suite.get(&route_id)?.clone());
    let record = run_route(&policy, &route, &setting, &eval)?;
    if let Some(out) = &cfg.run.out {
        record.write(out)?;
    }
    let r = &record.result;
    let delay = match setting.latency.mode {
        LatencyMode::Fixed => ticks_from_ms(setting.latency.latency_ms, eval.rate_hz()),
        _ => 0,
    };
    let infractions: Vec<&str> = r.infractions.iter().map(|i| i.kind.as_str()).collect();
    println!(
        "policy={policy} route={} setting={} delay_ticks={delay} ds={:.2} completion={:.4} status={:?} outcome={:?} ticks={} infractions=[{}]{}",
        r.route_id,
        setting.label(),
        driving_score(r, &eval.penalties),
        r.completion,
        r.status,
        r.outcome,
        record.ticks.len(),
        infractions.join(","),
        r.error.as_ref().map(|e| format!(" error={e:?}")).unwrap_or_default(),
    );
    Ok(())
}

fn cmd_sweep(cfg: Config) -> anyhow::Result<()> {
    let eval = cfg.eval_config()?;
    let settings = cfg.sweep_settings()?;
    let policies = resolve_policy_names(&cfg.sweep_policies())?;
    let suite = suite(&cfg)?;
    let name =
        cfg.sweep
            .name
            .clone()
            .unwrap_or_else(|| match (&cfg.sweep.settings, &cfg.sweep.preset) {
                (Some(_), _) => "custom".into(),
                (None, Some(p)) => p.clone(),
                (None, None) => "paper".into(),
            });
    let out_dir = cfg
        .sweep
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("runs"));
    let jobs = cfg.jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    let spec = SweepSpec {
        name,
        policies,
        routes: suite.routes.into_iter().map(Arc::new).collect(),
        settings,
        config: eval,
        out_dir: Some(out_dir),
        jobs,
        resume: cfg.sweep.resume.unwrap_or(false),
    };
    let report = run_sweep(&spec)?;
    let dir = spec.sweep_dir().expect("out_dir is set");
    let files = write_report(&report, &dir)?;
    for p in &report.policies {
        let avg = p.aggregates.avg_all.map(|a| a.ds);
        println!(
            "{}: baseline DS {:.2}, {} settings, avg DS {}",
            p.policy,
            p.baseline.ds,
            p.rows.len(),
            avg.map(|d| format!("{d:.2}"))
                .unwrap_or_else(|| "n/a".into())
        );
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_report(a: &ReportArgs) -> anyhow::Result<()> {
    let report = load_sweep(&a.dir, Some(&paper_preset()))
        .with_context(|| format!("loading sweep {}", a.dir.display()))?;
    let out = a.out.clone().unwrap_or_else(|| a.dir.clone());
    for f in write_report(&report, &out)? {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> anyhow::Result<bool> {
    let results = run_checks(&a.checks, a.seed, a.inject_fault.as_deref())?;
    let mut ok = true;
    for r in &results {
        ok &= r.passed;
        println!(
            "{} {}: {}",
            if r.passed { "PASS" } else { "FAIL" },
            r.name,
            r.detail
        );
    }
    Ok(ok)
}

/// Usage errors exit with 2, everything else with 1.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::InvalidArgument(_)
            | Error::UnknownRoute(_)
            | Error::UnknownPolicy(_)
            | Error::Config(_)
            | Error::Parse { .. },
        ) => 2,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    let file = file_layer(cli.config.as_ref())?;
    let env = env_layer()?;
    match &cli.command {
        Command::Run(a) => {
            let mut cfg = file;
            cfg.merge(&run_layer(a));
            cfg.merge(&env);
            cmd_run(cfg)?;
        }
        Command::Sweep(a) => {
            let mut cfg = file;
            cfg.merge(&sweep_layer(a));
            cfg.merge(&env.sweep_env_subset());
            for (name, _) in ENV_VARS {
                if !SWEEP_ENV_VARS.contains(&name) && std::env::var_os(name).is_some() {
                    eprintln!("note: {name} is ignored by sweeps; settings come from the preset or --settings");
                }
            }
            cmd_sweep(cfg)?;
        }
        Command::Report(a) => cmd_report(a)?,
        Command::Verify(a) => return cmd_verify(a),
    }
    Ok(true)
}

fn main() -> ExitCode {
    let help = env_help();
    let mut command = Cli::command().after_help(help.clone());
    for name in ["run", "sweep"] {
        command = command.mut_subcommand(name, |c| c.after_help(help.clone()));
    }
    let matches = command.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
