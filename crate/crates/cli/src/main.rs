//! `hdp`: run Landau-damping scenarios and parameter sweeps.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use hdp_core::collision_bgk::BgkScheme;
use hdp_core::collision_landau::DeltaMScheme;
use hdp_core::driver::run_scenario;
use hdp_core::output::{sweep_csv, write_run};
use hdp_core::sweep::{run_sweep, SweepKind, SweepPlan};
use hdp_core::{Method, Scenario, System};

#[derive(Parser, Debug)]
#[command(name = "hdp", version, about = "Hybrid deviational-particle solver for 1D-3V plasma kinetics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its energy series, snapshots and manifest.
    Run(RunArgs),
    /// Run a parameter ladder and write sweep_{kind}.csv.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_enum)]
    kind: KindArg,
    #[command(flatten)]
    scenario: ScenarioArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KindArg {
    #[value(name = "convergence_dt", alias = "convergence-dt")]
    ConvergenceDt,
    #[value(name = "convergence_neff", alias = "convergence-neff")]
    ConvergenceNeff,
    #[value(name = "efficiency")]
    Efficiency,
}

impl From<KindArg> for SweepKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::ConvergenceDt => SweepKind::ConvergenceDt,
            KindArg::ConvergenceNeff => SweepKind::ConvergenceNeff,
            KindArg::Efficiency => SweepKind::Efficiency,
        }
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SystemArg {
    VpBgk,
    Vpl,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum MethodArg {
    Hdp,
    PicDsmc,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SchemeArg {
    Explicit,
    Implicit,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DeltaMArg {
    Direct,
    PairCancel,
}

/// Scenario flags; any flag given overrides the config file.
#[derive(Args, Debug)]
struct ScenarioArgs {
    /// TOML file with optional [scenario] and [sweep] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    system: Option<SystemArg>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    #[arg(long, allow_negative_numbers = true)]
    alpha: Option<f64>,
    #[arg(long)]
    mu: Option<f64>,
    /// Coulomb collision coefficient.
    #[arg(long = "A")]
    a_coef: Option<f64>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    dt_factor: Option<f64>,
    #[arg(long)]
    neff: Option<f64>,
    #[arg(long)]
    neff_c: Option<f64>,
    /// Fourier modes per velocity axis used by resampling.
    #[arg(long = "K")]
    k_modes: Option<usize>,
    /// Half-width of the resampling velocity box, in thermal speeds.
    #[arg(long)]
    box_limit: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eps_v_factor: Option<f64>,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, value_enum)]
    delta_m: Option<DeltaMArg>,
    #[arg(long)]
    conform_every: Option<usize>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    enforce_moments: bool,
    /// Use the same number of Fourier modes in every cell.
    #[arg(long)]
    fixed_modes: bool,
    /// Record wall-clock time in the energy series (makes output non-reproducible).
    #[arg(long)]
    record_wall_time: bool,
    #[arg(long, value_delimiter = ',')]
    snapshot_times: Option<Vec<f64>>,
}

#[derive(Deserialize, Default, Debug)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: Option<Scenario>,
    sweep: Option<SweepPlan>,
}

fn read_config(path: &Path) -> Result<ConfigFile> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Merges config and flags. Returns `None` when system or method is given by neither.
fn resolve(args: &ScenarioArgs) -> Result<Option<(Scenario, SweepPlan)>> {
    let cfg = match &args.config {
        Some(p) => read_config(p)?,
        None => ConfigFile::default(),
    };
    let from_cfg = cfg.scenario.is_some();
    let mut s = cfg.scenario.unwrap_or_default();
    if !from_cfg && (args.system.is_none() || args.method.is_none()) {
        return Ok(None);
    }
    if let Some(v) = args.system {
        s.system = match v {
            SystemArg::VpBgk => System::VpBgk,
            SystemArg::Vpl => System::Vpl,
        };
    }
    if let Some(v) = args.method {
        s.method = match v {
            MethodArg::Hdp => Method::Hdp,
            MethodArg::PicDsmc => Method::PicDsmc,
        };
    }
    if let Some(v) = args.scheme {
        s.scheme = match v {
            SchemeArg::Explicit => BgkScheme::Explicit,
            SchemeArg::Implicit => BgkScheme::Implicit,
        };
    }
    if let Some(v) = args.delta_m {
        s.delta_m = match v {
            DeltaMArg::Direct => DeltaMScheme::Direct,
            DeltaMArg::PairCancel => DeltaMScheme::PairCancel,
        };
    }
    macro_rules! set {
        ($($field:ident <- $arg:ident),* $(,)?) => {
            $(if let Some(v) = args.$arg.clone() { s.$field = v; })*
        };
    }
    set!(
        alpha <- alpha, mu <- mu, a_coef <- a_coef, n_x <- nx, dt_factor <- dt_factor,
        n_eff <- neff, n_eff_c <- neff_c, k_modes <- k_modes, box_limit <- box_limit, beta <- beta, gamma <- gamma,
        eps_v_factor <- eps_v_factor, conform_every <- conform_every, t_end <- t_end, seed <- seed,
        snapshot_times <- snapshot_times,
    );
    if args.enforce_moments {
        s.enforce_moments = true;
    }
    if args.fixed_modes {
        s.adaptive_modes = false;
    }
    if args.record_wall_time {
        s.record_wall_time = true;
    }
    s.validate()?;
    Ok(Some((s, cfg.sweep.unwrap_or_default())))
}

fn missing_flags() -> ExitCode {
    let err = Cli::command().error(
        ErrorKind::MissingRequiredArgument,
        "--system and --method are required unless a --config file provides a [scenario] table",
    );
    let _ = err.print();
    ExitCode::from(2)
}

fn run(args: &ScenarioArgs) -> Result<Option<()>> {
    let Some((s, _)) = resolve(args)? else { return Ok(None) };
    log::info!("running {:?}/{:?}, alpha {}, {} steps", s.system, s.method, s.alpha, s.n_steps()?);
    let out = run_scenario(&s)?;
    let files = write_run(&args.out, &s, &out)?;
    let last = out.series.last().expect("series has the initial row");
    println!(
        "t = {:.4}: |E|^2 = {:.4e}, N_p = {}, N_n = {}, N_c = {} ({:.2} s)",
        last.t, last.e_norm_sq, last.n_p, last.n_n, last.n_c, out.wall_s
    );
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(Some(()))
}

fn sweep(kind: SweepKind, args: &ScenarioArgs) -> Result<Option<()>> {
    let Some((s, plan)) = resolve(args)? else { return Ok(None) };
    let res = run_sweep(kind, &s, &plan)?;
    fs::create_dir_all(&args.out)?;
    let path = args.out.join(format!("sweep_{}.csv", kind.name()));
    fs::write(&path, sweep_csv(&res.rows, &res.slopes))?;
    for (label, slope) in &res.slopes {
        println!("{label}: fitted slope {slope:.3}");
    }
    for (alpha, ratio) in &res.advantages {
        println!("alpha {alpha}: PIC-DSMC/HDP cpu at equal error = {ratio:.2}");
    }
    println!("wrote {}", path.display());
    Ok(Some(()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(a) => run(&a.scenario),
        Command::Sweep(a) => sweep(a.kind.into(), &a.scenario),
    };
    match result {
        Ok(Some(())) => ExitCode::SUCCESS,
        Ok(None) => missing_flags(),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
