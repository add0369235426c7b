//! `shelab`: experiment runner for the stochastic heat equation lab.

mod commands;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use shelab::SimConfig;

use crate::error::CliError;
use crate::run::RunContext;

#[derive(Parser, Debug)]
#[command(name = "shelab", version, about = "Simulation and moment-oracle runs for the 1-D stochastic heat equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Number of Monte Carlo replicates.
    #[arg(long)]
    reps: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Config override `dotted.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `t_lo,t_hi`")?;
    let a: f64 = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b: f64 = b.trim().parse().map_err(|e| format!("{e}"))?;
    if !(a < b) {
        return Err(format!("window start {a} must be below end {b}"));
    }
    Ok((a, b))
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One Euler–Maruyama path; snapshots as `t,x,u`.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
    /// Monte Carlo moments and fitted growth rates.
    Moments {
        #[command(flatten)]
        common: Common,
        /// Fit window `t_lo,t_hi` (default: second half of the run).
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Deterministic second-moment solve (linear sigma only) and Laplace reports.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Volterra time step (default: the config's dt, coarsened to at most 500 steps).
        #[arg(long)]
        oracle_dt: Option<f64>,
        /// Solve only for the total mass `E‖u_t‖²`.
        #[arg(long)]
        mass_only: bool,
        /// Laplace parameters, comma separated.
        #[arg(long, value_delimiter = ',')]
        lambda: Vec<f64>,
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
    },
    /// Closed-form thresholds, Picard bounds and lower-bound certificates.
    Thresholds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        low: Option<f64>,
        #[arg(long)]
        lip: Option<f64>,
        #[arg(long)]
        kappa: Option<f64>,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        lambda: Vec<f64>,
    },
    /// Effective-support radii and tail-mass rates from the oracle.
    Support {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        oracle_dt: Option<f64>,
        /// Fit window (default: `0.2·t_end, t_end`).
        #[arg(long, value_parser = parse_window)]
        window: Option<(f64, f64)>,
        #[arg(long, value_delimiter = ',', default_value = "0.99,0.999")]
        quantiles: Vec<f64>,
        #[arg(long, default_value_t = 4.0)]
        tail_m: f64,
    },
    /// Spatial increment scaling of simulated paths.
    Holder {
        #[command(flatten)]
        common: Common,
        /// Snapshot time (default: t_end).
        #[arg(long)]
        time: Option<f64>,
        /// Average over `|x| ≤ r_q` of the mean-square profile.
        #[arg(long, default_value_t = 0.99)]
        support_q: f64,
    },
    /// Peak concentration ratio `E sup|u|² / (sup p_t*u₀)²`.
    Peaks {
        #[command(flatten)]
        common: Common,
    },
    /// Numeric check of a slowly-varying integral bound.
    Rvcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1.0)]
        q: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, value_delimiter = ',', default_value = "2.718281828459045,10,50,100")]
        times: Vec<f64>,
    },
    /// Picard iterates on the noise of one Euler path.
    Picard {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 9)]
        iters: usize,
        #[arg(long, default_value_t = 0)]
        replicate: u64,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::Moments { .. } => "moments",
            Command::Oracle { .. } => "oracle",
            Command::Thresholds { .. } => "thresholds",
            Command::Support { .. } => "support",
            Command::Holder { .. } => "holder",
            Command::Peaks { .. } => "peaks",
            Command::Rvcheck { .. } => "rvcheck",
            Command::Picard { .. } => "picard",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Moments { common, .. }
            | Command::Oracle { common, .. }
            | Command::Thresholds { common, .. }
            | Command::Support { common, .. }
            | Command::Holder { common, .. }
            | Command::Peaks { common }
            | Command::Rvcheck { common, .. }
            | Command::Picard { common, .. } => common,
        }
    }
}

fn load_config(common: &Common) -> Result<Option<SimConfig>, CliError> {
    let Some(path) = &common.config else {
        if !common.set.is_empty() || common.seed.is_some() {
            return Err(CliError::Config("--set and --seed need --config".into()));
        }
        return Ok(None);
    };
    let mut cfg = SimConfig::load(path, &common.set)?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    cfg.validate_geometry()?;
    Ok(Some(cfg))
}

fn build_context(cmd: &Command) -> Result<RunContext, CliError> {
    let common = cmd.common();
    let config = load_config(common)?;
    if let Some(0) = common.threads {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    run::prepare_out_dir(&common.out)?;
    Ok(RunContext::new(
        cmd.name(),
        common.config.clone(),
        config,
        common.out.clone(),
        common.reps,
        rayon::current_num_threads(),
        common.set.clone(),
        std::env::args().skip(1).collect(),
    ))
}

fn dispatch(cmd: Command, ctx: &mut RunContext) -> Result<(), CliError> {
    match cmd {
        Command::Simulate { replicate, .. } => commands::simulate(ctx, replicate),
        Command::Moments { window, .. } => commands::moments(ctx, window),
        Command::Oracle { oracle_dt, mass_only, lambda, window, .. } => commands::oracle(ctx, oracle_dt, mass_only, &lambda, window),
        Command::Thresholds { low, lip, kappa, lambda, .. } => {
            commands::thresholds(ctx, commands::ThresholdArgs { low, lip, kappa, lambdas: lambda })
        }
        Command::Support { oracle_dt, window, quantiles, tail_m, .. } => commands::support(ctx, oracle_dt, window, &quantiles, tail_m),
        Command::Holder { time, support_q, .. } => commands::holder(ctx, time, support_q),
        Command::Peaks { .. } => commands::peaks(ctx),
        Command::Rvcheck { q, eta, times, .. } => commands::rvcheck(ctx, q, eta, &times),
        Command::Picard { iters, replicate, .. } => commands::picard(ctx, iters, replicate),
    }?;
    ctx.write_manifest()?;
    Ok(())
}

fn fail(command: &str, out: Option<&PathBuf>, err: &CliError) -> ExitCode {
    let record = err.record(command);
    let json = serde_json::to_string(&record).unwrap_or_else(|_| format!("{{\"message\":{:?}}}", err.to_string()));
    eprintln!("{json}");
    if let Some(dir) = out {
        if dir.is_dir() {
            let _ = std::fs::write(dir.join("error.json"), json + "\n");
        }
    }
    ExitCode::from(err.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let out = cli.command.common().out.clone();
    let mut ctx = match build_context(&cli.command) {
        Ok(c) => c,
        Err(e) => return fail(name, Some(&out), &e),
    };
    match dispatch(cli.command, &mut ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            ctx.remove_outputs();
            fail(name, Some(&out), &e)
        }
    }
}
