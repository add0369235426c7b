use serde::Serialize;
use shelab::estimators::{self, LyapunovFit, MomentKind, MomentSeries, PositivitySummary};
use shelab::export::{fmt_f64, Table};
use shelab::kernel;
use shelab::model::make_sigma;
use shelab::oracle::{self, LaplaceReport, MomentField, VolterraGrid};
use shelab::solver;
use shelab::SimConfig;

use crate::error::CliError;
use crate::run::RunContext;

const DEFAULT_REPS: u64 = 1000;

/// Default fit window `[t_end/2, t_end]`.
fn window_or_default(window: Option<(f64, f64)>, t_end: f64) -> (f64, f64) {
    window.unwrap_or((0.5 * t_end, t_end))
}

#[derive(Serialize)]
struct FitOutcome {
    fit: Option<LyapunovFit>,
    error: Option<String>,
}

fn fit_outcome(series: &MomentSeries, window: (f64, f64)) -> FitOutcome {
    match estimators::fit_lyapunov(series, window) {
        Ok(f) => FitOutcome { fit: Some(f), error: None },
        Err(e) => FitOutcome { fit: None, error: Some(e.to_string()) },
    }
}

fn print_outputs(ctx: &RunContext) {
    for p in ctx.written() {
        println!("wrote {}", p.display());
    }
}

pub fn simulate(ctx: &mut RunContext, replicate: u64) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let traj = solver::simulate_path(&cfg, replicate)?;
    let mut table = Table::new(&["t", "x", "u"]);
    for snap in &traj.snapshots {
        for (i, &u) in snap.values.iter().enumerate() {
            table.push_f64(&[snap.t, snap.x(i), u]);
        }
    }
    ctx.write_csv("", &table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        replicate_index: u64,
        times: Vec<f64>,
        positivity_report: &'a solver::PositivityReport,
        boundary_mass: &'a [f64],
    }
    ctx.write_json(
        "",
        &Summary {
            replicate_index: replicate,
            times: traj.snapshots.iter().map(|f| f.t).collect(),
            positivity_report: &traj.positivity_report,
            boundary_mass: &traj.boundary_mass,
        },
    )?;
    print_outputs(ctx);
    Ok(())
}

pub fn moments(ctx: &mut RunContext, window: Option<(f64, f64)>) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let n = ctx.reps(DEFAULT_REPS);
    let kinds = [MomentKind::SupSq, MomentKind::L2Sq, MomentKind::Pointwise(2), MomentKind::Pointwise(4)];
    let mc = estimators::mc_moments(&cfg, n, &kinds)?;
    let window = window_or_default(window, cfg.t_end);

    let mut table = Table::new(&["t", "kind", "estimate", "stderr"]);
    for s in &mc.series {
        for i in 0..s.times.len() {
            table.push(vec![fmt_f64(s.times[i]), s.kind.label(), fmt_f64(s.estimates[i]), fmt_f64(s.stderrs[i])]);
        }
    }
    ctx.write_csv("", &table)?;

    let mut profile = Table::new(&["t", "x", "k", "estimate", "stderr"]);
    for p in &mc.profiles {
        for (s, &t) in p.times.iter().enumerate() {
            for (i, &x) in p.x.iter().enumerate() {
                profile.push_f64(&[t, x, p.k as f64, p.estimates[s][i], p.stderrs[s][i]]);
            }
        }
    }
    ctx.write_csv("profile", &profile)?;

    let second = mc.profile(2).expect("requested");
    let fourth = mc.profile(4).expect("requested");
    let origin = cfg.grid().origin_index();
    let fourth_fit = fit_outcome(&fourth.sup_over_x(), window);
    let sigma = make_sigma(&cfg.sigma)?;

    #[derive(Serialize)]
    struct Summary {
        n_replicates: u64,
        failures: u64,
        window: (f64, f64),
        sup_sq: FitOutcome,
        l2_sq: FitOutcome,
        origin_second: Option<FitOutcome>,
        sup_fourth: FitOutcome,
        b_estimate: Option<f64>,
        threshold_lower: f64,
        threshold_upper: f64,
        positivity: PositivitySummary,
    }
    let b_estimate = fourth_fit.fit.map(|f| estimators::b_estimate_from_fourth(f.rate));
    let summary = Summary {
        n_replicates: mc.n_replicates,
        failures: mc.failures,
        window,
        sup_sq: fit_outcome(mc.series(MomentKind::SupSq).expect("requested"), window),
        l2_sq: fit_outcome(mc.series(MomentKind::L2Sq).expect("requested"), window),
        origin_second: origin.map(|i| fit_outcome(&second.at_index(i), window)),
        sup_fourth: fourth_fit,
        b_estimate,
        threshold_lower: sigma.low().powi(4) / (8.0 * cfg.kappa),
        threshold_upper: sigma.lip().powi(4) / (8.0 * cfg.kappa),
        positivity: mc.positivity.clone(),
    };
    ctx.write_json("", &summary)?;
    print_outputs(ctx);
    Ok(())
}

/// Most Volterra steps used when no oracle step is given.
const ORACLE_MAX_STEPS: usize = 500;

/// Oracle time grid: `oracle_dt` if given, else `t_end/min(n_steps, 500)`.
fn volterra_grid(cfg: &SimConfig, oracle_dt: Option<f64>) -> Result<VolterraGrid, CliError> {
    let dt = oracle_dt.unwrap_or_else(|| cfg.t_end / cfg.n_steps().clamp(1, ORACLE_MAX_STEPS) as f64);
    Ok(VolterraGrid::new(dt, cfg.t_end)?)
}

/// Fields whose time is within half a step of a requested time.
fn select_fields<'a>(fields: &'a [MomentField], times: &[f64], dt: f64) -> Vec<&'a MomentField> {
    times
        .iter()
        .filter_map(|&t| fields.iter().find(|f| (f.t - t).abs() <= 0.5 * dt))
        .collect()
}

pub fn oracle(
    ctx: &mut RunContext,
    oracle_dt: Option<f64>,
    mass_only: bool,
    lambdas: &[f64],
    window: Option<(f64, f64)>,
) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let grid = volterra_grid(&cfg, oracle_dt)?;
    let (mass, boundary_ratio) = if mass_only {
        (oracle::solve_l2_mass_volterra(&cfg, grid)?, None)
    } else {
        let sol = oracle::solve_second_moment_volterra(&cfg, grid)?;
        let mass: Vec<(f64, f64)> = sol.fields.iter().map(|f| (f.t, f.mass())).collect();
        let mut profile = Table::new(&["t", "x", "f"]);
        let times = if cfg.snapshot_times.is_empty() { vec![cfg.t_end] } else { cfg.snapshots() };
        for f in select_fields(&sol.fields, &times, grid.dt) {
            for (i, &v) in f.values.iter().enumerate() {
                profile.push_f64(&[f.t, f.x(i), v]);
            }
        }
        ctx.write_csv("profile", &profile)?;
        (mass, Some(sol.max_boundary_ratio))
    };

    let mut table = Table::new(&["t", "l2_mass"]);
    for &(t, m) in &mass {
        table.push_f64(&[t, m]);
    }
    ctx.write_csv("", &table)?;

    let window = window_or_default(window, cfg.t_end);
    let series = MomentSeries::exact(MomentKind::L2Sq, mass.iter().map(|p| p.0).collect(), mass.iter().map(|p| p.1).collect());
    let laplace = lambdas
        .iter()
        .map(|&l| Ok((oracle::laplace_report(&cfg, l, &mass)?, oracle::laplace_from_mass(&mass, l)?)))
        .collect::<Result<Vec<_>, CliError>>()?;

    #[derive(Serialize)]
    struct LaplaceEntry {
        #[serde(flatten)]
        report: LaplaceReport,
        truncated_value: f64,
        tail_ratio: f64,
        tail_warning: bool,
    }
    #[derive(Serialize)]
    struct Summary {
        dt: f64,
        window: (f64, f64),
        l2_growth: FitOutcome,
        reference_rate: f64,
        max_boundary_ratio: Option<f64>,
        laplace: Vec<LaplaceEntry>,
    }
    let lambda = make_sigma(&cfg.sigma)?.linear_coefficient().unwrap_or(f64::NAN);
    let summary = Summary {
        dt: grid.dt,
        window,
        l2_growth: fit_outcome(&series, window),
        reference_rate: lambda.powi(4) / (8.0 * cfg.kappa),
        max_boundary_ratio: boundary_ratio,
        laplace: laplace
            .into_iter()
            .map(|(report, est)| LaplaceEntry {
                report,
                truncated_value: est.value,
                tail_ratio: est.tail_ratio,
                tail_warning: est.tail_warning,
            })
            .collect(),
    };
    ctx.write_json("", &summary)?;
    print_outputs(ctx);
    Ok(())
}

pub struct ThresholdArgs {
    pub low: Option<f64>,
    pub lip: Option<f64>,
    pub kappa: Option<f64>,
    pub lambdas: Vec<f64>,
}

pub fn thresholds(ctx: &mut RunContext, args: ThresholdArgs) -> Result<(), CliError> {
    let from_cfg = match &ctx.config {
        Some(cfg) => {
            let s = make_sigma(&cfg.sigma)?;
            Some((s.low(), s.lip(), cfg.kappa))
        }
        None => None,
    };
    let pick = |flag: Option<f64>, idx: usize, name: &str| -> Result<f64, CliError> {
        flag.or(from_cfg.map(|c| [c.0, c.1, c.2][idx]))
            .ok_or_else(|| CliError::Config(format!("thresholds needs --{name} or --config")))
    };
    let low = pick(args.low, 0, "low")?;
    let lip = pick(args.lip, 1, "lip")?;
    let kappa = pick(args.kappa, 2, "kappa")?;
    if low > lip {
        return Err(CliError::Config(format!("low = {low} exceeds lip = {lip}")));
    }
    let threshold_lower = if low > 0.0 { kernel::lyapunov_threshold(low, kappa)? } else { 0.0 };
    let threshold_upper = if lip > 0.0 { kernel::lyapunov_threshold(lip, kappa)? } else { 0.0 };
    let u0 = ctx.config.as_ref().map(|c| c.init.clone());
    let u0_l2 = u0.as_ref().map(|u| u.l2_norm_sq()).unwrap_or(1.0);

    let mut table = Table::new(&[
        "lambda",
        "q",
        "fixed_point_bound",
        "q_low",
        "fourier_term",
        "lower_bound_divergent",
        "threshold_lower",
        "threshold_upper",
    ]);
    #[derive(Serialize)]
    struct Row {
        lambda: f64,
        picard: oracle::PicardBound,
        lower_bound: Option<oracle::LowerBoundCertificate>,
    }
    let mut rows = Vec::new();
    for &lambda in &args.lambdas {
        let picard = oracle::picard_moment_bound(lambda, lip, kappa, u0_l2, 20)?;
        let lower = match &u0 {
            Some(u) => Some(oracle::lower_bound_certificate(lambda, low, kappa, u)?),
            None => None,
        };
        table.push(vec![
            fmt_f64(lambda),
            fmt_f64(picard.q),
            picard.fixed_point.map(fmt_f64).unwrap_or_else(|| "divergent".into()),
            fmt_f64(lower.map(|l| l.q_low).unwrap_or(f64::NAN)),
            fmt_f64(lower.map(|l| l.fourier_term).unwrap_or(f64::NAN)),
            lower.map(|l| l.consistent.to_string()).unwrap_or_else(|| "na".into()),
            fmt_f64(threshold_lower),
            fmt_f64(threshold_upper),
        ]);
        rows.push(Row { lambda, picard, lower_bound: lower });
    }
    ctx.write_csv("", &table)?;

    #[derive(Serialize)]
    struct Summary {
        low: f64,
        lip: f64,
        kappa: f64,
        u0_l2_sq: f64,
        threshold_lower: f64,
        threshold_upper: f64,
        rows: Vec<Row>,
    }
    ctx.write_json("", &Summary { low, lip, kappa, u0_l2_sq: u0_l2, threshold_lower, threshold_upper, rows })?;
    print_outputs(ctx);
    Ok(())
}

pub fn support(
    ctx: &mut RunContext,
    oracle_dt: Option<f64>,
    window: Option<(f64, f64)>,
    quantiles: &[f64],
    tail_m: f64,
) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let grid = volterra_grid(&cfg, oracle_dt)?;
    let sol = oracle::solve_second_moment_volterra(&cfg, grid)?;
    let window = window.unwrap_or((0.2 * cfg.t_end, cfg.t_end));
    let profile = estimators::support_profile(&sol.fields, window, quantiles, tail_m, None)?;

    let mut columns: Vec<String> = vec!["t".into()];
    columns.extend(quantiles.iter().map(|q| format!("r_{q}")));
    columns.push("tail_rate".into());
    columns.push("tail_below_noise_floor".into());
    let mut table = Table { columns, rows: Vec::new() };
    for (n, &t) in profile.times.iter().enumerate() {
        let mut row = vec![fmt_f64(t)];
        row.extend(profile.radii.iter().map(|r| fmt_f64(r[n])));
        row.push(fmt_f64(profile.tail_rates[n].rate));
        row.push(profile.tail_rates[n].below_noise_floor.to_string());
        table.push(row);
    }
    ctx.write_csv("", &table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        window: (f64, f64),
        m_hat: f64,
        intercept: f64,
        residual: f64,
        tail_m: f64,
        max_boundary_ratio: f64,
        quantiles: &'a [f64],
    }
    ctx.write_json(
        "",
        &Summary {
            window,
            m_hat: profile.m_hat,
            intercept: profile.intercept,
            residual: profile.residual,
            tail_m,
            max_boundary_ratio: sol.max_boundary_ratio,
            quantiles,
        },
    )?;
    print_outputs(ctx);
    Ok(())
}

pub fn holder(ctx: &mut RunContext, time: Option<f64>, support_q: f64) -> Result<(), CliError> {
    let mut cfg = ctx.config()?.clone();
    let t = time.unwrap_or(cfg.t_end);
    cfg.snapshot_times = vec![t];
    let fields = estimators::mc_snapshot_fields(&cfg, ctx.reps(200), 0)?;
    let region = estimators::mean_square_support(&fields, support_q)?;
    let report = estimators::holder_increment_exponent(&fields, &estimators::HOLDER_LAGS, region)?;
    let mut table = Table::new(&["lag", "mean_sq_increment"]);
    for (l, v) in report.lags.iter().zip(&report.mean_sq_increments) {
        table.push_f64(&[*l, *v]);
    }
    ctx.write_csv("", &table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        region: (f64, f64),
        support_quantile: f64,
        #[serde(flatten)]
        report: &'a estimators::HolderReport,
    }
    ctx.write_json("", &Summary { region, support_quantile: support_q, report: &report })?;
    print_outputs(ctx);
    Ok(())
}

pub fn peaks(ctx: &mut RunContext) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let r = estimators::peak_concentration_ratio(&cfg, ctx.reps(DEFAULT_REPS))?;
    let mut table = Table::new(&["t", "numerator", "denominator", "ratio", "stderr"]);
    for i in 0..r.times.len() {
        table.push_f64(&[r.times[i], r.numerator[i], r.denominator[i], r.ratio[i], r.stderr[i]]);
    }
    ctx.write_csv("", &table)?;
    ctx.write_json("", &r)?;
    print_outputs(ctx);
    Ok(())
}

pub fn rvcheck(ctx: &mut RunContext, q: f64, eta: f64, times: &[f64]) -> Result<(), CliError> {
    let pts = estimators::rv_integral_check(q, eta, times)?;
    let mut table = Table::new(&["t", "ln_integral", "ln_reference", "ratio"]);
    for p in &pts {
        table.push_f64(&[p.t, p.ln_integral, p.ln_reference, p.ratio]);
    }
    ctx.write_csv("", &table)?;

    #[derive(Serialize)]
    struct Summary<'a> {
        q: f64,
        eta: f64,
        max_ratio: f64,
        points: &'a [estimators::RvPoint],
    }
    let max_ratio = pts.iter().map(|p| p.ratio).fold(0.0, f64::max);
    ctx.write_json("", &Summary { q, eta, max_ratio, points: &pts })?;
    print_outputs(ctx);
    Ok(())
}

pub fn picard(ctx: &mut RunContext, iters: usize, replicate: u64) -> Result<(), CliError> {
    let cfg = ctx.config()?.clone();
    let res = solver::picard_iterate(&cfg, replicate, iters)?;
    let mut table = Table::new(&["n", "d_n"]);
    for (n, d) in res.differences.iter().enumerate() {
        table.push_f64(&[n as f64, *d]);
    }
    ctx.write_csv("", &table)?;

    let last = res.iterates.last().expect("at least u0");
    let euler_gap = (last.values.iter().zip(&res.euler.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>() * last.dx).sqrt();
    #[derive(Serialize)]
    struct Summary {
        replicate_index: u64,
        differences: Vec<f64>,
        /// `d_{n+1} < d_n` for `n = 1..=5`.
        decreasing_1_to_5: Option<bool>,
        ratio_8_over_2: Option<f64>,
        euler_l2_gap: f64,
    }
    let d = &res.differences;
    ctx.write_json(
        "",
        &Summary {
            replicate_index: replicate,
            differences: d.clone(),
            decreasing_1_to_5: (d.len() > 6).then(|| (1..=5).all(|n| d[n + 1] < d[n])),
            ratio_8_over_2: (d.len() > 8).then(|| d[8] / d[2]),
            euler_l2_gap: euler_gap,
        },
    )?;
    print_outputs(ctx);
    Ok(())
}
