//! Acceptance suite: one pass/fail line per criterion, tolerances fixed.
//!
//! Lines go straight to the process stdout so they survive the test
//! harness's output capture. The suite fails on any failing criterion
//! except those listed in [`KNOWN_RED`], whose failure is expected at desk
//! scale; their FAIL lines are still printed.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use shelab::estimators::{self, MomentKind, MomentSeries, HOLDER_LAGS};
use shelab::export;
use shelab::kernel;
use shelab::noise::philox4x32_10;
use shelab::oracle::{self, MomentField, VolterraGrid};
use shelab::quad::{self, Tolerance};
use shelab::solver;
use shelab::SimConfig;

/// Criteria expected to fail at desk scale.
const KNOWN_RED: &[&str] = &["laplace-bracket"];

struct Outcome {
    id: &'static str,
    pass: bool,
    detail: String,
    seconds: f64,
}

fn emit(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
    let _ = out.flush();
}

fn config(name: &str) -> SimConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    SimConfig::load(&path, &[]).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

/// Deterministic uniforms on (0, 1) for parameter sweeps.
fn uniforms(n: usize, key: u32) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let r = philox4x32_10([i as u32, 0, 0, 0], [key, 0]);
            (r[0] as f64 + 0.5) / 4_294_967_296.0
        })
        .collect()
}

fn kernel_identities() -> (bool, String) {
    let mut worst_mass: f64 = 0.0;
    let mut worst_l2: f64 = 0.0;
    for &(t, kappa) in &[(0.01f64, 1.0f64), (0.5, 1.0), (2.0, 0.3), (10.0, 2.5)] {
        let s = (4.0 * kappa * t).sqrt();
        let tol = Tolerance { abs: 1e-14, rel: 1e-13 };
        let mass = quad::integrate(|z| kernel::heat_kernel(t, z, kappa).unwrap(), -40.0 * s, 40.0 * s, tol, 2000)
            .unwrap()
            .value;
        worst_mass = worst_mass.max((mass - 1.0).abs());
        let l2 = quad::integrate(|z| kernel::heat_kernel(t, z, kappa).unwrap().powi(2), -40.0 * s, 40.0 * s, tol, 2000)
            .unwrap()
            .value;
        let exact = kernel::kernel_l2_norm_sq(t, kappa).unwrap();
        worst_l2 = worst_l2.max(((l2 - exact) / exact).abs());
    }
    let mut worst_laplace: f64 = 0.0;
    for (a, b) in uniforms(20, 11).into_iter().zip(uniforms(20, 12)) {
        let lambda = 10f64.powf(4.0 * a - 2.0);
        let kappa = 10f64.powf(2.0 * b - 1.0);
        let v = kernel::laplace_kernel_l2(lambda, kappa).unwrap();
        worst_laplace = worst_laplace.max((2.0 * (2.0 * kappa * lambda).sqrt() * v - 1.0).abs());
    }
    let pass = worst_mass < 1e-10 && worst_l2 < 1e-8 && worst_laplace < 1e-12;
    (
        pass,
        format!("mass err {worst_mass:.1e} (<1e-10), l2 rel err {worst_l2:.1e} (<1e-8), laplace identity err {worst_laplace:.1e} (<1e-12)"),
    )
}

fn threshold_reproduction() -> (bool, String) {
    let thr = kernel::lyapunov_threshold(1.0, 1.0).unwrap();
    let mut ok = thr == 0.125;
    let mut worst: f64 = 0.0;
    for &(lip, kappa) in &[(1.0f64, 1.0f64), (1.25, 1.0), (0.75, 2.0), (2.0, 0.5)] {
        let t = lip.powi(4) / (8.0 * kappa);
        let u0 = 2.0 / 3.0;
        let at = oracle::picard_moment_bound(t, lip, kappa, u0, 10).unwrap();
        ok &= at.fixed_point.is_none();
        let below = oracle::picard_moment_bound(0.999 * t, lip, kappa, u0, 10).unwrap();
        ok &= below.fixed_point.is_none();
        for lambda in [t * (1.0 + 1e-6), 2.0 * t, 10.0 * t] {
            let above = oracle::picard_moment_bound(lambda, lip, kappa, u0, 10).unwrap();
            let q = lip * lip / (2.0 * (2.0 * kappa * lambda).sqrt());
            let closed = u0 / (1.0 - q);
            match above.fixed_point {
                Some(fp) => worst = worst.max((fp - closed).abs() / closed),
                None => ok = false,
            }
        }
    }
    ok &= worst < 1e-12;
    (ok, format!("threshold(1,1) = {thr}, divergence flagged at and below lip^4/(8 kappa), fixed point rel err {worst:.1e} (<1e-12)"))
}

fn oracle_lyapunov() -> (bool, String) {
    let cfg = config("oracle_long.cfg");
    let mass = oracle::solve_l2_mass_volterra(&cfg, VolterraGrid::new(0.04, 20.0).unwrap()).unwrap();
    let sol = oracle::solve_second_moment_volterra(&cfg, VolterraGrid::new(0.04, 20.0).unwrap()).unwrap();
    let series = MomentSeries::exact(
        MomentKind::L2Sq,
        sol.fields.iter().map(|f| f.t).collect(),
        sol.fields.iter().map(|f| f.mass()).collect(),
    );
    let fit = estimators::fit_lyapunov(&series, (10.0, 20.0)).unwrap();
    let mass_gap = (mass.last().unwrap().1 / sol.fields.last().unwrap().mass() - 1.0).abs();
    let rel = (fit.rate / 0.125 - 1.0).abs();
    (
        rel < 0.05,
        format!(
            "slope {:.5} vs 0.125 (rel {:.2}%, limit 5%), boundary ratio {:.1e}, mass-mode agreement {:.1e}",
            fit.rate,
            100.0 * rel,
            sol.max_boundary_ratio,
            mass_gap
        ),
    )
}

fn laplace_bracket() -> (bool, String) {
    // Finite side: wide domain and long horizon so the truncated tail is
    // below tolerance; refinement dt → dt/2.
    let base = config("oracle_long.cfg");
    let wide = |dt: f64, t_end: f64| {
        let mut c = base.clone();
        c.x_max = 220.0;
        c.nx = 4096;
        c.dt = dt;
        c.t_end = t_end;
        c.snapshot_times.clear();
        c
    };
    let mut finite = Vec::new();
    for dt in [0.04, 0.02] {
        let c = wide(dt, 200.0);
        let mass = oracle::solve_l2_mass_volterra(&c, VolterraGrid::new(dt, 200.0).unwrap()).unwrap();
        let report = oracle::laplace_report(&c, 0.1875, &mass).unwrap();
        finite.push(report.u_value);
    }
    let finite_ok = match (finite[0], finite[1]) {
        (Some(a), Some(b)) => ((a - b) / b).abs() < 0.01,
        _ => false,
    };
    // Divergent side: one solve to t = 30, truncated integral at 20 and 30.
    let mut c = base.clone();
    c.t_end = 30.0;
    c.m_guard = 1.0;
    c.snapshot_times.clear();
    let mass = oracle::solve_l2_mass_volterra(&c, VolterraGrid::new(0.04, 30.0).unwrap()).unwrap();
    let upto = |t_end: f64| -> Vec<(f64, f64)> { mass.iter().copied().filter(|(t, _)| *t <= t_end + 1e-9).collect() };
    let growth: Vec<f64> = [20.0, 30.0].iter().map(|&t| oracle::laplace_from_mass(&upto(t), 0.0875).unwrap().value).collect();
    let ratio = growth[1] / growth[0];
    let show = |u: Option<f64>| u.map_or("inf".to_string(), |v| format!("{v:.6}"));
    (
        finite_ok && ratio > 3.0,
        format!(
            "U(0.1875) = {} / {} at dt 0.04 / 0.02 (stable to 1%: {finite_ok}); U_T(0.0875): T=20 {:.4}, T=30 {:.4}, growth {ratio:.3}x (need > 3x)",
            show(finite[0]),
            show(finite[1]),
            growth[0],
            growth[1]
        ),
    )
}

fn mc_vs_oracle() -> (bool, String, f64) {
    let cfg = config("mc_vs_oracle.cfg");
    let mc = estimators::mc_moments(&cfg, 10_000, &[MomentKind::Pointwise(2)]).unwrap();
    let p = mc.profile(2).unwrap();
    let sol = oracle::solve_second_moment_volterra(&cfg, VolterraGrid::new(cfg.dt, 1.0).unwrap()).unwrap();
    let f = sol.fields.last().unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..cfg.nx {
        if p.x[i].abs() <= 5.0 {
            let se = p.stderrs[0][i];
            let gap = (p.estimates[0][i] - f.values[i]).abs();
            let z = if se > 0.0 { gap / se } else if gap == 0.0 { 0.0 } else { f64::INFINITY };
            worst = worst.max(z);
        }
    }
    let neg = mc.positivity.max_negative_mass_fraction.iter().copied().fold(0.0, f64::max);
    (worst <= 4.0, format!("max |MC - oracle| / stderr over |x| <= 5: {worst:.2} (limit 4), N = {}", mc.n_replicates), neg)
}

struct GrowthRun {
    sup: estimators::LyapunovFit,
    l2: estimators::LyapunovFit,
    origin: estimators::LyapunovFit,
    neg: f64,
}

fn growth_run(name: &str, n: u64) -> GrowthRun {
    let cfg = config(name);
    let mc = estimators::mc_moments(&cfg, n, &[MomentKind::SupSq, MomentKind::L2Sq, MomentKind::Pointwise(2)]).unwrap();
    let w = (0.5 * cfg.t_end, cfg.t_end);
    GrowthRun {
        sup: estimators::fit_lyapunov(mc.series(MomentKind::SupSq).unwrap(), w).unwrap(),
        l2: estimators::fit_lyapunov(mc.series(MomentKind::L2Sq).unwrap(), w).unwrap(),
        origin: estimators::fit_lyapunov(&mc.profile(2).unwrap().at_index(cfg.grid().origin_index().unwrap()), w).unwrap(),
        neg: mc.positivity.max_negative_mass_fraction.iter().copied().fold(0.0, f64::max),
    }
}

fn support_criterion() -> (bool, String) {
    let cfg = config("support.cfg");
    let sol = oracle::solve_second_moment_volterra(&cfg, VolterraGrid::new(0.04, 20.0).unwrap()).unwrap();
    let fields: Vec<MomentField> = sol.fields.into_iter().filter(|f| ((f.t * 25.0).round() as i64) % 25 == 0).collect();
    let profile = estimators::support_profile(&fields, (4.0, 20.0), &[0.99], 4.0, None).unwrap();
    let late: Vec<_> = profile.tail_rates.iter().filter(|r| r.t >= 8.0 - 1e-9).collect();
    let tails_negative = late.iter().all(|r| r.rate < 0.0);
    let all_below_floor = late.iter().all(|r| r.below_noise_floor);
    let max_rate = late.iter().map(|r| r.rate).fold(f64::NEG_INFINITY, f64::max);
    (
        profile.residual < 0.10 && tails_negative,
        format!(
            "r_0.99 line fit: m_hat {:.4}, residual {:.1}% of range (limit 10%); max tail rate at m=4 on [8,20]: {max_rate:.3} (< 0){}",
            profile.m_hat,
            100.0 * profile.residual,
            if all_below_floor { ", tails under the 1e-12 noise floor, rates are upper bounds" } else { "" },
        ),
    )
}

fn gaussian_decay() -> (bool, String) {
    let mut cfg = config("oracle_long.cfg");
    cfg.t_end = 4.0;
    cfg.snapshot_times.clear();
    let sol = oracle::solve_second_moment_volterra(&cfg, VolterraGrid::new(0.04, 4.0).unwrap()).unwrap();
    let f = sol.fields.last().unwrap();
    let x: Vec<f64> = (0..f.values.len()).map(|i| f.x(i)).collect();
    let s = (4.0 * cfg.kappa * f.t).sqrt();
    let fit = estimators::spatial_decay_fit(&x, &f.values, f.t, cfg.kappa, (3.0 * s, 6.0 * s)).unwrap();
    (
        fit.slope < 0.0 && fit.ratio >= 0.5 && fit.ratio <= 2.0,
        format!(
            "slope {:.5} vs -1/(4 kappa t) = {:.5}: ratio {:.3} (need [0.5, 2]), {} points",
            fit.slope, fit.reference, fit.ratio, fit.n_points
        ),
    )
}

fn holder() -> (bool, String) {
    let cfg = config("holder.cfg");
    let fields = estimators::mc_snapshot_fields(&cfg, 200, 0).unwrap();
    let region = estimators::mean_square_support(&fields, 0.99).unwrap();
    let r = estimators::holder_increment_exponent(&fields, &HOLDER_LAGS, region).unwrap();
    (
        (0.8..=1.2).contains(&r.slope),
        format!(
            "log-log slope {:.4} (need [0.8, 1.2]) over |x| <= {:.2}, smallest lag excluded: {}",
            r.slope, region.1, r.excluded_smallest
        ),
    )
}

fn intermittency() -> (bool, String, f64) {
    let cfg = config("peaks.cfg");
    let r = estimators::peak_concentration_ratio(&cfg, 1000).unwrap();
    let q = r.ratio[1] / r.ratio[0];
    let neg = r.positivity.max_negative_mass_fraction.iter().copied().fold(0.0, f64::max);
    (q >= 10.0, format!("ratio(12) / ratio(2) = {:.3} / {:.3} = {q:.2} (need >= 10)", r.ratio[1], r.ratio[0]), neg)
}

fn positivity(others: &[(&str, f64)]) -> (bool, String) {
    let cfg = config("pam_desk.cfg");
    let mc = estimators::mc_moments(&cfg, 1000, &[MomentKind::SupSq]).unwrap();
    let worst = mc.positivity.max_negative_mass_fraction.iter().copied().fold(0.0, f64::max);
    let extra: Vec<String> = others.iter().map(|(n, v)| format!("{n} {v:.2e}")).collect();
    (
        worst < 0.01,
        format!(
            "desk config, N = 1000: worst per-replicate negative-mass fraction over snapshots {worst:.2e} (< 1e-2); other runs: {}",
            extra.join(", ")
        ),
    )
}

fn picard() -> (bool, String) {
    let cfg = config("picard.cfg");
    let r = solver::picard_iterate(&cfg, 0, 9).unwrap();
    let d = &r.differences;
    let decreasing = (1..=5).all(|n| d[n + 1] < d[n]);
    let ratio = d[8] / d[2];
    (decreasing && ratio < 0.1, format!("d_1..d_6 strictly decreasing: {decreasing}; d_8/d_2 = {ratio:.2e} (< 0.1)"))
}

fn rv_check() -> (bool, String) {
    let pts = estimators::rv_integral_check(1.0, 1.0, &[std::f64::consts::E, 10.0, 50.0, 100.0]).unwrap();
    let ratios: Vec<String> = pts.iter().map(|p| format!("{:.3e}", p.ratio)).collect();
    (pts.iter().all(|p| p.ratio <= 10.0), format!("ratios {} (all <= 10)", ratios.join(", ")))
}

fn csv_bodies(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = std::fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            // Drop the timestamp: `<command>_<stamp>[_<suffix>].csv`.
            let mut parts: Vec<&str> = name.trim_end_matches(".csv").split('_').collect();
            parts.remove(1);
            (parts.join("_"), export::csv_body(&std::fs::read_to_string(&p).unwrap()))
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> (bool, String) {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for threads in [1, 4, 8] {
        let mut bodies = Vec::new();
        for (cmd, cfg, extra) in [("moments", "mc_vs_oracle.cfg", "200"), ("peaks", "mc_vs_oracle.cfg", "200"), ("simulate", "pam_desk.cfg", "")] {
            let out = tmp.path().join(format!("{cmd}_{threads}"));
            let mut c = Command::new(env!("CARGO_BIN_EXE_shelab"));
            c.arg(cmd).arg("--config").arg(config_path(cfg)).arg("--out").arg(&out).arg("--threads").arg(threads.to_string());
            if !extra.is_empty() {
                c.arg("--reps").arg(extra);
            }
            let status = c.output().unwrap();
            assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
            bodies.extend(csv_bodies(&out));
        }
        runs.push(bodies);
    }
    let same = runs[1] == runs[0] && runs[2] == runs[0];
    (same, format!("{} CSV bodies byte-identical across threads 1/4/8: {same}", runs[0].len()))
}

#[test]
fn acceptance_suite() {
    let mut outcomes: Vec<Outcome> = Vec::new();
    let mut record = |id: &'static str, f: &mut dyn FnMut() -> (bool, String)| {
        let start = Instant::now();
        let (pass, detail) = f();
        let seconds = start.elapsed().as_secs_f64();
        let tag = match (pass, KNOWN_RED.contains(&id)) {
            (true, _) => "PASS",
            (false, true) => "FAIL (known)",
            (false, false) => "FAIL",
        };
        emit(&format!("[acceptance] {tag:<12} {id:<22} {detail} [{seconds:.1}s]"));
        outcomes.push(Outcome { id, pass, detail, seconds });
    };

    record("kernel-identities", &mut kernel_identities);
    record("threshold", &mut threshold_reproduction);
    record("oracle-lyapunov", &mut oracle_lyapunov);
    record("laplace-bracket", &mut laplace_bracket);
    let mut negs: Vec<(&str, f64)> = Vec::new();
    record("mc-vs-oracle", &mut || {
        let (p, d, neg) = mc_vs_oracle();
        negs.push(("mc-vs-oracle", neg));
        (p, d)
    });
    record("mc-sup-growth", &mut || {
        let g = growth_run("sup_growth.cfg", 10_000);
        negs.push(("sup-growth", g.neg));
        let combined = (g.sup.stderr.powi(2) + g.l2.stderr.powi(2)).sqrt();
        (
            (0.08..=0.17).contains(&g.sup.rate),
            format!(
                "rate {:.4} +/- {:.4} (need [0.08, 0.17]); l2 rate {:.4} (|diff| {:.4} vs 3 x combined stderr {:.4}); origin rate {:.4} (<= 1.3 x 0.125 = 0.1625)",
                g.sup.rate,
                g.sup.stderr,
                g.l2.rate,
                (g.sup.rate - g.l2.rate).abs(),
                3.0 * combined,
                g.origin.rate
            ),
        )
    });
    record("sandwich", &mut || {
        let g = growth_run("sandwich.cfg", 2_000);
        negs.push(("sandwich", g.neg));
        let (lo, hi) = (0.75f64.powi(4) / 8.0, 1.25f64.powi(4) / 8.0);
        let w = 0.5 * (hi - lo);
        (
            g.sup.rate >= lo - w && g.sup.rate <= hi + w,
            format!("rate {:.4} +/- {:.4} (need [{:.4}, {:.4}])", g.sup.rate, g.sup.stderr, lo - w, hi + w),
        )
    });
    record("effective-support", &mut support_criterion);
    record("gaussian-decay", &mut gaussian_decay);
    record("holder", &mut holder);
    record("intermittency", &mut || {
        let (p, d, neg) = intermittency();
        negs.push(("peaks", neg));
        (p, d)
    });
    record("positivity", &mut || positivity(&negs));
    record("picard", &mut picard);
    record("rv-check", &mut rv_check);
    record("determinism", &mut determinism);

    let passed = outcomes.iter().filter(|o| o.pass).count();
    let total: f64 = outcomes.iter().map(|o| o.seconds).sum();
    emit(&format!("[acceptance] {passed}/{} criteria pass, {total:.0}s", outcomes.len()));
    let unexpected: Vec<String> = outcomes
        .iter()
        .filter(|o| !o.pass && !KNOWN_RED.contains(&o.id))
        .map(|o| format!("{}: {}", o.id, o.detail))
        .collect();
    assert!(unexpected.is_empty(), "failing criteria: {unexpected:#?}");
}
