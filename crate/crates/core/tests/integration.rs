use shelab::estimators::{self, MomentKind};
use shelab::export::{self, Metadata, Table};
use shelab::kernel;
use shelab::model::{Boundary, InitialData, SigmaSpec, SimConfig};
use shelab::oracle::{self, VolterraGrid};
use shelab::solver;

fn pam(lambda: f64, x_max: f64, nx: usize, dt: f64, t_end: f64) -> SimConfig {
    SimConfig {
        kappa: 1.0,
        sigma: SigmaSpec::linear(lambda),
        init: InitialData::triangle(1.0, 1.0),
        x_max,
        nx,
        dt,
        t_end,
        snapshot_times: Vec::new(),
        boundary: Boundary::DirichletZero,
        seed: 7,
        clip_negative: false,
        m_guard: 1.0,
    }
}

#[test]
fn noiseless_oracle_is_square_of_heat_flow() {
    let cfg = pam(0.0, 16.0, 256, 0.05, 2.0);
    let sol = oracle::solve_second_moment_volterra(&cfg, VolterraGrid::new(0.05, 2.0).unwrap()).unwrap();
    for f in sol.fields.iter().skip(1).step_by(8) {
        let mean = kernel::smoothed_initial_field(&cfg.init, f.t, cfg.kappa, &cfg.grid()).unwrap();
        let peak = mean.values.iter().fold(0.0f64, |a, v| a.max(*v));
        for (got, m) in f.values.iter().zip(&mean.values) {
            assert!((got - m * m).abs() < 1e-4 * peak * peak, "t = {}: {got} vs {}", f.t, m * m);
        }
    }
}

#[test]
fn noiseless_laplace_matches_plancherel() {
    // With σ = 0, ∫e^{−λt}‖p_t*u₀‖²dt has a closed Fourier form.
    let cfg = pam(0.0, 60.0, 1024, 0.01, 40.0);
    let mass = oracle::solve_l2_mass_volterra(&cfg, VolterraGrid::new(0.01, 40.0).unwrap()).unwrap();
    let numeric = oracle::laplace_from_mass(&mass, 1.0).unwrap();
    let exact = kernel::plancherel_laplace(&cfg.init, 1.0, 1.0).unwrap();
    assert!(!numeric.tail_warning);
    assert!((numeric.value / exact - 1.0).abs() < 1e-3, "{} vs {exact}", numeric.value);
}

#[test]
fn noiseless_simulation_tracks_heat_flow() {
    let mut cfg = pam(0.0, 10.0, 400, 0.001, 1.0);
    cfg.snapshot_times = vec![0.5, 1.0];
    let path = solver::simulate_path(&cfg, 0).unwrap();
    for snap in &path.snapshots {
        let exact = kernel::smoothed_initial_field(&cfg.init, snap.t, cfg.kappa, &cfg.grid()).unwrap();
        let gap = snap.values.iter().zip(&exact.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap < 1e-3, "t = {}: max gap {gap}", snap.t);
    }
    assert!(path.positivity_report.negative_mass_fraction.iter().all(|&f| f == 0.0));
}

#[test]
fn noiseless_monte_carlo_has_no_spread() {
    let cfg = pam(0.0, 8.0, 160, 0.005, 0.5);
    let mc = estimators::mc_moments(&cfg, 64, &[MomentKind::L2Sq]).unwrap();
    let s = mc.series(MomentKind::L2Sq).unwrap();
    assert!(s.stderrs.iter().all(|&e| e < 1e-12));
    assert_eq!(mc.failures, 0);
}

#[test]
fn picard_bound_iterates_reach_fixed_point() {
    let b = oracle::picard_moment_bound(0.5, 1.0, 1.0, 2.0 / 3.0, 200).unwrap();
    let fp = b.fixed_point.unwrap();
    assert!((b.iterates.last().unwrap() - fp).abs() < 1e-12 * fp);
    assert!(b.iterates.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn mass_mode_agrees_with_full_solve() {
    let cfg = pam(1.0, 20.0, 512, 0.02, 4.0);
    let grid = VolterraGrid::new(0.02, 4.0).unwrap();
    let full = oracle::solve_second_moment_volterra(&cfg, grid).unwrap();
    let mass = oracle::solve_l2_mass_volterra(&cfg, grid).unwrap();
    for (f, (t, m)) in full.fields.iter().zip(&mass) {
        assert_eq!(f.t, *t);
        // The full solve clips early-time ringing from the triangle's kinks to 0.
        let rel = (f.mass() - m).abs() / m;
        assert!(rel < 1e-6, "t = {t}: rel gap {rel:e}");
    }
}

#[test]
fn csv_round_trips_config_and_body() {
    let mut cfg = pam(1.0, 10.0, 200, 0.0025, 1.0);
    cfg.snapshot_times = vec![0.5, 1.0];
    let meta = Metadata::for_run("moments", &cfg);
    let mut table = Table::new(&["t", "value"]);
    table.push_f64(&[0.1, 1.0 / 3.0]);
    table.push_f64(&[f64::NAN, f64::INFINITY]);
    let text = export::render_csv(&meta, &table);
    assert_eq!(export::embedded_config(&text).unwrap(), cfg);
    assert_eq!(export::csv_body(&text), table.body());
    let parsed = export::parse_metadata(&text);
    assert!(parsed.iter().any(|(k, v)| k == "seed" && v == "7"));
    let second: Vec<f64> = export::csv_body(&text).lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
    assert_eq!(second, vec![0.1, 1.0 / 3.0]);
}

#[test]
fn config_toml_round_trip() {
    let cfg = pam(0.75, 16.0, 320, 0.0025, 1.0);
    let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
    assert_eq!(back, cfg);
    let over = SimConfig::from_toml_with_overrides(&cfg.to_toml_string(), &["sigma.lambda=2".into(), "nx=640".into()]).unwrap();
    assert_eq!(over.sigma.lambda, Some(2.0));
    assert_eq!(over.nx, 640);
}
