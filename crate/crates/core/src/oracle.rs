//! Deterministic second-moment dynamics of the parabolic Anderson model
//! and the Laplace-domain bounds built on them.
//!
//! For `σ(u) = λu` the function `f_t(x) = E|u_t(x)|²` solves
//!
//! ```text
//! f_t = (p_t*u₀)² + λ² ∫₀ᵗ p²_{t−s} ∗ f_s ds,   p²_τ(z) = (8πκτ)^{−1/2}·N(0, κτ)(z).
//! ```
//!
//! In Fourier space the spatial convolution is diagonal, so every mode `k`
//! obeys a scalar Volterra equation with kernel `(8πκτ)^{−1/2}e^{−κk²τ/2}`.
//! Each is solved by product integration: `F̂` is taken piecewise linear in
//! time and the kernel moments on each step are integrated exactly, which
//! absorbs the `τ^{−1/2}` singularity at `s = t`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::kernel::{self, KernelError, TRUNCATION_MASS};
use crate::model::{make_initial_data, make_sigma, Field, InitKind, InitialData, ModelError, SimConfig};
use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error("the second-moment identity is closed only for linear sigma")]
    NonLinearSigma,
    #[error("initial profile {0:?} is not square integrable")]
    NotSquareIntegrable(InitKind),
    #[error("invalid time grid: {0}")]
    BadTimeGrid(String),
    #[error("empty moment series")]
    Empty,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// `E|u_t(x)|²` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentField {
    pub t: f64,
    pub values: Vec<f64>,
    pub dx: f64,
}

impl MomentField {
    /// `dx·Σf = E‖u_t‖²`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx
    }

    pub fn x_max(&self) -> f64 {
        0.5 * self.values.len() as f64 * self.dx
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_max() + i as f64 * self.dx
    }
}

/// Uniform time grid `0, dt, …, t_end` for the Volterra solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolterraGrid {
    pub dt: f64,
    pub t_end: f64,
}

impl VolterraGrid {
    pub fn new(dt: f64, t_end: f64) -> Result<Self, OracleError> {
        if !(dt.is_finite() && dt > 0.0 && t_end.is_finite() && t_end > 0.0) {
            return Err(OracleError::BadTimeGrid(format!("dt = {dt}, t_end = {t_end}")));
        }
        let n = t_end / dt;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(OracleError::BadTimeGrid(format!("t_end = {t_end} is not a multiple of dt = {dt}")));
        }
        Ok(Self { dt, t_end })
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps()).map(|n| n as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VolterraSolution {
    pub fields: Vec<MomentField>,
    /// Largest `f(±x_max)/max_x f` over all times.
    pub max_boundary_ratio: f64,
}

/// Upper-tail incomplete gamma `Γ(s, x)` for `s ∈ {1/2, 3/2}`.
fn upper_gamma_half(s3: bool, x: f64) -> f64 {
    let g = PI.sqrt() * libm::erfc(x.sqrt());
    if s3 {
        0.5 * g + x.sqrt() * (-x).exp()
    } else {
        g
    }
}

/// Lower incomplete gamma `γ(s, x)` by its power series (small `x`).
fn lower_gamma_series(s: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let mut term = 1.0 / s;
    let mut sum = term;
    for n in 1..200 {
        term *= x / (s + n as f64);
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    x.powf(s) * (-x).exp() * sum
}

const SERIES_SWITCH: f64 = 1.5;

/// `∫_{x1}^{x2} y^{s−1}e^{−y} dy` for `s ∈ {1/2, 3/2}`.
fn gamma_increment(s3: bool, x1: f64, x2: f64) -> f64 {
    let s = if s3 { 1.5 } else { 0.5 };
    let complete = if s3 { 0.5 * PI.sqrt() } else { PI.sqrt() };
    if x2 <= SERIES_SWITCH {
        lower_gamma_series(s, x2) - lower_gamma_series(s, x1)
    } else if x1 >= SERIES_SWITCH {
        upper_gamma_half(s3, x1) - upper_gamma_half(s3, x2)
    } else {
        (complete - upper_gamma_half(s3, x2)) - lower_gamma_series(s, x1)
    }
}

/// Exact moments `(∫τ^{-1/2}e^{−aτ}, ∫τ^{1/2}e^{−aτ})` over `[α, β]`.
fn kernel_moments(a: f64, alpha: f64, beta: f64) -> (f64, f64) {
    if a == 0.0 {
        return (
            2.0 * (beta.sqrt() - alpha.sqrt()),
            2.0 / 3.0 * (beta.powf(1.5) - alpha.powf(1.5)),
        );
    }
    let m0 = gamma_increment(false, a * alpha, a * beta) / a.sqrt();
    let m1 = gamma_increment(true, a * alpha, a * beta) / a.powf(1.5);
    (m0, m1)
}

/// Product-integration weights for one mode: `diag` multiplies `F_n`,
/// `combined[d]` multiplies `F_{n−d}` for `1 ≤ d < n`, and `first[n]`
/// multiplies `F_0`.
struct ModeWeights {
    diag: f64,
    combined: Vec<f64>,
    first: Vec<f64>,
}

fn mode_weights(a: f64, kappa: f64, h: f64, steps: usize) -> ModeWeights {
    let c = 1.0 / (8.0 * PI * kappa).sqrt();
    let mut a_w = Vec::with_capacity(steps);
    let mut b_w = Vec::with_capacity(steps);
    for l in 0..steps {
        let (lo, hi) = (l as f64 * h, (l + 1) as f64 * h);
        let (m0, m1) = kernel_moments(a, lo, hi);
        // F linear on the step: weight on the far end (τ = hi) and near end (τ = lo).
        a_w.push(c * (m1 - lo * m0) / h);
        b_w.push(c * (hi * m0 - m1) / h);
    }
    let mut combined = vec![0.0; steps + 1];
    let mut first = vec![0.0; steps + 1];
    for d in 1..=steps {
        if d < steps {
            combined[d] = b_w[d] + a_w[d - 1];
        }
        first[d] = a_w[d - 1];
    }
    ModeWeights { diag: b_w.first().copied().unwrap_or(0.0), combined, first }
}

/// Grid samples of `(p_t*u₀)²` for a square-integrable profile.
fn forcing(init: &InitialData, t: f64, kappa: f64, cfg: &SimConfig) -> Result<Vec<f64>, OracleError> {
    let grid = cfg.grid();
    let base = if t == 0.0 {
        make_initial_data(init, &grid)?
    } else {
        kernel::smoothed_initial_field(init, t, kappa, &grid)?
    };
    Ok(base.values.iter().map(|v| v * v).collect())
}

fn check_pam(cfg: &SimConfig) -> Result<f64, OracleError> {
    cfg.validate_geometry()?;
    let sigma = make_sigma(&cfg.sigma)?;
    let lambda = sigma.linear_coefficient().ok_or(OracleError::NonLinearSigma)?;
    if cfg.init.kind == InitKind::DiscreteDelta {
        return Err(OracleError::NotSquareIntegrable(InitKind::DiscreteDelta));
    }
    Ok(lambda)
}

fn check_truncation(cfg: &SimConfig, t_end: f64) -> Result<(), OracleError> {
    let u0 = make_initial_data(&cfg.init, &cfg.grid())?;
    let (mass, distance) = kernel::wraparound_mass(&u0, t_end, cfg.kappa);
    if mass > TRUNCATION_MASS {
        return Err(KernelError::Truncation {
            mass,
            distance,
            scale: (4.0 * cfg.kappa * t_end).sqrt(),
            limit: TRUNCATION_MASS,
        }
        .into());
    }
    Ok(())
}

/// Solves `F̂_n = Ĝ_n + λ²Σ_m w_{n,m}F̂_m` for the given mode wavenumbers.
fn solve_modes(
    lambda2: f64,
    kappa: f64,
    grid: &VolterraGrid,
    wavenumbers: &[f64],
    forcing_hat: &[Vec<Complex64>],
) -> Vec<Vec<Complex64>> {
    let steps = grid.steps();
    let h = grid.dt;
    let modes = wavenumbers.len();
    let mut out: Vec<Vec<Complex64>> = Vec::with_capacity(steps + 1);
    out.push(forcing_hat[0].clone());
    let weights: Vec<ModeWeights> = wavenumbers
        .iter()
        .map(|k| mode_weights(0.5 * kappa * k * k, kappa, h, steps))
        .collect();
    for n in 1..=steps {
        let mut row = vec![Complex64::new(0.0, 0.0); modes];
        for (j, w) in weights.iter().enumerate() {
            let mut acc = forcing_hat[n][j] + out[0][j] * (lambda2 * w.first[n]);
            for m in 1..n {
                acc += out[m][j] * (lambda2 * w.combined[n - m]);
            }
            row[j] = acc / (1.0 - lambda2 * w.diag);
        }
        out.push(row);
    }
    out
}

/// Second-moment profiles `f_t` at every point of `times`.
pub fn solve_second_moment_volterra(cfg: &SimConfig, times: VolterraGrid) -> Result<VolterraSolution, OracleError> {
    let lambda = check_pam(cfg)?;
    check_truncation(cfg, times.t_end)?;
    let nx = cfg.nx;
    let dx = cfg.dx();
    let spectral = Spectral::new(nx, 2.0 * cfg.x_max);
    let ts = times.times();
    let mut forcing_hat = Vec::with_capacity(ts.len());
    for &t in &ts {
        forcing_hat.push(spectral.forward(&forcing(&cfg.init, t, cfg.kappa, cfg)?));
    }
    let hat = solve_modes(lambda * lambda, cfg.kappa, &times, spectral.wavenumbers(), &forcing_hat);
    let mut fields = Vec::with_capacity(ts.len());
    let mut max_boundary_ratio: f64 = 0.0;
    for (t, spec) in ts.iter().zip(hat) {
        let mut values = spectral.inverse_real(spec);
        for v in values.iter_mut() {
            *v = v.max(0.0);
        }
        let peak = values.iter().copied().fold(0.0, f64::max);
        if peak > 0.0 {
            let edge = values[0].max(values[nx - 1]);
            max_boundary_ratio = max_boundary_ratio.max(edge / peak);
        }
        fields.push(MomentField { t: *t, values, dx });
    }
    Ok(VolterraSolution { fields, max_boundary_ratio })
}

/// `E‖u_t‖²` alone, from the zero Fourier mode, which decouples from the
/// rest. Far cheaper than the full solve, so it suits long horizons.
pub fn solve_l2_mass_volterra(cfg: &SimConfig, times: VolterraGrid) -> Result<Vec<(f64, f64)>, OracleError> {
    let lambda = check_pam(cfg)?;
    check_truncation(cfg, times.t_end)?;
    let dx = cfg.dx();
    let ts = times.times();
    let mut forcing_hat = Vec::with_capacity(ts.len());
    for &t in &ts {
        let g: f64 = forcing(&cfg.init, t, cfg.kappa, cfg)?.iter().sum::<f64>() * dx;
        forcing_hat.push(vec![Complex64::new(g, 0.0)]);
    }
    let hat = solve_modes(lambda * lambda, cfg.kappa, &times, &[0.0], &forcing_hat);
    Ok(ts.into_iter().zip(hat).map(|(t, v)| (t, v[0].re.max(0.0))).collect())
}

/// Iterates of `M⁽ⁿ⁺¹⁾ = ‖u₀‖² + q·M⁽ⁿ⁾`, `q = lip²/(2√(2κλ))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PicardBound {
    pub q: f64,
    pub iterates: Vec<f64>,
    /// `‖u₀‖²/(1−q)`, or `None` when the recursion does not contract.
    pub fixed_point: Option<f64>,
}

pub fn picard_moment_bound(lambda: f64, lip: f64, kappa: f64, u0_l2_sq: f64, n: usize) -> Result<PicardBound, OracleError> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(OracleError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    if !(lip.is_finite() && lip >= 0.0 && kappa.is_finite() && kappa > 0.0 && u0_l2_sq >= 0.0) {
        return Err(OracleError::InvalidParameter("need lip >= 0, kappa > 0, |u0|^2 >= 0".into()));
    }
    let q = lip * lip / (2.0 * (2.0 * kappa * lambda).sqrt());
    let threshold = lip.powi(4) / (8.0 * kappa);
    let mut iterates = Vec::with_capacity(n + 1);
    let mut m = u0_l2_sq;
    iterates.push(m);
    for _ in 0..n {
        m = u0_l2_sq + q * m;
        iterates.push(m);
    }
    let divergent = q >= 1.0 || (lip > 0.0 && lambda <= threshold * (1.0 + 4.0 * f64::EPSILON));
    let fixed_point = if divergent { None } else { Some(u0_l2_sq / (1.0 - q)) };
    Ok(PicardBound { q, iterates, fixed_point })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LowerBoundCertificate {
    /// `(1/2π)∫|û₀|²/(λ+2κξ²)dξ`.
    pub fourier_term: f64,
    /// `low²/(2√(2κλ))`.
    pub q_low: f64,
    /// True when `U(λ) < ∞` is impossible: `q_low ≥ 1` and the Fourier term is positive.
    pub consistent: bool,
}

/// Certificate from an already computed Fourier term.
pub fn lower_bound_certificate_with(fourier_term: f64, lambda: f64, low: f64, kappa: f64) -> Result<LowerBoundCertificate, OracleError> {
    if !(lambda.is_finite() && lambda > 0.0 && kappa > 0.0 && low >= 0.0) {
        return Err(OracleError::InvalidParameter(format!("lambda = {lambda}, low = {low}, kappa = {kappa}")));
    }
    let q_low = low * low / (2.0 * (2.0 * kappa * lambda).sqrt());
    let threshold = low.powi(4) / (8.0 * kappa);
    let at_or_below = q_low >= 1.0 || (low > 0.0 && lambda <= threshold * (1.0 + 4.0 * f64::EPSILON));
    Ok(LowerBoundCertificate { fourier_term, q_low, consistent: at_or_below && fourier_term > 0.0 })
}

pub fn lower_bound_certificate(lambda: f64, low: f64, kappa: f64, u0: &InitialData) -> Result<LowerBoundCertificate, OracleError> {
    let fourier = kernel::plancherel_laplace(u0, lambda, kappa)?;
    lower_bound_certificate_with(fourier, lambda, low, kappa)
}

/// Relative size of the truncated tail above which a warning is attached.
pub const LAPLACE_TAIL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceEstimate {
    pub value: f64,
    /// `e^{−λt_end}E‖u_{t_end}‖²` divided by the accumulated integral.
    pub tail_ratio: f64,
    pub tail_warning: bool,
}

/// Trapezoidal `∫₀^{t_end} e^{−λt}m(t)dt` on a uniform grid of `(t, m)`.
pub fn laplace_from_mass(series: &[(f64, f64)], lambda: f64) -> Result<LaplaceEstimate, OracleError> {
    if series.is_empty() {
        return Err(OracleError::Empty);
    }
    let mut value = 0.0;
    for w in series.windows(2) {
        let (t0, m0) = w[0];
        let (t1, m1) = w[1];
        value += 0.5 * (t1 - t0) * ((-lambda * t0).exp() * m0 + (-lambda * t1).exp() * m1);
    }
    let (t_end, m_end) = *series.last().expect("non-empty");
    let tail = (-lambda * t_end).exp() * m_end;
    let tail_ratio = if value > 0.0 { tail / value } else if tail > 0.0 { f64::INFINITY } else { 0.0 };
    Ok(LaplaceEstimate { value, tail_ratio, tail_warning: tail_ratio > LAPLACE_TAIL_TOL })
}

/// `U(λ) = ∫e^{−λt}E‖u_t‖²dt` from second-moment profiles.
#[allow(non_snake_case)]
pub fn laplace_U_numeric(fields: &[MomentField], lambda: f64) -> Result<LaplaceEstimate, OracleError> {
    let series: Vec<(f64, f64)> = fields.iter().map(|f| (f.t, f.mass())).collect();
    laplace_from_mass(&series, lambda)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaplaceReport {
    pub lambda: f64,
    /// `None` stands for `+∞` (certified divergent or tail not controlled).
    #[serde(rename = "U_value")]
    pub u_value: Option<f64>,
    /// `None` when the Picard recursion is divergent.
    pub fixed_point_bound: Option<f64>,
    pub threshold_lower: f64,
    pub threshold_upper: f64,
}

/// Collects the numeric and analytic Laplace quantities for `cfg` at `lambda`.
pub fn laplace_report(cfg: &SimConfig, lambda: f64, mass: &[(f64, f64)]) -> Result<LaplaceReport, OracleError> {
    let sigma = make_sigma(&cfg.sigma)?;
    let estimate = laplace_from_mass(mass, lambda)?;
    let cert = lower_bound_certificate(lambda, sigma.low(), cfg.kappa, &cfg.init)?;
    let bound = picard_moment_bound(lambda, sigma.lip(), cfg.kappa, cfg.init.l2_norm_sq(), 0)?;
    let u_value = if cert.consistent || estimate.tail_warning { None } else { Some(estimate.value) };
    Ok(LaplaceReport {
        lambda,
        u_value,
        fixed_point_bound: bound.fixed_point,
        threshold_lower: sigma.low().powi(4) / (8.0 * cfg.kappa),
        threshold_upper: sigma.lip().powi(4) / (8.0 * cfg.kappa),
    })
}

/// Deterministic field `p_t*u₀` on the grid of `cfg`, for peak ratios.
pub fn first_moment_field(cfg: &SimConfig, t: f64) -> Result<Field, OracleError> {
    if t == 0.0 {
        return Ok(make_initial_data(&cfg.init, &cfg.grid())?);
    }
    Ok(kernel::smoothed_initial_field(&cfg.init, t, cfg.kappa, &cfg.grid())?)
}
