//! Heat kernel `p_t(z) = (4πκt)^{-1/2} exp(−z²/(4κt))` and the identities
//! built on it: Gaussian smoothing of fields, the L² norm of the kernel and
//! its Laplace transform, the Plancherel form of `∫e^{−λt}‖p_t*u₀‖²dt`, and
//! the moment-growth threshold `c⁴/(8κ)`.
//!
//! Convolution runs spectrally on the periodic extension of the truncated
//! domain. It is only trusted when the kernel mass that can wrap around the
//! domain is below [`TRUNCATION_MASS`]; [`heat_convolve`] checks this and
//! [`heat_convolve_periodic`] skips the check.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

use crate::model::{Field, Grid, InitKind, InitialData};
use crate::quad::{self, QuadError, Tolerance};
use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("time must be > 0, got {0}")]
    NonPositiveTime(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(
        "domain truncation: kernel mass {mass:e} beyond distance {distance} at scale {scale} exceeds {limit:e}"
    )]
    Truncation { mass: f64, distance: f64, scale: f64, limit: f64 },
    #[error("unsupported initial profile {0:?}")]
    Unsupported(InitKind),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Largest kernel mass allowed to wrap around the periodic domain.
pub const TRUNCATION_MASS: f64 = 1e-8;
/// Values below this fraction of the field maximum are ignored when
/// measuring a field's support for the truncation guard.
pub const SUPPORT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelParams {
    pub kappa: f64,
}

impl KernelParams {
    pub fn new(kappa: f64) -> Result<Self, KernelError> {
        check_kappa(kappa)?;
        Ok(Self { kappa })
    }
}

fn check_kappa(kappa: f64) -> Result<(), KernelError> {
    if kappa.is_finite() && kappa > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("kappa must be > 0, got {kappa}")))
    }
}

fn check_time(t: f64) -> Result<(), KernelError> {
    if t.is_finite() && t > 0.0 {
        Ok(())
    } else {
        Err(KernelError::NonPositiveTime(t))
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), KernelError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(KernelError::InvalidParameter(format!("{name} must be > 0, got {v}")))
    }
}

#[inline]
pub(crate) fn heat_kernel_unchecked(t: f64, z: f64, kappa: f64) -> f64 {
    let s = 4.0 * kappa * t;
    (-z * z / s).exp() / (PI * s).sqrt()
}

pub fn heat_kernel(t: f64, z: f64, kappa: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    check_kappa(kappa)?;
    Ok(heat_kernel_unchecked(t, z, kappa))
}

/// `∫p_t(z)² dz = (8πκt)^{-1/2}`.
pub fn kernel_l2_norm_sq(t: f64, kappa: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    check_kappa(kappa)?;
    Ok(1.0 / (8.0 * PI * kappa * t).sqrt())
}

/// `∫₀^∞ e^{−λt} ∫p_t² dz dt = 1/(2√(2κλ))`.
pub fn laplace_kernel_l2(lambda: f64, kappa: f64) -> Result<f64, KernelError> {
    check_positive("lambda", lambda)?;
    check_kappa(kappa)?;
    Ok(1.0 / (2.0 * (2.0 * kappa * lambda).sqrt()))
}

/// Moment-growth threshold `coeff⁴/(8κ)`.
pub fn lyapunov_threshold(coeff: f64, kappa: f64) -> Result<f64, KernelError> {
    check_positive("coeff", coeff)?;
    check_kappa(kappa)?;
    Ok(coeff.powi(4) / (8.0 * kappa))
}

/// Kernel mass that can wrap around the periodic domain when smoothing `f`
/// for time `t`, together with the distance it is measured over.
pub fn wraparound_mass(f: &Field, t: f64, kappa: f64) -> (f64, f64) {
    let sup = f.sup_abs();
    let radius = if sup == 0.0 {
        0.0
    } else {
        let floor = SUPPORT_FLOOR * sup;
        (0..f.nx())
            .filter(|&i| f.values[i].abs() > floor)
            .map(|i| f.x(i).abs())
            .fold(0.0, f64::max)
    };
    let distance = (f.x_max() - radius).max(0.0);
    let scale = (4.0 * kappa * t).sqrt();
    (libm::erfc(distance / scale), distance)
}

/// Smooths `f` with the heat kernel for time `t`, checking the truncation
/// guard first.
pub fn heat_convolve(f: &Field, t: f64, kappa: f64) -> Result<Field, KernelError> {
    check_time(t)?;
    check_kappa(kappa)?;
    let (mass, distance) = wraparound_mass(f, t, kappa);
    if mass > TRUNCATION_MASS {
        return Err(KernelError::Truncation {
            mass,
            distance,
            scale: (4.0 * kappa * t).sqrt(),
            limit: TRUNCATION_MASS,
        });
    }
    heat_convolve_periodic(f, t, kappa)
}

/// Spectral smoothing on the periodic extension with no truncation guard.
pub fn heat_convolve_periodic(f: &Field, t: f64, kappa: f64) -> Result<Field, KernelError> {
    check_time(t)?;
    check_kappa(kappa)?;
    if !f.is_finite() {
        return Err(KernelError::InvalidParameter("field has non-finite values".into()));
    }
    let spectral = Spectral::new(f.nx(), 2.0 * f.x_max());
    let values = spectral.apply_symbol(&f.values, |k| (-kappa * t * k * k).exp());
    Ok(Field { t: f.t + t, values, dx: f.dx })
}

/// Standard normal upper tail.
#[inline]
fn normal_q(w: f64) -> f64 {
    0.5 * libm::erfc(w / std::f64::consts::SQRT_2)
}

#[inline]
fn normal_pdf(w: f64) -> f64 {
    (-0.5 * w * w).exp() / (2.0 * PI).sqrt()
}

/// `ψ(−z) = ∫_{−∞}^{−z} Φ(w/s) dw` for the Gaussian with standard deviation `s`.
#[inline]
fn ramp_smoothed_neg(z: f64, s: f64) -> f64 {
    let w = z / s;
    s * (normal_pdf(w) - w * normal_q(w))
}

/// `(p_t*u₀)(x)` evaluated directly: closed form for the triangle and the
/// delta, adaptive quadrature over `[−K, K]` for the smooth bump.
pub fn smoothed_initial(init: &InitialData, t: f64, kappa: f64, x: f64) -> Result<f64, KernelError> {
    check_time(t)?;
    check_kappa(kappa)?;
    init.validate().map_err(|e| KernelError::InvalidParameter(e.to_string()))?;
    let (h, k) = (init.height, init.k);
    match init.kind {
        InitKind::Triangle => {
            // Triangle = (h/K)[ramp(y+K) − 2 ramp(y) + ramp(y−K)]; the
            // mirrored form keeps relative accuracy in the tails.
            let s = (2.0 * kappa * t).sqrt();
            let x = x.abs();
            let v = ramp_smoothed_neg(x + k, s) - 2.0 * ramp_smoothed_neg(x, s) + ramp_smoothed_neg(x - k, s);
            Ok((h / k * v).max(0.0))
        }
        InitKind::DiscreteDelta => Ok(h * heat_kernel_unchecked(t, x, kappa)),
        InitKind::SmoothBump => {
            let r = quad::integrate(
                |y| heat_kernel_unchecked(t, x - y, kappa) * init.profile(y),
                -k,
                k,
                Tolerance { abs: 1e-15, rel: 1e-12 },
                2000,
            )?;
            Ok(r.value)
        }
    }
}

/// Grid samples of `p_t*u₀`. The bump goes through the guarded spectral
/// convolution; the other profiles use [`smoothed_initial`].
pub fn smoothed_initial_field(init: &InitialData, t: f64, kappa: f64, grid: &Grid) -> Result<Field, KernelError> {
    match init.kind {
        InitKind::SmoothBump => {
            let u0 = crate::model::make_initial_data(init, grid)
                .map_err(|e| KernelError::InvalidParameter(e.to_string()))?;
            let mut f = heat_convolve(&u0, t, kappa)?;
            f.values[0] = 0.0;
            Ok(f)
        }
        _ => {
            let mut values = vec![0.0; grid.nx];
            for (i, v) in values.iter_mut().enumerate().skip(1) {
                *v = smoothed_initial(init, t, kappa, grid.x(i))?;
            }
            Ok(Field { t, values, dx: grid.dx() })
        }
    }
}

const BUMP_PANELS: usize = 64;
const BUMP_NODES: usize = 16;
/// Frequencies beyond this are treated as zero for the unit bump transform.
pub const BUMP_OMEGA_MAX: f64 = 200.0;
const BUMP_TABLE_STEP: f64 = 0.01;

struct BumpTable {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    values: Vec<f64>,
    transform: Vec<f64>,
}

fn unit_bump(x: f64) -> f64 {
    let r2 = x * x;
    if r2 >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - r2)).exp()
    }
}

fn bump_table() -> &'static BumpTable {
    static TABLE: OnceLock<BumpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let (gx, gw) = quad::gauss_legendre(BUMP_NODES);
        let h = 2.0 / BUMP_PANELS as f64;
        let mut nodes = Vec::with_capacity(BUMP_PANELS * BUMP_NODES);
        let mut weights = Vec::with_capacity(BUMP_PANELS * BUMP_NODES);
        for p in 0..BUMP_PANELS {
            let c = -1.0 + (p as f64 + 0.5) * h;
            for (x, w) in gx.iter().zip(&gw) {
                nodes.push(c + 0.5 * h * x);
                weights.push(0.5 * h * w);
            }
        }
        let values: Vec<f64> = nodes.iter().map(|&x| unit_bump(x)).collect();
        let n_tab = (BUMP_OMEGA_MAX / BUMP_TABLE_STEP).round() as usize + 4;
        let transform = (0..n_tab)
            .map(|j| {
                let omega = j as f64 * BUMP_TABLE_STEP;
                nodes
                    .iter()
                    .zip(&weights)
                    .zip(&values)
                    .map(|((x, w), b)| w * b * (omega * x).cos())
                    .sum()
            })
            .collect();
        BumpTable { nodes, weights, values, transform }
    })
}

/// `∫B(x)^p dx` for the unit bump `B(x) = exp(1 − 1/(1−x²))` on (−1, 1).
pub fn unit_bump_moment(p: i32) -> f64 {
    let t = bump_table();
    t.weights.iter().zip(&t.values).map(|(w, b)| w * b.powi(p)).sum()
}

/// Fourier transform of the unit bump, `∫B(x) cos(ωx) dx`, from the cached
/// table with 4-point Lagrange interpolation.
pub fn unit_bump_transform(omega: f64) -> f64 {
    let omega = omega.abs();
    if omega >= BUMP_OMEGA_MAX {
        return 0.0;
    }
    let t = bump_table();
    let pos = omega / BUMP_TABLE_STEP;
    let j = (pos.floor() as usize).max(1);
    let s = pos - j as f64;
    let y = |i: usize| t.transform[i];
    let (ym, y0, y1, y2) = (y(j - 1), y(j), y(j + 1), y(j + 2));
    // Lagrange on nodes -1, 0, 1, 2.
    -s * (s - 1.0) * (s - 2.0) / 6.0 * ym + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * y0
        - (s + 1.0) * s * (s - 2.0) / 2.0 * y1
        + (s + 1.0) * s * (s - 1.0) / 6.0 * y2
}

/// Direct (uncached) evaluation of the unit bump transform.
pub fn unit_bump_transform_direct(omega: f64) -> f64 {
    let t = bump_table();
    t.nodes
        .iter()
        .zip(&t.weights)
        .zip(&t.values)
        .map(|((x, w), b)| w * b * (omega * x).cos())
        .sum()
}

/// Fourier transform `û₀(ξ) = ∫u₀(x)e^{−iξx}dx` (real: the profiles are even).
pub fn fourier_transform(init: &InitialData, xi: f64) -> Result<f64, KernelError> {
    let (h, k) = (init.height, init.k);
    match init.kind {
        InitKind::Triangle => {
            let z = 0.5 * xi * k;
            let sinc = if z.abs() < 1e-8 { 1.0 - z * z / 6.0 } else { z.sin() / z };
            Ok(h * k * sinc * sinc)
        }
        InitKind::SmoothBump => Ok(h * k * unit_bump_transform(k * xi)),
        InitKind::DiscreteDelta => Err(KernelError::Unsupported(InitKind::DiscreteDelta)),
    }
}

/// `(1/2π)∫_ℝ |û(ξ)|²/(λ+2κξ²) dξ` for an even transform supplied as a
/// closure, integrated over `[0, xi_max]` split at `breaks`.
pub fn plancherel_laplace_with<F: Fn(f64) -> f64>(
    transform: F,
    lambda: f64,
    kappa: f64,
    breaks: &[f64],
) -> Result<f64, KernelError> {
    check_positive("lambda", lambda)?;
    check_kappa(kappa)?;
    let integrand = |xi: f64| {
        let u = transform(xi);
        u * u / (lambda + 2.0 * kappa * xi * xi)
    };
    let r = quad::integrate_pieces(integrand, breaks, Tolerance { abs: 1e-14, rel: 1e-12 }, 4000)?;
    Ok(r.value / PI)
}

/// Laplace transform in time of `‖p_t*u₀‖²_{L²}` via Plancherel:
/// `(1/2π)∫_ℝ |û₀(ξ)|²/(λ+2κξ²) dξ`.
pub fn plancherel_laplace(init: &InitialData, lambda: f64, kappa: f64) -> Result<f64, KernelError> {
    init.validate().map_err(|e| KernelError::InvalidParameter(e.to_string()))?;
    let k = init.k;
    let breaks: Vec<f64> = match init.kind {
        InitKind::Triangle => {
            // Zeros of the squared sinc at 2πj/K. Tail beyond Ξ is bounded by
            // 16h²/(10πκK²Ξ⁵); stop once that is negligible.
            let h = init.height;
            let mut xi_max = 2.0 * PI / k;
            while 16.0 * h * h / (10.0 * PI * kappa * k * k * xi_max.powi(5)) > 1e-15 {
                xi_max += 2.0 * PI / k;
            }
            let n = (xi_max * k / (2.0 * PI)).round() as usize;
            (0..=n).map(|j| 2.0 * PI * j as f64 / k).collect()
        }
        InitKind::SmoothBump => {
            let n = 64;
            (0..=n).map(|j| BUMP_OMEGA_MAX / k * j as f64 / n as f64).collect()
        }
        InitKind::DiscreteDelta => return Err(KernelError::Unsupported(InitKind::DiscreteDelta)),
    };
    plancherel_laplace_with(|xi| fourier_transform(init, xi).unwrap_or(0.0), lambda, kappa, &breaks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::make_initial_data;
    use crate::quad::integrate;

    #[test]
    fn kernel_value_and_symmetry() {
        let v = heat_kernel(1.0, 0.0, 1.0).unwrap();
        assert!((v - 0.282_094_791_773_878_1).abs() < 1e-15);
        for &(t, k, z) in &[(0.3, 2.0, 1.7), (5.0, 0.1, -0.4)] {
            assert_eq!(heat_kernel(t, z, k).unwrap(), heat_kernel(t, -z, k).unwrap());
        }
        assert!(matches!(heat_kernel(0.0, 1.0, 1.0), Err(KernelError::NonPositiveTime(_))));
        assert!(heat_kernel(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kernel_unit_mass_by_quadrature() {
        for &(t, kappa) in &[(1.0f64, 1.0f64), (0.01, 0.5), (3.0, 2.0)] {
            let s = (2.0 * kappa * t).sqrt();
            let r = integrate(|z| heat_kernel_unchecked(t, z, kappa), -12.0 * s, 12.0 * s, quad::DEFAULT_TOL, 500)
                .unwrap();
            assert!((r.value - 1.0).abs() < 1e-10, "t={t} kappa={kappa}: {}", r.value);
        }
        let r = integrate(|z| heat_kernel_unchecked(1.0, z, 1.0), -20.0, 20.0, quad::DEFAULT_TOL, 500).unwrap();
        assert!((r.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kernel_l2_values() {
        let oracle = |t: f64, kappa: f64| {
            integrate(|z| heat_kernel_unchecked(t, z, kappa).powi(2), -20.0, 20.0, quad::DEFAULT_TOL, 500)
                .unwrap()
                .value
        };
        let a = kernel_l2_norm_sq(1.0, 1.0).unwrap();
        assert!((a - 0.199_471_140_2).abs() < 1e-9);
        assert!((a - oracle(1.0, 1.0)).abs() < 1e-8 * a);
        let b = kernel_l2_norm_sq(0.25, 2.0).unwrap();
        assert!((b - 0.282_094_791_8).abs() < 1e-9);
        assert!((b - oracle(0.25, 2.0)).abs() < 1e-8 * b);
        let c = kernel_l2_norm_sq(4.0, 1.3).unwrap();
        assert!((c - kernel_l2_norm_sq(1.0, 1.3).unwrap() / 2.0).abs() < 1e-16);
    }

    #[test]
    fn laplace_kernel_values() {
        assert!((laplace_kernel_l2(1.0, 1.0).unwrap() - 0.353_553_390_593_273_8).abs() < 1e-15);
        assert_eq!(laplace_kernel_l2(0.125, 1.0).unwrap(), 1.0);
        // Time-domain oracle with t = s² removing the t^{-1/2} singularity.
        let (lambda, kappa) = (2.0, 0.5);
        let r = integrate(
            |s: f64| 2.0 * s * (-lambda * s * s).exp() / (8.0 * PI * kappa * s * s).sqrt(),
            0.0,
            200f64.sqrt(),
            quad::DEFAULT_TOL,
            500,
        )
        .unwrap();
        let exact = laplace_kernel_l2(lambda, kappa).unwrap();
        assert!((r.value - exact).abs() < 1e-6);
    }

    #[test]
    fn thresholds() {
        assert_eq!(lyapunov_threshold(1.0, 1.0).unwrap(), 0.125);
        assert_eq!(lyapunov_threshold(2.0, 1.0).unwrap(), 2.0);
        assert_eq!(lyapunov_threshold(1.0, 2.0).unwrap(), 0.0625);
        assert!(lyapunov_threshold(0.0, 1.0).is_err());
    }

    #[test]
    fn convolve_constant_and_identity() {
        let grid = Grid::new(5.0, 256).unwrap();
        let c = Field::new(0.0, vec![2.5; grid.nx], grid.dx());
        assert!(matches!(heat_convolve(&c, 1.0, 1.0), Err(KernelError::Truncation { .. })));
        let out = heat_convolve_periodic(&c, 1.0, 1.0).unwrap();
        assert!(out.values.iter().all(|v| (v - 2.5).abs() < 1e-13));

        let grid = Grid::new(8.0, 256).unwrap();
        let smooth: Vec<f64> = grid.xs().iter().map(|x| (-x * x).exp()).collect();
        let f = Field::new(0.0, smooth, grid.dx());
        let g = heat_convolve(&f, 1e-6, 1.0).unwrap();
        let err = f.values.iter().zip(&g.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn convolve_triangle_matches_quadrature() {
        // Kinks sit on grid nodes (dx = 2^-10); aliasing then costs ~0.01·dx².
        let grid = Grid::new(16.0, 1 << 15).unwrap();
        let init = InitialData::triangle(1.0, 1.0);
        let u0 = make_initial_data(&init, &grid).unwrap();
        let out = heat_convolve(&u0, 1.0, 1.0).unwrap();
        let direct = integrate(|y| heat_kernel_unchecked(1.0, y, 1.0) * (1.0 - y.abs()), -1.0, 1.0, quad::DEFAULT_TOL, 500)
            .unwrap()
            .value;
        let c = grid.origin_index().unwrap();
        assert!((out.values[c] - direct).abs() < 1e-8, "{} vs {direct}", out.values[c]);
        let closed = smoothed_initial(&init, 1.0, 1.0, 0.0).unwrap();
        assert!((closed - direct).abs() < 1e-13);
    }

    #[test]
    fn closed_form_triangle_tails() {
        let init = InitialData::triangle(1.0, 2.0);
        for &x in &[0.3, 2.0, 5.0, 9.0] {
            let direct = integrate(
                |y| heat_kernel_unchecked(0.7, x - y, 1.5) * init.profile(y),
                -1.0,
                1.0,
                Tolerance { abs: 0.0, rel: 1e-13 },
                500,
            )
            .unwrap()
            .value;
            let closed = smoothed_initial(&init, 0.7, 1.5, x).unwrap();
            assert!((closed - direct).abs() <= 1e-10 * direct, "x={x}: {closed} vs {direct}");
        }
    }

    #[test]
    fn semigroup_and_contraction() {
        let grid = Grid::new(20.0, 1024).unwrap();
        let init = InitialData::smooth_bump(1.0, 1.0);
        let u0 = make_initial_data(&init, &grid).unwrap();
        let a = heat_convolve(&heat_convolve(&u0, 0.5, 1.0).unwrap(), 1.5, 1.0).unwrap();
        let b = heat_convolve(&u0, 2.0, 1.0).unwrap();
        let err = a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
        assert!(b.l2_norm_sq() <= u0.l2_norm_sq());
    }

    #[test]
    fn bump_transform_cache() {
        for &w in &[0.0, 0.37, 3.3, 17.123, 80.5, 150.0] {
            let a = unit_bump_transform(w);
            let b = unit_bump_transform_direct(w);
            assert!((a - b).abs() < 1e-10, "omega={w}: {a} vs {b}");
        }
        assert!((unit_bump_transform(0.0) - unit_bump_moment(1)).abs() < 1e-14);
        let direct = integrate(unit_bump, -1.0, 1.0, quad::DEFAULT_TOL, 1000).unwrap().value;
        assert!((unit_bump_moment(1) - direct).abs() < 1e-12);
    }

    #[test]
    fn plancherel_matches_time_domain() {
        // ∫₀^∞ e^{−λt}‖p_t*u₀‖² dt with ‖p_t*u₀‖² = ∫∫u₀(x)u₀(y)p_{2t}(x−y),
        // evaluated for the triangle through the closed-form smoothing.
        let init = InitialData::triangle(1.0, 1.0);
        let (lambda, kappa) = (1.0, 1.0);
        let norm_sq = |t: f64| {
            integrate(
                |x| {
                    let v = smoothed_initial(&init, t, kappa, x).unwrap();
                    v * v
                },
                -1.0 - 12.0 * (2.0 * kappa * t).sqrt(),
                1.0 + 12.0 * (2.0 * kappa * t).sqrt(),
                Tolerance { abs: 1e-13, rel: 1e-11 },
                1000,
            )
            .unwrap()
            .value
        };
        let time = integrate(|t| (-lambda * t).exp() * norm_sq(t.max(1e-12)), 0.0, 40.0, Tolerance { abs: 1e-10, rel: 1e-9 }, 1000)
            .unwrap()
            .value;
        let freq = plancherel_laplace(&init, lambda, kappa).unwrap();
        assert!((time - freq).abs() < 1e-7 * freq, "{time} vs {freq}");
    }

    #[test]
    fn plancherel_properties() {
        let init = InitialData::triangle(1.0, 1.0);
        let a = plancherel_laplace(&init, 1.0, 1.0).unwrap();
        let b = plancherel_laplace(&init, 2.0, 1.0).unwrap();
        assert!(a > 0.0 && b > 0.0 && a > b);
        let zero = plancherel_laplace_with(|_| 0.0, 1.0, 1.0, &[0.0, 10.0]).unwrap();
        assert_eq!(zero, 0.0);
        let bump = plancherel_laplace(&InitialData::smooth_bump(1.0, 1.0), 1.0, 1.0).unwrap();
        assert!(bump > 0.0);
        assert!(matches!(
            plancherel_laplace(&InitialData::discrete_delta(1.0, 1.0), 1.0, 1.0),
            Err(KernelError::Unsupported(_))
        ));
        // λ → ∞ limit: λ·value → ‖u₀‖²/… with ‖u₀‖² = 2/3 for the unit triangle.
        let big = plancherel_laplace(&init, 1e6, 1.0).unwrap();
        assert!((big * 1e6 - 2.0 / 3.0).abs() < 1e-3);
    }
}
