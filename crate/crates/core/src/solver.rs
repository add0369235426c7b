//! Explicit Euler–Maruyama time stepping on `[−x_max, x_max]` with
//! Dirichlet-zero boundaries, plus a pathwise Picard iteration of the mild
//! form driven by the same noise.
//!
//! Grid convention: node `i` sits at `−x_max + i·dx` for `i < nx`. Node 0
//! is the left boundary and stays at zero; the right boundary is the
//! implicit node `nx` at `+x_max`.

use serde::Serialize;
use thiserror::Error;

use crate::kernel::{self, KernelError};
use crate::model::{make_initial_data, make_sigma, Field, ModelError, Sigma, SimConfig};
use crate::noise::NoiseStream;
use crate::spectral::Spectral;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error(transparent)]
    Config(#[from] ModelError),
    #[error("non-finite value in replicate {replicate} at t = {t}")]
    NonFinite { replicate: u64, t: f64 },
    #[error("noise array has length {got}, expected {expected}")]
    NoiseLength { got: usize, expected: usize },
    #[error("size cap exceeded: {0}")]
    SizeCap(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Steps between finiteness checks of the running field.
const FINITE_CHECK_EVERY: usize = 64;
/// Fraction of the half-width treated as the boundary layer.
const BOUNDARY_LAYER: f64 = 0.1;

pub const PICARD_MAX_NX: usize = 512;
pub const PICARD_MAX_T: f64 = 2.0;

/// One Euler–Maruyama step from `cur` into `next`.
#[inline]
fn euler_step(cur: &[f64], xi: &[f64], next: &mut [f64], r: f64, sigma: &Sigma, clip: bool) {
    let n = cur.len();
    next[0] = 0.0;
    if n == 1 {
        return;
    }
    let a = 1.0 - 2.0 * r;
    let neighbor = |i: usize| cur[i - 1] + if i + 1 < n { cur[i + 1] } else { 0.0 };
    match sigma.linear_coefficient() {
        Some(lambda) => {
            // Interior loop without the boundary branch.
            for i in 1..n - 1 {
                let u = cur[i];
                next[i] = a * u + r * (cur[i - 1] + cur[i + 1]) + lambda * u * xi[i];
            }
            let u = cur[n - 1];
            next[n - 1] = a * u + r * neighbor(n - 1) + lambda * u * xi[n - 1];
        }
        None => {
            for i in 1..n {
                let u = cur[i];
                next[i] = a * u + r * neighbor(i) + sigma.eval(u) * xi[i];
            }
        }
    }
    if clip {
        for v in next.iter_mut() {
            *v = v.max(0.0);
        }
    }
}

/// Single explicit step of the scheme with noise increments `xi`
/// (variance `dt/dx` per cell).
pub fn step_explicit(u: &Field, xi: &[f64], cfg: &SimConfig) -> Result<Field, SolverError> {
    cfg.validate()?;
    let sigma = make_sigma(&cfg.sigma)?;
    if xi.len() != cfg.nx || u.nx() != cfg.nx {
        return Err(SolverError::NoiseLength { got: xi.len(), expected: cfg.nx });
    }
    let dx = cfg.dx();
    let r = cfg.kappa * cfg.dt / (dx * dx);
    let mut next = vec![0.0; cfg.nx];
    euler_step(&u.values, xi, &mut next, r, &sigma, cfg.clip_negative);
    let t = u.t + cfg.dt;
    if next.iter().any(|v| !v.is_finite()) {
        return Err(SolverError::NonFinite { replicate: 0, t });
    }
    Ok(Field { t, values: next, dx })
}

/// `∫u⁻ / ∫|u|` on the grid (0 for the zero field).
pub fn negative_mass_fraction(values: &[f64]) -> f64 {
    let (mut neg, mut abs) = (0.0, 0.0);
    for &v in values {
        abs += v.abs();
        if v < 0.0 {
            neg -= v;
        }
    }
    if abs > 0.0 {
        neg / abs
    } else {
        0.0
    }
}

/// `dx·Σ|u|` over the outer tenth of the domain on each side.
pub fn boundary_mass(field: &Field) -> f64 {
    let edge = (1.0 - BOUNDARY_LAYER) * field.x_max();
    (0..field.nx())
        .filter(|&i| field.x(i).abs() >= edge)
        .map(|i| field.values[i].abs())
        .sum::<f64>()
        * field.dx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    /// Smallest value over all snapshots.
    pub min_value: f64,
    /// `∫u⁻/∫|u|` per snapshot.
    pub negative_mass_fraction: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: SimConfig,
    pub replicate_index: u64,
    pub snapshots: Vec<Field>,
    pub positivity_report: PositivityReport,
    /// [`boundary_mass`] per snapshot.
    pub boundary_mass: Vec<f64>,
}

/// A validated configuration ready to run many replicates.
#[derive(Debug, Clone)]
pub struct PathRunner {
    cfg: SimConfig,
    sigma: Sigma,
    u0: Vec<f64>,
    r: f64,
    dx: f64,
    n_steps: usize,
    snapshot_steps: Vec<usize>,
}

impl PathRunner {
    pub fn new(cfg: &SimConfig) -> Result<Self, SolverError> {
        cfg.validate()?;
        let u0 = make_initial_data(&cfg.init, &cfg.grid())?;
        Self::build(cfg, u0.values)
    }

    /// Runner starting from an arbitrary field instead of `cfg.init`.
    pub fn with_initial(cfg: &SimConfig, u0: &Field) -> Result<Self, SolverError> {
        cfg.validate()?;
        if u0.nx() != cfg.nx {
            return Err(SolverError::NoiseLength { got: u0.nx(), expected: cfg.nx });
        }
        Self::build(cfg, u0.values.clone())
    }

    fn build(cfg: &SimConfig, mut u0: Vec<f64>) -> Result<Self, SolverError> {
        let sigma = make_sigma(&cfg.sigma)?;
        let dx = cfg.dx();
        u0[0] = 0.0;
        Ok(Self {
            cfg: cfg.clone(),
            sigma,
            u0,
            r: cfg.kappa * cfg.dt / (dx * dx),
            dx,
            n_steps: cfg.n_steps(),
            snapshot_steps: cfg.snapshot_steps(),
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn snapshot_times(&self) -> Vec<f64> {
        self.snapshot_steps.iter().map(|&s| s as f64 * self.cfg.dt).collect()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Runs replicate `rep`, calling `observe(snapshot_index, values)` at
    /// every snapshot step.
    pub fn run<F: FnMut(usize, &[f64])>(&self, rep: u64, mut observe: F) -> Result<(), SolverError> {
        let nx = self.cfg.nx;
        let mut cur = self.u0.clone();
        let mut next = vec![0.0; nx];
        let mut xi = vec![0.0; nx];
        let mut stream = NoiseStream::new(self.cfg.seed, rep);
        let quiet = self.sigma.is_zero();
        let mut snap = 0;
        let last = self.snapshot_steps.last().copied().unwrap_or(0).min(self.n_steps);
        let mut emit = |step: usize, values: &[f64], snap: &mut usize| -> Result<(), SolverError> {
            while *snap < self.snapshot_steps.len() && self.snapshot_steps[*snap] == step {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(SolverError::NonFinite { replicate: rep, t: step as f64 * self.cfg.dt });
                }
                observe(*snap, values);
                *snap += 1;
            }
            Ok(())
        };
        emit(0, &cur, &mut snap)?;
        for step in 1..=last {
            if quiet {
                stream.step_counter += 1;
            } else {
                stream.fill_increments(&mut xi, self.cfg.dt, self.dx);
            }
            euler_step(&cur, &xi, &mut next, self.r, &self.sigma, self.cfg.clip_negative);
            std::mem::swap(&mut cur, &mut next);
            if step % FINITE_CHECK_EVERY == 0 && !cur.iter().sum::<f64>().is_finite() {
                return Err(SolverError::NonFinite { replicate: rep, t: step as f64 * self.cfg.dt });
            }
            emit(step, &cur, &mut snap)?;
        }
        Ok(())
    }

    /// Full-field run recording every snapshot.
    pub fn simulate(&self, rep: u64) -> Result<Trajectory, SolverError> {
        let times = self.snapshot_times();
        let mut snapshots = Vec::with_capacity(times.len());
        self.run(rep, |k, values| snapshots.push(Field { t: times[k], values: values.to_vec(), dx: self.dx }))?;
        let min_value = snapshots
            .iter()
            .flat_map(|f| f.values.iter().copied())
            .fold(f64::INFINITY, f64::min);
        let negative_mass_fraction = snapshots.iter().map(|f| negative_mass_fraction(&f.values)).collect();
        let boundary = snapshots.iter().map(boundary_mass).collect();
        Ok(Trajectory {
            config: self.cfg.clone(),
            replicate_index: rep,
            snapshots,
            positivity_report: PositivityReport { min_value, negative_mass_fraction },
            boundary_mass: boundary,
        })
    }
}

/// Simulates replicate `replicate_index` of `cfg`.
pub fn simulate_path(cfg: &SimConfig, replicate_index: u64) -> Result<Trajectory, SolverError> {
    PathRunner::new(cfg)?.simulate(replicate_index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardResult {
    /// `u⁽ⁿ⁾` at `t_end` for `n = 0..=n_iters`.
    pub iterates: Vec<Field>,
    /// `d_n = ‖u⁽ⁿ⁺¹⁾ − u⁽ⁿ⁾‖_{L²}` at `t_end`.
    pub differences: Vec<f64>,
    /// Euler–Maruyama solution on the same noise.
    pub euler: Field,
}

/// Picard iteration of the discrete mild form
/// `u⁽ⁿ⁺¹⁾_t = p_t*u₀ + Σ_{s<t} p_{t−s}*(σ(u⁽ⁿ⁾_s)ΔW_s)` from `u⁽⁰⁾ ≡ u₀`,
/// on the noise increments of the Euler run for the same replicate.
pub fn picard_iterate(cfg: &SimConfig, replicate_index: u64, n_iters: usize) -> Result<PicardResult, SolverError> {
    cfg.validate()?;
    if cfg.nx > PICARD_MAX_NX || cfg.t_end > PICARD_MAX_T {
        return Err(SolverError::SizeCap(format!(
            "picard mode needs nx <= {PICARD_MAX_NX} and t_end <= {PICARD_MAX_T}, got nx = {}, t_end = {}",
            cfg.nx, cfg.t_end
        )));
    }
    let sigma = make_sigma(&cfg.sigma)?;
    let grid = cfg.grid();
    let dx = cfg.dx();
    let (nx, n_steps) = (cfg.nx, cfg.n_steps());
    let u0 = make_initial_data(&cfg.init, &grid)?;

    let mut stream = NoiseStream::new(cfg.seed, replicate_index);
    let noise: Vec<Vec<f64>> = (0..n_steps).map(|_| stream.sample_increments(nx, cfg.dt, dx)).collect();

    // Deterministic part p_{m·dt}*u₀ at every step.
    let mut drift = Vec::with_capacity(n_steps + 1);
    drift.push(u0.values.clone());
    for m in 1..=n_steps {
        drift.push(kernel::heat_convolve(&u0, m as f64 * cfg.dt, cfg.kappa)?.values);
    }

    let spectral = Spectral::new(nx, 2.0 * cfg.x_max);
    let decay: Vec<f64> = spectral
        .wavenumbers()
        .iter()
        .map(|k| (-cfg.kappa * k * k * cfg.dt).exp())
        .collect();

    let mut path: Vec<Vec<f64>> = vec![u0.values.clone(); n_steps + 1];
    let mut iterates = vec![Field { t: cfg.t_end, values: u0.values.clone(), dx }];
    let mut differences = Vec::with_capacity(n_iters);
    for _ in 0..n_iters {
        // v_{m+1} = P_dt(v_m + σ(u_m)ΔW_m), v_0 = 0.
        let mut next_path = Vec::with_capacity(n_steps + 1);
        next_path.push(drift[0].clone());
        let mut v = vec![0.0; nx];
        for m in 0..n_steps {
            let forced: Vec<f64> = v
                .iter()
                .zip(&path[m])
                .zip(&noise[m])
                .map(|((v, &u), w)| v + sigma.eval(u) * w)
                .collect();
            let mut spec = spectral.forward(&forced);
            for (c, d) in spec.iter_mut().zip(&decay) {
                *c *= d;
            }
            v = spectral.inverse_real(spec);
            next_path.push(drift[m + 1].iter().zip(&v).map(|(a, b)| a + b).collect());
        }
        let last = Field { t: cfg.t_end, values: next_path[n_steps].clone(), dx };
        let prev = iterates.last().expect("non-empty");
        let d = last
            .values
            .iter()
            .zip(&prev.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            * dx;
        differences.push(d.sqrt());
        if !last.is_finite() {
            return Err(SolverError::NonFinite { replicate: replicate_index, t: cfg.t_end });
        }
        iterates.push(last);
        path = next_path;
    }

    let mut euler_cfg = cfg.clone();
    euler_cfg.snapshot_times = vec![cfg.t_end];
    let euler = simulate_path(&euler_cfg, replicate_index)?.snapshots.remove(0);
    Ok(PicardResult { iterates, differences, euler })
}
