//! Monte Carlo aggregation and the diagnostics built on moment data:
//! growth-rate fits, spatial decay, effective support, Hölder increments,
//! peak concentration and a numeric check of a slowly-varying integral.
//!
//! Replicates are processed in fixed chunks of [`CHUNK`] and the chunk
//! accumulators are merged in chunk order, so results do not depend on the
//! number of worker threads.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Field, SimConfig};
use crate::oracle::{self, MomentField, OracleError};
use crate::quad::{self, QuadError, Tolerance};
use crate::solver::{negative_mass_fraction, PathRunner, SolverError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("need at least {needed} replicates, got {got}")]
    TooFewReplicates { needed: u64, got: u64 },
    #[error("{failed} of {total} replicates failed (limit 1%); first failure: {first}")]
    ReplicateFailures { failed: u64, total: u64, first: String },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("non-positive estimate {value} at t = {t}")]
    NonPositive { t: f64, value: f64 },
    #[error("fitted slope {0} is not negative")]
    NonNegativeSlope(f64),
    #[error("radius {radius} reaches the domain edge {x_max}")]
    Truncation { radius: f64, x_max: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Replicates per accumulation chunk.
pub const CHUNK: u64 = 32;
/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_FRACTION: f64 = 0.01;
/// Profile values below this fraction of the maximum are treated as
/// numerical noise by the fits.
pub const USABLE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentKind {
    /// `max_x |u_t(x)|²`.
    SupSq,
    /// `dx·Σ|u_t(x)|²`.
    L2Sq,
    /// `|u_t(x)|ᵏ` at every grid point.
    Pointwise(u32),
}

impl MomentKind {
    pub fn label(&self) -> String {
        match self {
            MomentKind::SupSq => "sup_sq".into(),
            MomentKind::L2Sq => "l2_sq".into(),
            MomentKind::Pointwise(k) => format!("pointwise_{k}"),
        }
    }
}

/// Per-time mean and standard error of a scalar moment functional.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub kind: MomentKind,
    pub k: Option<u32>,
    pub estimates: Vec<f64>,
    pub stderrs: Vec<f64>,
    pub n_replicates: u64,
}

impl MomentSeries {
    /// Series from exact values (zero standard errors).
    pub fn exact(kind: MomentKind, times: Vec<f64>, estimates: Vec<f64>) -> Self {
        let stderrs = vec![0.0; times.len()];
        let k = match kind {
            MomentKind::Pointwise(k) => Some(k),
            _ => None,
        };
        Self { times, kind, k, estimates, stderrs, n_replicates: 0 }
    }
}

/// Per-time, per-point `E|u_t(x)|ᵏ` with standard errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSeries {
    pub times: Vec<f64>,
    pub k: u32,
    pub x: Vec<f64>,
    pub estimates: Vec<Vec<f64>>,
    pub stderrs: Vec<Vec<f64>>,
    pub n_replicates: u64,
}

impl ProfileSeries {
    /// Time series at grid index `i`.
    pub fn at_index(&self, i: usize) -> MomentSeries {
        MomentSeries {
            times: self.times.clone(),
            kind: MomentKind::Pointwise(self.k),
            k: Some(self.k),
            estimates: self.estimates.iter().map(|e| e[i]).collect(),
            stderrs: self.stderrs.iter().map(|e| e[i]).collect(),
            n_replicates: self.n_replicates,
        }
    }

    /// `max_x E|u_t(x)|ᵏ` per time (standard error of the maximizing point).
    pub fn sup_over_x(&self) -> MomentSeries {
        let mut estimates = Vec::with_capacity(self.times.len());
        let mut stderrs = Vec::with_capacity(self.times.len());
        for (e, s) in self.estimates.iter().zip(&self.stderrs) {
            let (i, v) = e.iter().enumerate().fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
            estimates.push(v);
            stderrs.push(s[i]);
        }
        MomentSeries {
            times: self.times.clone(),
            kind: MomentKind::Pointwise(self.k),
            k: Some(self.k),
            estimates,
            stderrs,
            n_replicates: self.n_replicates,
        }
    }
}

/// Streaming mean and centered sum of squares (Welford, merged with Chan's rule).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Welford {
    pub n: f64,
    pub mean: f64,
    pub m2: f64,
}

impl Welford {
    #[inline]
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    pub fn merge(&mut self, other: &Welford) {
        if other.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n / n;
        self.m2 += other.m2 + d * d * self.n * other.n / n;
        self.n = n;
    }

    /// `s/√n`; for the sample mean this equals the jackknife standard error.
    pub fn stderr(&self) -> f64 {
        if self.n < 2.0 {
            0.0
        } else {
            (self.m2 / (self.n - 1.0) / self.n).sqrt()
        }
    }
}

/// Pairwise (cascade) sum, insensitive to summation order at the 1e-15 level.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 16 {
        return values.iter().sum();
    }
    let (a, b) = values.split_at(values.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and `s/√n` using pairwise summation.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    if samples.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(samples) / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = samples.iter().map(|x| (x - mean) * (x - mean)).collect();
    (mean, (pairwise_sum(&dev) / (n - 1.0) / n).sqrt())
}

/// Delete-one jackknife: returns `(statistic on all samples, stderr)`.
pub fn jackknife<S: Fn(&[f64]) -> f64>(samples: &[f64], stat: S) -> (f64, f64) {
    jackknife_grouped(samples, samples.len(), stat)
}

/// Delete-a-group jackknife with `groups` contiguous groups.
pub fn jackknife_grouped<S: Fn(&[f64]) -> f64>(samples: &[f64], groups: usize, stat: S) -> (f64, f64) {
    let n = samples.len();
    let full = stat(samples);
    let g = groups.clamp(1, n.max(1));
    if n < 2 || g < 2 {
        return (full, 0.0);
    }
    let bounds: Vec<usize> = (0..=g).map(|j| j * n / g).collect();
    let mut buf = Vec::with_capacity(n);
    let leave_out: Vec<f64> = (0..g)
        .map(|j| {
            buf.clear();
            buf.extend_from_slice(&samples[..bounds[j]]);
            buf.extend_from_slice(&samples[bounds[j + 1]..]);
            stat(&buf)
        })
        .collect();
    let mean = leave_out.iter().sum::<f64>() / g as f64;
    let var = leave_out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() * (g as f64 - 1.0) / g as f64;
    (full, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivitySummary {
    /// Largest `∫u⁻/∫|u|` over replicates, per snapshot.
    pub max_negative_mass_fraction: Vec<f64>,
    /// Mean `∫u⁻/∫|u|` over replicates, per snapshot.
    pub mean_negative_mass_fraction: Vec<f64>,
    pub min_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McResult {
    pub times: Vec<f64>,
    pub series: Vec<MomentSeries>,
    pub profiles: Vec<ProfileSeries>,
    pub n_replicates: u64,
    pub failures: u64,
    pub positivity: PositivitySummary,
}

impl McResult {
    pub fn series(&self, kind: MomentKind) -> Option<&MomentSeries> {
        self.series.iter().find(|s| s.kind == kind)
    }

    pub fn profile(&self, k: u32) -> Option<&ProfileSeries> {
        self.profiles.iter().find(|p| p.k == k)
    }
}

#[derive(Debug, Clone)]
struct ChunkAcc {
    scalars: Vec<Vec<Welford>>,
    profiles: Vec<Vec<Vec<Welford>>>,
    neg_max: Vec<f64>,
    neg_sum: Vec<f64>,
    min_value: f64,
    ok: u64,
    failures: u64,
    first_failure: Option<String>,
}

impl ChunkAcc {
    fn new(n_scalar: usize, n_profile: usize, n_snap: usize, nx: usize) -> Self {
        Self {
            scalars: vec![vec![Welford::default(); n_snap]; n_scalar],
            profiles: vec![vec![vec![Welford::default(); nx]; n_snap]; n_profile],
            neg_max: vec![0.0; n_snap],
            neg_sum: vec![0.0; n_snap],
            min_value: f64::INFINITY,
            ok: 0,
            failures: 0,
            first_failure: None,
        }
    }

    fn merge(&mut self, other: &ChunkAcc) {
        for (a, b) in self.scalars.iter_mut().zip(&other.scalars) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        for (a, b) in self.profiles.iter_mut().zip(&other.profiles) {
            for (xs, ys) in a.iter_mut().zip(b) {
                for (x, y) in xs.iter_mut().zip(ys) {
                    x.merge(y);
                }
            }
        }
        for i in 0..self.neg_max.len() {
            self.neg_max[i] = self.neg_max[i].max(other.neg_max[i]);
            self.neg_sum[i] += other.neg_sum[i];
        }
        self.min_value = self.min_value.min(other.min_value);
        self.ok += other.ok;
        self.failures += other.failures;
        if self.first_failure.is_none() {
            self.first_failure = other.first_failure.clone();
        }
    }
}

/// Monte Carlo moments of the Euler–Maruyama solution at the snapshot
/// times of `cfg`, over replicates `0..n_reps`.
pub fn mc_moments(cfg: &SimConfig, n_reps: u64, kinds: &[MomentKind]) -> Result<McResult, EstimatorError> {
    if n_reps < 2 {
        return Err(EstimatorError::TooFewReplicates { needed: 2, got: n_reps });
    }
    let runner = PathRunner::new(cfg)?;
    let times = runner.snapshot_times();
    let n_snap = times.len();
    let nx = cfg.nx;
    let dx = runner.dx();
    let scalar_kinds: Vec<MomentKind> = kinds.iter().copied().filter(|k| !matches!(k, MomentKind::Pointwise(_))).collect();
    let profile_orders: Vec<u32> = kinds
        .iter()
        .filter_map(|k| if let MomentKind::Pointwise(p) = k { Some(*p) } else { None })
        .collect();

    let n_chunks = n_reps.div_ceil(CHUNK);
    let chunks: Vec<ChunkAcc> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut acc = ChunkAcc::new(scalar_kinds.len(), profile_orders.len(), n_snap, nx);
            let mut rep_scalars = vec![vec![0.0; n_snap]; scalar_kinds.len()];
            let mut rep_profiles = vec![vec![vec![0.0; nx]; n_snap]; profile_orders.len()];
            let mut rep_neg = vec![0.0; n_snap];
            let mut rep_min;
            for rep in c * CHUNK..((c + 1) * CHUNK).min(n_reps) {
                rep_min = f64::INFINITY;
                let outcome = runner.run(rep, |s, values| {
                    for (j, kind) in scalar_kinds.iter().enumerate() {
                        rep_scalars[j][s] = match kind {
                            MomentKind::SupSq => values.iter().fold(0.0f64, |m, v| m.max(v * v)),
                            MomentKind::L2Sq => values.iter().map(|v| v * v).sum::<f64>() * dx,
                            MomentKind::Pointwise(_) => unreachable!(),
                        };
                    }
                    for (j, &p) in profile_orders.iter().enumerate() {
                        for (dst, v) in rep_profiles[j][s].iter_mut().zip(values) {
                            *dst = v.abs().powi(p as i32);
                        }
                    }
                    rep_neg[s] = negative_mass_fraction(values);
                    rep_min = values.iter().copied().fold(rep_min, f64::min);
                });
                match outcome {
                    Ok(()) => {
                        for (a, r) in acc.scalars.iter_mut().zip(&rep_scalars) {
                            for (w, &v) in a.iter_mut().zip(r) {
                                w.push(v);
                            }
                        }
                        for (a, r) in acc.profiles.iter_mut().zip(&rep_profiles) {
                            for (ws, vs) in a.iter_mut().zip(r) {
                                for (w, &v) in ws.iter_mut().zip(vs) {
                                    w.push(v);
                                }
                            }
                        }
                        for s in 0..n_snap {
                            acc.neg_max[s] = acc.neg_max[s].max(rep_neg[s]);
                            acc.neg_sum[s] += rep_neg[s];
                        }
                        acc.min_value = acc.min_value.min(rep_min);
                        acc.ok += 1;
                    }
                    Err(e) => {
                        acc.failures += 1;
                        if acc.first_failure.is_none() {
                            acc.first_failure = Some(e.to_string());
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let mut total = ChunkAcc::new(scalar_kinds.len(), profile_orders.len(), n_snap, nx);
    for c in &chunks {
        total.merge(c);
    }
    if total.failures as f64 > MAX_FAILURE_FRACTION * n_reps as f64 {
        return Err(EstimatorError::ReplicateFailures {
            failed: total.failures,
            total: n_reps,
            first: total.first_failure.unwrap_or_default(),
        });
    }
    if total.ok < 2 {
        return Err(EstimatorError::TooFewReplicates { needed: 2, got: total.ok });
    }
    let series = scalar_kinds
        .iter()
        .zip(&total.scalars)
        .map(|(&kind, ws)| MomentSeries {
            times: times.clone(),
            kind,
            k: None,
            estimates: ws.iter().map(|w| w.mean).collect(),
            stderrs: ws.iter().map(Welford::stderr).collect(),
            n_replicates: total.ok,
        })
        .collect();
    let grid = cfg.grid();
    let profiles = profile_orders
        .iter()
        .zip(&total.profiles)
        .map(|(&k, snaps)| ProfileSeries {
            times: times.clone(),
            k,
            x: grid.xs(),
            estimates: snaps.iter().map(|ws| ws.iter().map(|w| w.mean).collect()).collect(),
            stderrs: snaps.iter().map(|ws| ws.iter().map(Welford::stderr).collect()).collect(),
            n_replicates: total.ok,
        })
        .collect();
    let ok = total.ok as f64;
    Ok(McResult {
        times,
        series,
        profiles,
        n_replicates: total.ok,
        failures: total.failures,
        positivity: PositivitySummary {
            max_negative_mass_fraction: total.neg_max,
            mean_negative_mass_fraction: total.neg_sum.iter().map(|s| s / ok).collect(),
            min_value: total.min_value,
        },
    })
}

/// `u_t(x_i)` for every replicate at snapshot `snapshot`, in replicate order.
pub fn mc_point_samples(cfg: &SimConfig, n_reps: u64, index: usize, snapshot: usize) -> Result<Vec<f64>, EstimatorError> {
    let fields = mc_snapshot_fields(cfg, n_reps, snapshot)?;
    Ok(fields.iter().map(|f| f.values[index]).collect())
}

/// Full fields at snapshot `snapshot` for replicates `0..n_reps`.
pub fn mc_snapshot_fields(cfg: &SimConfig, n_reps: u64, snapshot: usize) -> Result<Vec<Field>, EstimatorError> {
    let runner = PathRunner::new(cfg)?;
    let times = runner.snapshot_times();
    if snapshot >= times.len() {
        return Err(EstimatorError::InvalidParameter(format!("snapshot {snapshot} of {}", times.len())));
    }
    let dx = runner.dx();
    (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut out = None;
            runner.run(rep, |s, values| {
                if s == snapshot {
                    out = Some(Field { t: times[s], values: values.to_vec(), dx });
                }
            })?;
            Ok(out.expect("snapshot reached"))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LyapunovFit {
    pub rate: f64,
    pub intercept: f64,
    pub stderr: f64,
    /// Largest absolute deviation of `ln(estimate)` from the fitted line.
    pub residual: f64,
    pub n_points: usize,
}

pub const MIN_FIT_POINTS: usize = 5;

/// Least-squares slope of `ln(estimate)` against `t` over `window`, with the
/// per-time standard errors propagated through the delta method (times
/// treated as independent).
pub fn fit_lyapunov(series: &MomentSeries, window: (f64, f64)) -> Result<LyapunovFit, EstimatorError> {
    let tol = 1e-9 * window.1.abs().max(1.0);
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut vars = Vec::new();
    for ((&t, &e), &s) in series.times.iter().zip(&series.estimates).zip(&series.stderrs) {
        if t < window.0 - tol || t > window.1 + tol {
            continue;
        }
        if !(e > 0.0) {
            return Err(EstimatorError::NonPositive { t, value: e });
        }
        ts.push(t);
        ys.push(e.ln());
        vars.push((s / e).powi(2));
    }
    if ts.len() < MIN_FIT_POINTS {
        return Err(EstimatorError::TooFewPoints { needed: MIN_FIT_POINTS, got: ts.len() });
    }
    let (slope, intercept) = least_squares(&ts, &ys);
    let tm = ts.iter().sum::<f64>() / ts.len() as f64;
    let sxx: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let var: f64 = ts.iter().zip(&vars).map(|(t, v)| ((t - tm) / sxx).powi(2) * v).sum();
    let residual = ts
        .iter()
        .zip(&ys)
        .map(|(t, y)| (y - (intercept + slope * t)).abs())
        .fold(0.0, f64::max);
    Ok(LyapunovFit { rate: slope, intercept, stderr: var.sqrt(), residual, n_points: ts.len() })
}

/// Ordinary least squares `y ≈ a + b·x`, returning `(b, a)`.
pub fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let b = sxy / sxx;
    (b, ym - b * xm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Slope of `ln profile` against `x²`.
    pub slope: f64,
    pub intercept: f64,
    /// `−1/(4κt)`.
    pub reference: f64,
    /// `slope / reference`.
    pub ratio: f64,
    pub n_points: usize,
}

pub const MIN_DECAY_POINTS: usize = 8;

/// Fits `ln profile(x) ≈ c + s·x²` over `r1 ≤ |x| ≤ r2`, skipping points
/// below [`USABLE_FLOOR`] of the profile maximum.
pub fn spatial_decay_fit(x: &[f64], profile: &[f64], t: f64, kappa: f64, ring: (f64, f64)) -> Result<DecayFit, EstimatorError> {
    let peak = profile.iter().copied().fold(0.0, f64::max);
    let floor = USABLE_FLOOR * peak;
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(profile)
        .filter(|(x, &v)| x.abs() >= ring.0 && x.abs() <= ring.1 && v > floor && v > 0.0)
        .map(|(x, v)| (x * x, v.ln()))
        .unzip();
    if xs.len() < MIN_DECAY_POINTS {
        return Err(EstimatorError::TooFewPoints { needed: MIN_DECAY_POINTS, got: xs.len() });
    }
    let (slope, intercept) = least_squares(&xs, &ys);
    if !(slope < 0.0) {
        return Err(EstimatorError::NonNegativeSlope(slope));
    }
    let reference = -1.0 / (4.0 * kappa * t);
    Ok(DecayFit { slope, intercept, reference, ratio: slope / reference, n_points: xs.len() })
}

/// Smallest grid radius `r` with `Σ_{|x|≤r} profile ≥ q·Σ profile`.
pub fn effective_support_radius(x: &[f64], profile: &[f64], q: f64) -> Result<f64, EstimatorError> {
    if !(q > 0.0 && q < 1.0) {
        return Err(EstimatorError::InvalidParameter(format!("quantile must lie in (0, 1), got {q}")));
    }
    let total: f64 = profile.iter().sum();
    if !(total > 0.0) {
        return Err(EstimatorError::InvalidParameter("profile has no mass".into()));
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs()));
    let mut acc = 0.0;
    let mut j = 0;
    while j < order.len() {
        // Points sharing the same |x| enter together.
        let r = x[order[j]].abs();
        while j < order.len() && x[order[j]].abs() == r {
            acc += profile[order[j]];
            j += 1;
        }
        if acc >= q * total * (1.0 - 1e-14) {
            return Ok(r);
        }
    }
    Ok(x[order[order.len() - 1]].abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailRate {
    pub t: f64,
    /// `t⁻¹ ln ∫_{|x|>mt} f dx`, with the tail mass raised to the noise
    /// floor when it falls below it (then an upper bound).
    pub rate: f64,
    pub below_noise_floor: bool,
}

/// Normalized log tail mass beyond `|x| = m·t` for each field.
pub fn tail_mass_rate(fields: &[MomentField], m: f64) -> Result<Vec<TailRate>, EstimatorError> {
    fields
        .iter()
        .filter(|f| f.t > 0.0)
        .map(|f| {
            let radius = m * f.t;
            if radius >= f.x_max() {
                return Err(EstimatorError::Truncation { radius, x_max: f.x_max() });
            }
            let total = f.mass();
            let tail = (0..f.values.len()).filter(|&i| f.x(i).abs() > radius).map(|i| f.values[i]).sum::<f64>() * f.dx;
            let floor = USABLE_FLOOR * total;
            let below = tail < floor;
            Ok(TailRate { t: f.t, rate: tail.max(floor).ln() / f.t, below_noise_floor: below })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportProfile {
    pub times: Vec<f64>,
    pub quantiles: Vec<f64>,
    /// `radii[j][n]`: radius for `quantiles[j]` at `times[n]`.
    pub radii: Vec<Vec<f64>>,
    /// Slope of the line fitted to the first quantile's radii.
    pub m_hat: f64,
    pub intercept: f64,
    /// Largest deviation from that line as a fraction of the radius range.
    pub residual: f64,
    pub tail_m: f64,
    pub tail_rates: Vec<TailRate>,
    /// Growth constant of the fourth moment, when supplied.
    pub b_estimate: Option<f64>,
}

/// Effective-support geometry of second-moment profiles on `window`.
pub fn support_profile(
    fields: &[MomentField],
    window: (f64, f64),
    quantiles: &[f64],
    tail_m: f64,
    b_estimate: Option<f64>,
) -> Result<SupportProfile, EstimatorError> {
    let tol = 1e-9 * window.1.max(1.0);
    let chosen: Vec<&MomentField> = fields.iter().filter(|f| f.t >= window.0 - tol && f.t <= window.1 + tol).collect();
    if chosen.len() < MIN_FIT_POINTS {
        return Err(EstimatorError::TooFewPoints { needed: MIN_FIT_POINTS, got: chosen.len() });
    }
    if quantiles.is_empty() {
        return Err(EstimatorError::InvalidParameter("no quantiles".into()));
    }
    let times: Vec<f64> = chosen.iter().map(|f| f.t).collect();
    let mut radii = Vec::with_capacity(quantiles.len());
    for &q in quantiles {
        let row = chosen
            .iter()
            .map(|f| {
                let x: Vec<f64> = (0..f.values.len()).map(|i| f.x(i)).collect();
                effective_support_radius(&x, &f.values, q)
            })
            .collect::<Result<Vec<f64>, _>>()?;
        radii.push(row);
    }
    let (m_hat, intercept) = least_squares(&times, &radii[0]);
    let lo = radii[0].iter().copied().fold(f64::INFINITY, f64::min);
    let hi = radii[0].iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let dev = times
        .iter()
        .zip(&radii[0])
        .map(|(t, r)| (r - (intercept + m_hat * t)).abs())
        .fold(0.0, f64::max);
    let residual = if hi > lo { dev / (hi - lo) } else { 0.0 };
    let owned: Vec<MomentField> = chosen.into_iter().cloned().collect();
    let tail_rates = tail_mass_rate(&owned, tail_m)?;
    Ok(SupportProfile { times, quantiles: quantiles.to_vec(), radii, m_hat, intercept, residual, tail_m, tail_rates, b_estimate })
}

/// `b` in `sup_x E|u_t(x)|⁴ ≤ b·e^{bt/4}`, read off a fitted fourth-moment rate.
pub fn b_estimate_from_fourth(rate: f64) -> f64 {
    4.0 * rate
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Roughness {
    /// Slope near 1: Brownian-like, Hölder 1/2.
    Rough,
    /// Slope near 2: differentiable.
    NonRough,
    /// Slope near 0: no spatial continuity at the resolved scales.
    TooRough,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderReport {
    pub t: f64,
    /// Lags in spatial units.
    pub lags: Vec<f64>,
    pub mean_sq_increments: Vec<f64>,
    /// Log-log slope of increments against lag.
    pub slope: f64,
    pub intercept: f64,
    /// Whether the smallest lag was dropped as an outlier.
    pub excluded_smallest: bool,
    pub classification: Roughness,
}

/// Default lags in cells: 2, 4, …, 64.
pub const HOLDER_LAGS: [usize; 6] = [2, 4, 8, 16, 32, 64];
/// Log-deviation above which the smallest lag is treated as contaminated.
pub const HOLDER_OUTLIER: f64 = 0.1;

/// Mean-square increments `E|u(x+h) − u(x)|²` over `fields` and over grid
/// points with both ends in `region`, per lag (in cells).
pub fn holder_increment_exponent(fields: &[Field], lags: &[usize], region: (f64, f64)) -> Result<HolderReport, EstimatorError> {
    if lags.len() < 3 {
        return Err(EstimatorError::TooFewPoints { needed: 3, got: lags.len() });
    }
    if lags.windows(2).any(|w| w[1] <= w[0]) || lags[0] == 0 {
        return Err(EstimatorError::InvalidParameter("lags must be positive and strictly increasing".into()));
    }
    let first = fields.first().ok_or(EstimatorError::TooFewPoints { needed: 1, got: 0 })?;
    let dx = first.dx;
    let mut incs = Vec::with_capacity(lags.len());
    for &lag in lags {
        let mut sum = 0.0;
        let mut count = 0usize;
        for f in fields {
            let n = f.nx();
            for i in 0..n.saturating_sub(lag) {
                let (a, b) = (f.x(i), f.x(i + lag));
                if a >= region.0 && b <= region.1 {
                    let d = f.values[i + lag] - f.values[i];
                    sum += d * d;
                    count += 1;
                }
            }
        }
        if count == 0 {
            return Err(EstimatorError::InvalidParameter(format!("lag {lag} has no pairs inside the region")));
        }
        incs.push(sum / count as f64);
    }
    if incs.iter().any(|v| !(*v > 0.0)) {
        return Err(EstimatorError::NonPositive { t: first.t, value: 0.0 });
    }
    let lx: Vec<f64> = lags.iter().map(|&l| (l as f64 * dx).ln()).collect();
    let ly: Vec<f64> = incs.iter().map(|v| v.ln()).collect();
    let (mut slope, mut intercept) = least_squares(&lx, &ly);
    let mut excluded = false;
    if lags.len() >= 4 {
        let (s_rest, c_rest) = least_squares(&lx[1..], &ly[1..]);
        if (ly[0] - (c_rest + s_rest * lx[0])).abs() > HOLDER_OUTLIER {
            slope = s_rest;
            intercept = c_rest;
            excluded = true;
        }
    }
    let classification = if slope > 1.5 {
        Roughness::NonRough
    } else if slope < 0.5 {
        Roughness::TooRough
    } else {
        Roughness::Rough
    };
    Ok(HolderReport {
        t: first.t,
        lags: lags.iter().map(|&l| l as f64 * dx).collect(),
        mean_sq_increments: incs,
        slope,
        intercept,
        excluded_smallest: excluded,
        classification,
    })
}

/// Averaging region `|x| ≤ r_q` for increments, from the ensemble mean of `u²`.
pub fn mean_square_support(fields: &[Field], q: f64) -> Result<(f64, f64), EstimatorError> {
    let first = fields.first().ok_or(EstimatorError::TooFewPoints { needed: 1, got: 0 })?;
    let mut mean_sq = vec![0.0; first.nx()];
    for f in fields {
        for (m, v) in mean_sq.iter_mut().zip(&f.values) {
            *m += v * v;
        }
    }
    let x: Vec<f64> = (0..first.nx()).map(|i| first.x(i)).collect();
    let r = effective_support_radius(&x, &mean_sq, q)?;
    Ok((-r, r))
}

/// `λ_p = (2−p)·γ̄(2) + (p−1)·γ̄(4)` for `p ∈ [1, 2]`.
pub fn holder_moment_exponent(p: f64, gamma2: f64, gamma4: f64) -> f64 {
    (2.0 - p) * gamma2 + (p - 1.0) * gamma4
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakRatio {
    pub times: Vec<f64>,
    /// `E sup_x|u_t|²`.
    pub numerator: Vec<f64>,
    /// `(sup_x (p_t*u₀)(x))²`.
    pub denominator: Vec<f64>,
    pub ratio: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_replicates: u64,
    pub positivity: PositivitySummary,
}

/// `E sup|u_t|² / (sup p_t*u₀)²` at the snapshot times of `cfg`.
pub fn peak_concentration_ratio(cfg: &SimConfig, n_reps: u64) -> Result<PeakRatio, EstimatorError> {
    let mc = mc_moments(cfg, n_reps, &[MomentKind::SupSq])?;
    let sup = mc.series(MomentKind::SupSq).expect("requested");
    let mut denominator = Vec::with_capacity(mc.times.len());
    for &t in &mc.times {
        let f = oracle::first_moment_field(cfg, t)?;
        let peak = f.values.iter().copied().fold(0.0, f64::max);
        denominator.push(peak * peak);
    }
    let ratio = sup.estimates.iter().zip(&denominator).map(|(n, d)| n / d).collect();
    let stderr = sup.stderrs.iter().zip(&denominator).map(|(s, d)| s / d).collect();
    Ok(PeakRatio {
        times: mc.times.clone(),
        numerator: sup.estimates.clone(),
        denominator,
        ratio,
        stderr,
        n_replicates: mc.n_replicates,
        positivity: mc.positivity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RvPoint {
    pub t: f64,
    /// `ln ∫_e^∞ exp(−q(ln x)^{η+1}/t) dx`.
    pub ln_integral: f64,
    /// `ln(t^{1/η} exp((t/q)^{1/η}))`.
    pub ln_reference: f64,
    pub ratio: f64,
}

/// Ratio of `∫_e^∞ exp(−q(ln x)^{η+1}/t)dx` to `t^{1/η}exp((t/q)^{1/η})`,
/// computed in log space after the substitution `z = ln x`.
pub fn rv_integral_check(q: f64, eta: f64, t_list: &[f64]) -> Result<Vec<RvPoint>, EstimatorError> {
    if !(q > 0.0 && eta > 0.0 && q.is_finite() && eta.is_finite()) {
        return Err(EstimatorError::InvalidParameter(format!("q = {q}, eta = {eta}")));
    }
    t_list
        .iter()
        .map(|&t| {
            if !(t > 0.0 && t.is_finite()) {
                return Err(EstimatorError::InvalidParameter(format!("t = {t}")));
            }
            // Exponent φ(z) = z − q z^{η+1}/t on [1, ∞), peaked at z*.
            let phi = |z: f64| z - q * z.powf(eta + 1.0) / t;
            let z_star = (t / (q * (eta + 1.0))).powf(1.0 / eta).max(1.0);
            let top = phi(z_star);
            let mut z_hi = z_star + 1.0;
            while phi(z_hi) - top > -60.0 {
                z_hi = z_star + 2.0 * (z_hi - z_star);
            }
            let mut points = vec![1.0];
            if z_star > 1.0 {
                points.push(z_star);
            }
            points.push(z_hi);
            let r = quad::integrate_pieces(|z| (phi(z) - top).exp(), &points, Tolerance::relative(1e-8), 4000)?;
            let ln_integral = top + r.value.ln();
            let ln_reference = t.ln() / eta + (t / q).powf(1.0 / eta);
            Ok(RvPoint { t, ln_integral, ln_reference, ratio: (ln_integral - ln_reference).exp() })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvexityReport {
    pub orders: Vec<u32>,
    /// `ln E|X|ᵖ` per order.
    pub log_moments: Vec<f64>,
    /// Second differences of the log moments, with jackknife errors.
    pub second_differences: Vec<f64>,
    pub second_difference_stderrs: Vec<f64>,
    /// Every second difference ≥ −2 standard errors.
    pub convex: bool,
}

/// Convexity of `p ↦ ln E|X|ᵖ` at consecutive integer orders.
pub fn log_moment_convexity(samples: &[f64], orders: &[u32]) -> Result<ConvexityReport, EstimatorError> {
    if orders.len() < 3 || orders.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(EstimatorError::InvalidParameter("need at least three consecutive orders".into()));
    }
    if samples.len() < 2 {
        return Err(EstimatorError::TooFewPoints { needed: 2, got: samples.len() });
    }
    let log_moment = |xs: &[f64], p: u32| (pairwise_sum(&xs.iter().map(|x| x.abs().powi(p as i32)).collect::<Vec<_>>()) / xs.len() as f64).ln();
    let log_moments: Vec<f64> = orders.iter().map(|&p| log_moment(samples, p)).collect();
    let groups = samples.len().min(200);
    let mut second_differences = Vec::new();
    let mut stderrs = Vec::new();
    for w in orders.windows(3) {
        let (d, se) = jackknife_grouped(samples, groups, |xs| log_moment(xs, w[2]) - 2.0 * log_moment(xs, w[1]) + log_moment(xs, w[0]));
        second_differences.push(d);
        stderrs.push(se);
    }
    let convex = second_differences.iter().zip(&stderrs).all(|(d, s)| *d >= -2.0 * s);
    Ok(ConvexityReport { orders: orders.to_vec(), log_moments, second_differences, second_difference_stderrs: stderrs, convex })
}
