//! Domain types: the nonlinearity σ, compactly supported initial data, the
//! spatial grid, solution fields and the simulation configuration.
//!
//! Everything here is immutable once validated. `SimConfig` round-trips
//! through TOML with the field names as literal keys; unknown keys are
//! rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid sigma: {0}")]
    InvalidSigma(String),
    #[error("sigma envelope violated at u = {u}: |sigma(u)|/|u| = {ratio}, declared [{low}, {lip}]")]
    EnvelopeViolation { u: f64, ratio: f64, low: f64, lip: f64 },
    #[error("sigma difference quotient {quotient} at ({a}, {b}) exceeds declared lip {lip}")]
    LipschitzViolation { a: f64, b: f64, quotient: f64, lip: f64 },
    #[error("invalid initial data: {0}")]
    InvalidInitialData(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("config io error: {0}")]
    Io(String),
}

/// Relative slack allowed when checking the declared envelope of σ.
pub const ENVELOPE_RTOL: f64 = 1e-12;
/// Number of random pairs used to sample difference quotients of σ.
pub const LIPSCHITZ_SAMPLES: usize = 100_000;
/// Half-width of the interval the difference-quotient pairs are drawn from.
pub const LIPSCHITZ_RANGE: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    Linear,
    Modulated,
}

/// User-facing description of σ. `lip` and `low` default to the exact
/// envelope constants of the family when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSpec {
    pub kind: SigmaKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
}

impl SigmaSpec {
    /// σ(u) = λu, the parabolic Anderson model.
    pub fn linear(lambda: f64) -> Self {
        Self { kind: SigmaKind::Linear, lambda: Some(lambda), c1: None, c2: None, lip: None, low: None }
    }

    /// σ(u) = u(c1 + c2 sin u) with envelope constants c1 ± c2.
    pub fn modulated(c1: f64, c2: f64) -> Self {
        Self { kind: SigmaKind::Modulated, lambda: None, c1: Some(c1), c2: Some(c2), lip: None, low: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum SigmaForm {
    Linear(f64),
    Modulated { c1: f64, c2: f64 },
}

/// A validated nonlinearity with its declared bounds `low·|u| ≤ |σ(u)| ≤ lip·|u|`.
///
/// For the modulated family, `lip` is the envelope constant used by the
/// moment bounds. That family is only locally Lipschitz (its derivative
/// contains `c2·u·cos u`), so the sampled difference-quotient maximum is
/// reported through [`Sigma::sampled_lipschitz`] rather than enforced.
#[derive(Debug, Clone, PartialEq)]
pub struct Sigma {
    form: SigmaForm,
    lip: f64,
    low: f64,
    sampled_lipschitz: f64,
}

impl Sigma {
    #[inline(always)]
    pub fn eval(&self, u: f64) -> f64 {
        match self.form {
            SigmaForm::Linear(lambda) => lambda * u,
            SigmaForm::Modulated { c1, c2 } => u * (c1 + c2 * u.sin()),
        }
    }

    pub fn lip(&self) -> f64 {
        self.lip
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    /// `Some(λ)` when σ(u) = λu.
    pub fn linear_coefficient(&self) -> Option<f64> {
        match self.form {
            SigmaForm::Linear(lambda) => Some(lambda),
            SigmaForm::Modulated { .. } => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.linear_coefficient() == Some(0.0)
    }

    /// Largest difference quotient seen on the validation pairs.
    pub fn sampled_lipschitz(&self) -> f64 {
        self.sampled_lipschitz
    }
}

fn finite_nonneg(name: &str, v: f64) -> Result<f64, ModelError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(ModelError::InvalidSigma(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// The fixed envelope validation grid: `{±10^j : j = −6..6} ∪ {0}`.
pub fn envelope_grid() -> Vec<f64> {
    let mut g = vec![0.0];
    for j in -6..=6 {
        let v = 10f64.powi(j);
        g.push(v);
        g.push(-v);
    }
    g
}

struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Validates `spec` and returns the callable nonlinearity.
pub fn make_sigma(spec: &SigmaSpec) -> Result<Sigma, ModelError> {
    let (form, lip_default, low_default) = match spec.kind {
        SigmaKind::Linear => {
            let lambda = spec
                .lambda
                .ok_or_else(|| ModelError::InvalidSigma("linear sigma needs `lambda`".into()))?;
            let lambda = finite_nonneg("lambda", lambda)?;
            if spec.c1.is_some() || spec.c2.is_some() {
                return Err(ModelError::InvalidSigma("c1/c2 are only used by the modulated family".into()));
            }
            (SigmaForm::Linear(lambda), lambda, lambda)
        }
        SigmaKind::Modulated => {
            let c1 = spec.c1.ok_or_else(|| ModelError::InvalidSigma("modulated sigma needs `c1`".into()))?;
            let c2 = spec.c2.ok_or_else(|| ModelError::InvalidSigma("modulated sigma needs `c2`".into()))?;
            let c2 = finite_nonneg("c2", c2)?;
            if !(c1.is_finite() && c1 > c2) {
                return Err(ModelError::InvalidSigma(format!("need c1 > c2 >= 0, got c1 = {c1}, c2 = {c2}")));
            }
            if spec.lambda.is_some() {
                return Err(ModelError::InvalidSigma("lambda is only used by the linear family".into()));
            }
            (SigmaForm::Modulated { c1, c2 }, c1 + c2, c1 - c2)
        }
    };
    let lip = finite_nonneg("lip", spec.lip.unwrap_or(lip_default))?;
    let low = finite_nonneg("low", spec.low.unwrap_or(low_default))?;
    if low > lip {
        return Err(ModelError::InvalidSigma(format!("low = {low} exceeds lip = {lip}")));
    }
    if let SigmaForm::Linear(lambda) = form {
        if lip != lambda || low != lambda {
            return Err(ModelError::InvalidSigma(format!(
                "linear sigma needs lip = low = lambda = {lambda}, got lip = {lip}, low = {low}"
            )));
        }
    } else if low <= 0.0 {
        return Err(ModelError::InvalidSigma("modulated sigma needs low > 0".into()));
    }

    let mut sigma = Sigma { form, lip, low, sampled_lipschitz: 0.0 };
    if sigma.eval(0.0) != 0.0 {
        return Err(ModelError::InvalidSigma("sigma(0) must be exactly 0".into()));
    }
    for u in envelope_grid() {
        if u == 0.0 {
            continue;
        }
        let ratio = sigma.eval(u).abs() / u.abs();
        if ratio < low * (1.0 - ENVELOPE_RTOL) || ratio > lip * (1.0 + ENVELOPE_RTOL) {
            return Err(ModelError::EnvelopeViolation { u, ratio, low, lip });
        }
    }

    let mut rng = SplitMix64(0x5EED_0F_5167A);
    let mut max_q = 0.0f64;
    for _ in 0..LIPSCHITZ_SAMPLES {
        let a = LIPSCHITZ_RANGE * (2.0 * rng.next_f64() - 1.0);
        let b = LIPSCHITZ_RANGE * (2.0 * rng.next_f64() - 1.0);
        if a == b {
            continue;
        }
        let (sa, sb) = (sigma.eval(a), sigma.eval(b));
        let q = ((sa - sb) / (a - b)).abs();
        // Cancellation in sa - sb can inflate q for close pairs.
        let rounding = 4.0 * f64::EPSILON * (sa.abs() + sb.abs()) / (a - b).abs();
        if matches!(form, SigmaForm::Linear(_)) && q > lip * (1.0 + ENVELOPE_RTOL) + rounding {
            return Err(ModelError::LipschitzViolation { a, b, quotient: q, lip });
        }
        max_q = max_q.max(q - rounding);
    }
    sigma.sampled_lipschitz = max_q.max(0.0);
    Ok(sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    Triangle,
    SmoothBump,
    DiscreteDelta,
}

/// Nonnegative initial profile supported in `[-K, K]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialData {
    pub kind: InitKind,
    #[serde(rename = "K")]
    pub k: f64,
    pub height: f64,
}

impl InitialData {
    pub fn triangle(k: f64, height: f64) -> Self {
        Self { kind: InitKind::Triangle, k, height }
    }

    pub fn smooth_bump(k: f64, height: f64) -> Self {
        Self { kind: InitKind::SmoothBump, k, height }
    }

    pub fn discrete_delta(k: f64, height: f64) -> Self {
        Self { kind: InitKind::DiscreteDelta, k, height }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(ModelError::InvalidInitialData(format!("K must be > 0, got {}", self.k)));
        }
        if !(self.height.is_finite() && self.height > 0.0) {
            return Err(ModelError::InvalidInitialData(format!("height must be > 0, got {}", self.height)));
        }
        Ok(())
    }

    /// Pointwise profile u₀(x). The discrete delta has no pointwise profile
    /// and evaluates to zero everywhere.
    pub fn profile(&self, x: f64) -> f64 {
        let r = x.abs() / self.k;
        if r >= 1.0 {
            return 0.0;
        }
        match self.kind {
            InitKind::Triangle => self.height * (1.0 - r),
            // exp(1 - 1/(1 - r²)) peaks at 1 for r = 0.
            InitKind::SmoothBump => self.height * (1.0 - 1.0 / (1.0 - r * r)).exp(),
            InitKind::DiscreteDelta => 0.0,
        }
    }

    /// Total mass ∫u₀.
    pub fn mass(&self) -> f64 {
        match self.kind {
            InitKind::Triangle => self.height * self.k,
            InitKind::SmoothBump => self.height * self.k * crate::kernel::unit_bump_moment(1),
            InitKind::DiscreteDelta => self.height,
        }
    }

    /// ‖u₀‖²_{L²}; infinite for the delta.
    pub fn l2_norm_sq(&self) -> f64 {
        match self.kind {
            InitKind::Triangle => 2.0 * self.height * self.height * self.k / 3.0,
            InitKind::SmoothBump => self.height * self.height * self.k * crate::kernel::unit_bump_moment(2),
            InitKind::DiscreteDelta => f64::INFINITY,
        }
    }
}

/// Uniform grid `x_i = −x_max + i·dx`, `i = 0..nx`, `dx = 2·x_max/nx`.
///
/// Node 0 sits on the left boundary and the right boundary `x_max` is the
/// (implicit) node `nx`; both are held at zero by the solver, so the
/// interior nodes are symmetric about `x = 0` when `nx` is even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_max: f64,
    pub nx: usize,
}

impl Grid {
    pub fn new(x_max: f64, nx: usize) -> Result<Self, ModelError> {
        if !(x_max.is_finite() && x_max > 0.0) {
            return Err(ModelError::InvalidConfig(format!("x_max must be > 0, got {x_max}")));
        }
        if nx < 4 {
            return Err(ModelError::InvalidConfig(format!("nx must be >= 4, got {nx}")));
        }
        Ok(Self { x_max, nx })
    }

    #[inline]
    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / self.nx as f64
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        -self.x_max + i as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    /// Index of `x = 0` when it is a node.
    pub fn origin_index(&self) -> Option<usize> {
        (self.nx % 2 == 0).then_some(self.nx / 2)
    }
}

/// Grid samples of one spatial profile at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub t: f64,
    pub values: Vec<f64>,
    pub dx: f64,
}

impl Field {
    pub fn new(t: f64, values: Vec<f64>, dx: f64) -> Self {
        Self { t, values, dx }
    }

    pub fn zeros(grid: &Grid, t: f64) -> Self {
        Self { t, values: vec![0.0; grid.nx], dx: grid.dx() }
    }

    pub fn nx(&self) -> usize {
        self.values.len()
    }

    pub fn x_max(&self) -> f64 {
        0.5 * self.dx * self.values.len() as f64
    }

    pub fn grid(&self) -> Grid {
        Grid { x_max: self.x_max(), nx: self.values.len() }
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.x_max() + i as f64 * self.dx
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Grid L² norm squared, `dx·Σ v²`.
    pub fn l2_norm_sq(&self) -> f64 {
        self.dx * self.values.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Samples the initial data on `grid`.
pub fn make_initial_data(init: &InitialData, grid: &Grid) -> Result<Field, ModelError> {
    init.validate()?;
    if init.k >= grid.x_max {
        return Err(ModelError::InvalidInitialData(format!(
            "support half-width K = {} must be below x_max = {}",
            init.k, grid.x_max
        )));
    }
    let dx = grid.dx();
    let mut values = vec![0.0; grid.nx];
    match init.kind {
        InitKind::DiscreteDelta => {
            let center = grid.origin_index().ok_or_else(|| {
                ModelError::InvalidInitialData("discrete_delta needs x = 0 on the grid (even nx)".into())
            })?;
            if 0.5 * dx > init.k {
                return Err(ModelError::InvalidInitialData(format!(
                    "discrete_delta cell [-dx/2, dx/2] with dx = {dx} does not fit in [-K, K], K = {}",
                    init.k
                )));
            }
            values[center] = init.height / dx;
        }
        _ => {
            for (i, v) in values.iter_mut().enumerate().skip(1) {
                *v = init.profile(grid.x(i));
            }
        }
    }
    Ok(Field { t: 0.0, values, dx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    DirichletZero,
}

fn default_m_guard() -> f64 {
    3.0
}

/// Simulation configuration. Field names are the literal config-file keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub kappa: f64,
    pub sigma: SigmaSpec,
    pub init: InitialData,
    pub x_max: f64,
    pub nx: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default)]
    pub boundary: Boundary,
    #[serde(default)]
    pub seed: u64,
    /// Clip negative values to zero after every step (comparison runs only).
    #[serde(default)]
    pub clip_negative: bool,
    /// Support-growth allowance: require `x_max ≥ K + m_guard·t_end`.
    #[serde(default = "default_m_guard")]
    pub m_guard: f64,
}

/// Tolerance, in units of steps, for snapshot times to count as multiples of dt.
const SNAPSHOT_STEP_TOL: f64 = 1e-6;

impl SimConfig {
    pub fn dx(&self) -> f64 {
        2.0 * self.x_max / self.nx as f64
    }

    pub fn grid(&self) -> Grid {
        Grid { x_max: self.x_max, nx: self.nx }
    }

    /// Number of time steps to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }

    /// Snapshot times, defaulting to `[t_end]` when none were requested.
    pub fn snapshots(&self) -> Vec<f64> {
        if self.snapshot_times.is_empty() {
            vec![self.t_end]
        } else {
            self.snapshot_times.clone()
        }
    }

    pub fn snapshot_steps(&self) -> Vec<usize> {
        self.snapshots().iter().map(|t| (t / self.dt).round() as usize).collect()
    }

    /// Checks that do not depend on the time-stepping scheme.
    pub fn validate_geometry(&self) -> Result<(), ModelError> {
        let bad = |m: String| Err(ModelError::InvalidConfig(m));
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return bad(format!("kappa must be > 0, got {}", self.kappa));
        }
        Grid::new(self.x_max, self.nx)?;
        self.init.validate()?;
        make_sigma(&self.sigma)?;
        if self.init.k >= self.x_max {
            return bad(format!("K = {} must be below x_max = {}", self.init.k, self.x_max));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return bad(format!("t_end must be > 0, got {}", self.t_end));
        }
        let steps = self.t_end / self.dt;
        if (steps - steps.round()).abs() > SNAPSHOT_STEP_TOL * steps.max(1.0) {
            return bad(format!("t_end = {} is not a multiple of dt = {}", self.t_end, self.dt));
        }
        let mut prev = f64::NEG_INFINITY;
        for &t in &self.snapshot_times {
            if !(0.0..=self.t_end * (1.0 + 1e-12)).contains(&t) {
                return bad(format!("snapshot time {t} outside [0, t_end]"));
            }
            if t < prev {
                return bad("snapshot_times must be sorted".into());
            }
            let k = t / self.dt;
            if (k - k.round()).abs() > SNAPSHOT_STEP_TOL * k.max(1.0) {
                return bad(format!("snapshot time {t} is not a multiple of dt = {}", self.dt));
            }
            prev = t;
        }
        if !(self.m_guard.is_finite() && self.m_guard >= 0.0) {
            return bad(format!("m_guard must be >= 0, got {}", self.m_guard));
        }
        Ok(())
    }

    /// Full validation for the explicit Euler–Maruyama scheme.
    pub fn validate(&self) -> Result<(), ModelError> {
        self.validate_geometry()?;
        let dx = self.dx();
        let limit = dx * dx / (2.0 * self.kappa);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(ModelError::InvalidConfig(format!(
                "explicit scheme unstable: dt = {} > dx^2/(2 kappa) = {limit}",
                self.dt
            )));
        }
        let needed = self.init.k + self.m_guard * self.t_end;
        if self.x_max < needed {
            return Err(ModelError::InvalidConfig(format!(
                "x_max = {} below K + m_guard*t_end = {needed}",
                self.x_max
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        Self::from_toml_with_overrides(text, &[])
    }

    /// Parses a config and applies `key.path=value` overrides before
    /// deserializing, so overrides go through the same unknown-key check.
    pub fn from_toml_with_overrides(text: &str, overrides: &[String]) -> Result<Self, ModelError> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        toml::Value::Table(table)
            .try_into::<SimConfig>()
            .map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path).map_err(|e| ModelError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_with_overrides(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("SimConfig always serializes")
    }
}

fn parse_override_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match toml::from_str::<toml::Table>(&doc) {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Applies one `dotted.key=value` override to a parsed table.
pub fn apply_override(table: &mut toml::Table, ov: &str) -> Result<(), ModelError> {
    let (path, raw) = ov
        .split_once('=')
        .ok_or_else(|| ModelError::Parse(format!("override `{ov}` is not key=value")))?;
    let keys: Vec<&str> = path.trim().split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(ModelError::Parse(format!("override `{ov}` has an empty key segment")));
    }
    let mut cur = table;
    for k in &keys[..keys.len() - 1] {
        let entry = cur.entry(k.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ModelError::Parse(format!("override `{ov}`: `{k}` is not a table")))?;
    }
    cur.insert(keys[keys.len() - 1].to_string(), parse_override_value(raw.trim()));
    Ok(())
}
