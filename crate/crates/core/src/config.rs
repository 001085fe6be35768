//! Model configuration: the resolved [`ScaleSystemConfig`] plus the TOML file
//! form it is read from.
//!
//! Scales are indexed from the finest (`0`) to the coarsest (`L - 1`). The
//! horizon of a fine scale is the number of its steps per step of the next
//! coarser scale; the coarsest horizon is the total number of coarse steps.
//!
//! In the file, matrices may be written out as nested arrays or named as a
//! seeded generator (`"random_binary"`, `"identity_plus_one"`, ...). Resolution
//! replaces every generator with a concrete matrix drawn from the master seed,
//! so a resolved config written back to disk is fully explicit.

use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::rng::{Purpose, RngStream};
use crate::schedule::RegimeSchedule;

pub type Matrix = DMatrix<f64>;

const SYMMETRY_TOL: f64 = 1e-12;
const EIGEN_TOL: f64 = 1e-12;

/// Starting values cycled over individuals when the file gives none.
pub const DEFAULT_INITIAL_CYCLE: [f64; 3] = [0.2, 0.5, 0.7];

/// Fine-scale drift `cos(offset + A x) + parent_gain · x_parent + child_gain · avg(child window)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FineTransition {
    #[serde(default = "one")]
    pub offset: f64,
    #[serde(default = "default_parent_gain")]
    pub parent_gain: f64,
    #[serde(default)]
    pub child_gain: f64,
}

impl Default for FineTransition {
    fn default() -> Self {
        Self {
            offset: 1.0,
            parent_gain: default_parent_gain(),
            child_gain: 0.0,
        }
    }
}

/// Elementwise nonlinearity of a coarse regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Drift {
    /// `amplitude · sin(x + phase)`
    Sine { amplitude: f64, phase: f64 },
    /// `amplitude · cos(frequency · x) · exp(-decay · x)`
    CosineDecay {
        amplitude: f64,
        frequency: f64,
        decay: f64,
    },
    /// No nonlinear term; the regime is linear through its gains.
    Zero,
}

impl Drift {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Drift::Sine { amplitude, phase } => amplitude * (x + phase).sin(),
            Drift::CosineDecay {
                amplitude,
                frequency,
                decay,
            } => amplitude * (frequency * x).cos() * (-decay * x).exp(),
            Drift::Zero => 0.0,
        }
    }

    fn coefficients(&self) -> Vec<f64> {
        match *self {
            Drift::Sine { amplitude, phase } => vec![amplitude, phase],
            Drift::CosineDecay {
                amplitude,
                frequency,
                decay,
            } => vec![amplitude, frequency, decay],
            Drift::Zero => vec![],
        }
    }
}

/// One coarse-scale regime:
/// `drift(x) + summary_gain · avg(fine window) + neighbor_gain · Σ_{d'≠d} B x_{d'} + adjacency_gain · A x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoarseModel {
    pub drift: Drift,
    #[serde(default = "one")]
    pub summary_gain: f64,
    #[serde(default)]
    pub neighbor_gain: f64,
    #[serde(default)]
    pub adjacency_gain: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleConfig {
    pub state_dim: usize,
    pub horizon: usize,
    /// Givens angle (radians) in the first two state dimensions.
    pub rotation: f64,
    pub adjacency: Matrix,
    /// One covariance per individual.
    pub process_noise: Vec<Matrix>,
    pub measurement_noise: Vec<Matrix>,
    /// Time weights of the window summary; only meaningful below the coarsest
    /// scale, where it has `horizon` entries.
    pub summary_weights: Vec<f64>,
    /// Drift used when this is not the coarsest scale.
    pub transition: FineTransition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSystemConfig {
    pub num_individuals: usize,
    pub scales: Vec<ScaleConfig>,
    /// Coarse-scale regimes, indexed by model number.
    pub models: Vec<CoarseModel>,
    /// `B`, `D × D`. Only off-diagonal entries couple individuals.
    pub interaction: Matrix,
    pub dirichlet_alpha: Vec<f64>,
    /// Per individual, broadcast across every dimension of every scale.
    pub initial_states: Vec<f64>,
    pub seed: u64,
}

impl ScaleSystemConfig {
    pub fn num_scales(&self) -> usize {
        self.scales.len()
    }

    pub fn num_models(&self) -> usize {
        self.models.len()
    }

    pub fn coarsest(&self) -> usize {
        self.scales.len() - 1
    }

    pub fn coarse(&self) -> &ScaleConfig {
        &self.scales[self.coarsest()]
    }

    pub fn coarse_horizon(&self) -> usize {
        self.coarse().horizon
    }

    /// Steps taken by scale `l` over the whole run: `T_l · T_{l+1} ⋯ T_L`.
    pub fn total_steps(&self, scale: usize) -> usize {
        self.scales[scale..].iter().map(|s| s.horizon).product()
    }

    /// Steps of scale `l` per coarse step.
    pub fn steps_per_coarse(&self, scale: usize) -> usize {
        self.scales[scale..self.coarsest()]
            .iter()
            .map(|s| s.horizon)
            .product()
    }

    /// Every invariant violation; empty iff the config is usable.
    pub fn validate(&self) -> Vec<Violation> {
        validate_config(self)
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }

    /// Explicit file form of this config.
    pub fn to_file(&self) -> ConfigFile {
        ConfigFile {
            seed: self.seed,
            structure_seed: None,
            num_individuals: self.num_individuals,
            dirichlet_alpha: Some(self.dirichlet_alpha.clone()),
            initial_states: Some(self.initial_states.clone()),
            interaction: MatrixSpec::from_matrix(&self.interaction),
            scales: self
                .scales
                .iter()
                .map(|s| ScaleFile {
                    state_dim: s.state_dim,
                    horizon: s.horizon,
                    rotation: s.rotation,
                    adjacency: MatrixSpec::from_matrix(&s.adjacency),
                    process_noise: s.process_noise.iter().map(CovSpec::from_matrix).collect(),
                    measurement_noise: s
                        .measurement_noise
                        .iter()
                        .map(CovSpec::from_matrix)
                        .collect(),
                    summary_weights: if s.summary_weights.is_empty() {
                        None
                    } else {
                        Some(s.summary_weights.clone())
                    },
                    transition: Some(s.transition),
                })
                .collect(),
            models: self.models.clone(),
            schedule: None,
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        self.to_file().to_toml()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl Violation {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub fn validate_config(cfg: &ScaleSystemConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let d = cfg.num_individuals;
    if d == 0 {
        out.push(Violation::new("num_individuals", "must be at least 1"));
    }
    if cfg.scales.is_empty() {
        out.push(Violation::new("scales", "at least one scale is required"));
    }
    if cfg.models.is_empty() {
        out.push(Violation::new("models", "at least one model is required"));
    }

    let coarsest = cfg.scales.len().saturating_sub(1);
    for (l, s) in cfg.scales.iter().enumerate() {
        let field = |name: &str| format!("scales[{l}].{name}");
        let n = s.state_dim;
        if n == 0 {
            out.push(Violation::new(field("state_dim"), "must be at least 1"));
        }
        if s.horizon == 0 {
            out.push(Violation::new(field("horizon"), "must be at least 1"));
        }
        if !s.rotation.is_finite() {
            out.push(Violation::new(field("rotation"), "must be finite"));
        } else if s.rotation != 0.0 && n < 2 {
            out.push(Violation::new(
                field("rotation"),
                "a rotation needs at least two state dimensions",
            ));
        }
        check_shape(&mut out, &field("adjacency"), &s.adjacency, n, n);
        check_finite(&mut out, &field("adjacency"), s.adjacency.iter());
        for (name, covs) in [
            ("process_noise", &s.process_noise),
            ("measurement_noise", &s.measurement_noise),
        ] {
            if covs.len() != d {
                out.push(Violation::new(
                    field(name),
                    format!("expected {d} covariances (one per individual), found {}", covs.len()),
                ));
            }
            for (i, c) in covs.iter().enumerate() {
                check_covariance(&mut out, &format!("scales[{l}].{name}[{i}]"), c, n);
            }
        }
        if l < coarsest {
            let w = &s.summary_weights;
            if w.len() != s.horizon {
                out.push(Violation::new(
                    field("summary_weights"),
                    format!("expected {} entries, found {}", s.horizon, w.len()),
                ));
            }
            if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
                out.push(Violation::new(
                    field("summary_weights"),
                    "entries must be finite and non-negative",
                ));
            } else if !(w.iter().sum::<f64>() > 0.0) {
                out.push(Violation::new(field("summary_weights"), "sum must be positive"));
            }
            let t = &s.transition;
            check_finite(
                &mut out,
                &field("transition"),
                [t.offset, t.parent_gain, t.child_gain].iter(),
            );
            let parent = &cfg.scales[l + 1];
            if t.parent_gain != 0.0 && parent.state_dim != n {
                out.push(Violation::new(
                    field("transition.parent_gain"),
                    format!(
                        "coupling to scale {} needs equal dimensions ({n} vs {})",
                        l + 1,
                        parent.state_dim
                    ),
                ));
            }
            if l > 0 && t.child_gain != 0.0 && cfg.scales[l - 1].state_dim != n {
                out.push(Violation::new(
                    field("transition.child_gain"),
                    format!("window summary of scale {} needs equal dimensions", l - 1),
                ));
            }
        }
    }

    check_shape(&mut out, "interaction", &cfg.interaction, d, d);
    check_finite(&mut out, "interaction", cfg.interaction.iter());

    let m = cfg.models.len();
    if cfg.dirichlet_alpha.len() != m {
        out.push(Violation::new(
            "dirichlet_alpha",
            format!("expected {m} entries, found {}", cfg.dirichlet_alpha.len()),
        ));
    }
    if cfg
        .dirichlet_alpha
        .iter()
        .any(|a| !(*a > 0.0) || !a.is_finite())
    {
        out.push(Violation::new(
            "dirichlet_alpha",
            "entries must be finite and strictly positive",
        ));
    }
    for (k, model) in cfg.models.iter().enumerate() {
        let mut coeffs = model.drift.coefficients();
        coeffs.extend([model.summary_gain, model.neighbor_gain, model.adjacency_gain]);
        check_finite(&mut out, &format!("models[{k}]"), coeffs.iter());
        if cfg.scales.len() > 1 && model.summary_gain != 0.0 {
            let (fine, coarse) = (&cfg.scales[coarsest - 1], &cfg.scales[coarsest]);
            if fine.state_dim != coarse.state_dim {
                out.push(Violation::new(
                    format!("models[{k}].summary_gain"),
                    "window summary needs equal fine and coarse dimensions",
                ));
            }
        }
    }

    if cfg.initial_states.len() != d {
        out.push(Violation::new(
            "initial_states",
            format!("expected {d} entries, found {}", cfg.initial_states.len()),
        ));
    }
    check_finite(&mut out, "initial_states", cfg.initial_states.iter());
    out
}

fn check_shape(out: &mut Vec<Violation>, field: &str, m: &Matrix, rows: usize, cols: usize) {
    if m.nrows() != rows || m.ncols() != cols {
        out.push(Violation::new(
            field,
            format!("expected {rows}x{cols}, found {}x{}", m.nrows(), m.ncols()),
        ));
    }
}

fn check_finite<'a>(out: &mut Vec<Violation>, field: &str, mut values: impl Iterator<Item = &'a f64>) {
    if values.any(|v| !v.is_finite()) {
        out.push(Violation::new(field, "entries must be finite"));
    }
}

fn check_covariance(out: &mut Vec<Violation>, field: &str, c: &Matrix, n: usize) {
    if c.nrows() != n || c.ncols() != n {
        check_shape(out, field, c, n, n);
        return;
    }
    if c.iter().any(|v| !v.is_finite()) {
        out.push(Violation::new(field, "entries must be finite"));
        return;
    }
    for i in 0..n {
        for j in 0..i {
            if (c[(i, j)] - c[(j, i)]).abs() > SYMMETRY_TOL {
                out.push(Violation::new(
                    field,
                    format!("not symmetric: entry ({i},{j}) differs from ({j},{i})"),
                ));
                return;
            }
        }
    }
    let eig = c.clone().symmetric_eigenvalues();
    if let Some(min) = eig.iter().copied().reduce(f64::min) {
        if min < -EIGEN_TOL {
            out.push(Violation::new(
                field,
                format!("not positive semi-definite: eigenvalue {min}"),
            ));
        }
    }
}

/// A matrix written inline or named by generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Explicit(Vec<Vec<f64>>),
    Generator(String),
}

impl MatrixSpec {
    pub fn from_matrix(m: &Matrix) -> Self {
        MatrixSpec::Explicit(rows_of(m))
    }
}

/// A covariance as `s · I` or a full matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovSpec {
    Scaled(f64),
    Full(Vec<Vec<f64>>),
}

impl CovSpec {
    pub fn from_matrix(m: &Matrix) -> Self {
        let n = m.nrows();
        if m.is_square() && n > 0 {
            let s = m[(0, 0)];
            if *m == Matrix::identity(n, n) * s {
                return CovSpec::Scaled(s);
            }
        }
        CovSpec::Full(rows_of(m))
    }

    fn resolve(&self, n: usize, field: &str) -> Result<Matrix> {
        match self {
            CovSpec::Scaled(s) => Ok(Matrix::identity(n, n) * *s),
            CovSpec::Full(rows) => matrix_from_rows(rows, field),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleFile {
    pub state_dim: usize,
    pub horizon: usize,
    #[serde(default)]
    pub rotation: f64,
    pub adjacency: MatrixSpec,
    pub process_noise: Vec<CovSpec>,
    pub measurement_noise: Vec<CovSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<FineTransition>,
}

/// Regime schedule as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    /// `"sim1"` or `"sim2"`.
    Preset(String),
    /// One model index per coarse step, per individual.
    Explicit(Vec<Vec<usize>>),
}

/// The on-disk TOML form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: u64,
    /// Seed for the matrix generators; defaults to `seed`. Pinning it keeps
    /// the system fixed while `seed` varies the noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub structure_seed: Option<u64>,
    pub num_individuals: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_states: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSpec>,
    pub interaction: MatrixSpec,
    pub scales: Vec<ScaleFile>,
    pub models: Vec<CoarseModel>,
}

/// A resolved config together with what the seeded generators picked.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub config: ScaleSystemConfig,
    pub schedule: Option<RegimeSchedule>,
    /// Off-diagonal `(row, col)` set by `identity_plus_one`, zero-based.
    pub interaction_entry: Option<(usize, usize)>,
}

impl ConfigFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Materialize generators and defaults. Shape problems inside explicit
    /// matrices are left for [`validate_config`]; only unparseable entries
    /// (ragged rows, unknown generator names) fail here.
    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let d = self.num_individuals;
        let seed = self.seed;
        let structure_seed = self.structure_seed.unwrap_or(seed);
        let m = self.models.len();
        let mut scales = Vec::with_capacity(self.scales.len());
        let coarsest = self.scales.len().saturating_sub(1);
        for (l, s) in self.scales.iter().enumerate() {
            let field = |name: &str| format!("scales[{l}].{name}");
            let n = s.state_dim;
            let adjacency = match &s.adjacency {
                MatrixSpec::Explicit(rows) => matrix_from_rows(rows, &field("adjacency"))?,
                MatrixSpec::Generator(name) => {
                    let mut rng = RngStream::derive(structure_seed, &[Purpose::Generate as u64, 1, l as u64]);
                    square_generator(name, n, &mut rng, &field("adjacency"))?
                }
            };
            let covs = |specs: &[CovSpec], name: &str| -> Result<Vec<Matrix>> {
                let specs: Vec<&CovSpec> = if specs.len() == 1 && d > 1 {
                    std::iter::repeat_n(&specs[0], d).collect()
                } else {
                    specs.iter().collect()
                };
                specs
                    .iter()
                    .enumerate()
                    .map(|(i, c)| c.resolve(n, &format!("scales[{l}].{name}[{i}]")))
                    .collect()
            };
            let summary_weights = if l < coarsest {
                s.summary_weights
                    .clone()
                    .unwrap_or_else(|| vec![1.0; s.horizon])
            } else {
                Vec::new()
            };
            scales.push(ScaleConfig {
                state_dim: n,
                horizon: s.horizon,
                rotation: s.rotation,
                adjacency,
                process_noise: covs(&s.process_noise, "process_noise")?,
                measurement_noise: covs(&s.measurement_noise, "measurement_noise")?,
                summary_weights,
                transition: s.transition.unwrap_or_default(),
            });
        }

        let (interaction, interaction_entry) = match &self.interaction {
            MatrixSpec::Explicit(rows) => (matrix_from_rows(rows, "interaction")?, None),
            MatrixSpec::Generator(name) => {
                let mut rng = RngStream::derive(structure_seed, &[Purpose::Generate as u64, 2]);
                if name == "identity_plus_one" {
                    let (b, entry) = identity_plus_one(d, &mut rng);
                    (b, entry)
                } else {
                    (square_generator(name, d, &mut rng, "interaction")?, None)
                }
            }
        };

        let initial_states = self.initial_states.clone().unwrap_or_else(|| {
            (0..d)
                .map(|i| DEFAULT_INITIAL_CYCLE[i % DEFAULT_INITIAL_CYCLE.len()])
                .collect()
        });

        let config = ScaleSystemConfig {
            num_individuals: d,
            scales,
            models: self.models.clone(),
            interaction,
            dirichlet_alpha: self.dirichlet_alpha.clone().unwrap_or_else(|| vec![1.0; m]),
            initial_states,
            seed,
        };

        let schedule = match &self.schedule {
            None => None,
            Some(spec) => {
                let t = config.scales.last().map_or(0, |s| s.horizon);
                Some(match spec {
                    ScheduleSpec::Preset(name) => match name.as_str() {
                        "sim1" => RegimeSchedule::sim1(d, t),
                        "sim2" => RegimeSchedule::sim2(t),
                        other => {
                            return Err(Error::ConfigParse(format!(
                                "unknown schedule preset `{other}`"
                            )))
                        }
                    },
                    ScheduleSpec::Explicit(rows) => RegimeSchedule::new(rows.clone()),
                })
            }
        };

        Ok(ResolvedConfig {
            config,
            schedule,
            interaction_entry,
        })
    }
}

impl ResolvedConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        ConfigFile::load(path)?.resolve()
    }
}

fn one() -> f64 {
    1.0
}

fn default_parent_gain() -> f64 {
    0.6
}

fn rows_of(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| m[(r, c)]).collect())
        .collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], field: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::ConfigParse(format!("{field}: ragged matrix rows")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}

fn square_generator(name: &str, n: usize, rng: &mut RngStream, field: &str) -> Result<Matrix> {
    let m = match name {
        "identity" => Matrix::identity(n, n),
        "zeros" => Matrix::zeros(n, n),
        "random_binary" => Matrix::from_fn(n, n, |_, _| coin(rng)),
        // strictly lower triangular: nilpotent, so A x never feeds back on itself
        "random_binary_lower" => {
            let mut m = Matrix::zeros(n, n);
            for r in 0..n {
                for c in 0..r {
                    m[(r, c)] = coin(rng);
                }
            }
            m
        }
        other => {
            return Err(Error::ConfigParse(format!(
                "{field}: unknown matrix generator `{other}`"
            )))
        }
    };
    Ok(m)
}

fn coin(rng: &mut RngStream) -> f64 {
    if rng.uniform() < 0.5 {
        1.0
    } else {
        0.0
    }
}

/// Identity with one off-diagonal entry, chosen uniformly, set to 1.
fn identity_plus_one(d: usize, rng: &mut RngStream) -> (Matrix, Option<(usize, usize)>) {
    let mut b = Matrix::identity(d, d);
    if d < 2 {
        return (b, None);
    }
    let slots = d * (d - 1);
    let k = ((rng.uniform() * slots as f64) as usize).min(slots - 1);
    let row = k / (d - 1);
    let mut col = k % (d - 1);
    if col >= row {
        col += 1;
    }
    b[(row, col)] = 1.0;
    (b, Some((row, col)))
}
