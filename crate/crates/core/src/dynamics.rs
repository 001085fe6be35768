//! Noiseless transition drifts and the measurement map.
//!
//! Transitions return the drift only; callers add process noise. `cos`, `sin`
//! and `exp` act elementwise and `A x` is a matrix-vector product.

use crate::config::{CoarseModel, FineTransition, Matrix, ScaleSystemConfig};
use crate::error::{Error, Result};
use crate::math::gaussian::Gaussian;
use crate::math::rng::RngStream;
use crate::math::weights::weighted_time_average;

#[inline]
fn mat_vec_row(a: &Matrix, r: usize, x: &[f64]) -> f64 {
    (0..x.len()).map(|c| a[(r, c)] * x[c]).sum()
}

/// `Σ_{d'≠d} B[d,d'] x_{d'}`. The diagonal of `B` never contributes.
pub fn neighbor_sum(interaction: &Matrix, d: usize, others: &[Vec<f64>]) -> Vec<f64> {
    let n = others.first().map_or(0, Vec::len);
    let mut out = vec![0.0; n];
    for (k, x) in others.iter().enumerate() {
        if k == d {
            continue;
        }
        let b = interaction[(d, k)];
        if b != 0.0 {
            for (o, xi) in out.iter_mut().zip(x) {
                *o += b * xi;
            }
        }
    }
    out
}

/// Coarse drift of one regime, written into `out`.
///
/// `summary` is the weighted window average of the next finer scale, absent
/// for a single-scale model.
pub fn coarse_drift_into(
    model: &CoarseModel,
    adjacency: &Matrix,
    x_prev: &[f64],
    summary: Option<&[f64]>,
    neighbors: &[f64],
    out: &mut [f64],
) {
    for r in 0..x_prev.len() {
        let mut v = model.drift.eval(x_prev[r]);
        if let Some(s) = summary {
            v += model.summary_gain * s[r];
        }
        v += model.neighbor_gain * neighbors[r];
        if model.adjacency_gain != 0.0 {
            v += model.adjacency_gain * mat_vec_row(adjacency, r, x_prev);
        }
        out[r] = v;
    }
}

/// Coarse drift for individual `d` under model `m`.
///
/// `fine_window` is the row-major `[T, N]` trajectory of the scale just below
/// the coarsest over the last completed window (empty when there is only one
/// scale); `others_prev` holds every individual's previous coarse state.
pub fn coarse_transition(
    cfg: &ScaleSystemConfig,
    m: usize,
    d: usize,
    x_prev: &[f64],
    fine_window: &[f64],
    others_prev: &[Vec<f64>],
) -> Result<Vec<f64>> {
    let model = cfg.models.get(m).ok_or(Error::UnknownModel {
        index: m,
        count: cfg.num_models(),
    })?;
    let top = cfg.coarsest();
    let n = cfg.scales[top].state_dim;
    if x_prev.len() != n {
        return Err(Error::dims("coarse state", n, x_prev.len()));
    }
    if others_prev.len() != cfg.num_individuals {
        return Err(Error::dims("neighbor states", cfg.num_individuals, others_prev.len()));
    }
    let summary = if top > 0 {
        let fine = &cfg.scales[top - 1];
        Some(weighted_time_average(
            fine_window,
            fine.state_dim,
            &fine.summary_weights,
        )?)
    } else {
        None
    };
    let neighbors = neighbor_sum(&cfg.interaction, d, others_prev);
    let mut out = vec![0.0; n];
    coarse_drift_into(
        model,
        &cfg.scales[top].adjacency,
        x_prev,
        summary.as_deref(),
        &neighbors,
        &mut out,
    );
    Ok(out)
}

/// Fine drift `cos(offset + A x) + parent_gain · parent + child_gain · summary`.
pub fn fine_drift_into(
    rule: &FineTransition,
    adjacency: &Matrix,
    x_prev: &[f64],
    parent_prev: &[f64],
    child_summary: Option<&[f64]>,
    out: &mut [f64],
) {
    for r in 0..x_prev.len() {
        let mut v = (rule.offset + mat_vec_row(adjacency, r, x_prev)).cos();
        v += rule.parent_gain * parent_prev[r];
        if let Some(s) = child_summary {
            v += rule.child_gain * s[r];
        }
        out[r] = v;
    }
}

/// Drift of fine scale `scale` given the parent's previous state.
pub fn fine_transition(
    cfg: &ScaleSystemConfig,
    scale: usize,
    x_prev: &[f64],
    parent_prev: &[f64],
    child_summary: Option<&[f64]>,
) -> Result<Vec<f64>> {
    if scale >= cfg.coarsest() {
        return Err(Error::dims("fine scale index", cfg.coarsest(), scale));
    }
    let s = &cfg.scales[scale];
    if x_prev.len() != s.state_dim {
        return Err(Error::dims("fine state", s.state_dim, x_prev.len()));
    }
    if parent_prev.len() != s.state_dim {
        return Err(Error::dims("parent state", s.state_dim, parent_prev.len()));
    }
    let mut out = vec![0.0; s.state_dim];
    fine_drift_into(
        &s.transition,
        &s.adjacency,
        x_prev,
        parent_prev,
        child_summary,
        &mut out,
    );
    Ok(out)
}

/// Givens rotation by `theta` in dimensions (0, 1); identity elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct Rotation {
    cos: f64,
    sin: f64,
}

impl Rotation {
    pub fn new(theta: f64) -> Self {
        if theta == 0.0 {
            return Self { cos: 1.0, sin: 0.0 };
        }
        Self {
            cos: theta.cos(),
            sin: theta.sin(),
        }
    }

    #[inline]
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
        if x.len() >= 2 && self.sin != 0.0 {
            out[0] = self.cos * x[0] - self.sin * x[1];
            out[1] = self.sin * x[0] + self.cos * x[1];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }
}

/// Factored noise and measurement rotations for every (scale, individual).
#[derive(Debug, Clone)]
pub struct NoiseBank {
    /// `[scale][individual]`
    pub process: Vec<Vec<Gaussian>>,
    pub measurement: Vec<Vec<Gaussian>>,
    pub rotations: Vec<Rotation>,
}

impl NoiseBank {
    pub fn new(cfg: &ScaleSystemConfig) -> Result<Self> {
        let mut process = Vec::with_capacity(cfg.num_scales());
        let mut measurement = Vec::with_capacity(cfg.num_scales());
        for (l, s) in cfg.scales.iter().enumerate() {
            process.push(
                s.process_noise
                    .iter()
                    .enumerate()
                    .map(|(d, c)| Gaussian::new(c, &format!("scales[{l}].process_noise[{d}]")))
                    .collect::<Result<Vec<_>>>()?,
            );
            measurement.push(
                s.measurement_noise
                    .iter()
                    .enumerate()
                    .map(|(d, c)| Gaussian::new(c, &format!("scales[{l}].measurement_noise[{d}]")))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
        let rotations = cfg.scales.iter().map(|s| Rotation::new(s.rotation)).collect();
        Ok(Self {
            process,
            measurement,
            rotations,
        })
    }

    /// `log N(y - G x | 0, Σ_v[d][l])`.
    pub fn measurement_log_likelihood(&self, scale: usize, d: usize, x: &[f64], y: &[f64]) -> f64 {
        let mut gx = [0.0f64; 8];
        let n = x.len();
        if n <= gx.len() {
            self.rotations[scale].apply_into(x, &mut gx[..n]);
            self.measurement[scale][d].log_density_at(y, &gx[..n])
        } else {
            let gx = self.rotations[scale].apply(x);
            self.measurement[scale][d].log_density_at(y, &gx)
        }
    }
}

/// `G(θ_l) x + v`, `v ~ N(0, Σ_v[d][l])`.
pub fn measure(
    cfg: &ScaleSystemConfig,
    scale: usize,
    d: usize,
    x: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    let s = &cfg.scales[scale];
    if x.len() != s.state_dim {
        return Err(Error::dims("measured state", s.state_dim, x.len()));
    }
    let noise = Gaussian::new(
        &s.measurement_noise[d],
        &format!("scales[{scale}].measurement_noise[{d}]"),
    )?;
    let mut y = Rotation::new(s.rotation).apply(x);
    noise.perturb(&mut y, rng);
    Ok(y)
}
