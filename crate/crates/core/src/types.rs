use crate::config::ScaleSystemConfig;
use crate::error::{Error, Result};

/// Row-major `[steps, dim]` time series of one individual at one scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    dim: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn zeros(steps: usize, dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; steps * dim],
        }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::dims("series row width", dim, data.len()));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dim..(t + 1) * self.dim]
    }

    /// Rows `[start, end)` as one flat slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        &self.data[start * self.dim..end * self.dim]
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }
}

/// Series indexed `[scale][individual]`.
pub type ScaleSeries = Vec<Vec<Series>>;

/// Output of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub states: ScaleSeries,
    pub measurements: ScaleSeries,
    /// True regime per individual per coarse step.
    pub indicators: Vec<Vec<usize>>,
}

/// Checks that `series` has one `[total_steps(l), N_l]` entry per scale and
/// individual.
pub fn check_series_shape(cfg: &ScaleSystemConfig, series: &ScaleSeries, what: &str) -> Result<()> {
    if series.len() != cfg.num_scales() {
        return Err(Error::dims(format!("{what}: scales"), cfg.num_scales(), series.len()));
    }
    for (l, per_d) in series.iter().enumerate() {
        if per_d.len() != cfg.num_individuals {
            return Err(Error::dims(
                format!("{what}: individuals at scale {l}"),
                cfg.num_individuals,
                per_d.len(),
            ));
        }
        for (d, s) in per_d.iter().enumerate() {
            let n = cfg.scales[l].state_dim;
            if s.dim() != n {
                return Err(Error::dims(format!("{what}: dimension at scale {l}, individual {d}"), n, s.dim()));
            }
            let t = cfg.total_steps(l);
            if s.steps() != t {
                return Err(Error::dims(format!("{what}: steps at scale {l}, individual {d}"), t, s.steps()));
            }
        }
    }
    Ok(())
}
