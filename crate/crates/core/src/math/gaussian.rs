//! Multivariate normal densities and draws through a cached Cholesky factor.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math::rng::RngStream;

/// A zero-mean Gaussian with a fixed covariance, factored once.
///
/// An all-zero covariance is accepted as the point-mass limit: draws return
/// the mean and the density is 0 (log) at the mean, `-inf` elsewhere. Any
/// other covariance must factor; there is no jitter.
#[derive(Debug, Clone)]
pub struct Gaussian {
    dim: usize,
    /// Row-major lower-triangular factor, `dim * dim` entries.
    chol: Vec<f64>,
    log_norm: f64,
    point_mass: bool,
}

impl Gaussian {
    pub fn new(cov: &DMatrix<f64>, name: &str) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::dims(
                format!("covariance `{name}` columns"),
                cov.nrows(),
                cov.ncols(),
            ));
        }
        let dim = cov.nrows();
        if cov.iter().all(|&v| v == 0.0) {
            return Ok(Self {
                dim,
                chol: vec![0.0; dim * dim],
                log_norm: 0.0,
                point_mass: true,
            });
        }
        let factor = cov
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite {
                name: name.to_string(),
            })?;
        let l = factor.l();
        let mut chol = vec![0.0; dim * dim];
        let mut log_det = 0.0;
        for r in 0..dim {
            for c in 0..=r {
                chol[r * dim + c] = l[(r, c)];
            }
            log_det += 2.0 * l[(r, r)].ln();
        }
        if !log_det.is_finite() {
            return Err(Error::NotPositiveDefinite {
                name: name.to_string(),
            });
        }
        Ok(Self {
            dim,
            chol,
            log_norm: -0.5 * (dim as f64 * (2.0 * PI).ln() + log_det),
            point_mass: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_point_mass(&self) -> bool {
        self.point_mass
    }

    /// `log N(residual | 0, cov)`.
    pub fn log_density(&self, residual: &[f64]) -> f64 {
        debug_assert_eq!(residual.len(), self.dim);
        if self.point_mass {
            return if residual.iter().all(|&r| r == 0.0) {
                0.0
            } else {
                f64::NEG_INFINITY
            };
        }
        let n = self.dim;
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if n <= z.len() {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        let mut quad = 0.0;
        for r in 0..n {
            let row = &self.chol[r * n..r * n + r];
            let acc: f64 = row.iter().zip(z.iter()).map(|(l, zz)| l * zz).sum();
            z[r] = (residual[r] - acc) / self.chol[r * n + r];
            quad += z[r] * z[r];
        }
        self.log_norm - 0.5 * quad
    }

    pub fn log_density_at(&self, x: &[f64], mean: &[f64]) -> f64 {
        let n = self.dim;
        let mut buf = [0.0f64; 8];
        if n <= buf.len() {
            for (b, (xi, mi)) in buf.iter_mut().zip(x.iter().zip(mean)) {
                *b = xi - mi;
            }
            self.log_density(&buf[..n])
        } else {
            let r: Vec<f64> = x.iter().zip(mean).map(|(a, b)| a - b).collect();
            self.log_density(&r)
        }
    }

    /// Writes `mean + L z` into `out`, `z` standard normal.
    pub fn sample_into(&self, mean: &[f64], rng: &mut RngStream, out: &mut [f64]) {
        let n = self.dim;
        debug_assert_eq!(mean.len(), n);
        debug_assert_eq!(out.len(), n);
        if self.point_mass {
            out.copy_from_slice(mean);
            return;
        }
        let mut z = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if n <= z.len() {
            &mut z[..n]
        } else {
            heap = vec![0.0; n];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        for r in 0..n {
            let row = &self.chol[r * n..=r * n + r];
            out[r] = mean[r] + row.iter().zip(z.iter()).map(|(l, zz)| l * zz).sum::<f64>();
        }
    }

    /// Adds a draw of the noise to `x` in place.
    pub fn perturb(&self, x: &mut [f64], rng: &mut RngStream) {
        if self.point_mass {
            return;
        }
        let mut buf = [0.0f64; 8];
        if x.len() <= buf.len() {
            let n = x.len();
            buf[..n].copy_from_slice(x);
            self.sample_into(&buf[..n], rng, x);
        } else {
            let mean = x.to_vec();
            self.sample_into(&mean, rng, x);
        }
    }
}

/// `log N(x | mean, cov)`. Fails if `cov` does not factor.
pub fn gaussian_logpdf(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> Result<f64> {
    check_dims(x.len(), mean.len(), cov)?;
    let g = Gaussian::new(cov, "cov")?;
    if g.is_point_mass() {
        return Err(Error::NotPositiveDefinite {
            name: "cov".to_string(),
        });
    }
    Ok(g.log_density_at(x, mean))
}

/// `mean + chol(cov) z`. The zero matrix is allowed and returns `mean`.
pub fn sample_gaussian(mean: &[f64], cov: &DMatrix<f64>, rng: &mut RngStream) -> Result<Vec<f64>> {
    check_dims(mean.len(), mean.len(), cov)?;
    let g = Gaussian::new(cov, "cov")?;
    let mut out = vec![0.0; mean.len()];
    g.sample_into(mean, rng, &mut out);
    Ok(out)
}

fn check_dims(x: usize, mean: usize, cov: &DMatrix<f64>) -> Result<()> {
    if x != mean {
        return Err(Error::dims("gaussian mean", x, mean));
    }
    if cov.nrows() != x || cov.ncols() != x {
        return Err(Error::dims("gaussian covariance", x, cov.nrows()));
    }
    Ok(())
}
