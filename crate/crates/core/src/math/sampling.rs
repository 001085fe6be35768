use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::math::rng::RngStream;

/// Tolerance on `Σ p = 1` accepted by the discrete samplers.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// One draw from `Dir(alpha)`.
///
/// Gamma variates are combined in log space so that small concentrations,
/// whose gamma draws underflow to zero, still produce a valid simplex point.
pub fn sample_dirichlet(alpha: &[f64], rng: &mut RngStream) -> Result<Vec<f64>> {
    if alpha.is_empty() || alpha.iter().any(|&a| !(a > 0.0) || !a.is_finite()) {
        return Err(Error::InvalidConcentration(alpha.to_vec()));
    }
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        // G(a) = G(a + 1) * U^(1/a)
        let log_g = if a < 1.0 {
            let g = Gamma::new(a + 1.0, 1.0)
                .map_err(|_| Error::InvalidConcentration(alpha.to_vec()))?
                .sample(rng);
            let u = 1.0 - rng.uniform();
            g.ln() + u.ln() / a
        } else {
            Gamma::new(a, 1.0)
                .map_err(|_| Error::InvalidConcentration(alpha.to_vec()))?
                .sample(rng)
                .ln()
        };
        logs.push(log_g);
    }
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logs.iter_mut() {
        *l = (*l - max).exp();
        total += *l;
    }
    for l in logs.iter_mut() {
        *l /= total;
    }
    Ok(logs)
}

pub fn check_simplex(probs: &[f64]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::InvalidProbabilities("empty".into()));
    }
    if let Some(p) = probs.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
        return Err(Error::InvalidProbabilities(format!("entry {p}")));
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::InvalidProbabilities(format!("sum {sum}")));
    }
    Ok(())
}

/// Index `m` with probability `probs[m]`.
pub fn sample_categorical(probs: &[f64], rng: &mut RngStream) -> Result<usize> {
    check_simplex(probs)?;
    let total: f64 = probs.iter().sum();
    let u = rng.uniform() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (m, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = m;
            if u < acc {
                return Ok(m);
            }
        }
    }
    Ok(last_positive)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_concentration_limit() {
        let mut rng = RngStream::derive(1, &[]);
        let p = sample_dirichlet(&[1e9, 1e9], &mut rng).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-3 && (p[1] - 0.5).abs() < 1e-3);
    }

    #[test]
    fn dirichlet_analytic_mean() {
        let mut rng = RngStream::derive(2, &[]);
        let n = 100_000;
        let mut mean = [0.0; 2];
        for _ in 0..n {
            let p = sample_dirichlet(&[4.0, 1.0], &mut rng).unwrap();
            mean[0] += p[0];
            mean[1] += p[1];
        }
        assert!((mean[0] / n as f64 - 0.8).abs() < 0.01);
        assert!((mean[1] / n as f64 - 0.2).abs() < 0.01);
    }

    #[test]
    fn dirichlet_small_alpha_stays_on_simplex() {
        let mut rng = RngStream::derive(3, &[]);
        let mut mean = 0.0;
        let n = 50_000;
        for _ in 0..n {
            let p = sample_dirichlet(&[0.01, 0.03], &mut rng).unwrap();
            assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            mean += p[0];
        }
        // E[p0] = 0.25; var = 0.25*0.75/1.04
        assert!((mean / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn dirichlet_rejects_nonpositive() {
        let mut rng = RngStream::derive(0, &[]);
        assert!(sample_dirichlet(&[0.0, 1.0], &mut rng).is_err());
        assert!(sample_dirichlet(&[-1.0, 1.0], &mut rng).is_err());
        assert!(sample_dirichlet(&[f64::NAN], &mut rng).is_err());
    }

    #[test]
    fn dirichlet_deterministic() {
        let a = sample_dirichlet(&[2.0, 3.0, 0.5], &mut RngStream::derive(8, &[1])).unwrap();
        let b = sample_dirichlet(&[2.0, 3.0, 0.5], &mut RngStream::derive(8, &[1])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn categorical_point_mass() {
        let mut rng = RngStream::derive(4, &[]);
        for _ in 0..1000 {
            assert_eq!(sample_categorical(&[1.0, 0.0], &mut rng).unwrap(), 0);
            assert_eq!(sample_categorical(&[0.0, 1.0, 0.0], &mut rng).unwrap(), 1);
        }
    }

    #[test]
    fn categorical_frequencies() {
        let mut rng = RngStream::derive(5, &[]);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| sample_categorical(&[0.25, 0.75], &mut rng).unwrap() == 0)
            .count();
        assert!((hits as f64 / n as f64 - 0.25).abs() < 0.01);
    }

    #[test]
    fn categorical_errors_and_determinism() {
        let mut rng = RngStream::derive(6, &[]);
        assert!(sample_categorical(&[-0.1, 1.1], &mut rng).is_err());
        assert!(sample_categorical(&[0.5, 0.4], &mut rng).is_err());
        assert!(sample_categorical(&[], &mut rng).is_err());
        let a = sample_categorical(&[0.2, 0.3, 0.5], &mut RngStream::derive(9, &[2])).unwrap();
        let b = sample_categorical(&[0.2, 0.3, 0.5], &mut RngStream::derive(9, &[2])).unwrap();
        assert_eq!(a, b);
    }
}
