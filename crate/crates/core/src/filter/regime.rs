//! Regime inference at the coarsest scale.
//!
//! The regime probabilities of a particle have a Dirichlet posterior whose
//! parameters are the prior concentration plus that particle's selection
//! counts. The indicator is then drawn from the product of the drawn
//! probability, the transition density of a candidate state under each
//! regime, and the measurement likelihood of that candidate.

use crate::config::{CoarseModel, Matrix};
use crate::dynamics::{coarse_drift_into, NoiseBank};
use crate::error::{Error, Result};
use crate::math::rng::RngStream;
use crate::math::sampling::{sample_categorical, sample_dirichlet};
use crate::math::weights::normalize_log_weights;

/// `α_m + c_m` for every model.
pub fn dirichlet_posterior(alpha: &[f64], counts: &[u64]) -> Vec<f64> {
    alpha
        .iter()
        .zip(counts)
        .map(|(a, &c)| a + c as f64)
        .collect()
}

/// One draw from `Dir(α + counts)`.
pub fn sample_model_probabilities(
    counts: &[u64],
    alpha: &[f64],
    rng: &mut RngStream,
) -> Result<Vec<f64>> {
    if counts.len() != alpha.len() {
        return Err(Error::dims("model counts", alpha.len(), counts.len()));
    }
    sample_dirichlet(&dirichlet_posterior(alpha, counts), rng)
}

/// Everything about one coarse transition that does not depend on the model.
#[derive(Debug, Clone, Copy)]
pub struct CoarseInputs<'a> {
    pub models: &'a [CoarseModel],
    pub adjacency: &'a Matrix,
    pub noise: &'a NoiseBank,
    pub scale: usize,
    pub individual: usize,
    pub x_prev: &'a [f64],
    /// Window summary of the next finer scale, if any.
    pub summary: Option<&'a [f64]>,
    /// `Σ_{d'≠d} B x_{d'}` for this individual.
    pub neighbors: &'a [f64],
    pub measurement: &'a [f64],
}

impl CoarseInputs<'_> {
    pub fn drift(&self, m: usize, out: &mut [f64]) {
        coarse_drift_into(
            &self.models[m],
            self.adjacency,
            self.x_prev,
            self.summary,
            self.neighbors,
            out,
        );
    }

    /// Drift plus one process-noise draw.
    pub fn propose(&self, m: usize, rng: &mut RngStream, drift: &mut [f64], out: &mut [f64]) {
        self.drift(m, drift);
        self.noise.process[self.scale][self.individual].sample_into(drift, rng, out);
    }

    pub fn log_likelihood(&self, x: &[f64]) -> f64 {
        self.noise
            .measurement_log_likelihood(self.scale, self.individual, x, self.measurement)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorDraw {
    pub model: usize,
    /// Candidate state sampled under each model, `[M][N]`.
    pub candidates: Vec<Vec<f64>>,
    /// Normalized selection probabilities over models.
    pub probabilities: Vec<f64>,
}

/// Sample a candidate per model, score it, and draw the indicator.
///
/// Fails with [`Error::DegenerateWeights`] when every model scores `-inf`.
pub fn sample_indicator(
    inputs: &CoarseInputs,
    probabilities: &[f64],
    rng: &mut RngStream,
) -> Result<IndicatorDraw> {
    let m_count = inputs.models.len();
    if probabilities.len() != m_count {
        return Err(Error::dims("model probabilities", m_count, probabilities.len()));
    }
    let n = inputs.x_prev.len();
    let noise = &inputs.noise.process[inputs.scale][inputs.individual];
    let mut drift = vec![0.0; n];
    let mut candidates = Vec::with_capacity(m_count);
    let mut scores = Vec::with_capacity(m_count);
    for (m, &p) in probabilities.iter().enumerate() {
        let mut x = vec![0.0; n];
        inputs.propose(m, rng, &mut drift, &mut x);
        let score = p.ln() + noise.log_density_at(&x, &drift) + inputs.log_likelihood(&x);
        scores.push(if score.is_nan() { f64::NEG_INFINITY } else { score });
        candidates.push(x);
    }
    let (post, _) = normalize_log_weights(&scores).map_err(|e| match e {
        Error::DegenerateWeights { .. } => Error::DegenerateWeights {
            context: "indicator posterior".into(),
        },
        other => other,
    })?;
    let model = sample_categorical(&post, rng)?;
    Ok(IndicatorDraw {
        model,
        candidates,
        probabilities: post,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{Drift, ScaleSystemConfig};
    use crate::presets;

    fn sim1() -> ScaleSystemConfig {
        presets::sim1().unwrap().config
    }

    #[test]
    fn posterior_mean_after_counts() {
        let mut rng = RngStream::derive(10, &[]);
        let n = 100_000;
        let mut m0 = 0.0;
        for _ in 0..n {
            m0 += sample_model_probabilities(&[3, 0], &[1.0, 1.0], &mut rng).unwrap()[0];
        }
        assert!((m0 / n as f64 - 0.8).abs() < 0.01);
    }

    #[test]
    fn empty_history_draws_prior() {
        // same stream, same parameters: identical to a direct prior draw
        let a = sample_model_probabilities(&[0, 0, 0], &[2.0, 0.5, 1.0], &mut RngStream::derive(4, &[])).unwrap();
        let b = sample_dirichlet(&[2.0, 0.5, 1.0], &mut RngStream::derive(4, &[])).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn prior_dominates_small_counts() {
        let mut rng = RngStream::derive(11, &[]);
        let p = sample_model_probabilities(&[3, 1], &[1e6, 1e6], &mut rng).unwrap();
        assert!((p[0] - 0.5).abs() < 0.01);
    }

    fn inputs<'a>(
        cfg: &'a ScaleSystemConfig,
        noise: &'a NoiseBank,
        neighbors: &'a [f64],
        y: &'a [f64],
    ) -> CoarseInputs<'a> {
        CoarseInputs {
            models: &cfg.models,
            adjacency: &cfg.scales[1].adjacency,
            noise,
            scale: 1,
            individual: 0,
            x_prev: &[0.3, -0.2, 0.9],
            summary: Some(&[0.1, 0.1, 0.1]),
            neighbors,
            measurement: y,
        }
    }

    #[test]
    fn single_model_always_zero() {
        let mut cfg = sim1();
        cfg.models.truncate(1);
        let noise = NoiseBank::new(&cfg).unwrap();
        let nb = [0.0; 3];
        let y = [50.0, -50.0, 3.0];
        let inp = inputs(&cfg, &noise, &nb, &y);
        let mut rng = RngStream::derive(1, &[]);
        for _ in 0..200 {
            assert_eq!(sample_indicator(&inp, &[1.0], &mut rng).unwrap().model, 0);
        }
    }

    #[test]
    fn prior_point_mass_wins() {
        let cfg = sim1();
        let noise = NoiseBank::new(&cfg).unwrap();
        let nb = [0.0; 3];
        let mut drift1 = [0.0; 3];
        let inp = inputs(&cfg, &noise, &nb, &[0.0; 3]);
        inp.drift(1, &mut drift1);
        // measurement sits on model 1, but model 1 has zero prior mass
        let inp = inputs(&cfg, &noise, &nb, &drift1);
        let mut rng = RngStream::derive(2, &[]);
        for _ in 0..500 {
            assert_eq!(sample_indicator(&inp, &[1.0, 0.0], &mut rng).unwrap().model, 0);
        }
    }

    #[test]
    fn likelihood_selects_generating_model() {
        let mut cfg = sim1();
        for c in cfg.scales[1].measurement_noise.iter_mut() {
            *c = Matrix::identity(3, 3) * 1e-4;
        }
        for c in cfg.scales[1].process_noise.iter_mut() {
            *c = Matrix::identity(3, 3) * 0.01;
        }
        let noise = NoiseBank::new(&cfg).unwrap();
        let nb = [0.0; 3];
        let probe = inputs(&cfg, &noise, &nb, &[0.0; 3]);
        let mut d0 = [0.0; 3];
        let mut d1 = [0.0; 3];
        probe.drift(0, &mut d0);
        probe.drift(1, &mut d1);
        let gap: f64 = d0.iter().zip(&d1).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(gap > 1.0, "drifts too close for this check: {gap}");
        let inp = inputs(&cfg, &noise, &nb, &d0);
        let trials = 1000;
        let hits = (0..trials)
            .filter(|&t| {
                let mut rng = RngStream::derive(3, &[t]);
                sample_indicator(&inp, &[0.5, 0.5], &mut rng).unwrap().model == 0
            })
            .count();
        assert!(hits as f64 / trials as f64 > 0.99, "{hits}");
    }

    #[test]
    fn all_models_impossible_is_degenerate() {
        let mut cfg = sim1();
        for c in cfg.scales[1].measurement_noise.iter_mut() {
            *c = Matrix::zeros(3, 3);
        }
        cfg.models[1].drift = Drift::Zero;
        let noise = NoiseBank::new(&cfg).unwrap();
        let nb = [0.0; 3];
        let inp = inputs(&cfg, &noise, &nb, &[100.0; 3]);
        let err = sample_indicator(&inp, &[0.5, 0.5], &mut RngStream::derive(0, &[])).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { .. }));
    }
}
