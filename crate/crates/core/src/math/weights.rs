//! Log-domain weight handling, resampling and window summaries.

use crate::error::{Error, Result};
use crate::math::rng::RngStream;
use crate::math::sampling::check_simplex;

/// Softmax of `log_weights` with max subtraction.
///
/// Returns the normalized weights and `log Σ exp(log_weights)`. All entries
/// `-inf` is reported as [`Error::DegenerateWeights`]; the caller picks the
/// fallback.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if let Some(bad) = log_weights.iter().find(|w| w.is_nan() || **w == f64::INFINITY) {
        return Err(Error::InvalidProbabilities(format!("log-weight {bad}")));
    }
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::DegenerateWeights {
            context: String::new(),
        });
    }
    let mut probs: Vec<f64> = log_weights.iter().map(|w| (w - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    Ok((probs, max + total.ln()))
}

/// `1 / Σ w²` for a normalized weight vector.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    1.0 / weights.iter().map(|w| w * w).sum::<f64>()
}

/// Systematic resampling: one uniform offset, `count` evenly spaced
/// thresholds. Index `i` is drawn `⌊count·wᵢ⌋` or `⌈count·wᵢ⌉` times.
pub fn systematic_resample(weights: &[f64], count: usize, rng: &mut RngStream) -> Result<Vec<usize>> {
    check_simplex(weights)?;
    if count == 0 {
        return Err(Error::InvalidProbabilities("resample count 0".into()));
    }
    let total: f64 = weights.iter().sum();
    let offset = rng.uniform();
    let n = weights.len();
    let mut out = Vec::with_capacity(count);
    let mut j = 0;
    let mut cum = weights[0];
    for k in 0..count {
        let u = (offset + k as f64) / count as f64 * total;
        while j + 1 < n && (u > cum || weights[j] == 0.0) {
            j += 1;
            cum += weights[j];
        }
        out.push(j);
    }
    Ok(out)
}

/// Column-wise weighted mean of a row-major `[T, dim]` trajectory.
pub fn weighted_time_average(traj: &[f64], dim: usize, weights: &[f64]) -> Result<Vec<f64>> {
    if dim == 0 || traj.len() != weights.len() * dim {
        return Err(Error::dims(
            "trajectory rows vs time weights",
            weights.len() * dim,
            traj.len(),
        ));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::ZeroWeightSum);
    }
    let mut out = vec![0.0; dim];
    window_average_into(traj, dim, weights, total, &mut out);
    Ok(out)
}

/// Unchecked core of [`weighted_time_average`]; `total` is `Σ weights`.
pub(crate) fn window_average_into(traj: &[f64], dim: usize, weights: &[f64], total: f64, out: &mut [f64]) {
    out.fill(0.0);
    for (row, &w) in traj.chunks_exact(dim).zip(weights) {
        for (o, x) in out.iter_mut().zip(row) {
            *o += w * x;
        }
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_softmax() {
        let (p, z) = normalize_log_weights(&[0.0; 4]).unwrap();
        assert!(p.iter().all(|v| (v - 0.25).abs() < 1e-15));
        assert!((z - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn no_underflow_far_from_zero() {
        let (p, z) = normalize_log_weights(&[-1000.0, -1001.0]).unwrap();
        let e = (-1.0f64).exp();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert!((p[0] - 0.731).abs() < 1e-3);
        assert!((z - (-1000.0 + (1.0 + e).ln())).abs() < 1e-12);
    }

    #[test]
    fn neg_inf_entries() {
        let (p, _) = normalize_log_weights(&[f64::NEG_INFINITY, 0.0]).unwrap();
        assert_eq!(p, vec![0.0, 1.0]);
        let err = normalize_log_weights(&[f64::NEG_INFINITY; 3]).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { .. }));
        assert!(normalize_log_weights(&[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn resample_point_mass() {
        let mut rng = RngStream::derive(1, &[]);
        for _ in 0..100 {
            let idx = systematic_resample(&[1.0, 0.0, 0.0], 7, &mut rng).unwrap();
            assert!(idx.iter().all(|&i| i == 0));
            let idx = systematic_resample(&[0.0, 0.0, 1.0], 5, &mut rng).unwrap();
            assert!(idx.iter().all(|&i| i == 2));
        }
    }

    #[test]
    fn resample_uniform_is_permutation_free() {
        let mut rng = RngStream::derive(2, &[]);
        for _ in 0..100 {
            let idx = systematic_resample(&[0.25; 4], 4, &mut rng).unwrap();
            assert_eq!(idx, vec![0, 1, 2, 3]);
        }
    }

    #[test]
    fn resample_multiplicity_bound() {
        let w = [0.5, 0.3, 0.2];
        let n = 10_000;
        let mut mean = [0.0; 3];
        let trials = 200;
        for t in 0..trials {
            let mut rng = RngStream::derive(3, &[t]);
            let idx = systematic_resample(&w, n, &mut rng).unwrap();
            let mut counts = [0usize; 3];
            for i in idx {
                counts[i] += 1;
            }
            for i in 0..3 {
                let expected = n as f64 * w[i];
                assert!((counts[i] as f64 - expected).abs() < 1.0, "trial {t}: {counts:?}");
                mean[i] += counts[i] as f64 / trials as f64;
            }
        }
        assert!((mean[0] - 5000.0).abs() < 1.0);
        assert!((mean[1] - 3000.0).abs() < 1.0);
        assert!((mean[2] - 2000.0).abs() < 1.0);
    }

    #[test]
    fn resample_preserves_weighted_mean() {
        let values = [0.3, -1.2, 2.5, 0.9, 4.0];
        let w = [0.1, 0.35, 0.05, 0.3, 0.2];
        let target: f64 = values.iter().zip(&w).map(|(v, w)| v * w).sum();
        let trials = 1000;
        let count = 5;
        let means: Vec<f64> = (0..trials)
            .map(|t| {
                let mut rng = RngStream::derive(4, &[t]);
                let idx = systematic_resample(&w, count, &mut rng).unwrap();
                idx.iter().map(|&i| values[i]).sum::<f64>() / count as f64
            })
            .collect();
        let m = means.iter().sum::<f64>() / trials as f64;
        let var = means.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (trials as f64 - 1.0);
        let se = (var / trials as f64).sqrt();
        assert!((m - target).abs() < 3.0 * se, "{m} vs {target} (se {se})");
    }

    #[test]
    fn resample_rejects_bad_simplex() {
        let mut rng = RngStream::derive(0, &[]);
        assert!(systematic_resample(&[0.5, 0.6], 3, &mut rng).is_err());
        assert!(systematic_resample(&[1.0], 0, &mut rng).is_err());
    }

    #[test]
    fn ess_bounds() {
        assert!((effective_sample_size(&[0.25; 4]) - 4.0).abs() < 1e-12);
        assert!((effective_sample_size(&[1.0, 0.0, 0.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn time_average_cases() {
        let traj = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 3.0, 3.0, 3.0];
        assert_eq!(weighted_time_average(&traj, 3, &[1.0; 3]).unwrap(), vec![2.0; 3]);
        assert_eq!(
            weighted_time_average(&traj, 3, &[0.0, 0.0, 1.0]).unwrap(),
            vec![3.0; 3]
        );
        assert!(matches!(
            weighted_time_average(&traj, 3, &[0.0; 3]),
            Err(Error::ZeroWeightSum)
        ));
        assert!(weighted_time_average(&traj, 3, &[1.0; 2]).is_err());
    }

    #[test]
    fn time_average_loop_oracle() {
        let mut rng = RngStream::derive(12, &[]);
        let (t, n) = (50, 3);
        let traj: Vec<f64> = (0..t * n).map(|_| 4.0 * rng.uniform() - 2.0).collect();
        let w: Vec<f64> = (0..t).map(|_| rng.uniform()).collect();
        let got = weighted_time_average(&traj, n, &w).unwrap();
        for col in 0..n {
            let mut num = 0.0;
            let mut den = 0.0;
            for row in 0..t {
                num += w[row] * traj[row * n + col];
                den += w[row];
            }
            assert!((got[col] - num / den).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant(
            logw in proptest::collection::vec(-50.0f64..50.0, 1..20),
            shift in -1e3f64..1e3,
        ) {
            let (a, za) = normalize_log_weights(&logw).unwrap();
            let shifted: Vec<f64> = logw.iter().map(|w| w + shift).collect();
            let (b, zb) = normalize_log_weights(&shifted).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((zb - za - shift).abs() < 1e-9);
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn systematic_multiplicities_within_one(
            raw in proptest::collection::vec(0.0f64..1.0, 1..12),
            count in 1usize..500,
            seed in any::<u64>(),
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
            let mut rng = RngStream::derive(seed, &[]);
            let idx = systematic_resample(&w, count, &mut rng).unwrap();
            prop_assert_eq!(idx.len(), count);
            let mut counts = vec![0usize; w.len()];
            for i in idx { counts[i] += 1; }
            for (c, wi) in counts.iter().zip(&w) {
                prop_assert!((*c as f64 - count as f64 * wi).abs() < 1.0 + 1e-9);
                if *wi == 0.0 { prop_assert_eq!(*c, 0); }
            }
        }
    }
}
