//! Particle records and the per-individual cloud.

use std::sync::Arc;

use log::warn;
use smallvec::SmallVec;

use super::regime::{dirichlet_posterior, sample_indicator, CoarseInputs};
use super::{DegeneratePolicy, FilterContext, Resampling, Snapshot};
use crate::dynamics::fine_drift_into;
use crate::error::{Error, Result};
use crate::math::rng::{Purpose, RngStream, CLOUD};
use crate::math::sampling::{sample_categorical, sample_dirichlet};
use crate::math::weights::{effective_sample_size, normalize_log_weights, systematic_resample};
use crate::par;

type Buf = SmallVec<[f64; 8]>;

struct Node {
    model: usize,
    parent: Option<Arc<Node>>,
}

/// Append-only indicator history shared between resampled copies.
#[derive(Clone, Default)]
pub struct History {
    head: Option<Arc<Node>>,
    len: usize,
}

impl History {
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn push(&mut self, model: usize) {
        let parent = self.head.take();
        self.head = Some(Arc::new(Node { model, parent }));
        self.len += 1;
    }

    pub fn last(&self) -> Option<usize> {
        self.head.as_ref().map(|n| n.model)
    }

    /// Most recent first.
    pub fn iter_rev(&self) -> impl Iterator<Item = usize> + '_ {
        let mut cur = self.head.as_deref();
        std::iter::from_fn(move || {
            let node = cur?;
            cur = node.parent.as_deref();
            Some(node.model)
        })
    }

    pub fn to_vec(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.iter_rev().collect();
        v.reverse();
        v
    }

    /// Selections of each of `num_models` models.
    pub fn recount(&self, num_models: usize) -> Vec<u64> {
        let mut c = vec![0u64; num_models.max(self.iter_rev().max().map_or(0, |m| m + 1))];
        for m in self.iter_rev() {
            c[m] += 1;
        }
        c
    }
}

impl Drop for History {
    fn drop(&mut self) {
        let mut cur = self.head.take();
        while let Some(node) = cur {
            cur = match Arc::try_unwrap(node) {
                Ok(mut n) => n.parent.take(),
                Err(_) => None,
            };
        }
    }
}

impl std::fmt::Debug for History {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.to_vec()).finish()
    }
}

impl PartialEq for History {
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter_rev().eq(other.iter_rev())
    }
}

/// One weighted joint hypothesis for a single individual.
#[derive(Debug, PartialEq)]
pub struct Particle {
    /// Position in the cloud after the last resampling; keys the RNG streams.
    pub id: u64,
    /// Current state per scale.
    pub states: Vec<Vec<f64>>,
    /// Running `Σ_t w_t x_t` over the open window of each fine scale.
    pub window_sums: Vec<Vec<f64>>,
    pub history: History,
    /// Selections per model; always the tally of `history`.
    pub counts: Vec<u64>,
    /// Log importance weight per scale.
    pub log_weights: Vec<f64>,
}

impl Clone for Particle {
    fn clone(&self) -> Self {
        Self {
            id: self.id,
            states: self.states.clone(),
            window_sums: self.window_sums.clone(),
            history: self.history.clone(),
            counts: self.counts.clone(),
            log_weights: self.log_weights.clone(),
        }
    }

    fn clone_from(&mut self, src: &Self) {
        self.id = src.id;
        self.states.clone_from(&src.states);
        self.window_sums.clone_from(&src.window_sums);
        self.history.clone_from(&src.history);
        self.counts.clone_from(&src.counts);
        self.log_weights.clone_from(&src.log_weights);
    }
}

/// Weighted mean, ESS and degeneracy flag of one normalize step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepStats {
    pub estimate: Vec<f64>,
    pub ess: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoarseStats {
    pub step: StepStats,
    /// Weight-weighted frequency of the model just selected, per model.
    pub freqs: Vec<f64>,
    pub map_model: usize,
    /// Particles checked by the conjugacy audit and how many disagreed.
    pub audited: u64,
    pub mismatches: u64,
    /// Particles whose indicator posterior had no finite score.
    pub degenerate_indicators: u64,
    pub snapshot: Option<Snapshot>,
}

/// Particles of one individual plus step cursors per scale.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    pub individual: usize,
    pub particles: Vec<Particle>,
    /// Next global step index per scale.
    pub cursor: Vec<usize>,
    spare: Vec<Particle>,
}

/// One cloud per individual, every particle at its initial state.
pub fn init_particles(ctx: &FilterContext) -> Vec<ParticleCloud> {
    (0..ctx.cfg.num_individuals)
        .map(|d| ParticleCloud::new(ctx, d))
        .collect()
}

fn sanitize(ll: f64) -> f64 {
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

impl ParticleCloud {
    pub fn new(ctx: &FilterContext, d: usize) -> Self {
        let cfg = ctx.cfg;
        let n = ctx.fcfg.num_particles;
        let x0 = cfg.initial_states[d];
        let top = cfg.coarsest();
        let template = Particle {
            id: 0,
            states: cfg.scales.iter().map(|s| vec![x0; s.state_dim]).collect(),
            window_sums: cfg.scales[..top]
                .iter()
                .map(|s| vec![0.0; s.state_dim])
                .collect(),
            history: History::default(),
            counts: vec![0; cfg.num_models()],
            log_weights: vec![-(n as f64).ln(); cfg.num_scales()],
        };
        let particles: Vec<Particle> = (0..n)
            .map(|i| {
                let mut p = template.clone();
                p.id = i as u64;
                p
            })
            .collect();
        Self {
            individual: d,
            spare: particles.clone(),
            particles,
            cursor: vec![0; cfg.num_scales()],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    /// Normalized weights at `scale`.
    pub fn weights(&self, scale: usize) -> Result<Vec<f64>> {
        let logw: Vec<f64> = self.particles.iter().map(|p| p.log_weights[scale]).collect();
        Ok(normalize_log_weights(&logw)?.0)
    }

    /// One step of fine scale `l` against measurement `y`.
    ///
    /// Each particle conditions on its own previous state at scale `l + 1`.
    pub fn fine_step(&mut self, ctx: &FilterContext, l: usize, y: &[f64]) -> Result<StepStats> {
        let cfg = ctx.cfg;
        let top = cfg.coarsest();
        if l >= top {
            return Err(Error::dims("fine scale index", top, l));
        }
        let scale = &cfg.scales[l];
        let n = scale.state_dim;
        if y.len() != n {
            return Err(Error::dims("fine measurement", n, y.len()));
        }
        let d = self.individual;
        let g = self.cursor[l];
        let w_t = scale.summary_weights[g % scale.horizon];
        let seed = ctx.fcfg.seed;
        let process = &ctx.noise.process[l][d];
        par::for_each_mut(&mut self.particles, ctx.fcfg.execution, |_, p| {
            let mut rng = RngStream::for_cell(seed, Purpose::Propagate, d, l, p.id, g);
            let mut summary = Buf::new();
            if l > 0 {
                let total = ctx.window_totals[l - 1];
                summary.extend(p.window_sums[l - 1].iter().map(|s| s / total));
                p.window_sums[l - 1].fill(0.0);
            }
            let mut next: Buf = SmallVec::from_elem(0.0, n);
            fine_drift_into(
                &scale.transition,
                &scale.adjacency,
                &p.states[l],
                &p.states[l + 1],
                (l > 0).then_some(&summary[..]),
                &mut next,
            );
            process.perturb(&mut next, &mut rng);
            for (acc, x) in p.window_sums[l].iter_mut().zip(&next) {
                *acc += w_t * x;
            }
            p.states[l].copy_from_slice(&next);
            p.log_weights[l] += sanitize(ctx.noise.measurement_log_likelihood(l, d, &next, y));
        });
        let (weights, degenerate) = self.normalize(ctx, l, g)?;
        let stats = StepStats {
            estimate: self.mean(l, &weights),
            ess: effective_sample_size(&weights),
            degenerate,
        };
        self.resample(ctx, l, g, &weights, stats.ess)?;
        self.cursor[l] += 1;
        Ok(stats)
    }

    /// One coarsest-scale step: regime draw, fresh state, reweight, resample.
    ///
    /// `neighbors` is `Σ_{d'≠d} B x̂_{d'}` over the previous step's estimates.
    pub fn coarse_step(
        &mut self,
        ctx: &FilterContext,
        neighbors: &[f64],
        y: &[f64],
    ) -> Result<CoarseStats> {
        let cfg = ctx.cfg;
        let fcfg = ctx.fcfg;
        let top = cfg.coarsest();
        let n = cfg.scales[top].state_dim;
        if y.len() != n {
            return Err(Error::dims("coarse measurement", n, y.len()));
        }
        if neighbors.len() != n {
            return Err(Error::dims("neighbor term", n, neighbors.len()));
        }
        let d = self.individual;
        let k = self.cursor[top];
        let alpha = &cfg.dirichlet_alpha;
        let num_models = cfg.num_models();
        let policy = fcfg.degenerate_policy;
        let per_particle = par::try_map_mut(&mut self.particles, fcfg.execution, |_, p| -> Result<(bool, bool)> {
            let mut rng = RngStream::for_cell(fcfg.seed, Purpose::Propagate, d, top, p.id, k);
            let params = dirichlet_posterior(alpha, &p.counts);
            let mismatch = fcfg.audit_conjugacy && {
                let recount = p.history.recount(num_models);
                recount != p.counts
                    || p.history.len() != k
                    || params
                        .iter()
                        .zip(alpha.iter().zip(&recount))
                        .any(|(q, (a, c))| *q != a + *c as f64)
            };
            let pi = sample_dirichlet(&params, &mut rng)?;
            let mut summary = Buf::new();
            if top > 0 {
                let total = ctx.window_totals[top - 1];
                summary.extend(p.window_sums[top - 1].iter().map(|s| s / total));
            }
            let inputs = CoarseInputs {
                models: &cfg.models,
                adjacency: &cfg.scales[top].adjacency,
                noise: &ctx.noise,
                scale: top,
                individual: d,
                x_prev: &p.states[top],
                summary: (top > 0).then_some(&summary[..]),
                neighbors,
                measurement: y,
            };
            let (model, degenerate) = match sample_indicator(&inputs, &pi, &mut rng) {
                Ok(draw) => (draw.model, false),
                Err(Error::DegenerateWeights { .. }) if policy == DegeneratePolicy::Uniform => {
                    (sample_categorical(&pi, &mut rng)?, true)
                }
                Err(Error::DegenerateWeights { .. }) => {
                    return Err(Error::DegenerateWeights {
                        context: format!("indicator posterior, individual {d}, coarse step {k}"),
                    })
                }
                Err(e) => return Err(e),
            };
            let mut drift: Buf = SmallVec::from_elem(0.0, n);
            let mut next: Buf = SmallVec::from_elem(0.0, n);
            inputs.propose(model, &mut rng, &mut drift, &mut next);
            let ll = sanitize(inputs.log_likelihood(&next));
            p.states[top].copy_from_slice(&next);
            p.history.push(model);
            p.counts[model] += 1;
            p.log_weights[top] += ll;
            if top > 0 {
                p.window_sums[top - 1].fill(0.0);
            }
            Ok((mismatch, degenerate))
        })?;
        let mismatches = per_particle.iter().filter(|r| r.0).count() as u64;
        let degenerate_indicators = per_particle.iter().filter(|r| r.1).count() as u64;
        if degenerate_indicators > 0 {
            warn!(
                "individual {d}, coarse step {k}: {degenerate_indicators} particle(s) had no finite regime score; drew from the regime probabilities"
            );
        }

        let (weights, degenerate) = self.normalize(ctx, top, k)?;
        let mut freqs = vec![0.0; num_models];
        for (p, w) in self.particles.iter().zip(&weights) {
            if let Some(m) = p.history.last() {
                freqs[m] += w;
            }
        }
        let map_model = freqs
            .iter()
            .enumerate()
            .fold(0, |best, (m, f)| if *f > freqs[best] { m } else { best });
        let snapshot = fcfg.store_snapshots.then(|| Snapshot {
            individual: d,
            step: k,
            states: self.particles.iter().map(|p| p.states[top].clone()).collect(),
            weights: weights.clone(),
            models: self.particles.iter().map(|p| p.history.last().unwrap_or(0)).collect(),
        });
        let step = StepStats {
            estimate: self.mean(top, &weights),
            ess: effective_sample_size(&weights),
            degenerate,
        };
        self.resample(ctx, top, k, &weights, step.ess)?;
        self.cursor[top] += 1;
        Ok(CoarseStats {
            step,
            freqs,
            map_model,
            audited: if fcfg.audit_conjugacy { self.len() as u64 } else { 0 },
            mismatches,
            degenerate_indicators,
            snapshot,
        })
    }

    fn normalize(&mut self, ctx: &FilterContext, l: usize, g: usize) -> Result<(Vec<f64>, bool)> {
        let logw: Vec<f64> = self.particles.iter().map(|p| p.log_weights[l]).collect();
        match normalize_log_weights(&logw) {
            Ok((w, _)) => Ok((w, false)),
            Err(Error::DegenerateWeights { .. }) => {
                let context = format!("individual {}, scale {l}, step {g}", self.individual);
                match ctx.fcfg.degenerate_policy {
                    DegeneratePolicy::Abort => Err(Error::DegenerateWeights { context }),
                    DegeneratePolicy::Uniform => {
                        warn!("all particle weights vanished ({context}); resetting to uniform");
                        let n = self.len();
                        Ok((vec![1.0 / n as f64; n], true))
                    }
                }
            }
            Err(e) => Err(e),
        }
    }

    /// Mean of the state at scale `l` under the product of all scale weights.
    pub fn joint_mean(&self, l: usize) -> Vec<f64> {
        let logw: Vec<f64> = self.particles.iter().map(|p| p.log_weights.iter().sum()).collect();
        match normalize_log_weights(&logw) {
            Ok((w, _)) => self.mean(l, &w),
            Err(_) => self.mean(l, &vec![1.0 / self.len() as f64; self.len()]),
        }
    }

    /// Weighted mean in particle order.
    fn mean(&self, l: usize, weights: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.particles[0].states[l].len()];
        for (p, w) in self.particles.iter().zip(weights) {
            for (o, x) in out.iter_mut().zip(&p.states[l]) {
                *o += w * x;
            }
        }
        out
    }

    fn resample(&mut self, ctx: &FilterContext, l: usize, g: usize, weights: &[f64], ess: f64) -> Result<()> {
        let n = self.len();
        let due = match ctx.fcfg.resampling {
            Resampling::EveryStep => true,
            Resampling::EssBelow(frac) => ess < frac * n as f64,
        };
        if !due {
            for (p, w) in self.particles.iter_mut().zip(weights) {
                p.log_weights[l] = w.ln();
            }
            return Ok(());
        }
        let mut rng = RngStream::for_cell(ctx.fcfg.seed, Purpose::Resample, self.individual, l, CLOUD, g);
        let ancestors = systematic_resample(weights, n, &mut rng)?;
        let source = &self.particles;
        par::for_each_mut(&mut self.spare, ctx.fcfg.execution, |i, dst| {
            dst.clone_from(&source[ancestors[i]]);
            dst.id = i as u64;
            dst.log_weights[l] = -(n as f64).ln();
        });
        std::mem::swap(&mut self.particles, &mut self.spare);
        Ok(())
    }
}
