//! Multiscale particle filter with switching regimes at the coarsest scale.
//!
//! Each individual has its own particle cloud. Within a coarse step every
//! fine window is filtered first, each particle conditioning on its own
//! previous coarse state; then the coarse step draws regime probabilities,
//! an indicator and a fresh coarse state per particle. The interaction term
//! uses the previous step's estimates of the other individuals, read at a
//! point where every cloud has finished the same step.

pub mod particle;
pub mod regime;

use log::warn;

use crate::config::{ScaleSystemConfig, Violation};
use crate::dynamics::{neighbor_sum, NoiseBank};
use crate::error::{Error, Result};
use crate::par::{self, Execution};
use crate::types::{check_series_shape, ScaleSeries, Series};

pub use particle::{init_particles, CoarseStats, History, Particle, ParticleCloud, StepStats};
pub use regime::{
    dirichlet_posterior, sample_indicator, sample_model_probabilities, CoarseInputs, IndicatorDraw,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DegeneratePolicy {
    /// Fail with [`Error::DegenerateWeights`].
    Abort,
    /// Reset to uniform weights and log a warning.
    #[default]
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Resampling {
    #[default]
    EveryStep,
    /// Resample only when ESS falls below this fraction of the cloud size.
    EssBelow(f64),
}

/// Which estimate of the other individuals' previous coarse state enters the
/// interaction term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeighborEstimate {
    /// Weighted mean recorded at the previous coarse step.
    Published,
    /// Mean of the same state after the current fine window has reweighted
    /// and resampled each cloud.
    #[default]
    Refined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub num_particles: usize,
    pub seed: u64,
    pub store_snapshots: bool,
    pub degenerate_policy: DegeneratePolicy,
    pub resampling: Resampling,
    pub execution: Execution,
    pub neighbor_estimate: NeighborEstimate,
    /// Recount every particle's history against its Dirichlet parameters.
    pub audit_conjugacy: bool,
}

impl FilterConfig {
    pub fn new(num_particles: usize, seed: u64) -> Self {
        Self {
            num_particles,
            seed,
            store_snapshots: false,
            degenerate_policy: DegeneratePolicy::default(),
            resampling: Resampling::default(),
            execution: Execution::default(),
            neighbor_estimate: NeighborEstimate::default(),
            audit_conjugacy: false,
        }
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut v = Vec::new();
        if self.num_particles == 0 {
            v.push(Violation::new("num_particles", "must be at least 1"));
        }
        if let Resampling::EssBelow(f) = self.resampling {
            if !(f > 0.0 && f <= 1.0) {
                v.push(Violation::new("resampling", format!("ESS fraction {f} outside (0, 1]")));
            }
        }
        v
    }
}

/// Particle cloud of one individual at one coarse step.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub individual: usize,
    pub step: usize,
    /// Coarse state per particle, before resampling.
    pub states: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub models: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConjugacyAudit {
    /// Particle-steps checked.
    pub checked: u64,
    pub mismatches: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutput {
    /// Weighted particle means before resampling, `[scale][individual]`.
    pub state_estimates: ScaleSeries,
    /// MAP regime per individual per coarse step.
    pub indicator_map: Vec<Vec<usize>>,
    /// `[individual][coarse step][model]`
    pub indicator_freqs: Vec<Vec<Vec<f64>>>,
    /// `[scale][individual][step]`
    pub ess_trace: Vec<Vec<Vec<f64>>>,
    pub snapshots: Vec<Snapshot>,
    pub conjugacy: ConjugacyAudit,
    /// Steps whose weights all vanished plus particles with no finite regime score.
    pub degenerate_events: u64,
}

impl FilterOutput {
    pub fn num_models(&self) -> usize {
        self.indicator_freqs
            .first()
            .and_then(|f| f.first())
            .map_or(0, Vec::len)
    }
}

/// Validated configuration plus precomputed noise factors.
#[derive(Debug)]
pub struct FilterContext<'a> {
    pub cfg: &'a ScaleSystemConfig,
    pub fcfg: &'a FilterConfig,
    pub noise: NoiseBank,
    /// `Σ` summary weights per fine scale.
    pub window_totals: Vec<f64>,
}

impl<'a> FilterContext<'a> {
    pub fn new(cfg: &'a ScaleSystemConfig, fcfg: &'a FilterConfig) -> Result<Self> {
        let mut violations = cfg.validate();
        violations.extend(fcfg.validate());
        if !violations.is_empty() {
            return Err(Error::InvalidConfig(violations));
        }
        if fcfg.num_particles == 1 {
            warn!("single-particle filter: resampling is trivial");
        }
        Ok(Self {
            cfg,
            fcfg,
            noise: NoiseBank::new(cfg)?,
            window_totals: cfg.scales[..cfg.coarsest()]
                .iter()
                .map(|s| s.summary_weights.iter().sum())
                .collect(),
        })
    }
}

/// Coarse step for every individual at once.
///
/// `previous` holds each individual's published estimate from the previous
/// coarse step; `measurements[d]` is the coarse observation of individual `d`.
pub fn coarse_step(
    clouds: &mut [ParticleCloud],
    ctx: &FilterContext,
    previous: &[Vec<f64>],
    measurements: &[&[f64]],
) -> Result<Vec<CoarseStats>> {
    let cfg = ctx.cfg;
    if clouds.len() != cfg.num_individuals || previous.len() != cfg.num_individuals {
        return Err(Error::dims("individuals", cfg.num_individuals, clouds.len().min(previous.len())));
    }
    if measurements.len() != cfg.num_individuals {
        return Err(Error::dims("coarse measurements", cfg.num_individuals, measurements.len()));
    }
    let top = cfg.coarsest();
    let k = clouds[0].cursor[top];
    if let Some(c) = clouds.iter().find(|c| c.cursor[top] != k) {
        return Err(Error::dims("coarse step of every cloud", k, c.cursor[top]));
    }
    par::try_map_heavy(clouds, ctx.fcfg.execution, |d, cloud| {
        let nb = neighbor_sum(&cfg.interaction, d, previous);
        cloud.coarse_step(ctx, &nb, measurements[d])
    })
}

struct Track {
    cloud: ParticleCloud,
    estimates: Vec<Series>,
    ess: Vec<Vec<f64>>,
    map: Vec<usize>,
    freqs: Vec<Vec<f64>>,
    snapshots: Vec<Snapshot>,
    audit: ConjugacyAudit,
    degenerate: u64,
}

impl Track {
    fn run_window(&mut self, ctx: &FilterContext, l: usize, y: &ScaleSeries) -> Result<()> {
        let d = self.cloud.individual;
        for _ in 0..ctx.cfg.scales[l].horizon {
            if l > 0 {
                self.run_window(ctx, l - 1, y)?;
            }
            let g = self.cloud.cursor[l];
            let stats = self.cloud.fine_step(ctx, l, y[l][d].row(g))?;
            self.record(l, g, stats);
        }
        Ok(())
    }

    fn record(&mut self, l: usize, g: usize, stats: StepStats) {
        self.estimates[l].row_mut(g).copy_from_slice(&stats.estimate);
        self.ess[l].push(stats.ess);
        self.degenerate += stats.degenerate as u64;
    }

    fn record_coarse(&mut self, top: usize, k: usize, stats: CoarseStats) {
        self.map.push(stats.map_model);
        self.freqs.push(stats.freqs);
        self.audit.checked += stats.audited;
        self.audit.mismatches += stats.mismatches;
        self.degenerate += stats.degenerate_indicators;
        self.snapshots.extend(stats.snapshot);
        self.record(top, k, stats.step);
    }
}

/// Filter every individual over the full coarse horizon.
///
/// `measurements` is indexed `[scale][individual]` with the same shapes as
/// the simulator output.
pub fn run_filter(
    cfg: &ScaleSystemConfig,
    fcfg: &FilterConfig,
    measurements: &ScaleSeries,
) -> Result<FilterOutput> {
    let ctx = FilterContext::new(cfg, fcfg)?;
    check_series_shape(cfg, measurements, "measurements")?;
    let top = cfg.coarsest();
    let horizon = cfg.coarse_horizon();
    let mut tracks: Vec<Track> = init_particles(&ctx)
        .into_iter()
        .map(|cloud| Track {
            cloud,
            estimates: (0..cfg.num_scales())
                .map(|l| Series::zeros(cfg.total_steps(l), cfg.scales[l].state_dim))
                .collect(),
            ess: (0..cfg.num_scales())
                .map(|l| Vec::with_capacity(cfg.total_steps(l)))
                .collect(),
            map: Vec::with_capacity(horizon),
            freqs: Vec::with_capacity(horizon),
            snapshots: Vec::new(),
            audit: ConjugacyAudit::default(),
            degenerate: 0,
        })
        .collect();
    let n_top = cfg.scales[top].state_dim;
    let mut previous: Vec<Vec<f64>> = cfg.initial_states.iter().map(|&x0| vec![x0; n_top]).collect();

    for k in 0..horizon {
        if top > 0 {
            par::try_for_each_heavy(&mut tracks, fcfg.execution, |_, t| {
                t.run_window(&ctx, top - 1, measurements)
            })?;
        }
        if top > 0 && fcfg.neighbor_estimate == NeighborEstimate::Refined {
            for (p, t) in previous.iter_mut().zip(&tracks) {
                *p = t.cloud.joint_mean(top);
            }
        }
        let prev = &previous;
        par::try_for_each_heavy(&mut tracks, fcfg.execution, |d, t| -> Result<()> {
            let nb = neighbor_sum(&cfg.interaction, d, prev);
            let stats = t.cloud.coarse_step(&ctx, &nb, measurements[top][d].row(k))?;
            t.record_coarse(top, k, stats);
            Ok(())
        })?;
        for (p, t) in previous.iter_mut().zip(&tracks) {
            p.copy_from_slice(t.estimates[top].row(k));
        }
    }

    let mut out = FilterOutput {
        state_estimates: vec![Vec::with_capacity(cfg.num_individuals); cfg.num_scales()],
        indicator_map: Vec::with_capacity(cfg.num_individuals),
        indicator_freqs: Vec::with_capacity(cfg.num_individuals),
        ess_trace: vec![Vec::with_capacity(cfg.num_individuals); cfg.num_scales()],
        snapshots: Vec::new(),
        conjugacy: ConjugacyAudit::default(),
        degenerate_events: 0,
    };
    for t in tracks {
        for (l, (est, ess)) in t.estimates.into_iter().zip(t.ess).enumerate() {
            out.state_estimates[l].push(est);
            out.ess_trace[l].push(ess);
        }
        out.indicator_map.push(t.map);
        out.indicator_freqs.push(t.freqs);
        out.snapshots.extend(t.snapshots);
        out.conjugacy.checked += t.audit.checked;
        out.conjugacy.mismatches += t.audit.mismatches;
        out.degenerate_events += t.degenerate;
    }
    out.snapshots.sort_by_key(|s| (s.step, s.individual));
    Ok(out)
}
