//! Ground-truth generation for nested time scales.
//!
//! Each coarse step runs the full window of finer steps first (each fine step
//! conditioned on the parent's previous state), then advances the coarse
//! state of every individual from the just-completed window. Coarse steps are
//! synchronous across individuals because of the interaction sum.

use crate::config::ScaleSystemConfig;
use crate::dynamics::{coarse_drift_into, fine_drift_into, neighbor_sum, NoiseBank};
use crate::error::{Error, Result};
use crate::math::rng::{Purpose, RngStream};
use crate::math::weights::weighted_time_average;
use crate::par::{self, Execution};
use crate::schedule::RegimeSchedule;
use crate::types::{GroundTruth, Series};

pub fn build_sim1_schedule(individuals: usize, horizon: usize) -> RegimeSchedule {
    RegimeSchedule::sim1(individuals, horizon)
}

pub fn build_sim2_schedule(horizon: usize) -> RegimeSchedule {
    RegimeSchedule::sim2(horizon)
}

struct Individual {
    d: usize,
    /// Current state per scale.
    current: Vec<Vec<f64>>,
    /// Row-major window buffer per fine scale.
    windows: Vec<Vec<f64>>,
    /// Next global step index per scale.
    cursor: Vec<usize>,
    states: Vec<Series>,
    measurements: Vec<Series>,
}

struct Ctx<'a> {
    cfg: &'a ScaleSystemConfig,
    noise: &'a NoiseBank,
}

impl Individual {
    fn new(cfg: &ScaleSystemConfig, d: usize) -> Self {
        let x0 = cfg.initial_states[d];
        let top = cfg.coarsest();
        Self {
            d,
            current: cfg.scales.iter().map(|s| vec![x0; s.state_dim]).collect(),
            windows: cfg.scales[..top]
                .iter()
                .map(|s| vec![0.0; s.horizon * s.state_dim])
                .collect(),
            cursor: vec![0; cfg.num_scales()],
            states: (0..cfg.num_scales())
                .map(|l| Series::zeros(cfg.total_steps(l), cfg.scales[l].state_dim))
                .collect(),
            measurements: (0..cfg.num_scales())
                .map(|l| Series::zeros(cfg.total_steps(l), cfg.scales[l].state_dim))
                .collect(),
        }
    }

    /// `T_l` steps of scale `l`, each preceded by a window of scale `l - 1`.
    fn run_window(&mut self, ctx: &Ctx, l: usize) -> Result<()> {
        for t in 0..ctx.cfg.scales[l].horizon {
            if l > 0 {
                self.run_window(ctx, l - 1)?;
            }
            self.fine_step(ctx, l, t)?;
        }
        Ok(())
    }

    fn fine_step(&mut self, ctx: &Ctx, l: usize, t: usize) -> Result<()> {
        let scale = &ctx.cfg.scales[l];
        let n = scale.state_dim;
        let summary = if l > 0 {
            let child = &ctx.cfg.scales[l - 1];
            Some(weighted_time_average(
                &self.windows[l - 1],
                child.state_dim,
                &child.summary_weights,
            )?)
        } else {
            None
        };
        let mut next = vec![0.0; n];
        fine_drift_into(
            &scale.transition,
            &scale.adjacency,
            &self.current[l],
            &self.current[l + 1],
            summary.as_deref(),
            &mut next,
        );
        self.commit(ctx, l, next);
        self.windows[l][t * n..(t + 1) * n].copy_from_slice(&self.current[l]);
        Ok(())
    }

    /// Adds process noise, records the state and its measurement.
    fn commit(&mut self, ctx: &Ctx, l: usize, mut next: Vec<f64>) {
        let g = self.cursor[l];
        let seed = ctx.cfg.seed;
        let mut rng = RngStream::for_cell(seed, Purpose::Simulate, self.d, l, 0, g);
        ctx.noise.process[l][self.d].perturb(&mut next, &mut rng);
        let mut rng = RngStream::for_cell(seed, Purpose::Measure, self.d, l, 0, g);
        let y = self.measurements[l].row_mut(g);
        ctx.noise.rotations[l].apply_into(&next, y);
        ctx.noise.measurement[l][self.d].perturb(y, &mut rng);
        self.states[l].row_mut(g).copy_from_slice(&next);
        self.current[l] = next;
        self.cursor[l] += 1;
    }
}

/// Simulate every individual over the full coarse horizon.
pub fn simulate(cfg: &ScaleSystemConfig, schedule: &RegimeSchedule) -> Result<GroundTruth> {
    simulate_with(cfg, schedule, Execution::default())
}

pub fn simulate_with(
    cfg: &ScaleSystemConfig,
    schedule: &RegimeSchedule,
    exec: Execution,
) -> Result<GroundTruth> {
    cfg.ensure_valid()?;
    let top = cfg.coarsest();
    let horizon = cfg.coarse_horizon();
    let problems = schedule.check(cfg.num_individuals, horizon, cfg.num_models());
    if !problems.is_empty() {
        return Err(Error::ConfigParse(problems.join("; ")));
    }
    let noise = NoiseBank::new(cfg)?;
    let ctx = Ctx { cfg, noise: &noise };
    let mut people: Vec<Individual> = (0..cfg.num_individuals)
        .map(|d| Individual::new(cfg, d))
        .collect();

    for k in 0..horizon {
        if top > 0 {
            par::try_for_each_heavy(&mut people, exec, |_, p| p.run_window(&ctx, top - 1))?;
        }
        let previous: Vec<Vec<f64>> = people.iter().map(|p| p.current[top].clone()).collect();
        let coarse = &cfg.scales[top];
        par::try_for_each_heavy(&mut people, exec, |d, p| -> Result<()> {
            let model = &cfg.models[schedule.model(d, k)];
            let summary = if top > 0 {
                let fine = &cfg.scales[top - 1];
                Some(weighted_time_average(
                    &p.windows[top - 1],
                    fine.state_dim,
                    &fine.summary_weights,
                )?)
            } else {
                None
            };
            let neighbors = neighbor_sum(&cfg.interaction, d, &previous);
            let mut next = vec![0.0; coarse.state_dim];
            coarse_drift_into(
                model,
                &coarse.adjacency,
                &previous[d],
                summary.as_deref(),
                &neighbors,
                &mut next,
            );
            p.commit(&ctx, top, next);
            Ok(())
        })?;
    }

    let mut states = vec![Vec::with_capacity(cfg.num_individuals); cfg.num_scales()];
    let mut measurements = vec![Vec::with_capacity(cfg.num_individuals); cfg.num_scales()];
    for p in people {
        for (l, (s, y)) in p.states.into_iter().zip(p.measurements).enumerate() {
            states[l].push(s);
            measurements[l].push(y);
        }
    }
    Ok(GroundTruth {
        states,
        measurements,
        indicators: schedule.rows().to_vec(),
    })
}
