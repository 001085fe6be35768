//! Multi-seed reproduction of the shipped studies and their acceptance bands.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mspf::config::ConfigFile;
use mspf::eval::{self, EvalReport};
use mspf::filter::ConjugacyAudit;
use mspf::io;
use mspf::presets::Study;
use mspf::{run_filter, simulate};
use rayon::prelude::*;

use crate::{CliError, FilterOptions, Result};

#[derive(Debug, Clone)]
pub struct ReproduceOptions {
    pub seeds: usize,
    pub seed_base: u64,
    pub filter: FilterOptions,
    pub audit_conjugacy: bool,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    pub report: EvalReport,
    pub conjugacy: ConjugacyAudit,
    pub degenerate_events: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Band {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Band {
    fn new(name: impl Into<String>, passed: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            passed,
            detail,
        }
    }

    pub fn line(&self) -> String {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!("{verdict} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub study: Study,
    pub runs: Vec<SeedRun>,
    pub bands: Vec<Band>,
}

impl StudyOutcome {
    pub fn passed(&self) -> bool {
        self.bands.iter().all(|b| b.passed)
    }

    pub fn band_text(&self) -> String {
        let mut s = String::new();
        for b in &self.bands {
            let _ = writeln!(s, "{} {}", self.study.name(), b.line());
        }
        s
    }
}

/// Simulates, filters and evaluates one seed. With `out`, every artifact is
/// written below `out/seed_{seed}`.
pub fn run_seed(file: &ConfigFile, seed: u64, opts: &ReproduceOptions, out: Option<&Path>) -> Result<SeedRun> {
    let mut file = file.clone();
    file.seed = seed;
    let resolved = file.resolve()?;
    let cfg = &resolved.config;
    let schedule = resolved
        .schedule
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no regime schedule to simulate".into()))?;
    let truth = simulate(cfg, schedule)?;
    let mut fcfg = opts.filter.filter_config(seed);
    fcfg.audit_conjugacy = opts.audit_conjugacy;
    let filtered = run_filter(cfg, &fcfg, &truth.measurements)?;
    let report = EvalReport::compute(&truth, &filtered, opts.filter.burn_in)?;
    if let Some(out) = out {
        let dir = out.join(format!("seed_{seed}"));
        io::write_ground_truth(&dir.join("truth"), &truth)?;
        io::write_run_metadata(&dir.join("truth"), &resolved)?;
        io::write_filter_output(&dir.join("filter"), &filtered)?;
        eval::emit_report(&report, &dir.join("report"))?;
        io::write_plot_table(&dir.join("plot.csv"), &truth, &filtered)?;
    }
    Ok(SeedRun {
        seed,
        report,
        conjugacy: filtered.conjugacy,
        degenerate_events: filtered.degenerate_events,
    })
}

pub fn run_study(study: Study, file: &ConfigFile, opts: &ReproduceOptions, out: Option<&Path>) -> Result<StudyOutcome> {
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| mspf::Error::Io {
            path: out.to_path_buf(),
            source: e,
        })?;
    }
    let runs = (0..opts.seeds as u64)
        .into_par_iter()
        .map(|i| run_seed(file, opts.seed_base + i, opts, out))
        .collect::<Result<Vec<_>>>()?;
    let bands = match study {
        Study::Sim1 => sim1_bands(&runs),
        Study::Sim2 => sim2_bands(&runs),
    };
    let outcome = StudyOutcome { study, runs, bands };
    if let Some(out) = out {
        let path = out.join("summary.txt");
        fs::write(&path, aggregate_text(&outcome.runs)).map_err(|e| mspf::Error::Io { path, source: e })?;
    }
    Ok(outcome)
}

/// Coarse RMSE per individual and dimension, averaged over seeds.
pub fn mean_coarse_rmse(runs: &[SeedRun]) -> Vec<Vec<f64>> {
    let mut acc = runs[0].report.coarse_rmse().to_vec();
    for r in &runs[1..] {
        for (a, b) in acc.iter_mut().flatten().zip(r.report.coarse_rmse().iter().flatten()) {
            *a += b;
        }
    }
    let n = runs.len() as f64;
    acc.iter_mut().flatten().for_each(|v| *v /= n);
    acc
}

/// Indicator accuracy per individual, averaged over seeds.
pub fn mean_accuracy(runs: &[SeedRun]) -> Vec<f64> {
    let n = runs.len() as f64;
    (0..runs[0].report.accuracy.len())
        .map(|d| runs.iter().map(|r| r.report.accuracy[d]).sum::<f64>() / n)
        .collect()
}

/// Median delay over every switch of every individual and seed; a switch
/// never detected counts as infinite.
pub fn median_delay(runs: &[SeedRun]) -> Option<f64> {
    let delays: Vec<f64> = runs
        .iter()
        .flat_map(|r| r.report.delays.iter().flatten())
        .map(|s| s.delay.map_or(f64::INFINITY, |d| d as f64))
        .collect();
    eval::median(&delays)
}

/// Share of fine window-RMSE cells below `limit`, pooled over seeds.
pub fn fine_window_share_below(runs: &[SeedRun], limit: f64) -> f64 {
    let (mut below, mut total) = (0usize, 0usize);
    for v in runs.iter().flat_map(|r| r.report.fine_window_rmse.iter().flatten().flatten()) {
        total += 1;
        below += (*v < limit) as usize;
    }
    if total == 0 {
        0.0
    } else {
        below as f64 / total as f64
    }
}

pub fn rmse_band(runs: &[SeedRun], lo: f64, hi: f64) -> Band {
    let rmse = mean_coarse_rmse(runs);
    let (min, mean, max) = eval::summarize(rmse.iter().flatten().copied()).unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    Band::new(
        format!("coarse RMSE per individual and dimension in [{lo}, {hi}]"),
        min >= lo && max <= hi,
        format!("min {min:.4} mean {mean:.4} max {max:.4} over {} seeds", runs.len()),
    )
}

pub fn accuracy_band(runs: &[SeedRun], floor: f64) -> Band {
    let acc = mean_accuracy(runs);
    let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
    let burn_in = runs[0].report.burn_in;
    Band::new(
        format!("indicator accuracy >= {floor} per individual (burn-in {burn_in})"),
        min >= floor,
        format!(
            "per individual [{}]",
            acc.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join(", ")
        ),
    )
}

pub fn mean_accuracy_band(runs: &[SeedRun], floor: f64) -> Band {
    let acc = mean_accuracy(runs);
    let mean = acc.iter().sum::<f64>() / acc.len() as f64;
    Band::new(
        format!("mean indicator accuracy >= {floor}"),
        mean >= floor,
        format!("mean {mean:.4}"),
    )
}

pub fn delay_band(runs: &[SeedRun], limit: f64) -> Band {
    let median = median_delay(runs);
    Band::new(
        format!("median switch delay <= {limit} coarse steps"),
        median.is_some_and(|m| m <= limit),
        median.map_or("no switches".into(), |m| format!("median {m}")),
    )
}

pub fn fine_window_band(runs: &[SeedRun], limit: f64, share: f64) -> Band {
    let got = fine_window_share_below(runs, limit);
    Band::new(
        format!("fine window RMSE < {limit} in >= {:.0}% of cells", share * 100.0),
        got >= share,
        format!("{:.2}% of cells", got * 100.0),
    )
}

pub fn conjugacy_band(runs: &[SeedRun]) -> Band {
    let checked: u64 = runs.iter().map(|r| r.conjugacy.checked).sum();
    let mismatches: u64 = runs.iter().map(|r| r.conjugacy.mismatches).sum();
    Band::new(
        "Dirichlet parameters equal prior plus counts",
        checked > 0 && mismatches == 0,
        format!("{mismatches} mismatches in {checked} particle-steps"),
    )
}

pub fn sim1_bands(runs: &[SeedRun]) -> Vec<Band> {
    vec![
        rmse_band(runs, 0.05, 0.30),
        accuracy_band(runs, 0.90),
        delay_band(runs, 2.0),
        fine_window_band(runs, 0.25, 0.95),
        conjugacy_band(runs),
    ]
}

pub fn sim2_bands(runs: &[SeedRun]) -> Vec<Band> {
    vec![
        rmse_band(runs, 0.05, 0.32),
        accuracy_band(runs, 0.85),
        mean_accuracy_band(runs, 0.90),
        conjugacy_band(runs),
    ]
}

fn aggregate_text(runs: &[SeedRun]) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "seeds: {}", runs.iter().map(|r| r.seed.to_string()).collect::<Vec<_>>().join(" "));
    let _ = writeln!(s, "mean coarse RMSE per individual (rows) and dimension (columns):");
    for row in mean_coarse_rmse(runs) {
        let _ = writeln!(s, "  {}", row.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" "));
    }
    let _ = writeln!(
        s,
        "mean indicator accuracy per individual: {}",
        mean_accuracy(runs).iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>().join(" ")
    );
    if let Some(m) = median_delay(runs) {
        let _ = writeln!(s, "median switch delay: {m}");
    }
    let _ = writeln!(s, "degenerate events: {}", runs.iter().map(|r| r.degenerate_events).sum::<u64>());
    for r in runs {
        let _ = writeln!(s, "\nseed {}", r.seed);
        s.push_str(&eval::summary_text(&r.report));
    }
    s
}
