//! CSV files for simulated data and filter output.
//!
//! Series files have columns `individual, t, dim_0, …` with both indices
//! starting at 1, one file per scale.

use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::config::{ResolvedConfig, ScaleSystemConfig, ScheduleSpec};
use crate::error::{Error, Result};
use crate::filter::FilterOutput;
use crate::types::{check_series_shape, GroundTruth, ScaleSeries, Series};

pub const INDICATORS_FILE: &str = "indicators.csv";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const METADATA_FILE: &str = "metadata.toml";

pub fn series_file(prefix: &str, scale: usize) -> String {
    format!("{prefix}_scale{scale}.csv")
}

fn writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn write_rows<I, R>(path: &Path, header: &[String], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn header(lead: &[&str], tail: impl Iterator<Item = String>) -> Vec<String> {
    lead.iter().map(|s| s.to_string()).chain(tail).collect()
}

fn dims(n: usize) -> impl Iterator<Item = String> {
    (0..n).map(|i| format!("dim_{i}"))
}

/// Writes one `{prefix}_scale{l}.csv` per scale.
pub fn write_scale_series(dir: &Path, prefix: &str, series: &ScaleSeries) -> Result<()> {
    for (l, per_d) in series.iter().enumerate() {
        let n = per_d.first().map_or(0, Series::dim);
        let path = dir.join(series_file(prefix, l));
        write_rows(
            &path,
            &header(&["individual", "t"], dims(n)),
            per_d.iter().enumerate().flat_map(|(d, s)| {
                s.iter_rows().enumerate().map(move |(t, row)| {
                    [(d + 1).to_string(), (t + 1).to_string()]
                        .into_iter()
                        .chain(row.iter().map(f64::to_string))
                        .collect::<Vec<_>>()
                })
            }),
        )?;
    }
    Ok(())
}

fn write_indicator_rows(path: &Path, indicators: &[Vec<usize>]) -> Result<()> {
    write_rows(
        path,
        &header(&["individual", "t", "model"], std::iter::empty()),
        indicators.iter().enumerate().flat_map(|(d, ms)| {
            ms.iter()
                .enumerate()
                .map(move |(t, m)| vec![(d + 1).to_string(), (t + 1).to_string(), m.to_string()])
        }),
    )
}

/// States, measurements and true indicators.
pub fn write_ground_truth(dir: &Path, truth: &GroundTruth) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_scale_series(dir, "states", &truth.states)?;
    write_scale_series(dir, "measurements", &truth.measurements)?;
    write_indicator_rows(&dir.join(INDICATORS_FILE), &truth.indicators)
}

#[derive(Serialize)]
struct Metadata {
    seed: u64,
    num_scales: usize,
    num_individuals: usize,
    num_models: usize,
    /// 1-based `(row, col)` of the random off-diagonal interaction entry.
    #[serde(skip_serializing_if = "Option::is_none")]
    interaction_entry: Option<[usize; 2]>,
    crate_version: &'static str,
}

/// The fully explicit config (every generated matrix spelled out) and a
/// short metadata file.
pub fn write_run_metadata(dir: &Path, resolved: &ResolvedConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let cfg = &resolved.config;
    let mut file = cfg.to_file();
    file.schedule = resolved
        .schedule
        .as_ref()
        .map(|s| ScheduleSpec::Explicit(s.rows().to_vec()));
    let path = dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, file.to_toml()?).map_err(|e| Error::io(&path, e))?;
    let meta = Metadata {
        seed: cfg.seed,
        num_scales: cfg.num_scales(),
        num_individuals: cfg.num_individuals,
        num_models: cfg.num_models(),
        interaction_entry: resolved.interaction_entry.map(|(r, c)| [r + 1, c + 1]),
        crate_version: env!("CARGO_PKG_VERSION"),
    };
    let text = toml::to_string(&meta).map_err(|e| Error::ConfigParse(e.to_string()))?;
    let path = dir.join(METADATA_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let head = r.headers().map_err(|e| Error::csv(path, e))?.clone();
    let rows = r
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(path, e))?;
    Ok((head, rows))
}

fn parse<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.trim().parse().ok()).ok_or_else(|| {
        let line = rec.position().map_or(0, |p| p.line());
        Error::data(path, format!("line {line}: cannot parse column {i}"))
    })
}

/// Reads `{prefix}_scale{l}.csv` for every scale of `cfg` and checks shapes.
pub fn read_scale_series(dir: &Path, prefix: &str, cfg: &ScaleSystemConfig) -> Result<ScaleSeries> {
    let mut out = Vec::with_capacity(cfg.num_scales());
    for l in 0..cfg.num_scales() {
        let path = dir.join(series_file(prefix, l));
        let n = cfg.scales[l].state_dim;
        let steps = cfg.total_steps(l);
        let (head, rows) = records(&path)?;
        if head.len() != n + 2 {
            return Err(Error::dims(
                format!("{} columns", path.display()),
                n + 2,
                head.len(),
            ));
        }
        let mut data = vec![Vec::with_capacity(steps * n); cfg.num_individuals];
        for rec in &rows {
            let d: usize = parse(&path, rec, 0)?;
            let t: usize = parse(&path, rec, 1)?;
            let buf = d
                .checked_sub(1)
                .and_then(|i| data.get_mut(i))
                .ok_or_else(|| Error::data(&path, format!("individual {d} outside 1..={}", cfg.num_individuals)))?;
            if t != buf.len() / n + 1 {
                return Err(Error::data(
                    &path,
                    format!("individual {d}: expected t = {}, found {t}", buf.len() / n + 1),
                ));
            }
            if rec.len() != n + 2 {
                return Err(Error::dims(format!("{} row width", path.display()), n + 2, rec.len()));
            }
            for i in 2..n + 2 {
                buf.push(parse(&path, rec, i)?);
            }
        }
        out.push(
            data.into_iter()
                .map(|v| Series::from_flat(n, v))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    check_series_shape(cfg, &out, prefix)?;
    Ok(out)
}

pub fn read_measurements(dir: &Path, cfg: &ScaleSystemConfig) -> Result<ScaleSeries> {
    read_scale_series(dir, "measurements", cfg)
}

pub fn read_indicators(path: &Path, individuals: usize) -> Result<Vec<Vec<usize>>> {
    let (_, rows) = records(path)?;
    let mut out = vec![Vec::new(); individuals];
    for rec in &rows {
        let d: usize = parse(path, rec, 0)?;
        let t: usize = parse(path, rec, 1)?;
        let m: usize = parse(path, rec, 2)?;
        let v = d
            .checked_sub(1)
            .and_then(|i| out.get_mut(i))
            .ok_or_else(|| Error::data(path, format!("individual {d} outside 1..={individuals}")))?;
        if t != v.len() + 1 {
            return Err(Error::data(path, format!("individual {d}: expected t = {}, found {t}", v.len() + 1)));
        }
        v.push(m);
    }
    Ok(out)
}

pub fn read_ground_truth(dir: &Path, cfg: &ScaleSystemConfig) -> Result<GroundTruth> {
    let indicators = read_indicators(&dir.join(INDICATORS_FILE), cfg.num_individuals)?;
    if let Some(v) = indicators.iter().find(|v| v.len() != cfg.coarse_horizon()) {
        return Err(Error::dims("indicator steps", cfg.coarse_horizon(), v.len()));
    }
    Ok(GroundTruth {
        states: read_scale_series(dir, "states", cfg)?,
        measurements: read_measurements(dir, cfg)?,
        indicators,
    })
}

#[derive(Serialize)]
struct FilterSummary {
    conjugacy_checked: u64,
    conjugacy_mismatches: u64,
    degenerate_events: u64,
}

/// Estimates, indicator estimates, ESS trace, audit counters and, if
/// present, snapshots.
pub fn write_filter_output(dir: &Path, out: &FilterOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_scale_series(dir, "estimates", &out.state_estimates)?;
    let m = out.num_models();
    write_rows(
        &dir.join("indicator_estimates.csv"),
        &header(&["individual", "t", "map_model"], (0..m).map(|i| format!("freq_{i}"))),
        out.indicator_map
            .iter()
            .zip(&out.indicator_freqs)
            .enumerate()
            .flat_map(|(d, (map, freqs))| {
                map.iter().zip(freqs).enumerate().map(move |(t, (mm, f))| {
                    [(d + 1).to_string(), (t + 1).to_string(), mm.to_string()]
                        .into_iter()
                        .chain(f.iter().map(f64::to_string))
                        .collect::<Vec<_>>()
                })
            }),
    )?;
    write_rows(
        &dir.join("ess.csv"),
        &header(&["scale", "individual", "t", "ess"], std::iter::empty()),
        out.ess_trace.iter().enumerate().flat_map(|(l, per_d)| {
            per_d.iter().enumerate().flat_map(move |(d, ess)| {
                ess.iter().enumerate().map(move |(t, e)| {
                    vec![(l + 1).to_string(), (d + 1).to_string(), (t + 1).to_string(), e.to_string()]
                })
            })
        }),
    )?;
    let summary = FilterSummary {
        conjugacy_checked: out.conjugacy.checked,
        conjugacy_mismatches: out.conjugacy.mismatches,
        degenerate_events: out.degenerate_events,
    };
    let path = dir.join("filter_summary.toml");
    let text = toml::to_string(&summary).map_err(|e| Error::ConfigParse(e.to_string()))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    if !out.snapshots.is_empty() {
        let n = out.snapshots[0].states.first().map_or(0, Vec::len);
        write_rows(
            &dir.join("snapshots.csv"),
            &header(&["individual", "t", "particle", "weight", "model"], dims(n)),
            out.snapshots.iter().flat_map(|s| {
                s.states.iter().zip(&s.weights).zip(&s.models).enumerate().map(move |(i, ((x, w), m))| {
                    [
                        (s.individual + 1).to_string(),
                        (s.step + 1).to_string(),
                        (i + 1).to_string(),
                        w.to_string(),
                        m.to_string(),
                    ]
                    .into_iter()
                    .chain(x.iter().map(f64::to_string))
                    .collect::<Vec<_>>()
                })
            }),
        )?;
    }
    Ok(())
}

/// Long-format rows `individual, t, dim, truth, estimate, true_model,
/// map_model` at the coarsest scale, for external plotting.
pub fn write_plot_table(path: &Path, truth: &GroundTruth, out: &FilterOutput) -> Result<()> {
    let top = truth.states.len() - 1;
    write_rows(
        path,
        &header(
            &["individual", "t", "dim", "truth", "estimate", "true_model", "map_model"],
            std::iter::empty(),
        ),
        truth.states[top]
            .iter()
            .zip(&out.state_estimates[top])
            .enumerate()
            .flat_map(|(d, (ts, es))| {
                let ti = &truth.indicators[d];
                let mi = &out.indicator_map[d];
                (0..ts.steps()).flat_map(move |t| {
                    (0..ts.dim()).map(move |n| {
                        vec![
                            (d + 1).to_string(),
                            (t + 1).to_string(),
                            n.to_string(),
                            ts.row(t)[n].to_string(),
                            es.row(t)[n].to_string(),
                            ti[t].to_string(),
                            mi[t].to_string(),
                        ]
                    })
                })
            }),
    )
}
