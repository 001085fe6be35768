//! Accuracy metrics and report tables.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::filter::FilterOutput;
use crate::types::{GroundTruth, Series};

pub const DEFAULT_BURN_IN: usize = 5;

fn check_pair(truth: &Series, est: &Series, what: &str) -> Result<()> {
    if truth.dim() != est.dim() {
        return Err(Error::dims(format!("{what}: dimension"), truth.dim(), est.dim()));
    }
    if truth.steps() != est.steps() {
        return Err(Error::dims(format!("{what}: steps"), truth.steps(), est.steps()));
    }
    Ok(())
}

fn rmse_rows(truth: &[f64], est: &[f64], dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let rows = truth.len() / dim;
    for (a, b) in truth.chunks_exact(dim).zip(est.chunks_exact(dim)) {
        for n in 0..dim {
            acc[n] += (b[n] - a[n]).powi(2);
        }
    }
    acc.into_iter().map(|s| (s / rows as f64).sqrt()).collect()
}

/// RMSE over the full horizon of `scale`, `[individual][dim]`.
pub fn scale_rmse(truth: &GroundTruth, out: &FilterOutput, scale: usize) -> Result<Vec<Vec<f64>>> {
    let (ts, es) = scale_pair(truth, out, scale)?;
    ts.iter()
        .zip(es)
        .enumerate()
        .map(|(d, (t, e))| {
            check_pair(t, e, &format!("scale {scale}, individual {d}"))?;
            Ok(rmse_rows(t.as_flat(), e.as_flat(), t.dim()))
        })
        .collect()
}

fn scale_pair<'a>(
    truth: &'a GroundTruth,
    out: &'a FilterOutput,
    scale: usize,
) -> Result<(&'a [Series], &'a [Series])> {
    let ts = truth
        .states
        .get(scale)
        .ok_or_else(|| Error::dims("truth scales", scale + 1, truth.states.len()))?;
    let es = out
        .state_estimates
        .get(scale)
        .ok_or_else(|| Error::dims("estimate scales", scale + 1, out.state_estimates.len()))?;
    if ts.len() != es.len() {
        return Err(Error::dims("individuals", ts.len(), es.len()));
    }
    Ok((ts, es))
}

/// RMSE at the coarsest scale, `[individual][dim]`.
pub fn coarse_rmse(truth: &GroundTruth, out: &FilterOutput) -> Result<Vec<Vec<f64>>> {
    let top = truth.states.len().checked_sub(1).ok_or_else(|| Error::dims("truth scales", 1, 0))?;
    if out.state_estimates.len() != truth.states.len() {
        return Err(Error::dims("estimate scales", truth.states.len(), out.state_estimates.len()));
    }
    scale_rmse(truth, out, top)
}

/// RMSE of `scale` within each coarse step, `[individual][coarse step][dim]`.
pub fn window_rmse(truth: &GroundTruth, out: &FilterOutput, scale: usize) -> Result<Vec<Vec<Vec<f64>>>> {
    let (ts, es) = scale_pair(truth, out, scale)?;
    let coarse_steps = truth.indicators.first().map_or(0, Vec::len);
    if coarse_steps == 0 {
        return Err(Error::dims("coarse steps", 1, 0));
    }
    ts.iter()
        .zip(es)
        .enumerate()
        .map(|(d, (t, e))| {
            check_pair(t, e, &format!("scale {scale}, individual {d}"))?;
            if t.steps() % coarse_steps != 0 {
                return Err(Error::dims("steps per coarse window", coarse_steps, t.steps()));
            }
            let w = t.steps() / coarse_steps;
            Ok((0..coarse_steps)
                .map(|k| rmse_rows(t.rows(k * w, (k + 1) * w), e.rows(k * w, (k + 1) * w), t.dim()))
                .collect())
        })
        .collect()
}

/// Window RMSE of the finest scale; empty for a single-scale model.
pub fn fine_rmse_per_window(truth: &GroundTruth, out: &FilterOutput) -> Result<Vec<Vec<Vec<f64>>>> {
    if truth.states.len() < 2 {
        return Ok(Vec::new());
    }
    window_rmse(truth, out, 0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchDelay {
    /// 0-based coarse step at which the true regime changes.
    pub step: usize,
    /// Steps until the MAP indicator first matches; `None` if it does not
    /// before the next switch.
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorMetrics {
    pub accuracy: Vec<f64>,
    pub delays: Vec<Vec<SwitchDelay>>,
}

/// Accuracy of `map` over steps `burn_in..` and the delay after every switch.
pub fn indicator_accuracy(truth: &[Vec<usize>], map: &[Vec<usize>], burn_in: usize) -> Result<IndicatorMetrics> {
    if truth.len() != map.len() {
        return Err(Error::dims("indicator individuals", truth.len(), map.len()));
    }
    let mut accuracy = Vec::with_capacity(truth.len());
    let mut delays = Vec::with_capacity(truth.len());
    for (t, m) in truth.iter().zip(map) {
        if t.len() != m.len() {
            return Err(Error::dims("indicator steps", t.len(), m.len()));
        }
        if burn_in >= t.len() {
            return Err(Error::dims("burn-in below horizon", t.len().saturating_sub(1), burn_in));
        }
        let hits = (burn_in..t.len()).filter(|&k| t[k] == m[k]).count();
        accuracy.push(hits as f64 / (t.len() - burn_in) as f64);
        let switches: Vec<usize> = (1..t.len()).filter(|&k| t[k] != t[k - 1]).collect();
        delays.push(
            switches
                .iter()
                .enumerate()
                .map(|(i, &s)| {
                    let end = switches.get(i + 1).copied().unwrap_or(t.len());
                    SwitchDelay {
                        step: s,
                        delay: (s..end).find(|&k| t[k] == m[k]).map(|k| k - s),
                    }
                })
                .collect(),
        );
    }
    Ok(IndicatorMetrics { accuracy, delays })
}

pub fn indicator_metrics(truth: &GroundTruth, out: &FilterOutput, burn_in: usize) -> Result<IndicatorMetrics> {
    indicator_accuracy(&truth.indicators, &out.indicator_map, burn_in)
}

/// Median of `values`; mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `(min, mean, max)`.
pub fn summarize(values: impl IntoIterator<Item = f64>) -> Option<(f64, f64, f64)> {
    let mut n = 0usize;
    let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    (n > 0).then(|| (lo, sum / n as f64, hi))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub burn_in: usize,
    /// `[scale][individual][dim]`
    pub rmse: Vec<Vec<Vec<f64>>>,
    /// Finest-scale RMSE per coarse window, `[individual][coarse step][dim]`.
    pub fine_window_rmse: Vec<Vec<Vec<f64>>>,
    pub accuracy: Vec<f64>,
    pub accuracy_no_burn_in: Vec<f64>,
    pub delays: Vec<Vec<SwitchDelay>>,
}

impl EvalReport {
    pub fn compute(truth: &GroundTruth, out: &FilterOutput, burn_in: usize) -> Result<Self> {
        let rmse = (0..truth.states.len())
            .map(|l| scale_rmse(truth, out, l))
            .collect::<Result<Vec<_>>>()?;
        let with = indicator_metrics(truth, out, burn_in)?;
        let without = indicator_metrics(truth, out, 0)?;
        Ok(Self {
            burn_in,
            rmse,
            fine_window_rmse: fine_rmse_per_window(truth, out)?,
            accuracy: with.accuracy,
            accuracy_no_burn_in: without.accuracy,
            delays: with.delays,
        })
    }

    pub fn coarse_rmse(&self) -> &[Vec<f64>] {
        self.rmse.last().map_or(&[], Vec::as_slice)
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))
}

fn dim_header(lead: &[&str], dim: usize) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((0..dim).map(|n| format!("dim_{n}")))
        .collect()
}

fn write_table(path: &Path, header: Vec<String>, rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(&header).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn fmt_row(lead: &[usize], values: &[f64]) -> Vec<String> {
    lead.iter()
        .map(|v| v.to_string())
        .chain(values.iter().map(|v| v.to_string()))
        .collect()
}

/// Writes `rmse_scale{l}.csv`, `fine_window_rmse.csv`, `indicator_accuracy.csv`,
/// `switch_delays.csv` and `summary.txt` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (l, per_d) in report.rmse.iter().enumerate() {
        let dim = per_d.first().map_or(0, Vec::len);
        write_table(
            &dir.join(format!("rmse_scale{l}.csv")),
            dim_header(&["individual"], dim),
            per_d.iter().enumerate().map(|(d, r)| fmt_row(&[d + 1], r)),
        )?;
    }
    if !report.fine_window_rmse.is_empty() {
        let dim = report.fine_window_rmse[0].first().map_or(0, Vec::len);
        write_table(
            &dir.join("fine_window_rmse.csv"),
            dim_header(&["individual", "coarse_step"], dim),
            report.fine_window_rmse.iter().enumerate().flat_map(|(d, ks)| {
                ks.iter().enumerate().map(move |(k, r)| fmt_row(&[d + 1, k + 1], r))
            }),
        )?;
    }
    write_table(
        &dir.join("indicator_accuracy.csv"),
        vec!["individual".into(), "burn_in".into(), "accuracy".into(), "accuracy_no_burn_in".into()],
        report
            .accuracy
            .iter()
            .zip(&report.accuracy_no_burn_in)
            .enumerate()
            .map(|(d, (a, b))| vec![(d + 1).to_string(), report.burn_in.to_string(), a.to_string(), b.to_string()]),
    )?;
    write_table(
        &dir.join("switch_delays.csv"),
        vec!["individual".into(), "switch_t".into(), "delay".into()],
        report.delays.iter().enumerate().flat_map(|(d, ds)| {
            ds.iter().map(move |s| {
                vec![
                    (d + 1).to_string(),
                    (s.step + 1).to_string(),
                    s.delay.map_or(String::new(), |v| v.to_string()),
                ]
            })
        }),
    )?;
    let path = dir.join("summary.txt");
    fs::write(&path, summary_text(report)).map_err(|e| Error::io(path, e))
}

pub fn summary_text(report: &EvalReport) -> String {
    let mut s = String::new();
    for (l, per_d) in report.rmse.iter().enumerate() {
        if let Some((lo, mean, hi)) = summarize(per_d.iter().flatten().copied()) {
            let _ = writeln!(s, "scale {l} rmse: min {lo:.6} mean {mean:.6} max {hi:.6}");
        }
    }
    if let Some((lo, mean, hi)) = summarize(report.fine_window_rmse.iter().flatten().flatten().copied()) {
        let _ = writeln!(s, "fine window rmse: min {lo:.6} mean {mean:.6} max {hi:.6}");
    }
    if let Some((lo, mean, hi)) = summarize(report.accuracy.iter().copied()) {
        let _ = writeln!(
            s,
            "indicator accuracy (burn-in {}): min {lo:.4} mean {mean:.4} max {hi:.4}",
            report.burn_in
        );
    }
    if let Some((lo, mean, hi)) = summarize(report.accuracy_no_burn_in.iter().copied()) {
        let _ = writeln!(s, "indicator accuracy (no burn-in): min {lo:.4} mean {mean:.4} max {hi:.4}");
    }
    s
}

fn read_records(path: &Path) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(path, e))
}

fn field<T: std::str::FromStr>(path: &Path, rec: &csv::StringRecord, i: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::data(path, format!("bad field {i} in row {rec:?}")))
}

fn tail_f64(path: &Path, rec: &csv::StringRecord, from: usize) -> Result<Vec<f64>> {
    (from..rec.len()).map(|i| field(path, rec, i)).collect()
}

/// Re-reads the tables written by [`emit_report`].
pub fn read_report(dir: &Path) -> Result<EvalReport> {
    let mut rmse = Vec::new();
    for l in 0.. {
        let path = dir.join(format!("rmse_scale{l}.csv"));
        if !path.exists() {
            break;
        }
        rmse.push(
            read_records(&path)?
                .iter()
                .map(|r| tail_f64(&path, r, 1))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    let mut fine_window_rmse: Vec<Vec<Vec<f64>>> = Vec::new();
    let path = dir.join("fine_window_rmse.csv");
    if path.exists() {
        for r in read_records(&path)? {
            let d: usize = field(&path, &r, 0)?;
            if fine_window_rmse.len() < d {
                fine_window_rmse.resize(d, Vec::new());
            }
            fine_window_rmse[d - 1].push(tail_f64(&path, &r, 2)?);
        }
    }
    let path = dir.join("indicator_accuracy.csv");
    let acc = read_records(&path)?;
    let mut burn_in = 0;
    let mut accuracy = Vec::new();
    let mut accuracy_no_burn_in = Vec::new();
    for r in &acc {
        burn_in = field(&path, r, 1)?;
        accuracy.push(field(&path, r, 2)?);
        accuracy_no_burn_in.push(field(&path, r, 3)?);
    }
    let path = dir.join("switch_delays.csv");
    let mut delays = vec![Vec::new(); accuracy.len()];
    for r in read_records(&path)? {
        let d: usize = field(&path, &r, 0)?;
        let t: usize = field(&path, &r, 1)?;
        let delay = match r.get(2) {
            Some("") | None => None,
            Some(_) => Some(field(&path, &r, 2)?),
        };
        delays
            .get_mut(d - 1)
            .ok_or_else(|| Error::data(&path, format!("individual {d} out of range")))?
            .push(SwitchDelay { step: t - 1, delay });
    }
    Ok(EvalReport {
        burn_in,
        rmse,
        fine_window_rmse,
        accuracy,
        accuracy_no_burn_in,
        delays,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::ConjugacyAudit;
    use crate::math::rng::RngStream;

    fn series(steps: usize, dim: usize, f: impl Fn(usize, usize) -> f64) -> Series {
        let data = (0..steps * dim).map(|i| f(i / dim, i % dim)).collect();
        Series::from_flat(dim, data).unwrap()
    }

    fn pair(truth: Vec<Vec<Series>>, est: Vec<Vec<Series>>, indicators: Vec<Vec<usize>>) -> (GroundTruth, FilterOutput) {
        let d = indicators.len();
        let k = indicators[0].len();
        (
            GroundTruth {
                measurements: truth.clone(),
                states: truth,
                indicators: indicators.clone(),
            },
            FilterOutput {
                ess_trace: vec![vec![Vec::new(); d]; est.len()],
                state_estimates: est,
                indicator_map: indicators,
                indicator_freqs: vec![vec![vec![1.0]; k]; d],
                snapshots: Vec::new(),
                conjugacy: ConjugacyAudit::default(),
                degenerate_events: 0,
            },
        )
    }

    fn random(seed: u64, steps: usize, dim: usize) -> Series {
        let mut rng = RngStream::derive(seed, &[]);
        let data = (0..steps * dim).map(|_| 2.0 * rng.uniform() - 1.0).collect();
        Series::from_flat(dim, data).unwrap()
    }

    #[test]
    fn identical_is_zero() {
        let s = random(1, 20, 3);
        let f = random(2, 100, 3);
        let (t, o) = pair(vec![vec![f.clone()], vec![s.clone()]], vec![vec![f], vec![s]], vec![vec![0; 20]]);
        assert!(coarse_rmse(&t, &o).unwrap()[0].iter().all(|v| *v == 0.0));
        let w = fine_rmse_per_window(&t, &o).unwrap();
        assert_eq!(w[0].len(), 20);
        assert!(w[0].iter().flatten().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_offset() {
        let s = random(3, 10, 3);
        let shifted = series(10, 3, |t, n| s.row(t)[n] + if n == 1 { 0.1 } else { 0.0 });
        let (t, o) = pair(vec![vec![s]], vec![vec![shifted]], vec![vec![0; 10]]);
        let r = coarse_rmse(&t, &o).unwrap();
        assert!(r[0][0].abs() < 1e-15);
        assert!((r[0][1] - 0.1).abs() < 1e-12);
        assert!(r[0][2].abs() < 1e-15);
    }

    #[test]
    fn loop_oracle() {
        let (steps, dim, k) = (60, 3, 12);
        let truth: Vec<Series> = (0..4).map(|d| random(10 + d, steps, dim)).collect();
        let est: Vec<Series> = (0..4).map(|d| random(20 + d, steps, dim)).collect();
        let coarse_t: Vec<Series> = (0..4).map(|d| random(30 + d, k, dim)).collect();
        let coarse_e: Vec<Series> = (0..4).map(|d| random(40 + d, k, dim)).collect();
        let (t, o) = pair(
            vec![truth.clone(), coarse_t.clone()],
            vec![est.clone(), coarse_e.clone()],
            vec![vec![0; k]; 4],
        );
        let c = coarse_rmse(&t, &o).unwrap();
        let w = fine_rmse_per_window(&t, &o).unwrap();
        let win = steps / k;
        for d in 0..4 {
            for n in 0..dim {
                let mut s = 0.0;
                for i in 0..k {
                    s += (coarse_e[d].row(i)[n] - coarse_t[d].row(i)[n]).powi(2);
                }
                assert!((c[d][n] - (s / k as f64).sqrt()).abs() < 1e-12);
                for j in 0..k {
                    let mut s = 0.0;
                    for i in j * win..(j + 1) * win {
                        s += (est[d].row(i)[n] - truth[d].row(i)[n]).powi(2);
                    }
                    assert!((w[d][j][n] - (s / win as f64).sqrt()).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn time_permutation_invariance() {
        let a = random(5, 40, 2);
        let b = random(6, 40, 2);
        let mut order: Vec<usize> = (0..40).collect();
        order.reverse();
        order.swap(3, 17);
        let pa = series(40, 2, |t, n| a.row(order[t])[n]);
        let pb = series(40, 2, |t, n| b.row(order[t])[n]);
        let (t1, o1) = pair(vec![vec![a]], vec![vec![b]], vec![vec![0; 40]]);
        let (t2, o2) = pair(vec![vec![pa]], vec![vec![pb]], vec![vec![0; 40]]);
        let r1 = coarse_rmse(&t1, &o1).unwrap();
        let r2 = coarse_rmse(&t2, &o2).unwrap();
        for (x, y) in r1[0].iter().zip(&r2[0]) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch() {
        let (t, mut o) = pair(vec![vec![random(1, 10, 3)]], vec![vec![random(2, 10, 3)]], vec![vec![0; 10]]);
        o.state_estimates[0][0] = random(2, 9, 3);
        assert!(coarse_rmse(&t, &o).is_err());
        o.state_estimates[0][0] = random(2, 10, 2);
        assert!(coarse_rmse(&t, &o).is_err());
    }

    #[test]
    fn indicator_counts() {
        let truth = vec![[vec![0; 33], vec![1; 33], vec![0; 34]].concat()];
        let m = indicator_accuracy(&truth, &truth, 5).unwrap();
        assert_eq!(m.accuracy, vec![1.0]);
        assert_eq!(m.delays[0].len(), 2);
        assert_eq!(m.delays[0][0].step, 33);
        assert_eq!(m.delays[0][1].step, 66);
        assert!(m.delays[0].iter().all(|s| s.delay == Some(0)));

        let mut map = truth.clone();
        map[0][40] = 0;
        map[0][80] = 1;
        let m = indicator_accuracy(&truth, &map, 5).unwrap();
        assert!((m.accuracy[0] - 93.0 / 95.0).abs() < 1e-15);

        let mut late = truth.clone();
        late[0][33] = 0;
        late[0][34] = 0;
        let m = indicator_accuracy(&truth, &late, 5).unwrap();
        assert_eq!(m.delays[0][0].delay, Some(2));

        let never = vec![vec![0; 100]];
        let m = indicator_accuracy(&truth, &never, 0).unwrap();
        assert_eq!(m.delays[0][0].delay, None);
        assert_eq!(m.delays[0][1].delay, Some(0));
        assert!(indicator_accuracy(&truth, &truth, 100).is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn report_round_trip() {
        let (t, o) = pair(
            vec![
                (0..6).map(|d| random(d, 100, 3)).collect(),
                (0..6).map(|d| random(50 + d, 10, 3)).collect(),
            ],
            vec![
                (0..6).map(|d| random(100 + d, 100, 3)).collect(),
                (0..6).map(|d| random(150 + d, 10, 3)).collect(),
            ],
            vec![[vec![0; 3], vec![1; 3], vec![0; 4]].concat(); 6],
        );
        let mut o = o;
        o.indicator_map[2] = vec![0; 10];
        let report = EvalReport::compute(&t, &o, 5).unwrap();
        assert_eq!(report.coarse_rmse().len(), 6);
        assert_eq!(report.coarse_rmse()[0].len(), 3);
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        let back = read_report(dir.path()).unwrap();
        assert_eq!(back, report);
        let table = fs::read_to_string(dir.path().join("rmse_scale1.csv")).unwrap();
        assert_eq!(table.lines().count(), 7);
        assert_eq!(table.lines().next().unwrap(), "individual,dim_0,dim_1,dim_2");
    }

    #[test]
    fn single_step_horizon() {
        let (t, o) = pair(
            vec![vec![random(1, 4, 2)], vec![random(2, 1, 2)]],
            vec![vec![random(3, 4, 2)], vec![random(4, 1, 2)]],
            vec![vec![0]],
        );
        let w = fine_rmse_per_window(&t, &o).unwrap();
        assert_eq!(w[0].len(), 1);
        let report = EvalReport::compute(&t, &o, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        emit_report(&report, dir.path()).unwrap();
        assert_eq!(read_report(dir.path()).unwrap(), report);
    }
}
