//! Paired sweep execution, CSV output and aggregation.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use smt_sim::{Protocol, RunStats};
use thiserror::Error;

use crate::plan::ExperimentPlan;

pub const CSV_HEADER: [&str; 8] =
    ["protocol", "adversaries", "seed", "delivery_ratio", "mean_delay_s", "localizations", "discoveries", "overhead_packets"];

#[derive(Debug, Error)]
pub enum ExecError {
    #[error("failed to build worker pool: {0}")]
    Pool(String),
    #[error("writing {path}: {source}; {note}")]
    Write { path: PathBuf, source: io::Error, note: String },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("{path}: bad row {row}: {reason}")]
    BadRow { path: PathBuf, row: usize, reason: String },
    #[error("scenario rejected: {0}")]
    Config(#[from] smt_sim::ConfigError),
}

/// One simulator run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub protocol: Protocol,
    pub adversaries: usize,
    pub seed: u64,
    pub delivery_ratio: f64,
    pub mean_delay_s: f64,
    pub localizations: u64,
    pub discoveries: u64,
    pub overhead_packets: u64,
}

impl RunRow {
    pub fn from_stats(adversaries: usize, s: &RunStats) -> Self {
        RunRow {
            protocol: s.protocol,
            adversaries,
            seed: s.seed,
            delivery_ratio: s.delivery_ratio,
            mean_delay_s: s.mean_delay,
            localizations: s.localizations,
            discoveries: s.discoveries,
            overhead_packets: s.overhead_packets,
        }
    }

    fn sort_key(&self) -> (&'static str, usize, u64) {
        (self.protocol.name(), self.adversaries, self.seed)
    }
}

/// Per (protocol, adversary count) summary.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateResult {
    pub protocol: Protocol,
    pub adversaries: usize,
    pub runs: usize,
    pub mean_delivery: f64,
    pub std_delivery: f64,
    pub mean_delay_s: f64,
    pub mean_localizations: f64,
    pub mean_discoveries: f64,
    pub mean_overhead: f64,
    /// APS-SMT over NSP, relative: `(aps - nsp) / nsp`. Only on APS-SMT
    /// rows when NSP ran on the same count and delivered something.
    pub improvement: Option<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Sample standard deviation; zero for fewer than two values.
fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

pub fn aggregate(rows: &[RunRow]) -> Vec<AggregateResult> {
    let mut groups: BTreeMap<(&'static str, usize), Vec<&RunRow>> = BTreeMap::new();
    for r in rows {
        groups.entry((r.protocol.name(), r.adversaries)).or_default().push(r);
    }
    let mut out: Vec<AggregateResult> = groups
        .values()
        .map(|g| {
            let col = |f: &dyn Fn(&RunRow) -> f64| g.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let delivery = col(&|r| r.delivery_ratio);
            AggregateResult {
                protocol: g[0].protocol,
                adversaries: g[0].adversaries,
                runs: g.len(),
                mean_delivery: mean(&delivery),
                std_delivery: std_dev(&delivery),
                mean_delay_s: mean(&col(&|r| r.mean_delay_s)),
                mean_localizations: mean(&col(&|r| r.localizations as f64)),
                mean_discoveries: mean(&col(&|r| r.discoveries as f64)),
                mean_overhead: mean(&col(&|r| r.overhead_packets as f64)),
                improvement: None,
            }
        })
        .collect();
    let nsp: BTreeMap<usize, f64> =
        out.iter().filter(|a| a.protocol == Protocol::Nsp).map(|a| (a.adversaries, a.mean_delivery)).collect();
    for a in out.iter_mut().filter(|a| a.protocol == Protocol::ApsSmt) {
        a.improvement = nsp.get(&a.adversaries).filter(|&&n| n > 0.0).map(|&n| (a.mean_delivery - n) / n);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ExecOptions {
    /// Worker threads; 0 or 1 runs sequentially.
    pub parallel: usize,
    pub log_events: bool,
}

/// Everything one plan execution produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Execution {
    pub rows: Vec<RunRow>,
    pub aggregates: Vec<AggregateResult>,
    /// Full statistics per cell, in row order.
    pub stats: Vec<RunStats>,
}

/// Runs every (protocol, count, seed) cell. Both protocols of a cell share
/// the seed, hence topology, mobility and adversary placement.
pub fn execute(plan: &ExperimentPlan, opts: ExecOptions) -> Result<Execution, ExecError> {
    let mut cells = Vec::new();
    for &p in &plan.protocols {
        for &c in &plan.sweep {
            for &s in &plan.seeds {
                let mut cfg = plan.cell(p, c, s);
                cfg.log_events = opts.log_events;
                cells.push((c, cfg));
            }
        }
    }
    let run_cell = |(c, cfg): &(usize, smt_sim::ScenarioConfig)| smt_sim::run(cfg).map(|s| (*c, s));
    let results: Result<Vec<(usize, RunStats)>, _> = if opts.parallel > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.parallel)
            .build()
            .map_err(|e| ExecError::Pool(e.to_string()))?;
        pool.install(|| cells.par_iter().map(run_cell).collect())
    } else {
        cells.iter().map(run_cell).collect()
    };
    let mut results = results?;
    results.sort_by(|a, b| RunRow::from_stats(a.0, &a.1).sort_key().cmp(&RunRow::from_stats(b.0, &b.1).sort_key()));
    let rows: Vec<RunRow> = results.iter().map(|(c, s)| RunRow::from_stats(*c, s)).collect();
    let aggregates = aggregate(&rows);
    Ok(Execution { rows, aggregates, stats: results.into_iter().map(|(_, s)| s).collect() })
}

/// Raw rows sorted by (protocol, adversaries, seed), then one `seed=ALL`
/// row per (protocol, adversaries) with mean values.
pub fn to_csv(rows: &[RunRow], aggregates: &[AggregateResult]) -> Result<Vec<u8>, ExecError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.protocol.name().to_string(),
            r.adversaries.to_string(),
            r.seed.to_string(),
            format!("{:.6}", r.delivery_ratio),
            format!("{:.6}", r.mean_delay_s),
            r.localizations.to_string(),
            r.discoveries.to_string(),
            r.overhead_packets.to_string(),
        ])?;
    }
    for a in aggregates {
        w.write_record([
            a.protocol.name().to_string(),
            a.adversaries.to_string(),
            "ALL".to_string(),
            format!("{:.6}", a.mean_delivery),
            format!("{:.6}", a.mean_delay_s),
            format!("{:.3}", a.mean_localizations),
            format!("{:.3}", a.mean_discoveries),
            format!("{:.3}", a.mean_overhead),
        ])?;
    }
    w.into_inner().map_err(|e| ExecError::Csv(e.into_error().into()))
}

pub fn write_csv(path: &Path, rows: &[RunRow], aggregates: &[AggregateResult]) -> Result<(), ExecError> {
    let bytes = to_csv(rows, aggregates)?;
    fs::write(path, bytes).map_err(|source| ExecError::Write {
        path: path.to_path_buf(),
        source,
        note: format!("{} computed result rows were not saved", rows.len() + aggregates.len()),
    })
}

/// Raw rows of a results CSV; `seed=ALL` rows are skipped.
pub fn read_csv(path: &Path) -> Result<Vec<RunRow>, ExecError> {
    let text = fs::read(path).map_err(|source| ExecError::Read { path: path.to_path_buf(), source })?;
    let mut rdr = csv::Reader::from_reader(text.as_slice());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(ExecError::BadRow { path: path.to_path_buf(), row: 0, reason: format!("unexpected header {header:?}") });
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |reason: String| ExecError::BadRow { path: path.to_path_buf(), row: i + 1, reason };
        if &rec[2] == "ALL" {
            continue;
        }
        let num = |idx: usize| rec[idx].parse::<f64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[idx])));
        let int = |idx: usize| rec[idx].parse::<u64>().map_err(|e| bad(format!("{}: {e}", CSV_HEADER[idx])));
        rows.push(RunRow {
            protocol: rec[0].parse().map_err(bad)?,
            adversaries: int(1)? as usize,
            seed: int(2)?,
            delivery_ratio: num(3)?,
            mean_delay_s: num(4)?,
            localizations: int(5)?,
            discoveries: int(6)?,
            overhead_packets: int(7)?,
        });
    }
    Ok(rows)
}

/// Event log lines and per-window metrics of every cell, written next to
/// the results file.
pub fn write_logs(out: &Path, exec: &Execution) -> Result<(), ExecError> {
    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExecError::Write { path, source, note: "results were saved, logs were not saved".to_string() }
    };
    let dir = out.with_extension("events");
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    let mut metrics = csv::Writer::from_writer(Vec::new());
    metrics.write_record([
        "protocol",
        "adversaries",
        "seed",
        "route",
        "window",
        "trip_variation",
        "frequency_change",
        "lost",
        "anomaly",
        "trust",
    ])?;
    for (row, stats) in exec.rows.iter().zip(&exec.stats) {
        let name = format!("{}-{}-{}.log", row.protocol.name(), row.adversaries, row.seed);
        let mut text = String::from("time,kind,from,to,packet_id,disposition\n");
        for e in &stats.event_log {
            text.push_str(&e.to_string());
            text.push('\n');
        }
        let path = dir.join(name);
        fs::write(&path, text).map_err(io_err(&path))?;
        for m in &stats.metrics {
            metrics.write_record([
                row.protocol.name().to_string(),
                row.adversaries.to_string(),
                row.seed.to_string(),
                m.route.clone(),
                m.window.to_string(),
                format!("{:.6}", m.trip_variation),
                format!("{:.6}", m.frequency_change),
                m.lost.to_string(),
                format!("{:.6}", m.anomaly),
                format!("{:.6}", m.trust),
            ])?;
        }
    }
    let bytes = metrics.into_inner().map_err(|e| ExecError::Csv(e.into_error().into()))?;
    let path = out.with_extension("metrics.csv");
    fs::write(&path, bytes).map_err(io_err(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(p: Protocol, c: usize, seed: u64, d: f64) -> RunRow {
        RunRow {
            protocol: p,
            adversaries: c,
            seed,
            delivery_ratio: d,
            mean_delay_s: 0.01,
            localizations: 1,
            discoveries: 2,
            overhead_packets: 3,
        }
    }

    #[test]
    fn aggregate_statistics() {
        let rows = vec![
            row(Protocol::ApsSmt, 5, 1, 0.8),
            row(Protocol::ApsSmt, 5, 2, 1.0),
            row(Protocol::Nsp, 5, 1, 0.4),
            row(Protocol::Nsp, 5, 2, 0.6),
        ];
        let agg = aggregate(&rows);
        assert_eq!(agg.len(), 2);
        let aps = &agg[0];
        assert_eq!(aps.protocol, Protocol::ApsSmt);
        assert!((aps.mean_delivery - 0.9).abs() < 1e-12);
        assert!((aps.std_delivery - (0.02f64).sqrt()).abs() < 1e-12);
        assert!((aps.improvement.unwrap() - 0.8).abs() < 1e-12);
        assert_eq!(agg[1].improvement, None);
    }

    #[test]
    fn improvement_needs_both_protocols() {
        let agg = aggregate(&[row(Protocol::ApsSmt, 0, 1, 1.0)]);
        assert_eq!(agg[0].improvement, None);
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![row(Protocol::ApsSmt, 5, 1, 0.75), row(Protocol::Nsp, 5, 1, 0.5)];
        let agg = aggregate(&rows);
        let bytes = to_csv(&rows, &agg).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("protocol,adversaries,seed,delivery_ratio,mean_delay_s,localizations,discoveries,overhead_packets\n"));
        assert_eq!(text.lines().count(), 1 + rows.len() + agg.len());
        assert!(text.contains("APS-SMT,5,ALL,"));
        let dir = std::env::temp_dir().join(format!("smt-csv-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("r.csv");
        fs::write(&path, bytes).unwrap();
        assert_eq!(read_csv(&path).unwrap(), rows);
    }
}
