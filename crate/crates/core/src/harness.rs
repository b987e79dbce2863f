//! Experiment plumbing: trace files, summaries, seed × strategy grids, the
//! RMSE study, subset dumps and Nyström reports.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::BetaSchedule;
use crate::bo::{run_with, ExperimentRecord, Phase, RunConfig, Strategy};
use crate::buffer::MonotonicClock;
use crate::error::{Error, Result};
use crate::kernel::{build_gram, kernel_eval, KernelFamily, KernelHyperparams};
use crate::nystrom::{self, EquivalenceTrace, NystromReport, Selector};
use crate::rng::stream;
use crate::testfns::Objective;

/// Fixed leading columns of a trace file; `prior_std`, `y` and `x0..` follow.
pub const TRACE_COLUMNS: [&str; 9] = [
    "t",
    "strategy",
    "seed",
    "best_so_far",
    "regret",
    "cum_regret",
    "iter_time_ms",
    "subset_size",
    "phase",
];

/// One parsed trace line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvRow {
    pub t: usize,
    pub strategy: Strategy,
    pub seed: u64,
    pub best_so_far: f64,
    pub regret: f64,
    pub cum_regret: f64,
    pub iter_time_ms: f64,
    pub subset_size: usize,
    pub phase: Phase,
    pub prior_std: Option<f64>,
    pub y: f64,
    pub x: Vec<f64>,
}

pub fn trace_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = TRACE_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.push("prior_std".into());
    h.push("y".into());
    h.extend((0..dim).map(|j| format!("x{j}")));
    h
}

pub fn trace_rows(record: &ExperimentRecord) -> Vec<CsvRow> {
    record
        .rows
        .iter()
        .map(|r| CsvRow {
            t: r.t,
            strategy: record.strategy,
            seed: record.seed,
            best_so_far: r.best_so_far,
            regret: r.regret,
            cum_regret: r.cum_regret,
            iter_time_ms: r.iter_time_s * 1e3,
            subset_size: r.subset_size,
            phase: r.phase,
            prior_std: r.prior_std,
            y: r.y,
            x: r.x.clone(),
        })
        .collect()
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

/// Write a trace. Floats use the shortest representation that parses back
/// to the same value.
pub fn write_trace<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.x.len());
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trace_header(dim)).map_err(csv_err)?;
    for r in rows {
        let mut rec = vec![
            r.t.to_string(),
            r.strategy.to_string(),
            r.seed.to_string(),
            r.best_so_far.to_string(),
            r.regret.to_string(),
            r.cum_regret.to_string(),
            r.iter_time_ms.to_string(),
            r.subset_size.to_string(),
            r.phase.to_string(),
            r.prior_std.map(|v| v.to_string()).unwrap_or_default(),
            r.y.to_string(),
        ];
        rec.extend(r.x.iter().map(|v| v.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<CsvRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(csv_err)?.clone();
    let fixed = TRACE_COLUMNS.len() + 2;
    if header.len() < fixed || header.iter().zip(trace_header(0)).any(|(a, b)| a != b) {
        return Err(Error::Config("unexpected trace header".into()));
    }
    let bad = |line: usize, what: &str| Error::Config(format!("trace line {line}: bad {what}"));
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = i + 2;
        let f = |k: usize| rec[k].parse::<f64>().map_err(|_| bad(line, &header[k]));
        let u = |k: usize| rec[k].parse::<usize>().map_err(|_| bad(line, &header[k]));
        rows.push(CsvRow {
            t: u(0)?,
            strategy: rec[1].parse()?,
            seed: rec[2].parse().map_err(|_| bad(line, "seed"))?,
            best_so_far: f(3)?,
            regret: f(4)?,
            cum_regret: f(5)?,
            iter_time_ms: f(6)?,
            subset_size: u(7)?,
            phase: rec[8].parse()?,
            prior_std: if rec[9].is_empty() { None } else { Some(f(9)?) },
            y: f(10)?,
            x: (fixed..rec.len()).map(f).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Per-(objective, strategy) aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub objective: String,
    pub strategy: Strategy,
    pub seeds: usize,
    pub cum_regret_mean: f64,
    pub cum_regret_std: f64,
    pub wall_time_ms_mean: f64,
    /// Mean wall time relative to the `full` strategy on the same objective.
    pub runtime_ratio: Option<f64>,
    pub switch_t_mean: Option<f64>,
    pub info_gain_mean: Option<f64>,
}

/// A parsed trace with the metadata the summary needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    pub objective: String,
    pub noise: f64,
    pub rows: Vec<CsvRow>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (m, var.sqrt())
}

/// Aggregate traces. Every number is derived from the trace rows alone.
pub fn summarize(traces: &[TraceSet]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, String), Vec<&TraceSet>> = BTreeMap::new();
    for t in traces.iter().filter(|t| !t.rows.is_empty()) {
        groups
            .entry((t.objective.clone(), t.rows[0].strategy.to_string()))
            .or_default()
            .push(t);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((objective, _), ts)| {
            let strategy = ts[0].rows[0].strategy;
            let cum: Vec<f64> = ts.iter().map(|t| t.rows.last().unwrap().cum_regret).collect();
            let time: Vec<f64> = ts
                .iter()
                .map(|t| t.rows.iter().map(|r| r.iter_time_ms).sum())
                .collect();
            let switches: Vec<f64> = ts
                .iter()
                .filter_map(|t| {
                    t.rows
                        .iter()
                        .find(|r| r.phase == Phase::Selected)
                        .map(|r| r.t as f64)
                })
                .collect();
            let gains: Vec<f64> = ts
                .iter()
                .filter_map(|t| {
                    let stds: Vec<f64> = t.rows.iter().filter_map(|r| r.prior_std).collect();
                    crate::bo::information_gain(&stds, t.noise).ok()
                })
                .collect();
            let (cm, cs) = mean_std(&cum);
            SummaryRow {
                objective,
                strategy,
                seeds: ts.len(),
                cum_regret_mean: cm,
                cum_regret_std: cs,
                wall_time_ms_mean: mean_std(&time).0,
                runtime_ratio: None,
                switch_t_mean: (!switches.is_empty()).then(|| mean_std(&switches).0),
                info_gain_mean: (gains.len() == ts.len()).then(|| mean_std(&gains).0),
            }
        })
        .collect();
    let full_time: BTreeMap<String, f64> = rows
        .iter()
        .filter(|r| r.strategy == Strategy::Full)
        .map(|r| (r.objective.clone(), r.wall_time_ms_mean))
        .collect();
    for r in &mut rows {
        if let Some(&ft) = full_time.get(&r.objective) {
            if ft > 0.0 {
                r.runtime_ratio = Some(r.wall_time_ms_mean / ft);
            }
        }
    }
    rows
}

/// A grid of runs: every objective × strategy × seed with shared settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub objectives: Vec<String>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// Settings shared by every cell; its objective, strategy and seed are
    /// overridden per cell.
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub plot_data: bool,
}

impl GridConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GridConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("line {}, column {}: {e}", e.line(), e.column())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::Config("no strategies".into()));
        }
        if self.objectives.is_empty() {
            return Err(Error::Config("no objectives".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no seeds".into()));
        }
        for c in self.cells() {
            c.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for obj in &self.objectives {
            for &strategy in &self.strategies {
                for &seed in &self.seeds {
                    out.push(RunConfig {
                        objective: obj.clone(),
                        strategy,
                        seed,
                        ..self.run.clone()
                    });
                }
            }
        }
        out
    }
}

pub fn trace_file_name(objective: &str, strategy: Strategy, seed: u64) -> String {
    format!("{objective}_{strategy}_seed{seed}.csv")
}

/// Files written for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutput {
    pub trace: PathBuf,
    pub subsets: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub objective: String,
    pub strategy: Strategy,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<CellFailure>,
}

/// Run one configuration and write its trace (and subset dump, if traced)
/// into `out_dir`.
pub fn run_cell(config: &RunConfig, out_dir: &Path) -> Result<(ExperimentRecord, CellOutput)> {
    let record = crate::bo::run(config)?;
    let output = write_record(&record, out_dir)?;
    Ok((record, output))
}

pub fn write_record(record: &ExperimentRecord, out_dir: &Path) -> Result<CellOutput> {
    fs::create_dir_all(out_dir)?;
    let trace = out_dir.join(trace_file_name(&record.objective, record.strategy, record.seed));
    write_trace(fs::File::create(&trace)?, &trace_rows(record))?;
    let subsets = match &record.subsets {
        Some(_) => {
            let p = trace.with_extension("subsets.csv");
            subset_dump(record, fs::File::create(&p)?)?;
            Some(p)
        }
        None => None,
    };
    Ok(CellOutput { trace, subsets })
}

/// Run every cell on a pool of `jobs` workers, write one trace per cell and
/// `summary.json`. Failed cells are listed in the summary; the rest of the
/// grid still runs.
pub fn run_grid(config: &GridConfig, out_dir: &Path, jobs: usize) -> Result<GridSummary> {
    config.validate()?;
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let cells = config.cells();
    let results: Vec<std::result::Result<(TraceSet, ExperimentRecord), CellFailure>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                run_cell(cell, out_dir)
                    .map(|(rec, _)| {
                        let set = TraceSet {
                            objective: rec.objective.clone(),
                            noise: rec.noise,
                            rows: trace_rows(&rec),
                        };
                        (set, rec)
                    })
                    .map_err(|e| CellFailure {
                        objective: cell.objective.clone(),
                        strategy: cell.strategy,
                        seed: cell.seed,
                        error: e.to_string(),
                    })
            })
            .collect()
    });
    let mut traces = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok((t, rec)) => {
                traces.push(t);
                records.push(rec);
            }
            Err(f) => failures.push(f),
        }
    }
    let summary = GridSummary {
        rows: summarize(&traces),
        failures,
    };
    fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    if config.plot_data {
        write_plot_data(&records, out_dir, 100)?;
    }
    Ok(summary)
}

/// Re-read every trace in `out_dir` and aggregate them again.
pub fn summarize_dir(out_dir: &Path, noise: f64) -> Result<Vec<SummaryRow>> {
    let mut traces = Vec::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(out_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.ends_with(".csv") && !name.ends_with(".subsets.csv") && name.contains("_seed")
        })
        .collect();
    entries.sort();
    for p in entries {
        let rows = read_trace(fs::File::open(&p)?)?;
        let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        let strategy = rows.first().map(|r| r.strategy.to_string()).unwrap_or_default();
        let objective = name
            .rsplit_once(&format!("_{strategy}_seed"))
            .map(|(o, _)| o.to_string())
            .unwrap_or_default();
        traces.push(TraceSet {
            objective,
            noise,
            rows,
        });
    }
    Ok(summarize(&traces))
}

/// Downsampled mean/std cumulative regret and mean cumulative time per
/// (objective, strategy), one file per objective, for external plotting.
pub fn write_plot_data(
    records: &[ExperimentRecord],
    out_dir: &Path,
    max_points: usize,
) -> Result<Vec<PathBuf>> {
    let mut by_obj: BTreeMap<&str, BTreeMap<String, Vec<&ExperimentRecord>>> = BTreeMap::new();
    for r in records {
        by_obj
            .entry(&r.objective)
            .or_default()
            .entry(r.strategy.to_string())
            .or_default()
            .push(r);
    }
    let mut files = Vec::new();
    for (obj, strategies) in by_obj {
        let path = out_dir.join(format!("plot_{obj}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        w.write_record([
            "strategy",
            "t",
            "cum_regret_mean",
            "cum_regret_std",
            "cum_time_ms_mean",
        ])
        .map_err(csv_err)?;
        for (name, recs) in strategies {
            let len = recs.iter().map(|r| r.rows.len()).min().unwrap_or(0);
            let stride = len.div_ceil(max_points.max(1)).max(1);
            let mut cum_time = vec![0.0; recs.len()];
            for i in 0..len {
                for (k, r) in recs.iter().enumerate() {
                    cum_time[k] += r.rows[i].iter_time_s * 1e3;
                }
                if (i + 1) % stride != 0 && i + 1 != len {
                    continue;
                }
                let cum: Vec<f64> = recs.iter().map(|r| r.rows[i].cum_regret).collect();
                let (m, s) = mean_std(&cum);
                w.write_record([
                    name.clone(),
                    recs[0].rows[i].t.to_string(),
                    m.to_string(),
                    s.to_string(),
                    mean_std(&cum_time).0.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        w.flush()?;
        files.push(path);
    }
    Ok(files)
}

/// One line per post-switch iteration: `t`, the newest index, then the
/// retained indices.
pub fn subset_dump<W: Write>(record: &ExperimentRecord, out: W) -> Result<usize> {
    let trace = record
        .subsets
        .as_ref()
        .ok_or_else(|| Error::Config("subset tracing was not enabled for this run".into()))?;
    let mut w = csv::WriterBuilder::new().flexible(true).from_writer(out);
    w.write_record(["t", "newest", "indices"]).map_err(csv_err)?;
    for st in trace {
        let mut rec = vec![st.t.to_string(), st.newest.to_string()];
        rec.extend(st.indices.iter().map(|i| i.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(trace.len())
}

/// `√(mean((pred - truth)²))`
pub fn rmse(pred: &[f64], truth: &[f64]) -> f64 {
    assert_eq!(pred.len(), truth.len());
    if pred.is_empty() {
        return 0.0;
    }
    let s: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    (s / pred.len() as f64).sqrt()
}

/// Seeded uniform test points in the objective's box with their noiseless
/// values.
pub fn test_grid(objective: &Objective, size: usize, seed: u64) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut rng = stream(seed, 0x7E57);
    let xs: Vec<Vec<f64>> = (0..size)
        .map(|_| {
            objective
                .bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..=hi))
                .collect()
        })
        .collect();
    let fs = xs.iter().map(|x| objective.evaluate(x)).collect::<Result<_>>()?;
    Ok((xs, fs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseSeries {
    pub strategy: Strategy,
    pub seed: u64,
    /// `(t, rmse)` for every iteration from the study start.
    pub points: Vec<(usize, f64)>,
}

impl RmseSeries {
    pub fn mean(&self) -> f64 {
        self.points.iter().map(|p| p.1).sum::<f64>() / self.points.len().max(1) as f64
    }
}

/// Run `config` and measure the surrogate's RMSE on `grid` after every
/// iteration with `t >= start_t`.
pub fn run_with_rmse(
    config: &RunConfig,
    grid: &(Vec<Vec<f64>>, Vec<f64>),
    start_t: usize,
) -> Result<(ExperimentRecord, RmseSeries)> {
    let mut points = Vec::new();
    let mut failure = None;
    let record = run_with(config, &mut MonotonicClock::default(), &mut |view| {
        if view.t < start_t || failure.is_some() {
            return;
        }
        match view.surrogate.predict_mean_batch(&grid.0) {
            Ok(pred) => points.push((view.t, rmse(&pred, &grid.1))),
            Err(e) => failure = Some(e),
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let series = RmseSeries {
        strategy: config.strategy,
        seed: config.seed,
        points,
    };
    Ok((record, series))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RmseConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub grid_seed: u64,
    /// First iteration included; defaults to the first post-switch
    /// iteration with a fixed buffer, else the first BO iteration.
    #[serde(default)]
    pub start_t: Option<usize>,
}

fn default_grid_size() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseStudy {
    pub objective: String,
    pub start_t: usize,
    pub series: Vec<RmseSeries>,
    /// Mean over seeds of each run's mean RMSE, by strategy.
    pub mean_by_strategy: BTreeMap<String, f64>,
}

pub fn rmse_study(config: &RmseConfig, jobs: usize) -> Result<RmseStudy> {
    if config.strategies.is_empty() {
        return Err(Error::Config("no strategies".into()));
    }
    if config.seeds.is_empty() {
        return Err(Error::Config("no seeds".into()));
    }
    config.run.validate()?;
    let objective = config.run.objective()?;
    let grid = test_grid(&objective, config.grid_size, config.grid_seed)?;
    let start_t = config
        .start_t
        .unwrap_or_else(|| config.run.fixed_m.map_or(config.run.n0 + 1, |m| m + 1));
    let mut cells = Vec::new();
    for &strategy in &config.strategies {
        for &seed in &config.seeds {
            cells.push(RunConfig {
                strategy,
                seed,
                ..config.run.clone()
            });
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let series: Vec<RmseSeries> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| run_with_rmse(c, &grid, start_t).map(|(_, s)| s))
            .collect::<Result<_>>()
    })?;
    let mut mean_by_strategy = BTreeMap::new();
    for &s in &config.strategies {
        let v: Vec<f64> = series
            .iter()
            .filter(|x| x.strategy == s)
            .map(|x| x.mean())
            .collect();
        mean_by_strategy.insert(s.to_string(), mean_std(&v).0);
    }
    Ok(RmseStudy {
        objective: objective.name(),
        start_t,
        series,
        mean_by_strategy,
    })
}

/// Parse `--beta`: `srinivas`, `adjusted`, `constant:<v>` or a bare number.
pub fn parse_beta(text: &str, delta: f64, dim: usize, diameter: f64) -> Result<BetaSchedule> {
    let schedule = match text {
        "srinivas" => BetaSchedule::Srinivas {
            delta,
            dim,
            a: 1.0,
            b: 1.0,
            r: diameter,
        },
        "adjusted" | "gssbo_adjusted" => BetaSchedule::GssboAdjusted {
            delta,
            dim,
            a: 1.0,
            b: 1.0,
            r: diameter,
            sigma_min_floor: 1e-3,
        },
        other => {
            let v = other.strip_prefix("constant:").unwrap_or(other);
            let value = v
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("unknown beta schedule `{text}`")))?;
            BetaSchedule::Constant { value }
        }
    };
    schedule.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(schedule)
}

/// Synthetic problem for the Nyström analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NystromConfig {
    pub n: usize,
    pub m: usize,
    pub dim: usize,
    pub kernel: KernelFamily,
    pub lengthscale: f64,
    pub noise: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for NystromConfig {
    fn default() -> Self {
        NystromConfig {
            n: 60,
            m: 15,
            dim: 2,
            kernel: KernelFamily::SquaredExponential,
            lengthscale: 0.3,
            noise: 0.01,
            tolerance: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NystromAnalysis {
    pub config: NystromConfig,
    pub greedy: NystromReport,
    pub random: NystromReport,
    pub min_subset_greedy: usize,
    pub min_subset_random: usize,
    pub equivalence: EquivalenceTrace,
}

/// Points uniform in the unit cube with targets from a GP-like smooth
/// function; compares greedy and random subsets of size `m`.
pub fn nystrom_analysis(config: &NystromConfig) -> Result<NystromAnalysis> {
    if config.n < 2 || config.m == 0 || config.m > config.n || config.dim == 0 {
        return Err(Error::Config("need n >= 2, 1 <= m <= n and dim >= 1".into()));
    }
    if config.noise.is_nan() || config.noise <= 0.0 {
        return Err(Error::Config("noise must be positive".into()));
    }
    let hp = KernelHyperparams::isotropic(config.lengthscale, 1.0, config.noise)
        .map_err(|e| Error::Config(e.to_string()))?;
    let mut rng = stream(config.seed, 0x4E59);
    let unit = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
        (0..config.dim).map(|_| rng.random::<f64>()).collect()
    };
    let pts: Vec<Vec<f64>> = (0..config.n).map(|_| unit(&mut rng)).collect();
    let x_star = unit(&mut rng);
    let k = build_gram(&pts, &hp, config.kernel)?;
    let y = DVector::from_iterator(
        config.n,
        pts.iter().map(|p| {
            p.iter()
                .enumerate()
                .map(|(j, v)| ((j + 1) as f64 * 3.0 * v).sin())
                .sum()
        }),
    );
    let k_star = DVector::from_iterator(
        config.n,
        pts.iter()
            .map(|p| kernel_eval(p, &x_star, &hp, config.kernel))
            .collect::<Result<Vec<_>>>()?,
    );
    let greedy_idx = nystrom::greedy_nystrom_select(&k, config.m, None)?;
    let random_idx = nystrom::random_subset(config.n, config.m, &mut rng);
    let eq_m = config.m.min(config.n);
    Ok(NystromAnalysis {
        greedy: nystrom::analyze(&k, &greedy_idx, &y, &k_star, config.noise)?,
        random: nystrom::analyze(&k, &random_idx, &y, &k_star, config.noise)?,
        min_subset_greedy: nystrom::min_subset_size(&k, config.tolerance, Selector::Greedy)?,
        min_subset_random: nystrom::min_subset_size(
            &k,
            config.tolerance,
            Selector::Random { seed: config.seed },
        )?,
        equivalence: nystrom::selection_equivalence_check(
            &crate::linalg::add_diagonal(&k, config.noise),
            eq_m,
        )?,
        config: config.clone(),
    })
}

/// Parse a seed list: `3`, `0,1,5` or a half-open range `0..10`.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = || Error::Config(format!("bad seed list `{text}`"));
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if a >= b {
            return Err(bad());
        }
        return Ok((a..b).collect());
    }
    text.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}
