//! Cells, sweeps, CSV rows and the summary table.

use std::f64::consts::FRAC_PI_4;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use rspider::diagnostics::{linear_fit, pca_pl_points, pl_constant_estimate, relative_accuracy, Doubling};
use rspider::optim::{
    params_finite, rsgd, rsvrg, spider_gd1, spider_gd2, spider_nonconvex, GdConfig, IterateChoice, RsgdConfig,
    RsvrgConfig, RunOptions, RunRecord, RunTrace, StepSchedule,
};
use rspider::oracle::{GapBasis, Objective, PcaProblem};
use rspider::rng::{derive_seed, stream, STREAM_INIT};
use rspider::{Error, Manifold, ManifoldPoint, Result};

use crate::config::{Algo, ExperimentConfig};

/// Outer stages for the gradient-dominated variants; the IFO budget ends runs first.
const GD_STAGES: usize = 64;
const PL_POINTS: usize = 200;

pub const CSV_HEADER: [&str; 13] = [
    "algo",
    "map_mode",
    "d",
    "n",
    "delta",
    "seed",
    "epoch",
    "ifo",
    "f_value",
    "accuracy",
    "grad_sq",
    "epochs_to_double",
    "wall_ms",
];

/// One checkpoint of one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub algo: Algo,
    pub map_mode: String,
    pub d: usize,
    pub n: usize,
    pub delta: f64,
    pub seed: u64,
    pub epoch: f64,
    pub ifo: u64,
    pub f_value: f64,
    pub accuracy: f64,
    pub grad_sq: f64,
    /// Estimate for the window ending at this checkpoint.
    pub epochs_to_double: Option<Doubling>,
    pub wall_ms: Option<f64>,
}

/// Shortest round-trip decimal, in exponent form for very small or large magnitudes.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else if x != 0.0 && (x.abs() < 1e-5 || x.abs() >= 1e16) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

impl CsvRow {
    pub fn fields(&self) -> Vec<String> {
        vec![
            self.algo.to_string(),
            self.map_mode.clone(),
            self.d.to_string(),
            self.n.to_string(),
            fmt_f64(self.delta),
            self.seed.to_string(),
            fmt_f64(self.epoch),
            self.ifo.to_string(),
            fmt_f64(self.f_value),
            fmt_f64(self.accuracy),
            fmt_f64(self.grad_sq),
            self.epochs_to_double.map_or(String::new(), |d| match d {
                Doubling::Value(v) => fmt_f64(v),
                other => other.to_string(),
            }),
            self.wall_ms.map_or(String::new(), fmt_f64),
        ]
    }
}

/// Default step for the SVRG variants: half the VR-PCA rule `1 / (r sqrt n)`
/// with `r = max ||z_i||^2`, since the gradient here carries a factor 2.
pub fn svrg_default_step(problem: &PcaProblem) -> f64 {
    let r = (0..problem.len())
        .map(|i| problem.sample(i).iter().map(|v| v * v).sum::<f64>())
        .fold(0.0, f64::max);
    1.0 / (2.0 * r * (problem.len() as f64).sqrt())
}

/// Uniform initial point for a cell.
pub fn initial_point(d: usize, seed: u64) -> ManifoldPoint {
    Manifold::sphere(d).random_point(&mut stream(seed, STREAM_INIT))
}

fn run_algorithm(
    cfg: &ExperimentConfig,
    algo: Algo,
    problem: &PcaProblem,
    x0: &ManifoldPoint,
    f_star: f64,
    seed: u64,
    options: &RunOptions,
) -> Result<RunTrace> {
    let n = problem.len();
    let lipschitz = problem.lipschitz_hint();
    let mode = cfg.map_mode_for(algo);
    let gap = (problem.value(x0) - f_star).max(f64::MIN_POSITIVE);
    let trace = match algo {
        Algo::Rsgd => {
            let c = RsgdConfig {
                step_size: cfg.eta.unwrap_or_else(|| svrg_default_step(problem)),
                schedule: StepSchedule::Constant,
                iterations: u64::MAX,
                map_mode: mode,
                seed,
            };
            rsgd(problem, x0, &c, options)?.1
        }
        Algo::Rsvrg | Algo::Vrpca => {
            let c = RsvrgConfig {
                step_size: cfg.eta.unwrap_or_else(|| svrg_default_step(problem)),
                epochs: u64::MAX,
                inner_len: cfg.inner_len.unwrap_or(n),
                map_mode: mode,
                seed,
            };
            rsvrg(problem, x0, &c, options, cfg.convention)?.1
        }
        Algo::Spider => {
            let mut c = params_finite(n, cfg.eps, gap, lipschitz)?;
            if let Some(eta) = cfg.eta {
                c.step_size = eta;
            }
            c.iterations = u64::MAX;
            c.map_mode = mode;
            c.seed = seed;
            c.output = IterateChoice::Last;
            spider_nonconvex(problem, x0, &c, options, cfg.convention)?.1
        }
        Algo::SpiderGd1 | Algo::SpiderGd2 => {
            let points = pca_pl_points(problem, FRAC_PI_4, PL_POINTS, seed)?;
            let tau = pl_constant_estimate(problem, f_star, &points)?.statistic;
            let mut c = GdConfig::new(gap, tau, lipschitz, GD_STAGES);
            c.map_mode = mode;
            c.seed = seed;
            if algo == Algo::SpiderGd1 {
                spider_gd1(problem, x0, &c, options, cfg.convention)?.1
            } else {
                spider_gd2(problem, x0, &c, options, cfg.convention)?.1
            }
        }
    };
    Ok(trace)
}

/// Runs one `(algo, delta, seed)` cell on an instance built from `basis`.
pub fn run_cell_on(basis: &GapBasis, cfg: &ExperimentConfig, algo: Algo, delta: f64, seed: u64) -> Result<Vec<CsvRow>> {
    let started = Instant::now();
    let problem = basis.problem(delta, cfg.tail)?;
    let f_star = problem.optimal_value()?;
    let x0 = initial_point(cfg.d, seed);
    let n = problem.len();
    let every = cfg.checkpoint_every as f64;
    let checkpoints = (cfg.epochs / cfg.checkpoint_every) as usize + 1;

    let records = if cfg.epochs == 0 {
        vec![RunRecord {
            k: 0,
            stage: 0,
            epoch: 0.0,
            ifo: 0,
            f: problem.value(&x0),
            grad_sq: problem.full_rgrad(&x0).norm_sq(),
            step_dist: 0.0,
            batch: 0,
        }]
    } else {
        let options = RunOptions::epochs(every, cfg.epochs as f64, n);
        let run_seed = derive_seed(seed, 1);
        let trace = run_algorithm(cfg, algo, &problem, &x0, f_star, run_seed, &options)?;
        let mut r = trace.records;
        r.truncate(checkpoints);
        r
    };
    if records.len() < checkpoints {
        warn!(
            "cell {algo} delta={delta} seed={seed} ended after {} of {checkpoints} checkpoints",
            records.len()
        );
    }

    let wall = cfg.wall_clock.then(|| started.elapsed().as_secs_f64() * 1e3);
    let lag = (cfg.window / cfg.checkpoint_every) as usize;
    let acc: Vec<f64> = records.iter().map(|r| relative_accuracy(r.f, f_star)).collect();
    let mode = cfg.map_mode_for(algo).to_string();
    Ok(records
        .iter()
        .enumerate()
        .map(|(j, r)| CsvRow {
            algo,
            map_mode: mode.clone(),
            d: cfg.d,
            n,
            delta,
            seed,
            epoch: r.epoch,
            ifo: r.ifo,
            f_value: r.f,
            accuracy: acc[j],
            grad_sq: r.grad_sq,
            epochs_to_double: (j >= lag)
                .then(|| Doubling::from_accuracies(acc[j - lag], acc[j], r.epoch - records[j - lag].epoch)),
            wall_ms: wall,
        })
        .collect())
}

/// Runs one cell with the factors drawn from the configured master seed.
pub fn run_cell(cfg: &ExperimentConfig, algo: Algo, delta: f64, seed: u64) -> Result<Vec<CsvRow>> {
    cfg.validate()?;
    let basis = GapBasis::new(cfg.d, cfg.n, cfg.master_seed)?;
    run_cell_on(&basis, cfg, algo, delta, seed)
}

/// Outcome of one cell in a sweep.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub algo: Algo,
    pub delta: f64,
    pub seed: u64,
    pub rows: Result<Vec<CsvRow>>,
}

/// Every cell in `(algo, delta, seed)` order, run on a pool of `cfg.workers` threads.
pub fn run_cells(cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let basis = GapBasis::new(cfg.d, cfg.n, cfg.master_seed)?;
    let cells: Vec<(Algo, f64, u64)> = cfg
        .algos
        .iter()
        .flat_map(|&a| {
            cfg.deltas
                .iter()
                .flat_map(move |&d| cfg.seeds.iter().map(move |&s| (a, d, s)))
        })
        .collect();
    info!("running {} cells on {} workers", cells.len(), cfg.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(|| {
        cells
            .par_iter()
            .map(|&(algo, delta, seed)| CellResult {
                algo,
                delta,
                seed,
                rows: run_cell_on(&basis, cfg, algo, delta, seed),
            })
            .collect()
    }))
}

pub fn write_csv<W: Write>(out: W, rows: &[CsvRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record(r.fields()).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Median-over-seeds doubling estimates for one `(algo, delta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algo: Algo,
    pub delta: f64,
    /// Per non-overlapping window; `None` when every seed converged.
    pub medians: Vec<Option<f64>>,
    pub fit_slope: Option<f64>,
    pub fit_corr: Option<f64>,
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Medians per window and, per algorithm, a least-squares fit of the
/// `fit_window` medians against `1/delta`.
pub fn summarize(cfg: &ExperimentConfig, rows: &[CsvRow]) -> Vec<SummaryRow> {
    let windows = cfg.windows();
    let lag = (cfg.window / cfg.checkpoint_every) as usize;
    let mut out = Vec::new();
    for &algo in &cfg.algos {
        let start = out.len();
        for &delta in &cfg.deltas {
            let medians = (1..=windows)
                .map(|w| {
                    let vals: Vec<f64> = cfg
                        .seeds
                        .iter()
                        .filter_map(|&seed| {
                            rows.iter()
                                .filter(|r| r.algo == algo && r.delta == delta && r.seed == seed)
                                .nth(w * lag)
                                .and_then(|r| r.epochs_to_double)
                                .and_then(Doubling::as_f64)
                        })
                        .collect();
                    median(vals)
                })
                .collect();
            out.push(SummaryRow {
                algo,
                delta,
                medians,
                fit_slope: None,
                fit_corr: None,
            });
        }
        let fw = cfg.fit_window.min(windows.max(1)) - 1;
        let (xs, ys): (Vec<f64>, Vec<f64>) = out[start..]
            .iter()
            .filter_map(|s| {
                s.medians
                    .get(fw)
                    .copied()
                    .flatten()
                    .filter(|y| y.is_finite())
                    .map(|y| (1.0 / s.delta, y))
            })
            .unzip();
        if let Ok(fit) = linear_fit(&xs, &ys) {
            for s in &mut out[start..] {
                s.fit_slope = Some(fit.slope);
                s.fit_corr = Some(fit.corr);
            }
        }
    }
    out
}

pub fn write_summary<W: Write>(out: W, windows: usize, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    let mut header = vec!["algo".to_string(), "delta".into(), "inv_delta".into()];
    header.extend((1..=windows).map(|i| format!("median_epochs_to_double_w{i}")));
    header.extend(["fit_slope".to_string(), "fit_corr".into()]);
    w.write_record(&header).map_err(io)?;
    for r in rows {
        let mut rec = vec![r.algo.to_string(), fmt_f64(r.delta), fmt_f64(1.0 / r.delta)];
        rec.extend(r.medians.iter().map(|m| m.map_or("converged".into(), fmt_f64)));
        rec.push(r.fit_slope.map_or(String::new(), fmt_f64));
        rec.push(r.fit_corr.map_or(String::new(), fmt_f64));
        w.write_record(&rec).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// `<out>.summary.csv`.
pub fn summary_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".summary.csv");
    PathBuf::from(s)
}

/// Result of a full sweep.
#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub rows: Vec<CsvRow>,
    pub summary: Vec<SummaryRow>,
    /// Cells that aborted, with their error.
    pub failures: Vec<(Algo, f64, u64, Error)>,
}

/// Runs every cell, then writes the CSV and summary when `cfg.out` is set.
/// Failed cells are reported and skipped; the rest of the sweep still runs.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<SweepOutput> {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for cell in run_cells(cfg)? {
        match cell.rows {
            Ok(r) => rows.extend(r),
            Err(e) => {
                warn!("cell {} delta={} seed={} failed: {e}", cell.algo, cell.delta, cell.seed);
                failures.push((cell.algo, cell.delta, cell.seed, e));
            }
        }
    }
    let summary = summarize(cfg, &rows);
    if let Some(path) = &cfg.out {
        let open = |p: &Path| {
            std::fs::File::create(p)
                .map(std::io::BufWriter::new)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))
        };
        write_csv(open(path)?, &rows)?;
        write_summary(open(&summary_path(path))?, cfg.windows(), &summary)?;
    }
    Ok(SweepOutput {
        rows,
        summary,
        failures,
    })
}
