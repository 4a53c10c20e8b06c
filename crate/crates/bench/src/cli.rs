//! Command-line front end.

use std::ffi::OsString;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rspider::diagnostics::{
    fd_gradient_check, pca_pl_points, pl_constant_estimate, smoothness_probe, variance_probe, ProbeReport,
};
use rspider::optim::{params_finite, spider_nonconvex, RunOptions};
use rspider::oracle::{write_dump, GapBasis, Objective};
use rspider::{Error, Result};

use crate::config::ExperimentConfig;
use crate::experiment::{initial_point, run_cell, run_sweep, write_csv, write_summary};

#[derive(Debug, Parser)]
#[command(name = "rspider", version, about = "Riemannian SPIDER eigengap experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sweep every (algo, delta, seed) cell; write the CSV and `<out>.summary.csv`.
    Bench(ExperimentArgs),
    /// Run the first (algo, delta, seed) cell only.
    Run(ExperimentArgs),
    /// Print diagnostic probe reports for one instance.
    Probe(ProbeArgs),
    /// Write a synthetic instance as a binary dump.
    Gen(ExperimentArgs),
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Flat key=value file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// rsgd, rsvrg, vrpca, spider, spider-gd1, spider-gd2 (comma-separated).
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    d: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    delta: Option<String>,
    #[arg(long)]
    delta_list: Option<String>,
    /// Budget in IFO epochs.
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    /// Seed of the factors shared across gaps.
    #[arg(long)]
    master_seed: Option<String>,
    #[arg(long)]
    eta: Option<String>,
    /// exp or retract.
    #[arg(long)]
    map_mode: Option<String>,
    #[arg(long)]
    checkpoint_every: Option<String>,
    /// Decay of the spectrum below the second eigenvalue.
    #[arg(long)]
    tail: Option<String>,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    /// paired or single.
    #[arg(long)]
    ifo_convention: Option<String>,
    /// Target accuracy for spider.
    #[arg(long)]
    eps: Option<String>,
    /// Epochs per doubling window.
    #[arg(long)]
    window: Option<String>,
    /// Window whose medians are fitted against 1/delta.
    #[arg(long)]
    fit_window: Option<String>,
    /// SVRG inner loop length (default n).
    #[arg(long)]
    inner_len: Option<String>,
    /// Fill the wall_ms column (breaks byte-identical output).
    #[arg(long)]
    wall_clock: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ProbeKind {
    Fd,
    Smoothness,
    Pl,
    Variance,
    All,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    #[arg(long, value_enum, default_value = "all")]
    probe: ProbeKind,
    /// Trials, pairs, points or resamples per probe.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("algo", &self.algo),
            ("d", &self.d),
            ("n", &self.n),
            ("delta", &self.delta),
            ("delta-list", &self.delta_list),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("seeds", &self.seeds),
            ("master-seed", &self.master_seed),
            ("eta", &self.eta),
            ("map-mode", &self.map_mode),
            ("checkpoint-every", &self.checkpoint_every),
            ("tail", &self.tail),
            ("out", &self.out),
            ("workers", &self.workers),
            ("ifo-convention", &self.ifo_convention),
            ("eps", &self.eps),
            ("window", &self.window),
            ("fit-window", &self.fit_window),
            ("inner-len", &self.inner_len),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        if self.wall_clock {
            cfg.wall_clock = true;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn bench(cfg: &ExperimentConfig) -> Result<()> {
    let out = run_sweep(cfg)?;
    if cfg.out.is_none() {
        write_csv(std::io::stdout().lock(), &out.rows)?;
        write_summary(std::io::stderr().lock(), cfg.windows(), &out.summary)?;
    }
    if let Some((algo, delta, seed, e)) = out.failures.first() {
        return Err(Error::Io(format!(
            "{} of {} cells failed; first: {algo} delta={delta} seed={seed}: {e}",
            out.failures.len(),
            cfg.algos.len() * cfg.deltas.len() * cfg.seeds.len()
        )));
    }
    Ok(())
}

fn single_run(cfg: &ExperimentConfig) -> Result<()> {
    let rows = run_cell(cfg, cfg.algos[0], cfg.deltas[0], cfg.seeds[0])?;
    match &cfg.out {
        Some(path) => {
            let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            write_csv(std::io::BufWriter::new(f), &rows)
        }
        None => write_csv(std::io::stdout().lock(), &rows),
    }
}

fn generate(cfg: &ExperimentConfig) -> Result<()> {
    let path = cfg.out.as_ref().ok_or_else(|| Error::Usage("gen needs --out".into()))?;
    let problem = GapBasis::new(cfg.d, cfg.n, cfg.master_seed)?.problem(cfg.deltas[0], cfg.tail)?;
    let f = std::fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut w = std::io::BufWriter::new(f);
    write_dump(&mut w, &problem, cfg.master_seed)?;
    w.flush()?;
    Ok(())
}

fn probe(cfg: &ExperimentConfig, kind: ProbeKind, samples: usize) -> Result<()> {
    let problem = GapBasis::new(cfg.d, cfg.n, cfg.master_seed)?.problem(cfg.deltas[0], cfg.tail)?;
    let f_star = problem.optimal_value()?;
    let seed = cfg.seeds[0];
    let x0 = initial_point(cfg.d, seed);
    let want = |k: ProbeKind| kind == ProbeKind::All || kind == k;
    let mut reports: Vec<ProbeReport> = Vec::new();
    if want(ProbeKind::Fd) {
        reports.push(fd_gradient_check(&problem, &x0, samples, 1e-6, seed)?.with_bound(1e-5));
    }
    if want(ProbeKind::Smoothness) {
        reports.push(smoothness_probe(&problem, samples, 1.0, seed)?);
    }
    if want(ProbeKind::Pl) {
        let points = pca_pl_points(&problem, std::f64::consts::FRAC_PI_4, samples, seed)?;
        reports.push(pl_constant_estimate(&problem, f_star, &points)?);
    }
    if want(ProbeKind::Variance) {
        let n = problem.len();
        let gap = problem.value(&x0) - f_star;
        let mut spider = params_finite(n, cfg.eps, gap, problem.lipschitz_hint())?;
        spider.seed = seed;
        let q = spider.epoch_len as u64;
        spider.iterations = spider.iterations.min(10 * q + 1);
        let options = RunOptions {
            capture_at: (0..10).map(|j| j * q + q / 2).filter(|k| k % q != 0).collect(),
            ..Default::default()
        };
        let (_, trace) = spider_nonconvex(&problem, &x0, &spider, &options, cfg.convention)?;
        for frozen in &trace.frozen {
            reports.push(variance_probe(&problem, frozen, samples, seed)?);
        }
    }
    let text: String = reports.iter().map(|r| r.to_kv() + "\n").collect();
    print!("{text}");
    if let Some(path) = &cfg.out {
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        f.write_all(text.as_bytes())?;
    }
    Ok(())
}

/// Exit code for an error: 1 for usage problems, 2 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` (including the program name) and runs the command.
/// Returns 0 on success, 1 on a usage error and 2 on a runtime failure.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Bench(a) => a.resolve().and_then(|c| bench(&c)),
        Command::Run(a) => a.resolve().and_then(|c| single_run(&c)),
        Command::Gen(a) => a.resolve().and_then(|c| generate(&c)),
        Command::Probe(p) => p.experiment.resolve().and_then(|c| probe(&c, p.probe, p.samples)),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
