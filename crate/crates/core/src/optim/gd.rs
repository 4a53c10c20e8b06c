//! Restarted (`spider_gd1`) and epoch-halving (`spider_gd2`) SPIDER variants
//! for gradient-dominated finite sums.

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, MapMode, TangentVector};
use crate::optim::schedule::{ceil_tol, correction_batch_size, sqrt_ceil};
use crate::optim::spider::{run_spider_stage, spider_correction, IterateChoice, SpiderConfig};
use crate::optim::trace::{Recorder, RunOptions, RunTrace};
use crate::oracle::{Ifo, IfoConvention, Objective};
use crate::rng::{derive_seed, stream, STREAM_SAMPLING};

#[derive(Debug, Clone, PartialEq)]
pub struct GdConfig {
    /// `M0 >= f(x0) - f*`.
    pub gap_bound: f64,
    /// Gradient-domination constant `tau`: `f(x) - f* <= tau ||grad f(x)||^2`.
    pub pl_constant: f64,
    pub lipschitz: f64,
    /// Outer stages `K`.
    pub stages: usize,
    pub map_mode: MapMode,
    pub seed: u64,
    /// Which inner iterate `spider_gd1` hands to the next stage.
    pub chain: IterateChoice,
    /// Use `eps_t / L` as the `spider_gd1` step instead of `1/(2L)`.
    pub literal_step: bool,
}

impl GdConfig {
    pub fn new(gap_bound: f64, pl_constant: f64, lipschitz: f64, stages: usize) -> Self {
        GdConfig {
            gap_bound,
            pl_constant,
            lipschitz,
            stages,
            map_mode: MapMode::Exponential,
            seed: 0,
            chain: IterateChoice::Uniform,
            literal_step: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("M0", self.gap_bound), ("tau", self.pl_constant), ("L", self.lipschitz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    fn echo(&self, algo: &str) -> Vec<(String, String)> {
        vec![
            ("algo".into(), algo.into()),
            ("gap_bound".into(), self.gap_bound.to_string()),
            ("pl_constant".into(), self.pl_constant.to_string()),
            ("lipschitz".into(), self.lipschitz.to_string()),
            ("stages".into(), self.stages.to_string()),
            ("map_mode".into(), self.map_mode.to_string()),
            ("seed".into(), self.seed.to_string()),
        ]
    }
}

/// `eps_t = sqrt(M0 / (2^t 10 tau))`.
pub fn gd1_stage_accuracy(gap_bound: f64, pl_constant: f64, t: usize) -> f64 {
    (gap_bound / (2f64.powi(t as i32) * 10.0 * pl_constant)).sqrt()
}

/// `ceil(4 L tau ln 4)`.
pub fn gd2_epoch_len(lipschitz: f64, pl_constant: f64) -> usize {
    (ceil_tol(4.0 * lipschitz * pl_constant * 4f64.ln()) as usize).max(1)
}

/// Restarted SPIDER: stage `t` runs the nonconvex solver to accuracy `eps_t`
/// with the finite-sum schedule and `ceil(4 M_t L / eps_t^2)` iterations,
/// where `M_t = M0 / 2^(t-1)`, starting from the previous stage's output.
pub fn spider_gd1<O: Objective + ?Sized>(
    objective: &O,
    x0: &ManifoldPoint,
    cfg: &GdConfig,
    options: &RunOptions,
    convention: IfoConvention,
) -> Result<(ManifoldPoint, RunTrace)> {
    objective.manifold().check_point(x0)?;
    cfg.validate()?;
    if cfg.stages == 0 {
        return Ok((x0.clone(), RunTrace::default()));
    }
    let n = objective.num_components();
    let mut meta = cfg.echo("spider-gd1");
    meta.push(("literal_step".into(), cfg.literal_step.to_string()));
    let mut ifo = Ifo::new(objective, convention);
    let mut recorder = Recorder::new(objective, options, meta);
    recorder.start(x0, 0);

    let mut x = x0.clone();
    let mut k_total = 0u64;
    for t in 1..=cfg.stages {
        let eps = gd1_stage_accuracy(cfg.gap_bound, cfg.pl_constant, t);
        let gap_t = cfg.gap_bound / 2f64.powi(t as i32 - 1);
        let stage_cfg = SpiderConfig {
            lipschitz: cfg.lipschitz,
            eps,
            step_size: if cfg.literal_step {
                eps / cfg.lipschitz
            } else {
                1.0 / (2.0 * cfg.lipschitz)
            },
            epoch_len: sqrt_ceil(n),
            anchor_batch: n,
            iterations: ceil_tol(4.0 * gap_t * cfg.lipschitz / (eps * eps)) as u64,
            components: Some(n),
            map_mode: cfg.map_mode,
            seed: derive_seed(cfg.seed, t as u64),
            output: cfg.chain,
        };
        recorder.stage = t;
        let stage = run_spider_stage(&mut ifo, &mut recorder, &x, &stage_cfg, k_total)?;
        k_total += stage.iterations;
        recorder.end_stage(k_total, ifo.calls());
        x = stage.chosen;
        if stage.stopped_by_budget {
            break;
        }
    }
    Ok((x, recorder.finish(k_total, &ifo)))
}

/// Epoch-halving SPIDER: every `q = ceil(4 L tau ln 4)` steps the exact
/// gradient is taken and the batch denominator `delta` (initially `M0 / (4 tau)`)
/// halves; in between, each correction draws
/// `ceil(min{n, q L^2 d(x_{k-1}, x_k)^2 / delta})` paired samples.
/// Runs `q K` steps with `eta = 1/(2L)` and returns the last iterate.
pub fn spider_gd2<O: Objective + ?Sized>(
    objective: &O,
    x0: &ManifoldPoint,
    cfg: &GdConfig,
    options: &RunOptions,
    convention: IfoConvention,
) -> Result<(ManifoldPoint, RunTrace)> {
    let manifold = objective.manifold();
    manifold.check_point(x0)?;
    cfg.validate()?;
    if cfg.stages == 0 {
        return Ok((x0.clone(), RunTrace::default()));
    }
    let n = objective.num_components();
    let q = gd2_epoch_len(cfg.lipschitz, cfg.pl_constant);
    let eta = 1.0 / (2.0 * cfg.lipschitz);
    let mut meta = cfg.echo("spider-gd2");
    meta.push(("epoch_len".into(), q.to_string()));
    let mut ifo = Ifo::new(objective, convention);
    let mut recorder = Recorder::new(objective, options, meta);
    recorder.start(x0, 0);
    let mut sampler = stream(cfg.seed, STREAM_SAMPLING);

    let mut delta = cfg.gap_bound / (4.0 * cfg.pl_constant);
    let mut x = x0.clone();
    let mut prev: Option<(ManifoldPoint, TangentVector)> = None;
    let mut last_dist = 0.0;
    let total = (q * cfg.stages) as u64;
    let mut done = 0u64;

    for k in 0..total {
        if recorder.exhausted(ifo.calls()) {
            break;
        }
        let (v, batch) = if k % q as u64 == 0 {
            if k > 0 {
                recorder.end_stage(k, ifo.calls());
                delta /= 2.0;
            }
            recorder.stage = (k / q as u64) as usize + 1;
            (ifo.full_rgrad(&x)?, n)
        } else {
            let (p, vp) = prev.as_ref().expect("correction step without history");
            let batch = correction_batch_size(q, cfg.lipschitz, last_dist, delta, Some(n));
            let v = spider_correction(&mut ifo, &manifold, p, &x, vp, batch, Some(n), &mut sampler)?;
            (v, batch)
        };
        let next = manifold.step(&x, &v.scaled(-eta), cfg.map_mode)?;
        last_dist = manifold.dist(&x, &next)?;
        done = k + 1;
        recorder.after_step(done, &next, ifo.calls(), last_dist, batch);
        let old = std::mem::replace(&mut x, next);
        prev = Some((old, v));
    }
    recorder.end_stage(done, ifo.calls());
    Ok((x, recorder.finish(done, &ifo)))
}
