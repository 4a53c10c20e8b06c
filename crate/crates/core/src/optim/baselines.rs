//! Riemannian SGD and SVRG.

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{ManifoldPoint, MapMode};
use crate::optim::trace::{Recorder, RunOptions, RunTrace};
use crate::oracle::{Ifo, IfoConvention, Objective};
use crate::rng::{stream, STREAM_SAMPLING};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum StepSchedule {
    #[default]
    Constant,
    /// `eta / sqrt(k + 1)`.
    InverseSqrt,
}

impl StepSchedule {
    pub fn at(self, eta: f64, k: u64) -> f64 {
        match self {
            StepSchedule::Constant => eta,
            StepSchedule::InverseSqrt => eta / ((k + 1) as f64).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsgdConfig {
    pub step_size: f64,
    pub schedule: StepSchedule,
    pub iterations: u64,
    pub map_mode: MapMode,
    pub seed: u64,
}

fn check_step(eta: f64) -> Result<()> {
    if eta >= 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("step size must be >= 0, got {eta}")))
    }
}

/// Riemannian SGD: one uniformly drawn component gradient per step.
pub fn rsgd<O: Objective + ?Sized>(
    objective: &O,
    x0: &ManifoldPoint,
    cfg: &RsgdConfig,
    options: &RunOptions,
) -> Result<(ManifoldPoint, RunTrace)> {
    let manifold = objective.manifold();
    manifold.check_point(x0)?;
    check_step(cfg.step_size)?;
    let n = objective.num_components();
    let meta = vec![
        ("algo".to_string(), "rsgd".to_string()),
        ("step_size".into(), cfg.step_size.to_string()),
        ("schedule".into(), format!("{:?}", cfg.schedule).to_lowercase()),
        ("iterations".into(), cfg.iterations.to_string()),
        ("map_mode".into(), cfg.map_mode.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    let mut ifo = Ifo::new(objective, IfoConvention::Paired);
    let mut recorder = Recorder::new(objective, options, meta);
    recorder.start(x0, 0);
    let mut rng = stream(cfg.seed, STREAM_SAMPLING);
    let mut x = x0.clone();
    let mut done = 0;
    for k in 0..cfg.iterations {
        if recorder.exhausted(ifo.calls()) {
            break;
        }
        let i = rng.random_range(0..n);
        let g = ifo.component_rgrad(i, &x)?;
        let next = manifold.step(&x, &g.scaled(-cfg.schedule.at(cfg.step_size, k)), cfg.map_mode)?;
        let dist = manifold.dist(&x, &next)?;
        done = k + 1;
        recorder.after_step(done, &next, ifo.calls(), dist, 1);
        x = next;
    }
    Ok((x, recorder.finish(done, &ifo)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RsvrgConfig {
    pub step_size: f64,
    /// Outer loops (snapshots).
    pub epochs: u64,
    /// Inner steps per snapshot; `n` is the usual choice.
    pub inner_len: usize,
    pub map_mode: MapMode,
    pub seed: u64,
}

/// Riemannian SVRG. Each outer loop takes the exact gradient `mu` at the
/// snapshot `s` (the current iterate), then runs `inner_len` steps of
/// `v = g_i(x) - Gamma_s^x [g_i(s) - mu]`. A snapshot is always followed by
/// at least one step, even past the IFO budget.
///
/// In retraction mode on the sphere the update is `(x - eta v)/||x - eta v||`,
/// the VR-PCA iteration.
pub fn rsvrg<O: Objective + ?Sized>(
    objective: &O,
    x0: &ManifoldPoint,
    cfg: &RsvrgConfig,
    options: &RunOptions,
    convention: IfoConvention,
) -> Result<(ManifoldPoint, RunTrace)> {
    let manifold = objective.manifold();
    manifold.check_point(x0)?;
    check_step(cfg.step_size)?;
    if cfg.inner_len == 0 {
        return Err(Error::InvalidConfig("inner length must be >= 1".into()));
    }
    let n = objective.num_components();
    let meta = vec![
        ("algo".to_string(), "rsvrg".to_string()),
        ("step_size".into(), cfg.step_size.to_string()),
        ("epochs".into(), cfg.epochs.to_string()),
        ("inner_len".into(), cfg.inner_len.to_string()),
        ("map_mode".into(), cfg.map_mode.to_string()),
        ("seed".into(), cfg.seed.to_string()),
    ];
    let mut ifo = Ifo::new(objective, convention);
    let mut recorder = Recorder::new(objective, options, meta);
    recorder.start(x0, 0);
    let mut rng = stream(cfg.seed, STREAM_SAMPLING);
    let mut x = x0.clone();
    let mut k = 0u64;

    'outer: for s in 0..cfg.epochs {
        if recorder.exhausted(ifo.calls()) {
            break;
        }
        recorder.stage = s as usize + 1;
        let snapshot = x.clone();
        let mu = ifo.full_rgrad(&snapshot)?;
        for j in 0..cfg.inner_len {
            if j > 0 && recorder.exhausted(ifo.calls()) {
                break 'outer;
            }
            let i = rng.random_range(0..n);
            let (g_x, g_s) = ifo.paired_minibatch_rgrad(&[i], &x, &snapshot)?;
            let moved = manifold.transport(&snapshot, &x, &g_s.sub(&mu)?)?;
            let v = g_x.sub(&moved)?;
            let next = manifold.step(&x, &v.scaled(-cfg.step_size), cfg.map_mode)?;
            let dist = manifold.dist(&x, &next)?;
            k += 1;
            recorder.after_step(k, &next, ifo.calls(), dist, 1);
            x = next;
        }
        recorder.end_stage(k, ifo.calls());
    }
    Ok((x, recorder.finish(k, &ifo)))
}
