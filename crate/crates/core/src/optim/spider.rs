use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldPoint, MapMode, TangentVector};
use crate::optim::schedule::correction_batch_size;
use crate::optim::trace::{Recorder, RunOptions, RunTrace};
use crate::oracle::{sample_indices, Ifo, IfoConvention, Objective};
use crate::rng::{stream, STREAM_OUTPUT, STREAM_SAMPLING};

/// Which iterate a nonconvex run returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IterateChoice {
    /// Uniformly random among `x_1, ..., x_T` (seeded).
    #[default]
    Uniform,
    Last,
}

/// Parameters of one nonconvex SPIDER run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpiderConfig {
    /// Geodesic smoothness constant `L`.
    pub lipschitz: f64,
    /// Target accuracy `eps`.
    pub eps: f64,
    pub step_size: f64,
    /// Steps between anchor gradients (`q`).
    pub epoch_len: usize,
    /// Samples drawn at an anchor. In the finite-sum setting, `anchor_batch >= n`
    /// means the exact gradient.
    pub anchor_batch: usize,
    /// Iteration budget `T`.
    pub iterations: u64,
    /// `Some(n)` for the finite-sum setting, `None` for the stochastic setting.
    pub components: Option<usize>,
    pub map_mode: MapMode,
    pub seed: u64,
    pub output: IterateChoice,
}

impl SpiderConfig {
    pub fn validate(&self, n: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.lipschitz > 0.0 && self.lipschitz.is_finite()) {
            return bad(format!("L must be positive, got {}", self.lipschitz));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad(format!("eps must be positive, got {}", self.eps));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return bad(format!("step size must be positive, got {}", self.step_size));
        }
        if self.epoch_len == 0 {
            return bad("epoch length must be >= 1".into());
        }
        if self.anchor_batch == 0 {
            return bad("anchor batch must be >= 1".into());
        }
        if let Some(m) = self.components {
            if m != n {
                return bad(format!("config is for n = {m}, objective has n = {n}"));
            }
        }
        Ok(())
    }

    pub(crate) fn echo(&self) -> Vec<(String, String)> {
        vec![
            ("lipschitz".into(), self.lipschitz.to_string()),
            ("eps".into(), self.eps.to_string()),
            ("step_size".into(), self.step_size.to_string()),
            ("epoch_len".into(), self.epoch_len.to_string()),
            ("anchor_batch".into(), self.anchor_batch.to_string()),
            ("iterations".into(), self.iterations.to_string()),
            (
                "components".into(),
                self.components.map_or("inf".into(), |n| n.to_string()),
            ),
            ("map_mode".into(), self.map_mode.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("output".into(), format!("{:?}", self.output).to_lowercase()),
        ]
    }
}

/// Estimator state captured just before a correction step.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenState {
    /// Global iteration index of the correction step.
    pub k: u64,
    pub prev: ManifoldPoint,
    pub current: ManifoldPoint,
    /// Estimator from the previous step, tangent at `prev`.
    pub v_prev: TangentVector,
    pub batch: usize,
    /// Accuracy whose square bounds the estimator error for this epoch.
    pub eps: f64,
    /// Finite-sum cap; a batch of `n` is then the exact difference.
    pub components: Option<usize>,
}

/// One recursive estimator update
/// `v = g_S(x) - Gamma_{prev}^{x} [g_S(prev) - v_prev]`,
/// with the same index multiset at both points. In the finite-sum setting a
/// batch of `n` evaluates the exact gradients instead of sampling.
#[allow(clippy::too_many_arguments)]
pub fn spider_correction<O: Objective + ?Sized, R: Rng + ?Sized>(
    ifo: &mut Ifo<'_, O>,
    manifold: &Manifold,
    prev: &ManifoldPoint,
    x: &ManifoldPoint,
    v_prev: &TangentVector,
    batch: usize,
    components: Option<usize>,
    rng: &mut R,
) -> Result<TangentVector> {
    let (g_x, g_prev) = match components {
        Some(n) if batch >= n => ifo.paired_full_rgrad(x, prev)?,
        _ => {
            let n = ifo.objective().num_components();
            let indices = sample_indices(rng, n, batch);
            ifo.paired_minibatch_rgrad(&indices, x, prev)?
        }
    };
    let stale = g_prev.sub(v_prev)?;
    let moved = manifold.transport(prev, x, &stale)?;
    g_x.sub(&moved)
}

pub(crate) struct StageResult {
    pub chosen: ManifoldPoint,
    pub iterations: u64,
    pub stopped_by_budget: bool,
}

/// Runs Algorithm-1 style iterations, appending to a shared counter and recorder.
pub(crate) fn run_spider_stage<O: Objective + ?Sized>(
    ifo: &mut Ifo<'_, O>,
    recorder: &mut Recorder<'_, O>,
    x0: &ManifoldPoint,
    cfg: &SpiderConfig,
    k_offset: u64,
) -> Result<StageResult> {
    let objective = ifo.objective();
    let manifold = objective.manifold();
    let n = objective.num_components();
    let mut sampler = stream(cfg.seed, STREAM_SAMPLING);
    let mut picker = stream(cfg.seed, STREAM_OUTPUT);
    let denom = 2.0 * cfg.eps * cfg.eps;

    let mut x = x0.clone();
    let mut prev: Option<ManifoldPoint> = None;
    let mut v_prev: Option<TangentVector> = None;
    let mut last_dist = 0.0;
    let mut chosen = x0.clone();
    let mut done = 0u64;
    let mut stopped_by_budget = false;

    for k in 0..cfg.iterations {
        if recorder.exhausted(ifo.calls()) {
            stopped_by_budget = true;
            break;
        }
        let (v, batch) = if k % cfg.epoch_len as u64 == 0 {
            match cfg.components {
                Some(m) if cfg.anchor_batch >= m => (ifo.full_rgrad(&x)?, m),
                _ => {
                    let idx = sample_indices(&mut sampler, n, cfg.anchor_batch);
                    (ifo.minibatch_rgrad(&idx, &x)?, cfg.anchor_batch)
                }
            }
        } else {
            let p = prev.as_ref().expect("correction step without a previous iterate");
            let vp = v_prev.as_ref().expect("correction step without a previous estimate");
            let batch = correction_batch_size(cfg.epoch_len, cfg.lipschitz, last_dist, denom, cfg.components);
            if recorder.wants_capture(k_offset + k) {
                recorder.capture(FrozenState {
                    k: k_offset + k,
                    prev: p.clone(),
                    current: x.clone(),
                    v_prev: vp.clone(),
                    batch,
                    eps: cfg.eps,
                    components: cfg.components,
                });
            }
            let v = spider_correction(ifo, &manifold, p, &x, vp, batch, cfg.components, &mut sampler)?;
            (v, batch)
        };

        let next = manifold.step(&x, &v.scaled(-cfg.step_size), cfg.map_mode)?;
        last_dist = manifold.dist(&x, &next)?;
        done = k + 1;
        match cfg.output {
            IterateChoice::Uniform => {
                if picker.random_range(0..done) == 0 {
                    chosen = next.clone();
                }
            }
            IterateChoice::Last => chosen = next.clone(),
        }
        recorder.after_step(k_offset + done, &next, ifo.calls(), last_dist, batch);
        prev = Some(std::mem::replace(&mut x, next));
        v_prev = Some(v);
    }

    Ok(StageResult {
        chosen,
        iterations: done,
        stopped_by_budget,
    })
}

/// Nonconvex Riemannian SPIDER.
///
/// Every `epoch_len` steps the estimator is re-anchored on `anchor_batch`
/// samples (the exact gradient when that covers all `n` components). In
/// between, each step draws `ceil(min{n, q L^2 d(x_{k-1}, x_k)^2 / (2 eps^2)})`
/// indices and applies the transported recursive correction. The update is
/// `x_{k+1} = Exp_{x_k}(-eta v_k)` or its retraction.
///
/// Returns the iterate selected by `cfg.output` (uniform over `x_1..x_T` by
/// default) and the trace. With `iterations == 0` the input point is returned
/// with an empty trace.
pub fn spider_nonconvex<O: Objective + ?Sized>(
    objective: &O,
    x0: &ManifoldPoint,
    cfg: &SpiderConfig,
    options: &RunOptions,
    convention: IfoConvention,
) -> Result<(ManifoldPoint, RunTrace)> {
    let manifold = objective.manifold();
    manifold.check_point(x0)?;
    cfg.validate(objective.num_components())?;
    if cfg.iterations == 0 {
        return Ok((x0.clone(), RunTrace::default()));
    }
    let mut meta = vec![("algo".to_string(), "spider".to_string())];
    meta.extend(cfg.echo());
    let mut ifo = Ifo::new(objective, convention);
    let mut recorder = Recorder::new(objective, options, meta);
    recorder.start(x0, 0);
    let stage = run_spider_stage(&mut ifo, &mut recorder, x0, cfg, 0)?;
    recorder.end_stage(stage.iterations, ifo.calls());
    Ok((stage.chosen, recorder.finish(stage.iterations, &ifo)))
}
