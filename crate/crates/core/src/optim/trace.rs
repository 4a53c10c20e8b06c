use std::collections::BTreeSet;

use crate::geometry::ManifoldPoint;
use crate::optim::FrozenState;
use crate::oracle::{Ifo, IfoConvention, IfoLedger, Objective};

/// When a run writes a [`RunRecord`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Checkpoints {
    #[default]
    Never,
    /// After every `m`-th iteration, plus the initial point.
    EveryIterations(u64),
    /// Each time the IFO count crosses a multiple of `e * n`, plus the initial point.
    /// A single step that crosses several boundaries writes one record per boundary.
    EveryEpochs(f64),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub checkpoints: Checkpoints,
    /// Stop before the next iteration once this many IFO calls have been made.
    pub ifo_budget: Option<u64>,
    /// Iteration indices at which to capture the estimator state before a correction step.
    pub capture_at: BTreeSet<u64>,
}

impl RunOptions {
    pub fn every_iteration() -> Self {
        RunOptions {
            checkpoints: Checkpoints::EveryIterations(1),
            ..Default::default()
        }
    }

    pub fn epochs(every: f64, budget_epochs: f64, n: usize) -> Self {
        RunOptions {
            checkpoints: Checkpoints::EveryEpochs(every),
            ifo_budget: Some((budget_epochs * n as f64).round() as u64),
            capture_at: BTreeSet::new(),
        }
    }
}

/// State of a run at a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    /// Iterations completed.
    pub k: u64,
    pub stage: usize,
    /// `ifo / n`.
    pub epoch: f64,
    pub ifo: u64,
    pub f: f64,
    /// Squared norm of the exact Riemannian gradient (IFO-free).
    pub grad_sq: f64,
    /// `dist(x_{k-1}, x_k)`; zero at the initial point.
    pub step_dist: f64,
    /// Number of samples (or `n` for an exact gradient) used by the last step.
    pub batch: usize,
}

/// End of one stage of a multi-stage run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageMark {
    pub stage: usize,
    pub k: u64,
    pub ifo: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub records: Vec<RunRecord>,
    /// Configuration echo, in insertion order.
    pub meta: Vec<(String, String)>,
    pub stages: Vec<StageMark>,
    pub frozen: Vec<FrozenState>,
    pub iterations: u64,
    pub ifo: u64,
    pub ledger: IfoLedger,
    pub convention: IfoConvention,
    /// True when the IFO budget ended the run early.
    pub budget_exhausted: bool,
}

impl RunTrace {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }
}

/// Checkpoint, budget and capture bookkeeping shared by all optimizers.
pub(crate) struct Recorder<'a, O: Objective + ?Sized> {
    objective: &'a O,
    options: &'a RunOptions,
    trace: RunTrace,
    next_boundary: u64,
    pub(crate) stage: usize,
}

impl<'a, O: Objective + ?Sized> Recorder<'a, O> {
    pub(crate) fn new(objective: &'a O, options: &'a RunOptions, meta: Vec<(String, String)>) -> Self {
        Recorder {
            objective,
            options,
            trace: RunTrace {
                meta,
                ..Default::default()
            },
            next_boundary: 0,
            stage: 0,
        }
    }

    fn record(&mut self, k: u64, x: &ManifoldPoint, ifo: u64, step_dist: f64, batch: usize) {
        let n = self.objective.num_components() as f64;
        let f = self.objective.value(x);
        let grad_sq = self.objective.full_rgrad(x).norm_sq();
        self.trace.records.push(RunRecord {
            k,
            stage: self.stage,
            epoch: ifo as f64 / n,
            ifo,
            f,
            grad_sq,
            step_dist,
            batch,
        });
    }

    pub(crate) fn start(&mut self, x0: &ManifoldPoint, ifo: u64) {
        match self.options.checkpoints {
            Checkpoints::Never => {}
            Checkpoints::EveryIterations(_) => self.record(0, x0, ifo, 0.0, 0),
            Checkpoints::EveryEpochs(_) => {
                self.record(0, x0, ifo, 0.0, 0);
                self.next_boundary = 1;
            }
        }
    }

    pub(crate) fn exhausted(&mut self, ifo: u64) -> bool {
        let done = matches!(self.options.ifo_budget, Some(b) if ifo >= b);
        if done {
            self.trace.budget_exhausted = true;
        }
        done
    }

    pub(crate) fn wants_capture(&self, k: u64) -> bool {
        self.options.capture_at.contains(&k)
    }

    pub(crate) fn capture(&mut self, state: FrozenState) {
        self.trace.frozen.push(state);
    }

    /// Called with the iterate reached after `k` completed iterations.
    pub(crate) fn after_step(&mut self, k: u64, x: &ManifoldPoint, ifo: u64, step_dist: f64, batch: usize) {
        match self.options.checkpoints {
            Checkpoints::Never => {}
            Checkpoints::EveryIterations(m) => {
                if m > 0 && k.is_multiple_of(m) {
                    self.record(k, x, ifo, step_dist, batch);
                }
            }
            Checkpoints::EveryEpochs(every) => {
                let unit = every * self.objective.num_components() as f64;
                while ifo as f64 >= self.next_boundary as f64 * unit - 1e-9 {
                    self.record(k, x, ifo, step_dist, batch);
                    self.next_boundary += 1;
                }
            }
        }
    }

    pub(crate) fn end_stage(&mut self, k: u64, ifo: u64) {
        self.trace.stages.push(StageMark {
            stage: self.stage,
            k,
            ifo,
        });
    }

    pub(crate) fn finish(mut self, iterations: u64, ifo: &Ifo<'_, O>) -> RunTrace {
        self.trace.iterations = iterations;
        self.trace.ifo = ifo.calls();
        self.trace.ledger = ifo.ledger();
        self.trace.convention = ifo.convention();
        self.trace
            .meta
            .push(("ifo_convention".into(), ifo.convention().to_string()));
        self.trace
    }
}
