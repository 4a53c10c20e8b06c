//! Riemannian variance-reduced optimizers and their baselines.
//!
//! * [`spider_nonconvex`]: recursive SPIDER estimator, re-anchored every
//!   `epoch_len` steps, with adaptive correction batches.
//! * [`spider_gd1`] / [`spider_gd2`]: restarted and epoch-halving variants for
//!   gradient-dominated objectives.
//! * [`rsgd`] and [`rsvrg`]: Riemannian SGD and SVRG baselines. `rsvrg` in
//!   retraction mode is the VR-PCA update.
//!
//! Every optimizer takes a [`RunOptions`] controlling checkpoints, an optional
//! IFO budget, and mid-run state capture, and returns a [`RunTrace`].

mod baselines;
mod gd;
mod schedule;
mod spider;
mod trace;

pub use crate::geometry::MapMode;
pub use baselines::{rsgd, rsvrg, RsgdConfig, RsvrgConfig, StepSchedule};
pub use gd::{gd1_stage_accuracy, gd2_epoch_len, spider_gd1, spider_gd2, GdConfig};
pub use schedule::{ceil_tol, correction_batch_size, params_finite, params_stochastic, sqrt_ceil};
pub use spider::{spider_correction, spider_nonconvex, FrozenState, IterateChoice, SpiderConfig};
pub use trace::{Checkpoints, RunOptions, RunRecord, RunTrace, StageMark};
