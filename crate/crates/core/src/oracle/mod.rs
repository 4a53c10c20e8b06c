//! Objective functions and incremental first-order oracle (IFO) access.
//!
//! An [`Objective`] is a finite sum `f(x) = (1/n) sum_i f_i(x)` on a manifold.
//! Its methods are free of accounting; optimizers go through an [`Ifo`], which
//! charges one call per component gradient per evaluation point. Values and
//! full gradients used only for tracing or probing bypass the counter.

mod pca;
mod synth;

pub use pca::PcaProblem;
pub use synth::{generate_gap_matrix, read_dump, write_dump, GapBasis, SyntheticSpec, DUMP_MAGIC};

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldPoint, TangentVector};
use crate::linalg::{dist_sq, scale};

/// A finite-sum objective on a manifold.
pub trait Objective: Send + Sync {
    fn manifold(&self) -> Manifold;

    /// Number of components `n`.
    fn num_components(&self) -> usize;

    /// `f_i(x)`. Callers guarantee `i < n`.
    fn component_value(&self, i: usize, x: &ManifoldPoint) -> f64;

    /// Adds `weight * grad f_i(x)` (Riemannian gradient, ambient coordinates) to `out`.
    /// Callers guarantee `i < n` and `out.len() == d`.
    fn accumulate_rgrad(&self, i: usize, x: &ManifoldPoint, weight: f64, out: &mut [f64]);

    /// Geodesic smoothness constant used to set step sizes and batch sizes.
    fn lipschitz_hint(&self) -> f64;

    /// `f(x)`, summed in index order.
    fn value(&self, x: &ManifoldPoint) -> f64 {
        let n = self.num_components();
        (0..n).map(|i| self.component_value(i, x)).sum::<f64>() / n as f64
    }

    /// Riemannian gradient of `f_i` at `x`, without accounting.
    fn component_rgrad(&self, i: usize, x: &ManifoldPoint) -> TangentVector {
        let mut g = vec![0.0; x.dim()];
        self.accumulate_rgrad(i, x, 1.0, &mut g);
        finish_tangent(&self.manifold(), x, g)
    }

    /// Full Riemannian gradient at `x`, without accounting.
    fn full_rgrad(&self, x: &ManifoldPoint) -> TangentVector {
        let n = self.num_components();
        let mut g = vec![0.0; x.dim()];
        for i in 0..n {
            self.accumulate_rgrad(i, x, 1.0, &mut g);
        }
        scale(1.0 / n as f64, &mut g);
        finish_tangent(&self.manifold(), x, g)
    }
}

fn finish_tangent(m: &Manifold, x: &ManifoldPoint, g: Vec<f64>) -> TangentVector {
    // Inputs come from the objective itself, so only a non-finite gradient can fail here.
    m.tangent(x, g).expect("objective produced a non-finite gradient")
}

/// Number of IFO calls consumed by a run. Never decreases.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IfoCounter(u64);

impl IfoCounter {
    pub fn get(self) -> u64 {
        self.0
    }

    fn charge(&mut self, calls: u64) {
        self.0 += calls;
    }
}

/// Cost of evaluating one sampled component at two points in a correction step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum IfoConvention {
    /// One call per component per evaluation point (2 per paired sample).
    #[default]
    Paired,
    /// One call per sampled component regardless of how many points it is evaluated at.
    Single,
}

impl fmt::Display for IfoConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            IfoConvention::Paired => "paired",
            IfoConvention::Single => "single",
        })
    }
}

impl FromStr for IfoConvention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paired" => Ok(IfoConvention::Paired),
            "single" => Ok(IfoConvention::Single),
            other => Err(Error::Usage(format!(
                "unknown IFO convention `{other}` (expected paired|single)"
            ))),
        }
    }
}

impl IfoConvention {
    fn paired_cost(self, samples: usize) -> u64 {
        match self {
            IfoConvention::Paired => 2 * samples as u64,
            IfoConvention::Single => samples as u64,
        }
    }
}

/// Draws `count` indices uniformly with replacement from `0..n`.
pub fn sample_indices<R: Rng + ?Sized>(rng: &mut R, n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

/// Breakdown of the oracle work done in a run, for reconciling the counter.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IfoLedger {
    /// Exact gradients evaluated at one point (`n` components each).
    pub full: u64,
    /// Exact gradients evaluated at a pair of points.
    pub paired_full: u64,
    /// Sampled components evaluated at one point.
    pub samples: u64,
    /// Sampled components evaluated at a pair of points.
    pub paired_samples: u64,
}

impl IfoLedger {
    /// The IFO count implied by this ledger.
    pub fn total(&self, n: usize, convention: IfoConvention) -> u64 {
        let n = n as u64;
        let pair = match convention {
            IfoConvention::Paired => 2,
            IfoConvention::Single => 1,
        };
        self.full * n + self.samples + pair * (self.paired_full * n + self.paired_samples)
    }
}

/// Counted gradient access to an objective for the duration of one run.
pub struct Ifo<'a, O: Objective + ?Sized> {
    objective: &'a O,
    counter: IfoCounter,
    convention: IfoConvention,
    ledger: IfoLedger,
}

impl<'a, O: Objective + ?Sized> Ifo<'a, O> {
    pub fn new(objective: &'a O, convention: IfoConvention) -> Self {
        Ifo {
            objective,
            counter: IfoCounter::default(),
            convention,
            ledger: IfoLedger::default(),
        }
    }

    pub fn objective(&self) -> &'a O {
        self.objective
    }

    pub fn counter(&self) -> IfoCounter {
        self.counter
    }

    pub fn calls(&self) -> u64 {
        self.counter.get()
    }

    pub fn convention(&self) -> IfoConvention {
        self.convention
    }

    pub fn ledger(&self) -> IfoLedger {
        self.ledger
    }

    fn check_index(&self, i: usize) -> Result<()> {
        let n = self.objective.num_components();
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        Ok(())
    }

    fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        let d = self.objective.manifold().dim();
        if x.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: x.dim(),
            });
        }
        Ok(())
    }

    fn mean(&self, indices: &[usize], x: &ManifoldPoint) -> TangentVector {
        let mut g = vec![0.0; x.dim()];
        for &i in indices {
            self.objective.accumulate_rgrad(i, x, 1.0, &mut g);
        }
        scale(1.0 / indices.len() as f64, &mut g);
        finish_tangent(&self.objective.manifold(), x, g)
    }

    pub fn component_rgrad(&mut self, i: usize, x: &ManifoldPoint) -> Result<TangentVector> {
        self.check_point(x)?;
        self.check_index(i)?;
        self.counter.charge(1);
        self.ledger.samples += 1;
        Ok(self.objective.component_rgrad(i, x))
    }

    /// Mean of the component gradients indexed by `indices` (a multiset).
    pub fn minibatch_rgrad(&mut self, indices: &[usize], x: &ManifoldPoint) -> Result<TangentVector> {
        self.check_point(x)?;
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for &i in indices {
            self.check_index(i)?;
        }
        self.counter.charge(indices.len() as u64);
        self.ledger.samples += indices.len() as u64;
        Ok(self.mean(indices, x))
    }

    /// Exact gradient by enumerating all `n` components; costs `n` calls.
    pub fn full_rgrad(&mut self, x: &ManifoldPoint) -> Result<TangentVector> {
        self.check_point(x)?;
        let n = self.objective.num_components();
        self.counter.charge(n as u64);
        self.ledger.full += 1;
        Ok(self.objective.full_rgrad(x))
    }

    /// The same index multiset evaluated at `x` and at `prev`.
    pub fn paired_minibatch_rgrad(
        &mut self,
        indices: &[usize],
        x: &ManifoldPoint,
        prev: &ManifoldPoint,
    ) -> Result<(TangentVector, TangentVector)> {
        self.check_point(x)?;
        self.check_point(prev)?;
        if indices.is_empty() {
            return Err(Error::EmptyBatch);
        }
        for &i in indices {
            self.check_index(i)?;
        }
        self.counter.charge(self.convention.paired_cost(indices.len()));
        self.ledger.paired_samples += indices.len() as u64;
        Ok((self.mean(indices, x), self.mean(indices, prev)))
    }

    /// Exact gradients at `x` and `prev`.
    pub fn paired_full_rgrad(
        &mut self,
        x: &ManifoldPoint,
        prev: &ManifoldPoint,
    ) -> Result<(TangentVector, TangentVector)> {
        self.check_point(x)?;
        self.check_point(prev)?;
        let n = self.objective.num_components();
        self.counter.charge(self.convention.paired_cost(n));
        self.ledger.paired_full += 1;
        Ok((self.objective.full_rgrad(x), self.objective.full_rgrad(prev)))
    }
}

/// Empirical `E ||grad f_i(x) - grad f(x)||^2` over `m` uniform draws.
///
/// IFO-free. Serves as the variance bound `sigma^2` in the stochastic schedules.
pub fn variance_bound_estimate<O: Objective + ?Sized, R: Rng + ?Sized>(
    objective: &O,
    x: &ManifoldPoint,
    m: usize,
    rng: &mut R,
) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidConfig(format!("variance estimate needs m >= 2, got {m}")));
    }
    let n = objective.num_components();
    let full = objective.full_rgrad(x);
    let mut total = 0.0;
    for i in sample_indices(rng, n, m) {
        let g = objective.component_rgrad(i, x);
        total += dist_sq(g.coords(), full.coords());
    }
    Ok(total / m as f64)
}
