//! Runtime checks of the quantities the optimizers rely on: gradients,
//! smoothness and gradient-domination constants, estimator variance, and the
//! epochs-to-double-accuracy rate statistic.

use std::fmt;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldPoint};
use crate::linalg::dist_sq;
use crate::optim::{spider_correction, FrozenState, RunTrace};
use crate::oracle::{Ifo, IfoConvention, Objective, PcaProblem};
use crate::rng::{stream, STREAM_PROBE};

/// Points whose squared gradient norm is below this are skipped by the PL estimate.
pub const CRITICAL_GRAD_SQ: f64 = 1e-12;
/// Accuracy at or below this counts as converged.
pub const CONVERGED_ACCURACY: f64 = 1e-15;

/// Outcome of one probe. `pass` is `statistic <= bound` when a bound is set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub name: String,
    pub samples: usize,
    pub statistic: f64,
    pub bound: Option<f64>,
    pub pass: bool,
    pub details: Vec<(String, f64)>,
}

impl ProbeReport {
    pub fn new(name: &str, samples: usize, statistic: f64, bound: Option<f64>) -> Self {
        ProbeReport {
            name: name.to_string(),
            samples,
            statistic,
            bound,
            pass: bound.is_none_or(|b| statistic <= b),
            details: Vec::new(),
        }
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self.pass = self.statistic <= bound;
        self
    }

    pub fn detail(mut self, key: &str, value: f64) -> Self {
        self.details.push((key.to_string(), value));
        self
    }

    pub fn detail_value(&self, key: &str) -> Option<f64> {
        self.details.iter().find(|(k, _)| k == key).map(|&(_, v)| v)
    }

    /// Flat `key=value` lines.
    pub fn to_kv(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ProbeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "probe={}", self.name)?;
        writeln!(f, "samples={}", self.samples)?;
        writeln!(f, "statistic={}", self.statistic)?;
        match self.bound {
            Some(b) => writeln!(f, "bound={b}")?,
            None => writeln!(f, "bound=none")?,
        }
        writeln!(f, "pass={}", self.pass)?;
        for (k, v) in &self.details {
            writeln!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

/// `(<grad f(x), v>, (f(exp(x, t v)) - f(exp(x, -t v))) / 2t)`.
pub fn directional_fd<O: Objective + ?Sized>(
    objective: &O,
    x: &ManifoldPoint,
    v: &crate::geometry::TangentVector,
    t: f64,
) -> Result<(f64, f64)> {
    let m = objective.manifold();
    let g = objective.full_rgrad(x);
    let analytic = m.inner(x, &g, v)?;
    let plus = objective.value(&m.exp(x, &v.scaled(t))?);
    let minus = objective.value(&m.exp(x, &v.scaled(-t))?);
    Ok((analytic, (plus - minus) / (2.0 * t)))
}

/// Central-difference check of the Riemannian gradient along `trials` random
/// unit tangents. The statistic is the largest absolute error.
pub fn fd_gradient_check<O: Objective + ?Sized>(
    objective: &O,
    x: &ManifoldPoint,
    trials: usize,
    t_step: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if !(t_step > 0.0 && t_step <= 1e-3) {
        return Err(Error::InvalidConfig(format!(
            "t_step must lie in (0, 1e-3], got {t_step}"
        )));
    }
    let m = objective.manifold();
    let mut rng = stream(seed, STREAM_PROBE);
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for _ in 0..trials {
        let v = m.random_unit_tangent(x, &mut rng)?;
        let (a, n) = directional_fd(objective, x, &v, t_step)?;
        worst = worst.max((a - n).abs());
        scale = scale.max(a.abs());
    }
    Ok(ProbeReport::new("fd_gradient", trials, worst, None)
        .detail("t_step", t_step)
        .detail("max_directional_derivative", scale))
}

/// `||g_x - Gamma_y^x g_y|| / d(x, y)`.
pub fn smoothness_ratio<O: Objective + ?Sized>(objective: &O, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
    let m = objective.manifold();
    let d = m.dist(x, y)?;
    if d == 0.0 {
        return Err(Error::NoInformation("smoothness ratio at coincident points".into()));
    }
    let gx = objective.full_rgrad(x);
    let gy = m.transport(y, x, &objective.full_rgrad(y))?;
    Ok(gx.sub(&gy)?.norm() / d)
}

/// Largest smoothness ratio over `pairs` random pairs at distance at most
/// `radius`: an empirical lower bound on `L`, checked against the objective's
/// own hint.
pub fn smoothness_probe<O: Objective + ?Sized>(
    objective: &O,
    pairs: usize,
    radius: f64,
    seed: u64,
) -> Result<ProbeReport> {
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidConfig(format!("radius must be positive, got {radius}")));
    }
    let m = objective.manifold();
    let mut rng = stream(seed, STREAM_PROBE);
    let mut worst: f64 = 0.0;
    let mut used = 0;
    for _ in 0..pairs {
        let x = m.random_point(&mut rng);
        let r = radius * (1.0 - rng.random::<f64>());
        let y = m.exp(&x, &m.random_unit_tangent(&x, &mut rng)?.scaled(r))?;
        if m.dist(&x, &y)? == 0.0 {
            continue;
        }
        worst = worst.max(smoothness_ratio(objective, &x, &y)?);
        used += 1;
    }
    Ok(ProbeReport::new("smoothness", used, worst, Some(objective.lipschitz_hint())).detail("radius", radius))
}

/// Empirical gradient-domination constant `max (f(x) - f*) / ||grad f(x)||^2`.
///
/// Points with `||grad f||^2 < 1e-12` are skipped; if every point is skipped
/// there is nothing to estimate.
pub fn pl_constant_estimate<O: Objective + ?Sized>(
    objective: &O,
    f_star: f64,
    points: &[ManifoldPoint],
) -> Result<ProbeReport> {
    let mut worst = f64::NEG_INFINITY;
    let mut least = f64::INFINITY;
    let mut used = 0;
    for x in points {
        let g = objective.full_rgrad(x).norm_sq();
        if g < CRITICAL_GRAD_SQ {
            continue;
        }
        let ratio = (objective.value(x) - f_star) / g;
        worst = worst.max(ratio);
        least = least.min(ratio);
        used += 1;
    }
    if used == 0 {
        return Err(Error::NoInformation(format!(
            "all {} points are near-critical",
            points.len()
        )));
    }
    Ok(ProbeReport::new("pl_constant", used, worst, None)
        .detail("min_ratio", least)
        .detail("excluded", (points.len() - used) as f64))
}

/// `count` points in the geodesic ball of the given radius around `center`,
/// with uniformly distributed distance.
pub fn ball_points<R: Rng + ?Sized>(
    manifold: &Manifold,
    center: &ManifoldPoint,
    radius: f64,
    count: usize,
    rng: &mut R,
) -> Result<Vec<ManifoldPoint>> {
    (0..count)
        .map(|_| {
            let u = manifold.random_unit_tangent(center, rng)?;
            let r = radius * rng.random::<f64>();
            manifold.exp(center, &u.scaled(r))
        })
        .collect()
}

/// Probe points for the PCA gradient-domination constant.
///
/// Half are uniform in the ball of `radius` around the leading eigenvector;
/// the rest lie on the geodesics towards plus or minus the second
/// eigenvector, where the ratio is largest.
pub fn pca_pl_points(problem: &PcaProblem, radius: f64, count: usize, seed: u64) -> Result<Vec<ManifoldPoint>> {
    let m = Manifold::sphere(problem.dim());
    let top = problem.leading_eigpair()?;
    let second = problem.second_eigpair(&top)?;
    let mut rng = stream(seed, STREAM_PROBE);
    let half = count / 2;
    let mut points = ball_points(&m, &top.1, radius, half, &mut rng)?;
    let towards = m.tangent(&top.1, second.1.to_vec())?;
    for _ in half..count {
        let r = radius * (1.0 - rng.random::<f64>());
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        points.push(m.exp(&top.1, &towards.scaled(sign * r))?);
    }
    Ok(points)
}

/// Monte-Carlo mean of `||v_k - grad f(x_k)||^2` over fresh index draws for
/// one captured correction step, against the bound `2 eps^2`.
pub fn variance_probe<O: Objective + ?Sized>(
    objective: &O,
    frozen: &FrozenState,
    resamples: usize,
    seed: u64,
) -> Result<ProbeReport> {
    if resamples == 0 {
        return Err(Error::InvalidConfig(
            "variance probe needs at least one resample".into(),
        ));
    }
    let m = objective.manifold();
    let target = objective.full_rgrad(&frozen.current);
    let mut ifo = Ifo::new(objective, IfoConvention::Paired);
    let mut rng = stream(seed, STREAM_PROBE);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut worst: f64 = 0.0;
    for _ in 0..resamples {
        let v = spider_correction(
            &mut ifo,
            &m,
            &frozen.prev,
            &frozen.current,
            &frozen.v_prev,
            frozen.batch,
            frozen.components,
            &mut rng,
        )?;
        let e = dist_sq(v.coords(), target.coords());
        sum += e;
        sum_sq += e * e;
        worst = worst.max(e);
    }
    let r = resamples as f64;
    let mean = sum / r;
    let var = if resamples > 1 {
        ((sum_sq - r * mean * mean) / (r - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(
        ProbeReport::new("variance", resamples, mean, Some(2.0 * frozen.eps * frozen.eps))
            .detail("std_error", (var / r).sqrt())
            .detail("max", worst)
            .detail("batch", frozen.batch as f64)
            .detail("k", frozen.k as f64),
    )
}

/// Epochs needed to halve the relative error, from one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Doubling {
    Value(f64),
    /// No progress over the window (`c >= 1`).
    Stalled,
    /// The error reached the floating-point floor.
    Converged,
}

impl Doubling {
    pub fn from_accuracies(start: f64, end: f64, window: f64) -> Doubling {
        if start <= CONVERGED_ACCURACY || end <= CONVERGED_ACCURACY {
            return Doubling::Converged;
        }
        let c = end / start;
        if c >= 1.0 {
            Doubling::Stalled
        } else {
            Doubling::Value(2f64.ln() / (1.0 / c).ln() * window)
        }
    }

    /// Finite value, `inf` when stalled, `None` when converged.
    pub fn as_f64(self) -> Option<f64> {
        match self {
            Doubling::Value(v) => Some(v),
            Doubling::Stalled => Some(f64::INFINITY),
            Doubling::Converged => None,
        }
    }
}

impl fmt::Display for Doubling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Doubling::Value(v) => write!(f, "{v}"),
            Doubling::Stalled => f.write_str("inf"),
            Doubling::Converged => f.write_str("converged"),
        }
    }
}

/// `(f - f*) / |f*|`.
pub fn relative_accuracy(f: f64, f_star: f64) -> f64 {
    (f - f_star) / f_star.abs()
}

/// Sliding-window doubling estimates over `(epoch, f)` checkpoints.
///
/// For each checkpoint at epoch `e`, pairs it with the first checkpoint at or
/// after `e + window` and yields `(e, log 2 / log(1/c) * w)`, where `c` is the
/// ratio of relative errors and `w` the actual epoch difference.
pub fn epochs_to_double_series(points: &[(f64, f64)], f_star: f64, window: f64) -> Result<Vec<(f64, Doubling)>> {
    if f_star == 0.0 || !f_star.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "f* must be finite and non-zero, got {f_star}"
        )));
    }
    if window.is_nan() || window <= 0.0 {
        return Err(Error::InvalidConfig(format!("window must be positive, got {window}")));
    }
    let span = points.last().map_or(0.0, |p| p.0) - points.first().map_or(0.0, |p| p.0);
    if points.len() < 2 || span + 1e-9 < window {
        return Err(Error::Usage(format!(
            "need checkpoints spanning {window} epochs, got {} covering {span}",
            points.len()
        )));
    }
    let mut out = Vec::new();
    let mut j = 0;
    for &(e, f) in points {
        while j < points.len() && points[j].0 < e + window - 1e-9 {
            j += 1;
        }
        if j == points.len() {
            break;
        }
        let d = Doubling::from_accuracies(
            relative_accuracy(f, f_star),
            relative_accuracy(points[j].1, f_star),
            points[j].0 - e,
        );
        out.push((e, d));
    }
    Ok(out)
}

/// [`epochs_to_double_series`] over a trace's checkpoints.
pub fn epochs_to_double(trace: &RunTrace, f_star: f64, window: f64) -> Result<Vec<(f64, Doubling)>> {
    let points: Vec<(f64, f64)> = trace.records.iter().map(|r| (r.epoch, r.f)).collect();
    epochs_to_double_series(&points, f_star, window)
}

/// Ordinary least squares `y = slope x + intercept` with Pearson correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub corr: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() {
        return Err(Error::DimensionMismatch {
            expected: xs.len(),
            got: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::NoInformation("a fit needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::NoInformation("all abscissae coincide".into()));
    }
    let slope = sxy / sxx;
    let corr = if syy == 0.0 { 0.0 } else { sxy / (sxx * syy).sqrt() };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        corr,
    })
}
