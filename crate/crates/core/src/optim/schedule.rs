//! Parameter schedules for the nonconvex SPIDER solver.

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::MapMode;
use crate::optim::{IterateChoice, SpiderConfig};

/// Ceiling that ignores floating-point noise just above an integer,
/// so that e.g. `4 / 0.1^2` yields 400 rather than 401.
pub fn ceil_tol(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `ceil(sqrt(n))`, exact for all `n`.
pub fn sqrt_ceil(n: usize) -> usize {
    let mut q = (n as f64).sqrt() as usize;
    while q * q < n {
        q += 1;
    }
    while q > 0 && (q - 1) * (q - 1) >= n {
        q -= 1;
    }
    q
}

/// `ceil(min{n, epoch_len L^2 dist^2 / denom})`, clamped to at least one sample.
///
/// `denom` is `2 eps^2` for the nonconvex solver and the current `delta` for
/// the epoch-halving solver; `n = None` means the stochastic setting (no cap).
pub fn correction_batch_size(epoch_len: usize, lipschitz: f64, dist: f64, denom: f64, n: Option<usize>) -> usize {
    let raw = epoch_len as f64 * lipschitz * lipschitz * dist * dist / denom;
    let capped = match n {
        Some(n) => raw.min(n as f64),
        None => raw.min(usize::MAX as f64 / 2.0),
    };
    (ceil_tol(capped) as usize).max(1)
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")))
    }
}

fn iteration_budget(gap: f64, lipschitz: f64, eps: f64) -> u64 {
    ceil_tol(4.0 * gap * lipschitz / (eps * eps)) as u64
}

/// Stochastic setting: anchor batch `2 sigma^2 / eps^2`, step `1/(2L)`,
/// epoch length `1/eps`, `4ML/eps^2` iterations, no component cap.
pub fn params_stochastic(sigma_sq: f64, eps: f64, gap: f64, lipschitz: f64) -> Result<SpiderConfig> {
    check_positive("eps", eps)?;
    check_positive("M", gap)?;
    check_positive("L", lipschitz)?;
    if !(sigma_sq >= 0.0 && sigma_sq.is_finite()) {
        return Err(Error::InvalidConfig(format!("sigma^2 must be >= 0, got {sigma_sq}")));
    }
    let mut anchor = ceil_tol(2.0 * sigma_sq / (eps * eps)) as usize;
    if anchor == 0 {
        warn!("anchor batch 2 sigma^2 / eps^2 rounds to 0; using 1");
        anchor = 1;
    }
    Ok(SpiderConfig {
        lipschitz,
        eps,
        step_size: 1.0 / (2.0 * lipschitz),
        epoch_len: (ceil_tol(1.0 / eps) as usize).max(1),
        anchor_batch: anchor,
        iterations: iteration_budget(gap, lipschitz, eps),
        components: None,
        map_mode: MapMode::Exponential,
        seed: 0,
        output: IterateChoice::Uniform,
    })
}

/// Finite-sum setting: exact anchor (`n` components), step `1/(2L)`,
/// epoch length `ceil(sqrt n)`, `4ML/eps^2` iterations.
pub fn params_finite(n: usize, eps: f64, gap: f64, lipschitz: f64) -> Result<SpiderConfig> {
    if n == 0 {
        return Err(Error::InvalidConfig("n must be >= 1".into()));
    }
    check_positive("eps", eps)?;
    check_positive("M", gap)?;
    check_positive("L", lipschitz)?;
    Ok(SpiderConfig {
        lipschitz,
        eps,
        step_size: 1.0 / (2.0 * lipschitz),
        epoch_len: sqrt_ceil(n),
        anchor_batch: n,
        iterations: iteration_budget(gap, lipschitz, eps),
        components: Some(n),
        map_mode: MapMode::Exponential,
        seed: 0,
        output: IterateChoice::Uniform,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn correction_batch_example() {
        // q = 10, L = 2, dist = 0.05, eps = 0.1, n = 500
        assert_eq!(correction_batch_size(10, 2.0, 0.05, 2.0 * 0.1 * 0.1, Some(500)), 5);
        assert_eq!(correction_batch_size(10, 2.0, 0.0, 0.02, Some(500)), 1);
        assert_eq!(correction_batch_size(10, 2.0, 10.0, 0.02, Some(500)), 500);
        assert_eq!(correction_batch_size(10, 2.0, 10.0, 0.02, None), 200_000);
    }

    #[test]
    fn stochastic_schedule() {
        let c = params_stochastic(1.0, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(c.anchor_batch, 200);
        assert_eq!(c.step_size, 0.5);
        assert_eq!(c.epoch_len, 10);
        assert_eq!(c.iterations, 400);
        assert_eq!(c.components, None);
        let half = params_stochastic(1.0, 0.05, 1.0, 1.0).unwrap();
        assert_eq!(half.iterations, 1600);
        let degenerate = params_stochastic(0.0, 0.1, 1.0, 1.0).unwrap();
        assert_eq!(degenerate.anchor_batch, 1);
        assert!(params_stochastic(1.0, 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn finite_schedule() {
        let c = params_finite(10_000, 0.1, 1.0, 1.0).unwrap();
        assert_eq!((c.anchor_batch, c.epoch_len, c.iterations), (10_000, 100, 400));
        assert_eq!(c.step_size, 0.5);
        assert_eq!(params_finite(1, 0.1, 1.0, 1.0).unwrap().epoch_len, 1);
        let c = params_finite(100, 0.05, 2.0, 3.0).unwrap();
        assert_eq!((c.epoch_len, c.iterations), (10, 9600));
    }

    #[test]
    fn integer_ceilings() {
        assert_eq!(sqrt_ceil(0), 0);
        assert_eq!(sqrt_ceil(1), 1);
        assert_eq!(sqrt_ceil(200), 15);
        assert_eq!(sqrt_ceil(225), 15);
        assert_eq!(sqrt_ceil(226), 16);
        assert_eq!(ceil_tol(5.000000000000001), 5.0);
        assert_eq!(ceil_tol(5.01), 6.0);
    }
}
