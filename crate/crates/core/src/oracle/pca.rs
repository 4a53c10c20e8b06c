use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{Manifold, ManifoldPoint};
use crate::linalg::{axpy, dot, norm, scale};
use crate::oracle::Objective;

const POWER_TOL: f64 = 1e-13;
const POWER_MAX_ITERS: usize = 100_000;

/// Leading-eigenvector problem on `S^{d-1}`:
/// `f(x) = -(1/n) sum_i (z_i^T x)^2 = -x^T A x` with `A = (1/n) Z Z^T`.
///
/// Samples are stored contiguously (`z_i` occupies `data[i*d..(i+1)*d]`), which
/// is also the column-major layout of the `d x n` matrix `Z`.
#[derive(Debug)]
pub struct PcaProblem {
    d: usize,
    n: usize,
    data: Vec<f64>,
    spectrum: Option<Vec<f64>>,
    covariance: OnceLock<Vec<f64>>,
    top: OnceLock<f64>,
}

impl Clone for PcaProblem {
    fn clone(&self) -> Self {
        PcaProblem {
            d: self.d,
            n: self.n,
            data: self.data.clone(),
            spectrum: self.spectrum.clone(),
            covariance: OnceLock::new(),
            top: OnceLock::new(),
        }
    }
}

impl PcaProblem {
    /// Builds a problem from the columns of `Z`, concatenated.
    pub fn from_columns(d: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if d == 0 || n == 0 {
            return Err(Error::InvalidConfig("PCA problem needs d >= 1 and n >= 1".into()));
        }
        if data.len() != d * n {
            return Err(Error::DimensionMismatch {
                expected: d * n,
                got: data.len(),
            });
        }
        if !crate::linalg::all_finite(&data) {
            return Err(Error::NonFinite("data matrix"));
        }
        Ok(PcaProblem {
            d,
            n,
            data,
            spectrum: None,
            covariance: OnceLock::new(),
            top: OnceLock::new(),
        })
    }

    /// Attaches the exact eigenvalues of `A`, sorted descending.
    pub fn with_spectrum(mut self, mut spectrum: Vec<f64>) -> Result<Self> {
        if spectrum.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: spectrum.len(),
            });
        }
        spectrum.sort_by(|a, b| b.total_cmp(a));
        self.spectrum = Some(spectrum);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Columns of `Z`, concatenated.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn known_spectrum(&self) -> Option<&[f64]> {
        self.spectrum.as_deref()
    }

    /// `f* = -lambda_1`, from the known spectrum when attached, else by power iteration.
    pub fn optimal_value(&self) -> Result<f64> {
        match &self.spectrum {
            Some(s) => Ok(-s[0]),
            None => Ok(-self.leading_eigpair()?.0),
        }
    }

    /// `A = (1/n) Z Z^T`, row-major, computed once.
    pub fn covariance(&self) -> &[f64] {
        self.covariance.get_or_init(|| {
            let d = self.d;
            let mut a = vec![0.0; d * d];
            for i in 0..self.n {
                let z = self.sample(i);
                for r in 0..d {
                    axpy(z[r], z, &mut a[r * d..(r + 1) * d]);
                }
            }
            scale(1.0 / self.n as f64, &mut a);
            a
        })
    }

    fn apply_covariance(&self, x: &[f64], out: &mut [f64]) {
        let a = self.covariance();
        let d = self.d;
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(&a[r * d..(r + 1) * d], x);
        }
    }

    /// Largest eigenvalue of `A` and a unit eigenvector, by power iteration.
    ///
    /// Stops once successive Rayleigh quotients differ by less than `1e-13`.
    pub fn leading_eigpair(&self) -> Result<(f64, ManifoldPoint)> {
        self.power_iteration(|x, out| self.apply_covariance(x, out))
    }

    /// Second eigenpair, by power iteration on `A - lambda_1 x* x*^T`.
    pub fn second_eigpair(&self, top: &(f64, ManifoldPoint)) -> Result<(f64, ManifoldPoint)> {
        let (l1, v1) = (top.0, top.1.coords());
        self.power_iteration(|x, out| {
            self.apply_covariance(x, out);
            axpy(-l1 * dot(v1, x), v1, out);
        })
    }

    fn power_iteration<F: Fn(&[f64], &mut [f64])>(&self, apply: F) -> Result<(f64, ManifoldPoint)> {
        let d = self.d;
        // Deterministic start with no special alignment to coordinate axes.
        let mut x: Vec<f64> = (0..d)
            .map(|i| 1.0 + ((i as f64 + 1.0) * 0.618_033_988_75).fract())
            .collect();
        let r = norm(&x);
        scale(1.0 / r, &mut x);
        let mut y = vec![0.0; d];
        let mut rq_prev = f64::NAN;
        for _ in 0..POWER_MAX_ITERS {
            apply(&x, &mut y);
            let rq = dot(&x, &y);
            let ny = norm(&y);
            if ny == 0.0 {
                return Ok((0.0, self.manifold().point(x)?));
            }
            std::mem::swap(&mut x, &mut y);
            scale(1.0 / ny, &mut x);
            if (rq - rq_prev).abs() < POWER_TOL {
                apply(&x, &mut y);
                return Ok((dot(&x, &y), self.manifold().point(x)?));
            }
            rq_prev = rq;
        }
        Err(Error::NoConvergence {
            iterations: POWER_MAX_ITERS,
        })
    }

    /// Frobenius norm of `A`, an upper bound on `lambda_1`.
    fn frobenius(&self) -> f64 {
        norm(self.covariance())
    }

    fn top_eigenvalue(&self) -> f64 {
        *self.top.get_or_init(|| match &self.spectrum {
            Some(s) => s[0],
            None => self
                .leading_eigpair()
                .map(|(l, _)| l)
                .unwrap_or_else(|_| self.frobenius()),
        })
    }
}

impl Objective for PcaProblem {
    fn manifold(&self) -> Manifold {
        Manifold::sphere(self.d)
    }

    fn num_components(&self) -> usize {
        self.n
    }

    fn component_value(&self, i: usize, x: &ManifoldPoint) -> f64 {
        let a = dot(self.sample(i), x.coords());
        -a * a
    }

    // grad f_i(x) = (I - x x^T)(-2 (z_i^T x) z_i) = -2a (z_i - a x)
    fn accumulate_rgrad(&self, i: usize, x: &ManifoldPoint, weight: f64, out: &mut [f64]) {
        let z = self.sample(i);
        let a = dot(z, x.coords());
        axpy(-2.0 * a * weight, z, out);
        axpy(2.0 * a * a * weight, x.coords(), out);
    }

    /// `4 lambda_1`, an overestimate of the geodesic smoothness of `f`.
    fn lipschitz_hint(&self) -> f64 {
        4.0 * self.top_eigenvalue()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{Ifo, IfoConvention};
    use std::f64::consts::FRAC_1_SQRT_2;

    /// z_1 = (2, 0), z_2 = (0, sqrt 2), so A = diag(2, 1).
    pub(crate) fn diag21() -> PcaProblem {
        PcaProblem::from_columns(2, 2, vec![2.0, 0.0, 0.0, 2f64.sqrt()]).unwrap()
    }

    #[test]
    fn value_examples() {
        let p = diag21();
        let s = p.manifold();
        let e1 = s.point(vec![1.0, 0.0]).unwrap();
        assert!((p.value(&e1) + 2.0).abs() < 1e-15);
        let mid = s.point(vec![1.0, 1.0]).unwrap();
        assert!((p.value(&mid) + 1.5).abs() < 1e-15);
        let neg = s.point(vec![-1.0, -1.0]).unwrap();
        assert_eq!(p.value(&mid), p.value(&neg));
    }

    #[test]
    fn gradient_examples() {
        let p = diag21();
        let s = p.manifold();
        let e1 = s.point(vec![1.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!(p.component_rgrad(i, &e1).norm() < 1e-15);
        }
        let mid = s.point(vec![1.0, 1.0]).unwrap();
        let g = p.full_rgrad(&mid);
        assert!((g.coords()[0] + FRAC_1_SQRT_2).abs() < 1e-15);
        assert!((g.coords()[1] - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn counter_charges_per_component() {
        let data: Vec<f64> = (0..300).map(|k| ((k * 7919) % 101) as f64 / 50.0 - 1.0).collect();
        let p = PcaProblem::from_columns(3, 100, data).unwrap();
        let x = p.manifold().point(vec![1.0, 2.0, 3.0]).unwrap();
        let mut ifo = Ifo::new(&p, IfoConvention::Paired);
        ifo.full_rgrad(&x).unwrap();
        assert_eq!(ifo.calls(), 100);
        ifo.minibatch_rgrad(&[0, 5, 5], &x).unwrap();
        assert_eq!(ifo.calls(), 103);
        let y = p.manifold().point(vec![1.0, 2.0, 3.5]).unwrap();
        ifo.paired_minibatch_rgrad(&[1, 2], &x, &y).unwrap();
        assert_eq!(ifo.calls(), 107);
        assert_eq!(
            ifo.component_rgrad(100, &x),
            Err(Error::IndexOutOfRange { index: 100, n: 100 })
        );
        assert_eq!(ifo.minibatch_rgrad(&[], &x), Err(Error::EmptyBatch));
        assert_eq!(ifo.calls(), 107);

        let mut single = Ifo::new(&p, IfoConvention::Single);
        single.paired_minibatch_rgrad(&[1, 2], &x, &y).unwrap();
        assert_eq!(single.calls(), 2);
    }

    #[test]
    fn enumerated_minibatch_equals_full_gradient() {
        let data: Vec<f64> = (0..120).map(|k| ((k * 31) % 17) as f64 - 8.0).collect();
        let p = PcaProblem::from_columns(4, 30, data).unwrap();
        let x = p.manifold().point(vec![0.3, -1.0, 2.0, 0.5]).unwrap();
        let all: Vec<usize> = (0..30).collect();
        let mut ifo = Ifo::new(&p, IfoConvention::Paired);
        let a = ifo.minibatch_rgrad(&all, &x).unwrap();
        let b = ifo.full_rgrad(&x).unwrap();
        assert_eq!(a.coords(), b.coords());
    }

    #[test]
    fn diagonal_eigpair() {
        let p = diag21();
        let (l, v) = p.leading_eigpair().unwrap();
        assert!((l - 2.0).abs() < 1e-12);
        assert!((v.coords()[0].abs() - 1.0).abs() < 1e-6);
        assert!((p.optimal_value().unwrap() + 2.0).abs() < 1e-12);
        assert!((p.lipschitz_hint() - 8.0).abs() < 1e-12);
        let (l2, v2) = p.second_eigpair(&(l, v)).unwrap();
        assert!((l2 - 1.0).abs() < 1e-12);
        assert!((v2.coords()[1].abs() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PcaProblem::from_columns(2, 2, vec![1.0; 3]).is_err());
        assert!(PcaProblem::from_columns(0, 2, vec![]).is_err());
        assert!(diag21().with_spectrum(vec![1.0]).is_err());
    }
}
