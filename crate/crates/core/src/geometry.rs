//! Geodesic geometry of the unit hypersphere `S^{d-1}` and of `R^d`.
//!
//! Points and tangent vectors are stored in ambient coordinates. Sphere points
//! are renormalized on construction and tangent vectors are projected onto the
//! tangent space of their base point, so every value handed out by a
//! [`Manifold`] satisfies the membership and tangency invariants.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, axpy, dot, norm, scale};

/// Below this step length `exp` on the sphere falls back to `normalize(x + v)`.
pub const EXP_TAYLOR_CUTOFF: f64 = 1e-8;
/// Below this angle `log` returns zero and `transport` degenerates to projection.
pub const SMALL_ANGLE: f64 = 1e-9;
/// Pairs with `<x, y> <= -1 + ANTIPODAL_MARGIN` have no unique geodesic.
pub const ANTIPODAL_MARGIN: f64 = 1e-8;
const RETRACTION_FLOOR: f64 = 1e-12;

/// A point on a manifold, in ambient coordinates.
///
/// Coordinates are shared behind an `Arc`, so cloning a point (and every
/// tangent vector carries its base point) is cheap.
#[derive(Clone, PartialEq)]
pub struct ManifoldPoint {
    coords: Arc<[f64]>,
}

impl ManifoldPoint {
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.coords.to_vec()
    }

    /// Identity of points, with a pointer fast path.
    pub fn same_as(&self, other: &ManifoldPoint) -> bool {
        Arc::ptr_eq(&self.coords, &other.coords) || self.coords == other.coords
    }
}

impl fmt::Debug for ManifoldPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ManifoldPoint").field(&&*self.coords).finish()
    }
}

/// A vector in the tangent space at `base`.
#[derive(Clone, PartialEq)]
pub struct TangentVector {
    base: ManifoldPoint,
    coords: Vec<f64>,
}

impl fmt::Debug for TangentVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TangentVector")
            .field("base", &self.base)
            .field("coords", &self.coords)
            .finish()
    }
}

impl TangentVector {
    pub fn base(&self) -> &ManifoldPoint {
        &self.base
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// Norm under the ambient (induced) metric, which both manifolds use.
    pub fn norm(&self) -> f64 {
        norm(&self.coords)
    }

    pub fn norm_sq(&self) -> f64 {
        dot(&self.coords, &self.coords)
    }

    pub fn scaled(&self, alpha: f64) -> TangentVector {
        let mut coords = self.coords.clone();
        scale(alpha, &mut coords);
        TangentVector {
            base: self.base.clone(),
            coords,
        }
    }

    /// `self + alpha * other`, both at the same base point.
    pub fn add_scaled(&self, alpha: f64, other: &TangentVector) -> Result<TangentVector> {
        self.check_same_base(other)?;
        let mut coords = self.coords.clone();
        axpy(alpha, &other.coords, &mut coords);
        Ok(TangentVector {
            base: self.base.clone(),
            coords,
        })
    }

    pub fn add(&self, other: &TangentVector) -> Result<TangentVector> {
        self.add_scaled(1.0, other)
    }

    pub fn sub(&self, other: &TangentVector) -> Result<TangentVector> {
        self.add_scaled(-1.0, other)
    }

    fn check_same_base(&self, other: &TangentVector) -> Result<()> {
        if self.coords.len() != other.coords.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coords.len(),
                got: other.coords.len(),
            });
        }
        if !self.base.same_as(&other.base) {
            return Err(Error::BaseMismatch);
        }
        Ok(())
    }
}

/// How an optimizer moves along a search direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum MapMode {
    #[default]
    Exponential,
    Retraction,
}

impl fmt::Display for MapMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapMode::Exponential => "exp",
            MapMode::Retraction => "retract",
        })
    }
}

impl FromStr for MapMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp" | "exponential" => Ok(MapMode::Exponential),
            "retract" | "retraction" => Ok(MapMode::Retraction),
            other => Err(Error::Usage(format!(
                "unknown map mode `{other}` (expected exp|retract)"
            ))),
        }
    }
}

/// The two supported geometries, parameterized by ambient dimension `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Manifold {
    /// The unit sphere `S^{d-1}` embedded in `R^d`.
    Sphere {
        dim: usize,
    },
    Euclidean {
        dim: usize,
    },
}

impl Manifold {
    pub fn sphere(dim: usize) -> Self {
        Manifold::Sphere { dim }
    }

    pub fn euclidean(dim: usize) -> Self {
        Manifold::Euclidean { dim }
    }

    /// Ambient dimension.
    pub fn dim(&self) -> usize {
        match *self {
            Manifold::Sphere { dim } | Manifold::Euclidean { dim } => dim,
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Whether `x` satisfies this manifold's membership invariant.
    pub fn contains(&self, x: &ManifoldPoint) -> bool {
        x.dim() == self.dim()
            && all_finite(x.coords())
            && match self {
                Manifold::Sphere { .. } => (norm(x.coords()) - 1.0).abs() <= 1e-9,
                Manifold::Euclidean { .. } => true,
            }
    }

    pub(crate) fn check_point(&self, x: &ManifoldPoint) -> Result<()> {
        self.check_dim(x.dim())?;
        if !self.contains(x) {
            return Err(Error::InvalidConfig("point is not on the manifold".into()));
        }
        Ok(())
    }

    /// Builds a point, renormalizing onto the sphere when needed.
    pub fn point(&self, mut coords: Vec<f64>) -> Result<ManifoldPoint> {
        self.check_dim(coords.len())?;
        if !all_finite(&coords) {
            return Err(Error::NonFinite("point"));
        }
        if let Manifold::Sphere { .. } = self {
            let r = norm(&coords);
            if r == 0.0 || !r.is_finite() {
                return Err(Error::ZeroNorm);
            }
            scale(1.0 / r, &mut coords);
        }
        Ok(ManifoldPoint { coords: coords.into() })
    }

    /// Builds a tangent vector at `base`, projecting onto `T_base M`.
    pub fn tangent(&self, base: &ManifoldPoint, mut coords: Vec<f64>) -> Result<TangentVector> {
        self.check_dim(base.dim())?;
        self.check_dim(coords.len())?;
        if !all_finite(&coords) {
            return Err(Error::NonFinite("tangent vector"));
        }
        if let Manifold::Sphere { .. } = self {
            let c = dot(base.coords(), &coords);
            axpy(-c, base.coords(), &mut coords);
        }
        Ok(TangentVector {
            base: base.clone(),
            coords,
        })
    }

    pub fn zero(&self, base: &ManifoldPoint) -> TangentVector {
        TangentVector {
            base: base.clone(),
            coords: vec![0.0; base.dim()],
        }
    }

    fn check_base(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<()> {
        self.check_dim(x.dim())?;
        self.check_dim(v.dim())?;
        if !v.base.same_as(x) {
            return Err(Error::BaseMismatch);
        }
        Ok(())
    }

    /// Riemannian metric at `x`; the induced ambient dot product on both manifolds.
    pub fn inner(&self, x: &ManifoldPoint, u: &TangentVector, v: &TangentVector) -> Result<f64> {
        self.check_base(x, u)?;
        self.check_base(x, v)?;
        Ok(dot(&u.coords, &v.coords))
    }

    pub fn exp(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        self.check_base(x, v)?;
        if v.coords.iter().all(|&c| c == 0.0) {
            return Ok(x.clone());
        }
        match self {
            Manifold::Euclidean { .. } => {
                let mut y = x.to_vec();
                axpy(1.0, &v.coords, &mut y);
                self.point(y)
            }
            Manifold::Sphere { .. } => {
                let t = v.norm();
                let mut y = x.to_vec();
                if t < EXP_TAYLOR_CUTOFF {
                    axpy(1.0, &v.coords, &mut y);
                } else {
                    scale(t.cos(), &mut y);
                    axpy(t.sin() / t, &v.coords, &mut y);
                }
                self.point(y)
            }
        }
    }

    /// Geodesic angle between two unit vectors; symmetric in its arguments.
    fn sphere_angle(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
        let c = dot(x, y);
        if c <= -1.0 + ANTIPODAL_MARGIN {
            return Err(Error::Antipodal { inner: c });
        }
        let mut diff = 0.0;
        let mut sum = 0.0;
        for (a, b) in x.iter().zip(y) {
            diff += (a - b) * (a - b);
            sum += (a + b) * (a + b);
        }
        Ok((2.0 * diff.sqrt().atan2(sum.sqrt()), c.clamp(-1.0, 1.0)))
    }

    /// Inverse exponential map `Exp_x^{-1}(y)`.
    pub fn log(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<TangentVector> {
        self.check_dim(x.dim())?;
        self.check_dim(y.dim())?;
        match self {
            Manifold::Euclidean { .. } => self.tangent(x, crate::linalg::sub(y.coords(), x.coords())),
            Manifold::Sphere { .. } => {
                let (theta, c) = Self::sphere_angle(x.coords(), y.coords())?;
                if theta < SMALL_ANGLE {
                    return Ok(self.zero(x));
                }
                let mut u = y.to_vec();
                axpy(-c, x.coords(), &mut u);
                let nu = norm(&u);
                if nu == 0.0 {
                    return Ok(self.zero(x));
                }
                scale(theta / nu, &mut u);
                self.tangent(x, u)
            }
        }
    }

    /// Parallel transport of `v` from `T_x M` to `T_y M` along the minimizing geodesic.
    pub fn transport(&self, x: &ManifoldPoint, y: &ManifoldPoint, v: &TangentVector) -> Result<TangentVector> {
        self.check_base(x, v)?;
        self.check_dim(y.dim())?;
        match self {
            Manifold::Euclidean { .. } => Ok(TangentVector {
                base: y.clone(),
                coords: v.coords.clone(),
            }),
            Manifold::Sphere { .. } => {
                let w = self.log(x, y)?;
                let theta = w.norm();
                if theta < SMALL_ANGLE {
                    return self.tangent(y, v.coords.clone());
                }
                let mut e = w.coords;
                scale(1.0 / theta, &mut e);
                let a = dot(&e, &v.coords);
                let mut out = v.coords.clone();
                axpy(a * (theta.cos() - 1.0), &e, &mut out);
                axpy(-a * theta.sin(), x.coords(), &mut out);
                self.tangent(y, out)
            }
        }
    }

    /// Metric-projection retraction: `(x + v) / |x + v|` on the sphere, `x + v` otherwise.
    pub fn retract(&self, x: &ManifoldPoint, v: &TangentVector) -> Result<ManifoldPoint> {
        self.check_base(x, v)?;
        if v.coords.iter().all(|&c| c == 0.0) {
            return Ok(x.clone());
        }
        let mut y = x.to_vec();
        axpy(1.0, &v.coords, &mut y);
        if let Manifold::Sphere { .. } = self {
            let r = norm(&y);
            if r <= RETRACTION_FLOOR {
                return Err(Error::DegenerateRetraction { norm: r });
            }
        }
        self.point(y)
    }

    /// Geodesic distance `|Exp_x^{-1}(y)|`.
    pub fn dist(&self, x: &ManifoldPoint, y: &ManifoldPoint) -> Result<f64> {
        self.check_dim(x.dim())?;
        self.check_dim(y.dim())?;
        match self {
            Manifold::Euclidean { .. } => Ok(crate::linalg::dist_sq(x.coords(), y.coords()).sqrt()),
            Manifold::Sphere { .. } => {
                let (theta, _) = Self::sphere_angle(x.coords(), y.coords())?;
                Ok(if theta < SMALL_ANGLE { 0.0 } else { theta })
            }
        }
    }

    /// One update `x -> Exp_x(v)` or `x -> Retr_x(v)`.
    pub fn step(&self, x: &ManifoldPoint, v: &TangentVector, mode: MapMode) -> Result<ManifoldPoint> {
        match mode {
            MapMode::Exponential => self.exp(x, v),
            MapMode::Retraction => self.retract(x, v),
        }
    }

    /// Uniform point on the sphere; standard Gaussian point in `R^d`.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> ManifoldPoint {
        loop {
            let g: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
            if let Ok(p) = self.point(g) {
                return p;
            }
        }
    }

    /// Uniformly distributed unit vector in `T_x M`.
    pub fn random_unit_tangent<R: Rng + ?Sized>(&self, x: &ManifoldPoint, rng: &mut R) -> Result<TangentVector> {
        self.check_dim(x.dim())?;
        if let Manifold::Sphere { dim } = self {
            if *dim < 2 {
                return Err(Error::InvalidConfig("S^0 has no tangent directions".into()));
            }
        }
        loop {
            let g: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
            let v = self.tangent(x, g)?;
            let r = v.norm();
            if r > 1e-6 {
                return Ok(v.scaled(1.0 / r));
            }
        }
    }
}
