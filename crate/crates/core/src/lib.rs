//! Riemannian SPIDER: variance-reduced stochastic optimization on the sphere.
//!
//! The crate is layered bottom-up:
//!
//! * [`geometry`]: exponential/log maps, parallel transport and retraction on
//!   `S^{d-1}`, plus flat `R^d`.
//! * [`oracle`]: finite-sum objectives with IFO accounting, the PCA objective
//!   and synthetic eigengap instances.
//! * [`optim`]: the SPIDER solvers and the SGD/SVRG baselines.
//! * [`diagnostics`]: gradient, smoothness, PL and variance probes and the
//!   epochs-to-double statistic.
//!
//! ```
//! use rspider::geometry::Manifold;
//! use rspider::oracle::{generate_gap_matrix, IfoConvention, Objective, SyntheticSpec};
//! use rspider::optim::{params_finite, spider_nonconvex, RunOptions};
//!
//! let problem = generate_gap_matrix(&SyntheticSpec::new(5, 50, 0.2, 1)).unwrap();
//! let x0 = Manifold::sphere(5).point(vec![1.0; 5]).unwrap();
//! let cfg = params_finite(50, 0.1, 1.0, problem.lipschitz_hint()).unwrap();
//! let (x, trace) =
//!     spider_nonconvex(&problem, &x0, &cfg, &RunOptions::default(), IfoConvention::Paired).unwrap();
//! assert!(problem.value(&x) < problem.value(&x0));
//! assert!(trace.ifo > 0);
//! ```

pub mod diagnostics;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod optim;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use geometry::{Manifold, ManifoldPoint, MapMode, TangentVector};
pub use oracle::{Ifo, IfoConvention, Objective, PcaProblem};
