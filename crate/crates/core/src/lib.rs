//! Sampling and generative diffusion modelling on Riemannian manifolds with
//! inequality constraints.
//!
//! The crate centres on the *Metropolis* discretisation of reflected Brownian
//! motion: take a geodesic Gaussian step and keep it only if it lands inside
//! `M = { x : f_i(x) < 0 }`. It also provides the rejection and full-reflection
//! discretisations for comparison, forward/reverse diffusion processes built
//! on them, a small sine-activated score network trained with implicit score
//! matching, and the oracles used to check all of the above.
//!
//! ```
//! use mrbm::{constraints::ConstraintSet, geometry::Manifold, samplers};
//!
//! let m = Manifold::Euclidean { dim: 2 };
//! let c = ConstraintSet::hypercube(2, -1.0, 1.0);
//! let cfg = samplers::StepConfig::new(1e-2);
//! let mut rng = mrbm::rng::stream(0, "doc", 0);
//! let x = mrbm::geometry::Point::new(vec![0.0, 0.0]);
//! let (y, _accepted) = samplers::metropolis_step(&m, &c, &x, &cfg, 0.0, &mut rng).unwrap();
//! assert!(c.contains(&y));
//! ```

pub mod constraints;
pub mod datasets;
pub mod diagnostics;
pub mod diffusion;
mod error;
pub mod geometry;
mod par;
pub mod rng;
pub mod samplers;
pub mod scorenet;

pub use error::{Error, Result};
