//! Exact Gaussian-process regression for 3D spatial fields with an
//! anisotropic covariance metric parameterised by three principal ranges and
//! an SO(3) orientation in axis–angle coordinates.
//!
//! The crate is organised bottom-up:
//!
//! * [`so3`]: skew map, Rodrigues exponential, geodesic angle.
//! * [`metric`]: SPD metric construction for the ARD, rotational and
//!   Cholesky-SPD parameterisations, plus eigen summaries.
//! * [`kernel`]: radial profiles and Gram assembly with adaptive jitter.
//! * [`gp`]: log marginal likelihood and closed-form prediction.
//! * [`mcmc`]: random-walk Metropolis–Hastings over metric parameters.
//! * [`data`]: synthetic generation, CSV I/O, plane hold-out splits.
//! * [`eval`]: predictive metrics.
//! * [`experiment`]: the fit → predict → evaluate pipeline shared by the CLI
//!   and the acceptance suite.

pub mod data;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod gp;
pub mod kernel;
pub mod mcmc;
pub mod metric;
pub mod so3;

pub use error::{Error, Result};

/// A point in 3D input space.
pub type Vec3 = nalgebra::Vector3<f64>;
/// A plain 3×3 matrix.
pub type Mat3 = nalgebra::Matrix3<f64>;

/// Name and version of the pseudo-random generator behind every seeded
/// operation. Recorded in all provenance outputs.
pub const RNG_NAME: &str = "ChaCha20Rng (rand_chacha 0.9)";
