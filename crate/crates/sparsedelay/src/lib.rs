//! Sparse state-feedback synthesis for delayed LTI systems over a two-layer
//! (physical/cyber) communication architecture.
//!
//! The physical plant is controlled by distributed control nodes reached
//! through an inter-layer link (round-trip delay `tau_d`) and coupled to each
//! other through intra-layer links (delay `tau_c`). The toolkit minimizes the
//! closed-loop H2 norm while co-designing the total delay `tau_o = tau_c +
//! tau_d`, the delay ratio `c = tau_d / tau_o`, and a sparse gain matrix under
//! a bandwidth-cost budget, and can afterwards redesign the state/input
//! assignment of the control nodes themselves.
//!
//! Module map:
//!
//! - [`model`]: plant data, cyber-layer topology, delay pair, gain masks
//! - [`spectral`]: Chebyshev collocation of the delayed closed loop
//! - [`lyapunov`]: Schur-based Lyapunov/Riccati solvers, spectral abscissa
//! - [`h2`]: H2 norm of the discretized loop and its analytic gradients
//! - [`netcost`]: bandwidth/delay cost model and its quadratic perturbation forms
//! - [`admm`]: reweighted-l1 ADMM inner loop sparsifying the gain
//! - [`sdp`]: trust-region SDP relaxations co-designing (K, tau_o) and (K, c)
//! - [`codesign`]: the two-loop orchestrator and its single-loop ablations
//! - [`topo`]: spectral partitioning and control-node reassignment
//!
//! All core math is generic over the scalar type through [`Real`]; `f64`
//! aliases are exported at the crate root for everyday use.

use openblas_src as _; // link the system BLAS/LAPACK needed by the conic solver

pub mod admm;
pub mod codesign;
pub mod conic;
pub mod error;
pub mod h2;
pub mod lyapunov;
pub mod model;
pub mod netcost;
pub mod scalar;
pub mod sdp;
pub mod spectral;
pub mod topo;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default scalar for applications; the library itself is generic.
pub type Scalar = f64;
/// Dynamically sized matrix over the default scalar.
pub type Matrix = nalgebra::DMatrix<Scalar>;
/// Dynamically sized column vector over the default scalar.
pub type Vector = nalgebra::DVector<Scalar>;

/// Generic matrix alias used throughout the crate.
pub type Mat<T> = nalgebra::DMatrix<T>;
/// Generic vector alias used throughout the crate.
pub type Vec_<T> = nalgebra::DVector<T>;
