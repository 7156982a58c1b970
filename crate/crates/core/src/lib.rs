//! Numerical laboratory for the radially reduced damped wave equation
//!
//! ```text
//! (∂t² + 2w(r)∂t − ∂r² + V(r)) u = |u|^p / r^(p−1),   u(t,0) = 0,
//! ```
//!
//! where `w` is a positive decreasing damping coefficient equal to `1/r`
//! far out and `V = −w′ + w²` is the matched non-negative potential. That
//! relation factorizes the operator into first-order transport operators
//! along the two characteristics, which yields an exact kernel
//! representation of solutions. The crate provides:
//!
//! * [`profile`] — the capped damping profile, potential, and the critical
//!   power separating global existence from blow-up,
//! * [`kernel`] — the characteristic kernels and quadrature over the
//!   backward influence region,
//! * [`transport`] — characteristic solves, the homogeneous solution, the
//!   Duhamel operator, and the full representation formula,
//! * [`picard`] — fixed-point iteration of the nonlinear integral equation
//!   in a weighted sup-norm, with contraction and decay diagnostics,
//! * [`blowup`] — lower-bound functionals, lifespan detection and scaling
//!   fits, and the iteration lemmas behind the lifespan bounds,
//! * [`fdm`] — an independent finite-difference solver used for
//!   cross-validation and as the time-stepper for blow-up runs.

pub mod blowup;
pub mod fdm;
pub mod kernel;
pub mod picard;
pub mod profile;
pub mod quad;
pub mod transport;

pub use profile::{critical_exponent, jbracket, unreduce, DampingProfile, InitialData, ProblemParams};
pub use transport::RadialField;
