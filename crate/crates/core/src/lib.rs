//! Numerical stochastic calculus in the plane.
//!
//! The state variable lives on a rectangle `[0,T] x [0,X]` carrying a Brownian
//! sheet `B(t,x)` (the centered Gaussian field with covariance
//! `min(s,t) * min(a,x)`). The crate provides, bottom up:
//!
//! - [`grid`]: tensor grids, scalar fields on them, and seeded sheet sampling
//!   with counter-based per-path substreams.
//! - [`calculus`]: the two plane Ito integrals (single increments, and pairs of
//!   increments over incomparable points), rectangle-rule Lebesgue quadrature,
//!   the star product coupling a field to the region above-left of a point,
//!   and the second-moment identity built from them.
//! - [`series`]: the entire series `f(y) = sum y^n / (n!)^2`, its alternating
//!   variant, the first zero `r0`, Hermite polynomials and functions, and the
//!   sign probe for solutions of the multiplicative sheet equation.
//! - [`forward`]: the adapted Euler scheme for hyperbolic SPDEs
//!   `Y = y0 + int int alpha + int int beta dB`, the deterministic mean
//!   (Volterra) solver, Monte Carlo functionals, and the negativity experiment.
//! - [`adjoint`]: the Hamiltonian with its star term, the auxiliary-field
//!   fixed point, the deterministic backward adjoint solver, and the
//!   contraction-radius check for backward equations.
//! - [`control`]: the three worked control problems (harvesting with
//!   logarithmic utility, linear-quadratic regulation, bilinear learning-rate
//!   scheduling) and the perturbation-dominance certificate.
//! - [`acceptance`]: the self-test suite the CLI and integration tests share.
//!
//! Conventions used throughout: quadrature and stochastic sums anchor at a
//! cell's lower-left corner (the adapted choice); backward-region quadrature
//! anchors at upper-right corners so forward and backward rules are adjoint on
//! the grid; all Monte Carlo reductions run in a fixed path order regardless
//! of thread count, so a given master seed reproduces results byte for byte.

pub mod acceptance;
pub mod adjoint;
pub mod calculus;
pub mod control;
pub mod error;
pub mod forward;
pub mod grid;
pub mod report;
pub mod series;

pub use error::Error;

/// A point `(t, x)` of the parameter rectangle.
pub type Point = (f64, f64);

/// Result alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;
