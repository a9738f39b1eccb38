//! Numerical toolkit for translationally invariant quadratic bosonic lattice
//! Hamiltonians (hopping + pairing, finite range, `d` bosons per unit cell).
//!
//! The Heisenberg dynamics of such a model is generated per crystal momentum by
//! a `2d x 2d` Bloch dynamical matrix that is pseudo-Hermitian with respect to
//! the Nambu metric `tau3 = diag(1_d, -1_d)`. This crate provides:
//!
//! - construction of models from coupling maps, quadrature-basis conversion,
//!   and four built-in one-band chains ([`model`]);
//! - signature-aware diagonalization, dynamical/thermodynamic stability
//!   verdicts, the direct/indirect Krein gaps, and classification of spectral
//!   singularities into exceptional points and Krein collisions ([`spectral`]);
//! - quasiparticle-vacuum covariance matrices in momentum and real space,
//!   composite correlators, correlation-length and dynamic-exponent fits, and
//!   the vacuum energy density ([`correlations`]);
//! - finite periodic-chain covariance matrices with entanglement entropy,
//!   logarithmic negativity, and Gaussian fidelity ([`gaussian`]);
//! - an independent real-space ring validator that rebuilds the vacuum
//!   covariance from a dense `2dN x 2dN` eigenproblem ([`ring`]);
//! - a pseudo-Hermitian quantum geometric/metric tensor over model parameters
//!   by gauge-aligned finite differences ([`geometry`]).

pub mod correlations;
pub mod error;
pub mod gaussian;
pub mod geometry;
pub mod grid;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod ring;
pub mod sample;
pub mod spectral;

pub use error::{QbhError, Result};
