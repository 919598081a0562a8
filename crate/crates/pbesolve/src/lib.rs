//! Nonlinear Poisson-Boltzmann electrostatics for implicit-solvent models.
//!
//! The library solves the dimensionless Poisson-Boltzmann equation
//! `-div(eps grad phi) + b(x, phi) = F` on a bounded domain split into a
//! molecular region (point charges, low permittivity), an ion exclusion
//! layer, and an ionic solvent region. The point-charge measure `F` is never
//! discretized directly: the potential is decomposed as `phi = G + u`
//! (2-term) or `phi = G + u_H + u` (3-term), where `G` is the closed-form
//! Coulomb potential, `u_H` a harmonic correction, and the regular component
//! `u` solves a standard H1 problem by P1 finite elements with an
//! energy-descent Newton iteration.
//!
//! Modules follow the pipeline:
//! - [`model`]: ion species, the monotone nonlinearity `b`, its
//!   antiderivative `B`, linearization coefficients, physical constants;
//! - [`coulomb`]: the Coulomb potential `G`, its gradient, boundary data;
//! - [`geometry`]: molecular surfaces by rolling-ball morphology on distance
//!   fields, PQR ingestion, region classification;
//! - [`mesh`]: interface-fitted triangulations of concentric-disk geometries,
//!   uniform refinement with circle snapping, text I/O;
//! - [`linalg`]: CSR matrices and preconditioned conjugate gradients;
//! - [`fem`]: P1 assembly of every bilinear/linear form, Dirichlet
//!   elimination, the energy functional, error norms;
//! - [`solver`]: the u_H solve, linearized and nonlinear solves for both
//!   splittings, potential reconstruction, solvation energy;
//! - [`verify`]: manufactured solutions, convergence studies, splitting
//!   equivalence, level-set measure curves and the explicit L-infinity
//!   bound constants;
//! - [`cli`]: configuration parsing, run orchestration, VTK/CSV/JSON-lines
//!   emission.

pub mod cli;
pub mod coulomb;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod mesh;
pub mod model;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
