//! Thermodynamics and structure of the one-dimensional quantum jellium.
//!
//! The library computes partition functions, free energies, density
//! profiles and point-process statistics for charged particles on a line
//! in a neutralizing background, using two complementary routes:
//!
//! * a Nyström discretization of a Ruelle transfer operator acting on
//!   harmonically weighted Brownian loops, whose principal eigenpair
//!   yields the bulk free energy, surface corrections and the
//!   translation-symmetry-broken one-particle density;
//! * direct Metropolis sampling of finitely many non-colliding loops,
//!   which serves as an independent cross-check at desk scale.
//!
//! Desk-scale oracles (exact diagonalization for one and two particles,
//! Karlin–McGregor determinants for free non-colliding bridges) validate
//! both routes; `wigner1d validate` runs the whole cross-check suite.
//!
//! See the `examples/` directory for one runnable program per major
//! capability, and the `wigner1d` binary for batch use.

pub mod cli;
pub mod error;
pub mod gaussian;
pub mod mcmc;
pub mod model;
pub mod observables;
pub mod oracle;
pub mod pathspace;
pub mod report;
pub mod rng;
pub mod thermo;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{Lattice, ModelParams};
pub use pathspace::{ChamberSpec, CollisionMode, DiscretePath};
pub use transfer::{PathEnsemble, TransferOperator, TransferSpectrum};
