//! Bulk free energy per particle, split into its three exact terms.
//!
//! Run with: cargo run --release --example free_energy

use wigner1d::pathspace::CollisionMode;
use wigner1d::thermo::free_energy;
use wigner1d::transfer::{principal_eigenpair_opts, PathEnsemble, TransferOperator};

fn main() {
    let (beta, rho) = (1.0, 1.0);
    let ens = PathEnsemble::sample(beta, rho, 64, 2000, 1).unwrap();
    let op = TransferOperator::build(&ens, 1.0 / rho, CollisionMode::CrossingCorrected).unwrap();
    let sp = principal_eigenpair_opts(&op, 1e-10, 200_000, true).unwrap();
    let rep = free_energy(beta, rho, &sp).unwrap();
    println!("beta = {beta}, rho = {rho}  (S = {}, M = {}, seed = {})", sp.s, sp.m, sp.seed);
    println!("  z0          = {:.6} +- {:.6}", sp.z0, sp.z0_se.unwrap_or(0.0));
    println!("  gap         = {:.4}", sp.gap);
    println!("  ground      = {:+.6}", rep.ground);
    println!("  oscillator  = {:+.6}", rep.oscillator);
    println!("  spectral    = {:+.6}", rep.spectral);
    println!("  f           = {:+.6} +- {:.6}", rep.f, rep.f_error);
}
