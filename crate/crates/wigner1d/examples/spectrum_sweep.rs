//! Principal eigenvalue and spectral gap of the transfer operator
//! across densities: z0 -> 1 as rho -> 0 and decreases monotonically
//! along the grid.
//!
//! Run with: cargo run --release --example spectrum_sweep

use wigner1d::pathspace::CollisionMode;
use wigner1d::transfer::{principal_eigenpair, PathEnsemble, TransferOperator};

fn main() {
    let beta = 1.0;
    let (pairs, m) = (1000, 64);
    println!("{:>8} {:>10} {:>10} {:>8} {:>6}", "rho", "z0", "z1", "gap", "iters");
    for rho in [1e-3, 0.1, 0.5, 1.0, 2.0] {
        let ens = PathEnsemble::sample(beta, rho, m, pairs, 1).unwrap();
        let op = TransferOperator::build(&ens, 1.0 / rho, CollisionMode::CrossingCorrected)
            .unwrap();
        let sp = principal_eigenpair(&op, 1e-10, 200_000).unwrap();
        println!(
            "{rho:>8} {:>10.6} {:>10.6} {:>8.4} {:>6}",
            sp.z0, sp.z1_abs, sp.gap, sp.iterations
        );
    }
}
