//! Surface corrections: the sequence -(log Z_N + beta N f) settles
//! geometrically at the spectral-gap rate, and its limit is the
//! surface term beta s.
//!
//! Run with: cargo run --release --example surface_correction

use wigner1d::pathspace::CollisionMode;
use wigner1d::thermo::surface_sweep;
use wigner1d::transfer::{PathEnsemble, TransferOperator};

fn main() {
    let (beta, rho) = (1.0, 1.0);
    let ens = PathEnsemble::sample(beta, rho, 64, 2000, 1).unwrap();
    let op = TransferOperator::build(&ens, 1.0 / rho, CollisionMode::CrossingCorrected).unwrap();
    let sweep = surface_sweep(&op, 1e-10, 200_000, 2, 12, Some(20)).unwrap();

    println!("beta = {beta}, rho = {rho}: f = {:.6}, gap = {:.4}", sweep.free_energy.f, sweep.gap);
    println!("{:>4} {:>12} {:>12}", "N", "log Z_N", "correction");
    for e in &sweep.report.entries {
        println!("{:>4} {:>12.6} {:>12.6}", e.n, e.log_z, e.correction);
    }
    println!(
        "\nextrapolated s = {:.5} +- {:.5}   fitted rate = {:.4} (gap {:.4})",
        sweep.report.s,
        sweep.s_se.unwrap_or(f64::NAN),
        sweep.report.rate,
        sweep.gap
    );
}
