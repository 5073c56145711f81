//! Partition function against exact diagonalization for one and two
//! particles: the transfer route (normalization^N, ground term, chamber
//! amplitude) must reproduce the trace of exp(-beta H_N).
//!
//! Run with: cargo run --release --example partition_oracle

use wigner1d::model::ModelParams;
use wigner1d::oracle::diagonalize_small;
use wigner1d::pathspace::CollisionMode;
use wigner1d::thermo::partition_function_log;
use wigner1d::transfer::chamber_amplitude_sequential;

fn main() {
    let (beta, rho) = (1.0, 1.0);
    for n in [1usize, 2] {
        let p = ModelParams::neutral_box(beta, rho, n).unwrap();
        let (amp, se) =
            chamber_amplitude_sequential(&p, 64, CollisionMode::CrossingCorrected, 200_000, 3)
                .unwrap();
        let log_z = partition_function_log(&p, amp).unwrap();
        let oracle = diagonalize_small(&p, if n == 1 { 200 } else { 40 }).unwrap();
        println!("N = {n}:");
        println!("  chamber amplitude = {amp:.5e} (+- {:.1}%)", 100.0 * se / amp);
        println!("  transfer log Z    = {log_z:.5}");
        println!(
            "  oracle   log Z    = {:.5} (+- {:.1e}, grids {}/{})",
            oracle.log_z, oracle.extrapolation_error, oracle.grid_coarse, oracle.grid_fine
        );
        println!(
            "  relative deviation: {:.3}%\n",
            100.0 * (log_z - oracle.log_z).abs() / oracle.log_z.abs()
        );
    }
}
