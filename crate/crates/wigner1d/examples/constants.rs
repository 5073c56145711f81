//! Closed-form constants of the weighted loop measure.
//!
//! Run with: cargo run --release --example constants

use wigner1d::gaussian::{ground_energy, normalization_c, omega, variance_sigma2};

fn main() {
    println!("{:>6} {:>6} {:>10} {:>12} {:>12} {:>10}", "beta", "rho", "omega", "c", "sigma^2", "E0");
    for (beta, rho) in [(0.5, 1.0), (1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (4.0, 1.0), (50.0, 2.0)] {
        println!(
            "{beta:>6} {rho:>6} {:>10.6} {:>12.8} {:>12.8} {:>10.6}",
            omega(rho),
            normalization_c(beta, rho),
            variance_sigma2(beta, rho),
            ground_energy(rho),
        );
    }
    // strong coupling: c approaches exp(-beta sqrt(rho/2))
    let (beta, rho) = (50.0, 2.0);
    let ratio = normalization_c(beta, rho) / (-beta * ground_energy(rho)).exp();
    println!("\nbeta = {beta}: c / exp(-beta E0) = {ratio:.12} (-> 1 at strong coupling)");
}
