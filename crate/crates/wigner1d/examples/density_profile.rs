//! The broken-symmetry one-particle density over one lattice period,
//! by both routes: the spectral limit formula and a finite-N sampler.
//!
//! Run with: cargo run --release --example density_profile

use wigner1d::mcmc::{init_state, sample_configurations, McmcConfig};
use wigner1d::model::ModelParams;
use wigner1d::observables::{
    bulk_margin_cells, limit_marginal_density, mcmc_folded_density, one_particle_density,
};
use wigner1d::pathspace::CollisionMode;
use wigner1d::transfer::{principal_eigenpair, PathEnsemble, TransferOperator};

fn main() {
    let (beta, rho, m) = (2.0, 1.0, 64);

    // route 1: spectral limit formula
    let ens = PathEnsemble::sample(beta, rho, m, 2000, 5).unwrap();
    let op = TransferOperator::build(&ens, 1.0 / rho, CollisionMode::CrossingCorrected).unwrap();
    let sp = principal_eigenpair(&op, 1e-10, 200_000).unwrap();
    let marginal = limit_marginal_density(&sp, &ens, 16).unwrap();
    let limit = one_particle_density(&marginal, 64).unwrap();

    // route 2: finite-N Metropolis stream, bulk cells folded
    let pn = ModelParams::neutral_box(beta, rho, 8).unwrap();
    let cfg = McmcConfig { pre_sweeps: 500, ..Default::default() };
    let mut state = init_state(&pn, m, 9, cfg).unwrap();
    let (configs, diag) = sample_configurations(&mut state, 10_000, 2).unwrap();
    let margin = bulk_margin_cells(sp.gap).min(3);
    let finite = mcmc_folded_density(&configs, &pn, margin, 16).unwrap();

    println!(
        "beta = {beta}, rho = {rho}: gap = {:.3}, margin = {margin} cells, tau = {:.1} sweeps",
        sp.gap, diag.autocorrelation_time
    );
    println!(
        "crystallinity: limit route {:.3}, finite-N route {:.3}\n",
        limit.crystallinity, finite.crystallinity
    );
    println!("{:>8} {:>12} {:>12}", "x", "limit", "finite-N");
    for i in 0..limit.grid.len() {
        println!(
            "{:>8.4} {:>12.5} {:>12.5}",
            limit.grid[i], limit.values[i], finite.values[i]
        );
    }
}
