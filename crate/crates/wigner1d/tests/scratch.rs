use std::time::Instant;
use wigner1d::mcmc::{init_state, sample_configurations, McmcConfig};
use wigner1d::model::ModelParams;
use wigner1d::observables::*;

#[test]
#[ignore]
fn scratch_a9_m64() {
    let (beta, rho) = (2.0f64, 1.0f64);
    let pn = ModelParams::neutral_box(beta, rho, 16).unwrap();
    let cfg = McmcConfig { pre_sweeps: 3000, ..Default::default() };
    let mut st = init_state(&pn, 64, 19, cfg).unwrap();
    let t0 = Instant::now();
    let (configs, diag) = sample_configurations(&mut st, 1_000_000, 1).unwrap();
    println!(
        "N=16 M=64: acc=({:.2},{:.2},{:.2}) alphas=({:.2},{:.3},{:.3}) tau={:.1} [{:?}]",
        diag.slice_acceptance, diag.shift_acceptance, diag.collective_acceptance,
        diag.slice_step, diag.shift_alpha, diag.collective_alpha,
        diag.autocorrelation_time, t0.elapsed()
    );
    let sites = pn.lattice().sites().to_vec();
    // average the tail over placements
    let mut tails = vec![(0.0f64, 0.0f64); 3];
    let mut placements = 0.0;
    for j in [3usize, 4, 5, 6, 7, 8, 9] {
        let rep = particle_count_tails(&configs, &pn, (sites[j], sites[j + 4].min(sites[12])), 3, 3).unwrap();
        if j == 5 {
            println!("  single placement j=5: P = {:?} alpha={:.3} R2={:.4}", rep.tails, rep.alpha, rep.r_squared);
        }
        for (k, &(_, p, se)) in rep.tails.iter().enumerate() {
            tails[k].0 += p;
            tails[k].1 += se * se;
        }
        placements += 1.0;
    }
    for (k, t) in tails.iter().enumerate() {
        println!("  avg P(>={}) = {:.4e} (naive se {:.1e}, events ~{:.0})", k + 1, t.0 / placements, t.1.sqrt() / placements, t.0 / placements * 1.0e6 * placements);
    }
}
