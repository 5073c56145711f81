//! Exact sampling of weighted closed loops and open OU segments.
//!
//! Run with: cargo run --release --example exact_sampling

use wigner1d::gaussian::{omega, variance_sigma2, BridgeLaw};
use wigner1d::rng::stream_rng;

fn main() {
    let (beta, rho, m) = (1.0, 2.0, 64);
    let law = BridgeLaw::closed(beta, rho, m).unwrap();
    let mut rng = stream_rng(42, 0);

    let n = 100_000;
    let mut sum = 0.0;
    let mut sq = 0.0;
    for _ in 0..n {
        let path = law.sample_closed_loop(&mut rng);
        let x0 = path.slices()[0];
        sum += x0;
        sq += x0 * x0;
    }
    let mean = sum / n as f64;
    let var = sq / n as f64 - mean * mean;
    let sigma2 = variance_sigma2(beta, rho);
    println!("closed loop, {n} draws at beta={beta}, rho={rho}, M={m}:");
    println!("  slice-0 mean     {mean:+.5}   (expect 0)");
    println!("  slice-0 variance {var:.6}   (exact {sigma2:.6})");

    // open segment: exact OU transition moments
    let open = BridgeLaw::open(beta, rho, 32).unwrap();
    let (x0, tau) = (0.8, 0.7);
    let om = omega(rho);
    let mut esum = 0.0;
    let mut esq = 0.0;
    let n2 = 50_000;
    for _ in 0..n2 {
        let (p, _mass) = open.sample_open_segment(x0, tau, &mut rng).unwrap();
        let e = *p.slices().last().unwrap();
        esum += e;
        esq += e * e;
    }
    let emean = esum / n2 as f64;
    let evar = esq / n2 as f64 - emean * emean;
    println!("\nopen OU segment from {x0} over time {tau}:");
    println!("  endpoint mean {emean:.5}  (exact {:.5})", x0 * (-om * tau).exp());
    println!(
        "  endpoint var  {evar:.5}  (exact {:.5})",
        (1.0 - (-2.0 * om * tau).exp()) / (2.0 * om)
    );
}
