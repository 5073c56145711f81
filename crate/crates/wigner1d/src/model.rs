//! Physical parameters, the background lattice, and the jellium
//! potential energy in its raw and Baxter-rewritten forms.
//!
//! The raw form sums the pairwise `-|x_j - x_k|` attraction with the
//! particle-background and background-background terms, both of which
//! have elementary closed forms on an interval. For a neutral system
//! with sorted positions the whole expression collapses to a decoupled
//! quadratic pinning each particle to its lattice site,
//!
//! ```text
//! U(x) = rho * sum_j (x_j - m_j)^2 + N / (12 rho),      m_j = a + lambda (j - 1/2).
//! ```
//!
//! Both forms are kept and cross-checked; the identity is exact, so it
//! makes a sharp test of the chamber bookkeeping everywhere else.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Global physical configuration: inverse temperature, background
/// density and the box. Neutrality (`rho * (b - a)` a positive integer)
/// is enforced at construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamsConfig", into = "ParamsConfig")]
pub struct ModelParams {
    beta: f64,
    rho: f64,
    a: f64,
    b: f64,
    lambda: f64,
    n_particles: usize,
}

/// JSON wire form of [`ModelParams`]: `{beta, rho, a, b}`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsConfig {
    beta: f64,
    rho: f64,
    a: f64,
    b: f64,
}

impl TryFrom<ParamsConfig> for ModelParams {
    type Error = Error;
    fn try_from(c: ParamsConfig) -> Result<Self> {
        ModelParams::new(c.beta, c.rho, c.a, c.b)
    }
}

impl From<ModelParams> for ParamsConfig {
    fn from(p: ModelParams) -> Self {
        ParamsConfig { beta: p.beta, rho: p.rho, a: p.a, b: p.b }
    }
}

impl ModelParams {
    /// Validates `beta > 0`, `rho > 0`, `a < b` and neutrality:
    /// `rho * (b - a)` must be a positive integer (up to 1e-9 rounding,
    /// then stored exactly).
    pub fn new(beta: f64, rho: f64, a: f64, b: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be > 0, got {beta}")));
        }
        if !(rho > 0.0) || !rho.is_finite() {
            return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
        }
        if !(a < b) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidParameter(format!("need a < b, got a={a}, b={b}")));
        }
        let n_exact = rho * (b - a);
        let n = n_exact.round();
        if n < 1.0 || (n_exact - n).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "rho*(b-a) = {n_exact} is not a positive integer; the system must be neutral"
            )));
        }
        Ok(ModelParams { beta, rho, a, b, lambda: 1.0 / rho, n_particles: n as usize })
    }

    /// Convenience constructor: a box `[0, n/rho]` holding `n` particles.
    pub fn neutral_box(beta: f64, rho: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("need at least one particle".into()));
        }
        Self::new(beta, rho, 0.0, n as f64 / rho)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// Mean interparticle spacing `lambda = 1/rho`.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    /// Whether both endpoints sit on the lattice `lambda * Z`; the
    /// thermodynamic limit is taken along such boxes.
    pub fn is_lambda_aligned(&self) -> bool {
        let on_grid = |x: f64| {
            let k = (x * self.rho).round();
            (x * self.rho - k).abs() <= 1e-9 * (1.0 + k.abs())
        };
        on_grid(self.a) && on_grid(self.b)
    }

    pub fn lattice(&self) -> Lattice {
        Lattice::for_params(self)
    }
}

/// The background lattice `m_j = a + lambda (j - 1/2)`, `j = 1..N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    sites: Vec<f64>,
    spacing: f64,
}

impl Lattice {
    pub fn for_params(p: &ModelParams) -> Self {
        let sites = (1..=p.n_particles)
            .map(|j| p.a + p.lambda * (j as f64 - 0.5))
            .collect();
        Lattice { sites, spacing: p.lambda }
    }

    pub fn sites(&self) -> &[f64] {
        &self.sites
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn site(&self, j: usize) -> f64 {
        self.sites[j]
    }
    pub fn len(&self) -> usize {
        self.sites.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

fn check_sorted_in_box(x: &[f64], p: &ModelParams) -> Result<()> {
    if x.len() != p.n_particles {
        return Err(Error::Domain(format!(
            "configuration has {} particles, params require {}",
            x.len(),
            p.n_particles
        )));
    }
    for w in x.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::Domain(format!("positions not sorted: {} > {}", w[0], w[1])));
        }
    }
    if let (Some(lo), Some(hi)) = (x.first(), x.last()) {
        if *lo < p.a || *hi > p.b {
            return Err(Error::Domain(format!(
                "positions [{lo}, {hi}] leave the box [{}, {}]",
                p.a, p.b
            )));
        }
    }
    Ok(())
}

/// Total potential energy from its definition: pairwise attraction,
/// particle-background cross term and the constant background
/// self-energy, the integrals evaluated in closed form
/// (`int_a^b |x_j - x| dx = ((x_j-a)^2 + (b-x_j)^2) / 2`).
pub fn potential_raw(x: &[f64], p: &ModelParams) -> Result<f64> {
    check_sorted_in_box(x, p)?;
    let mut pair = 0.0;
    for (j, &xj) in x.iter().enumerate() {
        for &xk in &x[j + 1..] {
            pair -= (xj - xk).abs();
        }
    }
    let cross: f64 = x
        .iter()
        .map(|&xj| {
            let da = xj - p.a;
            let db = p.b - xj;
            0.5 * (da * da + db * db)
        })
        .sum();
    let len = p.b - p.a;
    let self_energy = p.rho * p.rho * len * len * len / 6.0;
    Ok(pair + p.rho * cross - self_energy)
}

/// Baxter's rewriting of the same energy as a decoupled quadratic about
/// the lattice: `rho * sum_j (x_j - m_j)^2 + N/(12 rho)`. Requires
/// sorted input (sortedness is a precondition across the crate and is
/// never silently enforced).
pub fn potential_baxter(x: &[f64], p: &ModelParams) -> Result<f64> {
    if x.len() != p.n_particles {
        return Err(Error::Domain(format!(
            "configuration has {} particles, params require {}",
            x.len(),
            p.n_particles
        )));
    }
    for w in x.windows(2) {
        if !(w[0] <= w[1]) {
            return Err(Error::Domain(format!("positions not sorted: {} > {}", w[0], w[1])));
        }
    }
    let lat = p.lattice();
    let quad: f64 = x
        .iter()
        .zip(lat.sites())
        .map(|(&xj, &mj)| (xj - mj) * (xj - mj))
        .sum();
    Ok(p.rho * quad + p.n_particles as f64 / (12.0 * p.rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn sorted_random_config<R: Rng>(p: &ModelParams, rng: &mut R) -> Vec<f64> {
        let mut x: Vec<f64> =
            (0..p.n_particles()).map(|_| rng.random_range(p.a()..p.b())).collect();
        x.sort_by(|u, v| u.partial_cmp(v).unwrap());
        x
    }

    #[test]
    fn single_particle_at_site_gives_ground_energy() {
        for &(beta, rho) in &[(1.0, 1.0), (0.7, 2.5), (3.0, 0.4)] {
            let p = ModelParams::neutral_box(beta, rho, 1).unwrap();
            let m1 = p.lattice().site(0);
            let u = potential_raw(&[m1], &p).unwrap();
            assert!((u - 1.0 / (12.0 * rho)).abs() < 1e-12, "beta={beta} rho={rho}: {u}");
        }
    }

    #[test]
    fn two_particle_closed_form() {
        // N=2, rho=1, box [0,2], x=(0.5,1.5): both routes give 1/6.
        let p = ModelParams::new(1.0, 1.0, 0.0, 2.0).unwrap();
        let x = [0.5, 1.5];
        let raw = potential_raw(&x, &p).unwrap();
        let bax = potential_baxter(&x, &p).unwrap();
        assert!((raw - 1.0 / 6.0).abs() < 1e-12, "raw = {raw}");
        assert!((bax - 1.0 / 6.0).abs() < 1e-12, "baxter = {bax}");
    }

    #[test]
    fn baxter_at_lattice_is_minimum_constant() {
        let p = ModelParams::new(2.0, 2.0, 0.0, 3.0).unwrap();
        let sites = p.lattice().sites().to_vec();
        let u = potential_baxter(&sites, &p).unwrap();
        assert!((u - 6.0 / 24.0).abs() < 1e-12);

        // rho=2, box [0,1/2], x=(1/4) -> 1/24
        let p1 = ModelParams::new(1.0, 2.0, 0.0, 0.5).unwrap();
        let u1 = potential_baxter(&[0.25], &p1).unwrap();
        assert!((u1 - 1.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn baxter_identity_random_configs() {
        let mut rng = crate::rng::stream_rng(11, 0);
        for _ in 0..1000 {
            let n = rng.random_range(1..=12);
            let rho = rng.random_range(0.3..3.0);
            let p = ModelParams::neutral_box(1.0, rho, n).unwrap();
            let x = sorted_random_config(&p, &mut rng);
            let raw = potential_raw(&x, &p).unwrap();
            let bax = potential_baxter(&x, &p).unwrap();
            assert!(
                (raw - bax).abs() <= 1e-10 * (1.0 + bax.abs()),
                "n={n} rho={rho}: raw={raw} baxter={bax}"
            );
        }
    }

    #[test]
    fn baxter_lower_bound_with_equality_at_lattice() {
        let mut rng = crate::rng::stream_rng(12, 0);
        let p = ModelParams::neutral_box(1.0, 1.3, 6).unwrap();
        let floor = 6.0 / (12.0 * 1.3);
        for _ in 0..200 {
            let x = sorted_random_config(&p, &mut rng);
            assert!(potential_baxter(&x, &p).unwrap() >= floor - 1e-12);
        }
        let sites = p.lattice().sites().to_vec();
        assert!((potential_baxter(&sites, &p).unwrap() - floor).abs() < 1e-12);
    }

    #[test]
    fn lattice_shift_covariance() {
        let p = ModelParams::new(1.0, 2.0, 0.0, 2.0).unwrap();
        let lam = p.lambda();
        let shifted = ModelParams::new(1.0, 2.0, lam, 2.0 + lam).unwrap();
        for (s, t) in p.lattice().sites().iter().zip(shifted.lattice().sites()) {
            assert!((s + lam - t).abs() < 1e-12);
        }
    }

    #[test]
    fn lattice_spacing_uniform() {
        let p = ModelParams::new(1.0, 0.7, 0.0, 10.0 / 0.7).unwrap();
        let sites = p.lattice().sites().to_vec();
        for w in sites.windows(2) {
            assert!((w[1] - w[0] - p.lambda()).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_unsorted_and_out_of_box() {
        let p = ModelParams::new(1.0, 1.0, 0.0, 2.0).unwrap();
        assert!(potential_raw(&[1.5, 0.5], &p).is_err());
        assert!(potential_raw(&[-0.1, 0.5], &p).is_err());
        assert!(potential_baxter(&[0.5], &p).is_err()); // length mismatch
    }

    #[test]
    fn rejects_non_neutral() {
        assert!(ModelParams::new(1.0, 1.0, 0.0, 1.5).is_err());
        assert!(ModelParams::new(1.0, 1.0, 0.0, 0.2).is_err());
        assert!(ModelParams::new(-1.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn json_round_trip() {
        let p = ModelParams::new(1.5, 2.0, -1.0, 1.0).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
        // unknown keys rejected
        let bad = r#"{"beta":1.0,"rho":1.0,"a":0.0,"b":1.0,"zap":3}"#;
        assert!(serde_json::from_str::<ModelParams>(bad).is_err());
    }
}
