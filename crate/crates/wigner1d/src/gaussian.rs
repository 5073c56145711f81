//! Exact analytics of the harmonically weighted bridge measure: the
//! Mehler kernel, its normalization `c(beta, rho)`, the stationary
//! variance `sigma(beta, rho)^2`, and exact samplers for closed loops,
//! open Ornstein-Uhlenbeck segments and pinned bridges.
//!
//! Everything here derives from the kernel of `exp(-t A)` with
//! `A = -d^2/dx^2 / 2 + rho x^2`, written with `omega = sqrt(2 rho)`:
//!
//! ```text
//! k_t(x,y) = (2 rho)^(1/4) / sqrt(2 pi sinh(omega t))
//!            * exp( -omega (x^2+y^2) / (2 tanh(omega t)) + omega x y / sinh(omega t) )
//! ```
//!
//! The closed-loop law with `M` slices has joint density proportional
//! to the cyclic product of `k_dt` factors; its slice marginals are the
//! exact marginals of the continuous loop, so only path functionals
//! (not slice values) carry discretization error. Hyperbolic functions
//! are evaluated through `exp(-..)`/`expm1` so large `beta * omega`
//! neither overflows nor loses the leading digits.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::pathspace::DiscretePath;

/// Oscillator frequency `omega = sqrt(2 rho)` of the background weight.
pub fn omega(rho: f64) -> f64 {
    (2.0 * rho).sqrt()
}

/// Ground-state energy `omega / 2 = sqrt(rho / 2)` of the weight Hamiltonian.
pub fn ground_energy(rho: f64) -> f64 {
    (rho / 2.0).sqrt()
}

/// `log` of the normalized ground state `phi_0(x) = (omega/pi)^(1/4) exp(-omega x^2/2)`.
pub fn log_phi0(x: f64, rho: f64) -> f64 {
    let om = omega(rho);
    0.25 * (om / std::f64::consts::PI).ln() - 0.5 * om * x * x
}

/// Coefficients of the Mehler kernel exponent at time step `t`:
/// `k_t(x,y) ~ exp(-(a (x^2+y^2) - 2 b x y)/2)` with
/// `a = omega/tanh(omega t)`, `b = omega/sinh(omega t)`.
#[derive(Debug, Clone, Copy)]
pub struct MehlerCoeffs {
    pub a: f64,
    pub b: f64,
    /// `log` of the Gaussian prefactor `(2 rho)^(1/4) / sqrt(2 pi sinh(omega t))`.
    pub log_prefactor: f64,
}

impl MehlerCoeffs {
    pub fn new(t: f64, rho: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("Mehler kernel needs t > 0, got {t}")));
        }
        let om = omega(rho);
        let e = (-2.0 * om * t).exp();
        let one_minus_e = -(-2.0 * om * t).exp_m1();
        let a = om * (1.0 + e) / one_minus_e;
        let b = 2.0 * om * (-om * t).exp() / one_minus_e;
        // log sinh(omega t) = omega t - log 2 + log(1 - e)
        let log_sinh = om * t - std::f64::consts::LN_2 + one_minus_e.ln();
        let log_prefactor = 0.25 * (2.0 * rho).ln()
            - 0.5 * ((2.0 * std::f64::consts::PI).ln() + log_sinh);
        Ok(MehlerCoeffs { a, b, log_prefactor })
    }

    pub fn log_kernel(&self, x: f64, y: f64) -> f64 {
        self.log_prefactor - 0.5 * self.a * (x * x + y * y) + self.b * x * y
    }
}

/// The harmonic-oscillator heat kernel `k_t(x, y)`.
pub fn mehler(t: f64, x: f64, y: f64, rho: f64) -> Result<f64> {
    Ok(MehlerCoeffs::new(t, rho)?.log_kernel(x, y).exp())
}

/// Normalization `c(beta, rho) = 1 / (2 sinh(beta sqrt(rho/2)))`,
/// evaluated as `exp(-x) / (1 - exp(-2x))` so it stays finite at
/// strong coupling. Equals the trace `int k_beta(x, x) dx`.
pub fn normalization_c(beta: f64, rho: f64) -> f64 {
    let x = beta * ground_energy(rho);
    (-x).exp() / -(-2.0 * x).exp_m1()
}

/// Same constant through the literal `1/(2 sinh)` expression; kept for
/// the equality-of-forms check.
pub fn normalization_c_sinh_form(beta: f64, rho: f64) -> f64 {
    1.0 / (2.0 * (beta * ground_energy(rho)).sinh())
}

/// Stationary variance of the loop: `sigma^2 = [2 sqrt(2 rho) tanh(beta sqrt(rho/2))]^{-1}`.
pub fn variance_sigma2(beta: f64, rho: f64) -> f64 {
    let om = omega(rho);
    let e = (-beta * om).exp();
    // tanh(beta omega / 2) = (1 - e) / (1 + e)
    (1.0 + e) / (2.0 * om * -(-beta * om).exp_m1())
}

/// Law of a discretized loop or segment under the harmonic weight.
///
/// Closed laws describe loops with `M` slices at `t_i = i beta / M`
/// (slice `M` identified with slice 0); open laws describe segments
/// with `M + 1` slices including both endpoints. The conditional
/// coefficients needed by the samplers are precomputed once.
#[derive(Debug, Clone)]
pub struct BridgeLaw {
    beta: f64,
    rho: f64,
    m: usize,
    dt: f64,
    cyclic: bool,
    sigma2: f64,
    step: MehlerCoeffs,
    /// For interior slice `i` (1-based), the conditional on
    /// (previous slice, final slice) has precision `a(dt) + a(r_i)`
    /// with `r_i` the remaining time; we store the mean weights and
    /// the standard deviation.
    cond: Vec<BridgeCond>,
}

/// Conditional law of an interior slice given the previous slice and
/// the final (or, for loops, initial) value: mean
/// `w_prev * prev + w_end * end`, standard deviation `sd`.
#[derive(Debug, Clone, Copy)]
pub struct BridgeCond {
    pub w_prev: f64,
    pub w_end: f64,
    pub sd: f64,
}

impl BridgeLaw {
    /// Law of a closed loop with `m` slices.
    pub fn closed(beta: f64, rho: f64, m: usize) -> Result<Self> {
        Self::build(beta, rho, m, true)
    }

    /// Law of an open segment of duration `beta` with `m` steps
    /// (`m + 1` stored slice values).
    pub fn open(beta: f64, rho: f64, m: usize) -> Result<Self> {
        Self::build(beta, rho, m, false)
    }

    fn build(beta: f64, rho: f64, m: usize, cyclic: bool) -> Result<Self> {
        if !(beta > 0.0) || !(rho > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bridge law needs beta > 0 and rho > 0, got beta={beta}, rho={rho}"
            )));
        }
        if m < 2 {
            return Err(Error::Domain(format!("need at least 2 slices, got {m}")));
        }
        let dt = beta / m as f64;
        let step = MehlerCoeffs::new(dt, rho)?;
        let mut cond = Vec::with_capacity(m.saturating_sub(1));
        for i in 1..m {
            let remaining = (m - i) as f64 * dt;
            let tail = MehlerCoeffs::new(remaining, rho)?;
            let precision = step.a + tail.a;
            cond.push(BridgeCond {
                w_prev: step.b / precision,
                w_end: tail.b / precision,
                sd: (1.0 / precision).sqrt(),
            });
        }
        Ok(BridgeLaw {
            beta,
            rho,
            m,
            dt,
            cyclic,
            sigma2: variance_sigma2(beta, rho),
            step,
            cond,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn slices(&self) -> usize {
        self.m
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn is_cyclic(&self) -> bool {
        self.cyclic
    }
    /// Coefficients of one `dt`-step of the kernel.
    pub fn step_coeffs(&self) -> MehlerCoeffs {
        self.step
    }
    /// Stationary variance of a slice (closed loops).
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }
    /// Interior-slice conditionals in sampling order (slices `1..M-1`
    /// for closed loops, `1..M` for open ones).
    pub fn conditionals(&self) -> &[BridgeCond] {
        &self.cond
    }

    /// The cyclic tridiagonal precision matrix of the slice vector
    /// (closed laws only): diagonal `2 a(dt)`, off-diagonal `-b(dt)`.
    /// The samplers factorize exactly this Gaussian; the matrix is
    /// exposed so tests can verify them against a direct solve.
    pub fn precision_matrix(&self) -> nalgebra::DMatrix<f64> {
        assert!(self.cyclic, "precision matrix is defined for closed loops");
        let m = self.m;
        let mut q = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            q[(i, i)] = 2.0 * self.step.a;
            let j = (i + 1) % m;
            q[(i, j)] -= self.step.b;
            q[(j, i)] -= self.step.b;
        }
        q
    }

    /// Exact draw of a closed loop: slice 0 from the stationary
    /// marginal `N(0, sigma^2)`, interior slices from the pinned-bridge
    /// conditionals. This is the Markov factorization of the cyclic
    /// Gaussian; a fixed number (`M`) of normals is consumed per draw.
    pub fn sample_closed_loop<R: Rng + ?Sized>(&self, rng: &mut R) -> DiscretePath {
        assert!(self.cyclic, "sample_closed_loop needs a cyclic law");
        let x0 = self.sigma2.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut slices = Vec::with_capacity(self.m);
        slices.push(x0);
        for c in &self.cond {
            let prev = *slices.last().unwrap();
            let mean = c.w_prev * prev + c.w_end * x0;
            slices.push(mean + c.sd * rng.sample::<f64, _>(StandardNormal));
        }
        DiscretePath::closed_unchecked(slices, self.dt)
    }

    /// Pinned bridge from `x_start` to `x_end` over the law's duration,
    /// sampled through the same conditionals (the harmonic weight and
    /// the Ornstein-Uhlenbeck process share their bridges).
    pub fn sample_pinned_bridge<R: Rng + ?Sized>(
        &self,
        x_start: f64,
        x_end: f64,
        rng: &mut R,
    ) -> DiscretePath {
        assert!(!self.cyclic, "sample_pinned_bridge needs an open law");
        let mut slices = Vec::with_capacity(self.m + 1);
        slices.push(x_start);
        for c in &self.cond {
            let prev = *slices.last().unwrap();
            let mean = c.w_prev * prev + c.w_end * x_end;
            slices.push(mean + c.sd * rng.sample::<f64, _>(StandardNormal));
        }
        slices.push(x_end);
        DiscretePath::open_unchecked(slices, self.dt)
    }

    /// Open segment with a free right endpoint, evolved by the exact
    /// Ornstein-Uhlenbeck transition `dX = -omega X dt + dB`. Returns
    /// the path together with the accumulated mass of the weighted
    /// bridge measure relative to the OU proposal,
    /// `prod k_dt / prod p_dt = exp(-E0 tau) phi0(start) / phi0(end)`,
    /// which downstream estimators carry as an importance weight.
    pub fn sample_open_segment<R: Rng + ?Sized>(
        &self,
        x_start: f64,
        duration: f64,
        rng: &mut R,
    ) -> Result<(DiscretePath, f64)> {
        if self.cyclic {
            return Err(Error::Domain("open-segment sampling needs a non-cyclic law".into()));
        }
        if duration < 0.0 {
            return Err(Error::Domain(format!("negative duration {duration}")));
        }
        if duration == 0.0 {
            let slices = vec![x_start; self.m + 1];
            return Ok((DiscretePath::open_unchecked(slices, 0.0), 1.0));
        }
        let om = omega(self.rho);
        let dt = duration / self.m as f64;
        let decay = (-om * dt).exp();
        let sd = ((1.0 - decay * decay) / (2.0 * om)).sqrt();
        let mut slices = Vec::with_capacity(self.m + 1);
        slices.push(x_start);
        for _ in 0..self.m {
            let prev = *slices.last().unwrap();
            slices.push(prev * decay + sd * rng.sample::<f64, _>(StandardNormal));
        }
        let x_end = *slices.last().unwrap();
        let log_w = -ground_energy(self.rho) * duration + log_phi0(x_start, self.rho)
            - log_phi0(x_end, self.rho);
        Ok((DiscretePath::open_unchecked(slices, dt), log_w.exp()))
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    std::f64::consts::SQRT_2 * statrs::function::erf::erf_inv(2.0 * p - 1.0)
}

/// Draw from `N(mu, sd^2)` conditioned on `(lo, hi)` by inverse-CDF,
/// returning the draw together with the truncation mass
/// `Phi((hi-mu)/sd) - Phi((lo-mu)/sd)`. One uniform is consumed per
/// call. A numerically empty window returns `(lo, 0)`.
pub fn sample_truncated_normal<R: Rng + ?Sized>(
    mu: f64,
    sd: f64,
    lo: f64,
    hi: f64,
    rng: &mut R,
) -> (f64, f64) {
    let p_lo = normal_cdf((lo - mu) / sd);
    let p_hi = normal_cdf((hi - mu) / sd);
    let mass = p_hi - p_lo;
    if !(mass > 0.0) {
        return (lo, 0.0);
    }
    let u: f64 = rng.random();
    let x = mu + sd * normal_quantile(p_lo + u * mass);
    (x.clamp(lo, hi), mass)
}

/// Free Brownian bridge from `x` to `y` over `[0, duration]` with `m`
/// steps (`m + 1` slices), for the non-interacting cross-checks.
pub fn sample_free_bridge<R: Rng + ?Sized>(
    x: f64,
    y: f64,
    duration: f64,
    m: usize,
    rng: &mut R,
) -> DiscretePath {
    assert!(m >= 1 && duration > 0.0);
    let dt = duration / m as f64;
    let mut slices = Vec::with_capacity(m + 1);
    slices.push(x);
    for i in 1..m {
        let prev = slices[i - 1];
        let remaining = (m - i + 1) as f64; // steps from i-1 to the end
        let mean = prev + (y - prev) / remaining;
        let var = dt * (remaining - 1.0) / remaining;
        slices.push(mean + var.sqrt() * rng.sample::<f64, _>(StandardNormal));
    }
    slices.push(y);
    DiscretePath::open_unchecked(slices, dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::gauss_legendre;
    use crate::rng::stream_rng;

    // Frozen from the closed forms evaluated at 30 significant digits.
    const C_1_2: f64 = 0.425459064119660772566921381644;
    const SIGMA2_1_2: f64 = 0.328258821374832825909040311733;

    #[test]
    fn normalization_matches_high_precision_value() {
        assert!((normalization_c(1.0, 2.0) - C_1_2).abs() < 1e-14);
    }

    #[test]
    fn both_printed_forms_agree() {
        let mut rng = stream_rng(3, 0);
        for _ in 0..20 {
            let beta: f64 = rng.random_range(0.05..20.0);
            let rho: f64 = rng.random_range(0.05..10.0);
            let a = normalization_c(beta, rho);
            let b = normalization_c_sinh_form(beta, rho);
            assert!((a - b).abs() <= 1e-12 * a.abs(), "beta={beta} rho={rho}");
        }
    }

    #[test]
    fn strong_coupling_asymptotics() {
        // beta -> inf: c -> exp(-beta sqrt(rho/2)).
        let beta = 50.0;
        let rho = 2.0;
        let ratio = normalization_c(beta, rho) / (-beta * ground_energy(rho)).exp();
        assert!((ratio - 1.0).abs() < 1e-6);
        // and sigma^2 -> 1 / (2 sqrt(2 rho))
        let s = variance_sigma2(beta, rho);
        assert!((s - 1.0 / (2.0 * omega(rho))).abs() < 1e-12);
    }

    #[test]
    fn variance_matches_high_precision_value() {
        assert!((variance_sigma2(1.0, 2.0) - SIGMA2_1_2).abs() < 1e-14);
    }

    #[test]
    fn mehler_symmetry_and_domain() {
        let k1 = mehler(0.4, 0.3, -0.7, 1.5).unwrap();
        let k2 = mehler(0.4, -0.7, 0.3, 1.5).unwrap();
        assert_eq!(k1, k2);
        assert!(mehler(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(mehler(-1.0, 0.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn mehler_semigroup_by_quadrature() {
        let (s, t, x, y, rho) = (0.3, 0.7, 0.2, -0.5, 1.0);
        let lhs = gauss_legendre(|z| mehler(s, x, z, rho).unwrap() * mehler(t, z, y, rho).unwrap(), -12.0, 12.0, 400);
        let rhs = mehler(s + t, x, y, rho).unwrap();
        assert!((lhs - rhs).abs() < 1e-8, "lhs={lhs} rhs={rhs}");
    }

    #[test]
    fn trace_identity() {
        let (beta, rho) = (1.0, 2.0);
        let tr = gauss_legendre(|z| mehler(beta, z, z, rho).unwrap(), -12.0, 12.0, 400);
        assert!((tr - normalization_c(beta, rho)).abs() < 1e-10, "trace = {tr}");
    }

    #[test]
    fn chapman_kolmogorov_random_triples() {
        let mut rng = stream_rng(4, 0);
        for _ in 0..50 {
            let s: f64 = rng.random_range(0.1..1.0);
            let t: f64 = rng.random_range(0.1..1.0);
            let x: f64 = rng.random_range(-1.5..1.5);
            let y: f64 = rng.random_range(-1.5..1.5);
            let rho: f64 = rng.random_range(0.3..3.0);
            let lhs = gauss_legendre(
                |z| mehler(s, x, z, rho).unwrap() * mehler(t, z, y, rho).unwrap(),
                -14.0,
                14.0,
                600,
            );
            let rhs = mehler(s + t, x, y, rho).unwrap();
            assert!((lhs - rhs).abs() < 1e-8, "s={s} t={t} x={x} y={y} rho={rho}");
        }
    }

    #[test]
    fn closed_loop_sampler_is_deterministic() {
        let law = BridgeLaw::closed(1.3, 0.8, 32).unwrap();
        let a = law.sample_closed_loop(&mut stream_rng(9, 1));
        let b = law.sample_closed_loop(&mut stream_rng(9, 1));
        assert_eq!(a.slices(), b.slices());
    }

    #[test]
    fn closed_loop_rejects_tiny_m() {
        assert!(BridgeLaw::closed(1.0, 1.0, 1).is_err());
    }

    #[test]
    fn closed_loop_marginal_variance_and_symmetry() {
        let (beta, rho, m) = (1.0, 2.0, 16);
        let law = BridgeLaw::closed(beta, rho, m).unwrap();
        let mut rng = stream_rng(10, 0);
        let n = 40_000;
        let mut sums = vec![0.0; m];
        let mut sqs = vec![0.0; m];
        let mut odd = 0.0;
        for _ in 0..n {
            let p = law.sample_closed_loop(&mut rng);
            for (i, &v) in p.slices().iter().enumerate() {
                sums[i] += v;
                sqs[i] += v * v;
            }
            odd += p.slices()[0].powi(3);
        }
        let sigma2 = variance_sigma2(beta, rho);
        // var(sample variance) ~ 2 sigma^4 / n
        let se = (2.0 * sigma2 * sigma2 / n as f64).sqrt();
        for i in 0..m {
            let mean = sums[i] / n as f64;
            let var = sqs[i] / n as f64 - mean * mean;
            assert!((var - sigma2).abs() < 4.0 * se, "slice {i}: var={var} vs {sigma2}");
        }
        // odd moments vanish by reflection symmetry
        let m3 = odd / n as f64;
        let se3 = (15.0 * sigma2.powi(3) / n as f64).sqrt();
        assert!(m3.abs() < 4.0 * se3, "third moment {m3}");
    }

    #[test]
    fn closed_loop_covariance_is_cyclically_stationary() {
        let (beta, rho, m) = (0.8, 1.5, 8);
        let law = BridgeLaw::closed(beta, rho, m).unwrap();
        let mut rng = stream_rng(11, 0);
        let n = 60_000;
        let mut cov = vec![vec![0.0; m]; m];
        for _ in 0..n {
            let p = law.sample_closed_loop(&mut rng);
            let s = p.slices();
            for i in 0..m {
                for j in 0..m {
                    cov[i][j] += s[i] * s[j];
                }
            }
        }
        for row in cov.iter_mut() {
            for v in row.iter_mut() {
                *v /= n as f64;
            }
        }
        // compare Cov(0, k) with Cov(i, i+k) for a few pairs
        for k in 0..m {
            for i in 0..m {
                let j = (i + k) % m;
                let d = (cov[0][k] - cov[i][j]).abs();
                assert!(d < 0.02, "lag {k}: {} vs {}", cov[0][k], cov[i][j]);
            }
        }
    }

    #[test]
    fn sampler_matches_precision_matrix() {
        // (Q^{-1})_{00} must equal sigma^2 exactly; a couple of
        // off-diagonal covariances must match the sampled ones.
        let (beta, rho, m) = (1.1, 0.9, 12);
        let law = BridgeLaw::closed(beta, rho, m).unwrap();
        let q = law.precision_matrix();
        let cov = q.try_inverse().expect("precision is positive definite");
        assert!((cov[(0, 0)] - variance_sigma2(beta, rho)).abs() < 1e-10);

        let mut rng = stream_rng(12, 0);
        let n = 60_000;
        let mut c03 = 0.0;
        let mut c05 = 0.0;
        for _ in 0..n {
            let p = law.sample_closed_loop(&mut rng);
            c03 += p.slices()[0] * p.slices()[3];
            c05 += p.slices()[0] * p.slices()[5];
        }
        c03 /= n as f64;
        c05 /= n as f64;
        assert!((c03 - cov[(0, 3)]).abs() < 0.02, "{c03} vs {}", cov[(0, 3)]);
        assert!((c05 - cov[(0, 5)]).abs() < 0.02, "{c05} vs {}", cov[(0, 5)]);
    }

    #[test]
    fn open_segment_zero_duration_is_constant() {
        let law = BridgeLaw::open(1.0, 1.0, 8).unwrap();
        let (p, w) = law.sample_open_segment(0.4, 0.0, &mut stream_rng(13, 0)).unwrap();
        assert!(p.slices().iter().all(|&v| v == 0.4));
        assert_eq!(w, 1.0);
    }

    #[test]
    fn open_segment_moments_match_ou_transition() {
        let (rho, m) = (1.3, 24);
        let law = BridgeLaw::open(1.0, rho, m).unwrap();
        let om = omega(rho);
        let (x0, tau) = (0.7, 0.9);
        let mut rng = stream_rng(14, 0);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let (p, _) = law.sample_open_segment(x0, tau, &mut rng).unwrap();
            let e = *p.slices().last().unwrap();
            sum += e;
            sq += e * e;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        let mean_th = x0 * (-om * tau).exp();
        let var_th = (1.0 - (-2.0 * om * tau).exp()) / (2.0 * om);
        let se_mean = (var_th / n as f64).sqrt();
        let se_var = var_th * (2.0 / n as f64).sqrt();
        assert!((mean - mean_th).abs() < 4.0 * se_mean, "mean {mean} vs {mean_th}");
        assert!((var - var_th).abs() < 4.0 * se_var, "var {var} vs {var_th}");
    }

    #[test]
    fn open_segment_weight_telescopes() {
        // The returned mass must equal exp(-E0 tau) phi0(x0)/phi0(end),
        // independent of the number of steps.
        let rho = 0.8;
        let (x0, tau) = (-0.3, 1.7);
        let law = BridgeLaw::open(1.0, rho, 16).unwrap();
        let (p, w) = law.sample_open_segment(x0, tau, &mut stream_rng(15, 0)).unwrap();
        let e = *p.slices().last().unwrap();
        let expect =
            (-ground_energy(rho) * tau + log_phi0(x0, rho) - log_phi0(e, rho)).exp();
        assert!((w - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn pinned_bridge_hits_both_endpoints() {
        let law = BridgeLaw::open(0.9, 1.1, 10).unwrap();
        let p = law.sample_pinned_bridge(0.2, -0.4, &mut stream_rng(16, 0));
        assert_eq!(p.slices().len(), 11);
        assert_eq!(p.slices()[0], 0.2);
        assert_eq!(*p.slices().last().unwrap(), -0.4);
    }

    #[test]
    fn free_bridge_endpoint_and_midpoint_variance() {
        let mut rng = stream_rng(17, 0);
        let (x, y, tau, m) = (0.5, -0.5, 1.0, 16);
        let n = 30_000;
        let mut mid_sum = 0.0;
        let mut mid_sq = 0.0;
        for _ in 0..n {
            let p = sample_free_bridge(x, y, tau, m, &mut rng);
            assert_eq!(p.slices()[0], x);
            assert_eq!(*p.slices().last().unwrap(), y);
            let v = p.slices()[m / 2];
            mid_sum += v;
            mid_sq += v * v;
        }
        let mean = mid_sum / n as f64;
        let var = mid_sq / n as f64 - mean * mean;
        // Brownian bridge: mean (x+y)/2 = 0, var tau/4
        let var_th = tau / 4.0;
        assert!(mean.abs() < 4.0 * (var_th / n as f64).sqrt());
        assert!((var - var_th).abs() < 4.0 * var_th * (2.0 / n as f64).sqrt());
    }
}
