//! Nyström discretization of the transfer operator on loop space, its
//! principal eigenpair and spectral gap, and the finite-N chamber
//! amplitudes `<F, K^(N-1) G>`.
//!
//! The operator `(K f)(gamma) = int K(gamma, eta) f(eta) nu(d eta)` is
//! discretized on an ensemble of loops drawn exactly from `nu`, giving
//! the S x S stochastic matrix `B_ij = K(gamma_i, gamma_j) / S`. The
//! ensemble is always closed under the reflection `gamma -> -gamma`
//! (partner indices `i` and `i ^ 1`), which makes the adjoint the
//! reflected transpose at node level and halves the sampling cost of
//! the left eigenfunction.
//!
//! Kernel evaluations are screened through per-path min/max bounds, so
//! a typical pair costs O(1) and matrices far too large to store can
//! still be applied on the fly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::BridgeLaw;
use crate::pathspace::{boundary_f, boundary_g, no_cross_factor, CollisionMode, DiscretePath};
use crate::rng::{stream_rng, STREAM_ENSEMBLE};

/// Ensemble of closed loops drawn exactly from the weighted loop
/// measure; the Nyström quadrature nodes, with uniform weights `1/S`.
#[derive(Debug, Clone)]
pub struct PathEnsemble {
    paths: Vec<DiscretePath>,
    ranges: Vec<(f64, f64)>,
    beta: f64,
    rho: f64,
    m: usize,
    dt: f64,
    seed: u64,
}

impl PathEnsemble {
    /// Draws `pairs` loops and closes the set under reflection, so the
    /// ensemble holds `S = 2 * pairs` paths with partner(i) = i ^ 1.
    pub fn sample(beta: f64, rho: f64, m: usize, pairs: usize, seed: u64) -> Result<Self> {
        if pairs < 1 {
            return Err(Error::Domain("ensemble needs at least one pair".into()));
        }
        let law = BridgeLaw::closed(beta, rho, m)?;
        let mut rng = stream_rng(seed, STREAM_ENSEMBLE);
        let mut paths = Vec::with_capacity(2 * pairs);
        for _ in 0..pairs {
            let p = law.sample_closed_loop(&mut rng);
            let r = p.reflected();
            paths.push(p);
            paths.push(r);
        }
        let ranges = paths
            .iter()
            .map(|p| {
                let lo = p.slices().iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = p.slices().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                (lo, hi)
            })
            .collect();
        Ok(PathEnsemble { paths, ranges, beta, rho, m, dt: beta / m as f64, seed })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }
    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
    pub fn paths(&self) -> &[DiscretePath] {
        &self.paths
    }
    pub fn path(&self, i: usize) -> &DiscretePath {
        &self.paths[i]
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn slices_per_path(&self) -> usize {
        self.m
    }
    pub fn dt(&self) -> f64 {
        self.dt
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Index of the reflected copy of path `i`.
    pub fn reflection_partner(i: usize) -> usize {
        i ^ 1
    }

    /// Slice-0 values of all paths (the bridge starting points).
    pub fn slice0(&self) -> Vec<f64> {
        self.paths.iter().map(|p| p.slices()[0]).collect()
    }

    /// Kernel weight `K(gamma_i, gamma_j)` with min/max screening:
    /// most pairs are decided without touching the slices.
    pub fn kernel(&self, i: usize, j: usize, lambda: f64, mode: CollisionMode) -> f64 {
        let (lo_i, hi_i) = self.ranges[i];
        let (lo_j, hi_j) = self.ranges[j];
        // every slice gap d_t = eta(t) + lambda - gamma(t) lies in [gap_lb, gap_ub]
        let gap_lb = lambda + lo_j - hi_i;
        let gap_ub = lambda + hi_j - lo_i;
        if gap_ub <= 0.0 {
            return 0.0;
        }
        if gap_lb > 0.0 {
            match mode {
                CollisionMode::Strict => return 1.0,
                CollisionMode::CrossingCorrected => {
                    if gap_lb * gap_lb > 36.0 * self.dt {
                        return 1.0;
                    }
                }
            }
        }
        let g = self.paths[i].slices();
        let e = self.paths[j].slices();
        let m = g.len();
        // lambda + (e - g): bit-identical under reflection, see kernel_k
        let d0 = lambda + (e[0] - g[0]);
        if d0 <= 0.0 {
            return 0.0;
        }
        match mode {
            CollisionMode::Strict => {
                for t in 1..m {
                    if lambda + (e[t] - g[t]) <= 0.0 {
                        return 0.0;
                    }
                }
                1.0
            }
            CollisionMode::CrossingCorrected => {
                let inv_dt = 1.0 / self.dt;
                let mut w = 1.0;
                let mut prev = d0;
                for t in 1..m {
                    let d = lambda + (e[t] - g[t]);
                    if d <= 0.0 {
                        return 0.0;
                    }
                    let q = prev * d * inv_dt;
                    if q <= 36.0 {
                        w *= no_cross_factor(q);
                    }
                    prev = d;
                }
                let q = prev * d0 * inv_dt;
                if q <= 36.0 {
                    w *= no_cross_factor(q);
                }
                w
            }
        }
    }

    /// Boundary weights `F(gamma_i)` and `G(gamma_i)` for all nodes.
    pub fn boundary_vectors(&self, mode: CollisionMode) -> (Vec<f64>, Vec<f64>) {
        let f = self.paths.iter().map(|p| boundary_f(p, self.rho, mode)).collect();
        let g = self.paths.iter().map(|p| boundary_g(p, self.rho, mode)).collect();
        (f, g)
    }
}

enum Storage {
    /// Row-major kernel values (f32; the kernel is a bounded weight, so
    /// single precision costs ~1e-7 relative, far below Monte Carlo error).
    Dense(Vec<f32>),
    MatrixFree,
}

/// The discretized operator, tied to its node ensemble.
pub struct TransferOperator<'a> {
    ensemble: &'a PathEnsemble,
    lambda: f64,
    mode: CollisionMode,
    storage: Storage,
}

/// Ensembles up to this size get a stored kernel matrix by default.
pub const DENSE_LIMIT_DEFAULT: usize = 8192;

impl<'a> TransferOperator<'a> {
    /// Builds with dense storage when the ensemble has at most
    /// [`DENSE_LIMIT_DEFAULT`] nodes, on-the-fly application otherwise.
    pub fn build(ensemble: &'a PathEnsemble, lambda: f64, mode: CollisionMode) -> Result<Self> {
        if ensemble.len() <= DENSE_LIMIT_DEFAULT {
            Self::dense(ensemble, lambda, mode)
        } else {
            Self::matrix_free(ensemble, lambda, mode)
        }
    }

    pub fn dense(ensemble: &'a PathEnsemble, lambda: f64, mode: CollisionMode) -> Result<Self> {
        check_lambda(lambda)?;
        let s = ensemble.len();
        let mut data = vec![0.0f32; s * s];
        data.par_chunks_mut(s).enumerate().for_each(|(i, row)| {
            for (j, slot) in row.iter_mut().enumerate() {
                *slot = ensemble.kernel(i, j, lambda, mode) as f32;
            }
        });
        Ok(TransferOperator { ensemble, lambda, mode, storage: Storage::Dense(data) })
    }

    pub fn matrix_free(
        ensemble: &'a PathEnsemble,
        lambda: f64,
        mode: CollisionMode,
    ) -> Result<Self> {
        check_lambda(lambda)?;
        Ok(TransferOperator { ensemble, lambda, mode, storage: Storage::MatrixFree })
    }

    pub fn ensemble(&self) -> &PathEnsemble {
        self.ensemble
    }
    pub fn len(&self) -> usize {
        self.ensemble.len()
    }
    pub fn is_empty(&self) -> bool {
        self.ensemble.is_empty()
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn mode(&self) -> CollisionMode {
        self.mode
    }

    /// Kernel entry `K(gamma_i, gamma_j)` (not yet divided by `S`).
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        match &self.storage {
            Storage::Dense(d) => d[i * self.len() + j] as f64,
            Storage::MatrixFree => self.ensemble.kernel(i, j, self.lambda, self.mode),
        }
    }

    /// `out = (1/|active|) K x`, restricted to the nodes outside
    /// `skip` (jackknife deletion range; pass `0..0` for all nodes).
    /// Rows are reduced sequentially so the result is independent of
    /// the parallel schedule.
    pub fn apply_masked(&self, x: &[f64], out: &mut [f64], skip: std::ops::Range<usize>) {
        let s = self.len();
        assert_eq!(x.len(), s);
        assert_eq!(out.len(), s);
        let active = (s - skip.len()) as f64;
        match &self.storage {
            Storage::Dense(d) => {
                out.par_iter_mut().enumerate().for_each(|(i, o)| {
                    if skip.contains(&i) {
                        *o = 0.0;
                        return;
                    }
                    let row = &d[i * s..(i + 1) * s];
                    let mut acc = 0.0f64;
                    for j in 0..s {
                        if !skip.contains(&j) {
                            acc += row[j] as f64 * x[j];
                        }
                    }
                    *o = acc / active;
                });
            }
            Storage::MatrixFree => {
                out.par_iter_mut().enumerate().for_each(|(i, o)| {
                    if skip.contains(&i) {
                        *o = 0.0;
                        return;
                    }
                    let mut acc = 0.0f64;
                    for j in 0..s {
                        if !skip.contains(&j) {
                            acc += self.ensemble.kernel(i, j, self.lambda, self.mode) * x[j];
                        }
                    }
                    *o = acc / active;
                });
            }
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.apply_masked(x, out, 0..0);
    }

    /// `out = (1/S) K^T x` (the adjoint at node level).
    pub fn apply_transpose(&self, x: &[f64], out: &mut [f64]) {
        let s = self.len();
        match &self.storage {
            Storage::Dense(d) => {
                out.par_iter_mut().enumerate().for_each(|(j, o)| {
                    let mut acc = 0.0f64;
                    for i in 0..s {
                        acc += d[i * s + j] as f64 * x[i];
                    }
                    *o = acc / s as f64;
                });
            }
            Storage::MatrixFree => {
                out.par_iter_mut().enumerate().for_each(|(j, o)| {
                    let mut acc = 0.0f64;
                    for i in 0..s {
                        acc += self.ensemble.kernel(i, j, self.lambda, self.mode) * x[i];
                    }
                    *o = acc / s as f64;
                });
            }
        }
    }

    /// The dense matrix `B = K / S` (small ensembles; validation).
    pub fn to_dmatrix(&self) -> nalgebra::DMatrix<f64> {
        let s = self.len();
        nalgebra::DMatrix::from_fn(s, s, |i, j| self.entry(i, j) / s as f64)
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(())
}

fn dot_ens(a: &[f64], b: &[f64], active: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / active
}

fn norm_ens(a: &[f64], active: f64) -> f64 {
    dot_ens(a, a, active).sqrt()
}

/// Principal eigenpair, subdominant modulus and bookkeeping of one
/// spectral computation.
#[derive(Debug, Clone)]
pub struct TransferSpectrum {
    pub z0: f64,
    pub z1_abs: f64,
    /// `log(z0 / z1_abs)`; infinite for a numerically rank-one operator.
    pub gap: f64,
    /// Right eigenfunction at the nodes, normalized so the ensemble
    /// average of `psi0_tilde * psi0` is 1.
    pub psi0: Vec<f64>,
    /// Left eigenfunction values `psi0(-gamma_i) = psi0[i ^ 1]`.
    pub psi0_tilde: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// Jackknife standard error of `z0` over node blocks, when requested.
    pub z0_se: Option<f64>,
    pub beta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub m: usize,
    pub s: usize,
    pub seed: u64,
    pub mode: CollisionMode,
}

/// JSON-facing summary of a spectrum.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectrumSummary {
    pub z0: f64,
    pub z1_abs: f64,
    pub gap: f64,
    #[serde(rename = "S")]
    pub s: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
    pub residual: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z0_se: Option<f64>,
}

impl TransferSpectrum {
    pub fn summary(&self) -> SpectrumSummary {
        SpectrumSummary {
            z0: self.z0,
            z1_abs: self.z1_abs,
            gap: self.gap,
            s: self.s,
            m: self.m,
            seed: self.seed,
            residual: self.residual,
            z0_se: self.z0_se,
        }
    }
}

/// Direct estimator of the chamber amplitude `nu^(W_N) = <F, K^(N-1) G>`
/// by sequential conditioned sampling: the N site-centered loops are
/// drawn left to right, each slice from its bridge conditional
/// truncated to `(previous path's slice value (or a), b)`, and the
/// product of truncation masses is the exact likelihood ratio to the
/// unconditioned loop product. Every draw satisfies the slice-level
/// chamber, so amplitudes far below `1/samples` (tight boxes, large N
/// at strong coupling) are resolved where the plain node average of
/// the Nyström route returns no positive sample at all. Crossing
/// corrections multiply in exactly as in [`crate::pathspace::in_chamber`].
///
/// Returns `(estimate, standard error)`.
pub fn chamber_amplitude_sequential(
    p: &crate::model::ModelParams,
    m: usize,
    mode: CollisionMode,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    use crate::gaussian::sample_truncated_normal;
    use crate::pathspace::{in_chamber, ChamberSpec};

    if samples < 2 {
        return Err(Error::Domain("need at least 2 samples".into()));
    }
    let law = BridgeLaw::closed(p.beta(), p.rho(), m)?;
    let spec = ChamberSpec::from_params(p);
    let n = p.n_particles();
    let dt = p.beta() / m as f64;
    let sigma = law.sigma2().sqrt();

    // fixed chunking with per-chunk streams: deterministic under any
    // thread count
    let chunks = 64usize.min(samples);
    let chunk_sizes: Vec<usize> =
        (0..chunks).map(|k| samples / chunks + usize::from(k < samples % chunks)).collect();
    let partials: Vec<(f64, f64)> = chunk_sizes
        .par_iter()
        .enumerate()
        .map(|(k, &count)| {
            let mut rng = stream_rng(seed, crate::rng::STREAM_CHAMBER + k as u64);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            let mut slices = vec![vec![0.0f64; m]; n];
            for _ in 0..count {
                let mut log_w = 0.0;
                let mut alive = true;
                'paths: for j in 0..n {
                    let site = spec.site(j);
                    let lo0 = if j == 0 { spec.a } else { slices[j - 1][0] };
                    let (x0, mass0) =
                        sample_truncated_normal(site, sigma, lo0, spec.b, &mut rng);
                    if mass0 <= 0.0 {
                        alive = false;
                        break 'paths;
                    }
                    log_w += mass0.ln();
                    slices[j][0] = x0;
                    let mut prev = x0;
                    for (i, c) in law.conditionals().iter().enumerate() {
                        let mean = site + c.w_prev * (prev - site) + c.w_end * (x0 - site);
                        let lo = if j == 0 { spec.a } else { slices[j - 1][i + 1] };
                        let (x, mass) =
                            sample_truncated_normal(mean, c.sd, lo, spec.b, &mut rng);
                        if mass <= 0.0 {
                            alive = false;
                            break 'paths;
                        }
                        log_w += mass.ln();
                        slices[j][i + 1] = x;
                        prev = x;
                    }
                }
                if alive {
                    let paths: Vec<DiscretePath> = slices
                        .iter()
                        .map(|s| DiscretePath::closed_unchecked(s.clone(), dt))
                        .collect();
                    let chamber = in_chamber(&paths, &spec, mode).expect("consistent paths");
                    let w = log_w.exp() * chamber;
                    sum += w;
                    sumsq += w * w;
                }
            }
            (sum, sumsq)
        })
        .collect();

    let (sum, sumsq) = partials.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = samples as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0);
    Ok((mean, (var / nf).sqrt()))
}

/// Power-iteration nub: dominant eigenvalue and vector of the masked
/// operator, from a positive start.
pub(crate) fn power_z0(
    op: &TransferOperator,
    skip: std::ops::Range<usize>,
    tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>, f64, usize)> {
    let s = op.len();
    let active = (s - skip.len()) as f64;
    let mut v = vec![1.0; s];
    for i in skip.clone() {
        v[i] = 0.0;
    }
    let mut w = vec![0.0; s];
    let mut ray_prev = f64::NAN;
    let mut ray_tol = tol;
    let mut last_residual = f64::NAN;
    for it in 1..=max_iter {
        op.apply_masked(&v, &mut w, skip.clone());
        let ray = dot_ens(&v, &w, active) / dot_ens(&v, &v, active);
        if (ray - ray_prev).abs() <= ray_tol * ray.abs().max(1e-300) {
            // verify the eigen equation itself before accepting; a
            // slowly drifting Rayleigh quotient (near-tied leading
            // eigenvalues) can pass the difference test early
            let mut res = 0.0;
            let nv = norm_ens(&v, active);
            for i in 0..s {
                let d = w[i] - ray * v[i];
                res += d * d;
            }
            let residual = (res / active).sqrt() / nv;
            last_residual = residual;
            if residual <= 10.0 * tol {
                return Ok((ray, v, residual, it));
            }
            ray_tol *= 0.25; // keep going with a tighter difference test
        }
        let nw = norm_ens(&w, active);
        if nw == 0.0 {
            return Err(Error::Estimate("operator annihilated the positive cone".into()));
        }
        for x in w.iter_mut() {
            *x /= nw;
        }
        std::mem::swap(&mut v, &mut w);
        ray_prev = ray;
    }
    Err(Error::NonConvergence {
        iterations: max_iter,
        z0_last: ray_prev,
        residual: last_residual,
        last_iterate: v,
    })
}

/// Full spectral computation: power iteration for `(z0, Psi0)` from the
/// constant vector, then a deflated iteration (projector
/// `B - z0 |Psi0><Psi0~|`) for the subdominant modulus. `Psi0` is
/// normalized by the ensemble estimate of `<Psi0~, Psi0> = 1`.
pub fn principal_eigenpair(
    op: &TransferOperator,
    tol: f64,
    max_iter: usize,
) -> Result<TransferSpectrum> {
    principal_eigenpair_opts(op, tol, max_iter, false)
}

/// As [`principal_eigenpair`], optionally attaching a jackknife error
/// on `z0` over 20 contiguous pair blocks.
pub fn principal_eigenpair_opts(
    op: &TransferOperator,
    tol: f64,
    max_iter: usize,
    jackknife: bool,
) -> Result<TransferSpectrum> {
    let ens = op.ensemble();
    let s = op.len();
    let active = s as f64;
    let (z0, mut psi0, residual, iterations) = power_z0(op, 0..0, tol, max_iter)?;
    if psi0.iter().any(|&x| !(x > 0.0)) {
        // Krein-Rutman guarantees strict positivity; a zero can only
        // come from a node unreachable at this discretization.
        return Err(Error::Estimate(
            "principal eigenvector not strictly positive at every node".into(),
        ));
    }
    // normalize <psi~, psi>_ens = 1
    let pairing: f64 = (0..s).map(|i| psi0[i ^ 1] * psi0[i]).sum::<f64>() / active;
    let scale = 1.0 / pairing.sqrt();
    for x in psi0.iter_mut() {
        *x *= scale;
    }
    let psi0_tilde: Vec<f64> = (0..s).map(|i| psi0[i ^ 1]).collect();

    let (z1_abs, _) = subdominant_modulus(op, z0, &psi0, &psi0_tilde, tol.max(1e-12), 4000);
    let gap = if z1_abs > 0.0 { (z0 / z1_abs).ln() } else { f64::INFINITY };

    let z0_se = if jackknife {
        let blocks = 20.min(s / 2);
        let mut estimates = Vec::with_capacity(blocks);
        for b in 0..blocks {
            let lo = (b * s / blocks) & !1usize;
            let hi = (((b + 1) * s / blocks) & !1usize).max(lo + 2).min(s);
            let (zb, _, _, _) = power_z0(op, lo..hi, tol, max_iter)?;
            estimates.push(zb);
        }
        Some(jackknife_se(&estimates))
    } else {
        None
    };

    Ok(TransferSpectrum {
        z0,
        z1_abs,
        gap,
        psi0,
        psi0_tilde,
        residual,
        iterations,
        z0_se,
        beta: ens.beta(),
        rho: ens.rho(),
        lambda: op.lambda(),
        m: ens.slices_per_path(),
        s,
        seed: ens.seed(),
        mode: op.mode(),
    })
}

/// Deflated power iteration. Tracks the Rayleigh quotient; if it
/// settles the subdominant eigenvalue is real and that is the answer,
/// otherwise (complex pair) the modulus is read off the geometric mean
/// growth of the iterate norms.
fn subdominant_modulus(
    op: &TransferOperator,
    z0: f64,
    psi0: &[f64],
    psi0_tilde: &[f64],
    tol: f64,
    max_iter: usize,
) -> (f64, usize) {
    let s = op.len();
    let active = s as f64;
    let project_out = |v: &mut [f64]| {
        let c = dot_ens(psi0_tilde, v, active);
        for (x, p) in v.iter_mut().zip(psi0) {
            *x -= c * p;
        }
    };
    // deterministic generic start: slice-0 values plus index jitter
    let mut v: Vec<f64> = op
        .ensemble()
        .slice0()
        .iter()
        .enumerate()
        .map(|(i, &x)| x + 0.1 * ((1.7 * i as f64).sin()))
        .collect();
    project_out(&mut v);
    let nv = norm_ens(&v, active);
    if nv == 0.0 {
        return (0.0, 0);
    }
    for x in v.iter_mut() {
        *x /= nv;
    }
    let mut w = vec![0.0; s];
    let mut ray_prev = f64::NAN;
    let mut log_growth = Vec::new();
    for it in 1..=max_iter {
        op.apply(&v, &mut w);
        project_out(&mut w);
        let growth = norm_ens(&w, active);
        if growth <= 1e-14 * z0 {
            return (0.0, it); // numerically rank one
        }
        let ray = dot_ens(&v, &w, active);
        log_growth.push(growth.ln());
        for x in w.iter_mut() {
            *x /= growth;
        }
        std::mem::swap(&mut v, &mut w);
        if (ray - ray_prev).abs() <= tol * ray.abs().max(1e-300) && it > 10 {
            return (ray.abs().min(z0), it);
        }
        ray_prev = ray;
    }
    // no settled Rayleigh quotient: average the growth over the tail
    let tail = &log_growth[log_growth.len().saturating_sub(50)..];
    let z1 = (tail.iter().sum::<f64>() / tail.len() as f64).exp();
    (z1.min(z0), max_iter)
}

pub fn jackknife_se(estimates: &[f64]) -> f64 {
    let b = estimates.len() as f64;
    let mean = estimates.iter().sum::<f64>() / b;
    let var: f64 = estimates.iter().map(|&e| (e - mean) * (e - mean)).sum();
    ((b - 1.0) / b * var).sqrt()
}

/// Chamber amplitude estimate `<F, K^(N-1) G>` with its rank-one
/// asymptotic `z0^(N-1) <F, Psi0> <Psi0~, G>`.
#[derive(Debug, Clone)]
pub struct Amplitude {
    pub n_particles: usize,
    pub value: f64,
    /// Rank-one prediction; NaN when no spectrum was supplied.
    pub rank_one: f64,
    pub jackknife_se: Option<f64>,
}

/// Estimates `<F, K^(N-1) G>` by `N - 1` operator applications to the
/// `G` vector. With a spectrum, also evaluates the rank-one asymptotic;
/// with `jackknife_blocks`, attaches a delete-block standard error
/// (each block re-runs the masked applications).
pub fn amplitude_fkg(
    op: &TransferOperator,
    spectrum: Option<&TransferSpectrum>,
    n_particles: usize,
    jackknife_blocks: Option<usize>,
) -> Result<Amplitude> {
    if n_particles < 1 {
        return Err(Error::Domain("amplitude needs N >= 1".into()));
    }
    let ens = op.ensemble();
    let (f, g) = ens.boundary_vectors(op.mode());
    let value = amplitude_masked(op, &f, &g, n_particles, 0..0);
    let rank_one = match spectrum {
        Some(sp) => {
            let active = op.len() as f64;
            let fp = dot_ens(&f, &sp.psi0, active);
            let pg = dot_ens(&sp.psi0_tilde, &g, active);
            sp.z0.powi(n_particles as i32 - 1) * fp * pg
        }
        None => f64::NAN,
    };
    let jackknife_se_val = match jackknife_blocks {
        Some(blocks) if blocks >= 2 => {
            let s = op.len();
            let blocks = blocks.min(s / 2);
            let mut estimates = Vec::with_capacity(blocks);
            for bk in 0..blocks {
                let lo = (bk * s / blocks) & !1usize;
                let hi = (((bk + 1) * s / blocks) & !1usize).max(lo + 2).min(s);
                estimates.push(amplitude_masked(op, &f, &g, n_particles, lo..hi));
            }
            Some(jackknife_se(&estimates))
        }
        _ => None,
    };
    Ok(Amplitude { n_particles, value, rank_one, jackknife_se: jackknife_se_val })
}

fn amplitude_masked(
    op: &TransferOperator,
    f: &[f64],
    g: &[f64],
    n_particles: usize,
    skip: std::ops::Range<usize>,
) -> f64 {
    let s = op.len();
    let active = (s - skip.len()) as f64;
    let mut cur: Vec<f64> = g.to_vec();
    for i in skip.clone() {
        cur[i] = 0.0;
    }
    let mut next = vec![0.0; s];
    for _ in 1..n_particles {
        op.apply_masked(&cur, &mut next, skip.clone());
        std::mem::swap(&mut cur, &mut next);
    }
    let mut acc = 0.0;
    for i in 0..s {
        if !skip.contains(&i) {
            acc += f[i] * cur[i];
        }
    }
    acc / active
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_ensemble() -> PathEnsemble {
        PathEnsemble::sample(1.0, 1.0, 16, 150, 42).unwrap()
    }

    #[test]
    fn huge_lambda_gives_rank_one_operator() {
        let ens = small_ensemble();
        let op = TransferOperator::dense(&ens, 1e6, CollisionMode::Strict).unwrap();
        for i in 0..ens.len() {
            for j in 0..ens.len() {
                assert_eq!(op.entry(i, j), 1.0);
            }
        }
        let sp = principal_eigenpair(&op, 1e-10, 10_000).unwrap();
        assert!((sp.z0 - 1.0).abs() < 1e-12);
        assert_eq!(sp.z1_abs, 0.0);
        assert!(sp.gap.is_infinite());
        let spread = sp
            .psi0
            .iter()
            .cloned()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        assert!((spread.1 - spread.0).abs() < 1e-10, "psi0 must be constant");
    }

    #[test]
    fn strict_entries_are_indicators() {
        let ens = small_ensemble();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::Strict).unwrap();
        for i in 0..40 {
            for j in 0..40 {
                let e = op.entry(i, j);
                assert!(e == 0.0 || e == 1.0);
            }
        }
    }

    #[test]
    fn z0_monotone_in_lambda_and_bounded() {
        let ens = small_ensemble();
        let mut last = f64::INFINITY;
        for lambda in [3.0, 2.0, 1.5, 1.0, 0.7, 0.5] {
            let op = TransferOperator::dense(&ens, lambda, CollisionMode::Strict).unwrap();
            let sp = principal_eigenpair(&op, 1e-8, 200_000).unwrap();
            assert!(sp.z0 <= 1.0 + 1e-12 && sp.z0 > 0.0);
            assert!(
                sp.z0 <= last + 1e-12,
                "z0 must not increase as lambda shrinks: {last} -> {} at {lambda}",
                sp.z0
            );
            last = sp.z0;
        }
    }

    #[test]
    fn screened_kernel_matches_direct_evaluation() {
        let ens = small_ensemble();
        for mode in [CollisionMode::Strict, CollisionMode::CrossingCorrected] {
            for i in (0..ens.len()).step_by(37) {
                for j in (0..ens.len()).step_by(41) {
                    let direct = crate::pathspace::kernel_k(ens.path(i), ens.path(j), 0.9, mode)
                        .unwrap();
                    let screened = ens.kernel(i, j, 0.9, mode);
                    assert!(
                        (direct - screened).abs() <= 1e-12 * (1.0 + direct.abs()),
                        "({i},{j}) {mode}: {direct} vs {screened}"
                    );
                }
            }
        }
    }

    #[test]
    fn psi_tilde_is_node_level_reflection() {
        let ens = small_ensemble();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let sp = principal_eigenpair(&op, 1e-10, 100_000).unwrap();
        for i in 0..ens.len() {
            assert_eq!(sp.psi0_tilde[i], sp.psi0[i ^ 1]);
        }
        // <psi~, psi> = 1 after normalization
        let s = ens.len() as f64;
        let pairing: f64 =
            sp.psi0.iter().zip(&sp.psi0_tilde).map(|(a, b)| a * b).sum::<f64>() / s;
        assert!((pairing - 1.0).abs() < 1e-12);
        // residual within 10x tolerance
        assert!(sp.residual <= 10.0 * 1e-10 + 1e-14, "residual {}", sp.residual);
    }

    #[test]
    fn adjoint_eigenvector_is_reflected_psi() {
        let ens = small_ensemble();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let sp = principal_eigenpair(&op, 1e-12, 100_000).unwrap();
        // power-iterate the transpose
        let s = ens.len();
        let mut v = vec![1.0; s];
        let mut w = vec![0.0; s];
        for _ in 0..400 {
            op.apply_transpose(&v, &mut w);
            let n = norm_ens(&w, s as f64);
            for x in w.iter_mut() {
                *x /= n;
            }
            std::mem::swap(&mut v, &mut w);
        }
        let scale = sp.psi0_tilde[0] / v[0];
        for i in 0..s {
            assert!(
                (v[i] * scale - sp.psi0_tilde[i]).abs() < 1e-6 * sp.psi0_tilde[i].abs(),
                "node {i}"
            );
        }
    }

    #[test]
    fn spectrum_is_bit_reproducible() {
        let e1 = PathEnsemble::sample(1.0, 1.0, 16, 100, 7).unwrap();
        let e2 = PathEnsemble::sample(1.0, 1.0, 16, 100, 7).unwrap();
        let o1 = TransferOperator::dense(&e1, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let o2 = TransferOperator::dense(&e2, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let s1 = principal_eigenpair(&o1, 1e-10, 100_000).unwrap();
        let s2 = principal_eigenpair(&o2, 1e-10, 100_000).unwrap();
        assert_eq!(s1.z0, s2.z0);
        assert_eq!(s1.z1_abs, s2.z1_abs);
        assert_eq!(s1.psi0, s2.psi0);
    }

    #[test]
    fn dense_agrees_with_matrix_free() {
        let ens = PathEnsemble::sample(1.0, 1.0, 16, 80, 9).unwrap();
        let od = TransferOperator::dense(&ens, 0.8, CollisionMode::CrossingCorrected).unwrap();
        let of = TransferOperator::matrix_free(&ens, 0.8, CollisionMode::CrossingCorrected).unwrap();
        let x: Vec<f64> = (0..ens.len()).map(|i| 1.0 + (i as f64 * 0.37).sin()).collect();
        let mut yd = vec![0.0; ens.len()];
        let mut yf = vec![0.0; ens.len()];
        od.apply(&x, &mut yd);
        of.apply(&x, &mut yf);
        for i in 0..ens.len() {
            assert!((yd[i] - yf[i]).abs() < 1e-6 * (1.0 + yf[i].abs()), "row {i}");
        }
    }

    #[test]
    fn power_iteration_matches_dense_eigensolve() {
        let ens = PathEnsemble::sample(1.0, 1.0, 12, 120, 21).unwrap();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let sp = principal_eigenpair(&op, 1e-12, 100_000).unwrap();
        let eigs = op.to_dmatrix().complex_eigenvalues();
        let mut mods: Vec<f64> = eigs.iter().map(|c| c.norm()).collect();
        mods.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert!((sp.z0 - mods[0]).abs() < 1e-9 * mods[0], "z0 {} vs {}", sp.z0, mods[0]);
        assert!(
            (sp.z1_abs - mods[1]).abs() < 5e-3 * mods[0],
            "z1 {} vs {}",
            sp.z1_abs,
            mods[1]
        );
    }

    #[test]
    fn amplitude_n1_is_plain_average_and_n2_matches_brute_force() {
        let ens = PathEnsemble::sample(1.0, 1.0, 12, 60, 33).unwrap();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let (f, g) = ens.boundary_vectors(op.mode());
        let s = ens.len();

        let a1 = amplitude_fkg(&op, None, 1, None).unwrap();
        let direct1: f64 = f.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() / s as f64;
        assert_eq!(a1.value, direct1);

        let a2 = amplitude_fkg(&op, None, 2, None).unwrap();
        let mut brute = 0.0;
        for i in 0..s {
            for j in 0..s {
                brute += f[i] * op.entry(i, j) * g[j];
            }
        }
        brute /= (s * s) as f64;
        assert!((a2.value - brute).abs() < 1e-10 * brute.abs().max(1e-30));
    }

    #[test]
    fn five_path_hand_check() {
        // tiny ensemble: verify <F, K G> against the 5x5 sum by hand
        let ens = PathEnsemble::sample(0.8, 1.0, 8, 3, 5).unwrap(); // S = 6
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::Strict).unwrap();
        let (f, g) = ens.boundary_vectors(CollisionMode::Strict);
        let s = ens.len();
        let mut hand = 0.0;
        for i in 0..s {
            for j in 0..s {
                let k = crate::pathspace::kernel_k(ens.path(i), ens.path(j), 1.0, CollisionMode::Strict).unwrap();
                hand += f[i] * k * g[j];
            }
        }
        hand /= (s * s) as f64;
        let amp = amplitude_fkg(&op, None, 2, None).unwrap();
        assert!((amp.value - hand).abs() < 1e-14);
    }

    #[test]
    fn nonconvergence_carries_last_iterate() {
        let ens = small_ensemble();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::Strict).unwrap();
        match principal_eigenpair(&op, 1e-16, 2) {
            Err(Error::NonConvergence { iterations, last_iterate, .. }) => {
                assert_eq!(iterations, 2);
                assert_eq!(last_iterate.len(), ens.len());
            }
            other => panic!("expected NonConvergence, got {other:?}"),
        }
    }
}
