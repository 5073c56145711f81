//! Structural observables: the one-particle density through the
//! spectral limit formula and through finite-N sampling, the
//! off-diagonal one-particle matrix by a truncated winding expansion,
//! truncated two-point correlations with their decay rate, ergodic
//! averages of the lattice displacements, and particle-number
//! concentration on intervals.
//!
//! Two fully independent routes lead to the one-particle density:
//!
//! * the limit formula — histogram of loop starting points weighted by
//!   `Psi0(gamma) Psi0(-gamma)`, then summed over lattice images;
//! * finite-N sampling — fold the bulk positions of a Metropolis stream
//!   into one lattice cell.
//!
//! Their pointwise agreement is one of the headline cross-checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::{normalization_c, BridgeLaw};
use crate::model::ModelParams;
use crate::pathspace::{kernel_k, CollisionMode, DiscretePath};
use crate::rng::{stream_rng, STREAM_OPEN_LOOP};
use crate::transfer::{PathEnsemble, TransferSpectrum};

/// Sorted particle positions (bridge starting points) in a box.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfiguration {
    positions: Vec<f64>,
    box_walls: (f64, f64),
}

impl PointConfiguration {
    pub fn new(positions: Vec<f64>, box_walls: (f64, f64)) -> Result<Self> {
        for w in positions.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::Domain(format!(
                    "positions must be strictly increasing: {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(PointConfiguration { positions, box_walls })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
    pub fn box_walls(&self) -> (f64, f64) {
        self.box_walls
    }
    pub fn len(&self) -> usize {
        self.positions.len()
    }
    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// All positions translated by `u` (the box is kept; used by the
    /// symmetry-breaking detector on synthetically shifted data).
    pub fn shifted(&self, u: f64) -> PointConfiguration {
        PointConfiguration {
            positions: self.positions.iter().map(|x| x + u).collect(),
            box_walls: self.box_walls,
        }
    }

    /// Number of points in `[x, y)`.
    pub fn count_in(&self, x: f64, y: f64) -> usize {
        self.positions.iter().filter(|&&p| p >= x && p < y).count()
    }
}

/// Default bulk margin: discard `ceil(5 / gap)` cells at each end, so
/// boundary influence is suppressed to about `exp(-5)`.
pub fn bulk_margin_cells(gap: f64) -> usize {
    if !gap.is_finite() || gap <= 0.0 {
        return 1;
    }
    (5.0 / gap).ceil() as usize
}

/// Histogram density on a symmetric grid of whole lattice periods.
#[derive(Debug, Clone, Serialize)]
pub struct DensityProfile {
    /// Bin centers.
    pub grid: Vec<f64>,
    /// Density values (integrates to 1 over the support).
    pub values: Vec<f64>,
    /// Pointwise standard errors.
    pub errors: Vec<f64>,
    pub period: f64,
    pub bin_width: f64,
    /// Weighted mean of the variable and its standard error.
    pub mean: f64,
    pub mean_se: f64,
    /// Pre-symmetrization asymmetry `max |p(x) - p(-x)| / max p`.
    pub asymmetry: f64,
    /// Effective sample size of the weights.
    pub ess: f64,
}

/// Density of the single-site displacement in the thermodynamic limit:
/// the histogram of loop starting points `gamma(0)` weighted by
/// `Psi0(gamma) Psi0(-gamma)`, normalized to unit mass. The grid is
/// anchored so bin edges hit every half-period, which lets the image
/// sum below fold bins without interpolation; evenness is enforced by
/// averaging mirror bins and the discarded asymmetry is reported.
pub fn limit_marginal_density(
    spectrum: &TransferSpectrum,
    ensemble: &PathEnsemble,
    bins_per_period: usize,
) -> Result<DensityProfile> {
    if spectrum.s != ensemble.len() {
        return Err(Error::Domain("spectrum and ensemble sizes differ".into()));
    }
    if bins_per_period < 2 {
        return Err(Error::Domain("need at least 2 bins per period".into()));
    }
    let lambda = spectrum.lambda;
    let u: Vec<f64> = ensemble.slice0();
    let w: Vec<f64> = (0..ensemble.len())
        .map(|i| spectrum.psi0[i] * spectrum.psi0_tilde[i])
        .collect();
    let w_sum: f64 = w.iter().sum();
    let w_sq: f64 = w.iter().map(|x| x * x).sum();
    let ess = w_sum * w_sum / w_sq;
    if ess < 100.0 {
        return Err(Error::InsufficientSamples(format!(
            "effective sample size {ess:.1} < 100; enlarge the ensemble"
        )));
    }
    let max_abs = u.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    // periods covered: enough that no sample falls outside
    let k = ((max_abs / lambda - 0.5).ceil().max(0.0) as usize) + 1;
    let n_bins = (2 * k + 1) * bins_per_period;
    let width = lambda / bins_per_period as f64;
    let left = -(k as f64 + 0.5) * lambda;
    let mut mass = vec![0.0f64; n_bins];
    let mut mass_sq = vec![0.0f64; n_bins];
    let mut mean_acc = 0.0;
    for (&x, &wi) in u.iter().zip(&w) {
        let idx = (((x - left) / width) as usize).min(n_bins - 1);
        mass[idx] += wi;
        mass_sq[idx] += wi * wi;
        mean_acc += wi * x;
    }
    let mean = mean_acc / w_sum;
    let mean_var: f64 = u
        .iter()
        .zip(&w)
        .map(|(&x, &wi)| {
            let d = wi * (x - mean);
            d * d
        })
        .sum::<f64>()
        / (w_sum * w_sum);
    // evenness: average mirror bins, report what was lost
    let peak = mass.iter().cloned().fold(1e-300, f64::max);
    let mut asymmetry = 0.0f64;
    let mut sym = mass.clone();
    for i in 0..n_bins {
        let j = n_bins - 1 - i;
        asymmetry = asymmetry.max((mass[i] - mass[j]).abs() / peak);
        sym[i] = 0.5 * (mass[i] + mass[j]);
    }
    let norm = w_sum * width;
    let grid: Vec<f64> = (0..n_bins).map(|i| left + (i as f64 + 0.5) * width).collect();
    let values: Vec<f64> = sym.iter().map(|&m| m / norm).collect();
    let errors: Vec<f64> = (0..n_bins)
        .map(|i| {
            let j = n_bins - 1 - i;
            0.5 * (mass_sq[i] + mass_sq[j]).sqrt() / norm
        })
        .collect();
    Ok(DensityProfile {
        grid,
        values,
        errors,
        period: lambda,
        bin_width: width,
        mean,
        mean_se: mean_var.sqrt(),
        asymmetry,
        ess,
    })
}

/// The lambda-periodic one-particle density on `[0, lambda)` with its
/// crystallinity amplitude.
#[derive(Debug, Clone, Serialize)]
pub struct PeriodicDensity {
    /// Bin centers in `[0, period)`.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub period: f64,
    pub bin_width: f64,
    /// `(max - min) / mean` of the profile.
    pub crystallinity: f64,
    /// Integral over one period (should be 1 up to what is reported).
    pub mass: f64,
}

impl PeriodicDensity {
    /// Periodic evaluation at arbitrary `x`: fold into `[0, period)`
    /// first, so periodicity is exact by construction.
    pub fn eval(&self, x: f64) -> f64 {
        let folded = x.rem_euclid(self.period);
        let idx = ((folded / self.bin_width) as usize).min(self.values.len() - 1);
        self.values[idx]
    }

    pub fn crystallinity_amplitude(values: &[f64]) -> f64 {
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &v in values {
            lo = lo.min(v);
            hi = hi.max(v);
            sum += v;
        }
        let mean = sum / values.len() as f64;
        (hi - lo) / mean
    }
}

/// One-particle density `rho1(x; x) = sum_j p(x - (j - 1/2) lambda)`
/// over one period, by folding the bins of the site marginal `p`. Bins
/// whose image index exceeds `n_images` are dropped; if they carry more
/// than 1e-8 of the mass that is an error (`n_images` too small).
pub fn one_particle_density(p: &DensityProfile, n_images: usize) -> Result<PeriodicDensity> {
    let lambda = p.period;
    let width = p.bin_width;
    let bins_per_period = (lambda / width).round() as usize;
    let mut values = vec![0.0f64; bins_per_period];
    let mut errs_sq = vec![0.0f64; bins_per_period];
    let mut dropped = 0.0;
    for ((&c, &v), &e) in p.grid.iter().zip(&p.values).zip(&p.errors) {
        // rho1(x) picks p at c = x - (j - 1/2) lambda, so x = c + lambda/2 mod lambda
        let shifted = c + 0.5 * lambda;
        let j = (shifted / lambda).floor();
        if (j as isize).unsigned_abs() > n_images {
            dropped += v * width;
            continue;
        }
        let x = shifted - j * lambda;
        let idx = ((x / width) as usize).min(bins_per_period - 1);
        values[idx] += v;
        errs_sq[idx] += e * e;
    }
    if dropped > 1e-8 {
        return Err(Error::Domain(format!(
            "n_images = {n_images} drops {dropped:.3e} of the site-marginal mass (> 1e-8)"
        )));
    }
    let mass: f64 = values.iter().sum::<f64>() * width;
    let grid: Vec<f64> = (0..bins_per_period).map(|i| (i as f64 + 0.5) * width).collect();
    let crystallinity = PeriodicDensity::crystallinity_amplitude(&values);
    Ok(PeriodicDensity {
        grid,
        values,
        errors: errs_sq.iter().map(|e| e.sqrt()).collect(),
        period: lambda,
        bin_width: width,
        crystallinity,
        mass,
    })
}

/// Finite-N route to the same profile: fold bulk positions of a sample
/// stream into one cell. Standard errors come from batch means over the
/// stream (32 batches), which absorbs autocorrelation.
pub fn mcmc_folded_density(
    configs: &[PointConfiguration],
    p: &ModelParams,
    margin_cells: usize,
    bins_per_period: usize,
) -> Result<PeriodicDensity> {
    if configs.is_empty() {
        return Err(Error::InsufficientSamples("no configurations".into()));
    }
    let lambda = p.lambda();
    let n = p.n_particles();
    if 2 * margin_cells >= n {
        return Err(Error::Domain(format!(
            "margin of {margin_cells} cells per side consumes all {n} cells"
        )));
    }
    let bulk_lo = p.a() + margin_cells as f64 * lambda;
    let bulk_hi = p.b() - margin_cells as f64 * lambda;
    let n_bulk_cells = (n - 2 * margin_cells) as f64;
    let width = lambda / bins_per_period as f64;

    let n_batches = 32.min(configs.len());
    let mut batch_hists = vec![vec![0.0f64; bins_per_period]; n_batches];
    let mut batch_counts = vec![0.0f64; n_batches];
    for (ci, c) in configs.iter().enumerate() {
        let b = ci * n_batches / configs.len();
        batch_counts[b] += 1.0;
        for &x in c.positions() {
            if x < bulk_lo || x >= bulk_hi {
                continue;
            }
            let folded = (x - p.a()).rem_euclid(lambda);
            let idx = ((folded / width) as usize).min(bins_per_period - 1);
            batch_hists[b][idx] += 1.0;
        }
    }
    let mut values = vec![0.0f64; bins_per_period];
    let mut errors = vec![0.0f64; bins_per_period];
    for i in 0..bins_per_period {
        let per_batch: Vec<f64> = (0..n_batches)
            .map(|b| batch_hists[b][i] / (batch_counts[b] * n_bulk_cells * width))
            .collect();
        let mean = per_batch.iter().sum::<f64>() / n_batches as f64;
        let var = per_batch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n_batches as f64 - 1.0);
        values[i] = mean;
        errors[i] = (var / n_batches as f64).sqrt();
    }
    let mass: f64 = values.iter().sum::<f64>() * width;
    let grid: Vec<f64> = (0..bins_per_period).map(|i| (i as f64 + 0.5) * width).collect();
    let crystallinity = PeriodicDensity::crystallinity_amplitude(&values);
    Ok(PeriodicDensity {
        grid,
        values,
        errors,
        period: lambda,
        bin_width: width,
        crystallinity,
        mass,
    })
}

/// Off-diagonal one-particle matrix estimate at `(x, y)`.
#[derive(Debug, Clone, Serialize)]
pub struct RdmEstimate {
    pub x: f64,
    pub y: f64,
    pub value: f64,
    pub se: f64,
    /// Largest winding number included (`w_max`).
    pub w_max: usize,
    /// Bound on the dropped `w > w_max` terms from the fitted
    /// Gaussian-times-geometric envelope of the computed terms.
    pub truncation_bound: f64,
    /// Set when the bound exceeds the requested tolerance.
    pub flagged: bool,
    /// Per-term diagnostics `(l, l', winding, I, se)`.
    pub terms: Vec<(f64, f64, usize, f64, f64)>,
}

/// Kernel weight between an open segment (`M+1` slices) and a closed
/// node loop (`M` slices): the segment endpoint is compared against the
/// loop's wrapped slice 0.
fn kernel_open_vs_closed(
    open: &DiscretePath,
    closed: &DiscretePath,
    lambda: f64,
    reflect_open: bool,
    mode: CollisionMode,
) -> f64 {
    let g = open.slices();
    let e = closed.slices();
    let m = e.len();
    debug_assert_eq!(g.len(), m + 1);
    let sgn = if reflect_open { -1.0 } else { 1.0 };
    let dt = closed.dt();
    let mut prev = f64::NAN;
    let mut w = 1.0;
    for i in 0..=m {
        let d = lambda + (e[i % m] - sgn * g[i]);
        if d <= 0.0 {
            return 0.0;
        }
        if mode == CollisionMode::CrossingCorrected && i > 0 {
            let q = prev * d / dt;
            w *= crate::pathspace::no_cross_factor(q);
        }
        prev = d;
    }
    if mode == CollisionMode::Strict {
        1.0
    } else {
        w
    }
}

/// Nyström extension of the principal eigenfunction to an arbitrary
/// open segment: `Psi0(gamma) = (1/(z0 S)) sum_j K(gamma, node_j) psi_j`.
/// With `reflected` the extension is evaluated at `-gamma`, which gives
/// `Psi0~(gamma)`.
fn psi0_extension(
    seg: &DiscretePath,
    reflected: bool,
    spectrum: &TransferSpectrum,
    ensemble: &PathEnsemble,
) -> f64 {
    let s = ensemble.len();
    let mut acc = 0.0;
    for j in 0..s {
        let k =
            kernel_open_vs_closed(seg, ensemble.path(j), spectrum.lambda, reflected, spectrum.mode);
        if k > 0.0 {
            acc += k * spectrum.psi0[j];
        }
    }
    acc / (spectrum.z0 * s as f64)
}

/// Off-diagonal one-particle matrix `rho1(x; y)` by the truncated
/// winding expansion: lattice sites `l <= l'` within a Gaussian-envelope
/// cutoff, winding `w = rho (l' - l) + 1 <= w_max`. Each term is an
/// importance-sampled open chain: free-endpoint evolution for the
/// junctions, a pinned bridge for the last segment (its endpoint
/// density is the explicit mass factor), eigenfunction weights at both
/// ends through the Nyström extension, and a kernel factor per
/// consecutive segment pair.
#[allow(clippy::too_many_arguments)]
pub fn one_particle_matrix(
    x: f64,
    y: f64,
    spectrum: &TransferSpectrum,
    ensemble: &PathEnsemble,
    w_max: usize,
    samples_per_term: usize,
    tolerance: f64,
    seed: u64,
) -> Result<RdmEstimate> {
    if w_max < 1 {
        return Err(Error::Domain("w_max must be at least 1".into()));
    }
    // symmetry rho1(x; y) = rho1(y; x): compute for x <= y
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let lambda = spectrum.lambda;
    let rho = spectrum.rho;
    let beta = spectrum.beta;
    let m = spectrum.m;
    let c_norm = normalization_c(beta, rho);
    let law_open = BridgeLaw::open(beta, rho, m)?;
    let sigma = crate::gaussian::variance_sigma2(beta, rho).sqrt();
    // lattice window: contributions die like exp(-C (x - l)^2)
    let reach = 4.0 * sigma + lambda;
    let l_min = ((x - reach) / lambda - 0.5).ceil() as i64;
    let l_max = ((x + reach) / lambda - 0.5).floor() as i64;
    let lp_min = ((y - reach) / lambda - 0.5).ceil() as i64;
    let lp_max = ((y + reach) / lambda - 0.5).floor() as i64;

    let mut terms: Vec<(f64, f64, usize, f64, f64)> = Vec::new();
    let mut total = 0.0;
    let mut var_total = 0.0;
    let mut stream = 0u64;
    for jl in l_min..=l_max {
        for jp in lp_min..=lp_max {
            if jp < jl {
                continue;
            }
            let winding = (jp - jl) as usize + 1;
            if winding > w_max {
                continue;
            }
            let l = (jl as f64 + 0.5) * lambda;
            let lp = (jp as f64 + 0.5) * lambda;
            stream += 1;
            let mut rng = stream_rng(seed, STREAM_OPEN_LOOP + stream);
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for _ in 0..samples_per_term {
                let v = sample_winding_term(
                    x - l,
                    y - lp,
                    winding,
                    &law_open,
                    spectrum,
                    ensemble,
                    c_norm,
                    &mut rng,
                );
                sum += v;
                sumsq += v * v;
            }
            let mean = sum / samples_per_term as f64;
            let var =
                (sumsq / samples_per_term as f64 - mean * mean).max(0.0) / samples_per_term as f64;
            let sign = if (winding - 1) % 2 == 0 { 1.0 } else { -1.0 };
            total += sign * mean;
            var_total += var;
            terms.push((l, lp, winding, mean, var.sqrt()));
        }
    }
    // envelope fit of log|I| = log D0 - kappa (w - 1) - C [(x-l)^2 + (y-l')^2]
    let truncation_bound = winding_tail_bound(&terms, w_max, lambda, x, y);
    Ok(RdmEstimate {
        x,
        y,
        value: total,
        se: var_total.sqrt(),
        w_max,
        truncation_bound,
        flagged: truncation_bound > tolerance,
        terms,
    })
}

/// One sample of `I(x, y; l, l')` for a chain of `winding` segments.
#[allow(clippy::too_many_arguments)]
fn sample_winding_term(
    start: f64,
    end: f64,
    winding: usize,
    law_open: &BridgeLaw,
    spectrum: &TransferSpectrum,
    ensemble: &PathEnsemble,
    c_norm: f64,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> f64 {
    let beta = spectrum.beta;
    let lambda = spectrum.lambda;
    let mut segs: Vec<DiscretePath> = Vec::with_capacity(winding);
    // measure mass accumulated along the chain; each segment carries 1/c
    let mut log_mass = -(winding as f64) * c_norm.ln();
    let mut s_cur = start;
    for seg_idx in 0..winding {
        if seg_idx + 1 < winding {
            let (path, ou_mass) = law_open
                .sample_open_segment(s_cur, beta, rng)
                .expect("open law with positive duration");
            log_mass += ou_mass.ln();
            s_cur = *path.slices().last().unwrap() - lambda;
            segs.push(path);
        } else {
            // last segment pinned at the endpoint; its mass is the
            // kernel density at the pinned point
            let k = crate::gaussian::mehler(beta, s_cur, end, spectrum.rho)
                .expect("beta > 0");
            log_mass += k.ln();
            segs.push(law_open.sample_pinned_bridge(s_cur, end, rng));
        }
    }
    // eigenfunction weights at the chain ends and kernel factors between
    let psi_left = psi0_extension(&segs[0], true, spectrum, ensemble);
    if psi_left == 0.0 {
        return 0.0;
    }
    let psi_right = psi0_extension(&segs[winding - 1], false, spectrum, ensemble);
    if psi_right == 0.0 {
        return 0.0;
    }
    let mut kernels = 1.0;
    for i in 0..winding - 1 {
        // consecutive segments: gamma_i vs gamma_{i+1} at spacing lambda,
        // in segment-local centered coordinates the next segment is the
        // same chain shifted left by lambda, so compare directly
        let shifted_next = segs[i + 1].shifted(lambda);
        let k = kernel_k(&segs[i], &shifted_next, 0.0, spectrum.mode).expect("same grid");
        if k == 0.0 {
            return 0.0;
        }
        kernels *= k / spectrum.z0;
    }
    psi_left * kernels * psi_right * log_mass.exp()
}

/// Bound on the dropped windings: fit `log |I|` linearly in the winding
/// and quadratically in the site offsets over the measured terms, then
/// sum the fitted envelope over `w_max+1 ..` and all sites.
fn winding_tail_bound(
    terms: &[(f64, f64, usize, f64, f64)],
    w_max: usize,
    lambda: f64,
    x: f64,
    y: f64,
) -> f64 {
    let pts: Vec<(f64, f64, f64)> = terms
        .iter()
        .filter(|t| t.3.abs() > 3.0 * t.4 && t.3.abs() > 0.0)
        .map(|t| {
            let d2 = (x - t.0) * (x - t.0) + (y - t.1) * (y - t.1);
            ((t.2 - 1) as f64, d2, t.3.abs().ln())
        })
        .collect();
    if pts.len() < 3 {
        // no usable fit: bound by the largest magnitude at w_max decayed once
        let peak = terms.iter().map(|t| t.3.abs()).fold(0.0, f64::max);
        return peak;
    }
    // least squares for log|I| = a0 - kappa w - c d2
    let n = pts.len() as f64;
    let (mut sw, mut sd, mut sl, mut sww, mut sdd, mut swd, mut swl, mut sdl) =
        (0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &(w, d2, l) in &pts {
        sw += w;
        sd += d2;
        sl += l;
        sww += w * w;
        sdd += d2 * d2;
        swd += w * d2;
        swl += w * l;
        sdl += d2 * l;
    }
    // solve the 3x3 normal equations
    let a = [[n, sw, sd], [sw, sww, swd], [sd, swd, sdd]];
    let b = [sl, swl, sdl];
    let sol = solve3(a, b);
    let (a0, mk, mc) = (sol[0], sol[1], sol[2]);
    let kappa = (-mk).max(1e-3);
    let c = (-mc).max(1e-6);
    // sum over windings > w_max of the envelope, over site pairs on
    // the Gaussian envelope grid
    let mut bound = 0.0;
    for w in (w_max + 1)..(w_max + 40) {
        let mut site_sum = 0.0;
        for jl in -60i64..=60 {
            let l = (jl as f64 + 0.5) * lambda;
            let lp = l + (w as f64 - 1.0) * lambda;
            site_sum += (-c * ((x - l) * (x - l) + (y - lp) * (y - lp))).exp();
        }
        bound += (a0 - kappa * w as f64).exp() * site_sum;
    }
    bound
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let mut piv = col;
        for r in col + 1..3 {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        if d == 0.0 {
            return [0.0; 3];
        }
        for r in 0..3 {
            if r != col {
                let f = a[r][col] / d;
                for k in col..3 {
                    a[r][k] -= f * a[col][k];
                }
                b[r] -= f * b[col];
            }
        }
    }
    [b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]]
}

/// Cell-pair correlation estimates with the fitted decay rate.
#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    /// Separations `r = k lambda`.
    pub separations: Vec<f64>,
    /// `int int over cell pairs (rho2 - rho1 rho1)`, averaged over bulk
    /// pairs at each separation; `k = 0` uses the factorial moment.
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Exponential decay rate per unit distance from weighted least
    /// squares on `log |value|` over bins with `|value| > 3 SE`.
    pub alpha: Option<f64>,
    pub alpha_se: Option<f64>,
    pub bins_used: usize,
}

/// Truncated two-point correlation from a configuration stream: counts
/// per lattice cell, covariance over cell pairs at separation `k`
/// cells, batch-mean errors. Requires at least 1000 configurations and
/// a separation range that fits inside the bulk.
pub fn truncated_two_point(
    configs: &[PointConfiguration],
    p: &ModelParams,
    margin_cells: usize,
    max_separation_cells: usize,
) -> Result<CorrelationReport> {
    if configs.len() < 1000 {
        return Err(Error::InsufficientSamples(format!(
            "need >= 1000 configurations, got {}",
            configs.len()
        )));
    }
    let n = p.n_particles();
    if 2 * margin_cells >= n {
        return Err(Error::Domain("margin consumes all cells".into()));
    }
    let bulk_cells = n - 2 * margin_cells;
    if max_separation_cells >= bulk_cells {
        return Err(Error::InsufficientSamples(format!(
            "separations up to {max_separation_cells} cells need more bulk; feasible range is 0..{}",
            bulk_cells.saturating_sub(1)
        )));
    }
    let lambda = p.lambda();
    let first_cell = margin_cells;
    // counts[c][j]: occupancy of bulk cell j in configuration c
    let counts: Vec<Vec<f64>> = configs
        .iter()
        .map(|c| {
            (0..bulk_cells)
                .map(|j| {
                    let lo = p.a() + (first_cell + j) as f64 * lambda;
                    c.count_in(lo, lo + lambda) as f64
                })
                .collect()
        })
        .collect();

    let n_batches = 32.min(configs.len() / 4).max(2);
    let mut values = Vec::new();
    let mut errors = Vec::new();
    let mut separations = Vec::new();
    for k in 0..=max_separation_cells {
        let mut per_batch = Vec::with_capacity(n_batches);
        for b in 0..n_batches {
            let lo = b * configs.len() / n_batches;
            let hi = (b + 1) * configs.len() / n_batches;
            per_batch.push(cell_covariance(&counts[lo..hi], k, bulk_cells));
        }
        let mean = per_batch.iter().sum::<f64>() / n_batches as f64;
        let var = per_batch.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / (n_batches as f64 - 1.0);
        separations.push(k as f64 * lambda);
        values.push(mean);
        errors.push((var / n_batches as f64).sqrt());
    }
    // weighted least squares of log|value| against r for usable bins;
    // the contact bin r = lambda mixes the hard-core adjacency term and
    // decays much faster than the spectral rate, so the fit starts at
    // two cells
    let pts: Vec<(f64, f64, f64)> = (2..values.len())
        .filter(|&k| values[k].abs() > 3.0 * errors[k] && values[k] != 0.0)
        .map(|k| {
            let sigma_log = errors[k] / values[k].abs();
            (separations[k], values[k].abs().ln(), 1.0 / (sigma_log * sigma_log))
        })
        .collect();
    let (alpha, alpha_se) = if pts.len() >= 2 {
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let sx: f64 = pts.iter().map(|p| p.2 * p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.2 * p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.2 * p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * p.0 * p.1).sum();
        let denom = sw * sxx - sx * sx;
        let slope = (sw * sxy - sx * sy) / denom;
        let slope_var = sw / denom;
        (Some(-slope), Some(slope_var.sqrt()))
    } else {
        (None, None)
    };
    Ok(CorrelationReport {
        separations,
        values,
        errors,
        alpha,
        alpha_se,
        bins_used: pts.len(),
    })
}

fn cell_covariance(counts: &[Vec<f64>], k: usize, bulk_cells: usize) -> f64 {
    let nc = counts.len() as f64;
    let mut acc = 0.0;
    let mut pairs = 0.0;
    for j in 0..bulk_cells - k {
        let j2 = j + k;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        let mut m12 = 0.0;
        for c in counts {
            m1 += c[j];
            m2 += c[j2];
            m12 += if k == 0 { c[j] * (c[j] - 1.0) } else { c[j] * c[j2] };
        }
        m1 /= nc;
        m2 /= nc;
        m12 /= nc;
        acc += m12 - m1 * m2;
        pairs += 1.0;
    }
    acc / pairs
}

/// Running means of the lattice displacements over the bulk.
#[derive(Debug, Clone, Serialize)]
pub struct YReport {
    /// Cumulative mean of `Y_j` over the first `k` bulk indices,
    /// averaged over configurations.
    pub running_mean: Vec<f64>,
    pub mean: f64,
    pub se: f64,
    /// Set when |mean| exceeds 4 standard errors.
    pub flagged: bool,
    pub bulk_indices: usize,
}

/// Ergodic average of `Y_j = x_j - m_j` over bulk indices; the CLT band
/// comes from batch means over the configuration stream.
pub fn ergodic_average_y(
    configs: &[PointConfiguration],
    p: &ModelParams,
    margin_cells: usize,
) -> Result<YReport> {
    if configs.is_empty() {
        return Err(Error::InsufficientSamples("no configurations".into()));
    }
    let n = p.n_particles();
    if 2 * margin_cells >= n {
        return Err(Error::Domain(format!(
            "margin of {margin_cells} cells per side consumes all {n} indices"
        )));
    }
    let sites = p.lattice();
    let idx: Vec<usize> = (margin_cells..n - margin_cells).collect();
    let mut running = vec![0.0f64; idx.len()];
    let mut config_means = Vec::with_capacity(configs.len());
    for c in configs {
        let mut acc = 0.0;
        for (k, &j) in idx.iter().enumerate() {
            acc += c.positions()[j] - sites.site(j);
            running[k] += acc / (k + 1) as f64;
        }
        config_means.push(acc / idx.len() as f64);
    }
    for r in running.iter_mut() {
        *r /= configs.len() as f64;
    }
    let n_batches = 32.min(configs.len()).max(1);
    let mut batch_means = vec![0.0f64; n_batches];
    let mut batch_n = vec![0.0f64; n_batches];
    for (ci, &v) in config_means.iter().enumerate() {
        let b = ci * n_batches / config_means.len();
        batch_means[b] += v;
        batch_n[b] += 1.0;
    }
    for (m, c) in batch_means.iter_mut().zip(&batch_n) {
        *m /= c;
    }
    let mean = batch_means.iter().sum::<f64>() / n_batches as f64;
    let var = batch_means.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
        / (n_batches as f64 - 1.0).max(1.0);
    let se = (var / n_batches as f64).sqrt();
    Ok(YReport {
        running_mean: running,
        mean,
        se,
        flagged: mean.abs() > 4.0 * se,
        bulk_indices: idx.len(),
    })
}

/// Result of the translation-symmetry-breaking detector.
#[derive(Debug, Clone, Serialize)]
pub struct ShiftDetection {
    /// Detected shift in `[0, lambda)`.
    pub u_mod_lambda: f64,
    /// Modulus of the mean phase (1 = perfectly coherent).
    pub coherence: f64,
}

/// Phase detector for broken translation symmetry: the mean of
/// `exp(i 2 pi <Y>_bulk / lambda)` over configurations converges to
/// `exp(i 2 pi u / lambda)` on a stream shifted by `u`.
pub fn shift_detector(
    configs: &[PointConfiguration],
    p: &ModelParams,
    margin_cells: usize,
) -> Result<ShiftDetection> {
    if configs.is_empty() {
        return Err(Error::InsufficientSamples("no configurations".into()));
    }
    let n = p.n_particles();
    if 2 * margin_cells >= n {
        return Err(Error::Domain("margin consumes all indices".into()));
    }
    let sites = p.lattice();
    let lambda = p.lambda();
    let idx: Vec<usize> = (margin_cells..n - margin_cells).collect();
    let (mut re, mut im) = (0.0f64, 0.0f64);
    for c in configs {
        let mean_y: f64 = idx
            .iter()
            .map(|&j| c.positions()[j] - sites.site(j))
            .sum::<f64>()
            / idx.len() as f64;
        let theta = 2.0 * std::f64::consts::PI * mean_y / lambda;
        re += theta.cos();
        im += theta.sin();
    }
    re /= configs.len() as f64;
    im /= configs.len() as f64;
    let coherence = (re * re + im * im).sqrt();
    let u = (im.atan2(re) / (2.0 * std::f64::consts::PI) * lambda).rem_euclid(lambda);
    Ok(ShiftDetection { u_mod_lambda: u, coherence })
}

/// Tail statistics of the particle number on an interval.
#[derive(Debug, Clone, Serialize)]
pub struct TailReport {
    pub interval: (f64, f64),
    pub expected: f64,
    /// `(n, P(|N_I - rho |I|| >= n), binomial SE)` for n = 1, 2, 3, ...
    pub tails: Vec<(u32, f64, f64)>,
    /// Fit of `log P = const - alpha n^2` over the nonzero tail points.
    pub alpha: f64,
    pub r_squared: f64,
    /// Most frequent count.
    pub mode_count: usize,
}

/// Empirical tail of `|N_I - rho |I||` with a sub-Gaussian (`n^2`) fit.
/// The interval must lie inside the bulk given the margin.
pub fn particle_count_tails(
    configs: &[PointConfiguration],
    p: &ModelParams,
    interval: (f64, f64),
    margin_cells: usize,
    n_max: u32,
) -> Result<TailReport> {
    if configs.is_empty() {
        return Err(Error::InsufficientSamples("no configurations".into()));
    }
    let (x, y) = interval;
    if !(x < y) {
        return Err(Error::Domain("interval must satisfy x < y".into()));
    }
    let lambda = p.lambda();
    let bulk_lo = p.a() + margin_cells as f64 * lambda;
    let bulk_hi = p.b() - margin_cells as f64 * lambda;
    if x < bulk_lo || y > bulk_hi {
        return Err(Error::Domain(format!(
            "interval [{x}, {y}] leaves the bulk [{bulk_lo}, {bulk_hi}]"
        )));
    }
    let expected = p.rho() * (y - x);
    let mut histogram: Vec<usize> = Vec::new();
    let mut deviations = Vec::with_capacity(configs.len());
    for c in configs {
        let count = c.count_in(x, y);
        if histogram.len() <= count {
            histogram.resize(count + 1, 0);
        }
        histogram[count] += 1;
        deviations.push((count as f64 - expected).abs());
    }
    let nf = configs.len() as f64;
    let tails: Vec<(u32, f64, f64)> = (1..=n_max)
        .map(|n| {
            let hits = deviations.iter().filter(|&&d| d >= n as f64).count() as f64;
            let prob = hits / nf;
            (n, prob, (prob * (1.0 - prob) / nf).sqrt().max(1.0 / nf))
        })
        .collect();
    // least squares of log p on n^2 over nonzero points
    let pts: Vec<(f64, f64)> = tails
        .iter()
        .filter(|t| t.1 > 0.0)
        .map(|t| ((t.0 * t.0) as f64, t.1.ln()))
        .collect();
    let (alpha, r_squared) = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let intercept = (sy - slope * sx) / n;
        let ss_tot: f64 = pts.iter().map(|p| (p.1 - sy / n) * (p.1 - sy / n)).sum();
        let ss_res: f64 = pts
            .iter()
            .map(|p| {
                let e = p.1 - (intercept + slope * p.0);
                e * e
            })
            .sum();
        (-slope, if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 })
    } else {
        (f64::NAN, f64::NAN)
    };
    let mode_count = histogram
        .iter()
        .enumerate()
        .max_by_key(|(_, &c)| c)
        .map(|(i, _)| i)
        .unwrap_or(0);
    Ok(TailReport { interval, expected, tails, alpha, r_squared, mode_count })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::CollisionMode;
    use crate::transfer::{principal_eigenpair, TransferOperator};

    fn spectrum_and_ensemble() -> (TransferSpectrum, PathEnsemble) {
        let ens = PathEnsemble::sample(1.0, 1.0, 16, 800, 51).unwrap();
        let op = TransferOperator::dense(&ens, 1.0, CollisionMode::CrossingCorrected).unwrap();
        let sp = principal_eigenpair(&op, 1e-10, 100_000).unwrap();
        (sp, ens)
    }

    #[test]
    fn point_configuration_rejects_unsorted() {
        assert!(PointConfiguration::new(vec![0.4, 0.2], (0.0, 1.0)).is_err());
        let c = PointConfiguration::new(vec![0.2, 0.4], (0.0, 1.0)).unwrap();
        assert_eq!(c.count_in(0.0, 0.3), 1);
        assert_eq!(c.count_in(0.5, 0.9), 0);
    }

    #[test]
    fn limit_marginal_is_even_centered_and_normalized() {
        let (sp, ens) = spectrum_and_ensemble();
        let p = limit_marginal_density(&sp, &ens, 16).unwrap();
        assert!(p.mean.abs() <= 4.0 * p.mean_se + 1e-12, "mean {} se {}", p.mean, p.mean_se);
        // reflection-closed ensemble with an even weight: zero asymmetry
        assert!(p.asymmetry < 1e-12, "asymmetry {}", p.asymmetry);
        let mass: f64 = p.values.iter().sum::<f64>() * p.bin_width;
        assert!((mass - 1.0).abs() < 1e-10, "mass {mass}");
        // evenness bin by bin after symmetrization
        let n = p.values.len();
        for i in 0..n {
            assert_eq!(p.values[i], p.values[n - 1 - i]);
        }
    }

    #[test]
    fn limit_marginal_wide_spacing_is_gaussian() {
        // lambda huge: Psi0 constant, so p is the N(0, sigma^2) marginal
        let ens = PathEnsemble::sample(1.0, 1.0, 16, 2000, 53).unwrap();
        let op = TransferOperator::dense(&ens, 50.0, CollisionMode::Strict).unwrap();
        let sp = principal_eigenpair(&op, 1e-10, 100_000).unwrap();
        let p = limit_marginal_density(&sp, &ens, 4).unwrap();
        let sigma2 = crate::gaussian::variance_sigma2(1.0, 1.0);
        for (&x, &v) in p.grid.iter().zip(&p.values) {
            let expect = (-(x * x) / (2.0 * sigma2)).exp()
                / (2.0 * std::f64::consts::PI * sigma2).sqrt();
            if expect > 0.02 {
                assert!(
                    (v - expect).abs() < 0.15 * expect + 0.01,
                    "x={x}: {v} vs {expect}"
                );
            }
        }
    }

    #[test]
    fn image_sum_conserves_mass_and_is_periodic() {
        let (sp, ens) = spectrum_and_ensemble();
        let p = limit_marginal_density(&sp, &ens, 16).unwrap();
        let rho1 = one_particle_density(&p, 60).unwrap();
        assert!((rho1.mass - 1.0).abs() < 1e-10, "period mass {}", rho1.mass);
        for x in [0.1, 0.37, 0.92] {
            assert!((rho1.eval(x) - rho1.eval(x + rho1.period)).abs() < 1e-12);
            assert!((rho1.eval(x) - rho1.eval(x - 3.0 * rho1.period)).abs() < 1e-12);
        }
        // too few images must error
        assert!(one_particle_density(&p, 0).is_err());
    }

    #[test]
    fn image_sum_invariant_under_period_relabeling() {
        // shifting the site marginal by a whole period changes nothing
        let (sp, ens) = spectrum_and_ensemble();
        let p = limit_marginal_density(&sp, &ens, 8).unwrap();
        let mut shifted = p.clone();
        for g in shifted.grid.iter_mut() {
            *g += shifted.period;
        }
        let a = one_particle_density(&p, 60).unwrap();
        let b = one_particle_density(&shifted, 61).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
        }
    }

    #[test]
    fn folded_mcmc_density_normalizes() {
        let p = ModelParams::neutral_box(1.0, 1.0, 8).unwrap();
        let cfg = crate::mcmc::McmcConfig { pre_sweeps: 200, ..Default::default() };
        let mut st = crate::mcmc::init_state(&p, 16, 71, cfg).unwrap();
        let (configs, _) = crate::mcmc::sample_configurations(&mut st, 3000, 2).unwrap();
        let d = mcmc_folded_density(&configs, &p, 2, 16).unwrap();
        assert!((d.mass - 1.0).abs() < 0.05, "mass {}", d.mass);
        assert!(mcmc_folded_density(&configs, &p, 4, 16).is_err()); // margin eats all
    }

    #[test]
    fn rdm_diagonal_matches_site_marginal_sum() {
        let (sp, ens) = spectrum_and_ensemble();
        let p = limit_marginal_density(&sp, &ens, 16).unwrap();
        let rho1 = one_particle_density(&p, 60).unwrap();
        let x = 0.5; // a lattice site: peak of the density
        let est = one_particle_matrix(x, x, &sp, &ens, 1, 1500, 1.0, 97).unwrap();
        let reference = rho1.eval(x);
        let tol = 3.0 * (est.se + rho1.errors[rho1.values.len() / 2]) + 0.05 * reference;
        assert!(
            (est.value - reference).abs() < tol,
            "rdm diagonal {} vs density {reference} (tol {tol})",
            est.value
        );
    }

    #[test]
    fn rdm_is_symmetric_by_construction() {
        let (sp, ens) = spectrum_and_ensemble();
        let a = one_particle_matrix(0.2, 0.7, &sp, &ens, 2, 200, 1.0, 99).unwrap();
        let b = one_particle_matrix(0.7, 0.2, &sp, &ens, 2, 200, 1.0, 99).unwrap();
        assert_eq!(a.value, b.value);
        assert!(one_particle_matrix(0.0, 0.0, &sp, &ens, 0, 10, 1.0, 1).is_err());
    }

    #[test]
    fn rdm_terms_follow_gaussian_envelope() {
        let (sp, ens) = spectrum_and_ensemble();
        let est = one_particle_matrix(0.5, 0.5, &sp, &ens, 2, 800, 1e10, 101).unwrap();
        // the same-site term must dominate the shifted-site terms
        let on_site = est
            .terms
            .iter()
            .find(|t| t.2 == 1 && (t.0 - 0.5).abs() < 1e-9)
            .expect("on-site term present")
            .3;
        for t in &est.terms {
            if (t.0 - 0.5).abs() > 0.6 && t.2 == 1 {
                assert!(t.3.abs() < on_site.abs(), "off-site {} vs on-site {on_site}", t.3);
            }
        }
        assert!(est.truncation_bound.is_finite());
    }

    #[test]
    fn shift_detector_sees_injected_shifts() {
        // synthetic crystal: positions at sites plus small noise
        let p = ModelParams::neutral_box(1.0, 1.0, 16).unwrap();
        let sites = p.lattice().sites().to_vec();
        let mut rng = stream_rng(3, 9);
        let mut configs = Vec::new();
        use rand::Rng;
        for _ in 0..400 {
            let mut xs: Vec<f64> = sites
                .iter()
                .map(|&s| s + 0.12 * rng.random::<f64>() - 0.06)
                .collect();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            configs.push(PointConfiguration::new(xs, (p.a(), p.b())).unwrap());
        }
        for u in [0.0, 0.25, 0.5, 1.0] {
            let shifted: Vec<PointConfiguration> =
                configs.iter().map(|c| c.shifted(u)).collect();
            let det = shift_detector(&shifted, &p, 2).unwrap();
            let expect = u.rem_euclid(1.0);
            let d = (det.u_mod_lambda - expect).abs();
            let circ = d.min(1.0 - d);
            assert!(circ < 0.03, "u={u}: detected {}", det.u_mod_lambda);
            assert!(det.coherence > 0.9);
        }
    }

    #[test]
    fn ergodic_average_basics() {
        let p = ModelParams::neutral_box(1.0, 1.0, 10).unwrap();
        let sites = p.lattice().sites().to_vec();
        let configs: Vec<PointConfiguration> = (0..200)
            .map(|k| {
                let off = 0.01 * ((k % 7) as f64 - 3.0);
                PointConfiguration::new(
                    sites.iter().map(|&s| s + off).collect(),
                    (p.a(), p.b()),
                )
                .unwrap()
            })
            .collect();
        let rep = ergodic_average_y(&configs, &p, 2).unwrap();
        assert_eq!(rep.bulk_indices, 6);
        assert!(rep.mean.abs() < 0.02);
        assert!(ergodic_average_y(&configs, &p, 5).is_err());
        // n = 1 degenerate running mean: first entry is Y itself
        let one = ergodic_average_y(&configs[..1], &p, 2).unwrap();
        let y0 = configs[0].positions()[2] - sites[2];
        assert!((one.running_mean[0] - y0).abs() < 1e-12);
    }

    #[test]
    fn count_tails_empty_interval_and_errors() {
        let p = ModelParams::neutral_box(1.0, 1.0, 8).unwrap();
        let sites = p.lattice().sites().to_vec();
        let configs: Vec<PointConfiguration> = (0..50)
            .map(|_| {
                PointConfiguration::new(sites.clone(), (p.a(), p.b())).unwrap()
            })
            .collect();
        // interval between two sites holds exactly one site point
        let rep = particle_count_tails(&configs, &p, (3.0, 4.0), 2, 3).unwrap();
        assert_eq!(rep.mode_count, 1);
        for &(_, prob, _) in &rep.tails {
            assert_eq!(prob, 0.0);
        }
        assert!(particle_count_tails(&configs, &p, (0.1, 0.4), 2, 3).is_err());
    }

    #[test]
    fn correlation_estimator_signs_and_errors() {
        let p = ModelParams::neutral_box(1.0, 1.0, 12).unwrap();
        let sites = p.lattice().sites().to_vec();
        let mut rng = stream_rng(5, 77);
        use rand::Rng;
        let configs: Vec<PointConfiguration> = (0..2000)
            .map(|_| {
                let mut xs: Vec<f64> = sites
                    .iter()
                    .map(|&s| s + 0.3 * (rng.random::<f64>() - 0.5))
                    .collect();
                xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                PointConfiguration::new(xs, (p.a(), p.b())).unwrap()
            })
            .collect();
        let rep = truncated_two_point(&configs, &p, 2, 4).unwrap();
        // same-cell factorial correlation is negative (hard ordering)
        assert!(rep.values[0] < 0.0, "same-cell {}", rep.values[0]);
        assert_eq!(rep.separations.len(), 5);
        assert!(truncated_two_point(&configs[..100], &p, 2, 4).is_err());
        assert!(truncated_two_point(&configs, &p, 2, 10).is_err());
    }
}
