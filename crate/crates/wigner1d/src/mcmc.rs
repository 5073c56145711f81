//! Finite-N sampler of the conditioned loop ensemble: N site-centered
//! closed loops with the harmonic weight, conditioned on never leaving
//! the path Weyl chamber.
//!
//! The target factorizes per path into a cyclic product of Mehler
//! kernels times the chamber weight, so both move types are
//! preconditioned Crank-Nicolson proposals with respect to the Gaussian
//! part and accept on the chamber ratio alone:
//!
//! * slice moves draw from the single-slice heat-bath conditional,
//!   relaxed toward the current value by a tunable `alpha`;
//! * whole-loop shifts do the same for the loop's mean offset, whose
//!   conditional given the loop shape is again Gaussian.
//!
//! `alpha = 0` is a pure heat-bath proposal; `alpha -> 1` makes tiny
//! steps. During warm-up `alpha` is tuned per move type toward a target
//! acceptance window and then frozen, keeping the chain reversible.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gaussian::BridgeLaw;
use crate::model::ModelParams;
use crate::observables::PointConfiguration;
use crate::pathspace::{in_chamber, no_cross_factor, ChamberSpec, CollisionMode, DiscretePath};
use crate::rng::{stream_rng, STREAM_MCMC};

/// Sampler configuration; the defaults are what the validation suite
/// uses at desk scale.
#[derive(Debug, Clone, Copy)]
pub struct McmcConfig {
    pub mode: CollisionMode,
    /// Slice proposal step in units of the heat-bath conditional width.
    pub slice_step: f64,
    /// Relaxation of loop-shift proposals toward the current offset.
    pub shift_alpha: f64,
    /// Warm-up sweeps run by `init_state` (with tuning when enabled).
    pub pre_sweeps: usize,
    pub tune: bool,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            mode: CollisionMode::CrossingCorrected,
            slice_step: 2.0,
            shift_alpha: 0.5,
            pre_sweeps: 500,
            tune: true,
        }
    }
}

/// State of one chain: N absolute-position closed loops, always inside
/// the chamber.
pub struct ChainState {
    params: ModelParams,
    spec: ChamberSpec,
    m: usize,
    dt: f64,
    mode: CollisionMode,
    /// `slices[j][i]`: position of path j at slice i.
    slices: Vec<Vec<f64>>,
    sites: Vec<f64>,
    rng: ChaCha8Rng,
    sweep_count: u64,
    // Gaussian-part constants
    step_a: f64,
    step_b: f64,
    hb_sd: f64,
    shift_sd: f64,
    collective_sd: f64,
    slice_step: f64,
    shift_alpha: f64,
    collective_alpha: f64,
    accepted_slice: u64,
    proposed_slice: u64,
    accepted_shift: u64,
    proposed_shift: u64,
    accepted_collective: u64,
    proposed_collective: u64,
}

/// Fresh chain: constant loops at the lattice sites (always inside the
/// chamber), then `cfg.pre_sweeps` warm-up sweeps with step tuning.
pub fn init_state(p: &ModelParams, m: usize, seed: u64, cfg: McmcConfig) -> Result<ChainState> {
    init_state_stream(p, m, seed, 0, cfg)
}

/// As [`init_state`], with an explicit chain index for parallel chains
/// (chain `k` uses RNG stream `STREAM_MCMC + k`).
pub fn init_state_stream(
    p: &ModelParams,
    m: usize,
    seed: u64,
    chain: u64,
    cfg: McmcConfig,
) -> Result<ChainState> {
    if m < 2 {
        return Err(Error::Domain(format!("need at least 2 slices, got {m}")));
    }
    let law = BridgeLaw::closed(p.beta(), p.rho(), m)?;
    let step = law.step_coeffs();
    let sites = p.lattice().sites().to_vec();
    let slices = sites.iter().map(|&s| vec![s; m]).collect();
    // heat-bath conditional width: precision 2 a
    let hb_sd = (1.0 / (2.0 * step.a)).sqrt();
    // loop-mean conditional given the shape: N(0, 1/(2 M (a - b)))
    let shift_sd = (1.0 / (2.0 * m as f64 * (step.a - step.b))).sqrt();
    // same for the crystal's collective offset: N independent springs
    let collective_sd = shift_sd / (sites.len() as f64).sqrt();
    let mut state = ChainState {
        params: *p,
        spec: ChamberSpec::from_params(p),
        m,
        dt: p.beta() / m as f64,
        mode: cfg.mode,
        slices,
        sites,
        rng: stream_rng(seed, STREAM_MCMC + chain),
        sweep_count: 0,
        step_a: step.a,
        step_b: step.b,
        hb_sd,
        shift_sd,
        collective_sd,
        slice_step: cfg.slice_step.clamp(0.01, 50.0),
        shift_alpha: cfg.shift_alpha.clamp(0.0, 0.995),
        collective_alpha: cfg.shift_alpha.clamp(0.0, 0.995),
        accepted_slice: 0,
        proposed_slice: 0,
        accepted_shift: 0,
        proposed_shift: 0,
        accepted_collective: 0,
        proposed_collective: 0,
    };
    debug_assert!(state.chamber_weight() > 0.0);
    let tune_interval = 50;
    for k in 0..cfg.pre_sweeps {
        state.sweep();
        if cfg.tune && k % tune_interval == tune_interval - 1 {
            state.retune();
        }
    }
    state.reset_counters();
    Ok(state)
}

impl ChainState {
    pub fn params(&self) -> &ModelParams {
        &self.params
    }
    pub fn slices_per_path(&self) -> usize {
        self.m
    }
    pub fn sweep_count(&self) -> u64 {
        self.sweep_count
    }
    pub fn slice_step(&self) -> f64 {
        self.slice_step
    }
    pub fn shift_alpha(&self) -> f64 {
        self.shift_alpha
    }

    pub fn acceptance_rates(&self) -> (f64, f64) {
        let r = |acc: u64, tot: u64| if tot == 0 { f64::NAN } else { acc as f64 / tot as f64 };
        (r(self.accepted_slice, self.proposed_slice), r(self.accepted_shift, self.proposed_shift))
    }

    fn reset_counters(&mut self) {
        self.accepted_slice = 0;
        self.proposed_slice = 0;
        self.accepted_shift = 0;
        self.proposed_shift = 0;
        self.accepted_collective = 0;
        self.proposed_collective = 0;
    }

    fn retune(&mut self) {
        let (slice_rate, shift_rate) = self.acceptance_rates();
        if !slice_rate.is_nan() {
            if slice_rate < 0.3 {
                self.slice_step = (self.slice_step * 0.7).max(0.01);
            } else if slice_rate > 0.6 {
                self.slice_step = (self.slice_step * 1.4).min(50.0);
            }
        }
        if !shift_rate.is_nan() {
            if shift_rate < 0.3 {
                self.shift_alpha = (self.shift_alpha + 0.6 * (1.0 - self.shift_alpha)).min(0.995);
            } else if shift_rate > 0.6 {
                self.shift_alpha *= 0.7;
            }
        }
        let coll_rate = if self.proposed_collective == 0 {
            f64::NAN
        } else {
            self.accepted_collective as f64 / self.proposed_collective as f64
        };
        if !coll_rate.is_nan() {
            if coll_rate < 0.3 {
                self.collective_alpha =
                    (self.collective_alpha + 0.6 * (1.0 - self.collective_alpha)).min(0.995);
            } else if coll_rate > 0.6 {
                self.collective_alpha *= 0.7;
            }
        }
        self.reset_counters();
    }

    /// Current paths as [`DiscretePath`]s (copies).
    pub fn paths(&self) -> Vec<DiscretePath> {
        self.slices
            .iter()
            .map(|s| DiscretePath::closed_unchecked(s.clone(), self.dt))
            .collect()
    }

    /// Full chamber weight of the current state (invariant: positive).
    pub fn chamber_weight(&self) -> f64 {
        in_chamber(&self.paths(), &self.spec, self.mode).expect("state paths are consistent")
    }

    /// Weight of the chamber factors that involve slice `i` of path `j`
    /// (the two slice intervals around `i`, against both neighbors or
    /// walls), with `x` substituted at that slice. Strict mode: the
    /// ordering indicator at slice `i` alone.
    fn local_weight(&self, j: usize, i: usize, x: f64) -> f64 {
        let n = self.slices.len();
        let m = self.m;
        let prev_i = (i + m - 1) % m;
        let next_i = (i + 1) % m;
        let lower =
            |idx: usize| if j == 0 { self.spec.a } else { self.slices[j - 1][idx] };
        let upper =
            |idx: usize| if j == n - 1 { self.spec.b } else { self.slices[j + 1][idx] };
        let d_lo = x - lower(i);
        let d_hi = upper(i) - x;
        if d_lo <= 0.0 || d_hi <= 0.0 {
            return 0.0;
        }
        match self.mode {
            CollisionMode::Strict => 1.0,
            CollisionMode::CrossingCorrected => {
                // the gap to a neighbor path diffuses twice as fast as
                // the gap to a wall
                let dt_lo = if j == 0 { 0.5 * self.dt } else { self.dt };
                let dt_hi = if j == n - 1 { 0.5 * self.dt } else { self.dt };
                let cur = &self.slices[j];
                let d_lo_prev = cur[prev_i] - lower(prev_i);
                let d_lo_next = cur[next_i] - lower(next_i);
                let d_hi_prev = upper(prev_i) - cur[prev_i];
                let d_hi_next = upper(next_i) - cur[next_i];
                no_cross_factor(d_lo_prev * d_lo / dt_lo)
                    * no_cross_factor(d_lo * d_lo_next / dt_lo)
                    * no_cross_factor(d_hi_prev * d_hi / dt_hi)
                    * no_cross_factor(d_hi * d_hi_next / dt_hi)
            }
        }
    }

    /// Chamber factors involving path `j` as a whole, with the path
    /// shifted by `delta` (0 for the current weight).
    fn path_weight(&self, j: usize, delta: f64) -> f64 {
        let n = self.slices.len();
        let m = self.m;
        let cur = &self.slices[j];
        let mut gaps_lo = Vec::with_capacity(m);
        let mut gaps_hi = Vec::with_capacity(m);
        for i in 0..m {
            let x = cur[i] + delta;
            let lo = if j == 0 { self.spec.a } else { self.slices[j - 1][i] };
            let hi = if j == n - 1 { self.spec.b } else { self.slices[j + 1][i] };
            let dl = x - lo;
            let dh = hi - x;
            if dl <= 0.0 || dh <= 0.0 {
                return 0.0;
            }
            gaps_lo.push(dl);
            gaps_hi.push(dh);
        }
        let mut w = 1.0;
        if self.mode == CollisionMode::CrossingCorrected {
            let dt_lo = if j == 0 { 0.5 * self.dt } else { self.dt };
            let dt_hi = if j == n - 1 { 0.5 * self.dt } else { self.dt };
            for i in 0..m {
                let k = (i + 1) % m;
                w *= no_cross_factor(gaps_lo[i] * gaps_lo[k] / dt_lo);
                w *= no_cross_factor(gaps_hi[i] * gaps_hi[k] / dt_hi);
            }
        }
        w
    }

    /// Wall factors (outermost paths against `a` and `b`) with every
    /// path shifted by `delta`; the inter-path gaps are invariant under
    /// a collective translation, so this is the whole chamber ratio.
    fn wall_weight(&self, delta: f64) -> f64 {
        let n = self.slices.len();
        let m = self.m;
        let lo_path = &self.slices[0];
        let hi_path = &self.slices[n - 1];
        let mut gaps_lo = Vec::with_capacity(m);
        let mut gaps_hi = Vec::with_capacity(m);
        for i in 0..m {
            let dl = lo_path[i] + delta - self.spec.a;
            let dh = self.spec.b - (hi_path[i] + delta);
            if dl <= 0.0 || dh <= 0.0 {
                return 0.0;
            }
            gaps_lo.push(dl);
            gaps_hi.push(dh);
        }
        let mut w = 1.0;
        if self.mode == CollisionMode::CrossingCorrected {
            let dt_eff = 0.5 * self.dt;
            for i in 0..m {
                let k = (i + 1) % m;
                w *= no_cross_factor(gaps_lo[i] * gaps_lo[k] / dt_eff);
                w *= no_cross_factor(gaps_hi[i] * gaps_hi[k] / dt_eff);
            }
        }
        w
    }

    /// One Metropolis pass: per path, a heat-bath-relaxed update of
    /// every slice, then one whole-loop shift, then one collective
    /// translation of the crystal (the slow phase mode).
    pub fn sweep(&mut self) {
        let n = self.slices.len();
        let m = self.m;
        for j in 0..n {
            let site = self.sites[j];
            for i in 0..m {
                let prev = self.slices[j][(i + m - 1) % m] - site;
                let next = self.slices[j][(i + 1) % m] - site;
                let x_old = self.slices[j][i];
                let u_old = x_old - site;
                let noise: f64 = self.rng.sample(StandardNormal);
                let x_new = x_old + self.slice_step * self.hb_sd * noise;
                let u_new = x_new - site;
                self.proposed_slice += 1;
                // exact ratio of the two Mehler factors touching slice i
                let log_gauss = -self.step_a * (u_new * u_new - u_old * u_old)
                    + self.step_b * (u_new - u_old) * (prev + next);
                let w_old = self.local_weight(j, i, x_old);
                let w_new = self.local_weight(j, i, x_new);
                let ratio = log_gauss.exp() * if w_old > 0.0 { w_new / w_old } else { 0.0 };
                let accept =
                    w_new > 0.0 && (ratio >= 1.0 || self.rng.random::<f64>() < ratio);
                if accept {
                    self.slices[j][i] = x_new;
                    self.accepted_slice += 1;
                }
            }
            // whole-loop shift via the offset conditional
            let mean_off: f64 =
                self.slices[j].iter().map(|&x| x - site).sum::<f64>() / m as f64;
            let a = self.shift_alpha;
            let noise: f64 = self.rng.sample(StandardNormal);
            let new_off = a * mean_off + (1.0 - a * a).sqrt() * self.shift_sd * noise;
            let delta = new_off - mean_off;
            self.proposed_shift += 1;
            let w_old = self.path_weight(j, 0.0);
            let w_new = self.path_weight(j, delta);
            let accept =
                w_new > 0.0 && (w_new >= w_old || self.rng.random::<f64>() < w_new / w_old);
            if accept {
                for x in self.slices[j].iter_mut() {
                    *x += delta;
                }
                self.accepted_shift += 1;
            }
        }
        // collective translation: Gaussian conditional of the mean
        // offset, chamber ratio from the wall factors alone
        {
            let nm = (n * m) as f64;
            let mean_off: f64 = self
                .slices
                .iter()
                .zip(&self.sites)
                .map(|(s, &site)| s.iter().map(|&x| x - site).sum::<f64>())
                .sum::<f64>()
                / nm;
            let a = self.collective_alpha;
            let noise: f64 = self.rng.sample(StandardNormal);
            let new_off = a * mean_off + (1.0 - a * a).sqrt() * self.collective_sd * noise;
            let delta = new_off - mean_off;
            self.proposed_collective += 1;
            let w_old = self.wall_weight(0.0);
            let w_new = self.wall_weight(delta);
            let accept =
                w_new > 0.0 && (w_new >= w_old || self.rng.random::<f64>() < w_new / w_old);
            if accept {
                for path in self.slices.iter_mut() {
                    for x in path.iter_mut() {
                        *x += delta;
                    }
                }
                self.accepted_collective += 1;
            }
        }
        self.sweep_count += 1;
    }

    /// Slice-0 positions as a point configuration.
    pub fn configuration(&self) -> PointConfiguration {
        let positions: Vec<f64> = self.slices.iter().map(|s| s[0]).collect();
        PointConfiguration::new(positions, (self.spec.a, self.spec.b))
            .expect("chamber keeps slice-0 strictly ordered")
    }

    #[cfg(test)]
    pub(crate) fn slice_value(&self, j: usize, i: usize) -> f64 {
        self.slices[j][i]
    }
}

/// Stream diagnostics attached to a sampling run.
#[derive(Debug, Clone, Serialize)]
pub struct McmcDiagnostics {
    pub sweeps: u64,
    pub thinning: usize,
    pub slice_acceptance: f64,
    pub shift_acceptance: f64,
    pub collective_acceptance: f64,
    pub slice_step: f64,
    pub shift_alpha: f64,
    pub collective_alpha: f64,
    /// Integrated autocorrelation time of the bulk-mean displacement,
    /// in sweeps.
    pub autocorrelation_time: f64,
    /// Set when the autocorrelation time exceeds the thinning interval.
    pub thinning_warning: bool,
}

/// Emits `n_samples` slice-0 configurations every `thinning` sweeps and
/// estimates the integrated autocorrelation time of the mean
/// displacement.
pub fn sample_configurations(
    state: &mut ChainState,
    n_samples: usize,
    thinning: usize,
) -> Result<(Vec<PointConfiguration>, McmcDiagnostics)> {
    if n_samples == 0 || thinning == 0 {
        return Err(Error::Domain("need n_samples >= 1 and thinning >= 1".into()));
    }
    let mut configs = Vec::with_capacity(n_samples);
    let mut disp = Vec::with_capacity(n_samples);
    let sites = state.sites.clone();
    for _ in 0..n_samples {
        for _ in 0..thinning {
            state.sweep();
        }
        let c = state.configuration();
        let mean_y: f64 = c
            .positions()
            .iter()
            .zip(&sites)
            .map(|(&x, &site)| x - site)
            .sum::<f64>()
            / sites.len() as f64;
        disp.push(mean_y);
        configs.push(c);
    }
    let tau_samples = integrated_autocorrelation(&disp);
    let (slice_acceptance, shift_acceptance) = state.acceptance_rates();
    let collective_acceptance = if state.proposed_collective == 0 {
        f64::NAN
    } else {
        state.accepted_collective as f64 / state.proposed_collective as f64
    };
    let diag = McmcDiagnostics {
        sweeps: state.sweep_count(),
        thinning,
        slice_acceptance,
        shift_acceptance,
        collective_acceptance,
        slice_step: state.slice_step,
        shift_alpha: state.shift_alpha,
        collective_alpha: state.collective_alpha,
        autocorrelation_time: tau_samples * thinning as f64,
        thinning_warning: tau_samples > 1.5,
    };
    Ok((configs, diag))
}

/// Windowed estimator of the integrated autocorrelation time
/// `1 + 2 sum rho_k`; the window grows until it reaches five times the
/// running estimate.
pub fn integrated_autocorrelation(series: &[f64]) -> f64 {
    let n = series.len();
    if n < 8 {
        return f64::NAN;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for k in 1..n / 4 {
        let mut c = 0.0;
        for i in 0..n - k {
            c += (series[i] - mean) * (series[i + k] - mean);
        }
        c /= (n - k) as f64 * var;
        tau += 2.0 * c;
        if k as f64 >= 5.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Exact draws from the conditioned ensemble by rejection for tiny N:
/// propose N independent site-centered loops, accept with the chamber
/// weight. The unbiased reference the Markov chain is validated
/// against.
pub fn rejection_sample_configurations(
    p: &ModelParams,
    m: usize,
    n_samples: usize,
    seed: u64,
    mode: CollisionMode,
) -> Result<Vec<PointConfiguration>> {
    if p.n_particles() > 3 {
        return Err(Error::Domain(
            "rejection sampling is the exactness oracle for N <= 3 only".into(),
        ));
    }
    let law = BridgeLaw::closed(p.beta(), p.rho(), m)?;
    let spec = ChamberSpec::from_params(p);
    let sites = p.lattice().sites().to_vec();
    let mut rng = stream_rng(seed, STREAM_MCMC);
    let mut out = Vec::with_capacity(n_samples);
    let mut attempts: u64 = 0;
    while out.len() < n_samples {
        attempts += 1;
        if attempts > 200_000_000 {
            return Err(Error::InsufficientSamples(
                "rejection sampler acceptance too low for this coupling".into(),
            ));
        }
        let paths: Vec<DiscretePath> = sites
            .iter()
            .map(|&s| law.sample_closed_loop(&mut rng).shifted(s))
            .collect();
        let w = in_chamber(&paths, &spec, mode)?;
        if w > 0.0 && (w >= 1.0 || rng.random::<f64>() < w) {
            let positions: Vec<f64> = paths.iter().map(|p| p.slices()[0]).collect();
            out.push(PointConfiguration::new(positions, (spec.a, spec.b))?);
        }
    }
    Ok(out)
}
