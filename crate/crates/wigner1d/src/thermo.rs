//! Free energy, partition function and surface corrections assembled
//! from the transfer spectrum.
//!
//! Everything is handled in log space: the oscillator normalization to
//! the power N and the chamber amplitude both underflow at modest N.
//! The bulk free energy per particle splits exactly into three recorded
//! terms,
//!
//! ```text
//! f = 1/(12 rho)                                  (ground)
//!   + sqrt(rho/2) + log(1 - exp(-beta sqrt(2 rho))) / beta   (oscillator)
//!   - log z0 / beta                               (spectral)
//! ```
//!
//! and the oscillator term is `-log c(beta, rho) / beta`, which is
//! asserted as an identity rather than re-derived.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{ground_energy, normalization_c, omega};
use crate::model::ModelParams;
use crate::transfer::TransferSpectrum;

/// Bulk free energy per particle with its three exact summands.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FreeEnergyReport {
    pub f: f64,
    pub ground: f64,
    pub oscillator: f64,
    pub spectral: f64,
    pub z0: f64,
    /// Propagated jackknife uncertainty `z0_se / (beta z0)`; zero when
    /// the spectrum carried no error estimate.
    pub f_error: f64,
    pub beta: f64,
    pub rho: f64,
}

/// Oscillator term `sqrt(rho/2) + log(1 - exp(-beta sqrt(2 rho)))/beta`.
pub fn oscillator_term(beta: f64, rho: f64) -> f64 {
    ground_energy(rho) + (-(-beta * omega(rho)).exp_m1()).ln() / beta
}

/// Assembles the free energy from a spectrum computed at matching
/// parameters; a mismatch in `(beta, rho)` is a domain error.
pub fn free_energy(beta: f64, rho: f64, spectrum: &TransferSpectrum) -> Result<FreeEnergyReport> {
    if (spectrum.beta - beta).abs() > 1e-12 * beta || (spectrum.rho - rho).abs() > 1e-12 * rho {
        return Err(Error::Domain(format!(
            "spectrum was computed at (beta, rho) = ({}, {}), requested ({beta}, {rho})",
            spectrum.beta, spectrum.rho
        )));
    }
    let ground = 1.0 / (12.0 * rho);
    let oscillator = oscillator_term(beta, rho);
    let spectral = -spectrum.z0.ln() / beta;
    let f_error = spectrum.z0_se.unwrap_or(0.0) / (beta * spectrum.z0);
    Ok(FreeEnergyReport {
        f: ground + oscillator + spectral,
        ground,
        oscillator,
        spectral,
        z0: spectrum.z0,
        f_error,
        beta,
        rho,
    })
}

/// `log Z_N = N log c(beta, rho) - beta N / (12 rho) + log <F, K^(N-1) G>`.
/// A nonpositive amplitude signals an ensemble too small to see the
/// chamber and is reported as an estimation failure.
pub fn partition_function_log(p: &ModelParams, amplitude: f64) -> Result<f64> {
    if !(amplitude > 0.0) {
        return Err(Error::Estimate(format!(
            "chamber amplitude {amplitude} is not positive; enlarge the ensemble"
        )));
    }
    let n = p.n_particles() as f64;
    Ok(n * normalization_c(p.beta(), p.rho()).ln() - p.beta() * n / (12.0 * p.rho())
        + amplitude.ln())
}

/// One row of the surface-correction analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceEntry {
    pub n: usize,
    pub log_z: f64,
    /// `-(log Z_N + beta N f)`, the sequence whose limit is `beta s`.
    pub correction: f64,
}

/// Extrapolated surface correction with the fitted convergence rate.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurfaceReport {
    pub entries: Vec<SurfaceEntry>,
    /// Extrapolated `s` (the corrections converge to `beta s`).
    pub s: f64,
    /// Fitted geometric decay rate of the correction differences per
    /// unit N; `f64::INFINITY` for an (numerically) constant sequence.
    pub rate: f64,
    /// True when the sequence was constant to rounding, so the rate is
    /// exact rather than fitted.
    pub rate_is_exact: bool,
    /// Set when successive |differences| grow beyond what the supplied
    /// error bars (or, without them, a factor 2) allow. Diagnostic only.
    pub noise_flagged: bool,
}

/// Analyzes the sequence `-(log Z_N + beta N f)` for increasing N:
/// least-squares fit of `log |differences|` against N for the rate,
/// geometric-tail extrapolation for `s`. Needs at least 4 entries.
pub fn surface_correction(
    series: &[(usize, f64)],
    f_bulk: f64,
    beta: f64,
    errors: Option<&[f64]>,
) -> Result<SurfaceReport> {
    if series.len() < 4 {
        return Err(Error::Domain(format!(
            "surface extrapolation needs >= 4 partition values, got {}",
            series.len()
        )));
    }
    for w in series.windows(2) {
        if w[1].0 <= w[0].0 {
            return Err(Error::Domain("particle numbers must be strictly increasing".into()));
        }
    }
    if let Some(e) = errors {
        if e.len() != series.len() {
            return Err(Error::Domain("one error bar per series entry required".into()));
        }
    }
    let entries: Vec<SurfaceEntry> = series
        .iter()
        .map(|&(n, log_z)| SurfaceEntry {
            n,
            log_z,
            correction: -(log_z + beta * n as f64 * f_bulk),
        })
        .collect();

    let scale = entries.iter().map(|e| e.correction.abs()).fold(1e-300, f64::max);
    let diffs: Vec<(f64, f64)> = entries
        .windows(2)
        .map(|w| {
            let mid_n = 0.5 * (w[0].n + w[1].n) as f64;
            ((w[1].correction - w[0].correction) / (w[1].n - w[0].n) as f64, mid_n)
        })
        .collect();

    let constant = diffs.iter().all(|&(d, _)| d.abs() <= 1e-12 * scale);
    if constant {
        return Ok(SurfaceReport {
            s: entries.last().unwrap().correction / beta,
            rate: f64::INFINITY,
            rate_is_exact: true,
            noise_flagged: false,
            entries,
        });
    }

    // weighted least squares of log|d| on N (all weights 1; bins with
    // zero difference are skipped)
    let pts: Vec<(f64, f64)> = diffs
        .iter()
        .filter(|&&(d, _)| d.abs() > 1e-14 * scale)
        .map(|&(d, n)| (n, d.abs().ln()))
        .collect();
    let rate = if pts.len() >= 2 { -fit_slope(&pts) } else { f64::INFINITY };

    // noise flag: |differences| should not grow along the sequence
    let mut noise_flagged = false;
    for (k, w) in diffs.windows(2).enumerate() {
        let (d0, d1) = (w[0].0.abs(), w[1].0.abs());
        let allowance = match errors {
            Some(e) => 2.0 * (e[k] + 2.0 * e[k + 1] + e.get(k + 2).copied().unwrap_or(0.0)),
            None => d0, // without error bars, flag growth beyond a factor 2
        };
        if d1 > d0 + allowance {
            noise_flagged = true;
        }
    }

    // geometric tail: remaining sum after the last entry is d_last q/(1-q)
    let last = entries.last().unwrap().correction;
    let d_last = diffs.last().unwrap().0;
    let q = (-rate).exp();
    let s_beta = if rate.is_finite() && q < 1.0 { last + d_last * q / (1.0 - q) } else { last };
    Ok(SurfaceReport {
        s: s_beta / beta,
        rate,
        rate_is_exact: false,
        noise_flagged,
        entries,
    })
}

/// Everything criterion-level surface analysis needs from one ensemble:
/// the spectrum, the free energy, amplitudes and partition values over
/// a range of N, the correction fit, and a delete-block jackknife of
/// the extrapolated `s`.
#[derive(Debug, Clone)]
pub struct SurfaceSweep {
    pub free_energy: FreeEnergyReport,
    pub gap: f64,
    pub report: SurfaceReport,
    /// Jackknife standard error of `s` (node blocks), when requested.
    pub s_se: Option<f64>,
}

/// Runs the amplitude route `N = n_min..=n_max` on one operator: one
/// spectral computation, then `<F, K^(N-1) G>` for all N from a single
/// chain of operator applications. The jackknife repeats the whole
/// pipeline (eigenvalue included) on delete-block subensembles.
pub fn surface_sweep(
    op: &crate::transfer::TransferOperator,
    tol: f64,
    max_iter: usize,
    n_min: usize,
    n_max: usize,
    jackknife_blocks: Option<usize>,
) -> Result<SurfaceSweep> {
    use crate::transfer::{jackknife_se, principal_eigenpair};
    if n_min < 2 || n_max < n_min + 3 {
        return Err(Error::Domain(
            "surface sweep needs n_min >= 2 and at least 4 values of N".into(),
        ));
    }
    let ens = op.ensemble();
    let (beta, rho) = (ens.beta(), ens.rho());
    let spectrum = principal_eigenpair(op, tol, max_iter)?;
    let fe = free_energy(beta, rho, &spectrum)?;

    let series = amplitude_series(op, n_min, n_max, 0..0)?;
    let report = surface_correction(&series_to_logz(&series, beta, rho)?, fe.f, beta, None)?;

    let s_se = match jackknife_blocks {
        Some(blocks) if blocks >= 2 => {
            let s = op.len();
            let blocks = blocks.min(s / 2);
            let mut estimates = Vec::with_capacity(blocks);
            for bk in 0..blocks {
                let lo = (bk * s / blocks) & !1usize;
                let hi = (((bk + 1) * s / blocks) & !1usize).max(lo + 2).min(s);
                let (z0_b, _, _, _) = crate::transfer::power_z0(op, lo..hi, tol, max_iter)?;
                let f_b = 1.0 / (12.0 * rho) + oscillator_term(beta, rho) - z0_b.ln() / beta;
                let series_b = amplitude_series(op, n_min, n_max, lo..hi)?;
                let rep_b =
                    surface_correction(&series_to_logz(&series_b, beta, rho)?, f_b, beta, None)?;
                estimates.push(rep_b.s);
            }
            Some(jackknife_se(&estimates))
        }
        _ => None,
    };

    Ok(SurfaceSweep { free_energy: fe, gap: spectrum.gap, report, s_se })
}

/// `(N, amplitude)` for a range of N from one chain of applications.
fn amplitude_series(
    op: &crate::transfer::TransferOperator,
    n_min: usize,
    n_max: usize,
    skip: std::ops::Range<usize>,
) -> Result<Vec<(usize, f64)>> {
    let ens = op.ensemble();
    let (f, g) = ens.boundary_vectors(op.mode());
    let s = op.len();
    let active = (s - skip.len()) as f64;
    let mut cur = g;
    for i in skip.clone() {
        cur[i] = 0.0;
    }
    let mut next = vec![0.0; s];
    let mut out = Vec::new();
    for n in 1..=n_max {
        if n >= 2 {
            op.apply_masked(&cur, &mut next, skip.clone());
            std::mem::swap(&mut cur, &mut next);
        }
        if n >= n_min {
            let mut acc = 0.0;
            for i in 0..s {
                if !skip.contains(&i) {
                    acc += f[i] * cur[i];
                }
            }
            out.push((n, acc / active));
        }
    }
    Ok(out)
}

fn series_to_logz(series: &[(usize, f64)], beta: f64, rho: f64) -> Result<Vec<(usize, f64)>> {
    series
        .iter()
        .map(|&(n, amp)| {
            let p = ModelParams::neutral_box(beta, rho, n)?;
            Ok((n, partition_function_log(&p, amp)?))
        })
        .collect()
}

fn fit_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::CollisionMode;
    use crate::transfer::TransferSpectrum;

    fn fake_spectrum(beta: f64, rho: f64, z0: f64) -> TransferSpectrum {
        TransferSpectrum {
            z0,
            z1_abs: 0.5 * z0,
            gap: 2f64.ln(),
            psi0: vec![1.0; 4],
            psi0_tilde: vec![1.0; 4],
            residual: 0.0,
            iterations: 1,
            z0_se: Some(1e-4),
            beta,
            rho,
            lambda: 1.0 / rho,
            m: 8,
            s: 4,
            seed: 0,
            mode: CollisionMode::Strict,
        }
    }

    #[test]
    fn terms_sum_exactly_and_oscillator_cancels_log_c() {
        let (beta, rho) = (1.3, 0.7);
        let rep = free_energy(beta, rho, &fake_spectrum(beta, rho, 0.8)).unwrap();
        assert_eq!(rep.f, rep.ground + rep.oscillator + rep.spectral);
        let c = normalization_c(beta, rho);
        assert!((rep.oscillator + c.ln() / beta).abs() < 1e-12);
        assert!((rep.f_error - 1e-4 / (beta * 0.8)).abs() < 1e-18);
    }

    #[test]
    fn forced_unit_z0_drops_spectral_term() {
        let (beta, rho) = (1.0, 1.0);
        let rep = free_energy(beta, rho, &fake_spectrum(beta, rho, 1.0)).unwrap();
        assert_eq!(rep.spectral, 0.0);
        assert_eq!(rep.f, rep.ground + rep.oscillator);
    }

    #[test]
    fn parameter_mismatch_is_rejected() {
        assert!(free_energy(1.0, 2.0, &fake_spectrum(1.0, 1.0, 0.9)).is_err());
        assert!(free_energy(2.0, 1.0, &fake_spectrum(1.0, 1.0, 0.9)).is_err());
    }

    #[test]
    fn partition_log_reduces_when_amplitude_is_one() {
        let p = ModelParams::neutral_box(1.0, 1.0, 3).unwrap();
        let lz = partition_function_log(&p, 1.0).unwrap();
        let expect = 3.0 * normalization_c(1.0, 1.0).ln() - 3.0 / 12.0;
        assert!((lz - expect).abs() < 1e-14);
        assert!(partition_function_log(&p, 0.0).is_err());
        assert!(partition_function_log(&p, -0.5).is_err());
    }

    #[test]
    fn constant_series_is_exact() {
        let series: Vec<(usize, f64)> = (2..=8).map(|n| (n, -1.7 - 0.3 * n as f64)).collect();
        // with f chosen so corrections are constant: log Z = -(beta n f) - beta s
        let rep = surface_correction(&series, 0.3, 1.0, None).unwrap();
        assert!(rep.rate_is_exact);
        assert!(rep.rate.is_infinite());
        assert!((rep.s - 1.7).abs() < 1e-10);
        assert!(!rep.noise_flagged);
    }

    #[test]
    fn synthetic_geometric_tail_is_recovered() {
        let (beta, f, s, a, rate) = (1.0, 0.4, 2.2, 0.9, 0.6);
        let series: Vec<(usize, f64)> = (2..=12)
            .map(|n| {
                let c_n = beta * s + a * (-rate * n as f64).exp();
                (n, -(c_n + beta * n as f64 * f))
            })
            .collect();
        let rep = surface_correction(&series, f, beta, None).unwrap();
        assert!((rep.rate - rate).abs() < 0.1 * rate, "rate {} vs {rate}", rep.rate);
        assert!((rep.s - s).abs() < 1e-3, "s {} vs {s}", rep.s);
        assert!(!rep.noise_flagged);
    }

    #[test]
    fn rank_one_inputs_give_closed_form_surface() {
        // log Z_N built exactly from the rank-one asymptotic; the
        // corrections are then constant at log z0 - log<F,psi> - log<psi~,G>.
        let (beta, rho) = (1.0, 1.0);
        let (z0, fp, pg) = (0.62f64, 0.41f64, 0.37f64);
        let log_c = normalization_c(beta, rho).ln();
        let f_bulk = 1.0 / (12.0 * rho) + oscillator_term(beta, rho) - z0.ln() / beta;
        let series: Vec<(usize, f64)> = (2..=9)
            .map(|n| {
                let nf = n as f64;
                (n, nf * log_c - beta * nf / (12.0 * rho) + (nf - 1.0) * z0.ln() + (fp * pg).ln())
            })
            .collect();
        let rep = surface_correction(&series, f_bulk, beta, None).unwrap();
        let expect = (z0.ln() - fp.ln() - pg.ln()) / beta;
        assert!(rep.rate_is_exact);
        assert!((rep.s - expect).abs() < 1e-9, "s {} vs {expect}", rep.s);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let series = vec![(2, -1.0), (3, -1.5), (4, -2.0)];
        assert!(surface_correction(&series, 0.3, 1.0, None).is_err());
    }

    #[test]
    fn noisy_growth_is_flagged_not_fatal() {
        let series = vec![(2, -1.0), (3, -1.4), (4, -1.5), (5, -2.4)];
        let rep = surface_correction(&series, 0.0, 1.0, None).unwrap();
        assert!(rep.noise_flagged);
    }
}
