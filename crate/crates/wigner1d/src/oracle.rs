//! Independent ground-truth computations at desk scale.
//!
//! Nothing here touches the transfer-operator or Monte Carlo machinery:
//! partition functions and densities for one and two particles come
//! from a finite-difference Hamiltonian with Dirichlet walls (and, for
//! two fermions, Dirichlet on the collision diagonal), and free
//! non-colliding bridge probabilities come from Karlin-McGregor
//! determinants of heat kernels. These are the reference values the
//! rest of the crate is validated against.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{potential_raw, ModelParams};

/// Fixed-order Gauss-Legendre quadrature of `f` over `[a, b]`.
/// Nodes and weights are generated by Newton iteration on the Legendre
/// recurrence; `n` of a few hundred resolves every smooth Gaussian-type
/// integrand in this crate far below 1e-10.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_rule(n);
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    nodes
        .iter()
        .zip(&weights)
        .map(|(&x, &w)| w * f(mid + half * x))
        .sum::<f64>()
        * half
}

/// Nodes and weights of the `n`-point rule on `[-1, 1]`.
pub fn gauss_legendre_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// `log(sum_k exp(v_k))` without overflow.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Dense symmetric eigensolve of the 1D finite-difference Hamiltonian
/// `-(1/2) d^2/dx^2 + V` with Dirichlet walls at `a` and `b`, on `n`
/// interior points. Returns `(energies ascending, eigenvectors, h)`;
/// eigenvectors are l2-normalized columns (continuum-normalize by
/// dividing by `sqrt(h)`).
pub fn fd_eigensolve_1d<V: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    n: usize,
    v: V,
) -> (Vec<f64>, DMatrix<f64>, f64) {
    assert!(n >= 3 && b > a);
    let h = (b - a) / (n + 1) as f64;
    let kin = 1.0 / (h * h);
    let mut ham = DMatrix::zeros(n, n);
    for i in 0..n {
        let x = a + (i + 1) as f64 * h;
        ham[(i, i)] = kin + v(x);
        if i + 1 < n {
            ham[(i, i + 1)] = -0.5 * kin;
            ham[(i + 1, i)] = -0.5 * kin;
        }
    }
    let eig = ham.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (energies, vecs, h)
}

/// Output of [`diagonalize_small`].
#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Richardson-extrapolated `log Z_N`.
    pub log_z: f64,
    /// Extrapolation error estimate `|fine - coarse| / 3`.
    pub extrapolation_error: f64,
    pub grid_coarse: usize,
    pub grid_fine: usize,
    /// One-particle density on the fine grid: `(x, rho1(x; x))`.
    pub rho1: Vec<(f64, f64)>,
    /// Diagonal two-point density on the fine grid (N = 2 only):
    /// row-major `rho2[(i, j)] = rho2(x_i, x_j; x_i, x_j)`.
    pub rho2_diag: Option<DMatrix<f64>>,
}

/// Exact diagonalization of the one- or two-fermion jellium Hamiltonian
/// on `[a, b]` with Dirichlet walls. For two fermions the antisymmetric
/// sector is the Weyl chamber `x1 < x2` with a Dirichlet collision
/// diagonal, realized on ordered grid pairs. `log Z` is Richardson
/// extrapolated over the given grid and its halved-step refinement;
/// a disagreement above 5% is reported as an error carrying both
/// estimates.
pub fn diagonalize_small(p: &ModelParams, grid_points: usize) -> Result<OracleResult> {
    let n_particles = p.n_particles();
    if n_particles > 2 {
        return Err(Error::Domain(format!(
            "oracle diagonalization supports N <= 2, got N = {n_particles}"
        )));
    }
    if grid_points < 40 {
        return Err(Error::Domain(format!(
            "need at least 40 grid points per dimension, got {grid_points}"
        )));
    }
    let coarse_n = grid_points;
    let fine_n = 2 * grid_points + 1; // halves the step exactly

    let (log_z_coarse, _, _) = solve_small(p, coarse_n)?;
    let (log_z_fine, rho1, rho2) = solve_small(p, fine_n)?;

    let disagreement = (log_z_fine - log_z_coarse).abs();
    let threshold = 0.05 * log_z_fine.abs().max(1e-3);
    if disagreement > threshold {
        return Err(Error::OracleResolution {
            coarse: log_z_coarse,
            fine: log_z_fine,
            disagreement,
            threshold,
        });
    }
    Ok(OracleResult {
        log_z: (4.0 * log_z_fine - log_z_coarse) / 3.0,
        extrapolation_error: disagreement / 3.0,
        grid_coarse: coarse_n,
        grid_fine: fine_n,
        rho1,
        rho2_diag: rho2,
    })
}

#[allow(clippy::type_complexity)]
fn solve_small(
    p: &ModelParams,
    n: usize,
) -> Result<(f64, Vec<(f64, f64)>, Option<DMatrix<f64>>)> {
    let beta = p.beta();
    match p.n_particles() {
        1 => {
            let (energies, vecs, h) = fd_eigensolve_1d(p.a(), p.b(), n, |x| {
                potential_raw(&[x], p).expect("grid point inside the box")
            });
            let log_terms: Vec<f64> = energies.iter().map(|&e| -beta * e).collect();
            let log_z = log_sum_exp(&log_terms);
            // rho1(x) = sum_k w_k phi_k(x)^2 / Z, continuum-normalized
            let mut rho1 = vec![0.0; n];
            for (k, &lt) in log_terms.iter().enumerate() {
                let w = (lt - log_z).exp();
                for i in 0..n {
                    let phi = vecs[(i, k)] / h.sqrt();
                    rho1[i] += w * phi * phi;
                }
            }
            let grid: Vec<(f64, f64)> = (0..n)
                .map(|i| (p.a() + (i + 1) as f64 * h, rho1[i]))
                .collect();
            Ok((log_z, grid, None))
        }
        2 => {
            let (log_z, grid_x, rho1, rho2) = solve_two_fermions(p, n)?;
            let rho1_grid = grid_x.into_iter().zip(rho1).collect();
            Ok((log_z, rho1_grid, Some(rho2)))
        }
        other => Err(Error::Domain(format!("unsupported particle number {other}"))),
    }
}

#[allow(clippy::type_complexity)]
fn solve_two_fermions(
    p: &ModelParams,
    n: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>, DMatrix<f64>)> {
    let h = (p.b() - p.a()) / (n + 1) as f64;
    let xs: Vec<f64> = (0..n).map(|i| p.a() + (i + 1) as f64 * h).collect();
    let kin = 1.0 / (h * h);

    // ordered pairs (i, j), i < j, indexed row-major
    let dim = n * (n - 1) / 2;
    let pair_index = |i: usize, j: usize| -> usize {
        debug_assert!(i < j);
        i * n - i * (i + 1) / 2 + (j - i - 1)
    };
    let mut ham = DMatrix::zeros(dim, dim);
    for i in 0..n {
        for j in (i + 1)..n {
            let r = pair_index(i, j);
            let u = potential_raw(&[xs[i], xs[j]], p)?;
            ham[(r, r)] = 2.0 * kin + u;
            // hops of the first coordinate; hops into the diagonal i' == j vanish
            if i + 1 < j {
                ham[(r, pair_index(i + 1, j))] = -0.5 * kin;
                ham[(pair_index(i + 1, j), r)] = -0.5 * kin;
            }
            // hops of the second coordinate
            if j + 1 < n {
                ham[(r, pair_index(i, j + 1))] = -0.5 * kin;
                ham[(pair_index(i, j + 1), r)] = -0.5 * kin;
            }
        }
    }
    let eig = ham.symmetric_eigen();
    let log_terms: Vec<f64> = eig.eigenvalues.iter().map(|&e| -p.beta() * e).collect();
    let log_z = log_sum_exp(&log_terms);

    // rho2(x_i, x_j) = 2 sum_k w_k |Psi_k(x_i, x_j)|^2, with
    // |Psi(x_i, x_j)|^2 = c_{(ij)}^2 / (2 h^2) off the diagonal.
    let mut rho2 = DMatrix::zeros(n, n);
    for k in 0..dim {
        let w = (log_terms[k] - log_z).exp();
        if w < 1e-300 {
            continue;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let c = eig.eigenvectors[(pair_index(i, j), k)];
                let dens = w * c * c / (h * h); // 2 * c^2/(2h^2)
                rho2[(i, j)] += dens;
                rho2[(j, i)] += dens;
            }
        }
    }
    // rho1(x_i) = int rho2(x_i, y) dy  (equals (N-1) rho1 with N = 2)
    let rho1: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| rho2[(i, j)]).sum::<f64>() * h)
        .collect();
    Ok((log_z, xs, rho1, rho2))
}

/// Free heat kernel of standard Brownian motion (generator `Delta/2`).
pub fn heat_kernel_free(t: f64, x: f64, y: f64) -> f64 {
    let d = y - x;
    (-(d * d) / (2.0 * t)).exp() / (2.0 * std::f64::consts::PI * t).sqrt()
}

/// Dirichlet heat kernel on `(a, b)` by the method of images, truncated
/// once the image terms fall below 1e-14 of nothing at all.
pub fn heat_kernel_box(t: f64, x: f64, y: f64, a: f64, b: f64) -> f64 {
    debug_assert!(b > a);
    if x <= a || x >= b || y <= a || y >= b {
        return 0.0;
    }
    let l = b - a;
    let mut sum = heat_kernel_free(t, x, y) - heat_kernel_free(t, x, 2.0 * a - y);
    let mut k = 1.0;
    loop {
        let direct_p = heat_kernel_free(t, x, y + 2.0 * k * l);
        let direct_m = heat_kernel_free(t, x, y - 2.0 * k * l);
        let image_p = heat_kernel_free(t, x, 2.0 * a - y + 2.0 * k * l);
        let image_m = heat_kernel_free(t, x, 2.0 * a - y - 2.0 * k * l);
        sum += direct_p + direct_m - image_p - image_m;
        if direct_p.max(direct_m).max(image_p).max(image_m) < 1e-14 {
            return sum.max(0.0);
        }
        k += 1.0;
    }
}

/// Karlin-McGregor non-collision amplitude `det [ P_t(x_i, y_j) ]` for
/// Brownian particles started at `starts` and observed at `ends`, with
/// the box-Dirichlet kernel when a box is given. Small determinants
/// (n <= 3) are expanded directly so the antisymmetry under swapping
/// two endpoints is exact in floating point.
pub fn karlin_mcgregor(
    starts: &[f64],
    ends: &[f64],
    t: f64,
    box_walls: Option<(f64, f64)>,
) -> Result<f64> {
    if starts.len() != ends.len() || starts.is_empty() {
        return Err(Error::Domain("starts and ends must have equal nonzero length".into()));
    }
    for w in starts.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Domain("starts must be strictly increasing".into()));
        }
    }
    for w in ends.windows(2) {
        if !(w[0] < w[1]) {
            return Err(Error::Domain("ends must be strictly increasing".into()));
        }
    }
    Ok(km_determinant(starts, ends, t, box_walls))
}

/// The determinant itself, without the monotonicity check on `ends`
/// (used by the antisymmetry test, where a swap is the whole point).
pub fn km_determinant(starts: &[f64], ends: &[f64], t: f64, box_walls: Option<(f64, f64)>) -> f64 {
    let n = starts.len();
    let kernel = |x: f64, y: f64| match box_walls {
        Some((a, b)) => heat_kernel_box(t, x, y, a, b),
        None => heat_kernel_free(t, x, y),
    };
    match n {
        1 => kernel(starts[0], ends[0]),
        2 => {
            kernel(starts[0], ends[0]) * kernel(starts[1], ends[1])
                - kernel(starts[0], ends[1]) * kernel(starts[1], ends[0])
        }
        3 => {
            let m: Vec<f64> = (0..9)
                .map(|k| kernel(starts[k / 3], ends[k % 3]))
                .collect();
            m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6])
                + m[2] * (m[3] * m[7] - m[4] * m[6])
        }
        _ => {
            let m = DMatrix::from_fn(n, n, |i, j| kernel(starts[i], ends[j]));
            m.lu().determinant()
        }
    }
}

/// Probability that independent free Brownian *bridges*
/// `starts[i] -> ends[i]` over `[0, t]` stay strictly ordered (and
/// inside the box, if one is given): the Karlin-McGregor determinant
/// normalized by the product of free bridge masses.
pub fn noncollision_probability_bridges(
    starts: &[f64],
    ends: &[f64],
    t: f64,
    box_walls: Option<(f64, f64)>,
) -> Result<f64> {
    let det = karlin_mcgregor(starts, ends, t, box_walls)?;
    let denom: f64 = starts
        .iter()
        .zip(ends)
        .map(|(&x, &y)| heat_kernel_free(t, x, y))
        .product();
    Ok(det / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{ground_energy, normalization_c, omega};

    #[test]
    fn quadrature_is_accurate() {
        let cubic = gauss_legendre(|x| x * x * x, 0.0, 1.0, 8);
        assert!((cubic - 0.25).abs() < 1e-14);
        let gauss = gauss_legendre(|x| (-x * x / 2.0).exp(), -12.0, 12.0, 200);
        assert!((gauss - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn box_kernel_vanishes_at_walls_and_matches_spectral_sum() {
        let (a, b, t) = (-0.3, 1.1, 0.7);
        assert_eq!(heat_kernel_box(t, 0.4, a, a, b), 0.0);
        let l = b - a;
        let spectral = |x: f64, y: f64| {
            let mut s = 0.0;
            for k in 1..400 {
                let kf = k as f64 * std::f64::consts::PI / l;
                s += 2.0 / l
                    * (kf * (x - a)).sin()
                    * (kf * (y - a)).sin()
                    * (-kf * kf * t / 2.0).exp();
            }
            s
        };
        for &(x, y) in &[(0.0, 0.5), (-0.2, 1.0), (0.9, 0.9)] {
            let im = heat_kernel_box(t, x, y, a, b);
            let sp = spectral(x, y);
            assert!((im - sp).abs() < 1e-12, "({x},{y}): images {im} vs spectral {sp}");
        }
    }

    #[test]
    fn km_single_particle_and_coincident_starts() {
        let v = karlin_mcgregor(&[0.2], &[0.5], 1.0, None).unwrap();
        assert_eq!(v, heat_kernel_free(1.0, 0.2, 0.5));
        assert!(karlin_mcgregor(&[0.2, 0.2], &[0.1, 0.5], 1.0, None).is_err());
        // coincident columns -> zero determinant
        let z = km_determinant(&[0.0, 1.0], &[0.5, 0.5], 1.0, None);
        assert_eq!(z, 0.0);
    }

    #[test]
    fn km_antisymmetric_under_end_swap() {
        let starts = [-0.5, 0.5];
        let v = km_determinant(&starts, &[-0.4, 0.6], 1.0, None);
        let w = km_determinant(&starts, &[0.6, -0.4], 1.0, None);
        assert_eq!(v, -w);
        let s3 = [-1.0, 0.0, 1.0];
        let v3 = km_determinant(&s3, &[-0.9, 0.1, 1.2], 0.8, Some((-3.0, 3.0)));
        let w3 = km_determinant(&s3, &[0.1, -0.9, 1.2], 0.8, Some((-3.0, 3.0)));
        assert_eq!(v3, -w3);
    }

    #[test]
    fn harmonic_reference_trace_on_wide_box() {
        // V = rho (x - m)^2 + 1/(12 rho) on a wide box reproduces
        // Z = c(beta, rho) exp(-beta/(12 rho)) within 1%.
        let (beta, rho, m) = (1.0, 1.0, 0.5);
        let sigma_ho = (1.0 / (2.0 * omega(rho))).sqrt();
        let half_width = 8.0 * sigma_ho;
        let (energies, _, _) = fd_eigensolve_1d(m - half_width, m + half_width, 700, |x| {
            rho * (x - m) * (x - m) + 1.0 / (12.0 * rho)
        });
        let log_terms: Vec<f64> = energies.iter().map(|&e| -beta * e).collect();
        let z = log_sum_exp(&log_terms).exp();
        let z_exact = normalization_c(beta, rho) * (-beta / (12.0 * rho)).exp();
        assert!(
            (z - z_exact).abs() < 0.01 * z_exact,
            "fd {z} vs closed form {z_exact}"
        );
        // ground state energy approaches E0 + 1/(12 rho)
        let e0 = energies[0];
        assert!((e0 - ground_energy(rho) - 1.0 / 12.0).abs() < 1e-3, "E0 = {e0}");
    }

    #[test]
    fn one_particle_density_normalizes() {
        let p = ModelParams::neutral_box(1.0, 1.0, 1).unwrap();
        let res = diagonalize_small(&p, 60).unwrap();
        let h = (p.b() - p.a()) / (res.grid_fine + 1) as f64;
        let mass: f64 = res.rho1.iter().map(|&(_, v)| v * h).sum();
        assert!((mass - 1.0).abs() < 1e-6, "mass = {mass}");
    }

    #[test]
    fn two_fermion_density_vanishes_on_diagonal_and_normalizes() {
        let p = ModelParams::neutral_box(1.0, 1.0, 2).unwrap();
        let res = diagonalize_small(&p, 40).unwrap();
        let rho2 = res.rho2_diag.as_ref().unwrap();
        let n = rho2.nrows();
        let h = (p.b() - p.a()) / (res.grid_fine + 1) as f64;
        for i in 0..n {
            assert_eq!(rho2[(i, i)], 0.0);
        }
        let mass2: f64 = rho2.iter().sum::<f64>() * h * h;
        assert!((mass2 - 2.0).abs() < 1e-6, "rho2 mass = {mass2}");
        let mass1: f64 = res.rho1.iter().map(|&(_, v)| v * h).sum();
        assert!((mass1 - 2.0).abs() < 1e-6, "rho1 mass = {mass1}");
    }

    #[test]
    fn refinement_stays_within_reported_error() {
        let p = ModelParams::neutral_box(1.0, 1.0, 1).unwrap();
        let r1 = diagonalize_small(&p, 50).unwrap();
        let r2 = diagonalize_small(&p, 101).unwrap();
        assert!(
            (r1.log_z - r2.log_z).abs() <= r1.extrapolation_error + r2.extrapolation_error + 1e-9,
            "{} vs {} (errors {} / {})",
            r1.log_z,
            r2.log_z,
            r1.extrapolation_error,
            r2.extrapolation_error
        );
    }
}
