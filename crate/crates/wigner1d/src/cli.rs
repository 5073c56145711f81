//! Batch front-end: argument parsing, config resolution, subcommand
//! orchestration and artifact emission for the `wigner1d` binary.
//!
//! Every subcommand resolves its parameters from flags, falling back to
//! an optional JSON config file (unknown keys rejected), runs the
//! corresponding library pipeline and emits one artifact file (CSV or
//! JSON) with a metadata header line. Config problems exit with 2,
//! numerical failures with 3.

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::gaussian::{ground_energy, normalization_c, omega, variance_sigma2, BridgeLaw};
use crate::mcmc::{init_state, sample_configurations, McmcConfig};
use crate::model::ModelParams;
use crate::observables::{
    bulk_margin_cells, ergodic_average_y, limit_marginal_density, mcmc_folded_density,
    one_particle_density, one_particle_matrix, shift_detector, truncated_two_point,
};
use crate::oracle::{diagonalize_small, gauss_legendre};
use crate::pathspace::CollisionMode;
use crate::report::{params_json, write_csv, write_json, CsvData, RunMetadata};
use crate::thermo::{free_energy, partition_function_log, surface_sweep};
use crate::transfer::{
    chamber_amplitude_sequential, principal_eigenpair_opts, PathEnsemble, TransferOperator,
};

/// Exit code for configuration / usage problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit code for numerical failures (non-convergence, failed checks).
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "wigner1d",
    about = "Thermodynamics and structure of the one-dimensional quantum jellium",
    version = crate::report::build_id()
)]
pub struct Cli {
    /// JSON config file supplying defaults for any flag below
    /// (unknown keys are rejected).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct PhysicalArgs {
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub rho: Option<f64>,
    /// Time slices per loop.
    #[arg(long)]
    pub slices: Option<usize>,
    /// Ensemble pairs (the node count is twice this).
    #[arg(long)]
    pub ensemble: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Collision handling: strict or crossing-corrected.
    #[arg(long)]
    pub mode: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// Particle number for finite-N sampling.
    #[arg(long)]
    pub n: Option<usize>,
    /// Warm-up sweeps.
    #[arg(long)]
    pub sweeps: Option<usize>,
    /// Emitted configurations.
    #[arg(long)]
    pub samples: Option<usize>,
    /// Sweeps between emissions.
    #[arg(long)]
    pub thin: Option<usize>,
    /// Bulk margin in lattice cells (default: from the spectral gap).
    #[arg(long)]
    pub margin: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form constants of the weighted loop measure.
    Constants {
        #[command(flatten)]
        phys: PhysicalArgs,
    },
    /// Principal eigenvalue, subdominant modulus and spectral gap.
    Spectrum {
        #[command(flatten)]
        phys: PhysicalArgs,
    },
    /// Bulk free energy per particle with its three terms.
    FreeEnergy {
        #[command(flatten)]
        phys: PhysicalArgs,
    },
    /// Partition values and surface-correction extrapolation over N.
    Surface {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// One-particle density over one period by the limit formula.
    Density {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        images: Option<usize>,
    },
    /// Off-diagonal one-particle matrix at (x, y).
    Rdm {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        y: Option<f64>,
        #[arg(long)]
        w_max: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Truncated two-point correlations from a finite-N stream.
    Correlations {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[command(flatten)]
        chain: ChainArgs,
        #[arg(long)]
        max_sep: Option<usize>,
    },
    /// Translation-symmetry detector on a (optionally shifted) stream.
    SymmetryTest {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[command(flatten)]
        chain: ChainArgs,
        /// Injected shift u (absolute units).
        #[arg(long)]
        shift: Option<f64>,
    },
    /// Finite-N configuration stream to CSV (+ diagnostics sidecar).
    Sample {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[command(flatten)]
        chain: ChainArgs,
    },
    /// Exact diagonalization reference for N = 1 or 2.
    Oracle {
        #[command(flatten)]
        phys: PhysicalArgs,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        grid: Option<usize>,
    },
    /// Cross-check suite; nonzero exit when any check fails.
    Validate {
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

/// Optional JSON defaults; every field mirrors a flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    beta: Option<f64>,
    rho: Option<f64>,
    slices: Option<usize>,
    ensemble: Option<usize>,
    seed: Option<u64>,
    mode: Option<String>,
    n: Option<usize>,
    sweeps: Option<usize>,
    samples: Option<usize>,
    thin: Option<usize>,
    margin: Option<usize>,
    bins: Option<usize>,
    images: Option<usize>,
    w_max: Option<usize>,
    x: Option<f64>,
    y: Option<f64>,
    shift: Option<f64>,
    n_max: Option<usize>,
    grid: Option<usize>,
    max_sep: Option<usize>,
}

struct Resolved {
    cfg: ConfigFile,
}

impl Resolved {
    fn load(path: &Option<PathBuf>) -> Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("bad config {}: {e}", p.display())))?
            }
            None => ConfigFile::default(),
        };
        Ok(Resolved { cfg })
    }

    fn get<T: Copy>(&self, flag: Option<T>, file: Option<T>, default: Option<T>, name: &str) -> Result<T> {
        flag.or(file)
            .or(default)
            .ok_or_else(|| Error::Config(format!("missing required parameter --{name}")))
    }
}

fn parse_mode(s: Option<&str>) -> Result<CollisionMode> {
    match s.unwrap_or("crossing-corrected") {
        "strict" => Ok(CollisionMode::Strict),
        "crossing-corrected" | "corrected" => Ok(CollisionMode::CrossingCorrected),
        other => Err(Error::Config(format!(
            "unknown mode '{other}' (expected 'strict' or 'crossing-corrected')"
        ))),
    }
}

struct Sink {
    out: Option<PathBuf>,
}

impl Sink {
    fn write_csv(&self, meta: &RunMetadata, data: &CsvData) -> Result<()> {
        match &self.out {
            Some(p) => write_csv(std::fs::File::create(p)?, meta, data),
            None => write_csv(std::io::stdout().lock(), meta, data),
        }
    }
    fn write_json<T: serde::Serialize>(&self, meta: &RunMetadata, data: &T) -> Result<()> {
        match &self.out {
            Some(p) => write_json(std::fs::File::create(p)?, meta, data),
            None => write_json(std::io::stdout().lock(), meta, data),
        }
    }
    fn sidecar(&self) -> Option<PathBuf> {
        self.out.as_ref().map(|p| {
            let mut name = p.file_name().map(|s| s.to_os_string()).unwrap_or_default();
            name.push(".diag.json");
            p.with_file_name(name)
        })
    }
}

/// Runs one parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let (code, kind) = match e {
                Error::Config(_) | Error::InvalidParameter(_) => (EXIT_CONFIG, "config"),
                _ => (EXIT_NUMERICAL, "numerical"),
            };
            let diag = json!({"error": kind, "message": e.to_string()});
            eprintln!("{diag}");
            code
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let res = Resolved::load(&cli.config)?;
    let sink = Sink { out: cli.out.clone() };
    match cli.command {
        Command::Constants { phys } => constants_cmd(&res, &sink, &phys),
        Command::Spectrum { phys } => spectrum_cmd(&res, &sink, &phys),
        Command::FreeEnergy { phys } => free_energy_cmd(&res, &sink, &phys),
        Command::Surface { phys, n_max } => surface_cmd(&res, &sink, &phys, n_max),
        Command::Density { phys, bins, images } => density_cmd(&res, &sink, &phys, bins, images),
        Command::Rdm { phys, x, y, w_max, samples } => {
            rdm_cmd(&res, &sink, &phys, x, y, w_max, samples)
        }
        Command::Correlations { phys, chain, max_sep } => {
            correlations_cmd(&res, &sink, &phys, &chain, max_sep)
        }
        Command::SymmetryTest { phys, chain, shift } => {
            symmetry_cmd(&res, &sink, &phys, &chain, shift)
        }
        Command::Sample { phys, chain } => sample_cmd(&res, &sink, &phys, &chain),
        Command::Oracle { phys, n, grid } => oracle_cmd(&res, &sink, &phys, n, grid),
        Command::Validate { quick, seed } => validate_cmd(&res, &sink, quick, seed),
    }
}

struct PhysParams {
    beta: f64,
    rho: f64,
    slices: usize,
    pairs: usize,
    seed: u64,
    mode: CollisionMode,
}

fn resolve_phys(res: &Resolved, phys: &PhysicalArgs) -> Result<PhysParams> {
    let beta = res.get(phys.beta, res.cfg.beta, None, "beta")?;
    let rho = res.get(phys.rho, res.cfg.rho, None, "rho")?;
    if !(beta > 0.0) || !(rho > 0.0) {
        return Err(Error::Config(format!("beta and rho must be positive, got {beta}, {rho}")));
    }
    Ok(PhysParams {
        beta,
        rho,
        slices: res.get(phys.slices, res.cfg.slices, Some(64), "slices")?,
        pairs: res.get(phys.ensemble, res.cfg.ensemble, Some(2000), "ensemble")?,
        seed: res.get(phys.seed, res.cfg.seed, Some(1), "seed")?,
        mode: parse_mode(phys.mode.as_deref().or(res.cfg.mode.as_deref()))?,
    })
}

fn phys_meta(p: &PhysParams) -> serde_json::Value {
    params_json(&[
        ("beta", json!(p.beta)),
        ("rho", json!(p.rho)),
        ("slices", json!(p.slices)),
        ("ensemble_pairs", json!(p.pairs)),
        ("mode", json!(p.mode.to_string())),
    ])
}

fn constants_cmd(res: &Resolved, sink: &Sink, phys: &PhysicalArgs) -> Result<i32> {
    let beta = res.get(phys.beta, res.cfg.beta, None, "beta")?;
    let rho = res.get(phys.rho, res.cfg.rho, None, "rho")?;
    let meta = RunMetadata::new(
        "constants",
        None,
        params_json(&[("beta", json!(beta)), ("rho", json!(rho))]),
    );
    let data = json!({
        "beta": beta,
        "rho": rho,
        "lambda": 1.0 / rho,
        "omega": omega(rho),
        "ground_energy": ground_energy(rho),
        "c": normalization_c(beta, rho),
        "sigma2": variance_sigma2(beta, rho),
    });
    sink.write_json(&meta, &data)?;
    Ok(0)
}

fn build_spectrum(p: &PhysParams) -> Result<(PathEnsemble, crate::transfer::TransferSpectrum)> {
    let ens = PathEnsemble::sample(p.beta, p.rho, p.slices, p.pairs, p.seed)?;
    let op = TransferOperator::build(&ens, 1.0 / p.rho, p.mode)?;
    let sp = principal_eigenpair_opts(&op, 1e-10, 100_000, true)?;
    Ok((ens, sp))
}

fn spectrum_cmd(res: &Resolved, sink: &Sink, phys: &PhysicalArgs) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let (_, sp) = build_spectrum(&p)?;
    let meta = RunMetadata::new("spectrum", Some(p.seed), phys_meta(&p));
    sink.write_json(&meta, &sp.summary())?;
    Ok(0)
}

fn free_energy_cmd(res: &Resolved, sink: &Sink, phys: &PhysicalArgs) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let (_, sp) = build_spectrum(&p)?;
    let report = free_energy(p.beta, p.rho, &sp)?;
    let meta = RunMetadata::new("free-energy", Some(p.seed), phys_meta(&p));
    sink.write_json(&meta, &json!({"free_energy": report, "spectrum": sp.summary()}))?;
    Ok(0)
}

fn surface_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    n_max: Option<usize>,
) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let n_max = res.get(n_max, res.cfg.n_max, Some(12), "n-max")?;
    let ens = PathEnsemble::sample(p.beta, p.rho, p.slices, p.pairs, p.seed)?;
    let op = TransferOperator::build(&ens, 1.0 / p.rho, p.mode)?;
    let sweep = surface_sweep(&op, 1e-10, 100_000, 2, n_max, Some(20))?;
    let mut params = phys_meta(&p);
    params["n_max"] = json!(n_max);
    params["s"] = json!(sweep.report.s);
    params["s_se"] = json!(sweep.s_se);
    params["rate"] = json!(sweep.report.rate);
    params["gap"] = json!(sweep.gap);
    params["f_bulk"] = json!(sweep.free_energy.f);
    let meta = RunMetadata::new("surface", Some(p.seed), params);
    let mut data = CsvData::new(vec!["n", "log_z", "correction"]);
    for e in &sweep.report.entries {
        data.push(vec![e.n as f64, e.log_z, e.correction]);
    }
    sink.write_csv(&meta, &data)?;
    Ok(0)
}

fn density_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    bins: Option<usize>,
    images: Option<usize>,
) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let bins = res.get(bins, res.cfg.bins, Some(32), "bins")?;
    let images = res.get(images, res.cfg.images, Some(64), "images")?;
    let (ens, sp) = build_spectrum(&p)?;
    let marginal = limit_marginal_density(&sp, &ens, bins)?;
    let rho1 = one_particle_density(&marginal, images)?;
    let mut params = phys_meta(&p);
    params["bins"] = json!(bins);
    params["images"] = json!(images);
    params["crystallinity"] = json!(rho1.crystallinity);
    params["period_mass"] = json!(rho1.mass);
    params["ess"] = json!(marginal.ess);
    let meta = RunMetadata::new("density", Some(p.seed), params);
    let mut data = CsvData::new(vec!["x", "rho1", "err"]);
    for i in 0..rho1.grid.len() {
        data.push(vec![rho1.grid[i], rho1.values[i], rho1.errors[i]]);
    }
    sink.write_csv(&meta, &data)?;
    Ok(0)
}

#[allow(clippy::too_many_arguments)]
fn rdm_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    x: Option<f64>,
    y: Option<f64>,
    w_max: Option<usize>,
    samples: Option<usize>,
) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let x = res.get(x, res.cfg.x, None, "x")?;
    let y = res.get(y, res.cfg.y, None, "y")?;
    let w_max = res.get(w_max, res.cfg.w_max, Some(3), "w-max")?;
    let samples = res.get(samples, res.cfg.samples, Some(2000), "samples")?;
    let (ens, sp) = build_spectrum(&p)?;
    let est = one_particle_matrix(x, y, &sp, &ens, w_max, samples, 1e-3, p.seed)?;
    let mut params = phys_meta(&p);
    params["x"] = json!(x);
    params["y"] = json!(y);
    params["w_max"] = json!(w_max);
    params["samples_per_term"] = json!(samples);
    let meta = RunMetadata::new("rdm", Some(p.seed), params);
    sink.write_json(&meta, &est)?;
    Ok(0)
}

struct ChainRun {
    params: ModelParams,
    configs: Vec<crate::observables::PointConfiguration>,
    diag: crate::mcmc::McmcDiagnostics,
    margin: usize,
}

fn run_chain(res: &Resolved, p: &PhysParams, chain: &ChainArgs) -> Result<ChainRun> {
    let n = res.get(chain.n, res.cfg.n, Some(8), "n")?;
    let sweeps = res.get(chain.sweeps, res.cfg.sweeps, Some(500), "sweeps")?;
    let samples = res.get(chain.samples, res.cfg.samples, Some(5000), "samples")?;
    let thin = res.get(chain.thin, res.cfg.thin, Some(2), "thin")?;
    let params = ModelParams::neutral_box(p.beta, p.rho, n)?;
    let cfg = McmcConfig { mode: p.mode, pre_sweeps: sweeps, ..Default::default() };
    let mut state = init_state(&params, p.slices, p.seed, cfg)?;
    let (configs, diag) = sample_configurations(&mut state, samples, thin)?;
    let margin = match chain.margin.or(res.cfg.margin) {
        Some(m) => m,
        None => {
            // margin from a quick spectral gap at reduced cost
            let pairs = p.pairs.min(500);
            let ens = PathEnsemble::sample(p.beta, p.rho, p.slices.min(32), pairs, p.seed)?;
            let op = TransferOperator::build(&ens, 1.0 / p.rho, p.mode)?;
            let sp = principal_eigenpair_opts(&op, 1e-8, 100_000, false)?;
            bulk_margin_cells(sp.gap)
        }
    };
    Ok(ChainRun { params, configs, diag, margin })
}

fn chain_meta(p: &PhysParams, run: &ChainRun) -> serde_json::Value {
    let mut v = phys_meta(p);
    v["n"] = json!(run.params.n_particles());
    v["margin"] = json!(run.margin);
    v["diagnostics"] = serde_json::to_value(&run.diag).unwrap_or_default();
    v
}

fn correlations_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    chain: &ChainArgs,
    max_sep: Option<usize>,
) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let run = run_chain(res, &p, chain)?;
    let max_sep = res.get(max_sep, res.cfg.max_sep, Some(6), "max-sep")?;
    let rep = truncated_two_point(&run.configs, &run.params, run.margin, max_sep)?;
    let mut params = chain_meta(&p, &run);
    params["alpha"] = json!(rep.alpha);
    params["alpha_se"] = json!(rep.alpha_se);
    let meta = RunMetadata::new("correlations", Some(p.seed), params);
    let mut data = CsvData::new(vec!["r", "correlation", "err"]);
    for i in 0..rep.separations.len() {
        data.push(vec![rep.separations[i], rep.values[i], rep.errors[i]]);
    }
    sink.write_csv(&meta, &data)?;
    Ok(0)
}

fn symmetry_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    chain: &ChainArgs,
    shift: Option<f64>,
) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let shift = res.get(shift, res.cfg.shift, Some(0.0), "shift")?;
    let run = run_chain(res, &p, chain)?;
    let shifted: Vec<_> = run.configs.iter().map(|c| c.shifted(shift)).collect();
    let det = shift_detector(&shifted, &run.params, run.margin)?;
    let y = ergodic_average_y(&shifted, &run.params, run.margin)?;
    let meta = RunMetadata::new("symmetry-test", Some(p.seed), chain_meta(&p, &run));
    sink.write_json(
        &meta,
        &json!({
            "shift_injected": shift,
            "shift_injected_mod_lambda": shift.rem_euclid(run.params.lambda()),
            "u_detected": det.u_mod_lambda,
            "coherence": det.coherence,
            "bulk_mean_y": y.mean,
            "bulk_mean_se": y.se,
            "flagged": y.flagged,
        }),
    )?;
    Ok(0)
}

fn sample_cmd(res: &Resolved, sink: &Sink, phys: &PhysicalArgs, chain: &ChainArgs) -> Result<i32> {
    let p = resolve_phys(res, phys)?;
    let run = run_chain(res, &p, chain)?;
    let meta = RunMetadata::new("sample", Some(p.seed), chain_meta(&p, &run));
    let n = run.params.n_particles();
    let mut data = CsvData::new((1..=n).map(|j| format!("x{j}")).collect::<Vec<_>>());
    for c in &run.configs {
        data.push(c.positions().to_vec());
    }
    sink.write_csv(&meta, &data)?;
    if let Some(side) = sink.sidecar() {
        let mut f = std::fs::File::create(side)?;
        writeln!(f, "{}", serde_json::to_string_pretty(&run.diag)?)?;
    }
    Ok(0)
}

fn oracle_cmd(
    res: &Resolved,
    sink: &Sink,
    phys: &PhysicalArgs,
    n: Option<usize>,
    grid: Option<usize>,
) -> Result<i32> {
    let beta = res.get(phys.beta, res.cfg.beta, None, "beta")?;
    let rho = res.get(phys.rho, res.cfg.rho, None, "rho")?;
    let n = res.get(n, res.cfg.n, Some(1), "n")?;
    let grid = res.get(grid, res.cfg.grid, Some(if n == 1 { 200 } else { 40 }), "grid")?;
    let params = ModelParams::neutral_box(beta, rho, n)?;
    let result = diagonalize_small(&params, grid)?;
    let meta = RunMetadata::new(
        "oracle",
        None,
        params_json(&[
            ("beta", json!(beta)),
            ("rho", json!(rho)),
            ("n", json!(n)),
            ("grid", json!(grid)),
        ]),
    );
    sink.write_json(
        &meta,
        &json!({
            "log_z": result.log_z,
            "extrapolation_error": result.extrapolation_error,
            "grid_coarse": result.grid_coarse,
            "grid_fine": result.grid_fine,
            "rho1": result.rho1,
        }),
    )?;
    Ok(0)
}

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn validate_cmd(res: &Resolved, sink: &Sink, quick: bool, seed: Option<u64>) -> Result<i32> {
    let seed = res.get(seed, res.cfg.seed, Some(1), "seed")?;
    let mut checks: Vec<Check> = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| {
        println!("{} {name}: {detail}", if passed { "PASS" } else { "FAIL" });
        checks.push(Check { name, passed, detail });
    };

    // 1. Baxter identity
    {
        use rand::Rng;
        let mut rng = crate::rng::stream_rng(seed, 900);
        let mut worst: f64 = 0.0;
        let trials = if quick { 2000 } else { 10_000 };
        for _ in 0..trials {
            let n = rng.random_range(1..=12);
            let rho = rng.random_range(0.3..3.0);
            let p = ModelParams::neutral_box(1.0, rho, n)?;
            let mut x: Vec<f64> =
                (0..n).map(|_| rng.random_range(p.a()..p.b())).collect();
            x.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let raw = crate::model::potential_raw(&x, &p)?;
            let bax = crate::model::potential_baxter(&x, &p)?;
            worst = worst.max((raw - bax).abs() / (1.0 + bax.abs()));
        }
        push("baxter-identity", worst <= 1e-10, format!("worst rel dev {worst:.2e}"));
    }

    // 2. Mehler semigroup and trace identity
    {
        let (s, t, x, y, rho) = (0.3, 0.7, 0.2, -0.5, 1.0);
        let lhs = gauss_legendre(
            |z| {
                crate::gaussian::mehler(s, x, z, rho).unwrap()
                    * crate::gaussian::mehler(t, z, y, rho).unwrap()
            },
            -12.0,
            12.0,
            400,
        );
        let rhs = crate::gaussian::mehler(s + t, x, y, rho)?;
        let semi = (lhs - rhs).abs();
        let tr = gauss_legendre(|z| crate::gaussian::mehler(1.0, z, z, 2.0).unwrap(), -12.0, 12.0, 400);
        let trace_dev = (tr - normalization_c(1.0, 2.0)).abs();
        push(
            "mehler-closed-forms",
            semi < 1e-8 && trace_dev < 1e-10,
            format!("semigroup dev {semi:.2e}, trace dev {trace_dev:.2e}"),
        );
    }

    // 3. sampled variance of the loop marginal
    {
        let (beta, rho, m) = (1.0, 2.0, 32);
        let law = BridgeLaw::closed(beta, rho, m)?;
        let mut rng = crate::rng::stream_rng(seed, 901);
        let n = if quick { 20_000 } else { 100_000 };
        let mut sq = 0.0;
        for _ in 0..n {
            let v = law.sample_closed_loop(&mut rng).slices()[0];
            sq += v * v;
        }
        let var = sq / n as f64;
        let sigma2 = variance_sigma2(beta, rho);
        let se = sigma2 * (2.0 / n as f64).sqrt();
        let dev = (var - sigma2).abs();
        push(
            "loop-variance",
            dev < 4.0 * se,
            format!("sampled {var:.6} vs {sigma2:.6} ({:.1} se)", dev / se),
        );
    }

    // 4. free-bridge non-collision vs the determinant oracle
    {
        use crate::gaussian::sample_free_bridge;
        use crate::pathspace::kernel_k;
        let (x1, x2, tau, m) = (-0.5, 0.5, 1.0, 64);
        let n = if quick { 50_000 } else { 200_000 };
        let mut rng = crate::rng::stream_rng(seed, 902);
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let g1 = sample_free_bridge(x1, x1, tau, m, &mut rng);
            let g2 = sample_free_bridge(x2, x2, tau, m, &mut rng);
            let w = kernel_k(&g1, &g2, 0.0, CollisionMode::CrossingCorrected)?;
            sum += w;
            sumsq += w * w;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let km = crate::oracle::noncollision_probability_bridges(
            &[x1, x2],
            &[x1, x2],
            tau,
            None,
        )?;
        let dev = (mean - km).abs();
        push(
            "karlin-mcgregor",
            dev < 3.0 * se,
            format!("mc {mean:.5} vs det {km:.5} ({:.1} se)", dev / se),
        );
    }

    // 5. partition function vs exact diagonalization (N = 1; N = 2 in full runs)
    {
        let p = ModelParams::neutral_box(1.0, 1.0, 1)?;
        let samples = if quick { 100_000 } else { 400_000 };
        let (amp, _) =
            chamber_amplitude_sequential(&p, 64, CollisionMode::CrossingCorrected, samples, seed)?;
        let lz = partition_function_log(&p, amp)?;
        let orc = diagonalize_small(&p, 120)?;
        let rel = (lz - orc.log_z).abs() / orc.log_z.abs();
        let mut ok = rel < 0.02;
        let mut detail = format!("N=1 rel {rel:.4}");
        if !quick {
            let p2 = ModelParams::neutral_box(1.0, 1.0, 2)?;
            let (amp2, _) = chamber_amplitude_sequential(
                &p2,
                64,
                CollisionMode::CrossingCorrected,
                samples,
                seed,
            )?;
            let lz2 = partition_function_log(&p2, amp2)?;
            let orc2 = diagonalize_small(&p2, 40)?;
            let rel2 = (lz2 - orc2.log_z).abs() / orc2.log_z.abs();
            ok = ok && rel2 < 0.05;
            detail.push_str(&format!(", N=2 rel {rel2:.4}"));
        }
        push("partition-vs-oracle", ok, detail);
    }

    // 6. density-route agreement (limit formula vs finite-N stream)
    {
        let (beta, rho) = (2.0, 1.0);
        let pairs = if quick { 1000 } else { 3000 };
        let m = if quick { 32 } else { 64 };
        let ens = PathEnsemble::sample(beta, rho, m, pairs, seed)?;
        let op = TransferOperator::build(&ens, 1.0 / rho, CollisionMode::CrossingCorrected)?;
        let sp = principal_eigenpair_opts(&op, 1e-10, 100_000, false)?;
        let marginal = limit_marginal_density(&sp, &ens, 8)?;
        let rho1 = one_particle_density(&marginal, 64)?;
        let pn = ModelParams::neutral_box(beta, rho, 8)?;
        let cfg = McmcConfig { pre_sweeps: 300, ..Default::default() };
        let mut st = init_state(&pn, m, seed, cfg)?;
        let n_cfg = if quick { 4000 } else { 12_000 };
        let (configs, _) = sample_configurations(&mut st, n_cfg, 2)?;
        let margin = bulk_margin_cells(sp.gap).min(3);
        let finite = mcmc_folded_density(&configs, &pn, margin, 8)?;
        let mut worst = 0.0f64;
        for i in 0..rho1.values.len() {
            let se = (rho1.errors[i].powi(2) + finite.errors[i].powi(2)).sqrt();
            worst = worst.max((rho1.values[i] - finite.values[i]).abs() / se.max(1e-9));
        }
        push(
            "density-route-agreement",
            worst < 5.0,
            format!("worst pointwise deviation {worst:.2} combined se"),
        );
    }

    let all = checks.iter().all(|c| c.passed);
    let meta = RunMetadata::new(
        "validate",
        Some(seed),
        params_json(&[("quick", json!(quick))]),
    );
    let data = json!({
        "passed": all,
        "checks": checks.iter().map(|c| json!({
            "name": c.name, "passed": c.passed, "detail": c.detail
        })).collect::<Vec<_>>(),
    });
    sink.write_json(&meta, &data)?;
    Ok(if all { 0 } else { EXIT_NUMERICAL })
}
