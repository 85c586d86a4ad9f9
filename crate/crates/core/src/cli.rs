//! Subcommands behind the `calderon-boundary` binary. Each `cmd_*` writes its
//! files into the output directory and reports whether the run succeeded.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::conductivity::ConductivityTensor;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result, StageContext};
use crate::geometry::{CaseTag, CertificateReport};
use crate::mollifier::{hminushalf_sq_proxy, mollifier_mass, MollifierSpec};
use crate::reconstruct::{reconstruct, reconstruction_error, write_traces_csv, ReconstructionResult};
use crate::report::{write_csv, write_json};
use crate::stability::{h_optimize, holder_fit, perturb_sweep, write_sweep_csv, HOptimum, HolderFit, StabilityRun, SweepSetup};

#[derive(Debug, Parser)]
#[command(name = "calderon-boundary", version, about = "Boundary recovery of constant anisotropic conductivities")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, all cores by default.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Log progress at info level.
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Check the three configured points for quantitative non-flatness.
    Certify,
    /// Mollifier masses and the H^{-1/2} proxy scaling.
    MollCheck,
    /// Recover the conductivity from synthetic kernel data.
    Recover,
    /// Perturbation sweep and Hölder fit.
    Stability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub success: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            0
        } else {
            1
        }
    }
}

/// Exit code for a failed command: 2 for configuration problems, 1 otherwise.
pub fn error_exit_code(e: &Error) -> i32 {
    match e.root() {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn create(out: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>)> {
    std::fs::create_dir_all(out)?;
    let path = out.join(name);
    let file = File::create(&path)?;
    Ok((path, BufWriter::new(file)))
}

fn save_json<T: Serialize>(out: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let (path, w) = create(out, name)?;
    write_json(w, value)?;
    Ok(path)
}

pub fn cmd_certify(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let patch = cfg.patch().stage("patch")?;
    let cert = cfg.certificate(&patch).stage("certify")?;
    let report = cert.report();
    for w in &report.warnings {
        warn!("{w}");
    }
    let path = save_json(out, "certificate.json", &report)?;
    let success = report.case != CaseTag::Infeasible;
    let summary = match &report.reason {
        Some(r) => format!("infeasible: {r}"),
        None => format!("case {:?}, C0 = {:e}, k0 = {:e}, gamma = {:?}", report.case, report.c0, report.k0, report.gamma),
    };
    Ok(Outcome {
        success,
        files: vec![path],
        summary,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollRow {
    pub tau: f64,
    pub mass: f64,
    pub proxy_norm_sq: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MollCheckReport {
    pub dim: usize,
    pub center: Vec<f64>,
    pub rows: Vec<MollRow>,
    /// Least-squares slope of `log ‖δ_τ‖²` against `log τ`.
    pub slope: f64,
    pub max_mass_error: f64,
    pub mass_ok: bool,
    pub slope_ok: bool,
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn cmd_moll_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let patch = cfg.patch().stage("patch")?;
    let n = patch.dim();
    let center = cfg.moll_center();
    let mut rows = Vec::new();
    for tau in cfg.tau_values() {
        let spec = MollifierSpec::new(&patch, &center, tau)?;
        let mass = mollifier_mass(&patch, &spec, &cfg.quadrature.mollifier)
            .map_err(|e| Error::Quadrature(format!("tau = {tau}: {e}")))?;
        let proxy_norm_sq = hminushalf_sq_proxy(tau, n)?;
        info!("tau = {tau:e}: mass = {mass:.15}, proxy = {proxy_norm_sq:e}");
        rows.push(MollRow { tau, mass, proxy_norm_sq });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.tau.ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.proxy_norm_sq.ln()).collect();
    let slope = if rows.len() >= 2 { ls_slope(&xs, &ys) } else { f64::NAN };
    let max_mass_error = rows.iter().map(|r| (r.mass - 1.0).abs()).fold(0.0, f64::max);
    let tol = cfg.tolerances;
    let report = MollCheckReport {
        dim: n,
        center,
        mass_ok: max_mass_error <= tol.mass,
        slope_ok: (slope - (2.0 - n as f64)).abs() <= tol.slope,
        rows,
        slope,
        max_mass_error,
    };
    let (csv, w) = create(out, "mollifier.csv")?;
    write_csv(
        w,
        &["tau", "mass", "proxy_norm_sq", "slope"],
        report.rows.iter().map(|r| vec![r.tau, r.mass, r.proxy_norm_sq, slope]),
    )?;
    let json = save_json(out, "mollifier.json", &report)?;
    Ok(Outcome {
        success: report.mass_ok && report.slope_ok,
        files: vec![csv, json],
        summary: format!("max |mass - 1| = {max_mass_error:e}, slope = {slope}"),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverReport {
    pub certificate: CertificateReport,
    pub result: ReconstructionResult,
    pub sigma_true: ConductivityTensor,
    pub error: f64,
    pub tolerance: Option<f64>,
}

pub fn cmd_recover(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let patch = cfg.patch().stage("patch")?;
    let cert = cfg.certificate(&patch).stage("certify")?;
    if let Some(r) = &cert.reason {
        return Err(Error::Infeasible(r.clone())).stage("certify");
    }
    let model = cfg.model(&cfg.sigma).stage("kernel")?;
    let (result, samples) = reconstruct(&model, &patch, &cert, &cfg.schedule).stage("reconstruct")?;
    for w in &result.warnings {
        warn!("{w}");
    }
    let sigma_true = cfg.sigma_true.clone().unwrap_or_else(|| cfg.sigma.clone());
    let error = reconstruction_error(&result, &sigma_true).stage("reconstruct")?;
    let tolerance = cfg.tolerances.recover;
    let (traces, w) = create(out, "traces.csv")?;
    write_traces_csv(w, &samples)?;
    let report = RecoverReport {
        certificate: cert.report(),
        result,
        sigma_true,
        error,
        tolerance,
    };
    let json = save_json(out, "recover.json", &report)?;
    Ok(Outcome {
        success: tolerance.map_or(true, |t| error < t),
        files: vec![json, traces],
        summary: format!("case {:?}, error = {error:e}", report.result.case),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityReport {
    pub run: StabilityRun,
    pub fit: HolderFit,
    /// Optimal probe scale for each record with positive `ε` and `E`.
    pub h_opt: Vec<Option<HOptimum>>,
}

pub fn cmd_stability(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let pert = cfg
        .perturbation
        .as_ref()
        .ok_or_else(|| Error::Config("perturbation: required by the stability subcommand".into()))?;
    let patch = cfg.patch().stage("patch")?;
    let n = patch.dim();
    let cert = cfg.certificate(&patch).stage("certify")?;
    if let Some(r) = &cert.reason {
        return Err(Error::Infeasible(r.clone())).stage("certify");
    }
    let grid = pert.t_grid()?;
    if grid.is_empty() {
        return Err(Error::DegenerateGrid("empty t grid".into())).stage("stability");
    }
    let dictionary = cfg.dictionary(&patch).stage("dictionary")?;
    let setup = SweepSetup {
        patch: &patch,
        certificate: &cert,
        mode: cfg.kernel,
        dictionary: &dictionary,
        pairing_rule: cfg.quadrature.pairing,
        schedule: cfg.schedule,
    };
    let run = perturb_sweep(&cfg.sigma, &pert.direction_matrix(n)?, &grid, &setup).stage("sweep")?;
    let fit = holder_fit(&run).stage("holder fit")?;
    let h_opt = run.records.iter().map(|r| h_optimize(r.epsilon, r.e, n).ok()).collect();
    let (csv, w) = create(out, "stability.csv")?;
    write_sweep_csv(w, &run, Some(&fit))?;
    let report = StabilityReport { run, fit, h_opt };
    let json = save_json(out, "stability.json", &report)?;
    let f = &report.fit;
    Ok(Outcome {
        success: f.bound_holds,
        files: vec![csv, json],
        summary: format!(
            "beta_fit = {:.4}, C_fit = {:e}, growth = {:.3}, bound holds: {}",
            f.beta_fit, f.c_fit, f.growth, f.bound_holds
        ),
    })
}

pub fn dispatch(command: Command, cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    match command {
        Command::Certify => cmd_certify(cfg, out),
        Command::MollCheck => cmd_moll_check(cfg, out),
        Command::Recover => cmd_recover(cfg, out),
        Command::Stability => cmd_stability(cfg, out),
    }
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();

    let Some(config_path) = cli.config.as_deref() else {
        eprintln!("error: --config <path> is required");
        return 2;
    };
    let cfg = match ExperimentConfig::load(config_path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    let out = cli
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let result = match cli.threads {
        Some(0) => {
            eprintln!("error: --threads must be at least 1");
            return 2;
        }
        Some(k) => match rayon::ThreadPoolBuilder::new().num_threads(k).build() {
            Ok(pool) => pool.install(|| dispatch(cli.command, &cfg, &out)),
            Err(e) => {
                eprintln!("error: thread pool: {e}");
                return 1;
            }
        },
        None => dispatch(cli.command, &cfg, &out),
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            error_exit_code(&e)
        }
    }
}
