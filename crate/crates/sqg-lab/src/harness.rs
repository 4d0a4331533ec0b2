//! Configuration-driven experiment runner: composes the solver, kernel,
//! diagnostics, and inequality modules into reproducible experiments that
//! emit report files.
//!
//! # Config format
//!
//! A config is a single text file, either flat `key = value` with dotted
//! sections (TOML) or JSON — sniffed by the leading `{`. Unknown keys are
//! rejected with the offending key path. The experiment `kind` selects which
//! section is read:
//!
//! | kind               | section      | runs                                            |
//! |--------------------|--------------|-------------------------------------------------|
//! | `simulate`         | `sim`        | full solve + decay diagnostics                  |
//! | `theorem1`         | `sim`        | solve + windowed profile residual vs log bound  |
//! | `linear-lemma`     | `sim`        | linear-only solve + residual boundedness        |
//! | `kernel-verify`    | `kernel`     | closed forms, scaling, tails, mass, semigroup   |
//! | `inequality-suite` | `inequality` | ensemble inequality checks + refinement          |
//! | `duhamel-check`    | `sim`        | mild-solution residual, dt halving, Picard      |
//!
//! Optional top-level keys: `out` (output directory), `seed`, `format`
//! (`csv` | `json` | `both`), a `tolerances` table overriding individual
//! verdict tolerances (the hook for deliberately failing a run), and a
//! `sweep` table of parameter lists for the sweep command.
//!
//! # Output layout
//!
//! Reports land in `<out>/<config stem>/`, where `<out>` is resolved from
//! the `--out` flag, then the config's `out` key, then the `SQG_LAB_OUT`
//! environment variable, then `./sqg-lab-out`. Every run writes `config.echo`
//! (the raw config bytes) and, per the chosen format, `report.csv` and/or
//! `report.json` plus kind-specific data files. Sweeps add one subdirectory
//! per grid cell plus `aggregate.csv`/`aggregate.json` and, when the grid
//! refines `n`, `refinement.csv`.
//!
//! # Frozen CSV layouts
//!
//! - `report.csv`: `name,measured,target,tolerance,pass`
//! - `rows.csv`: `t,mass,linf,l2,sobolev,moment_q,residual_R,contamination`
//! - `profile.csv`: `t,residual,ratio`
//! - `series.csv`: `t,residual,contamination`
//! - `radial.csv`: `r,kernel,reference,rel_error`
//! - `residuals.csv`: `t,residual`; `picard.csv`: `iterate,difference`
//! - `ensembles/*.csv`: `member,value`
//! - `aggregate.csv`: `cell,alpha,n,seed,amplitude,status,pass,linf_measured,`
//!   `linf_predicted,sobolev_measured,sobolev_predicted,moment_measured,`
//!   `moment_bound,residual_slope`
//! - `refinement.csv`: `quantity,cell_coarse,cell_fine,coarse,fine,delta`
//!
//! Floats print in shortest round-trip form; reports carry no timestamps or
//! absolute paths, so a config plus seed reproduces byte-identical files.
//!
//! # Exit-code contract
//!
//! The binary exits 0 iff every verdict counted by the run passes, 1 when
//! any verdict fails (each failure is listed on stderr), and 2 for config or
//! runtime errors. A run directory whose experiment died mid-way contains a
//! `FAILED` marker with the error text. Sweep cells are isolated: one
//! failing or crashing cell is recorded in the aggregate and the remaining
//! cells still run.
//!
//! The `pass` flag aggregates only the verdicts listed at the report's top
//! level. Kind `simulate` counts the decay-rate verdicts; `theorem1` counts
//! the profile-envelope verdicts and carries the decay section as data.
//!
//! A `seed` (key or `--seed`) replaces the stochastic inputs of the run:
//! the `bandlimited_bump` initial-data seed and the ensemble seed. Families
//! without randomness ignore it.

use crate::diagnostics::{
    decay_report, decay_rows, profile_residual_check, DecayReport, LinearLemmaReport,
    ProfileReport, Verdict, CONTAMINATION_LIMIT,
};
use crate::error::{Error, Result};
use crate::fit;
use crate::grid::GridSpec;
use crate::inequality::{
    ensemble_sweep, gn_ratio, hls_ratio, kato_ponce_ratio, sv_gap, weight_commutator_check,
    EnsembleReport, EnsembleSpec, HolderExponents,
};
use crate::kernel::{
    closed_form_alpha1, closed_form_alpha2, dual_lattice_mass_excess, kernel_on_grid,
    radial_table, scaling_check, semigroup_defect, tail_exponent, KernelSpec,
};
use crate::solver::{
    integrate, make_initial_data,
    mild::{duhamel_residual, picard_differences},
    InitialData, SimConfig,
};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "SQG_LAB_OUT";

/// Which report files a run writes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    #[default]
    Both,
}

impl ReportFormat {
    fn csv(self) -> bool {
        self != ReportFormat::Json
    }
    fn json(self) -> bool {
        self != ReportFormat::Csv
    }
}

impl FromStr for ReportFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "both" => Ok(ReportFormat::Both),
            other => Err(format!("unknown format `{other}`: expected csv, json, or both")),
        }
    }
}

/// The experiment families the runner knows.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[serde(rename = "simulate")]
    Simulate,
    #[serde(rename = "theorem1")]
    Theorem1,
    #[serde(rename = "linear-lemma")]
    LinearLemma,
    #[serde(rename = "kernel-verify")]
    KernelVerify,
    #[serde(rename = "inequality-suite")]
    InequalitySuite,
    #[serde(rename = "duhamel-check")]
    DuhamelCheck,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Theorem1 => "theorem1",
            ExperimentKind::LinearLemma => "linear-lemma",
            ExperimentKind::KernelVerify => "kernel-verify",
            ExperimentKind::InequalitySuite => "inequality-suite",
            ExperimentKind::DuhamelCheck => "duhamel-check",
        }
    }

    fn needs_sim(self) -> bool {
        matches!(
            self,
            ExperimentKind::Simulate
                | ExperimentKind::Theorem1
                | ExperimentKind::LinearLemma
                | ExperimentKind::DuhamelCheck
        )
    }
}

/// Per-verdict tolerance overrides; `None` means the documented default.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Relative mass drift over the run (default 1e-11).
    #[serde(default)]
    pub mass_drift: Option<f64>,
    /// Slope of the profile-residual ratio (default 0.1).
    #[serde(default)]
    pub profile_slope: Option<f64>,
    /// Allowed excess of the late ratio over the first decade (default 0.2).
    #[serde(default)]
    pub profile_excess: Option<f64>,
    /// Slope of the linear-lemma residual (default 0.05).
    #[serde(default)]
    pub linear_slope: Option<f64>,
    /// Closed-form kernel comparison, sup-relative (default 1e-6).
    #[serde(default)]
    pub closed_form: Option<f64>,
    /// Kernel scaling-identity deviation (default 1e-5).
    #[serde(default)]
    pub scaling: Option<f64>,
    /// Tail-exponent deviation from -(2 + alpha) (default 0.1).
    #[serde(default)]
    pub tail_slope: Option<f64>,
    /// Grid-mass deviation from the dual-lattice law (default 1e-8).
    #[serde(default)]
    pub mass_excess: Option<f64>,
    /// Semigroup defect of the half-time composition (default 1e-8; the
    /// half-time kernel sits at the resolution floor, where the synthesis
    /// carries a few 1e-9 of quadrature error).
    #[serde(default)]
    pub semigroup: Option<f64>,
    /// Worst relative Duhamel residual (default 1e-4).
    #[serde(default)]
    pub duhamel_residual: Option<f64>,
    /// Worst successive Picard difference ratio (default 0.75).
    #[serde(default)]
    pub picard_ratio: Option<f64>,
    /// Relative negativity floor of the Stroock-Varopoulos gap (default 1e-9).
    #[serde(default)]
    pub sv_floor: Option<f64>,
    /// Refinement stability of ensemble maxima (default 0.10).
    #[serde(default)]
    pub stability: Option<f64>,
    /// Weight-commutator defect at h = 1e-3 (default 1e-6).
    #[serde(default)]
    pub commutator: Option<f64>,
}

impl Tolerances {
    fn mass_drift(&self) -> f64 {
        self.mass_drift.unwrap_or(1e-11)
    }
    fn profile_slope(&self) -> f64 {
        self.profile_slope.unwrap_or(0.1)
    }
    fn profile_excess(&self) -> f64 {
        self.profile_excess.unwrap_or(0.2)
    }
    fn linear_slope(&self) -> f64 {
        self.linear_slope.unwrap_or(0.05)
    }
    fn closed_form(&self) -> f64 {
        self.closed_form.unwrap_or(1e-6)
    }
    fn scaling(&self) -> f64 {
        self.scaling.unwrap_or(1e-5)
    }
    fn tail_slope(&self) -> f64 {
        self.tail_slope.unwrap_or(0.1)
    }
    fn mass_excess(&self) -> f64 {
        self.mass_excess.unwrap_or(1e-8)
    }
    fn semigroup(&self) -> f64 {
        self.semigroup.unwrap_or(1e-8)
    }
    fn duhamel_residual(&self) -> f64 {
        self.duhamel_residual.unwrap_or(1e-4)
    }
    fn picard_ratio(&self) -> f64 {
        self.picard_ratio.unwrap_or(0.75)
    }
    fn sv_floor(&self) -> f64 {
        self.sv_floor.unwrap_or(1e-9)
    }
    fn stability(&self) -> f64 {
        self.stability.unwrap_or(0.10)
    }
    fn commutator(&self) -> f64 {
        self.commutator.unwrap_or(1e-6)
    }
}

/// Parameters of the `kernel-verify` kind. Defaults give the reference
/// desk-scale check: alpha = 1, t = 1 on the 256-point box of length 32.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelVerifyParams {
    #[serde(default = "one")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub t: f64,
    #[serde(default = "kv_n")]
    pub n: usize,
    #[serde(default = "kv_box")]
    pub box_length: f64,
    /// Outer radius of the free-space tail fit (default 120 t^(1/alpha)).
    #[serde(default)]
    pub tail_r_max: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn kv_n() -> usize {
    256
}
fn kv_box() -> f64 {
    32.0
}

impl Default for KernelVerifyParams {
    fn default() -> Self {
        KernelVerifyParams {
            alpha: 1.0,
            t: 1.0,
            n: kv_n(),
            box_length: kv_box(),
            tail_r_max: None,
        }
    }
}

/// Parameters of the `inequality-suite` kind. Defaults run the full
/// 1000-member sweep over q in {3, 4, 6} and alpha in {0.5, 1, 1.5}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityParams {
    #[serde(default = "iq_seed")]
    pub seed: u64,
    #[serde(default = "iq_count")]
    pub count: usize,
    #[serde(default = "iq_max_mode")]
    pub max_mode: i64,
    #[serde(default = "iq_envelope")]
    pub envelope_power: f64,
    #[serde(default = "iq_qs")]
    pub qs: Vec<f64>,
    #[serde(default = "iq_alphas")]
    pub alphas: Vec<f64>,
    /// Grid for the gap sweep.
    #[serde(default = "kv_n")]
    pub n: usize,
    /// Grid pair for the refinement-stability checks.
    #[serde(default = "iq_n_coarse")]
    pub n_coarse: usize,
    #[serde(default = "kv_n")]
    pub n_fine: usize,
    #[serde(default = "iq_box")]
    pub box_length: f64,
}

fn iq_seed() -> u64 {
    7
}
fn iq_count() -> usize {
    1000
}
fn iq_max_mode() -> i64 {
    21
}
fn iq_envelope() -> f64 {
    1.5
}
fn iq_qs() -> Vec<f64> {
    vec![3.0, 4.0, 6.0]
}
fn iq_alphas() -> Vec<f64> {
    vec![0.5, 1.0, 1.5]
}
fn iq_n_coarse() -> usize {
    128
}
fn iq_box() -> f64 {
    16.0
}

impl Default for InequalityParams {
    fn default() -> Self {
        InequalityParams {
            seed: iq_seed(),
            count: iq_count(),
            max_mode: iq_max_mode(),
            envelope_power: iq_envelope(),
            qs: iq_qs(),
            alphas: iq_alphas(),
            n: kv_n(),
            n_coarse: iq_n_coarse(),
            n_fine: kv_n(),
            box_length: iq_box(),
        }
    }
}

impl InequalityParams {
    fn ensemble(&self) -> EnsembleSpec {
        EnsembleSpec {
            seed: self.seed,
            count: self.count,
            max_mode: self.max_mode,
            envelope_power: self.envelope_power,
        }
    }
}

/// Parameter lists for the sweep command; empty lists leave the axis at the
/// base config's value.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    #[serde(default)]
    pub alpha: Vec<f64>,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub seed: Vec<u64>,
    #[serde(default)]
    pub amplitude: Vec<f64>,
}

impl SweepGrid {
    fn is_empty(&self) -> bool {
        self.alpha.is_empty()
            && self.n.is_empty()
            && self.seed.is_empty()
            && self.amplitude.is_empty()
    }
}

/// One experiment: a kind plus its parameters and output plumbing.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelVerifyParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inequality: Option<InequalityParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<ReportFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
}

impl ExperimentConfig {
    fn tolerances(&self) -> Tolerances {
        self.tolerances.unwrap_or_default()
    }

    fn resolved_format(&self) -> ReportFormat {
        self.format.unwrap_or_default()
    }

    /// Section bookkeeping: the kind's section must be present (sim kinds)
    /// and foreign sections must be absent, so a config never silently
    /// carries dead parameters.
    pub fn validate(&self) -> Result<()> {
        if self.kind.needs_sim() && self.sim.is_none() {
            return Err(Error::config(
                "sim",
                format!("section required by kind {}", self.kind.as_str()),
            ));
        }
        let reject = |present: bool, name: &str| {
            if present {
                Err(Error::config(
                    name,
                    format!("section not used by kind {}", self.kind.as_str()),
                ))
            } else {
                Ok(())
            }
        };
        match self.kind {
            ExperimentKind::KernelVerify => {
                reject(self.sim.is_some(), "sim")?;
                reject(self.inequality.is_some(), "inequality")?;
            }
            ExperimentKind::InequalitySuite => {
                reject(self.sim.is_some(), "sim")?;
                reject(self.kernel.is_some(), "kernel")?;
            }
            _ => {
                reject(self.kernel.is_some(), "kernel")?;
                reject(self.inequality.is_some(), "inequality")?;
            }
        }
        if let Some(sim) = &self.sim {
            sim.validate()?;
        }
        Ok(())
    }

    /// Replaces every stochastic input with `seed` and records it.
    pub fn apply_seed(&mut self, seed: u64) {
        if let Some(sim) = &mut self.sim {
            if let InitialData::BandlimitedBump { seed: s } = &mut sim.initial_data {
                *s = seed;
            }
        }
        if let Some(ineq) = &mut self.inequality {
            ineq.seed = seed;
        }
        self.seed = Some(seed);
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct CliOverrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Option<ReportFormat>,
    pub jobs: Option<usize>,
}

/// What `run` hands back to the binary.
#[derive(Debug)]
pub struct RunOutcome {
    pub pass: bool,
    pub dir: PathBuf,
    /// One line per failing verdict.
    pub failures: Vec<String>,
}

/// Reads and parses a config file; JSON when the first byte is `{`,
/// otherwise TOML. Returns the raw text alongside for verbatim echoing.
pub fn load_config(path: &Path) -> Result<(String, ExperimentConfig)> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
    let config = parse_config(&raw)
        .map_err(|detail| Error::config(path.display().to_string(), detail))?;
    Ok((raw, config))
}

/// Parses config text (format-sniffed); the error string carries the parser's
/// key path and position.
pub fn parse_config(raw: &str) -> std::result::Result<ExperimentConfig, String> {
    if raw.trim_start().starts_with('{') {
        serde_json::from_str(raw).map_err(|e| e.to_string())
    } else {
        toml::from_str(raw).map_err(|e| e.to_string())
    }
}

fn out_root(config: &ExperimentConfig, ov: &CliOverrides) -> PathBuf {
    ov.out
        .clone()
        .or_else(|| config.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("sqg-lab-out"))
}

fn config_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "experiment".to_string())
}

fn with_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::config("jobs", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs one experiment end to end: parse, override, execute, write reports.
pub fn run(config_path: &Path, ov: &CliOverrides) -> Result<RunOutcome> {
    let (raw, mut config) = load_config(config_path)?;
    if config.sweep.is_some() {
        return Err(Error::config(
            "sweep",
            "this config declares a parameter grid; use the sweep command",
        ));
    }
    if let Some(f) = ov.format {
        config.format = Some(f);
    }
    if let Some(s) = ov.seed {
        config.apply_seed(s);
    }
    config.validate()?;
    let dir = out_root(&config, ov).join(config_stem(config_path));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.echo"), &raw)?;
    let report = match with_pool(ov.jobs, || run_experiment(&config, &raw))? {
        Ok(r) => r,
        Err(e) => {
            // flag the partial output before bubbling the failure up
            let _ = std::fs::write(dir.join("FAILED"), format!("{e}\n"));
            return Err(e);
        }
    };
    write_report(&report, &dir)?;
    Ok(RunOutcome {
        pass: report.pass,
        dir,
        failures: failures_of(&report.verdicts),
    })
}

fn failures_of(verdicts: &[Verdict]) -> Vec<String> {
    verdicts
        .iter()
        .filter(|v| !v.pass)
        .map(|v| {
            format!(
                "{}: measured={} target={} tolerance={}",
                v.name, v.measured, v.target, v.tolerance
            )
        })
        .collect()
}

/// Everything a single run produces. Sections are present per kind; the
/// config (parsed and raw) is echoed for reproducibility.
#[derive(Debug, Serialize)]
pub struct RunReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    /// The config file exactly as read.
    pub config_text: String,
    /// The verdicts that decide `pass`.
    pub verdicts: Vec<Verdict>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decay: Option<DecayReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearLemmaReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelVerifyReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inequality: Option<InequalitySuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duhamel: Option<DuhamelSection>,
}

/// Executes the configured experiment and assembles its report. The caller
/// is responsible for validation and file writing.
pub fn run_experiment(config: &ExperimentConfig, raw: &str) -> Result<RunReport> {
    config.validate()?;
    let tol = config.tolerances();
    let mut report = RunReport {
        kind: config.kind,
        config: config.clone(),
        config_text: raw.to_string(),
        verdicts: Vec::new(),
        pass: false,
        decay: None,
        profile: None,
        linear: None,
        kernel: None,
        inequality: None,
        duhamel: None,
    };
    match config.kind {
        ExperimentKind::Simulate => run_simulate(config, &tol, &mut report)?,
        ExperimentKind::Theorem1 => run_theorem1(config, &tol, &mut report)?,
        ExperimentKind::LinearLemma => run_linear_lemma(config, &tol, &mut report)?,
        ExperimentKind::KernelVerify => run_kernel_verify(config, &tol, &mut report)?,
        ExperimentKind::InequalitySuite => run_inequality_suite(config, &tol, &mut report)?,
        ExperimentKind::DuhamelCheck => run_duhamel_check(config, &tol, &mut report)?,
    }
    report.pass = report.verdicts.iter().all(|v| v.pass);
    Ok(report)
}

fn sim_of(config: &ExperimentConfig) -> &SimConfig {
    config.sim.as_ref().expect("validated sim section")
}

fn mass_drift_verdict(decay: &DecayReport, tol: f64) -> Verdict {
    let m0 = decay.initial_mass;
    let drift = decay
        .rows
        .iter()
        .map(|r| (r.mass - m0).abs())
        .fold(0.0, f64::max)
        / m0.abs().max(f64::MIN_POSITIVE);
    Verdict {
        name: "mass_drift".into(),
        pass: drift <= tol,
        measured: drift,
        target: 0.0,
        tolerance: tol,
    }
}

fn run_simulate(config: &ExperimentConfig, tol: &Tolerances, report: &mut RunReport) -> Result<()> {
    let traj = integrate(sim_of(config))?;
    let decay = decay_report(&traj)?;
    report.verdicts.push(mass_drift_verdict(&decay, tol.mass_drift()));
    report.verdicts.extend(decay.verdicts.iter().cloned());
    report.decay = Some(decay);
    Ok(())
}

fn run_theorem1(config: &ExperimentConfig, tol: &Tolerances, report: &mut RunReport) -> Result<()> {
    let traj = integrate(sim_of(config))?;
    let decay = decay_report(&traj)?;
    let profile = profile_residual_check(&traj)?;
    report.verdicts.push(mass_drift_verdict(&decay, tol.mass_drift()));
    report.verdicts.push(Verdict {
        name: "profile_ratio_slope".into(),
        pass: profile.ratio_slope.map(|s| s <= tol.profile_slope()).unwrap_or(false),
        measured: profile.ratio_slope.unwrap_or(f64::NAN),
        target: 0.0,
        tolerance: tol.profile_slope(),
    });
    report.verdicts.push(Verdict {
        name: "profile_late_excess".into(),
        pass: profile.late_excess.map(|e| e <= 1.0 + tol.profile_excess()).unwrap_or(false),
        measured: profile.late_excess.unwrap_or(f64::NAN),
        target: 1.0,
        tolerance: tol.profile_excess(),
    });
    report.decay = Some(decay);
    report.profile = Some(profile);
    Ok(())
}

fn run_linear_lemma(
    config: &ExperimentConfig,
    tol: &Tolerances,
    report: &mut RunReport,
) -> Result<()> {
    let mut sim = sim_of(config).clone();
    sim.linear_only = true;
    let traj = integrate(&sim)?;
    let rows = decay_rows(&traj)?;
    let series: Vec<(f64, f64, f64)> = rows
        .iter()
        .filter(|r| r.t > 0.0)
        .map(|r| (r.t, r.residual_r, r.contamination))
        .collect();
    let trusted: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(_, v, c)| v.is_finite() && v > 0.0 && c <= CONTAMINATION_LIMIT)
        .map(|&(t, v, _)| (t, v))
        .collect();
    let untrusted = series.len() - trusted.len();
    let sup = trusted.iter().map(|&(_, v)| v).fold(0.0, f64::max);
    let ts: Vec<f64> = trusted.iter().map(|&(t, _)| t).collect();
    let vs: Vec<f64> = trusted.iter().map(|&(_, v)| v).collect();
    let slope = fit::power_fit(&ts, &vs).ok().map(|f| f.slope);
    report.verdicts.push(Verdict {
        name: "linear_residual_slope".into(),
        pass: slope.map(|s| s <= tol.linear_slope()).unwrap_or(false),
        measured: slope.unwrap_or(f64::NAN),
        target: 0.0,
        tolerance: tol.linear_slope(),
    });
    let decay = decay_report(&traj)?;
    report.verdicts.push(mass_drift_verdict(&decay, tol.mass_drift()));
    report.linear = Some(LinearLemmaReport {
        series,
        sup,
        slope,
        untrusted,
    });
    report.decay = Some(decay);
    Ok(())
}

/// Kernel checks of one (alpha, t, grid) cell.
#[derive(Debug, Serialize)]
pub struct KernelVerifyReport {
    pub alpha: f64,
    pub t: f64,
    pub n: usize,
    pub box_length: f64,
    /// Discrete grid mass and its dual-lattice prediction.
    pub mass: f64,
    pub mass_predicted: f64,
    /// Sup-relative closed-form deviation over |x| <= L/4; only at
    /// alpha in {1, 2}, where a closed form exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub closed_form_error: Option<f64>,
    pub scaling_deviation: f64,
    pub tail_slope: f64,
    pub tail_predicted: f64,
    pub semigroup_defect: f64,
    /// (r, free-space kernel, closed form or NaN, relative error or NaN).
    pub radial: Vec<(f64, f64, f64, f64)>,
}

fn closed_form_at(alpha: f64, t: f64, r: f64) -> Option<f64> {
    if (alpha - 1.0).abs() <= 1e-12 {
        Some(closed_form_alpha1(t, r))
    } else if (alpha - 2.0).abs() <= 1e-12 {
        Some(closed_form_alpha2(t, r))
    } else {
        None
    }
}

/// Free-space closed form summed over periodic images, the reference for the
/// grid kernel. The block is 49 x 49 images plus the analytic ring tail of
/// the r^(-3) lattice sum for alpha = 1; the Gaussian needs one ring only.
fn periodized_closed_form(alpha: f64, t: f64, l: f64, x1: f64, x2: f64) -> Option<f64> {
    let k: i32 = if (alpha - 1.0).abs() <= 1e-12 { 24 } else { 1 };
    let mut acc = 0.0;
    for m1 in -k..=k {
        for m2 in -k..=k {
            let r = (x1 + f64::from(m1) * l).hypot(x2 + f64::from(m2) * l);
            acc += closed_form_at(alpha, t, r)?;
        }
    }
    if (alpha - 1.0).abs() <= 1e-12 {
        acc += t / ((f64::from(k) + 0.5) * l.powi(3));
    }
    Some(acc)
}

fn run_kernel_verify(
    config: &ExperimentConfig,
    tol: &Tolerances,
    report: &mut RunReport,
) -> Result<()> {
    let p = config.kernel.unwrap_or_default();
    let grid = GridSpec::new(p.n, p.box_length)?;
    let spec = KernelSpec::new(p.alpha, p.t)?;
    let field = kernel_on_grid(&spec, grid)?;

    let mass = field.mass();
    let mass_predicted = 1.0 + dual_lattice_mass_excess(grid, p.alpha, p.t);
    report.verdicts.push(Verdict {
        name: "grid_mass".into(),
        pass: (mass - mass_predicted).abs() <= tol.mass_excess(),
        measured: (mass - mass_predicted).abs(),
        target: 0.0,
        tolerance: tol.mass_excess(),
    });

    // closed-form comparison on a strided sample of the window
    let closed_form_error = if closed_form_at(p.alpha, p.t, 0.0).is_some() {
        let x = grid.coords();
        let sup = closed_form_at(p.alpha, p.t, 0.0).unwrap();
        let mut worst = 0.0f64;
        for i in (0..p.n).step_by(3) {
            for j in (0..p.n).step_by(3) {
                if x[i].hypot(x[j]) <= p.box_length / 4.0 {
                    let reference =
                        periodized_closed_form(p.alpha, p.t, p.box_length, x[i], x[j]).unwrap();
                    worst = worst.max((field.phys()[(i, j)] - reference).abs() / sup);
                }
            }
        }
        report.verdicts.push(Verdict {
            name: "closed_form".into(),
            pass: worst <= tol.closed_form(),
            measured: worst,
            target: 0.0,
            tolerance: tol.closed_form(),
        });
        Some(worst)
    } else {
        None
    };

    let width = p.t.powf(1.0 / p.alpha);
    let scaling_deviation = scaling_check(p.alpha, p.t, &[0.0, width, 3.0 * width, 9.0 * width])?;
    report.verdicts.push(Verdict {
        name: "scaling".into(),
        pass: scaling_deviation <= tol.scaling(),
        measured: scaling_deviation,
        target: 0.0,
        tolerance: tol.scaling(),
    });

    let tail_predicted = -(2.0 + p.alpha);
    let r_max = p.tail_r_max.unwrap_or(120.0 * width);
    let tail_slope = tail_exponent(&spec, r_max)?.slope;
    report.verdicts.push(Verdict {
        name: "tail_exponent".into(),
        pass: (tail_slope - tail_predicted).abs() <= tol.tail_slope(),
        measured: tail_slope,
        target: tail_predicted,
        tolerance: tol.tail_slope(),
    });

    // half-time composition lands back on the configured t
    let sg = semigroup_defect(grid, p.alpha, p.t / 2.0, p.t / 2.0)?;
    report.verdicts.push(Verdict {
        name: "semigroup".into(),
        pass: sg <= tol.semigroup(),
        measured: sg,
        target: 0.0,
        tolerance: tol.semigroup(),
    });

    let radial = radial_table(&spec, p.box_length / 4.0, 65)?
        .into_iter()
        .map(|(r, v)| match closed_form_at(p.alpha, p.t, r) {
            Some(c) => (r, v, c, (v - c).abs() / c.abs().max(f64::MIN_POSITIVE)),
            None => (r, v, f64::NAN, f64::NAN),
        })
        .collect();

    report.kernel = Some(KernelVerifyReport {
        alpha: p.alpha,
        t: p.t,
        n: p.n,
        box_length: p.box_length,
        mass,
        mass_predicted,
        closed_form_error,
        scaling_deviation,
        tail_slope,
        tail_predicted,
        semigroup_defect: sg,
        radial,
    });
    Ok(())
}

/// One named member-value table of the suite, kept for the CSV artifacts.
#[derive(Debug, Serialize)]
pub struct NamedEnsemble {
    pub name: String,
    pub report: EnsembleReport,
}

/// Coarse/fine ensemble maxima and their relative change.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct StabilityCheck {
    pub coarse_max: f64,
    pub fine_max: f64,
    pub change: f64,
}

/// All inequality-suite measurements.
#[derive(Debug, Serialize)]
pub struct InequalitySuiteReport {
    /// (alpha, q, most negative relative gap over the ensemble).
    pub sv_worst: Vec<(f64, f64, f64)>,
    pub hls: StabilityCheck,
    pub gn: StabilityCheck,
    pub kato_ponce: StabilityCheck,
    /// Defect at alpha = 1, h = 1e-3 (exact symbol: rounding floor).
    pub commutator_defect: f64,
    /// Observed order from halving h at alpha = 1.5, expected 2.
    pub commutator_order: f64,
    #[serde(skip)]
    pub ensembles: Vec<NamedEnsemble>,
}

fn stability_verdict(name: &str, check: StabilityCheck, tol: f64) -> Verdict {
    Verdict {
        name: name.into(),
        pass: check.change <= tol,
        measured: check.change,
        target: 0.0,
        tolerance: tol,
    }
}

fn run_inequality_suite(
    config: &ExperimentConfig,
    tol: &Tolerances,
    report: &mut RunReport,
) -> Result<()> {
    let p = config.inequality.clone().unwrap_or_default();
    let espec = p.ensemble();
    let grid = GridSpec::new(p.n, p.box_length)?;
    let mut ensembles = Vec::new();

    // Stroock-Varopoulos: the one true inequality; per-member relative gap
    let mut sv_worst = Vec::new();
    for &alpha in &p.alphas {
        for &q in &p.qs {
            let rep = ensemble_sweep(&espec, grid, |f| {
                sv_gap(f, q, alpha).map(|g| {
                    if g.lhs.abs() > 0.0 {
                        g.gap / g.lhs.abs()
                    } else {
                        0.0
                    }
                })
            })?;
            let worst = rep.values.iter().cloned().fold(f64::INFINITY, f64::min);
            sv_worst.push((alpha, q, worst));
            report.verdicts.push(Verdict {
                name: format!("sv_gap_a{alpha}_q{q}"),
                pass: worst >= -tol.sv_floor(),
                measured: worst,
                target: 0.0,
                tolerance: tol.sv_floor(),
            });
            ensembles.push(NamedEnsemble {
                name: format!("sv_a{alpha}_q{q}"),
                report: rep,
            });
        }
    }

    // ratio maxima must be stable between the two grids
    let kp_exponents = HolderExponents {
        p: 2.0,
        p1: f64::INFINITY,
        p2: 2.0,
        p3: 2.0,
        p4: f64::INFINITY,
    };
    let mut paired = |name: &str, op: &(dyn Fn(&crate::field::Field, GridSpec) -> Result<f64> + Sync)|
     -> Result<StabilityCheck> {
        let mut maxima = [0.0f64; 2];
        for (slot, n) in [(0usize, p.n_coarse), (1, p.n_fine)] {
            let g = GridSpec::new(n, p.box_length)?;
            let rep = ensemble_sweep(&espec, g, |f| op(f, g))?;
            maxima[slot] = rep.max;
            ensembles.push(NamedEnsemble {
                name: format!("{name}_n{n}"),
                report: rep,
            });
        }
        let change = (maxima[0] - maxima[1]).abs() / maxima[0].abs().max(maxima[1].abs());
        Ok(StabilityCheck {
            coarse_max: maxima[0],
            fine_max: maxima[1],
            change,
        })
    };
    let hls = paired("hls", &|f, _| hls_ratio(f, 1.0, 4.0 / 3.0))?;
    let gn = paired("gn", &|f, _| gn_ratio(f, 0.5, 1.5, 2.0, 2.0))?;
    let kato = paired("kato_ponce", &|f, g| {
        let partner = crate::inequality::ensemble_member(&espec, g, 0)?;
        kato_ponce_ratio(f, &partner, 1.5, &kp_exponents)
    })?;
    report.verdicts.push(stability_verdict("hls_stability", hls, tol.stability()));
    report.verdicts.push(stability_verdict("gn_stability", gn, tol.stability()));
    report
        .verdicts
        .push(stability_verdict("kato_ponce_stability", kato, tol.stability()));

    // weight-commutator identity: floor at the exact symbol, order off it
    let gaussian = |x: f64, y: f64| (-(x * x + y * y) / 2.0).exp();
    let defect = weight_commutator_check(gaussian, 1.0, (1.0, 0.0), 1e-3)?;
    report.verdicts.push(Verdict {
        name: "commutator_defect".into(),
        pass: defect <= tol.commutator(),
        measured: defect,
        target: 0.0,
        tolerance: tol.commutator(),
    });
    let e1 = weight_commutator_check(gaussian, 1.5, (1.0, 0.0), 1e-3)?;
    let e2 = weight_commutator_check(gaussian, 1.5, (1.0, 0.0), 5e-4)?;
    let order = (e1 / e2).log2();
    report.verdicts.push(Verdict {
        name: "commutator_order".into(),
        pass: (order - 2.0).abs() <= 0.3,
        measured: order,
        target: 2.0,
        tolerance: 0.3,
    });

    report.inequality = Some(InequalitySuiteReport {
        sv_worst,
        hls,
        gn,
        kato_ponce: kato,
        commutator_defect: defect,
        commutator_order: order,
        ensembles,
    });
    Ok(())
}

/// Mild-solution consistency measurements.
#[derive(Debug, Serialize)]
pub struct DuhamelSection {
    /// (t, relative residual) at each evaluation time.
    pub residuals: Vec<(f64, f64)>,
    pub worst: f64,
    /// Worst residual after halving the CFL number.
    pub worst_halved: f64,
    /// Successive Picard difference norms, relative to the data norm.
    pub picard_differences: Vec<f64>,
    /// Largest consecutive ratio of those differences, ignoring pairs that
    /// already sit at the rounding floor (the fixed point was reached).
    pub picard_ratio: f64,
}

fn run_duhamel_check(
    config: &ExperimentConfig,
    tol: &Tolerances,
    report: &mut RunReport,
) -> Result<()> {
    let sim = sim_of(config).clone();
    let horizon = sim.t_end.min(1.0).max(sim.sample_t0);
    let eval_times = [0.25 * horizon, 0.5 * horizon, horizon];
    let panels = 20;

    let base = duhamel_residual(&sim, &eval_times, panels)?;
    report.verdicts.push(Verdict {
        name: "duhamel_residual".into(),
        pass: base.worst <= tol.duhamel_residual(),
        measured: base.worst,
        target: 0.0,
        tolerance: tol.duhamel_residual(),
    });

    // dt refinement on a cap-limited pair. Small data never binds the CFL
    // rule and the quadrature stops space steps at most ~horizon/10 apart,
    // so the caps must sit below that to change the schedule at all. The
    // dt error rides on the quadrature floor of the Duhamel integral; the
    // decrease under halving is small but systematic.
    let mut coarse_cfg = sim.clone();
    coarse_cfg.dt_cap = Some(horizon / 20.0);
    let mut halved_cfg = sim.clone();
    halved_cfg.dt_cap = Some(horizon / 40.0);
    let coarse = duhamel_residual(&coarse_cfg, &eval_times, panels)?;
    let halved = duhamel_residual(&halved_cfg, &eval_times, panels)?;
    report.verdicts.push(Verdict {
        name: "duhamel_refinement".into(),
        pass: halved.worst <= coarse.worst,
        measured: halved.worst / coarse.worst.max(f64::MIN_POSITIVE),
        target: 1.0,
        tolerance: 0.0,
    });

    let grid = sim.grid()?;
    let theta0 = make_initial_data(&sim.initial_data, sim.resolved_amplitude(), grid)?;
    let diffs = picard_differences(&theta0, sim.alpha, horizon, 5)?;
    let ratio = diffs
        .windows(2)
        .filter(|w| w[0] > 1e-14)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    report.verdicts.push(Verdict {
        name: "picard_contraction".into(),
        pass: ratio <= tol.picard_ratio(),
        measured: ratio,
        target: 0.0,
        tolerance: tol.picard_ratio(),
    });

    report.duhamel = Some(DuhamelSection {
        residuals: base.per_time,
        worst: base.worst,
        worst_halved: halved.worst,
        picard_differences: diffs,
        picard_ratio: ratio,
    });
    Ok(())
}

fn verdict_csv(verdicts: &[Verdict]) -> String {
    let mut out = String::from("name,measured,target,tolerance,pass\n");
    for v in verdicts {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            v.name, v.measured, v.target, v.tolerance, v.pass
        );
    }
    out
}

/// Writes the report files for one finished run into `dir`.
pub fn write_report(report: &RunReport, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let format = report.config.resolved_format();
    if format.csv() {
        std::fs::write(dir.join("report.csv"), verdict_csv(&report.verdicts))?;
        if let Some(decay) = &report.decay {
            std::fs::write(dir.join("rows.csv"), decay.to_csv())?;
        }
        if let Some(profile) = &report.profile {
            let mut out = String::from("t,residual,ratio\n");
            for &(t, r, ratio) in &profile.series {
                let _ = writeln!(out, "{t},{r},{ratio}");
            }
            std::fs::write(dir.join("profile.csv"), out)?;
        }
        if let Some(linear) = &report.linear {
            let mut out = String::from("t,residual,contamination\n");
            for &(t, r, c) in &linear.series {
                let _ = writeln!(out, "{t},{r},{c}");
            }
            std::fs::write(dir.join("series.csv"), out)?;
        }
        if let Some(k) = &report.kernel {
            let mut out = String::from("r,kernel,reference,rel_error\n");
            for &(r, v, c, e) in &k.radial {
                let _ = writeln!(out, "{r},{v},{c},{e}");
            }
            std::fs::write(dir.join("radial.csv"), out)?;
        }
        if let Some(iq) = &report.inequality {
            let sub = dir.join("ensembles");
            std::fs::create_dir_all(&sub)?;
            for e in &iq.ensembles {
                std::fs::write(sub.join(format!("{}.csv", e.name)), e.report.to_csv())?;
            }
        }
        if let Some(d) = &report.duhamel {
            let mut out = String::from("t,residual\n");
            for &(t, r) in &d.residuals {
                let _ = writeln!(out, "{t},{r}");
            }
            std::fs::write(dir.join("residuals.csv"), out)?;
            let mut out = String::from("iterate,difference\n");
            for (i, &v) in d.picard_differences.iter().enumerate() {
                let _ = writeln!(out, "{},{}", i + 1, v);
            }
            std::fs::write(dir.join("picard.csv"), out)?;
        }
    }
    if format.json() {
        let mut text = serde_json::to_string_pretty(report)?;
        text.push('\n');
        std::fs::write(dir.join("report.json"), text)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- sweep --

/// One cell of a sweep grid: the overridden axes only.
#[derive(Clone, Debug, Default, Serialize)]
pub struct CellParams {
    pub label: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

/// Exponent columns of the aggregate table; absent when a cell's kind or
/// fit does not produce them.
#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct CellMetrics {
    pub linf_measured: Option<f64>,
    pub linf_predicted: Option<f64>,
    pub sobolev_measured: Option<f64>,
    pub sobolev_predicted: Option<f64>,
    pub moment_measured: Option<f64>,
    pub moment_bound: Option<f64>,
    pub residual_slope: Option<f64>,
}

/// Aggregate row of one executed (or failed) sweep cell.
#[derive(Clone, Debug, Serialize)]
pub struct CellRow {
    #[serde(flatten)]
    pub params: CellParams,
    /// "ok" or "error".
    pub status: String,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(flatten)]
    pub metrics: CellMetrics,
    pub verdicts: Vec<Verdict>,
}

/// A coarse/fine exponent delta from an n-refinement pair.
#[derive(Clone, Debug, Serialize)]
pub struct RefinementDelta {
    pub quantity: String,
    pub cell_coarse: String,
    pub cell_fine: String,
    pub coarse: f64,
    pub fine: f64,
    /// Absolute difference of the fitted exponents.
    pub delta: f64,
}

/// What `sweep` hands back to the binary.
#[derive(Debug)]
pub struct SweepOutcome {
    pub pass: bool,
    pub dir: PathBuf,
    pub failures: Vec<String>,
}

fn fmt_axis(v: f64) -> String {
    format!("{v}")
}

fn enumerate_cells(grid: &SweepGrid) -> Vec<CellParams> {
    // treat an empty axis as "keep the base value"
    let alphas: Vec<Option<f64>> = if grid.alpha.is_empty() {
        vec![None]
    } else {
        grid.alpha.iter().map(|&v| Some(v)).collect()
    };
    let ns: Vec<Option<usize>> = if grid.n.is_empty() {
        vec![None]
    } else {
        grid.n.iter().map(|&v| Some(v)).collect()
    };
    let seeds: Vec<Option<u64>> = if grid.seed.is_empty() {
        vec![None]
    } else {
        grid.seed.iter().map(|&v| Some(v)).collect()
    };
    let amps: Vec<Option<f64>> = if grid.amplitude.is_empty() {
        vec![None]
    } else {
        grid.amplitude.iter().map(|&v| Some(v)).collect()
    };
    let mut cells = Vec::new();
    for &alpha in &alphas {
        for &n in &ns {
            for &seed in &seeds {
                for &amplitude in &amps {
                    let mut segments = Vec::new();
                    if let Some(a) = alpha {
                        segments.push(format!("alpha{}", fmt_axis(a)));
                    }
                    if let Some(n) = n {
                        segments.push(format!("n{n}"));
                    }
                    if let Some(s) = seed {
                        segments.push(format!("seed{s}"));
                    }
                    if let Some(e) = amplitude {
                        segments.push(format!("amp{}", fmt_axis(e)));
                    }
                    let label = if segments.is_empty() {
                        "cell".to_string()
                    } else {
                        segments.join("-")
                    };
                    cells.push(CellParams {
                        label,
                        alpha,
                        n,
                        seed,
                        amplitude,
                    });
                }
            }
        }
    }
    cells
}

fn apply_cell(base: &ExperimentConfig, cell: &CellParams) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    if let Some(a) = cell.alpha {
        match (&mut cfg.sim, &mut cfg.kernel) {
            (Some(sim), _) => sim.alpha = a,
            (None, Some(k)) => k.alpha = a,
            (None, None) => {
                return Err(Error::config(
                    "sweep.alpha",
                    format!("kind {} has no alpha parameter", cfg.kind.as_str()),
                ))
            }
        }
    }
    if let Some(n) = cell.n {
        match (&mut cfg.sim, &mut cfg.kernel) {
            (Some(sim), _) => sim.n = n,
            (None, Some(k)) => k.n = n,
            (None, None) => {
                return Err(Error::config(
                    "sweep.n",
                    format!("kind {} has no n parameter", cfg.kind.as_str()),
                ))
            }
        }
    }
    if let Some(e) = cell.amplitude {
        match &mut cfg.sim {
            Some(sim) => sim.amplitude = Some(e),
            None => {
                return Err(Error::config(
                    "sweep.amplitude",
                    format!("kind {} has no amplitude parameter", cfg.kind.as_str()),
                ))
            }
        }
    }
    if let Some(s) = cell.seed {
        cfg.apply_seed(s);
    }
    Ok(cfg)
}

fn cell_metrics(report: &RunReport) -> CellMetrics {
    let mut m = CellMetrics::default();
    if let Some(d) = &report.decay {
        m.linf_measured = d.linf_fit.map(|f| f.param);
        m.linf_predicted = Some(-2.0 / d.alpha);
        m.sobolev_measured = d.sobolev_fit.map(|f| f.param);
        m.sobolev_predicted = Some(-(1.0 + d.sigma) / d.alpha);
        m.moment_measured = d.moment_fit.map(|f| f.param);
        m.moment_bound = Some(2.0 / (d.alpha * d.q));
        m.residual_slope = d.residual_fit.map(|f| f.param);
    }
    if let Some(p) = &report.profile {
        m.residual_slope = p.ratio_slope.or(m.residual_slope);
    }
    m
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn aggregate_csv(rows: &[CellRow]) -> String {
    let mut out = String::from(
        "cell,alpha,n,seed,amplitude,status,pass,linf_measured,linf_predicted,\
         sobolev_measured,sobolev_predicted,moment_measured,moment_bound,residual_slope\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.params.label,
            opt_cell(r.params.alpha),
            r.params.n.map(|n| n.to_string()).unwrap_or_default(),
            r.params.seed.map(|s| s.to_string()).unwrap_or_default(),
            opt_cell(r.params.amplitude),
            r.status,
            r.pass,
            opt_cell(r.metrics.linf_measured),
            opt_cell(r.metrics.linf_predicted),
            opt_cell(r.metrics.sobolev_measured),
            opt_cell(r.metrics.sobolev_predicted),
            opt_cell(r.metrics.moment_measured),
            opt_cell(r.metrics.moment_bound),
            opt_cell(r.metrics.residual_slope),
        );
    }
    out
}

fn refinement_csv(deltas: &[RefinementDelta]) -> String {
    let mut out = String::from("quantity,cell_coarse,cell_fine,coarse,fine,delta\n");
    for d in deltas {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            d.quantity, d.cell_coarse, d.cell_fine, d.coarse, d.fine, d.delta
        );
    }
    out
}

/// Cross-cell exponent deltas between consecutive n values at otherwise
/// identical parameters.
fn refinement_deltas(cells: &[CellParams], rows: &[CellRow]) -> Vec<RefinementDelta> {
    let mut deltas = Vec::new();
    let quantities: [(&str, fn(&CellMetrics) -> Option<f64>); 4] = [
        ("linf_exponent", |m| m.linf_measured),
        ("sobolev_exponent", |m| m.sobolev_measured),
        ("moment_exponent", |m| m.moment_measured),
        ("residual_slope", |m| m.residual_slope),
    ];
    for (i, a) in cells.iter().enumerate() {
        for (j, b) in cells.iter().enumerate() {
            let (Some(na), Some(nb)) = (a.n, b.n) else {
                continue;
            };
            if na >= nb || a.alpha != b.alpha || a.seed != b.seed || a.amplitude != b.amplitude {
                continue;
            }
            // consecutive pair: no cell with n strictly between, same otherwise
            let intermediate = cells.iter().any(|c| {
                c.alpha == a.alpha
                    && c.seed == a.seed
                    && c.amplitude == a.amplitude
                    && c.n.map(|n| na < n && n < nb).unwrap_or(false)
            });
            if intermediate {
                continue;
            }
            for (name, get) in quantities {
                if let (Some(x), Some(y)) = (get(&rows[i].metrics), get(&rows[j].metrics)) {
                    deltas.push(RefinementDelta {
                        quantity: name.to_string(),
                        cell_coarse: a.label.clone(),
                        cell_fine: b.label.clone(),
                        coarse: x,
                        fine: y,
                        delta: (x - y).abs(),
                    });
                }
            }
        }
    }
    deltas
}

/// Aggregate report of a sweep, echoed config included.
#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub config_text: String,
    pub cells: Vec<CellRow>,
    pub refinement: Vec<RefinementDelta>,
    pub pass: bool,
}

/// Runs every cell of the grid (in parallel up to `--jobs`), isolating
/// failures, and writes per-cell reports plus the aggregate.
pub fn sweep(config_path: &Path, ov: &CliOverrides) -> Result<SweepOutcome> {
    let (raw, mut base) = load_config(config_path)?;
    let grid = base.sweep.clone().ok_or_else(|| {
        Error::config("sweep", "section required: lists of alpha, n, seed, or amplitude")
    })?;
    if grid.is_empty() {
        return Err(Error::config("sweep", "every axis is empty"));
    }
    if let Some(f) = ov.format {
        base.format = Some(f);
    }
    if let Some(s) = ov.seed {
        base.apply_seed(s);
    }
    let dir = out_root(&base, ov).join(config_stem(config_path));
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.echo"), &raw)?;

    let cells = enumerate_cells(&grid);
    // cell configs are validated inside the isolated runs
    let results: Vec<std::result::Result<RunReport, String>> = with_pool(ov.jobs, || {
        use rayon::prelude::*;
        cells
            .par_iter()
            .map(|cell| {
                let run_one = || -> Result<RunReport> {
                    let cfg = apply_cell(&base, cell)?;
                    cfg.validate()?;
                    let report = run_experiment(&cfg, &raw)?;
                    write_report(&report, &dir.join(&cell.label))?;
                    Ok(report)
                };
                match std::panic::catch_unwind(std::panic::AssertUnwindSafe(run_one)) {
                    Ok(Ok(report)) => Ok(report),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => Err(panic_text(panic)),
                }
            })
            .collect()
    })?;

    let mut rows = Vec::with_capacity(cells.len());
    for (cell, result) in cells.iter().zip(&results) {
        match result {
            Ok(report) => rows.push(CellRow {
                params: cell.clone(),
                status: "ok".into(),
                pass: report.pass,
                error: None,
                metrics: cell_metrics(report),
                verdicts: report.verdicts.clone(),
            }),
            Err(message) => {
                let _ = std::fs::create_dir_all(dir.join(&cell.label));
                let _ = std::fs::write(
                    dir.join(&cell.label).join("FAILED"),
                    format!("{message}\n"),
                );
                rows.push(CellRow {
                    params: cell.clone(),
                    status: "error".into(),
                    pass: false,
                    error: Some(message.clone()),
                    metrics: CellMetrics::default(),
                    verdicts: Vec::new(),
                });
            }
        }
    }

    let refinement = refinement_deltas(&cells, &rows);
    let pass = rows.iter().all(|r| r.pass);
    let format = base.resolved_format();
    if format.csv() {
        std::fs::write(dir.join("aggregate.csv"), aggregate_csv(&rows))?;
        if !refinement.is_empty() {
            std::fs::write(dir.join("refinement.csv"), refinement_csv(&refinement))?;
        }
    }
    if format.json() {
        let report = SweepReport {
            kind: base.kind,
            config: base.clone(),
            config_text: raw.clone(),
            cells: rows.clone(),
            refinement,
            pass,
        };
        let mut text = serde_json::to_string_pretty(&report)?;
        text.push('\n');
        std::fs::write(dir.join("aggregate.json"), text)?;
    }

    let mut failures = Vec::new();
    for row in &rows {
        if let Some(e) = &row.error {
            failures.push(format!("{}: {e}", row.params.label));
        } else {
            for f in failures_of(&row.verdicts) {
                failures.push(format!("{}: {f}", row.params.label));
            }
        }
    }
    Ok(SweepOutcome { pass, dir, failures })
}

fn panic_text(panic: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        format!("panic: {s}")
    } else if let Some(s) = panic.downcast_ref::<String>() {
        format!("panic: {s}")
    } else {
        "panic".to_string()
    }
}
