//! Named experiments with JSON configuration, CSV tables and a manifest.
//!
//! Each experiment returns its embedded checks; [`run`] writes the tables
//! into the output directory and a `manifest.json` recording the config
//! hash, the crate version and a SHA-256 of every produced file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::attractor::{
    absorbing_radius_additive, absorbing_radius_multiplicative, absorbing_radius_wz, gaussian_vortex,
    ndt1_growth_bound, pullback_run, tail_mass, usc_experiment, PullbackSchedule, RadiusForm, RadiusWindow,
    TailCutoff, WzRadiusConstants, DEFAULT_YOUNG_CONSTANT,
};
use crate::diffusion::{validate_assumption, Condition, DiffusionTerm, DiffusionVariant, GrowthFit};
use crate::dynamics::{energy_residual, integrate, CbfParams, Forcing, StepperConfig, WzCbf};
use crate::error::{Error, Result};
use crate::io::{save_ensemble, write_csv};
use crate::noise::{noise_diagnostics, NoiseParams, NoiseWindow, WienerPath};
use crate::spectral::{
    check_a215, check_monotonicity_c, gateaux_c, lp_integral, nonlinear_c, random_field, taylor_green, trilinear_b,
    TorusGrid, VelocityField,
};
use crate::transforms::{wz_solution_convergence, AdditiveProfile, NoiseMode, NoiseSource, SystemSpec, TransformKind};

/// Version of the artifact layout written by [`run`].
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    NoiseConvergence,
    OuConvergence,
    OperatorAudit,
    NonlinearAudit,
    EnergyAudit,
    Decay,
    WzSolutionConvergence,
    Absorb,
    RadiusConvergence,
    Usc,
    ValidateAssumptions,
    TailDiagnostic,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 12] = [
        ExperimentKind::NoiseConvergence,
        ExperimentKind::OuConvergence,
        ExperimentKind::OperatorAudit,
        ExperimentKind::NonlinearAudit,
        ExperimentKind::EnergyAudit,
        ExperimentKind::Decay,
        ExperimentKind::WzSolutionConvergence,
        ExperimentKind::Absorb,
        ExperimentKind::RadiusConvergence,
        ExperimentKind::Usc,
        ExperimentKind::ValidateAssumptions,
        ExperimentKind::TailDiagnostic,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::NoiseConvergence => "noise-convergence",
            ExperimentKind::OuConvergence => "ou-convergence",
            ExperimentKind::OperatorAudit => "operator-audit",
            ExperimentKind::NonlinearAudit => "nonlinear-audit",
            ExperimentKind::EnergyAudit => "energy-audit",
            ExperimentKind::Decay => "decay",
            ExperimentKind::WzSolutionConvergence => "wz-solution-convergence",
            ExperimentKind::Absorb => "absorb",
            ExperimentKind::RadiusConvergence => "radius-convergence",
            ExperimentKind::Usc => "usc",
            ExperimentKind::ValidateAssumptions => "validate-assumptions",
            ExperimentKind::TailDiagnostic => "tail-diagnostic",
        }
    }

    /// Whether the experiment runs the additive or multiplicative system.
    pub fn needs_variant(&self) -> bool {
        matches!(self, ExperimentKind::WzSolutionConvergence | ExperimentKind::Usc)
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub box_length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 64,
            box_length: 2.0 * std::f64::consts::PI,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    Zero,
    ConstantG,
    LinearU,
    Ndt1,
    Ndt2,
    Ndt3,
}

/// `κ` and `σ` come from the noise section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffusionSpec {
    pub variant: DiffusionKind,
    /// Growth exponent of `ndt3`.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_q() -> f64 {
    2.0
}

impl Default for DiffusionSpec {
    fn default() -> Self {
        DiffusionSpec {
            variant: DiffusionKind::Ndt1,
            q: default_q(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForcingKind {
    Zero,
    TaylorGreen,
}

/// `f(t) = e^{rate·t} · amplitude · TG`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcingSpec {
    pub kind: ForcingKind,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub rate: f64,
}

impl Default for ForcingSpec {
    fn default() -> Self {
        ForcingSpec {
            kind: ForcingKind::TaylorGreen,
            amplitude: 0.3,
            rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Schedule {
    /// Anchor time.
    pub s: f64,
    /// Horizon `T`.
    pub horizon: f64,
    pub dt: f64,
    pub store_stride: usize,
    pub delta_list: Vec<f64>,
    /// Pullback depths, increasing.
    pub depths: Vec<f64>,
    /// Step of the sampled Wiener path.
    pub path_step: f64,
    /// Path length kept before the earliest time used, for OU burn-in.
    pub history: f64,
    pub ic_count: usize,
    /// Largest `‖u₀‖_H` in the initial family.
    pub ic_norm: f64,
    /// Random samples for audits and validators.
    pub samples: usize,
    pub radius_window: f64,
    pub cutoffs: Vec<f64>,
    pub r_list: Vec<f64>,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            s: 0.0,
            horizon: 2.0,
            dt: 1e-3,
            store_stride: 10,
            delta_list: vec![0.2, 0.1, 0.05],
            depths: vec![10.0, 12.0],
            path_step: 1e-3,
            history: 40.0,
            ic_count: 4,
            ic_norm: 2.0,
            samples: 100,
            radius_window: 60.0,
            cutoffs: vec![0.5, 0.75, 1.0, 1.25, 1.5],
            r_list: vec![1.5, 2.0, 3.0, 5.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variant: Option<TransformKind>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default)]
    pub cbf: CbfParams,
    #[serde(default)]
    pub noise: NoiseParams,
    #[serde(default)]
    pub diffusion: DiffusionSpec,
    #[serde(default)]
    pub forcing: ForcingSpec,
    #[serde(default)]
    pub schedule: Schedule,
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    #[serde(default = "one")]
    pub seed_count: usize,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
}

fn one() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn cfg_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

fn multiple_of(x: f64, step: f64) -> bool {
    let k = (x / step).round();
    k >= 1.0 && (k * step - x).abs() <= 1e-9 * x.abs().max(step)
}

impl ExperimentConfig {
    /// Desk-scale settings for each experiment.
    pub fn preset(kind: ExperimentKind, variant: Option<TransformKind>) -> Self {
        let mut c = ExperimentConfig {
            experiment: kind,
            variant,
            grid: GridSpec::default(),
            cbf: CbfParams::default(),
            noise: NoiseParams::default(),
            diffusion: DiffusionSpec::default(),
            forcing: ForcingSpec::default(),
            schedule: Schedule::default(),
            seed: 1,
            seed_count: 1,
            output_dir: PathBuf::from("out").join(kind.name()),
        };
        let sch = &mut c.schedule;
        match kind {
            ExperimentKind::NoiseConvergence => {
                sch.horizon = 5.0;
                c.seed_count = 5;
            }
            ExperimentKind::OuConvergence => {
                sch.horizon = 5.0;
                c.seed_count = 5;
            }
            ExperimentKind::OperatorAudit | ExperimentKind::NonlinearAudit => {}
            ExperimentKind::EnergyAudit => {
                c.noise.kappa = 0.1;
                sch.horizon = 1.0;
            }
            ExperimentKind::Decay => {
                c.forcing.kind = ForcingKind::Zero;
                c.diffusion.variant = DiffusionKind::Zero;
                sch.horizon = 4.0;
                sch.dt = 2e-3;
                sch.ic_norm = 10.0;
            }
            ExperimentKind::WzSolutionConvergence => {
                c.seed_count = 3;
                c.variant = variant.or(Some(TransformKind::Additive));
            }
            ExperimentKind::Absorb => {
                c.noise.kappa = 0.1;
                sch.dt = 2e-3;
                sch.depths = vec![1.0, 2.0, 4.0, 6.0, 8.0];
                sch.ic_count = 8;
                sch.ic_norm = 10.0;
            }
            ExperimentKind::RadiusConvergence => {
                sch.delta_list = vec![0.2, 0.1, 0.05, 0.025];
                sch.path_step = 5e-3;
                sch.history = 80.0;
            }
            ExperimentKind::Usc => {
                c.variant = variant.or(Some(TransformKind::Additive));
                sch.dt = 5e-3;
                sch.ic_count = 3;
            }
            ExperimentKind::ValidateAssumptions => {
                c.noise.kappa = 0.1;
                sch.samples = 200;
            }
            ExperimentKind::TailDiagnostic => {}
        }
        c
    }

    /// Field-level checks of everything the experiment will use.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.n < 8 || !g.n.is_multiple_of(2) {
            return Err(cfg_err("grid.n", format!("{} must be even and >= 8", g.n)));
        }
        if !(g.box_length > 0.0) || !g.box_length.is_finite() {
            return Err(cfg_err("grid.box_length", "must be positive"));
        }
        self.cbf.validate().map_err(|e| cfg_err("cbf", e.to_string()))?;
        self.noise.validate().map_err(|e| cfg_err("noise", e.to_string()))?;
        if self.seed_count == 0 {
            return Err(cfg_err("seed_count", "must be >= 1"));
        }
        let s = &self.schedule;
        for (name, v) in [("schedule.dt", s.dt), ("schedule.path_step", s.path_step)] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(cfg_err(name, format!("{v} must be positive")));
            }
        }
        if !(s.horizon >= 0.0) || !s.horizon.is_finite() {
            return Err(cfg_err("schedule.horizon", "must be >= 0"));
        }
        if s.horizon > 0.0 && !multiple_of(s.horizon, s.dt) {
            return Err(cfg_err("schedule.horizon", "must be a multiple of dt"));
        }
        if !(s.history >= 0.0) {
            return Err(cfg_err("schedule.history", "must be >= 0"));
        }
        if s.store_stride == 0 {
            return Err(cfg_err("schedule.store_stride", "must be >= 1"));
        }
        if s.delta_list.is_empty() {
            return Err(cfg_err("schedule.delta_list", "must not be empty"));
        }
        for &d in &s.delta_list {
            if !(d > 0.0 && d <= 1.0) {
                return Err(cfg_err("schedule.delta_list", format!("{d} not in (0, 1]")));
            }
            if !multiple_of(d, s.path_step) {
                return Err(cfg_err("schedule.delta_list", format!("{d} is not a multiple of path_step")));
            }
        }
        if !multiple_of(self.noise.delta, s.path_step) {
            return Err(cfg_err("noise.delta", "must be a multiple of schedule.path_step"));
        }
        if s.depths.is_empty() || s.depths.windows(2).any(|w| !(w[0] < w[1])) || !(s.depths[0] > 0.0) {
            return Err(cfg_err("schedule.depths", "must be positive and strictly increasing"));
        }
        if s.depths.iter().any(|&d| !multiple_of(d, s.dt)) {
            return Err(cfg_err("schedule.depths", "must be multiples of dt"));
        }
        if s.ic_count == 0 || !(s.ic_norm > 0.0) {
            return Err(cfg_err("schedule.ic_count/ic_norm", "need at least one field of positive norm"));
        }
        if s.samples < 2 {
            return Err(cfg_err("schedule.samples", "must be >= 2"));
        }
        if s.r_list.iter().any(|&r| !(r >= 1.0)) {
            return Err(cfg_err("schedule.r_list", "every r must be >= 1"));
        }
        if s.cutoffs.iter().any(|&k| !(k > 0.0 && 4.0 * k < g.box_length)) {
            return Err(cfg_err("schedule.cutoffs", "need 0 < k < L/4"));
        }
        if !(s.radius_window > 0.0) {
            return Err(cfg_err("schedule.radius_window", "must be positive"));
        }
        if self.experiment.needs_variant() && self.variant.is_none() {
            return Err(cfg_err("variant", format!("{} needs additive or multiplicative", self.experiment)));
        }
        match self.experiment {
            ExperimentKind::Absorb if !matches!(self.diffusion.variant, DiffusionKind::Ndt1 | DiffusionKind::Ndt2) => {
                Err(cfg_err("diffusion.variant", "absorb needs ndt1 or ndt2"))
            }
            ExperimentKind::Usc if s.depths.len() < 2 => Err(cfg_err("schedule.depths", "usc needs two depths")),
            ExperimentKind::RadiusConvergence if self.cbf.r <= 1.0 => {
                Err(cfg_err("cbf.r", "the additive radius needs r > 1"))
            }
            _ => Ok(()),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text).map_err(|e| cfg_err("json", e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(self)?)))
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count as u64).map(|i| self.seed + i).collect()
    }

    fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.grid.n, self.grid.box_length)
    }

    fn forcing(&self, grid: &TorusGrid) -> Forcing {
        match self.forcing.kind {
            ForcingKind::Zero => Forcing::Zero,
            ForcingKind::TaylorGreen if self.forcing.rate == 0.0 => {
                Forcing::Constant(taylor_green(grid, self.forcing.amplitude))
            }
            ForcingKind::TaylorGreen => Forcing::ExpModulated {
                field: taylor_green(grid, self.forcing.amplitude),
                rate: self.forcing.rate,
            },
        }
    }

    fn diffusion(&self, grid: &TorusGrid) -> Result<DiffusionTerm> {
        let (kappa, sigma) = (self.noise.kappa, self.noise.sigma);
        match self.diffusion.variant {
            DiffusionKind::Zero => Ok(DiffusionTerm::zero(grid)),
            DiffusionKind::ConstantG => Ok(DiffusionTerm::constant_g(
                AdditiveProfile::taylor_green(grid, sigma, self.noise.ell)?.g,
                sigma,
            )),
            DiffusionKind::LinearU => Ok(DiffusionTerm::linear_u(grid)),
            DiffusionKind::Ndt1 => DiffusionTerm::ndt1_default(grid, kappa, sigma),
            DiffusionKind::Ndt2 => DiffusionTerm::ndt2_default(grid, kappa, sigma),
            DiffusionKind::Ndt3 => DiffusionTerm::ndt3_default(grid, self.diffusion.q, self.cbf.r),
        }
    }

    fn stepper(&self) -> StepperConfig {
        StepperConfig {
            dt: self.schedule.dt,
            store_stride: self.schedule.store_stride,
            ..Default::default()
        }
    }

    /// Initial fields with `‖u₀‖_H = ic_norm · (i+1)/ic_count`.
    fn ic_family(&self, grid: &TorusGrid) -> Vec<VelocityField> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x1c_f1e1d);
        let m = self.schedule.ic_count;
        (0..m)
            .map(|i| {
                let norm = self.schedule.ic_norm * (i + 1) as f64 / m as f64;
                random_field(grid, &mut rng, norm, 2.0, self.cbf.is_nse())
            })
            .collect()
    }

    fn max_delta(&self) -> f64 {
        self.schedule.delta_list.iter().copied().fold(self.noise.delta, f64::max)
    }

    fn transformed(&self, grid: &TorusGrid, kind: TransformKind) -> Result<SystemSpec> {
        let forcing = self.forcing(grid);
        Ok(match kind {
            TransformKind::Additive => SystemSpec::Additive {
                params: self.cbf,
                forcing,
                profile: AdditiveProfile::taylor_green(grid, self.noise.sigma, self.noise.ell)?,
                mode: NoiseMode::White,
            },
            TransformKind::Multiplicative => SystemSpec::Multiplicative {
                params: self.cbf,
                forcing,
                mode: NoiseMode::White,
            },
        })
    }
}

/// One embedded pass/fail check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    /// Measured value.
    pub value: f64,
    /// Pinned threshold the value is compared with.
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            pass,
            value,
            threshold,
            detail: detail.into(),
        }
    }
}

/// Tables produced by an experiment, before they are written.
type Writer = Box<dyn FnOnce(&Path) -> Result<()>>;

enum Table {
    Csv { name: String, write: Writer },
}

impl Table {
    fn csv<T: Serialize + 'static>(name: &str, rows: Vec<T>) -> Self {
        Table::Csv {
            name: name.into(),
            write: Box::new(move |p| write_csv(p, &rows)),
        }
    }
}

struct Produced {
    checks: Vec<Check>,
    tables: Vec<Table>,
    /// Files written directly by the experiment (ensembles).
    extra: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: ExperimentKind,
    pub variant: Option<TransformKind>,
    pub config_hash: String,
    pub crate_version: String,
    pub format_version: u32,
    pub seed: u64,
    pub files: Vec<FileRecord>,
    pub checks: Vec<Check>,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub manifest: Manifest,
    pub manifest_path: PathBuf,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.manifest.pass
    }
    pub fn checks(&self) -> &[Check] {
        &self.manifest.checks
    }
}

fn file_record(dir: &Path, path: &Path) -> Result<FileRecord> {
    let data = fs::read(path)?;
    let rel = path.strip_prefix(dir).unwrap_or(path);
    Ok(FileRecord {
        path: rel.to_string_lossy().into_owned(),
        bytes: data.len() as u64,
        sha256: hex::encode(Sha256::digest(&data)),
    })
}

/// Validates the config, runs the experiment, and writes its tables, the
/// config copy and the manifest into `config.output_dir`.
pub fn run(config: &ExperimentConfig) -> Result<Outcome> {
    config.validate()?;
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    let produced = dispatch(config, &dir)?;
    let mut files = Vec::new();
    let config_path = dir.join("config.json");
    fs::write(&config_path, config.to_json()?)?;
    files.push(file_record(&dir, &config_path)?);
    for table in produced.tables {
        let Table::Csv { name, write } = table;
        let path = dir.join(name);
        write(&path)?;
        files.push(file_record(&dir, &path)?);
    }
    for path in &produced.extra {
        files.push(file_record(&dir, path)?);
    }
    let pass = produced.checks.iter().all(|c| c.pass);
    let manifest = Manifest {
        experiment: config.experiment,
        variant: config.variant,
        config_hash: config.hash()?,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        format_version: FORMAT_VERSION,
        seed: config.seed,
        files,
        checks: produced.checks,
        pass,
    };
    let manifest_path = dir.join("manifest.json");
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(Outcome { manifest, manifest_path })
}

/// Runs on a dedicated pool of `threads` workers.
pub fn run_with_threads(config: &ExperimentConfig, threads: usize) -> Result<Outcome> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| cfg_err("threads", e.to_string()))?;
    pool.install(|| run(config))
}

fn dispatch(c: &ExperimentConfig, dir: &Path) -> Result<Produced> {
    match c.experiment {
        ExperimentKind::NoiseConvergence => noise_convergence(c),
        ExperimentKind::OuConvergence => ou_convergence(c),
        ExperimentKind::OperatorAudit => operator_audit(c),
        ExperimentKind::NonlinearAudit => nonlinear_audit(c),
        ExperimentKind::EnergyAudit => energy_audit(c),
        ExperimentKind::Decay => decay(c),
        ExperimentKind::WzSolutionConvergence => solution_convergence(c),
        ExperimentKind::Absorb => absorb(c, dir),
        ExperimentKind::RadiusConvergence => radius_convergence(c),
        ExperimentKind::Usc => usc(c),
        ExperimentKind::ValidateAssumptions => validate_assumptions(c),
        ExperimentKind::TailDiagnostic => tail_diagnostic(c),
    }
}

fn produced(checks: Vec<Check>, tables: Vec<Table>) -> Produced {
    Produced {
        checks,
        tables,
        extra: Vec::new(),
    }
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[derive(Serialize)]
struct NoiseRow {
    path: String,
    delta: f64,
    sup_wz_error: f64,
    expected: Option<f64>,
    sup_zy_error: f64,
    ergodic_mean: f64,
    growth_ratio: f64,
}

/// Absolute tolerance on the analytic-path error `T δ`.
pub const ANALYTIC_WZ_TOL: f64 = 1e-6;

fn noise_convergence(c: &ExperimentConfig) -> Result<Produced> {
    let sch = &c.schedule;
    let (t, h) = (sch.horizon, sch.path_step);
    let t_max = t + c.max_delta() + 1.0;
    let mut rows = Vec::new();
    let mut checks = Vec::new();

    let analytic = WienerPath::from_fn(-1.0, t_max, h, |x| x * x)?;
    let diag = noise_diagnostics(&analytic, &c.noise, 0.0, t, &sch.delta_list)?;
    let worst = diag
        .iter()
        .map(|r| (r.sup_wz_error - t * r.delta).abs())
        .fold(0.0, f64::max);
    checks.push(Check::new(
        "analytic_path_error_equals_T_delta",
        worst <= ANALYTIC_WZ_TOL,
        worst,
        ANALYTIC_WZ_TOL,
        "max |sup|I_delta - omega| - T delta| on omega(t) = t^2",
    ));
    rows.extend(diag.iter().map(|r| NoiseRow {
        path: "t_squared".into(),
        delta: r.delta,
        sup_wz_error: r.sup_wz_error,
        expected: Some(t * r.delta),
        sup_zy_error: r.sup_zy_error,
        ergodic_mean: r.ergodic_mean,
        growth_ratio: r.growth_ratio,
    }));

    let mut bad = Vec::new();
    for seed in c.seeds() {
        let path = WienerPath::sample(seed, -sch.history.max(1.0), t_max, h)?;
        let diag = noise_diagnostics(&path, &c.noise, 0.0, t, &sch.delta_list)?;
        let errs: Vec<f64> = diag.iter().map(|r| r.sup_wz_error).collect();
        if !strictly_decreasing(&errs) {
            bad.push(seed);
        }
        rows.extend(diag.iter().map(|r| NoiseRow {
            path: format!("seed_{seed}"),
            delta: r.delta,
            sup_wz_error: r.sup_wz_error,
            expected: None,
            sup_zy_error: r.sup_zy_error,
            ergodic_mean: r.ergodic_mean,
            growth_ratio: r.growth_ratio,
        }));
    }
    checks.push(Check::new(
        "seeded_error_strictly_decreasing",
        bad.is_empty(),
        bad.len() as f64,
        0.0,
        format!("seeds with a non-decreasing step: {bad:?}"),
    ));
    Ok(produced(checks, vec![Table::csv("noise_convergence.csv", rows)]))
}

#[derive(Serialize)]
struct OuRow {
    seed: u64,
    delta: f64,
    sup_zy_error: f64,
}

/// Relative size of the single inversion tolerated in the OU table.
pub const OU_INVERSION_TOL: f64 = 0.05;
/// Tolerance on the stationary value `c/ℓ`.
pub const OU_STATIONARY_TOL: f64 = 1e-8;

fn ou_convergence(c: &ExperimentConfig) -> Result<Produced> {
    let sch = &c.schedule;
    let ell = c.noise.ell;
    let (t, h) = (sch.horizon, sch.path_step);
    let t_max = t + c.max_delta() + 1.0;
    let t_min = -(sch.history.max(20.0 / ell));
    let mut rows = Vec::new();
    let mut inversions = Vec::new();
    for seed in c.seeds() {
        let path = WienerPath::sample(seed, t_min, t_max, h)?;
        let diag = noise_diagnostics(&path, &c.noise, 0.0, t, &sch.delta_list)?;
        for w in diag.windows(2) {
            if w[1].sup_zy_error > w[0].sup_zy_error {
                inversions.push(w[1].sup_zy_error / w[0].sup_zy_error - 1.0);
            }
        }
        rows.extend(diag.iter().map(|r| OuRow {
            seed,
            delta: r.delta,
            sup_zy_error: r.sup_zy_error,
        }));
    }
    let worst_inv = inversions.iter().copied().fold(0.0, f64::max);
    let mut checks = vec![Check::new(
        "ou_error_nonincreasing",
        inversions.len() <= 1 && worst_inv <= OU_INVERSION_TOL,
        inversions.len() as f64,
        1.0,
        format!("inversions (relative excess): {inversions:?}"),
    )];

    // ω(t) = c t drives both processes with the constant c.
    let cst = 1.0;
    let burn = 20.0 / ell;
    let path = WienerPath::from_fn(-burn, t_max, h, |x| cst * x)?;
    let y = path.ou_y_trace(ell)?;
    let mut worst: f64 = 0.0;
    for &d in &sch.delta_list {
        let z = path.ou_z_trace(ell, d)?;
        for i in 0..=((t / h).round() as usize) {
            let tt = i as f64 * h;
            worst = worst.max((z.eval(tt)? - cst / ell).abs()).max((y.eval(tt)? - cst / ell).abs());
        }
    }
    checks.push(Check::new(
        "stationary_value_c_over_ell",
        worst <= OU_STATIONARY_TOL,
        worst,
        OU_STATIONARY_TOL,
        format!("max |z - c/l|, |y - c/l| on [0, T] after burn-in 20/l, c = {cst}"),
    ));
    Ok(produced(checks, vec![Table::csv("ou_convergence.csv", rows)]))
}

#[derive(Serialize)]
struct OperatorRow {
    sample: usize,
    b_uvv_rel: f64,
    skew_rel: f64,
    stokes_rel: f64,
    leray_rel: f64,
}

pub const B_IDENTITY_TOL: f64 = 1e-9;
pub const STOKES_TOL: f64 = 1e-10;
pub const LERAY_TOL: f64 = 1e-12;

fn operator_audit(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut rows = Vec::with_capacity(c.schedule.samples);
    for sample in 0..c.schedule.samples {
        let u = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let v = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let w = random_field(&grid, &mut rng, 1.0, 1.5, false);
        let l4 = |x: &VelocityField| lp_integral(&grid, &x.to_physical(), 4.0).powf(0.25);
        let holder = |a: &VelocityField, b: &VelocityField, d: &VelocityField| l4(a) * b.grad_norm2().sqrt() * l4(d);
        let b_uvv = trilinear_b(&u, &v, &v)?.abs() / holder(&u, &v, &v);
        let skew = (trilinear_b(&u, &v, &w)? + trilinear_b(&u, &w, &v)?).abs() / holder(&u, &v, &w);

        // (Au, u) against grid quadrature of |∇u|²
        let gp = u.gradient_physical();
        let quad: f64 = gp.iter().flatten().map(|comp| grid.quadrature(&comp.iter().map(|x| x * x).collect::<Vec<_>>())).sum();
        let au_u = u.stokes().inner(&u);
        let stokes = (au_u - quad).abs() / quad;

        // Leray on a field with a gradient part
        let raw: [Vec<f64>; 2] = {
            let p = w.to_physical();
            let q = v.to_physical();
            [p[0].iter().zip(&q[1]).map(|(a, b)| a + b).collect(), p[1].iter().zip(&q[0]).map(|(a, b)| a - b).collect()]
        };
        let f = VelocityField::from_physical_raw(&grid, &raw).masked();
        let pf = f.project();
        let leray = (&pf.project() - &pf).h_norm() / f.h_norm() + pf.divergence_max() / f.h_norm();
        rows.push(OperatorRow {
            sample,
            b_uvv_rel: b_uvv,
            skew_rel: skew,
            stokes_rel: stokes,
            leray_rel: leray,
        });
    }
    let max = |f: &dyn Fn(&OperatorRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let checks = vec![
        Check::new("b_uvv_zero", max(&|r| r.b_uvv_rel) <= B_IDENTITY_TOL, max(&|r| r.b_uvv_rel), B_IDENTITY_TOL, "relative to the Holder bound"),
        Check::new("b_skew_symmetric", max(&|r| r.skew_rel) <= B_IDENTITY_TOL, max(&|r| r.skew_rel), B_IDENTITY_TOL, "relative to the Holder bound"),
        Check::new("stokes_energy", max(&|r| r.stokes_rel) <= STOKES_TOL, max(&|r| r.stokes_rel), STOKES_TOL, "(Au,u) vs quadrature of |grad u|^2"),
        Check::new("leray_idempotent", max(&|r| r.leray_rel) <= LERAY_TOL, max(&|r| r.leray_rel), LERAY_TOL, "||P(Pf) - Pf|| + max|div Pf|, relative"),
    ];
    Ok(produced(checks, vec![Table::csv("operator_audit.csv", rows)]))
}

#[derive(Serialize)]
struct NonlinearRow {
    r: f64,
    sample: usize,
    monotone_lhs: f64,
    monotone_rhs: f64,
    a215_lhs: f64,
    a215_rhs: f64,
    gateaux_rel: Option<f64>,
}

pub const GATEAUX_EPS: f64 = 1e-5;
pub const GATEAUX_TOL: f64 = 1e-4;

fn nonlinear_audit(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let mut rows = Vec::new();
    let (mut mono_fail, mut a215_fail, mut worst_g) = (0usize, 0usize, 0.0f64);
    for &r in &c.schedule.r_list {
        for sample in 0..c.schedule.samples {
            let u = random_field(&grid, &mut rng, 2.0, 1.5, false);
            let v = random_field(&grid, &mut rng, 2.0, 1.5, false);
            let mono = check_monotonicity_c(&u, &v, r)?;
            let a215 = check_a215(&u, &v, r)?;
            mono_fail += usize::from(!mono.pass);
            a215_fail += usize::from(!a215.pass);
            let gateaux_rel = if r >= 2.0 {
                let d = gateaux_c(&u, &v, r)?;
                let mut up = u.clone();
                up.axpy(GATEAUX_EPS, &v);
                let mut um = u.clone();
                um.axpy(-GATEAUX_EPS, &v);
                let fd = (&nonlinear_c(&up, r)? - &nonlinear_c(&um, r)?).scale(0.5 / GATEAUX_EPS);
                let rel = (&fd - &d).h_norm() / d.h_norm();
                worst_g = worst_g.max(rel);
                Some(rel)
            } else {
                None
            };
            rows.push(NonlinearRow {
                r,
                sample,
                monotone_lhs: mono.lhs,
                monotone_rhs: mono.rhs,
                a215_lhs: a215.lhs,
                a215_rhs: a215.rhs,
                gateaux_rel,
            });
        }
    }
    let checks = vec![
        Check::new("monotonicity_c", mono_fail == 0, mono_fail as f64, 0.0, "failing pairs"),
        Check::new("inequality_a215", a215_fail == 0, a215_fail as f64, 0.0, "failing pairs"),
        Check::new("gateaux_vs_central_difference", worst_g < GATEAUX_TOL, worst_g, GATEAUX_TOL, format!("eps = {GATEAUX_EPS}, r >= 2")),
    ];
    Ok(produced(checks, vec![Table::csv("nonlinear_audit.csv", rows)]))
}

/// Residual allowance per unit time at the configured step.
pub const ENERGY_RESIDUAL_PER_T: f64 = 1e-3;
/// Required shrink factor of the residual when the step is halved.
pub const ENERGY_HALVING_FACTOR: f64 = 3.5;

#[derive(Serialize)]
struct EnergySummary {
    dt: f64,
    max_residual: f64,
    max_residual_v_form: f64,
}

fn energy_audit(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let path = Arc::new(WienerPath::sample(c.seed, -1.0, sch.s + sch.horizon + c.max_delta() + 1.0, sch.path_step)?);
    let sys = WzCbf::new(
        &grid,
        c.cbf,
        c.forcing(&grid),
        c.diffusion(&grid)?,
        c.noise.delta,
        NoiseWindow::new(path, 0.0),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0xe7e7);
    let u0 = random_field(&grid, &mut rng, 1.0, 2.0, c.cbf.is_nse());
    let mut summary = Vec::new();
    let mut first_rows = Vec::new();
    for dt in [sch.dt, 0.5 * sch.dt] {
        let cfg = StepperConfig { dt, ..c.stepper() };
        let traj = integrate(&sys, sch.s, sch.horizon, &u0, &cfg)?;
        let rows = energy_residual(&traj)?;
        summary.push(EnergySummary {
            dt,
            max_residual: rows.iter().map(|r| r.residual).fold(0.0, f64::max),
            max_residual_v_form: rows.iter().map(|r| r.residual_v_form).fold(0.0, f64::max),
        });
        if first_rows.is_empty() {
            first_rows = rows;
        }
    }
    let limit = ENERGY_RESIDUAL_PER_T * sch.horizon;
    let ratio = summary[0].max_residual / summary[1].max_residual;
    let checks = vec![
        Check::new("residual_below_limit", summary[0].max_residual < limit, summary[0].max_residual, limit, format!("dt = {}", sch.dt)),
        Check::new("residual_halving_factor", ratio >= ENERGY_HALVING_FACTOR, ratio, ENERGY_HALVING_FACTOR, "max residual at dt over dt/2"),
    ];
    Ok(produced(
        checks,
        vec![Table::csv("energy_ledger.csv", first_rows), Table::csv("energy_summary.csv", summary)],
    ))
}

#[derive(Serialize)]
struct DecayRow {
    ic: usize,
    time: f64,
    h_norm: f64,
    bound: f64,
}

pub const DECAY_SLACK: f64 = 1e-8;

fn decay(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let path = Arc::new(WienerPath::zero(-1.0, sch.s + sch.horizon + 2.0, sch.path_step)?);
    let sys = WzCbf::new(
        &grid,
        c.cbf,
        Forcing::Zero,
        DiffusionTerm::zero(&grid),
        c.noise.delta,
        NoiseWindow::new(path, 0.0),
    )?;
    let mut rows = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    let mut monotone = true;
    for (ic, u0) in c.ic_family(&grid).iter().enumerate() {
        let traj = integrate(&sys, sch.s, sch.horizon, u0, &StepperConfig { ledger: false, ..c.stepper() })?;
        let n0 = u0.h_norm();
        let mut prev = f64::INFINITY;
        for (t, u) in traj.times.iter().zip(&traj.states) {
            let h = u.h_norm();
            let bound = (-c.cbf.alpha * (t - sch.s)).exp() * n0;
            worst = worst.max(h - bound);
            monotone &= h <= prev;
            prev = h;
            rows.push(DecayRow { ic, time: *t, h_norm: h, bound });
        }
    }
    let checks = vec![
        Check::new("exponential_bound", worst <= DECAY_SLACK, worst, DECAY_SLACK, "max ||u(t)|| - e^{-alpha(t-s)} ||u_s||"),
        Check::new("monotone_norm", monotone, f64::from(u8::from(monotone)), 1.0, "norm series nonincreasing"),
    ];
    Ok(produced(checks, vec![Table::csv("decay.csv", rows)]))
}

#[derive(Serialize)]
struct SolutionRow {
    seed: u64,
    delta: f64,
    error_h: f64,
    ratio_to_previous: Option<f64>,
}

/// Minimal error reduction per δ halving.
pub const SOLUTION_REDUCTION: f64 = 1.3;

fn solution_convergence(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let kind = c.variant.expect("validated");
    let spec = c.transformed(&grid, kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5011);
    let u0 = random_field(&grid, &mut rng, 1.0, 2.0, c.cbf.is_nse());
    let cfg = StepperConfig { dt: sch.dt, ..Default::default() };
    let mut rows = Vec::new();
    let mut bad = Vec::new();
    let mut worst_ratio = f64::INFINITY;
    for seed in c.seeds() {
        let path = WienerPath::sample(seed, -sch.s.abs() - sch.history, sch.s.abs() + sch.horizon + c.max_delta() + 1.0, sch.path_step)?;
        let source = NoiseSource::new(Arc::new(path), c.noise.ell);
        let table = wz_solution_convergence(&spec, &source, &sch.delta_list, sch.s, sch.horizon, &u0, &cfg)?;
        let errs: Vec<f64> = table.iter().map(|r| r.error_h).collect();
        let min_ratio = table.iter().filter_map(|r| r.ratio_to_previous).fold(f64::INFINITY, f64::min);
        worst_ratio = worst_ratio.min(min_ratio);
        if !strictly_decreasing(&errs) || min_ratio < SOLUTION_REDUCTION {
            bad.push(seed);
        }
        rows.extend(table.iter().map(|r| SolutionRow {
            seed,
            delta: r.delta,
            error_h: r.error_h,
            ratio_to_previous: r.ratio_to_previous,
        }));
    }
    let checks = vec![Check::new(
        "error_decreases_by_factor",
        bad.is_empty(),
        worst_ratio,
        SOLUTION_REDUCTION,
        format!("smallest reduction per halving; failing seeds {bad:?}"),
    )];
    let name = format!("wz_solution_convergence_{}.csv", kind_name(kind));
    Ok(produced(checks, vec![Table::csv(&name, rows)]))
}

fn kind_name(k: TransformKind) -> &'static str {
    match k {
        TransformKind::Additive => "additive",
        TransformKind::Multiplicative => "multiplicative",
    }
}

#[derive(Serialize)]
struct AbsorbRow {
    depth: f64,
    ic: usize,
    ic_norm2: f64,
    norm2: f64,
    radius: f64,
    inside: bool,
}

/// Growth constants of the configured `ndt` family valid for every field.
pub fn growth_bound(term: &DiffusionTerm) -> Result<GrowthFit> {
    match term.variant() {
        DiffusionVariant::Ndt1 => Ok(ndt1_growth_bound(term.grid())),
        // (B(g2, u), u) = 0
        DiffusionVariant::Ndt2 => Ok(GrowthFit { s3: 0.0, s4: 0.0, s5: 0.0 }),
        other => Err(Error::UnsupportedCondition {
            condition: "growth bound".into(),
            variant: other.name().into(),
        }),
    }
}

fn absorb(c: &ExperimentConfig, dir: &Path) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let term = c.diffusion(&grid)?;
    let forcing = c.forcing(&grid);
    let depth = *sch.depths.last().expect("validated");
    let back = depth.max(sch.radius_window) + sch.history;
    let path = Arc::new(WienerPath::sample(c.seed, -back, sch.s.abs() + c.max_delta() + 1.0, sch.path_step)?);
    let consts = WzRadiusConstants::from_term(&term, growth_bound(&term)?)?;
    let radius = absorbing_radius_wz(
        &c.cbf,
        &consts,
        &forcing,
        &path,
        c.noise.delta,
        sch.s,
        RadiusWindow { length: sch.radius_window },
    )?;
    let spec = SystemSpec::WongZakai {
        params: c.cbf,
        forcing,
        diffusion: term,
        delta: c.noise.delta,
    };
    let source = NoiseSource::new(path, c.noise.ell);
    let schedule = PullbackSchedule {
        s: sch.s,
        t_list: sch.depths.clone(),
        ic_family: c.ic_family(&grid),
    };
    let ens = pullback_run(&schedule, &spec, &source, &c.stepper(), Some(radius.value))?;
    let t_star = ens.absorption_time(&sch.depths);
    let rows: Vec<AbsorbRow> = ens
        .meta
        .iter()
        .map(|m| AbsorbRow {
            depth: m.t,
            ic: m.ic,
            ic_norm2: schedule.ic_family[m.ic].h_norm2(),
            norm2: m.norm2,
            radius: radius.value,
            inside: m.inside == Some(true),
        })
        .collect();
    let extra = save_ensemble(dir, "endpoints", &ens)?.to_vec();
    let checks = vec![
        Check::new(
            "absorbed_after_t_star",
            t_star.is_some(),
            t_star.unwrap_or(f64::NAN),
            depth,
            format!("radius {:.6e} x 1.05; T* = {t_star:?}", radius.value),
        ),
        Check::new(
            "radius_window_resolved",
            radius.resolved,
            radius.truncation_bound,
            crate::attractor::TAIL_TOLERANCE * radius.value,
            "estimated tail beyond the quadrature window",
        ),
    ];
    Ok(Produced {
        checks,
        tables: vec![Table::csv("absorb.csv", rows)],
        extra,
    })
}

#[derive(Serialize)]
struct RadiusRow {
    variant: &'static str,
    delta: Option<f64>,
    radius: f64,
    gap_to_white: Option<f64>,
    truncation_bound: f64,
}

/// Slack, relative to the white radius, allowed when comparing gaps.
pub const RADIUS_QUADRATURE_TOL: f64 = 1e-6;

fn radius_convergence(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let forcing = c.forcing(&grid);
    let window = RadiusWindow { length: sch.radius_window };
    let path = WienerPath::sample(c.seed, -(sch.radius_window + sch.history), c.max_delta() + 1.0, sch.path_step)?;
    let source = NoiseSource::new(Arc::new(path), c.noise.ell);
    let profile = AdditiveProfile::taylor_green(&grid, c.noise.sigma, c.noise.ell)?;
    let kinds = match c.variant {
        Some(k) => vec![k],
        None => vec![TransformKind::Additive, TransformKind::Multiplicative],
    };
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for kind in kinds {
        let radius = |mode| match kind {
            TransformKind::Additive => absorbing_radius_additive(
                &c.cbf, &profile, &forcing, &source, sch.s, mode, RadiusForm::TwoD, DEFAULT_YOUNG_CONSTANT, window,
            ),
            TransformKind::Multiplicative => absorbing_radius_multiplicative(&c.cbf, &forcing, &source, sch.s, mode, window),
        };
        let white = radius(NoiseMode::White)?;
        rows.push(RadiusRow {
            variant: kind_name(kind),
            delta: None,
            radius: white.value,
            gap_to_white: None,
            truncation_bound: white.truncation_bound,
        });
        let mut gaps = Vec::new();
        for &d in &sch.delta_list {
            let r = radius(NoiseMode::Colored(d))?;
            let gap = (r.value - white.value).abs();
            gaps.push(gap);
            rows.push(RadiusRow {
                variant: kind_name(kind),
                delta: Some(d),
                radius: r.value,
                gap_to_white: Some(gap),
                truncation_bound: r.truncation_bound,
            });
        }
        let tol = RADIUS_QUADRATURE_TOL * white.value;
        let worst_rise = gaps.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
        checks.push(Check::new(
            &format!("{}_gap_monotone", kind_name(kind)),
            worst_rise <= tol,
            worst_rise,
            tol,
            format!("largest increase of |R_delta - R_0| along the delta list; gaps {gaps:?}"),
        ));
    }
    Ok(produced(checks, vec![Table::csv("radius_convergence.csv", rows)]))
}

#[derive(Serialize)]
struct UscCsvRow {
    delta: f64,
    dist_h: f64,
    drift: f64,
    converged: bool,
    white_drift: f64,
}

/// Relative rise allowed between consecutive distances.
pub const USC_TOL: f64 = 0.2;

fn usc(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let sch = &c.schedule;
    let kind = c.variant.expect("validated");
    let spec = c.transformed(&grid, kind)?;
    let depth = *sch.depths.last().expect("validated");
    let path = WienerPath::sample(c.seed, -(sch.s.abs() + depth + sch.history), sch.s.abs() + c.max_delta() + 1.0, sch.path_step)?;
    let source = NoiseSource::new(Arc::new(path), c.noise.ell);
    let schedule = PullbackSchedule {
        s: sch.s,
        t_list: sch.depths.clone(),
        ic_family: c.ic_family(&grid),
    };
    let rep = usc_experiment(&spec, &source, &sch.delta_list, &schedule, &StepperConfig { dt: sch.dt, ..Default::default() })?;
    let rows: Vec<UscCsvRow> = rep
        .rows
        .iter()
        .map(|r| UscCsvRow {
            delta: r.delta,
            dist_h: r.dist_h,
            drift: r.drift,
            converged: r.converged,
            white_drift: rep.white_drift,
        })
        .collect();
    let worst = rep.rows.windows(2).map(|w| w[1].dist_h / w[0].dist_h).fold(0.0, f64::max);
    let checks = vec![
        Check::new("depth_gate", rep.all_converged(), rep.rows.iter().map(|r| r.drift).fold(rep.white_drift, f64::max), crate::attractor::DEPTH_GATE, "largest endpoint drift between the two deepest depths"),
        Check::new("distance_nonincreasing", rep.nonincreasing(USC_TOL), worst, 1.0 + USC_TOL, "largest ratio of consecutive distances"),
    ];
    let name = format!("usc_{}.csv", kind_name(kind));
    Ok(produced(checks, vec![Table::csv(&name, rows)]))
}

#[derive(Serialize)]
struct AssumptionRow {
    variant: &'static str,
    condition: &'static str,
    samples: usize,
    constant: f64,
    half_constant: f64,
    s3: Option<f64>,
    s4: Option<f64>,
    s5: Option<f64>,
    pass: bool,
}

fn validate_assumptions(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let (kappa, sigma) = (c.noise.kappa, c.noise.sigma);
    let ndt1 = DiffusionTerm::ndt1_default(&grid, kappa, sigma)?;
    let ndt2 = DiffusionTerm::ndt2_default(&grid, kappa, sigma)?;
    let ndt3 = DiffusionTerm::ndt3_default(&grid, c.diffusion.q, c.cbf.r)?;
    let plan = [
        (&ndt2, Condition::S1Orth),
        (&ndt1, Condition::S2Lip),
        (&ndt1, Condition::S3Weak),
        (&ndt1, Condition::S4Growth),
        (&ndt3, Condition::Gs1Bound),
    ];
    let mut rows = Vec::new();
    let mut checks = Vec::new();
    for (term, cond) in plan {
        let rep = validate_assumption(term, cond, c.schedule.samples, c.seed)?;
        checks.push(Check::new(
            &format!("{}_{}", term.variant().name(), cond.id()),
            rep.pass,
            rep.constant,
            rep.half_constant,
            "constant from all samples; threshold column holds the half-sample constant",
        ));
        rows.push(AssumptionRow {
            variant: term.variant().name(),
            condition: cond.id(),
            samples: rep.samples,
            constant: rep.constant,
            half_constant: rep.half_constant,
            s3: rep.growth.map(|g| g.s3),
            s4: rep.growth.map(|g| g.s4),
            s5: rep.growth.map(|g| g.s5),
            pass: rep.pass,
        });
    }
    Ok(produced(checks, vec![Table::csv("validate_assumptions.csv", rows)]))
}

#[derive(Serialize)]
struct TailRow {
    field: &'static str,
    k: f64,
    tail: f64,
    total: f64,
}

fn tail_diagnostic(c: &ExperimentConfig) -> Result<Produced> {
    let grid = c.grid()?;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seed);
    let fields = [
        ("gaussian_vortex", gaussian_vortex(&grid, 0.1 * grid.box_length() / (2.0 * std::f64::consts::PI) * 3.0)),
        ("random", random_field(&grid, &mut rng, 1.0, 2.0, false)),
    ];
    let mut ks = c.schedule.cutoffs.clone();
    ks.sort_by(f64::total_cmp);
    let mut rows = Vec::new();
    let mut monotone = true;
    for (name, u) in &fields {
        let mut prev = f64::INFINITY;
        for &k in &ks {
            let tail = tail_mass(u, &TailCutoff::new(k)?)?;
            monotone &= tail <= prev * (1.0 + 1e-12);
            prev = tail;
            rows.push(TailRow { field: name, k, tail, total: u.h_norm2() });
        }
    }
    let checks = vec![Check::new("tail_monotone_in_k", monotone, f64::from(u8::from(monotone)), 1.0, "tail never increases with k")];
    Ok(produced(checks, vec![Table::csv("tail_diagnostic.csv", rows)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_validate_and_round_trip() {
        for kind in ExperimentKind::ALL {
            let c = ExperimentConfig::preset(kind, None);
            c.validate().unwrap();
            let back = ExperimentConfig::from_json(&c.to_json().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash().unwrap(), c.hash().unwrap());
        }
    }

    #[test]
    fn field_level_errors() {
        let mut c = ExperimentConfig::preset(ExperimentKind::Decay, None);
        c.schedule.dt = -1.0;
        match c.validate() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "schedule.dt"),
            other => panic!("{other:?}"),
        }
        let mut c = ExperimentConfig::preset(ExperimentKind::Usc, None);
        c.variant = None;
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "variant"));
        let bad = r#"{"experiment": "decay", "seed": 1, "bogus": 3}"#;
        assert!(matches!(ExperimentConfig::from_json(bad), Err(Error::Config { .. })));
        let mut c = ExperimentConfig::preset(ExperimentKind::NoiseConvergence, None);
        c.schedule.delta_list = vec![0.0125 + 1e-4];
        assert!(matches!(c.validate(), Err(Error::Config { field, .. }) if field == "schedule.delta_list"));
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let c = ExperimentConfig::from_json(r#"{"experiment": "tail-diagnostic", "seed": 4}"#).unwrap();
        assert_eq!(c.grid.n, 64);
        assert_eq!(c.seed_count, 1);
    }
}
