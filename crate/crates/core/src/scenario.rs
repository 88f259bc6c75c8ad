//! Scenario files, validation, run orchestration and result export.
//!
//! A scenario is a TOML document with the blocks `[space]`, `[geometry]`,
//! `[initial]`, `[solve]`, `[time]`, `[output]` and an optional
//! `[diagnostics]`. See `docs/scenario-format.md` for the grammar.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dtn::{
    admissibility_from, localization_residual, real_trace, sector_report, AdmissibilityReport,
    DtnEvaluator, FrozenOperatorSet, LocalizationReport, SectorReport,
};
use crate::geometry::{ellipticity_floor, EllipticityReport, InterfaceProfile};
use crate::grid::PeriodicGrid;
use crate::model::{halfplane_coercivity_probe, CoercivityReport, FrozenCoefficients};
use crate::operator::{PositivityReport, SectorialOperator};
use crate::stepper::{evolve, EvolutionConfig, Scheme, Status, Trajectory};
use crate::strip::{strip_coercivity_probe, SolverSettings, StripDatum};
use crate::{CMat, Error, Result, C64};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

const BLOCKS: [&str; 6] = ["space", "geometry", "initial", "solve", "time", "output"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceBlock {
    pub m: usize,
    /// Rows of `[re, im]` pairs.
    #[serde(rename = "A")]
    pub a: Vec<Vec<[f64; 2]>>,
    pub phi: f64,
    #[serde(rename = "M")]
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub nu: f64,
    #[serde(rename = "L")]
    pub length: f64,
    pub nx: usize,
    pub ny: usize,
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h_min: Option<f64>,
}

/// `g0` holds one expression in `x` per component (constants `pi`, `e`, `L`);
/// `table` holds nodal values instead.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g0: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveBlock {
    #[serde(default)]
    pub mu_solve: f64,
    /// Shift `μ₀` used by the frozen-operator diagnostics.
    #[serde(default = "default_mu_diag")]
    pub mu_diag: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_accept")]
    pub accept: f64,
}

fn default_mu_diag() -> f64 {
    4.0
}
fn default_tol() -> f64 {
    SolverSettings::default().tol
}
fn default_accept() -> f64 {
    SolverSettings::default().accept
}
fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeBlock {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_scheme")]
    pub scheme: Scheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breakdown_norm_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_margin_floor: Option<f64>,
    #[serde(default)]
    pub ramp_rate: f64,
    #[serde(default = "default_one")]
    pub jacobian_interval: usize,
}

fn default_scheme() -> Scheme {
    Scheme::SemiImplicitEuler
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub directory: String,
    #[serde(default = "default_one")]
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    #[serde(default = "default_mus")]
    pub mus: Vec<f64>,
    /// Wavenumbers of the sinusoidal coercivity ensemble.
    #[serde(default = "default_wavenumbers")]
    pub wavenumbers: Vec<f64>,
    #[serde(default = "default_deltas")]
    pub deltas: Vec<f64>,
    /// Direction for the localization residual, one expression per component.
    #[serde(default = "default_direction")]
    pub direction: Vec<String>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_freeze_points")]
    pub freeze_points: usize,
}

fn default_mus() -> Vec<f64> {
    vec![1.0, 2.0, 4.0, 8.0]
}
fn default_wavenumbers() -> Vec<f64> {
    vec![12.0]
}
fn default_deltas() -> Vec<f64> {
    vec![1.0, 0.5, 0.25]
}
fn default_direction() -> Vec<String> {
    vec!["cos(x)".into()]
}
fn default_samples() -> usize {
    8
}
fn default_freeze_points() -> usize {
    4
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self {
            mus: default_mus(),
            wavenumbers: default_wavenumbers(),
            deltas: default_deltas(),
            direction: default_direction(),
            samples: default_samples(),
            freeze_points: default_freeze_points(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub space: SpaceBlock,
    pub geometry: GeometryBlock,
    pub initial: InitialBlock,
    pub solve: SolveBlock,
    pub time: TimeBlock,
    pub output: OutputBlock,
    #[serde(default)]
    pub diagnostics: DiagnosticsBlock,
}

/// Samples one expression per component on the torus nodes.
pub fn eval_expressions(exprs: &[String], x: &PeriodicGrid) -> Result<Vec<Vec<f64>>> {
    exprs
        .iter()
        .map(|src| {
            let expr = meval::Expr::from_str(src)
                .map_err(|e| Error::Parse(format!("expression `{src}`: {e}")))?;
            let ctx = (("L", x.length()), meval::Context::new());
            let f = expr
                .bind_with_context(ctx, "x")
                .map_err(|e| Error::Parse(format!("expression `{src}`: {e}")))?;
            let v: Vec<f64> = x.nodes().into_iter().map(&f).collect();
            if v.iter().any(|z| !z.is_finite()) {
                return Err(Error::Validation(format!(
                    "expression `{src}` is not finite on the grid"
                )));
            }
            Ok(v)
        })
        .collect()
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Parse(e.to_string()))?;
        for b in BLOCKS {
            match table.get(b) {
                None => return Err(Error::Schema(format!("missing block [{b}]"))),
                Some(v) if !v.is_table() => {
                    return Err(Error::Schema(format!("`{b}` must be a block")))
                }
                _ => {}
            }
        }
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Schema(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Reserialization used for the checksum; field order is fixed by the schema.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn checksum(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn grid(&self) -> Result<PeriodicGrid> {
        PeriodicGrid::new(self.geometry.nx, self.geometry.length)
    }

    pub fn operator(&self) -> Result<SectorialOperator> {
        let s = &self.space;
        if s.a.len() != s.m || s.a.iter().any(|r| r.len() != s.m) {
            return Err(Error::Validation(format!(
                "A must be {0}×{0} to match m = {0}",
                s.m
            )));
        }
        let entries = CMat::from_fn(s.m, s.m, |i, j| C64::new(s.a[i][j][0], s.a[i][j][1]));
        SectorialOperator::new(entries, s.phi, s.bound)
    }

    pub fn profile(&self) -> Result<InterfaceProfile> {
        let x = self.grid()?;
        let m = self.space.m;
        let comps = match (&self.initial.g0, &self.initial.table) {
            (Some(e), None) => {
                if e.len() != m {
                    return Err(Error::Validation(format!(
                        "initial.g0 needs {m} expressions, got {}",
                        e.len()
                    )));
                }
                eval_expressions(e, &x)?
            }
            (None, Some(t)) => {
                if t.len() != m || t.iter().any(|c| c.len() != x.len()) {
                    return Err(Error::Validation(format!(
                        "initial.table must be {m} rows of {} values",
                        x.len()
                    )));
                }
                t.clone()
            }
            _ => {
                return Err(Error::Schema(
                    "[initial] needs exactly one of `g0` or `table`".into(),
                ))
            }
        };
        match self.geometry.h_min {
            Some(h) => InterfaceProfile::with_h_min(self.geometry.nu, x, comps, h),
            None => InterfaceProfile::new(self.geometry.nu, x, comps),
        }
    }

    pub fn solver(&self) -> SolverSettings {
        SolverSettings {
            tol: self.solve.tol,
            accept: self.solve.accept,
            ..SolverSettings::default()
        }
    }

    pub fn evolution_config(&self) -> EvolutionConfig {
        EvolutionConfig {
            dt: self.time.dt,
            t_end: self.time.t_end,
            scheme: self.time.scheme,
            mu_solve: self.solve.mu_solve,
            breakdown_norm_cap: self.time.breakdown_norm_cap,
            boundary_margin_floor: self.time.boundary_margin_floor,
            output_stride: self.output.stride,
            ramp_rate: self.time.ramp_rate,
            alpha: self.geometry.alpha,
            ny: self.geometry.ny,
            jacobian_interval: self.time.jacobian_interval,
            solver: self.solver(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub sectorial: PositivityReport,
    pub ellipticity: EllipticityReport,
    pub admissibility: AdmissibilityReport,
}

/// A scenario that passed validation, with its derived objects.
#[derive(Debug, Clone)]
pub struct ValidatedScenario {
    pub scenario: Scenario,
    pub operator: SectorialOperator,
    pub profile: InterfaceProfile,
    pub report: ValidationReport,
}

fn invalid(name: &str, detail: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{name}: {detail}"))
}

pub fn validate(s: Scenario) -> Result<ValidatedScenario> {
    let g = &s.geometry;
    if !(g.alpha > 0.0 && g.alpha < 1.0) {
        return Err(invalid("alpha", format!("{} not in (0, 1)", g.alpha)));
    }
    if !g.nx.is_power_of_two() || g.nx < 4 {
        return Err(invalid("nx", format!("{} is not a power of two ≥ 4", g.nx)));
    }
    if g.ny < 3 {
        return Err(invalid("ny", format!("{} < 3", g.ny)));
    }
    if s.space.m == 0 {
        return Err(invalid("m", "must be positive"));
    }
    if s.output.stride == 0 {
        return Err(invalid("output.stride", "must be positive"));
    }
    s.evolution_config().validate()?;
    let operator = s.operator().map_err(|e| invalid("sectorial", e))?;
    let sectorial = operator.validate_sectorial(&operator.default_samples())?;
    if !sectorial.pass {
        return Err(invalid(
            "sectorial",
            format!(
                "worst resolvent ratio {:e}, min Re σ(A) {:e}",
                sectorial.worst_ratio, sectorial.min_re_eigenvalue
            ),
        ));
    }
    let profile = s.profile()?;
    let strip = crate::strip::StripGrid::new(profile.grid().clone(), g.ny, s.space.m)?;
    let ellipticity = ellipticity_floor(&crate::geometry::coefficients(&profile, &strip)?);
    if !ellipticity.pass {
        return Err(invalid(
            "ellipticity",
            format!("floor violated, margin {:e}", ellipticity.margin),
        ));
    }
    let ev = DtnEvaluator::with_settings(&profile, &operator, s.solve.mu_solve, g.ny, s.solver())?;
    let admissibility = admissibility_from(&ev)?;
    if !admissibility.in_w1 {
        return Err(invalid(
            "admissibility",
            format!(
                "W₁ margin {:e} at x = {}",
                admissibility.margin, admissibility.witness_x
            ),
        ));
    }
    Ok(ValidatedScenario {
        scenario: s,
        operator,
        profile,
        report: ValidationReport {
            sectorial,
            ellipticity,
            admissibility,
        },
    })
}

pub fn load_scenario(path: &Path) -> Result<ValidatedScenario> {
    validate(Scenario::load(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Evolve,
    DiagnoseFrozen,
    DiagnoseCoercivity,
    DiagnoseLocalization,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Evolve => "evolve",
            Mode::DiagnoseFrozen => "diagnose-frozen",
            Mode::DiagnoseCoercivity => "diagnose-coercivity",
            Mode::DiagnoseLocalization => "diagnose-localization",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            Mode::Evolve,
            Mode::DiagnoseFrozen,
            Mode::DiagnoseCoercivity,
            Mode::DiagnoseLocalization,
        ]
        .into_iter()
        .find(|m| m.as_str() == s)
        .ok_or_else(|| Error::InvalidInput(format!("unknown mode `{s}`")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `output.directory`.
    pub out: Option<PathBuf>,
    /// Zero wall-clock in the manifest so that reruns are byte-identical.
    pub deterministic: bool,
    pub seed: u64,
    /// Abort after this many files have been written (crash injection for tests).
    #[doc(hidden)]
    pub fail_after_files: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSummary {
    pub m: usize,
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub nu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub scenario_checksum: String,
    pub artifact_version: String,
    pub mode: Mode,
    pub grid: GridSummary,
    pub acceptance: BTreeMap<String, bool>,
    pub wall_clock_seconds: f64,
    pub status: Status,
    pub message: Option<String>,
    pub seed: u64,
    pub deterministic: bool,
    pub files: Vec<String>,
    pub validation: ValidationReport,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.status)
    }
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Completed => 0,
        Status::NormBlowup | Status::BoundaryApproach => 3,
        Status::SolverFailure => 4,
    }
}

/// Writes into a hidden sibling directory and renames it into place at the end.
struct StagedDir {
    dir: Option<tempfile::TempDir>,
    files: Vec<String>,
    fail_after: Option<usize>,
}

impl StagedDir {
    fn new(target: &Path, fail_after: Option<usize>) -> Result<Self> {
        let parent = match target.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent)?;
        let dir = tempfile::Builder::new()
            .prefix(".stripflow-staging-")
            .tempdir_in(&parent)?;
        Ok(Self {
            dir: Some(dir),
            files: Vec::new(),
            fail_after,
        })
    }

    fn path(&self) -> &Path {
        self.dir.as_ref().expect("staging directory is live").path()
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        if self.fail_after.is_some_and(|n| self.files.len() >= n) {
            return Err(Error::Io(std::io::Error::other(
                "injected failure while writing outputs",
            )));
        }
        fs::write(self.path().join(name), bytes)?;
        self.files.push(name.into());
        Ok(())
    }

    /// Replaces `target` with the staged directory. An existing target must
    /// itself be a run directory (it holds a manifest).
    fn commit(mut self, target: &Path) -> Result<()> {
        let dir = self.dir.take().expect("staging directory is live");
        if target.exists() {
            if !target.join("manifest.json").is_file() {
                return Err(Error::InvalidInput(format!(
                    "{} exists and is not a stripflow run directory; refusing to replace it",
                    target.display()
                )));
            }
            let aside = tempfile::Builder::new()
                .prefix(".stripflow-old-")
                .tempdir_in(dir.path().parent().unwrap_or(Path::new(".")))?;
            let old = aside.path().join("run");
            fs::rename(target, &old)?;
            fs::rename(dir.keep(), target)?;
            drop(aside);
        } else {
            fs::rename(dir.keep(), target)?;
        }
        Ok(())
    }
}

/// One row per `(t, x-node)`: `t,x,g0,...`.
pub fn trajectory_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let first = traj
        .profiles
        .first()
        .ok_or_else(|| Error::InvalidInput("empty trajectory".into()))?;
    let m = first.dim();
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    let mut header = vec!["t".to_string(), "x".to_string()];
    header.extend((0..m).map(|c| format!("g{c}")));
    w.write_record(&header).map_err(csv_err)?;
    for (t, p) in traj.times.iter().zip(&traj.profiles) {
        for (ix, xv) in p.grid().nodes().iter().enumerate() {
            let mut row = vec![t.to_string(), xv.to_string()];
            row.extend((0..m).map(|c| p.g(c)[ix].to_string()));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

pub fn diagnostics_csv(traj: &Trajectory) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record([
        "step",
        "t",
        "h2alpha_norm",
        "w1_margin",
        "l2_norm",
        "step_residual",
        "strip_residual",
        "status",
    ])
    .map_err(csv_err)?;
    let n = traj.diagnostics.len();
    for (i, d) in traj.diagnostics.iter().enumerate() {
        let status = if i + 1 == n {
            format!("{:?}", traj.status)
        } else {
            "Running".into()
        };
        w.write_record([
            d.step.to_string(),
            d.t.to_string(),
            d.h2alpha.to_string(),
            d.w1_margin.to_string(),
            d.l2.to_string(),
            d.step_residual.to_string(),
            d.strip_residual.to_string(),
            status,
        ])
        .map_err(csv_err)?;
    }
    w.into_inner()
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

/// Reads a trajectory table back as `(times, components per sample)`.
pub fn import_trajectory(path: &Path) -> Result<(Vec<f64>, Vec<Vec<Vec<f64>>>)> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let m = r.headers().map_err(csv_err)?.len().saturating_sub(2);
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|e| Error::Parse(format!("{s}: {e}")))
    };
    let mut times: Vec<f64> = Vec::new();
    let mut samples: Vec<Vec<Vec<f64>>> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t = num(&rec[0])?;
        if times.last() != Some(&t) {
            times.push(t);
            samples.push(vec![Vec::new(); m]);
        }
        let cur = samples.last_mut().expect("pushed above");
        for c in 0..m {
            cur[c].push(num(&rec[c + 2])?);
        }
    }
    Ok((times, samples))
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v)
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    s.push(b'\n');
    Ok(s)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoercivityOutput {
    pub half_plane: CoercivityReport,
    pub strip: CoercivityReport,
}

struct ModeResult {
    status: Status,
    message: Option<String>,
    acceptance: BTreeMap<String, bool>,
}

fn run_evolve(v: &ValidatedScenario, out: &mut StagedDir) -> Result<ModeResult> {
    let traj = evolve(&v.profile, &v.operator, &v.scenario.evolution_config())?;
    out.write("trajectory.csv", &trajectory_csv(&traj)?)?;
    out.write("diagnostics.csv", &diagnostics_csv(&traj)?)?;
    let l2: Vec<f64> = traj.diagnostics.iter().map(|d| d.l2).collect();
    let mut acc = BTreeMap::new();
    acc.insert("completed".into(), traj.status == Status::Completed);
    acc.insert(
        "l2_nonincreasing".into(),
        l2.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
    );
    acc.insert(
        "times_increasing".into(),
        traj.times.windows(2).all(|w| w[1] > w[0]),
    );
    Ok(ModeResult {
        status: traj.status,
        message: traj.failure.clone(),
        acceptance: acc,
    })
}

fn run_frozen(v: &ValidatedScenario, out: &mut StagedDir, seed: u64) -> Result<ModeResult> {
    let s = &v.scenario;
    let ev = DtnEvaluator::with_settings(
        &v.profile,
        &v.operator,
        s.solve.mu_solve,
        s.geometry.ny,
        s.solver(),
    )?;
    let nx = s.geometry.nx;
    let k = s.diagnostics.freeze_points.clamp(1, nx);
    let mut reports: Vec<SectorReport> = Vec::with_capacity(k);
    for j in 0..k {
        let set = FrozenOperatorSet::from_evaluator(&ev, j * nx / k)?;
        reports.push(sector_report(
            &set,
            &v.operator,
            s.solve.mu_diag,
            s.geometry.alpha,
            s.diagnostics.samples,
            seed.wrapping_add(j as u64),
        )?);
    }
    out.write("frozen.json", &json(&reports)?)?;
    let mut acc = BTreeMap::new();
    for name in ["O10", "O20", "O30", "O0"] {
        let ok = reports
            .iter()
            .all(|r| r.parts.iter().filter(|p| p.name == name).all(|p| p.pass));
        acc.insert(format!("sector_{name}"), ok);
    }
    acc.insert(
        "resolvent_ratio_below_1e3".into(),
        reports.iter().all(|r| r.resolvent_ratio < 1e3),
    );
    Ok(ModeResult {
        status: Status::Completed,
        message: None,
        acceptance: acc,
    })
}

fn run_coercivity(v: &ValidatedScenario, out: &mut StagedDir) -> Result<ModeResult> {
    let s = &v.scenario;
    let d = &s.diagnostics;
    let x = v.profile.grid().clone();
    let m = s.space.m;
    let grid = crate::strip::StripGrid::new(x.clone(), s.geometry.ny, m)?;
    let coeffs = crate::geometry::coefficients(&v.profile, &grid)?;
    let fc = FrozenCoefficients::at_boundary(&coeffs, v.operator.clone(), 0, 0.0)?;
    let ensemble: Vec<Vec<Vec<C64>>> = d
        .wavenumbers
        .iter()
        .map(|&k| {
            (0..m)
                .map(|_| {
                    x.nodes()
                        .iter()
                        .map(|xv| C64::new((k * xv).sin(), 0.0))
                        .collect()
                })
                .collect()
        })
        .collect();
    let half_plane = halfplane_coercivity_probe(
        &fc,
        &x,
        &ensemble,
        &d.mus,
        s.geometry.alpha,
        s.geometry.ny.max(17),
    )?;
    let data: Vec<StripDatum> = d
        .wavenumbers
        .iter()
        .map(|&k| StripDatum::sinusoid(k, 1.0, 1.0, 1.0))
        .collect();
    let strip = strip_coercivity_probe(
        &v.profile,
        &v.operator,
        &d.mus,
        &data,
        s.geometry.alpha,
        s.geometry.ny,
    )?;
    let mut acc = BTreeMap::new();
    acc.insert(
        "half_plane_mu_spread_below_2".into(),
        half_plane.mu_spread < 2.0,
    );
    acc.insert("strip_mu_spread_below_2".into(), strip.mu_spread < 2.0);
    out.write(
        "coercivity.json",
        &json(&CoercivityOutput { half_plane, strip })?,
    )?;
    Ok(ModeResult {
        status: Status::Completed,
        message: None,
        acceptance: acc,
    })
}

fn run_localization(v: &ValidatedScenario, out: &mut StagedDir) -> Result<ModeResult> {
    let s = &v.scenario;
    let x = v.profile.grid().clone();
    if s.diagnostics.direction.len() != s.space.m {
        return Err(invalid(
            "diagnostics.direction",
            format!("needs {} expressions", s.space.m),
        ));
    }
    let dir = real_trace(&eval_expressions(&s.diagnostics.direction, &x)?);
    let ev = DtnEvaluator::with_settings(
        &v.profile,
        &v.operator,
        s.solve.mu_solve,
        s.geometry.ny,
        s.solver(),
    )?;
    let reports: Vec<LocalizationReport> = s
        .diagnostics
        .deltas
        .iter()
        .map(|&delta| localization_residual(&ev, delta, &dir, 1.0, s.geometry.alpha))
        .collect::<Result<_>>()?;
    out.write("localization.json", &json(&reports)?)?;
    let mut sorted: Vec<&LocalizationReport> = reports.iter().collect();
    sorted.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let mut acc = BTreeMap::new();
    // a frozen profile gives zero at every δ
    acc.insert(
        "surrogate_decreasing".into(),
        sorted
            .windows(2)
            .all(|w| w[1].max_surrogate < w[0].max_surrogate || w[0].max_surrogate < 1e-12),
    );
    Ok(ModeResult {
        status: Status::Completed,
        message: None,
        acceptance: acc,
    })
}

/// Runs one mode and writes its outputs plus `manifest.json` into the output
/// directory. Failures inside the numerical pipeline are recorded in the
/// manifest with status `SolverFailure`; I/O failures leave no output directory.
pub fn run(v: &ValidatedScenario, mode: Mode, opts: &RunOptions) -> Result<(RunManifest, PathBuf)> {
    let started = std::time::Instant::now();
    let s = &v.scenario;
    let target = opts
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&s.output.directory));
    let mut staged = StagedDir::new(&target, opts.fail_after_files)?;
    let result = match mode {
        Mode::Evolve => run_evolve(v, &mut staged),
        Mode::DiagnoseFrozen => run_frozen(v, &mut staged, opts.seed),
        Mode::DiagnoseCoercivity => run_coercivity(v, &mut staged),
        Mode::DiagnoseLocalization => run_localization(v, &mut staged),
    };
    let result = match result {
        Ok(r) => r,
        Err(e @ Error::Io(_)) => return Err(e),
        Err(e) => ModeResult {
            status: Status::SolverFailure,
            message: Some(e.to_string()),
            acceptance: BTreeMap::new(),
        },
    };
    let mut files = staged.files.clone();
    files.push("manifest.json".into());
    let manifest = RunManifest {
        scenario_checksum: s.checksum(),
        artifact_version: ARTIFACT_VERSION.into(),
        mode,
        grid: GridSummary {
            m: s.space.m,
            nx: s.geometry.nx,
            ny: s.geometry.ny,
            length: s.geometry.length,
            nu: s.geometry.nu,
        },
        acceptance: result.acceptance,
        wall_clock_seconds: if opts.deterministic {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        },
        status: result.status,
        message: result.message,
        seed: opts.seed,
        deterministic: opts.deterministic,
        files,
        validation: v.report.clone(),
    };
    staged.write("manifest.json", &json(&manifest)?)?;
    staged.commit(&target)?;
    Ok((manifest, target))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FLAT: &str = r#"
[space]
m = 1
A = [[[1.0, 0.0]]]
phi = 1.5
M = 4.0

[geometry]
nu = 1.0
L = 6.283185307179586
nx = 16
ny = 13
alpha = 0.5

[initial]
g0 = ["0"]

[solve]
mu_solve = 0.0

[time]
dt = 0.05
t_end = 0.2

[output]
directory = "out"
"#;

    #[test]
    fn checksum_stable_under_reserialization() {
        let s = Scenario::from_toml_str(FLAT).unwrap();
        let again = Scenario::from_toml_str(&s.canonical()).unwrap();
        assert_eq!(s, again);
        assert_eq!(s.checksum(), again.checksum());
    }

    #[test]
    fn missing_block_is_named() {
        let text = FLAT.replace("[time]\ndt = 0.05\nt_end = 0.2\n", "");
        match Scenario::from_toml_str(&text) {
            Err(Error::Schema(m)) => assert!(m.contains("time"), "{m}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn non_power_of_two_rejected() {
        let s = Scenario::from_toml_str(&FLAT.replace("nx = 16", "nx = 12")).unwrap();
        assert!(matches!(validate(s), Err(Error::Validation(m)) if m.starts_with("nx")));
    }

    #[test]
    fn expressions_see_pi_and_length() {
        let x = PeriodicGrid::new(8, 4.0).unwrap();
        let v = eval_expressions(&["sin(2*pi*x/L) + 1".into()], &x).unwrap();
        assert!((v[0][2] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [
            Mode::Evolve,
            Mode::DiagnoseFrozen,
            Mode::DiagnoseCoercivity,
            Mode::DiagnoseLocalization,
        ] {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
    }
}
