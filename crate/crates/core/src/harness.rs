//! End-to-end studies: limiting configuration, branch, spectra, diagnostics,
//! fitted rates and acceptance checks, driven by one TOML file.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::branch::{EigenSet, Eigenpair};
use crate::diagnostics::{diagnose, DiagnosticsRow, Limit, RowOptions};
use crate::green::{Domain, GreenOracle};
use crate::grid2d::Grid2D;
use crate::hamiltonian::{
    find_critical, predict_mid, scan_symmetric_pair, CriticalOptions, PeakSystem, Point, LOG8_MINUS_1,
};
use crate::solver1d::{amplitude_schedule, continue_radial, Branch1dOptions, ExactBranch};
use crate::solver2d::{continue_planar, Branch2dOptions, Eig2dOptions, Newton2dOptions, Planar, Truncation};
use crate::vexpr::VExpr;

/// Bumped whenever a report column or record changes meaning.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("first branch point failed: {0}")]
    FirstPoint(String),
    #[error("{0}")]
    Stage(String),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed report: {0}")]
    Parse(String),
}

fn stage<E: fmt::Display>(what: &'static str) -> impl Fn(E) -> HarnessError {
    move |e| HarnessError::Stage(format!("{what}: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "1d")]
    Radial,
    #[serde(rename = "2d")]
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Coarse radial cells (1d) or nodes per side (2d).
    pub n: Option<usize>,
    /// Nodes per side of the numeric Green grid on rectangles.
    pub green_n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: None, green_n: 129 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticalConfig {
    /// Initial guess, one point per peak; the origin when empty and m = 1.
    pub start: Vec<Point>,
    pub tol: f64,
    /// Random restarts tried when the guess fails.
    pub multistart: usize,
}

impl Default for CriticalConfig {
    fn default() -> Self {
        CriticalConfig {
            start: Vec::new(),
            tol: 1e-8,
            multistart: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EigenConfig {
    /// Eigenvalues per branch point, counting multiplicity.
    pub count: usize,
    #[serde(default = "default_eig_tol")]
    pub tol: f64,
}

fn default_eig_tol() -> f64 {
    1e-10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub radius: f64,
    pub window: f64,
    pub threshold: f64,
    /// Extra ball radii for the sensitivity table.
    pub radii: Vec<f64>,
    /// Branch points used by tail fits.
    pub tail: usize,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig {
            radius: 0.4,
            window: 4.0,
            threshold: 0.1,
            radii: vec![0.2, 0.3, 0.4],
            tail: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NewtonConfig {
    pub tol: Option<f64>,
    pub max_iter: usize,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig { tol: None, max_iter: 30 }
    }
}

/// Optional overrides for one check; unset fields take the check's default.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    pub band: Option<f64>,
    pub min_s: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub jsonl: Option<String>,
    pub csv: Option<String>,
}

/// One study, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub name: String,
    pub domain: Domain,
    #[serde(rename = "V")]
    pub v: String,
    pub m: usize,
    pub solver: SolverKind,
    #[serde(default)]
    pub seed: u64,
    pub schedule: ScheduleConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub critical: CriticalConfig,
    pub eigen: EigenConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    #[serde(default)]
    pub newton: NewtonConfig,
    #[serde(default)]
    pub checks: BTreeMap<String, CheckParams>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<StudyConfig, HarnessError> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| HarnessError::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<StudyConfig, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.display().to_string(),
            source,
        })?;
        StudyConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        let s = &self.schedule;
        if !(s.start.is_finite() && s.end.is_finite() && s.step > 0.0 && s.end >= s.start) {
            return bad(format!("schedule must be increasing, got {} to {} by {}", s.start, s.end, s.step));
        }
        if self.eigen.count < 3 * self.m + 1 {
            return bad(format!("eigen.count = {} is below 3m+1 = {}", self.eigen.count, 3 * self.m + 1));
        }
        let positive = [
            ("critical.tol", self.critical.tol),
            ("eigen.tol", self.eigen.tol),
            ("diagnostics.radius", self.diagnostics.radius),
            ("diagnostics.window", self.diagnostics.window),
            ("diagnostics.threshold", self.diagnostics.threshold),
        ];
        for (name, x) in positive.into_iter().chain(self.newton.tol.map(|t| ("newton.tol", t))) {
            if !(x > 0.0 && x.is_finite()) {
                return bad(format!("{name} must be positive, got {x}"));
            }
        }
        if self.diagnostics.radii.iter().any(|r| !(*r > 0.0)) {
            return bad("diagnostics.radii must be positive".into());
        }
        if self.diagnostics.tail < 4 {
            return bad("diagnostics.tail needs at least 4 points".into());
        }
        if self.newton.max_iter == 0 {
            return bad("newton.max_iter must be positive".into());
        }
        if !self.critical.start.is_empty() && self.critical.start.len() != self.m {
            return bad(format!("critical.start has {} points for m = {}", self.critical.start.len(), self.m));
        }
        let v = VExpr::parse(&self.v).map_err(|e| HarnessError::Config(format!("V: {e}")))?;
        if self.solver == SolverKind::Radial {
            if self.domain != Domain::UnitDisk || self.m != 1 {
                return bad("the 1d solver handles m = 1 on the disk only".into());
            }
            if !v.is_radial() {
                return bad(format!("the 1d solver needs a radial V, got `{}`", self.v));
            }
        }
        if let Some(n) = self.grid.n {
            if n < 16 {
                return bad(format!("grid.n = {n} is too small"));
            }
        }
        for name in self.checks.keys() {
            if CheckKind::from_name(name).is_none() {
                return bad(format!("unknown check `{name}`"));
            }
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON form, output paths excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output = OutputConfig::default();
        let canon = serde_json::to_string(&c).expect("config serializes");
        let digest = Sha256::digest(canon.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Least-squares fit models for tail series `(λ, value)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitModel {
    /// `log|value|` against `log λ`; returns the exponent.
    Power,
    /// `log|value|` against `log(1/|log λ|)`; returns the exponent.
    PowerInverseLog,
    /// `value · (log λ)²` as a constant; returns its mean.
    LogReciprocal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub value: f64,
    pub stderr: f64,
    pub points: usize,
}

pub fn fit_rate(series: &[(f64, f64)], model: FitModel) -> Result<Fit, HarnessError> {
    let n = series.len();
    if n < 4 {
        return Err(HarnessError::Stage(format!("fit needs 4 points, got {n}")));
    }
    if series.iter().any(|&(l, y)| !(l > 0.0 && l < 1.0) || !y.is_finite() || y == 0.0) {
        return Err(HarnessError::Stage("degenerate series for a rate fit".into()));
    }
    let nf = n as f64;
    match model {
        FitModel::LogReciprocal => {
            let ys: Vec<f64> = series.iter().map(|&(l, y)| y * l.ln().powi(2)).collect();
            let mean = ys.iter().sum::<f64>() / nf;
            let var = ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            Ok(Fit {
                value: mean,
                stderr: (var / nf).sqrt(),
                points: n,
            })
        }
        FitModel::Power | FitModel::PowerInverseLog => {
            let xs: Vec<f64> = series
                .iter()
                .map(|&(l, _)| if model == FitModel::Power { l.ln() } else { -l.ln().abs().ln() })
                .collect();
            let ys: Vec<f64> = series.iter().map(|&(_, y)| y.abs().ln()).collect();
            let (mx, my) = (xs.iter().sum::<f64>() / nf, ys.iter().sum::<f64>() / nf);
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            if !(sxx > 0.0) {
                return Err(HarnessError::Stage("fit abscissae coincide".into()));
            }
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let slope = sxy / sxx;
            let resid: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - my - slope * (x - mx)).powi(2)).sum();
            Ok(Fit {
                value: slope,
                stderr: (resid / (nf - 2.0) / sxx).sqrt(),
                points: n,
            })
        }
    }
}

/// The checks a study can assert; each maps to one acceptance statement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    ExactBranch,
    ConvergenceOrder,
    NewtonIterations,
    DLimit,
    SigmaRate,
    MuLowConstant,
    MuLowDecay,
    MidBand,
    BandGap,
    Profile,
    ProfileTrend,
    FarField,
    Orthogonality,
    CriticalScan,
    HEigenvectors,
    SignPattern,
    Concentration,
    COrthogonality,
    TotalMass,
}

impl CheckKind {
    pub const ALL: [CheckKind; 19] = [
        CheckKind::ExactBranch,
        CheckKind::ConvergenceOrder,
        CheckKind::NewtonIterations,
        CheckKind::DLimit,
        CheckKind::SigmaRate,
        CheckKind::MuLowConstant,
        CheckKind::MuLowDecay,
        CheckKind::MidBand,
        CheckKind::BandGap,
        CheckKind::Profile,
        CheckKind::ProfileTrend,
        CheckKind::FarField,
        CheckKind::Orthogonality,
        CheckKind::CriticalScan,
        CheckKind::HEigenvectors,
        CheckKind::SignPattern,
        CheckKind::Concentration,
        CheckKind::COrthogonality,
        CheckKind::TotalMass,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CheckKind::ExactBranch => "exact_branch",
            CheckKind::ConvergenceOrder => "convergence_order",
            CheckKind::NewtonIterations => "newton_iterations",
            CheckKind::DLimit => "d_limit",
            CheckKind::SigmaRate => "sigma_rate",
            CheckKind::MuLowConstant => "mu_low_constant",
            CheckKind::MuLowDecay => "mu_low_decay",
            CheckKind::MidBand => "mid_band",
            CheckKind::BandGap => "band_gap",
            CheckKind::Profile => "profile",
            CheckKind::ProfileTrend => "profile_trend",
            CheckKind::FarField => "far_field",
            CheckKind::Orthogonality => "orthogonality",
            CheckKind::CriticalScan => "critical_scan",
            CheckKind::HEigenvectors => "h_eigenvectors",
            CheckKind::SignPattern => "sign_pattern",
            CheckKind::Concentration => "concentration",
            CheckKind::COrthogonality => "c_orthogonality",
            CheckKind::TotalMass => "total_mass",
        }
    }

    pub fn from_name(name: &str) -> Option<CheckKind> {
        CheckKind::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Acceptance criterion the check belongs to.
    pub fn criterion(self) -> u8 {
        match self {
            CheckKind::ExactBranch | CheckKind::ConvergenceOrder | CheckKind::NewtonIterations => 2,
            CheckKind::DLimit => 3,
            CheckKind::SigmaRate => 4,
            CheckKind::MuLowConstant | CheckKind::MuLowDecay => 5,
            CheckKind::MidBand | CheckKind::BandGap => 6,
            CheckKind::Profile | CheckKind::ProfileTrend => 7,
            CheckKind::FarField | CheckKind::Orthogonality => 8,
            _ => 9,
        }
    }

    fn default_band(self) -> f64 {
        match self {
            CheckKind::ExactBranch => 1e-7,
            CheckKind::ConvergenceOrder => 1.9,
            CheckKind::NewtonIterations => 8.0,
            CheckKind::DLimit => 0.02,
            CheckKind::SigmaRate => 0.45,
            CheckKind::MuLowConstant => 0.15 * LOG8_MINUS_1 / 2.0,
            CheckKind::MuLowDecay => 2.5,
            CheckKind::MidBand => 0.10,
            CheckKind::BandGap => 1.0,
            CheckKind::Profile => 0.1,
            CheckKind::ProfileTrend => 0.0,
            CheckKind::FarField => 0.05,
            CheckKind::Orthogonality => 1e-8,
            CheckKind::CriticalScan => 1e-4,
            CheckKind::HEigenvectors => 1e-10,
            CheckKind::SignPattern => 0.0,
            CheckKind::Concentration => 0.0,
            CheckKind::COrthogonality => 0.1,
            CheckKind::TotalMass => 0.05,
        }
    }
}

/// Outcome of one check, with what was measured and against what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assertion {
    pub name: String,
    pub criterion: u8,
    pub measured: Option<f64>,
    pub band: String,
    pub passed: bool,
    pub detail: String,
    pub config_hash: String,
}

/// Mass over `B_R` at the deepest point and its tail exponent, per radius.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRate {
    pub radius: f64,
    pub sigma_deepest: f64,
    pub exponent: Option<Fit>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub sigma_exponent: Option<Fit>,
    pub sigma_by_radius: Vec<RadiusRate>,
    /// Constant of `(μ¹ - first) (log λ)²` over the tail.
    pub mu_constant: Option<Fit>,
    pub mu_constant_predicted: Option<f64>,
    /// Exponent of `|μ¹ - second|` in `1/|log λ|`.
    pub mu_second_decay: Option<Fit>,
    /// Slope of `μ^{m+1} - 1` in `λ` over `λ ∈ [1e-3, 5e-2]`.
    pub mid_slope: Option<f64>,
    pub mid_slope_predicted: Option<f64>,
    /// `δ_j / λ^{1/2}` divided by `d_j` at the deepest point.
    pub d_ratio: Vec<f64>,
    /// Profile errors over the tail, shallow to deep.
    pub profile_tail: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyReport {
    pub schema: String,
    pub name: String,
    pub config_hash: String,
    pub config: StudyConfig,
    pub peak_system: PeakSystem,
    pub rows: Vec<DiagnosticsRow>,
    /// Why the branch ended before the schedule did, if it did.
    pub truncation: Option<String>,
    pub rates: Rates,
    pub assertions: Vec<Assertion>,
}

impl StudyReport {
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// 0 when every assertion passed, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            2
        }
    }
}

/// Data gathered per branch point beyond the diagnostics row.
struct PointExtra {
    lambda_levels: Vec<f64>,
    mu: Vec<f64>,
}

fn schema_tag() -> String {
    format!("gelfand-report/{SCHEMA_VERSION}")
}

fn critical_system(cfg: &StudyConfig, oracle: &GreenOracle, v: &VExpr) -> Result<PeakSystem, HarnessError> {
    let opts = CriticalOptions {
        tol: cfg.critical.tol,
        ..CriticalOptions::default()
    };
    let start = if cfg.critical.start.is_empty() {
        if cfg.m != 1 {
            return Err(HarnessError::Config("critical.start is required for m > 1".into()));
        }
        let [x0, x1, y0, y1] = cfg.domain.bounding_box();
        vec![[0.5 * (x0 + x1), 0.5 * (y0 + y1)]]
    } else {
        cfg.critical.start.clone()
    };
    let first = find_critical(&start, oracle, v, &opts);
    if let Ok(sys) = first {
        return Ok(sys);
    }
    let mut last = first.unwrap_err();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [x0, x1, y0, y1] = cfg.domain.bounding_box();
    let margin = opts.margin_for(oracle);
    for k in 0..cfg.critical.multistart {
        let pts: Vec<Point> = (0..cfg.m)
            .map(|_| loop {
                let p = [rng.random_range(x0..x1), rng.random_range(y0..y1)];
                if cfg.domain.boundary_distance(p) > 2.0 * margin {
                    break p;
                }
            })
            .collect();
        info!("critical point restart {k} from {pts:?}");
        match find_critical(&pts, oracle, v, &opts) {
            Ok(sys) => return Ok(sys),
            Err(e) => last = e,
        }
    }
    Err(HarnessError::Stage(format!("critical point search: {last}")))
}

/// Runs a study end to end. A branch that stops early yields a truncated
/// report; only a failure at the first branch point is an error.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyReport, HarnessError> {
    cfg.validate()?;
    let hash = cfg.hash();
    let v = VExpr::parse(&cfg.v).map_err(|e| HarnessError::Config(e.to_string()))?;
    info!("study {} ({hash}): V = {}, m = {}, {:?}", cfg.name, cfg.v, cfg.m, cfg.solver);
    let oracle = GreenOracle::for_domain(cfg.domain, cfg.grid.green_n).map_err(stage("Green oracle"))?;
    let sys = critical_system(cfg, &oracle, &v)?;
    info!("critical configuration {:?}, Λ = {:?}", sys.points, sys.lambda);

    let schedule = amplitude_schedule(cfg.schedule.start, cfg.schedule.end, cfg.schedule.step);
    let row_opts = RowOptions {
        radius: cfg.diagnostics.radius,
        window: cfg.diagnostics.window,
        threshold: cfg.diagnostics.threshold,
    };
    let limit = Limit {
        points: &sys.points,
        d: &sys.d,
        big_lambda: &sys.lambda,
        c: &sys.c,
        eta: &sys.eta,
    };
    let mut radii = cfg.diagnostics.radii.clone();
    if !radii.contains(&cfg.diagnostics.radius) {
        radii.push(cfg.diagnostics.radius);
    }

    let mut rows = Vec::new();
    let mut extras = Vec::new();
    let mut sensitivity: Vec<Vec<f64>> = Vec::new();
    let mut failure: Option<HarnessError> = None;
    let mut record = |bp: &crate::branch::BranchPoint, pairs: Vec<Eigenpair>, orth: f64| {
        if failure.is_some() {
            return;
        }
        let es = match EigenSet::measure(pairs, bp, &sys.points, &oracle, cfg.diagnostics.radius, orth) {
            Ok(es) => es,
            Err(e) => {
                failure = Some(HarnessError::Stage(format!("concentration values at s = {}: {e}", bp.s)));
                return;
            }
        };
        match diagnose(bp, &es, &limit, &oracle, &row_opts) {
            Ok(row) => {
                info!("s = {:.3}: λ = {:.6e}, μ¹ = {:.6}", row.s, row.lambda, es.pairs[0].mu);
                sensitivity.push(
                    radii
                        .iter()
                        .map(|&r| crate::diagnostics::ball_mass(bp, 0, r))
                        .collect(),
                );
                extras.push(PointExtra {
                    lambda_levels: bp.lambda_levels.clone(),
                    mu: (1..=cfg.eigen.count).map(|n| es.mu(n).unwrap_or(f64::NAN)).collect(),
                });
                rows.push(row);
            }
            Err(e) => failure = Some(HarnessError::Stage(format!("diagnostics at s = {}: {e}", bp.s))),
        }
    };

    let truncation: Option<String> = match cfg.solver {
        SolverKind::Radial => {
            let opts = Branch1dOptions {
                n: cfg.grid.n.unwrap_or(2048),
                tol: cfg.newton.tol.unwrap_or(1e-11),
                max_iter: cfg.newton.max_iter,
                nmax: cfg.eigen.count,
                radii: radii.clone(),
                ..Branch1dOptions::default()
            };
            let (_, err) = continue_radial(&v, &schedule, &opts, |st| {
                record(&st.point, st.eigen.clone(), st.orthogonality)
            });
            err.map(|e| e.to_string())
        }
        SolverKind::Planar => {
            let n = cfg.grid.n.unwrap_or(257);
            let grid = Grid2D::new(cfg.domain, n).map_err(stage("grid"))?;
            let planar = Planar::new(Arc::new(grid)).map_err(stage("Laplacian"))?;
            let opts = Branch2dOptions {
                newton: Newton2dOptions {
                    tol: cfg.newton.tol.unwrap_or(1e-12),
                    max_iter: cfg.newton.max_iter,
                },
                eig: Eig2dOptions {
                    tol: cfg.eigen.tol,
                    seed: cfg.seed,
                    ..Eig2dOptions::default()
                },
                count: cfg.eigen.count,
                min_separation: 2.0 * cfg.diagnostics.radius.min(0.5 * min_separation(&sys.points)),
                ..Branch2dOptions::default()
            };
            let (_, trunc) = continue_planar(&planar, &oracle, &v, &sys.points, &schedule, &opts, |st| {
                record(&st.point, st.eigen.pairs.clone(), st.eigen.orthogonality)
            });
            trunc.map(|t| match t {
                Truncation::Depth { s, delta, limit } => {
                    format!("depth limit at s = {s}: δ = {delta:.4e} < {limit:.4e}")
                }
                Truncation::Failed(e) => e.to_string(),
            })
        }
    };
    if let Some(e) = failure {
        return Err(e);
    }
    if rows.is_empty() {
        return Err(HarnessError::FirstPoint(truncation.unwrap_or_else(|| "empty schedule".into())));
    }
    if let Some(t) = &truncation {
        info!("branch truncated: {t}");
    }

    let rates = rates(cfg, &sys, &rows, &extras, &radii, &sensitivity);
    let mut assertions = Vec::new();
    for (name, params) in &cfg.checks {
        let kind = CheckKind::from_name(name).expect("validated");
        let ctx = CheckContext {
            cfg,
            sys: &sys,
            oracle: &oracle,
            v: &v,
            rows: &rows,
            extras: &extras,
            rates: &rates,
        };
        let mut a = run_check(kind, params, &ctx);
        a.config_hash = hash.clone();
        info!("{} [{}]: {}", a.name, a.band, if a.passed { "PASS" } else { "FAIL" });
        assertions.push(a);
    }
    Ok(StudyReport {
        schema: schema_tag(),
        name: cfg.name.clone(),
        config_hash: hash,
        config: cfg.clone(),
        peak_system: sys,
        rows,
        truncation,
        rates,
        assertions,
    })
}

fn min_separation(points: &[Point]) -> f64 {
    let mut d = f64::INFINITY;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            d = d.min((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    d
}

fn tail<T>(xs: &[T], k: usize) -> &[T] {
    &xs[xs.len().saturating_sub(k)..]
}

fn rates(
    cfg: &StudyConfig,
    sys: &PeakSystem,
    rows: &[DiagnosticsRow],
    extras: &[PointExtra],
    radii: &[f64],
    sensitivity: &[Vec<f64>],
) -> Rates {
    let k = cfg.diagnostics.tail;
    let m = cfg.m;
    let eight_pi = 8.0 * PI;
    let sigma_series: Vec<(f64, f64)> = rows.iter().map(|r| (r.lambda, r.peaks[0].sigma - eight_pi)).collect();
    let sigma_exponent = fit_rate(tail(&sigma_series, k), FitModel::Power).ok();
    let sigma_by_radius = radii
        .iter()
        .enumerate()
        .map(|(i, &radius)| {
            let series: Vec<(f64, f64)> = rows
                .iter()
                .zip(sensitivity)
                .map(|(r, s)| (r.lambda, s[i] - eight_pi))
                .collect();
            RadiusRate {
                radius,
                sigma_deepest: sensitivity.last().map_or(f64::NAN, |s| s[i]),
                exponent: fit_rate(tail(&series, k), FitModel::Power).ok(),
            }
        })
        .collect();

    let first: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.eigen.first().and_then(|e| e.mu_residuals).map(|mr| (r.lambda, mr.first)))
        .collect();
    let second: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.eigen.first().and_then(|e| e.mu_residuals).map(|mr| (r.lambda, mr.second)))
        .collect();
    let mu_constant = fit_rate(tail(&first, k), FitModel::LogReciprocal).ok();
    let mu_constant_predicted = Some(2.0 * PI * sys.lambda[0] - LOG8_MINUS_1 / 2.0);
    let mu_second_decay = fit_rate(tail(&second, k), FitModel::PowerInverseLog).ok();

    // μ^{m+1} - 1 against λ, least squares through the origin
    let mid: Vec<(f64, f64)> = rows
        .iter()
        .zip(extras)
        .filter(|(r, _)| (1e-3..=5e-2).contains(&r.lambda))
        .map(|(r, x)| (r.lambda, x.mu[m] - 1.0))
        .collect();
    let mid_slope = (mid.len() >= 4).then(|| {
        let sxy: f64 = mid.iter().map(|(l, y)| l * y).sum();
        let sxx: f64 = mid.iter().map(|(l, _)| l * l).sum();
        sxy / sxx
    });
    let mid_slope_predicted = predict_mid(1.0, &sys.eta, m + 1).ok().map(|p| p - 1.0);

    let deepest = rows.last().expect("non-empty");
    let d_ratio = deepest
        .peaks
        .iter()
        .zip(&sys.d)
        .map(|(p, d)| p.delta_ratio / d)
        .collect();
    let profile_tail = tail(rows, k)
        .iter()
        .filter_map(|r| r.eigen.first().and_then(|e| e.profile_error.first().copied().flatten()))
        .collect();
    Rates {
        sigma_exponent,
        sigma_by_radius,
        mu_constant,
        mu_constant_predicted,
        mu_second_decay,
        mid_slope,
        mid_slope_predicted,
        d_ratio,
        profile_tail,
    }
}

struct CheckContext<'a> {
    cfg: &'a StudyConfig,
    sys: &'a PeakSystem,
    oracle: &'a GreenOracle,
    v: &'a VExpr,
    rows: &'a [DiagnosticsRow],
    extras: &'a [PointExtra],
    rates: &'a Rates,
}

fn max_of(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    xs.into_iter().fold(None, |m, x| Some(m.map_or(x, |m: f64| m.max(x))))
}

fn min_of(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    xs.into_iter().fold(None, |m, x| Some(m.map_or(x, |m: f64| m.min(x))))
}

/// Signs of `c` with the first entry made positive.
fn sign_pattern(c: &[f64], threshold: f64) -> Vec<i8> {
    let flip = if c.first().is_some_and(|x| *x < 0.0) { -1.0 } else { 1.0 };
    c.iter()
        .map(|x| {
            let y = flip * x;
            if y.abs() < threshold {
                0
            } else if y > 0.0 {
                1
            } else {
                -1
            }
        })
        .collect()
}

fn run_check(kind: CheckKind, params: &CheckParams, ctx: &CheckContext<'_>) -> Assertion {
    let band = params.band.unwrap_or(kind.default_band());
    let rows = ctx.rows;
    let m = ctx.cfg.m;
    let below = |x: Option<f64>| x.is_some_and(|x| x <= band);
    let above = |x: Option<f64>| x.is_some_and(|x| x >= band);
    let (measured, band_text, passed, detail): (Option<f64>, String, bool, String) = match kind {
        CheckKind::ExactBranch => {
            let x = max_of(rows.iter().map(|r| (r.lambda / ExactBranch::from_height(r.s).lambda() - 1.0).abs()));
            (x, format!("max |λ/λ_exact - 1| <= {band:e}"), below(x), format!("{} points", rows.len()))
        }
        CheckKind::ConvergenceOrder => {
            let orders: Vec<f64> = rows
                .iter()
                .zip(ctx.extras)
                .filter_map(|(r, x)| {
                    let exact = ExactBranch::from_height(r.s).lambda();
                    let [c, f] = x.lambda_levels[..] else { return None };
                    let (ec, ef) = ((c - exact).abs(), (f - exact).abs());
                    (ef > 1e-12 * exact).then(|| (ec / ef).log2())
                })
                .collect();
            let x = min_of(orders.iter().copied());
            (x, format!("min observed order >= {band}"), above(x), format!("{} points with resolvable error", orders.len()))
        }
        CheckKind::NewtonIterations => {
            let x = max_of(rows.iter().map(|r| r.newton_iterations as f64));
            (x, format!("max iterations per step <= {band}"), below(x), String::new())
        }
        CheckKind::DLimit => {
            let min_s = params.min_s.unwrap_or(16.0);
            let x = max_of(
                rows.iter()
                    .filter(|r| r.peaks[0].height >= min_s)
                    .flat_map(|r| r.peaks.iter().zip(&ctx.sys.d).map(|(p, d)| (p.delta_ratio / d - 1.0).abs())),
            );
            (x, format!("|δ/(λ^½ d) - 1| <= {band} for v(x_j) >= {min_s}"), below(x), format!("d = {:?}", ctx.sys.d))
        }
        CheckKind::SigmaRate => {
            let x = ctx.rates.sigma_exponent.map(|f| f.value);
            (x, format!("exponent of |σ - 8π| in λ >= {band}"), above(x), String::new())
        }
        CheckKind::MuLowConstant => {
            let (x, p) = (ctx.rates.mu_constant.map(|f| f.value), ctx.rates.mu_constant_predicted);
            let dev = x.zip(p).map(|(x, p)| (x - p).abs());
            (
                x,
                format!("|C - ({:.5})| <= {band:.5}", p.unwrap_or(f64::NAN)),
                below(dev),
                format!("deviation {:.5}", dev.unwrap_or(f64::NAN)),
            )
        }
        CheckKind::MuLowDecay => {
            let x = ctx.rates.mu_second_decay.map(|f| f.value);
            (x, format!("exponent of |μ¹ - second| in 1/|log λ| >= {band}"), above(x), String::new())
        }
        CheckKind::MidBand => {
            let (x, p) = (ctx.rates.mid_slope, ctx.rates.mid_slope_predicted);
            let rel = x.zip(p).map(|(x, p)| (x / p - 1.0).abs());
            (
                x,
                format!("slope within {:.0}% of {:.5}", 100.0 * band, p.unwrap_or(f64::NAN)),
                below(rel),
                format!("relative deviation {:.4}", rel.unwrap_or(f64::NAN)),
            )
        }
        CheckKind::BandGap => {
            let n = 3 * m + 1;
            let x = min_of(ctx.extras.iter().map(|e| e.mu[n - 1]));
            (x, format!("min μ^{n} > {band}"), x.is_some_and(|x| x > band), String::new())
        }
        CheckKind::Profile => {
            let x = max_of(
                rows.iter()
                    .filter(|r| r.lambda <= 1e-6)
                    .filter_map(|r| r.eigen.first().and_then(|e| e.profile_error.first().copied().flatten())),
            );
            (x, format!("profile error <= {band} at λ <= 1e-6"), below(x), String::new())
        }
        CheckKind::ProfileTrend => {
            let t = &ctx.rates.profile_tail;
            let rises = t.windows(2).filter(|w| w[1] >= w[0]).count();
            let ok = t.len() >= 4 && rises as f64 <= band;
            (Some(rises as f64), format!("increases over the tail <= {band}"), ok, format!("{t:?}"))
        }
        CheckKind::FarField => {
            let x = max_of(
                rows.iter()
                    .filter(|r| r.lambda <= 1e-3)
                    .filter_map(|r| r.eigen.first().map(|e| (e.c_far[0] - 1.0).abs())),
            );
            let last = rows.last().and_then(|r| r.eigen.first()).map(|e| e.c_far[0]);
            (x, format!("|c̃¹ - 1| <= {band} at λ <= 1e-3"), below(x), format!("deepest c̃¹ = {:.4}", last.unwrap_or(f64::NAN)))
        }
        CheckKind::Orthogonality => {
            let x = max_of(rows.iter().map(|r| r.orthogonality));
            (x, format!("max relative H¹₀ cross product <= {band:e}"), below(x), String::new())
        }
        CheckKind::CriticalScan => {
            let p = ctx.sys.points[0];
            let scan = scan_symmetric_pair(ctx.oracle, ctx.v, 0.02, 0.98, 100_000, p[0].abs());
            match scan {
                Ok(t) => {
                    let dev = ctx
                        .sys
                        .points
                        .iter()
                        .map(|q| (q[0].abs() - t).abs().max(q[1].abs()))
                        .fold(0.0, f64::max);
                    (Some(dev), format!("|x*_j - (±t*, 0)| <= {band:e}"), dev <= band, format!("t* = {t:.8}"))
                }
                Err(e) => (None, format!("<= {band:e}"), false, e.to_string()),
            }
        }
        CheckKind::HEigenvectors => {
            let s = std::f64::consts::FRAC_1_SQRT_2;
            let dev = if m == 2 {
                let c = &ctx.sys.c;
                let e1 = (c[0][0] - s).abs().max((c[0][1] - s).abs());
                let e2 = (c[1][0].abs() - s).abs().max((c[1][1].abs() - s).abs()).max((c[1][0] + c[1][1]).abs());
                Some(e1.max(e2))
            } else {
                None
            };
            (dev, format!("|c - (1,±1)/√2| <= {band:e}"), below(dev), format!("c = {:?}", ctx.sys.c))
        }
        CheckKind::SignPattern => {
            let th = ctx.cfg.diagnostics.threshold;
            let mut bad = 0usize;
            for r in rows {
                for n in 0..m.min(r.eigen.len()) {
                    if sign_pattern(&r.eigen[n].c_hat, th) != sign_pattern(&ctx.sys.c[n], th) {
                        bad += 1;
                    }
                }
            }
            let last = rows.last().map(|r| r.eigen.iter().take(m).map(|e| sign_pattern(&e.c_hat, th)).collect::<Vec<_>>());
            (Some(bad as f64), format!("mismatched ĉ sign patterns <= {band}"), bad as f64 <= band, format!("deepest {last:?}"))
        }
        CheckKind::Concentration => {
            let bad = rows
                .iter()
                .filter(|r| {
                    r.concentration
                        .as_ref()
                        .is_none_or(|c| !(c.first_everywhere && c.low_band_multi && c.matrix_structure))
                })
                .count();
            (Some(bad as f64), format!("points failing concentration <= {band}"), bad as f64 <= band, String::new())
        }
        CheckKind::COrthogonality => {
            let x = rows.last().and_then(|r| {
                let mut worst: Option<f64> = None;
                for i in 0..m.min(r.eigen.len()) {
                    for j in 0..i {
                        let (a, b) = (&r.eigen[i].c_hat, &r.eigen[j].c_hat);
                        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                        worst = Some(worst.unwrap_or(0.0).max(dot.abs() / (na * nb)));
                    }
                }
                worst
            });
            (x, format!("|ĉⁱ·ĉʲ|/(|ĉⁱ||ĉʲ|) <= {band} at the deepest point"), below(x), String::new())
        }
        CheckKind::TotalMass => {
            let x = rows.last().map(|r| (r.total_mass / (8.0 * PI * m as f64) - 1.0).abs());
            (x, format!("|Σ/(8πm) - 1| <= {band} at the deepest point"), below(x), String::new())
        }
    };
    Assertion {
        name: kind.name().to_string(),
        criterion: kind.criterion(),
        measured,
        band: band_text,
        passed,
        detail,
        config_hash: String::new(),
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    schema: String,
    name: String,
    config_hash: String,
    config: StudyConfig,
    peak_system: PeakSystem,
    truncation: Option<String>,
    rates: Rates,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Line {
    Header(Box<Header>),
    Row { config_hash: String, row: Box<DiagnosticsRow> },
    Assertion(Assertion),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Jsonl,
    Csv,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn emit(report: &StudyReport, path: impl AsRef<Path>, format: Format) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    match format {
        Format::Jsonl => write_jsonl(report, &mut out).map_err(io_err(path))?,
        Format::Csv => write_csv(report, &mut out).map_err(|e| HarnessError::Stage(format!("CSV: {e}")))?,
    }
    out.flush().map_err(io_err(path))
}

pub fn write_jsonl(report: &StudyReport, out: &mut impl Write) -> std::io::Result<()> {
    let header = Line::Header(Box::new(Header {
        schema: report.schema.clone(),
        name: report.name.clone(),
        config_hash: report.config_hash.clone(),
        config: report.config.clone(),
        peak_system: report.peak_system.clone(),
        truncation: report.truncation.clone(),
        rates: report.rates.clone(),
    }));
    let mut put = |line: &Line| -> std::io::Result<()> {
        serde_json::to_writer(&mut *out, line)?;
        out.write_all(b"\n")
    };
    put(&header)?;
    for row in &report.rows {
        put(&Line::Row {
            config_hash: report.config_hash.clone(),
            row: Box::new(row.clone()),
        })?;
    }
    for a in &report.assertions {
        put(&Line::Assertion(a.clone()))?;
    }
    Ok(())
}

/// Reads a report written by [`write_jsonl`].
pub fn read_jsonl(input: impl BufRead) -> Result<StudyReport, HarnessError> {
    let mut header: Option<Header> = None;
    let mut rows = Vec::new();
    let mut assertions = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Parse(format!("line {}: {e}", i + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Line>(&line).map_err(|e| HarnessError::Parse(format!("line {}: {e}", i + 1)))? {
            Line::Header(h) if header.is_none() => header = Some(*h),
            Line::Header(_) => return Err(HarnessError::Parse("second header record".into())),
            Line::Row { row, .. } => rows.push(*row),
            Line::Assertion(a) => assertions.push(a),
        }
    }
    let h = header.ok_or_else(|| HarnessError::Parse("missing header record".into()))?;
    if h.schema != schema_tag() {
        return Err(HarnessError::Parse(format!("schema {} (expected {})", h.schema, schema_tag())));
    }
    Ok(StudyReport {
        schema: h.schema,
        name: h.name,
        config_hash: h.config_hash,
        config: h.config,
        peak_system: h.peak_system,
        rows,
        truncation: h.truncation,
        rates: h.rates,
        assertions,
    })
}

/// Column names of the flat CSV for `m` peaks and `k` eigen entries.
pub fn csv_columns(m: usize, k: usize) -> Vec<String> {
    let mut cols: Vec<String> = [
        format!("schema_v{SCHEMA_VERSION}"),
        "config_hash".into(),
        "s".into(),
        "lambda".into(),
        "lambda_raw".into(),
        "total_mass".into(),
        "newton_iterations".into(),
        "orthogonality".into(),
    ]
    .into();
    for j in 1..=m {
        for f in ["x", "y", "height", "delta", "delta_ratio", "sigma", "pohozaev", "height_residual"] {
            cols.push(format!("peak{j}_{f}"));
        }
    }
    for e in 1..=k {
        for f in ["n", "mu", "far_fit", "r_first", "r_second", "r_inverse", "r_mid"] {
            cols.push(format!("eig{e}_{f}"));
        }
        for f in ["c_hat", "c_far", "profile"] {
            for j in 1..=m {
                cols.push(format!("eig{e}_{f}{j}"));
            }
        }
    }
    cols
}

fn cell(x: Option<f64>) -> String {
    x.map_or_else(String::new, |x| format!("{x:e}"))
}

pub fn write_csv(report: &StudyReport, out: impl Write) -> Result<(), csv::Error> {
    let m = report.config.m;
    let k = report.rows.iter().map(|r| r.eigen.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(csv_columns(m, k))?;
    for r in &report.rows {
        let mut rec: Vec<String> = vec![
            SCHEMA_VERSION.to_string(),
            report.config_hash.clone(),
            cell(Some(r.s)),
            cell(Some(r.lambda)),
            cell(Some(r.lambda_raw)),
            cell(Some(r.total_mass)),
            r.newton_iterations.to_string(),
            cell(Some(r.orthogonality)),
        ];
        for j in 0..m {
            let p = r.peaks.get(j);
            rec.extend([
                cell(p.map(|p| p.x[0])),
                cell(p.map(|p| p.x[1])),
                cell(p.map(|p| p.height)),
                cell(p.map(|p| p.delta)),
                cell(p.map(|p| p.delta_ratio)),
                cell(p.map(|p| p.sigma)),
                cell(p.and_then(|p| p.pohozaev).map(|x| x.residual)),
                cell(p.and_then(|p| p.peak_height).map(|x| x.refined)),
            ]);
        }
        for e in 0..k {
            let row = r.eigen.get(e);
            rec.extend([
                row.map_or_else(String::new, |x| x.n.to_string()),
                cell(row.map(|x| x.mu)),
                cell(row.map(|x| x.far_fit_error)),
                cell(row.and_then(|x| x.mu_residuals).map(|x| x.first)),
                cell(row.and_then(|x| x.mu_residuals).map(|x| x.second)),
                cell(row.and_then(|x| x.mu_residuals).map(|x| x.inverse)),
                cell(row.and_then(|x| x.mid_residual)),
            ]);
            for j in 0..m {
                rec.push(cell(row.and_then(|x| x.c_hat.get(j).copied())));
            }
            for j in 0..m {
                rec.push(cell(row.and_then(|x| x.c_far.get(j).copied())));
            }
            for j in 0..m {
                rec.push(cell(row.and_then(|x| x.profile_error.get(j).copied().flatten())));
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
