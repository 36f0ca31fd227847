use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{bump_set, BumpSet, BumpSpec, SmoothData, DEFAULT_POLY_POWER};
use crate::error::{Error, Result};
use crate::grid::UniformGrid;
use crate::integrator::{cfl_dt, Evolution, BOUNDARY_RING};
use crate::linear_wave::{lambda_norms, require_thresholds, BackgroundConfig, BackgroundSpec, LambdaNorms};
use crate::vector_fields::K_MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    GeodesicExactness,
    ConvergenceOrder,
    StabilityScaling,
    BoundsAudit,
    DecayProfile,
    GhostIntegral,
    IdentitySuite,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::GeodesicExactness,
        ExperimentKind::ConvergenceOrder,
        ExperimentKind::StabilityScaling,
        ExperimentKind::BoundsAudit,
        ExperimentKind::DecayProfile,
        ExperimentKind::GhostIntegral,
        ExperimentKind::IdentitySuite,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::GeodesicExactness => "geodesic_exactness",
            ExperimentKind::ConvergenceOrder => "convergence_order",
            ExperimentKind::StabilityScaling => "stability_scaling",
            ExperimentKind::BoundsAudit => "bounds_audit",
            ExperimentKind::DecayProfile => "decay_profile",
            ExperimentKind::GhostIntegral => "ghost_integral",
            ExperimentKind::IdentitySuite => "identity_suite",
        }
    }

    /// Kinds that evolve the nonlinear system and therefore need the smallness thresholds.
    pub fn evolves(self) -> bool {
        !matches!(self, ExperimentKind::BoundsAudit | ExperimentKind::IdentitySuite)
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    /// Spherically symmetric 3D grid on `r >= 0`.
    #[serde(default)]
    pub radial: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            half_width: default_half_width(),
            spacing: default_spacing(),
            radial: false,
        }
    }
}

/// Perturbation data `(u0, u1, v0, v1)`, multiplied by each `epsilon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationConfig {
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub u0: Option<Vec<BumpSpec>>,
    #[serde(default)]
    pub u1: Option<Vec<BumpSpec>>,
    #[serde(default)]
    pub v0: Option<Vec<BumpSpec>>,
    #[serde(default)]
    pub v1: Option<Vec<BumpSpec>>,
}

impl Default for PerturbationConfig {
    fn default() -> Self {
        PerturbationConfig {
            epsilons: default_epsilons(),
            u0: None,
            u1: None,
            v0: None,
            v1: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefinementConfig {
    /// Grid spacings, coarse to fine, each half the previous one. Defaults to `[h, h/2]`
    /// (geodesic) or `[h, h/2, h/4]` (convergence) from `grid.spacing`.
    #[serde(default)]
    pub spacings: Option<Vec<f64>>,
    /// Required refinement order.
    #[serde(default = "default_min_order")]
    pub min_order: f64,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        RefinementConfig {
            spacings: None,
            min_order: default_min_order(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuditConfig {
    #[serde(default = "default_audit_samples")]
    pub samples: usize,
    /// Radial sampling density per unit length.
    #[serde(default = "default_audit_density")]
    pub density: usize,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            samples: default_audit_samples(),
            density: default_audit_density(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayConfig {
    /// Integrate back to `t = 0` after the forward run and compare with the initial state.
    #[serde(default = "yes")]
    pub time_reversal: bool,
    #[serde(default = "default_drift_tol")]
    pub drift_tol: f64,
    #[serde(default = "default_drift_tol")]
    pub reversal_tol: f64,
}

impl Default for DecayConfig {
    fn default() -> Self {
        DecayConfig {
            time_reversal: true,
            drift_tol: default_drift_tol(),
            reversal_tol: default_drift_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentityConfig {
    /// Random jets per algebraic check.
    #[serde(default = "default_identity_samples")]
    pub samples: usize,
    #[serde(default = "default_family_size")]
    pub family_size: usize,
    #[serde(default = "default_harness_times")]
    pub harness_times: Vec<f64>,
    /// Two spacings for the harness stability check.
    #[serde(default = "default_harness_spacings")]
    pub harness_spacings: Vec<f64>,
    /// Allowed relative change of a harness maximum between the two spacings.
    #[serde(default = "default_harness_tol")]
    pub harness_tol: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        IdentityConfig {
            samples: default_identity_samples(),
            family_size: default_family_size(),
            harness_times: default_harness_times(),
            harness_spacings: default_harness_spacings(),
            harness_tol: default_harness_tol(),
        }
    }
}

/// File names inside the output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_csv")]
    pub csv: String,
    #[serde(default = "default_summary")]
    pub summary: String,
    #[serde(default = "default_log")]
    pub log: String,
    #[serde(default = "default_checkpoint")]
    pub checkpoint: String,
    /// Write a checkpoint every this many steps; 0 disables checkpoints.
    #[serde(default)]
    pub checkpoint_every: u64,
    /// Write the final fields of every run as CSV.
    #[serde(default)]
    pub snapshots: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            csv: default_csv(),
            summary: default_summary(),
            log: default_log(),
            checkpoint: default_checkpoint(),
            checkpoint_every: 0,
            snapshots: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub kind: Option<ExperimentKind>,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_cfl")]
    pub cfl: f64,
    /// Abort when the local hyperbolicity head-room falls below this.
    #[serde(default = "default_abort_margin")]
    pub abort_margin: f64,
    #[serde(default = "default_cadence")]
    pub cadence: f64,
    /// Longest vector-field word in the diagnostics: energies up to `E_{K+1}`, sups up to `X_K`.
    #[serde(default = "default_energy_order")]
    pub energy_order: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub background: BackgroundConfig,
    #[serde(default)]
    pub perturbation: PerturbationConfig,
    #[serde(default)]
    pub refinement: RefinementConfig,
    #[serde(default)]
    pub audit: AuditConfig,
    #[serde(default)]
    pub decay: DecayConfig,
    #[serde(default)]
    pub identity: IdentityConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("empty config parses")
    }
}

fn default_half_width() -> f64 {
    24.0
}
fn default_spacing() -> f64 {
    0.03125
}
fn default_epsilons() -> Vec<f64> {
    vec![1e-2, 5e-3, 2.5e-3]
}
fn default_min_order() -> f64 {
    3.5
}
fn default_audit_samples() -> usize {
    20
}
fn default_audit_density() -> usize {
    40
}
fn yes() -> bool {
    true
}
fn default_drift_tol() -> f64 {
    1e-6
}
fn default_identity_samples() -> usize {
    1000
}
fn default_family_size() -> usize {
    50
}
fn default_harness_times() -> Vec<f64> {
    vec![0.0, 2.0, 5.0, 10.0]
}
fn default_harness_spacings() -> Vec<f64> {
    vec![0.05, 0.025]
}
fn default_harness_tol() -> f64 {
    0.05
}
fn default_csv() -> String {
    "series.csv".to_string()
}
fn default_summary() -> String {
    "summary.toml".to_string()
}
fn default_log() -> String {
    "run.log".to_string()
}
fn default_checkpoint() -> String {
    "checkpoint.bin".to_string()
}
fn default_dim() -> usize {
    2
}
fn default_t_max() -> f64 {
    20.0
}
fn default_cfl() -> f64 {
    0.4
}
fn default_abort_margin() -> f64 {
    1e-3
}
fn default_cadence() -> f64 {
    1.0
}
fn default_energy_order() -> usize {
    2
}

/// Off-centre perturbation data inside the unit ball; centred variants on radial grids.
fn default_perturbation(radial: bool) -> [Vec<BumpSpec>; 4] {
    if radial {
        [
            vec![BumpSpec::at(&[], 0.95, 1.0)],
            vec![BumpSpec::at(&[], 0.9, 0.5)],
            vec![BumpSpec::at(&[], 0.9, 1.0)],
            vec![BumpSpec::at(&[], 0.85, -0.5)],
        ]
    } else {
        [
            vec![BumpSpec::at(&[0.1, 0.0], 0.9, 1.0)],
            vec![BumpSpec::at(&[0.0, 0.1], 0.85, 0.5)],
            vec![BumpSpec::at(&[-0.1, 0.05], 0.85, 1.0)],
            vec![BumpSpec::at(&[0.05, -0.1], 0.8, -0.5)],
        ]
    }
}

/// Parsed perturbation data.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    pub u0: BumpSet,
    pub u1: BumpSet,
    pub v0: BumpSet,
    pub v1: BumpSet,
}

impl Perturbation {
    pub fn sets(&self) -> [&BumpSet; 4] {
        [&self.u0, &self.u1, &self.v0, &self.v1]
    }
}

/// A validated configuration with everything derived from it.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub cfg: ExperimentConfig,
    pub kind: ExperimentKind,
    pub background: BackgroundSpec,
    pub perturbation: Perturbation,
    /// Present for kinds that evolve the system.
    pub norms: Option<LambdaNorms>,
}

impl Resolved {
    /// Radius containing every Cauchy datum.
    pub fn support(&self) -> f64 {
        let mut r = self.background.support_radius();
        for s in self.perturbation.sets() {
            if let Some(b) = s.support() {
                r = r.max(b.center.iter().map(|v| v * v).sum::<f64>().sqrt() + b.radius);
            }
        }
        r
    }

    pub fn grid_at(&self, spacing: f64) -> Result<UniformGrid> {
        if self.cfg.grid.radial {
            UniformGrid::radial3d(self.cfg.grid.half_width, spacing)
        } else {
            UniformGrid::cartesian(self.cfg.dim, self.cfg.grid.half_width, spacing)
        }
    }

    pub fn evolution(&self, grid: UniformGrid) -> Evolution {
        let mut evo = Evolution::new(grid, self.support());
        evo.min_margin = self.cfg.abort_margin;
        evo
    }

    /// Number of cadence intervals up to `t_max`.
    pub fn rows(&self) -> u64 {
        (self.cfg.t_max / self.cfg.cadence).round() as u64
    }

    /// A fixed step dividing the cadence, no larger than the CFL step.
    pub fn step_for(&self, grid: &UniformGrid) -> Result<(f64, u64)> {
        let limit = cfl_dt(grid, self.cfg.cfl, 1.0)?;
        let per_row = (self.cfg.cadence / limit).ceil().max(1.0) as u64;
        Ok((self.cfg.cadence / per_row as f64, per_row))
    }

    pub fn spacings(&self) -> Vec<f64> {
        let h = self.cfg.grid.spacing;
        match &self.cfg.refinement.spacings {
            Some(s) => s.clone(),
            None if self.kind == ExperimentKind::ConvergenceOrder => vec![h, h / 2.0, h / 4.0],
            None => vec![h, h / 2.0],
        }
    }

    /// SHA-256 of the resolved configuration text; checkpoints are bound to it.
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.echo().as_bytes()).into()
    }

    /// The configuration with every default filled in, as TOML.
    pub fn echo(&self) -> String {
        toml::to_string(&self.cfg).expect("configuration serializes")
    }
}

pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

/// Fills defaults, validates, and for evolving kinds checks the smallness thresholds.
pub fn resolve(mut cfg: ExperimentConfig, kind: Option<ExperimentKind>) -> Result<Resolved> {
    let kind = match (cfg.kind, kind) {
        (Some(a), Some(b)) if a != b => {
            return Err(Error::Config(format!("config is for `{a}` but `{b}` was requested")))
        }
        (a, b) => a
            .or(b)
            .ok_or_else(|| Error::Config("no experiment kind given".to_string()))?,
    };
    cfg.kind = Some(kind);
    if !(cfg.dim == 2 || cfg.dim == 3) {
        return Err(Error::Config(format!("`dim` must be 2 or 3, got {}", cfg.dim)));
    }
    if cfg.grid.radial && cfg.dim != 3 {
        return Err(Error::Config("radial grids are three-dimensional".to_string()));
    }
    positive("t_max", cfg.t_max)?;
    positive("cfl", cfg.cfl)?;
    positive("cadence", cfg.cadence)?;
    positive("grid.spacing", cfg.grid.spacing)?;
    positive("grid.half_width", cfg.grid.half_width)?;
    if cfg.cfl > 1.0 {
        return Err(Error::Config(format!("`cfl` must be at most 1, got {}", cfg.cfl)));
    }
    if !(0.0..1.0).contains(&cfg.abort_margin) {
        return Err(Error::Config(format!(
            "`abort_margin` must lie in [0, 1), got {}",
            cfg.abort_margin
        )));
    }
    let rows = cfg.t_max / cfg.cadence;
    if (rows - rows.round()).abs() > 1e-9 * rows.max(1.0) {
        return Err(Error::Config(format!(
            "`cadence` {} does not divide `t_max` {}",
            cfg.cadence, cfg.t_max
        )));
    }
    if cfg.energy_order > K_MAX {
        return Err(Error::Config(format!(
            "`energy_order` must be at most {K_MAX}, got {}",
            cfg.energy_order
        )));
    }
    if cfg.perturbation.epsilons.is_empty() {
        return Err(Error::Config("`perturbation.epsilons` is empty".to_string()));
    }
    for &e in &cfg.perturbation.epsilons {
        positive("perturbation.epsilons", e)?;
    }
    if kind == ExperimentKind::StabilityScaling {
        if cfg.perturbation.epsilons.len() < 2 {
            return Err(Error::Config(
                "stability scaling needs at least two epsilons".to_string(),
            ));
        }
        if cfg.energy_order < 1 {
            return Err(Error::Config(
                "stability scaling needs `energy_order` >= 1 for E_2".to_string(),
            ));
        }
    }

    let defaults = default_perturbation(cfg.grid.radial);
    let fill_power = |specs: &mut Vec<BumpSpec>| {
        for b in specs.iter_mut().filter(|b| b.family == "poly" && b.power.is_none()) {
            b.power = Some(DEFAULT_POLY_POWER);
        }
    };
    cfg.background = cfg.background.clone().with_defaults();
    fill_power(&mut cfg.background.theta0);
    fill_power(&mut cfg.background.theta1);
    let p = &mut cfg.perturbation;
    for (slot, d) in [&mut p.u0, &mut p.u1, &mut p.v0, &mut p.v1].into_iter().zip(defaults) {
        fill_power(slot.get_or_insert(d));
    }
    let set = |s: &Option<Vec<BumpSpec>>| bump_set(cfg.dim, s.as_deref().unwrap_or(&[]));
    let perturbation = Perturbation {
        u0: set(&cfg.perturbation.u0)?,
        u1: set(&cfg.perturbation.u1)?,
        v0: set(&cfg.perturbation.v0)?,
        v1: set(&cfg.perturbation.v1)?,
    };
    for s in perturbation.sets() {
        s.check_support_within(1.0)?;
        if cfg.grid.radial && !s.is_radial() {
            return Err(Error::Config(
                "radial grids need perturbation bumps centred at the origin".to_string(),
            ));
        }
    }
    let background = cfg.background.to_spec(cfg.dim)?;
    if cfg.grid.radial && !background.is_radial() {
        return Err(Error::Config(
            "radial grids need a background centred at the origin".to_string(),
        ));
    }

    let spacings = match &cfg.refinement.spacings {
        Some(s) => s.clone(),
        None => vec![cfg.grid.spacing],
    };
    for w in spacings.windows(2) {
        if (w[1] * 2.0 - w[0]).abs() > 1e-12 * w[0] {
            return Err(Error::Config(format!("refinement spacings must halve: {spacings:?}")));
        }
    }

    let mut resolved = Resolved {
        cfg,
        kind,
        background,
        perturbation,
        norms: None,
    };
    if kind.evolves() {
        // the data must stay clear of the Dirichlet ring for the whole run
        let h = resolved.cfg.grid.spacing;
        let evo = resolved.evolution(resolved.grid_at(h)?);
        let need = evo.support + resolved.cfg.t_max + evo.pad + (BOUNDARY_RING + 2) as f64 * h;
        if resolved.cfg.grid.half_width < need {
            return Err(Error::Config(format!(
                "`grid.half_width` {} is too small: the light cone of the data reaches {need} by t = {}",
                resolved.cfg.grid.half_width, resolved.cfg.t_max
            )));
        }
        let norms = lambda_norms(&resolved.background)?;
        require_thresholds(&norms, resolved.cfg.dim)?;
        resolved.norms = Some(norms);
    }
    Ok(resolved)
}
