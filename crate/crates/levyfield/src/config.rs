//! Experiment configuration: a single TOML file per run, echoed into every
//! result payload and hashed into the run manifest.
//!
//! The key tree is documented in the repository README. `validate` checks
//! all cross-field constraints (assumption-track consistency, γ-moment
//! guards, integral divergence, grid coverage) without running anything.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{ConvexBody, PConvexSet};
use crate::kernels::Kernel;
use crate::regvar::TailModel;
use crate::simulator::SideFieldSpec;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum BodyConfig {
    Box { corner: Vec<f64>, sides: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    Point { at: Vec<f64> },
}

impl BodyConfig {
    pub fn build(&self) -> Result<ConvexBody> {
        match self {
            BodyConfig::Box { corner, sides } => ConvexBody::cuboid(corner.clone(), sides.clone()),
            BodyConfig::Ball { center, radius } => ConvexBody::ball(center.clone(), *radius),
            BodyConfig::Point { at } => Ok(ConvexBody::point(at.clone())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexSetConfig {
    pub bodies: Vec<BodyConfig>,
}

impl IndexSetConfig {
    pub fn build(&self) -> Result<PConvexSet> {
        let bodies: Result<Vec<ConvexBody>> = self.bodies.iter().map(|b| b.build()).collect();
        PConvexSet::new(bodies?)
    }
}

/// Simulation controls; all optional with documented defaults.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Integrability parameter γ ∈ (0,α) ∩ (0,1] tying the jump measure's
    /// negative part to the kernel.
    pub gamma: Option<f64>,
    /// Window margin; defaults to the neglect-budget margin.
    pub margin: Option<f64>,
    /// Evaluation grid step; defaults to kernel length scale / 20.
    pub grid_step: Option<f64>,
    /// Small-jump cutoff δ for the light part; defaults to the value making
    /// the uniform bias bound 1% of the smallest level studied.
    pub delta: Option<f64>,
    /// Whether to simulate the light part (finite-variation track only).
    #[serde(default)]
    pub light_part: bool,
    /// Fraction of the smallest studied level used as the neglect budget.
    pub neglect_epsilon_fraction: Option<f64>,
    /// Expected count of neglected atom lifts per replicate.
    pub neglect_miss_probability: Option<f64>,
}

impl SimConfig {
    pub fn neglect_epsilon_fraction(&self) -> f64 {
        self.neglect_epsilon_fraction.unwrap_or(0.01)
    }
    pub fn neglect_miss_probability(&self) -> f64 {
        self.neglect_miss_probability.unwrap_or(1e-4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SupremumMode {
    /// Grid supremum of the kernel-smoothed field.
    #[default]
    Field,
    /// Max of the atom magnitudes inside the set (the no-kernel oracle with
    /// its exact Poisson-max law).
    AtomMax,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub mode: SupremumMode,
    /// Theoretical exceedance targets placing the tail-test levels.
    pub target_exceedance: Option<Vec<f64>>,
    /// Evaluation points of the limiting CDF.
    pub x_grid: Option<Vec<f64>>,
    /// Index-set volume ladder for the extreme-value experiments.
    pub volumes: Option<Vec<f64>>,
    /// Grid parameters for the anti-clustering diagnostic.
    pub k: Option<usize>,
    pub l: Option<usize>,
    /// Block-side ladder for the ergodic average check.
    pub block_sides: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SideFieldsConfig {
    #[serde(default)]
    pub y1: SideFieldSpec,
    #[serde(default)]
    pub y2: SideFieldSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub scale_min: f64,
    pub scale_max: f64,
    pub scale_step: f64,
    pub k_list: Vec<usize>,
    pub l: usize,
    pub tail_fraction: Option<f64>,
    pub alignment_tol: Option<f64>,
    /// Deviation bound constant c in `|ratio - 1| ≤ c·k^{-1/2}`.
    pub ratio_constant: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Final Kolmogorov-Smirnov tolerance at the largest ladder volume.
    pub ks_final: Option<f64>,
    /// z for the Wilson confidence intervals of the tail experiment.
    pub wilson_z: Option<f64>,
    /// z ("standard errors") for the exact-law oracle coverage.
    pub oracle_z: Option<f64>,
    /// Absolute Fréchet proximity required of the oracle at the largest volume.
    pub oracle_frechet_abs: Option<f64>,
    /// Significance for slope-flatness and goodness-of-fit tests.
    pub significance: Option<f64>,
    /// Absolute tolerance of the alpha-functional integration.
    pub alpha_functional_tol: Option<f64>,
    /// Joint confidence level for paired perturbation comparisons.
    pub joint_ci_level: Option<f64>,
}

impl Tolerances {
    pub fn ks_final(&self) -> f64 {
        self.ks_final.unwrap_or(0.05)
    }
    pub fn wilson_z(&self) -> f64 {
        self.wilson_z.unwrap_or(1.96)
    }
    pub fn oracle_z(&self) -> f64 {
        self.oracle_z.unwrap_or(3.0)
    }
    pub fn oracle_frechet_abs(&self) -> f64 {
        self.oracle_frechet_abs.unwrap_or(0.01)
    }
    pub fn significance(&self) -> f64 {
        self.significance.unwrap_or(0.05)
    }
    pub fn alpha_functional_tol(&self) -> f64 {
        self.alpha_functional_tol.unwrap_or(1e-6)
    }
    pub fn joint_ci_level(&self) -> f64 {
        self.joint_ci_level.unwrap_or(0.95)
    }
}

/// One run's complete configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub model: TailModel,
    pub kernel: Kernel,
    pub index_set: IndexSetConfig,
    #[serde(default)]
    pub sim: SimConfig,
    pub experiment: Option<ExperimentSection>,
    #[serde(default)]
    pub side_fields: SideFieldsConfig,
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Content hash of the canonical JSON form (sorted keys), stable under
    /// key reordering of the source file.
    pub fn digest(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let out = hasher.finalize();
        out.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Effective γ: configured, or the default `min(α/2, 1)`.
    pub fn effective_gamma(&self) -> f64 {
        self.sim
            .gamma
            .unwrap_or_else(|| (self.model.alpha / 2.0).min(1.0))
    }
}

/// Outcome of configuration validation; report-only.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for e in &self.errors {
            out.push_str(&format!("error: {e}\n"));
        }
        for w in &self.warnings {
            out.push_str(&format!("warning: {w}\n"));
        }
        if self.ok() && self.warnings.is_empty() {
            out.push_str("config ok\n");
        }
        out
    }
}

/// Cross-field validation, mirroring the two assumption tracks: an
/// untruncated (Hölder-continuous) kernel admits any model; a truncated
/// (discontinuous) kernel or a simulated light part requires the
/// finite-variation track.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let model = &cfg.model;
    let kernel = &cfg.kernel;

    if !(model.alpha > 0.0) {
        report.errors.push("model.alpha must be positive".into());
    }
    if !(model.scale >= 0.0) {
        report
            .errors
            .push("model.scale must be non-negative".into());
    }

    // assumption tracks
    if kernel.truncation.is_some() && !model.finite_variation() {
        report.errors.push(
            "truncated kernels are discontinuous, which leaves only the finite-variation \
             track; this model has infinite variation"
                .into(),
        );
    }
    if cfg.sim.light_part && !model.finite_variation() {
        report.errors.push(format!(
            "light-part simulation requested but the {:?} model with alpha = {} has infinite \
             variation",
            model.family, model.alpha
        ));
    }

    // γ-moment guards
    let gamma = cfg.effective_gamma();
    if !(gamma > 0.0 && gamma <= 1.0 && gamma < model.alpha) {
        report.errors.push(format!(
            "gamma must lie in (0, alpha) ∩ (0, 1], got gamma = {gamma}, alpha = {}",
            model.alpha
        ));
    } else {
        if model.scale > 0.0 {
            if let Err(e) = model.gamma_moment_bound(gamma) {
                report.errors.push(format!("jump-measure γ-moment: {e}"));
            }
        }
        if let Err(e) = kernel.radial_envelope_moment(gamma, kernel.dimension - 1, 0.0) {
            report.errors.push(format!("kernel γ-integrability: {e}"));
        }
    }

    // tail-constant divergence guard
    if kernel
        .radial_envelope_moment(model.alpha, kernel.dimension - 1, 0.0)
        .is_err()
    {
        report.warnings.push(format!(
            "∫ g^α diverges for alpha = {}: the tail constant and tail experiments are \
             unavailable with this kernel",
            model.alpha
        ));
    }

    // index set
    match cfg.index_set.build() {
        Err(e) => report.errors.push(format!("index_set: {e}")),
        Ok(set) => {
            if set.dim() != kernel.dimension {
                report.errors.push(format!(
                    "dimension mismatch: kernel is {}-dimensional, index set {}-dimensional",
                    kernel.dimension,
                    set.dim()
                ));
            }
            if !set.contains_origin() {
                report.warnings.push(
                    "index set does not contain the origin; stationarity makes this harmless \
                     but the scaled ladders assume it"
                        .into(),
                );
            }
        }
    }

    // grid coverage
    if let Some(h) = cfg.sim.grid_step {
        if h > kernel.length_scale() / 2.0 {
            report.warnings.push(format!(
                "grid step {h} is coarse relative to the kernel length scale {}; supremum \
                 discretization error may dominate",
                kernel.length_scale()
            ));
        }
    }

    if let Some(exp) = &cfg.experiment {
        if exp.replicates < 100 {
            report
                .errors
                .push("experiment.replicates must be at least 100".into());
        }
        if let Some(xs) = &exp.x_grid {
            if xs.is_empty() || xs.iter().any(|&x| x <= 0.0) || xs.windows(2).any(|w| w[1] <= w[0])
            {
                report
                    .errors
                    .push("experiment.x_grid must be strictly increasing and positive".into());
            }
        }
        if let Some(vols) = &exp.volumes {
            if vols.iter().any(|&v| v < 1.0) || vols.windows(2).any(|w| w[1] <= w[0]) {
                report
                    .errors
                    .push("experiment.volumes must be increasing and at least 1".into());
            }
        }
        if let Some(ps) = &exp.target_exceedance {
            if ps.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
                report
                    .errors
                    .push("experiment.target_exceedance must lie in (0,1)".into());
            }
        }
    }

    if let Some(geo) = &cfg.geometry {
        if !(geo.scale_min > 0.0 && geo.scale_max > geo.scale_min && geo.scale_step > 0.0) {
            report
                .errors
                .push("geometry scales must satisfy 0 < min < max, step > 0".into());
        }
        if geo.k_list.is_empty() || geo.l == 0 {
            report
                .errors
                .push("geometry needs a non-empty k_list and L >= 1".into());
        }
    }

    report
}
