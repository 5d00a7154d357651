//! Experiment configuration: the TOML schema, scenario catalogue and
//! exhaustive validation.
//!
//! A config is a single human-editable TOML file. `validate_config` parses
//! it and then checks every invariant it can before any numerics run,
//! reporting all violations at once rather than bailing at the first.
//! The commented files under `configs/` in the repository root are the
//! schema reference, one per scenario.

use crate::error::{Error, Result};
use crate::expr::ScalarFn;
use crate::geometry::{FiberSpec, WarpedGeometry};
use crate::nlsolve::Nonlinearity;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// The experiment catalogue. Scenario names appear in configs in
/// snake_case, e.g. `scenario = "affine_symmetry"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Affine right-hand side on a fibered annulus: the solution must be
    /// radially symmetric up to discretization rounding on every grid.
    AffineSymmetry,
    /// Strictly concave right-hand side below the threshold, asymmetric
    /// starts: symmetry and stability of the converged solutions.
    ConcaveSymmetry,
    /// Several seeded Newton starts must land on the same solution; an
    /// optional marginal mode documents the affine exceptional case where
    /// the linearized eigenvalue sits at zero.
    UniquenessMultistart,
    /// Barrier construction succeeds below the threshold and raises a
    /// window error above it; curves are exported.
    ThresholdSharpness,
    /// Refinement study of the averaging and rotation commutation
    /// residuals, with a non-split negative control that must not decay.
    CommutationSuite,
    /// The full pipeline on a weighted slab over a circle: threshold,
    /// barrier, multistart solve, stability, symmetry.
    GaussianSlab,
    /// Manufactured-solution truncation error of the assembled operator
    /// across grids, with the fitted convergence slope.
    RefinementStudy,
    /// Tail behaviour of the threshold integrand on a widened annulus.
    InfiniteAnnulusDiag,
}

impl Scenario {
    /// The snake_case name used in configs and file names.
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::AffineSymmetry => "affine_symmetry",
            Scenario::ConcaveSymmetry => "concave_symmetry",
            Scenario::UniquenessMultistart => "uniqueness_multistart",
            Scenario::ThresholdSharpness => "threshold_sharpness",
            Scenario::CommutationSuite => "commutation_suite",
            Scenario::GaussianSlab => "gaussian_slab",
            Scenario::RefinementStudy => "refinement_study",
            Scenario::InfiniteAnnulusDiag => "infinite_annulus_diag",
        }
    }

    fn needs_grids(&self) -> bool {
        !matches!(
            self,
            Scenario::ThresholdSharpness | Scenario::InfiniteAnnulusDiag
        )
    }

    fn needs_fiber(&self) -> bool {
        matches!(
            self,
            Scenario::AffineSymmetry
                | Scenario::ConcaveSymmetry
                | Scenario::CommutationSuite
                | Scenario::GaussianSlab
        )
    }
}

/// Fiber section of the geometry. Converted through the validating
/// constructors, so the weighted fiber volume is always consistent.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FiberConfig {
    /// No fiber: purely radial problems.
    Point,
    /// Flat circle with optional weight `gamma`.
    Circle {
        circumference: f64,
        #[serde(default)]
        gamma: Option<ScalarFn>,
    },
    /// Flat torus product; omitted weights default to zero per axis.
    Torus {
        lengths: Vec<f64>,
        #[serde(default)]
        gamma: Vec<ScalarFn>,
    },
}

impl FiberConfig {
    pub fn build(&self) -> Result<FiberSpec> {
        match self {
            FiberConfig::Point => Ok(FiberSpec::point()),
            FiberConfig::Circle {
                circumference,
                gamma,
            } => FiberSpec::circle(
                *circumference,
                gamma.clone().unwrap_or_else(ScalarFn::zero),
            ),
            FiberConfig::Torus { lengths, gamma } => {
                let gammas = if gamma.is_empty() {
                    vec![ScalarFn::zero(); lengths.len()]
                } else {
                    gamma.clone()
                };
                FiberSpec::torus(lengths.clone(), gammas)
            }
        }
    }

    pub fn is_point(&self) -> bool {
        matches!(self, FiberConfig::Point)
    }
}

/// Geometry section: warped annulus `[r1, r2] x N` with weight
/// `Phi(r) + Gamma(xi)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    /// Ambient dimension `m = 1 + dim N` (at least 2).
    pub dim: u32,
    pub r1: f64,
    pub r2: f64,
    pub sigma: ScalarFn,
    pub phi: ScalarFn,
    #[serde(default = "default_fiber")]
    pub fiber: FiberConfig,
}

fn default_fiber() -> FiberConfig {
    FiberConfig::Point
}

impl GeometryConfig {
    pub fn build(&self) -> Result<WarpedGeometry> {
        WarpedGeometry::new(
            self.dim,
            self.r1,
            self.r2,
            self.sigma.clone(),
            self.phi.clone(),
            self.fiber.build()?,
        )
    }
}

/// Grid sizes for refinement-style scenarios. `n_f` may be omitted: it
/// then mirrors `n_r` on fibered geometries and is 1 on radial ones.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n_r: Vec<usize>,
    #[serde(default)]
    pub n_f: Vec<usize>,
}

impl GridConfig {
    /// Resolved `(n_r, n_f)` level list.
    pub fn levels(&self, fibered: bool) -> Vec<(usize, usize)> {
        self.n_r
            .iter()
            .enumerate()
            .map(|(k, nr)| {
                let nf = if !self.n_f.is_empty() {
                    self.n_f[k]
                } else if fibered {
                    *nr
                } else {
                    1
                };
                (*nr, nf)
            })
            .collect()
    }
}

/// Dirichlet boundary values on the two boundary leaves. Both fields are
/// optional at parse time so that validation can name exactly which one a
/// scenario is missing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundaryConfig {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
}

/// Scenario tuning knobs with documented defaults; all optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    /// Number of seeded Newton starts (multistart scenarios; default 5).
    pub starts: Option<usize>,
    /// Amplitude of the seeded-start noise (default 0.4).
    pub amplitude: Option<f64>,
    /// Fraction of the threshold used as the certified slope bound
    /// (default 0.65 for the slab pipeline, 0.9 for sharpness runs).
    pub fraction: Option<f64>,
    /// Fraction above the threshold that must fail (default 1.1).
    pub fail_fraction: Option<f64>,
    /// Outer radius for the widened-annulus diagnostic; required there.
    pub r_max: Option<f64>,
    /// Homotopy stages for hard solves (default 1, i.e. plain Newton).
    pub stages: Option<usize>,
    /// Marginal mode for the multistart scenario: document the affine
    /// borderline case instead of a concave solve.
    pub marginal: Option<bool>,
    /// Stability classification tolerance (default 1e-6).
    pub tau: Option<f64>,
    /// Expected outcome of the tail diagnostic, asserted when present.
    pub expect_converging: Option<bool>,
}

/// A fully parsed experiment description. Produced by [`validate_config`];
/// the runner trusts its invariants.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Base name for all output files; `[A-Za-z0-9._-]` only.
    pub name: String,
    pub scenario: Scenario,
    #[serde(default)]
    pub seed: u64,
    pub geometry: GeometryConfig,
    #[serde(default)]
    pub grids: Option<GridConfig>,
    #[serde(default)]
    pub nonlinearity: Option<Nonlinearity>,
    #[serde(default)]
    pub boundary: Option<BoundaryConfig>,
    #[serde(default)]
    pub params: ParamsConfig,
    /// Output directory; overridden by the CLI flag and `ISOPDE_OUT`.
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    /// Boundary values, defaulting to zero where a scenario allows it.
    pub fn boundary_values(&self) -> (f64, f64) {
        let b = self.boundary.unwrap_or_default();
        (b.c1.unwrap_or(0.0), b.c2.unwrap_or(0.0))
    }

    /// Resolved grid levels (empty when no grids were configured).
    pub fn levels(&self) -> Vec<(usize, usize)> {
        match &self.grids {
            Some(g) => g.levels(!self.geometry.fiber.is_point()),
            None => Vec::new(),
        }
    }
}

/// Parse and validate a raw TOML config, collecting every violation.
///
/// # Errors
/// [`Error::Config`] with all messages joined by `"; "`, so a user can fix
/// the whole file in one pass.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = toml::from_str(raw)
        .map_err(|e| Error::Config(format!("config parse error: {}", e.message())))?;
    let mut violations: Vec<String> = Vec::new();

    if config.name.is_empty() {
        violations.push("name must not be empty".into());
    } else if !config
        .name
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
    {
        violations.push(format!(
            "name {:?} may only contain letters, digits, '-', '_' and '.'",
            config.name
        ));
    }

    if let Err(e) = config.geometry.build() {
        violations.push(format!("geometry: {e}"));
    }

    let scenario = config.scenario;
    match &config.grids {
        None => {
            if scenario.needs_grids() {
                violations.push(format!(
                    "scenario {} requires a [grids] section",
                    scenario.name()
                ));
            }
        }
        Some(grids) => {
            if grids.n_r.is_empty() {
                violations.push("grids.n_r must not be empty".into());
            }
            if grids.n_r.iter().any(|n| *n < 2) {
                violations.push("grids.n_r entries must be at least 2".into());
            }
            if grids.n_r.windows(2).any(|w| w[1] <= w[0]) {
                violations.push(format!("grids.n_r {:?} not increasing", grids.n_r));
            }
            if !grids.n_f.is_empty() {
                if grids.n_f.len() != grids.n_r.len() {
                    violations.push(format!(
                        "grids.n_f has {} entries but grids.n_r has {}",
                        grids.n_f.len(),
                        grids.n_r.len()
                    ));
                }
                if grids.n_f.windows(2).any(|w| w[1] < w[0]) {
                    violations.push(format!("grids.n_f {:?} decreases", grids.n_f));
                }
                if config.geometry.fiber.is_point() && grids.n_f.iter().any(|n| *n != 1) {
                    violations.push("grids.n_f must be all 1 for a point fiber".into());
                } else if !config.geometry.fiber.is_point() && grids.n_f.iter().any(|n| *n < 8) {
                    violations.push("grids.n_f entries must be at least 8 on a fibered geometry".into());
                }
            } else if !config.geometry.fiber.is_point() && grids.n_r.iter().any(|n| *n < 8) {
                violations.push(
                    "grids.n_r entries must be at least 8 when n_f mirrors them on a fibered geometry"
                        .into(),
                );
            }
        }
    }

    if scenario.needs_fiber() && config.geometry.fiber.is_point() {
        violations.push(format!(
            "scenario {} needs a fibered geometry, not a point fiber",
            scenario.name()
        ));
    }

    let marginal = config.params.marginal.unwrap_or(false);
    let needs_nonlinearity = matches!(
        scenario,
        Scenario::AffineSymmetry | Scenario::ConcaveSymmetry
    ) || (scenario == Scenario::UniquenessMultistart && !marginal);
    let needs_boundary = needs_nonlinearity || scenario == Scenario::GaussianSlab;

    match &config.nonlinearity {
        None => {
            if needs_nonlinearity {
                violations.push(format!(
                    "scenario {} requires a [nonlinearity] section",
                    scenario.name()
                ));
            }
        }
        Some(f) => match scenario {
            Scenario::AffineSymmetry => {
                if !f.is_affine() {
                    violations.push("affine_symmetry needs an affine nonlinearity".into());
                }
            }
            Scenario::ConcaveSymmetry => {
                if f.is_affine() {
                    violations.push("concave_symmetry needs a non-affine nonlinearity".into());
                }
                if f.slope_lower_bound().is_none() {
                    violations.push(
                        "concave_symmetry needs a nonlinearity with a certified slope bound"
                            .into(),
                    );
                }
            }
            Scenario::UniquenessMultistart if !marginal => {
                if !f.is_concave() || f.is_affine() {
                    violations.push(
                        "uniqueness_multistart needs a strictly concave nonlinearity".into(),
                    );
                }
            }
            _ => {}
        },
    }

    if needs_boundary {
        let b = config.boundary.unwrap_or_default();
        if b.c1.is_none() {
            violations.push(format!(
                "boundary.c1 is required for scenario {}",
                scenario.name()
            ));
        }
        if b.c2.is_none() {
            violations.push(format!(
                "boundary.c2 is required for scenario {}",
                scenario.name()
            ));
        }
    }

    let p = &config.params;
    if let Some(s) = p.starts {
        if s < 2 {
            violations.push("params.starts must be at least 2".into());
        }
    }
    if let Some(a) = p.amplitude {
        if !(a > 0.0) {
            violations.push("params.amplitude must be positive".into());
        }
    }
    if let Some(fr) = p.fraction {
        if !(0.0 < fr && fr < 1.0) {
            violations.push(format!("params.fraction {fr} must lie in (0, 1)"));
        }
    }
    if let Some(fr) = p.fail_fraction {
        if !(fr > 1.0) {
            violations.push(format!("params.fail_fraction {fr} must exceed 1"));
        }
    }
    if let Some(st) = p.stages {
        if st == 0 {
            violations.push("params.stages must be at least 1".into());
        }
    }
    if let Some(t) = p.tau {
        if !(t > 0.0) {
            violations.push("params.tau must be positive".into());
        }
    }
    match p.r_max {
        Some(rm) => {
            if !(rm > config.geometry.r2) {
                violations.push(format!(
                    "params.r_max {rm} must exceed r2 = {}",
                    config.geometry.r2
                ));
            }
        }
        None => {
            if scenario == Scenario::InfiniteAnnulusDiag {
                violations.push("params.r_max is required for infinite_annulus_diag".into());
            }
        }
    }

    if violations.is_empty() {
        Ok(config)
    } else {
        Err(Error::Config(violations.join("; ")))
    }
}

/// Read and validate a config file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let raw = std::fs::read_to_string(path)?;
    validate_config(&raw)
}
