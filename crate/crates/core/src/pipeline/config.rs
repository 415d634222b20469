use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::eikonal::SolverParams;
use crate::error::{Error, Result};
use crate::manifold::ManifoldKind;
use crate::metric::{MetricParams, Model};
use crate::projection::CameraGeometry;
use crate::tracking::TrackParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostSource {
    /// Orientation-resolved vesselness of the lifted image.
    CrossingPreserving,
    /// Planar Frangi vesselness, constant along the orientation axis.
    FrangiR2,
    /// Array file supplied by the user, see [`CostConfig::external`].
    External,
}

impl std::str::FromStr for CostSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "crossing_preserving" => Ok(Self::CrossingPreserving),
            "frangi_r2" => Ok(Self::FrangiR2),
            "external" => Ok(Self::External),
            _ => Err(Error::BadConfig(format!(
                "unknown cost source `{s}` (crossing_preserving | frangi_r2 | external)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    pub source: CostSource,
    /// Vesselness or cost array; required for, and only allowed with, the
    /// external source. A sidecar `kind` of `cost` is used as is, anything
    /// else is treated as vesselness.
    pub external: Option<PathBuf>,
    pub lambda: f64,
    pub p: f64,
    /// Gaussian scales of the vesselness filters, in pixels.
    pub scales: Vec<f64>,
    /// Treat vessels as dark on a bright background.
    pub dark_vessels: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self {
            source: CostSource::CrossingPreserving,
            external: None,
            lambda: 100.0,
            p: 2.0,
            scales: vec![1.5, 2.5],
            dark_vessels: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    /// Orientations of the M2 grid; must divide 32.
    pub n_theta: usize,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub n_phi: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            n_theta: 32,
            n_alpha: 96,
            n_beta: 96,
            n_phi: 32,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: Option<f64>,
    pub n_max: Option<usize>,
    pub tol: f64,
    pub cfl: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            n_max: None,
            tol: 1e-4,
            cfl: 0.9,
        }
    }
}

/// A pose on the flat image: pixel column and row plus orientation in
/// degrees, measured from the column axis towards the row axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelPose {
    pub col: f64,
    pub row: f64,
    pub theta_deg: f64,
}

impl std::str::FromStr for PixelPose {
    type Err = Error;

    /// Parses `col,row,theta_deg`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::BadConfig(format!("pose `{s}` is not col,row,theta_deg")))?;
        match parts[..] {
            [col, row, theta_deg] => Ok(Self {
                col,
                row,
                theta_deg,
            }),
            _ => Err(Error::BadConfig(format!(
                "pose `{s}` is not col,row,theta_deg"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub image: PathBuf,
    pub output: PathBuf,
    pub manifold: ManifoldKind,
    pub model: Model,
    pub xi: f64,
    #[serde(default)]
    pub eta: f64,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub camera: CameraGeometry,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub tracking: TrackParams,
    pub seed: PixelPose,
    #[serde(default)]
    pub tips: Vec<PixelPose>,
}

impl PipelineConfig {
    pub fn new(image: impl Into<PathBuf>, output: impl Into<PathBuf>, seed: PixelPose) -> Self {
        Self {
            image: image.into(),
            output: output.into(),
            manifold: ManifoldKind::M2,
            model: Model::ForwardGear,
            xi: 4.0,
            eta: 0.0,
            cost: CostConfig::default(),
            camera: CameraGeometry::default(),
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            tracking: TrackParams::default(),
            seed,
            tips: Vec::new(),
        }
    }

    /// Reads a TOML file. Relative paths inside it are resolved against the
    /// file's directory.
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingInput {
                path: path.to_path_buf(),
                expected: "TOML pipeline configuration".into(),
            });
        }
        let text = std::fs::read_to_string(path)?;
        let mut cfg: Self = toml::from_str(&text)
            .map_err(|e| Error::BadConfig(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut cfg.image);
        rebase(&mut cfg.output);
        if let Some(p) = cfg.cost.external.as_mut() {
            rebase(p);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::BadConfig(e.to_string()))
    }

    pub fn metric(&self) -> Result<MetricParams> {
        MetricParams::new(self.model, self.manifold, self.xi, self.eta)
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        let mut s = SolverParams::new(self.metric()?);
        s.epsilon = self.solver.epsilon;
        s.n_max = self.solver.n_max;
        s.tol_sup = self.solver.tol;
        s.cfl = self.solver.cfl;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::BadConfig(m));
        self.solver_params()?;
        self.camera.validate()?;
        match (self.cost.source, &self.cost.external) {
            (CostSource::External, None) => {
                return bad("cost source `external` needs an external file".into())
            }
            (CostSource::External, Some(_)) => {}
            (_, Some(p)) => {
                return bad(format!(
                    "an external file ({}) was given together with cost source {:?}; choose one",
                    p.display(),
                    self.cost.source
                ))
            }
            (_, None) => {}
        }
        let c = &self.cost;
        if !(c.lambda > 0.0 && c.lambda.is_finite() && c.p > 0.0 && c.p.is_finite()) {
            return bad(format!(
                "lambda and p must be positive, got {} and {}",
                c.lambda, c.p
            ));
        }
        if c.scales.is_empty() || c.scales.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return bad("vesselness scales must be positive".into());
        }
        let g = &self.grid;
        if g.n_theta < 4 || 32 % g.n_theta != 0 {
            return bad(format!(
                "n_theta must divide 32 and be >= 4, got {}",
                g.n_theta
            ));
        }
        if g.n_alpha < 4 || g.n_beta < 4 || g.n_phi < 4 {
            return bad("W2 grid needs at least 4 nodes per axis".into());
        }
        let t = &self.tracking;
        if !(t.step > 0.0 && t.step <= 1.0) {
            return bad(format!(
                "tracking step must lie in (0, 1] cells, got {}",
                t.step
            ));
        }
        if !(t.capture_radius >= 1.0 && t.capture_radius.is_finite()) {
            return bad(format!(
                "capture radius must be at least one cell, got {}",
                t.capture_radius
            ));
        }
        for pose in std::iter::once(&self.seed).chain(&self.tips) {
            if !(pose.col.is_finite() && pose.row.is_finite() && pose.theta_deg.is_finite()) {
                return bad(format!("non-finite pose {pose:?}"));
            }
        }
        Ok(())
    }
}
