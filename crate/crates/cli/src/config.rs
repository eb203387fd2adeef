//! Run configuration: defaults, then a JSON file, then command-line flags.

use std::path::{Path, PathBuf};

use pppnav::field::{AnalyticScene, DensityGrid};
use pppnav::planner::{PlanParams, QpMethod, QpSettings, SplineSpec, TimeLimits};
use pppnav::ppp::PppConfig;
use pppnav::Aabb;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneSource {
    /// Density grid file.
    Grid(PathBuf),
    /// Analytic scene JSON.
    Analytic(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    pub degree: usize,
    pub continuity: usize,
    pub snap_order: usize,
    pub smooth_weight: f64,
    pub overlap_theta: f64,
    pub pieces_per_box: usize,
    /// Box inset as a fraction of the cell size.
    pub box_margin: f64,
    pub v_max_dyn: f64,
    pub a_max_dyn: f64,
    /// `interior_point` or `admm`.
    pub qp_method: String,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        let p = PlanParams::default();
        Self {
            degree: p.spline.degree,
            continuity: p.spline.continuity,
            snap_order: p.spline.snap_order,
            smooth_weight: p.spline.smooth_weight,
            overlap_theta: p.overlap_theta,
            pieces_per_box: p.pieces_per_box,
            box_margin: p.box_margin,
            v_max_dyn: p.limits.v_max,
            a_max_dyn: p.limits.a_max,
            qp_method: "interior_point".into(),
        }
    }
}

impl PlannerConfig {
    pub fn params(&self) -> Result<PlanParams, CliError> {
        let method = match self.qp_method.as_str() {
            "interior_point" => QpMethod::InteriorPoint,
            "admm" => QpMethod::Admm,
            other => return Err(CliError::config(format!("unknown qp_method '{other}' (interior_point | admm)"))),
        };
        let d = PlanParams::default();
        Ok(PlanParams {
            spline: SplineSpec {
                degree: self.degree,
                continuity: self.continuity,
                snap_order: self.snap_order,
                smooth_weight: self.smooth_weight,
            },
            overlap_theta: self.overlap_theta,
            pieces_per_box: self.pieces_per_box,
            box_margin: self.box_margin,
            limits: TimeLimits {
                v_max: self.v_max_dyn,
                a_max: self.a_max_dyn,
                ..d.limits
            },
            qp: QpSettings { method, ..d.qp },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateConfig {
    pub n_poses: usize,
    pub n_realizations: usize,
    pub samples_per_segment: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            n_poses: 200,
            n_realizations: 1000,
            samples_per_segment: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scene: Option<SceneSource>,
    pub ppp: PppConfig,
    pub robot_radius: f64,
    /// Vertex counts used when an analytic scene is sampled to a grid.
    pub dims: [usize; 3],
    /// Region sampled from an analytic scene.
    pub bbox: Aabb,
    /// PURR file written by `build-purr` and read by `plan` and `validate`;
    /// defaults to `<out_dir>/map.purr`.
    pub purr: Option<PathBuf>,
    pub planner: PlannerConfig,
    pub validate: ValidateConfig,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene: None,
            ppp: PppConfig::default(),
            robot_radius: 0.02,
            dims: [64, 64, 64],
            bbox: Aabb::unit(),
            purr: None,
            planner: PlannerConfig::default(),
            validate: ValidateConfig::default(),
            seed: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Recursively overlays `patch` on `base`. Keys absent from `base` are
/// rejected unless the base value is `null` (an unset option).
fn merge(base: &mut Value, patch: Value, path: &str) -> Result<(), CliError> {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                let sub = format!("{path}{}{k}", if path.is_empty() { "" } else { "." });
                match b.get_mut(&k) {
                    Some(slot) if !slot.is_null() => merge(slot, v, &sub)?,
                    Some(slot) => *slot = v,
                    None => return Err(CliError::config(format!("unknown config key '{sub}'"))),
                }
            }
            Ok(())
        }
        (b, p) => {
            *b = p;
            Ok(())
        }
    }
}

impl RunConfig {
    /// Defaults overlaid with the JSON document at `path`, if any.
    pub fn from_file(path: Option<&Path>) -> Result<Self, CliError> {
        let mut value = serde_json::to_value(Self::default()).expect("defaults serialize");
        if let Some(path) = path {
            require_file(path)?;
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
            let patch: Value = serde_json::from_str(&text)
                .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            if !patch.is_object() {
                return Err(CliError::config(format!("{}: expected a JSON object", path.display())));
            }
            merge(&mut value, patch, "")?;
        }
        serde_json::from_value(value).map_err(|e| CliError::config(format!("config: {e}")))
    }

    /// Checks parameter invariants and that referenced inputs exist.
    pub fn check(&self) -> Result<(), CliError> {
        self.ppp.validate().map_err(|e| CliError::config(e.to_string()))?;
        if !(self.robot_radius > 0.0 && self.robot_radius.is_finite()) {
            return Err(CliError::config(format!("robot_radius must be positive, got {}", self.robot_radius)));
        }
        if self.dims.iter().any(|&d| d < 2) {
            return Err(CliError::config(format!("dims need at least 2 vertices per axis, got {:?}", self.dims)));
        }
        if !self.bbox.is_proper() {
            return Err(CliError::config(format!("bbox {:?} is degenerate", self.bbox)));
        }
        if let Some(SceneSource::Grid(p) | SceneSource::Analytic(p)) = &self.scene {
            require_file(p)?;
        }
        self.planner.params()?;
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn purr_path(&self) -> PathBuf {
        self.purr.clone().unwrap_or_else(|| self.out_dir.join("map.purr"))
    }

    pub fn scene_source(&self) -> Result<&SceneSource, CliError> {
        self.scene
            .as_ref()
            .ok_or_else(|| CliError::config("no scene given (use --scene, --grid, or \"scene\" in the config)"))
    }

    /// The analytic scene, if the source is one.
    pub fn analytic(&self) -> Result<Option<AnalyticScene>, CliError> {
        match self.scene_source()? {
            SceneSource::Analytic(p) => Ok(Some(AnalyticScene::load(p)?)),
            SceneSource::Grid(_) => Ok(None),
        }
    }

    /// Density grid from the scene source; analytic scenes are sampled at
    /// `dims` over `bbox`.
    pub fn grid(&self) -> Result<DensityGrid, CliError> {
        match self.scene_source()? {
            SceneSource::Grid(p) => Ok(DensityGrid::load(p)?),
            SceneSource::Analytic(p) => Ok(AnalyticScene::load(p)?.sample(self.dims, self.bbox)?),
        }
    }
}

pub fn require_file(p: &Path) -> Result<(), CliError> {
    if p.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("input file {} does not exist", p.display())))
    }
}
