//! Run configuration: one JSON document with every tunable and its default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gridmap::GridSpec;
use crate::nav::NavContext;
use crate::sim::{CameraRig, LidarConfig, RolloutConfig, SensorSetup};
use crate::train::TrainConfig;

/// Environment variable that overrides [`RunConfig::seed`].
pub const SEED_ENV: &str = "CAMEL_SEED";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{SEED_ENV} is not an unsigned integer: '{0}'")]
    Seed(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// How demonstrations are gathered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    /// Record every this many expert steps.
    pub stride: usize,
    /// Most demonstrations taken from one drive through a scene.
    pub per_scene: usize,
    /// Noise on the executed steering while demonstrating.
    pub steering_noise: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            stride: 4,
            per_scene: 25,
            steering_noise: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub scenes: PathBuf,
    pub dataset: PathBuf,
    pub runs: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            scenes: "scenes".into(),
            dataset: "dataset".into(),
            runs: "runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Base seed for scene generation, sensing, and demonstrations.
    pub seed: u64,
    pub grid: GridSpec,
    pub nav: NavContext,
    pub train: TrainConfig,
    pub lidar: LidarConfig,
    pub cameras: CameraRig,
    /// Yaw error of the front camera's mounting, degrees. The projection
    /// keeps assuming the nominal mounting.
    pub front_camera_yaw_error_deg: f64,
    pub rollout: RolloutConfig,
    pub dataset: DatasetConfig,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSpec::default(),
            nav: NavContext::default(),
            train: TrainConfig::default(),
            lidar: LidarConfig::default(),
            cameras: CameraRig::default(),
            front_camera_yaw_error_deg: 0.0,
            rollout: RolloutConfig::default(),
            dataset: DatasetConfig::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Replace the seed with `CAMEL_SEED` when it is set.
    pub fn with_env_seed(self, value: Option<&str>) -> Result<Self, ConfigError> {
        match value {
            None => Ok(self),
            Some(v) => {
                let seed = v.trim().parse().map_err(|_| ConfigError::Seed(v.to_string()))?;
                Ok(Self { seed, ..self })
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.grid.validate().map_err(|e| invalid(&e))?;
        self.nav.validate().map_err(|e| invalid(&e))?;
        self.train.validate().map_err(|e| invalid(&e))?;
        for cam in &self.cameras.cameras {
            cam.validate().map_err(|e| invalid(&e))?;
        }
        if !(self.lidar.density > 0.0 && self.lidar.density.is_finite()) {
            return Err(ConfigError::Invalid("lidar.density must be positive".into()));
        }
        if !self.front_camera_yaw_error_deg.is_finite() {
            return Err(ConfigError::Invalid("front_camera_yaw_error_deg must be finite".into()));
        }
        if !(self.rollout.dt > 0.0 && self.rollout.goal_tolerance >= 0.0) {
            return Err(ConfigError::Invalid("rollout.dt must be positive".into()));
        }
        if self.dataset.stride == 0 || self.dataset.per_scene == 0 {
            return Err(ConfigError::Invalid("dataset.stride and dataset.per_scene must be at least 1".into()));
        }
        Ok(())
    }

    /// Sensors as mounted, with the configured yaw error on the front camera.
    pub fn sensors(&self) -> SensorSetup {
        let nominal = SensorSetup {
            grid: self.grid,
            lidar: self.lidar,
            rig: self.cameras.clone(),
            calibration: self.cameras.clone(),
        };
        if self.front_camera_yaw_error_deg == 0.0 {
            nominal
        } else {
            nominal.with_front_yaw_error(self.front_camera_yaw_error_deg.to_radians())
        }
    }
}
