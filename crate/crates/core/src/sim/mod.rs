//! Synthetic off-road world: seeded scenes, simulated LiDAR and cameras, a
//! handcrafted ground-truth cost rule, a scripted expert driver, and
//! closed-loop rollouts with unicycle kinematics.

mod cost;
mod rollout;
mod scene;
mod sensor;
mod vehicle;

pub use cost::{clearance_cost, ground_truth_cost, handcrafted_cost, handcrafted_rule, STEEP_SLOPE, TALL_HEIGHT};
pub use rollout::{
    bearing_to, collect_demonstrations, rollout, rollout_with, step_seed, trajectory_csv, CostSource,
    Demonstration, Driver, Expert, PolicyKind, RolloutConfig, RolloutResult, SensingDriver, SensorSetup,
    StepInput, TrajectoryPoint,
};
pub use scene::{Disc, Extent, Hill, IntensityModel, Pose, Ramp, Scene, MIN_OBSTACLE_HEIGHT};
pub use sensor::{
    render_mask, sample_pointcloud, vehicle_to_world, world_to_vehicle, CameraRig, LidarConfig, SampledCloud,
    SceneRaster, World, RASTER_RES, SENSOR_HEIGHT,
};
pub use vehicle::{collides, step_vehicle, wrap_angle, VehicleLimits};

use thiserror::Error;

use crate::gridmap::GridError;
use crate::model::ModelError;
use crate::nav::NavError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("scene: {0}")]
    Scene(String),
    #[error("missing input: {0}")]
    Missing(String),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
