use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{
    clearance_cost, collides, handcrafted_cost, render_mask, sample_pointcloud, step_vehicle, wrap_angle,
    CameraRig, LidarConfig, Pose, SimError, VehicleLimits, World,
};
use crate::gridmap::{build_layered_grid, project_semantics, GridSpec, LayeredGrid};
use crate::model::CamelModel;
use crate::nav::{navigate, CostMap, DriveCommand, NavContext, NavError};

/// LiDAR and cameras. `rig` is where the cameras really point;
/// `calibration` is what the projection assumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
#[derive(Default)]
pub struct SensorSetup {
    pub grid: GridSpec,
    pub lidar: LidarConfig,
    pub rig: CameraRig,
    pub calibration: CameraRig,
}


impl SensorSetup {
    /// The front camera is physically turned by `yaw_error` radians while
    /// the calibration still says it faces ahead.
    pub fn with_front_yaw_error(self, yaw_error: f64) -> Self {
        Self {
            rig: self.rig.with_yaw_error(CameraRig::FRONT, yaw_error),
            ..self
        }
    }

    /// Scan, render masks, label points through the calibration, and fuse.
    pub fn sense(&self, world: &World, pose: &Pose, seed: u64) -> Result<LayeredGrid, SimError> {
        Ok(self.sense_counted(world, pose, seed)?.0)
    }

    /// [`Self::sense`], also returning the number of LiDAR returns.
    pub fn sense_counted(&self, world: &World, pose: &Pose, seed: u64) -> Result<(LayeredGrid, usize), SimError> {
        let cloud = sample_pointcloud(world, pose, &self.grid, &self.lidar, seed);
        let views: Vec<_> = self
            .rig
            .cameras
            .iter()
            .zip(&self.calibration.cameras)
            .map(|(truth, assumed)| (assumed.clone(), render_mask(&world.raster, &world.scene, pose, truth)))
            .collect();
        let labelled = project_semantics(&cloud.points, &views)?;
        Ok((build_layered_grid(&labelled, &self.grid)?, labelled.len()))
    }
}

/// Vehicle-relative bearing to a world point, radians, left positive.
pub fn bearing_to(pose: &Pose, goal: [f64; 2]) -> f64 {
    wrap_angle((goal[1] - pose.y).atan2(goal[0] - pose.x) - pose.theta)
}

/// What a driver sees at one control step.
pub struct StepInput<'a> {
    pub world: &'a World,
    pub pose: Pose,
    pub goal: [f64; 2],
    pub step: usize,
    /// Seed for this step's sensor noise.
    pub seed: u64,
}

pub trait Driver {
    fn name(&self) -> &str;
    fn command(&mut self, input: &StepInput<'_>) -> Result<DriveCommand, SimError>;
}

/// Hard pipeline on a cost map; stops when no kernel is admissible.
fn drive_on(map: &CostMap, nav: &NavContext, bearing: f64) -> Result<DriveCommand, SimError> {
    match navigate(map, &nav.with_bearing(bearing)) {
        Ok(out) => Ok(out.command),
        Err(NavError::NoAdmissibleGoal) => Ok(DriveCommand::STOP),
        Err(e) => Err(e.into()),
    }
}

/// Scripted demonstrator: the hard pipeline on the true cost map, with
/// obstacles grown by `clearance`. Its throttle is cut back whenever the
/// coming step would touch an obstacle; the steering label is never changed.
#[derive(Debug, Clone, Copy)]
pub struct Expert {
    pub nav: NavContext,
    pub grid: GridSpec,
    pub clearance: f64,
    pub limits: VehicleLimits,
    pub dt: f64,
}

/// Throttle fractions the expert falls back to, in order.
const THROTTLE_BACKOFF: [f64; 4] = [1.0, 0.5, 0.25, 0.0];
/// Pose checks per step when looking for a collision ahead.
const SWEEP_CHECKS: usize = 8;

impl Expert {
    pub fn new(nav: NavContext, grid: GridSpec) -> Self {
        let limits = VehicleLimits::default();
        Self {
            nav,
            grid,
            clearance: limits.radius + 0.1,
            limits,
            dt: 1.0,
        }
    }

    /// The planner's command, before the safety check.
    pub fn label(&self, world: &World, pose: &Pose, goal: [f64; 2]) -> Result<DriveCommand, SimError> {
        let map = clearance_cost(&world.scene, pose, &self.grid, self.clearance);
        drive_on(&map, &self.nav, bearing_to(pose, goal))
    }

    /// Whether driving `cmd` for one step from `pose` touches an obstacle.
    /// The step moves in a straight line along the current heading.
    pub fn sweeps_into_obstacle(&self, world: &World, pose: &Pose, cmd: &DriveCommand) -> bool {
        let end = step_vehicle(pose, cmd, self.dt, &self.limits);
        (1..=SWEEP_CHECKS).any(|k| {
            let f = k as f64 / SWEEP_CHECKS as f64;
            let p = Pose {
                x: pose.x + f * (end.x - pose.x),
                y: pose.y + f * (end.y - pose.y),
                theta: end.theta,
            };
            collides(&world.scene, &p, self.limits.radius)
        })
    }
}

impl Driver for Expert {
    fn name(&self) -> &str {
        "expert"
    }

    fn command(&mut self, input: &StepInput<'_>) -> Result<DriveCommand, SimError> {
        let cmd = self.label(input.world, &input.pose, input.goal)?;
        for k in THROTTLE_BACKOFF {
            let slowed = DriveCommand {
                throttle: cmd.throttle * k,
                ..cmd
            };
            if !self.sweeps_into_obstacle(input.world, &input.pose, &slowed) {
                return Ok(slowed);
            }
        }
        Ok(DriveCommand {
            throttle: 0.0,
            ..cmd
        })
    }
}

/// Where a sensing driver gets its cost map.
pub enum CostSource<'m> {
    /// The handcrafted rule on the sensed grid.
    Handcrafted,
    /// The network's prediction from the sensed grid.
    Learned(&'m CamelModel),
}

/// Senses a grid, turns it into costs, and runs the hard pipeline.
pub struct SensingDriver<'m> {
    pub source: CostSource<'m>,
    pub sensors: SensorSetup,
    pub nav: NavContext,
}

impl SensingDriver<'_> {
    pub fn cost_map(&self, grid: &LayeredGrid) -> Result<CostMap, SimError> {
        match self.source {
            CostSource::Handcrafted => Ok(handcrafted_cost(grid)),
            CostSource::Learned(model) => Ok(CostMap::from_tensor(&model.predict(&grid.to_tensor())?)?),
        }
    }
}

impl Driver for SensingDriver<'_> {
    fn name(&self) -> &str {
        match self.source {
            CostSource::Handcrafted => "handcrafted",
            CostSource::Learned(_) => "camel",
        }
    }

    fn command(&mut self, input: &StepInput<'_>) -> Result<DriveCommand, SimError> {
        let grid = self.sensors.sense(input.world, &input.pose, input.seed)?;
        let map = self.cost_map(&grid)?;
        drive_on(&map, &self.nav, bearing_to(&input.pose, input.goal))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Camel,
    Expert,
    Handcrafted,
}

impl PolicyKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            PolicyKind::Camel => "camel",
            PolicyKind::Expert => "expert",
            PolicyKind::Handcrafted => "handcrafted",
        }
    }
}

impl FromStr for PolicyKind {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, SimError> {
        match s {
            "camel" => Ok(PolicyKind::Camel),
            "expert" => Ok(PolicyKind::Expert),
            "handcrafted" => Ok(PolicyKind::Handcrafted),
            other => Err(SimError::Scene(format!("unknown policy '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RolloutConfig {
    pub max_steps: usize,
    /// Control interval, seconds.
    pub dt: f64,
    /// Distance at which the goal counts as reached, meters.
    pub goal_tolerance: f64,
    pub limits: VehicleLimits,
    /// Standard deviation of noise added to the executed steering (not to
    /// the recorded command). Used to diversify demonstrations.
    pub steering_noise: f64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        Self {
            max_steps: 200,
            dt: 1.0,
            goal_tolerance: 1.0,
            limits: VehicleLimits::default(),
            steering_noise: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub theta: f64,
    pub throttle: f64,
    pub steering: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub policy: String,
    pub trajectory: Vec<TrajectoryPoint>,
    pub reached: bool,
    pub collided: bool,
    /// Distance driven, meters.
    pub path_length: f64,
}

impl RolloutResult {
    pub fn steps(&self) -> usize {
        self.trajectory.len().saturating_sub(1)
    }
}

/// Per-step seed derived from a base seed.
pub fn step_seed(base: u64, step: usize) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(step as u64)
}

/// Drive until the goal is within tolerance, the vehicle hits an obstacle,
/// or the step budget runs out. The last trajectory point is the final pose
/// with a zero command.
pub fn rollout(
    driver: &mut dyn Driver,
    world: &World,
    start: Pose,
    goal: [f64; 2],
    cfg: &RolloutConfig,
    seed: u64,
) -> Result<RolloutResult, SimError> {
    rollout_with(driver, world, start, goal, cfg, seed, |_, _, _| Ok(()))
}

/// [`rollout`] with a callback invoked before each step with the step index,
/// pose, and the driver's command.
pub fn rollout_with(
    driver: &mut dyn Driver,
    world: &World,
    start: Pose,
    goal: [f64; 2],
    cfg: &RolloutConfig,
    seed: u64,
    mut observe: impl FnMut(usize, &Pose, &DriveCommand) -> Result<(), SimError>,
) -> Result<RolloutResult, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, cfg.steering_noise.max(0.0)).expect("finite std");
    let mut pose = start;
    let mut trajectory = Vec::new();
    let (mut reached, mut collided, mut path_length) = (false, false, 0.0);
    for step in 0..cfg.max_steps {
        if (goal[0] - pose.x).hypot(goal[1] - pose.y) <= cfg.goal_tolerance {
            reached = true;
            break;
        }
        let input = StepInput {
            world,
            pose,
            goal,
            step,
            seed: step_seed(seed, step),
        };
        let cmd = driver.command(&input)?;
        observe(step, &pose, &cmd)?;
        trajectory.push(TrajectoryPoint {
            t: step as f64 * cfg.dt,
            x: pose.x,
            y: pose.y,
            theta: pose.theta,
            throttle: cmd.throttle,
            steering: cmd.steering,
        });
        let executed = DriveCommand {
            steering: (cmd.steering + noise.sample(&mut rng)).clamp(-1.0, 1.0),
            ..cmd
        };
        let next = step_vehicle(&pose, &executed, cfg.dt, &cfg.limits);
        path_length += (next.x - pose.x).hypot(next.y - pose.y);
        pose = next;
        if collides(&world.scene, &pose, cfg.limits.radius) {
            collided = true;
            break;
        }
    }
    if !reached && !collided {
        reached = (goal[0] - pose.x).hypot(goal[1] - pose.y) <= cfg.goal_tolerance;
    }
    trajectory.push(TrajectoryPoint {
        t: trajectory.len() as f64 * cfg.dt,
        x: pose.x,
        y: pose.y,
        theta: pose.theta,
        throttle: 0.0,
        steering: 0.0,
    });
    Ok(RolloutResult {
        policy: driver.name().to_string(),
        trajectory,
        reached,
        collided,
        path_length,
    })
}

pub fn trajectory_csv(traj: &[TrajectoryPoint]) -> String {
    let mut s = String::from("t,x,y,theta,throttle,steering\n");
    for p in traj {
        let _ = writeln!(s, "{},{},{},{},{},{}", p.t, p.x, p.y, p.theta, p.throttle, p.steering);
    }
    s
}

/// One expert-labelled observation.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub grid: LayeredGrid,
    pub bearing: f64,
    pub steering: f64,
    pub throttle: f64,
    pub pose: Pose,
    pub step: usize,
    /// LiDAR returns behind the grid.
    pub points: usize,
}

/// Drive the expert through a scene with noisy execution and record the
/// sensed grid and the expert's command at every `stride`-th step, up to
/// `limit` demonstrations. Steps where the expert stops are skipped.
pub fn collect_demonstrations(
    world: &World,
    expert: &Expert,
    sensors: &SensorSetup,
    cfg: &RolloutConfig,
    stride: usize,
    limit: usize,
    seed: u64,
) -> Result<Vec<Demonstration>, SimError> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    let goal = world.scene.goal;
    let mut driver = *expert;
    rollout_with(&mut driver, world, world.scene.start, goal, cfg, seed, |step, pose, cmd| {
        if out.len() < limit && step % stride == 0 && cmd.throttle > 0.0 {
            let (grid, points) = sensors.sense_counted(world, pose, step_seed(seed ^ 0xD47A, step))?;
            out.push(Demonstration {
                grid,
                points,
                bearing: bearing_to(pose, goal),
                steering: cmd.steering_raw,
                throttle: cmd.throttle,
                pose: *pose,
                step,
            });
        }
        Ok(())
    })?;
    Ok(out)
}
