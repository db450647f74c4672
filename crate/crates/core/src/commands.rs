//! The batch workflows behind the command-line tool: scene generation,
//! demonstration collection, training, planning on a single grid, and
//! closed-loop evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::gridmap::{load_grid, GridError, LayeredGrid};
use crate::io_util::{write_atomic, write_atomic_str};
use crate::model::{CamelModel, ModelError};
use crate::nav::{navigate, save_costmap_csv, save_costmap_pgm, save_path_csv, CostMap, NavError, NavOutcome};
use crate::sim::{
    collect_demonstrations, handcrafted_cost, rollout, trajectory_csv, CostSource, Driver, Expert, PolicyKind,
    RolloutConfig, RolloutResult, Scene, SensingDriver, SimError, World,
};
use crate::train::{
    evaluate, load_dataset, loss_curve_csv, split_with, train_loop, write_dataset, DatasetRecord, RecordOrigin,
    TrainError,
};
use crate::checkpoint::CheckpointError;

#[derive(Debug, Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Nav(#[from] NavError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("missing input: {0}")]
    Missing(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            CommandError::Config(_) => "config",
            CommandError::Sim(_) => "sim",
            CommandError::Train(_) => "train",
            CommandError::Nav(_) => "nav",
            CommandError::Grid(_) => "grid",
            CommandError::Model(_) | CommandError::Checkpoint(_) => "model",
            CommandError::Missing(_) => "missing",
            CommandError::Argument(_) => "argument",
            CommandError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, CommandError>;

/// File name of scene `index`.
pub fn scene_file_name(index: usize) -> String {
    format!("scene_{index:04}.json")
}

/// Write `count` scenes with seeds `seed, seed + 1, ...`.
pub fn gen_scenes(count: usize, difficulty: f64, seed: u64, out: &Path) -> Result<Vec<PathBuf>> {
    if !(0.0..=1.0).contains(&difficulty) {
        return Err(CommandError::Argument(format!("difficulty {difficulty} outside [0, 1]")));
    }
    std::fs::create_dir_all(out)?;
    (0..count)
        .map(|i| {
            let scene = Scene::generate(seed.wrapping_add(i as u64), difficulty)?;
            let path = out.join(scene_file_name(i));
            scene.save(&path)?;
            Ok(path)
        })
        .collect()
}

/// Scene files in `dir`, sorted by name.
pub fn scene_files(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(CommandError::Missing(format!("scene directory {}", dir.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    Ok(files)
}

pub fn load_scenes(dir: &Path) -> Result<Vec<Scene>> {
    let files = scene_files(dir)?;
    if files.is_empty() {
        return Err(CommandError::Missing(format!("no scene files in {}", dir.display())));
    }
    files.iter().map(|f| Ok(Scene::load(f)?)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub records: usize,
    pub drives: usize,
    pub mean_points: f64,
    pub index: PathBuf,
}

/// Collect `instances` demonstrations from scenes, in memory. Scenes are
/// driven in order, and driven again with fresh noise until enough
/// demonstrations exist.
pub fn collect_dataset(
    cfg: &RunConfig,
    scenes: &[Scene],
    instances: usize,
) -> Result<(Vec<DatasetRecord>, Vec<RecordOrigin>, usize)> {
    let expert = Expert::new(cfg.nav, cfg.grid);
    let sensors = cfg.sensors();
    let rcfg = RolloutConfig {
        steering_noise: cfg.dataset.steering_noise,
        ..cfg.rollout
    };
    let (mut records, mut origins, mut drives) = (Vec::new(), Vec::new(), 0);
    let mut round = 0u64;
    while records.len() < instances {
        let before = records.len();
        for scene in scenes {
            if records.len() >= instances {
                break;
            }
            let world = World::new(scene.clone());
            let seed = cfg.seed ^ scene.seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ round.wrapping_mul(0xA24B_AED4);
            let want = cfg.dataset.per_scene.min(instances - records.len());
            let demos = collect_demonstrations(&world, &expert, &sensors, &rcfg, cfg.dataset.stride, want, seed)?;
            drives += 1;
            for d in demos {
                origins.push(RecordOrigin {
                    scene: scene.seed,
                    step: d.step,
                    points: d.points,
                });
                records.push(DatasetRecord {
                    id: records.len() as u64,
                    grid: d.grid,
                    bearing: d.bearing,
                    steering: d.steering,
                    throttle: d.throttle,
                });
            }
        }
        if records.len() == before {
            return Err(CommandError::Argument("the expert produced no demonstrations in these scenes".into()));
        }
        round += 1;
    }
    Ok((records, origins, drives))
}

/// Drive the expert through the scenes in `scenes_dir` and write a dataset.
pub fn gen_dataset(cfg: &RunConfig, scenes_dir: &Path, instances: usize, sparse: bool, out: &Path) -> Result<DatasetSummary> {
    let scenes = load_scenes(scenes_dir)?;
    let mut cfg = cfg.clone();
    cfg.lidar.sparse |= sparse;
    let (records, origins, drives) = collect_dataset(&cfg, &scenes, instances)?;
    let index = write_dataset(out, &records, &origins)?;
    let mean_points = if origins.is_empty() {
        0.0
    } else {
        origins.iter().map(|o| o.points as f64).sum::<f64>() / origins.len() as f64
    };
    Ok(DatasetSummary {
        records: records.len(),
        drives,
        mean_points,
        index,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub train_records: usize,
    pub val_records: usize,
    pub test_records: usize,
    pub best_epoch: usize,
    pub best_val_mse: f64,
    pub test_mse: f64,
    pub final_train_mse: f64,
}

pub const BEST_CHECKPOINT: &str = "best.cmlw";
pub const LAST_CHECKPOINT: &str = "last.cmlw";
pub const LOSS_CSV: &str = "loss.csv";
pub const TRAIN_SUMMARY: &str = "summary.json";

/// Split, train, and write the best and last checkpoints, the loss curve,
/// and a summary. `resume` starts from existing weights.
pub fn train_records(cfg: &RunConfig, records: Vec<DatasetRecord>, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    let start = match resume {
        Some(p) => CamelModel::load(p)?,
        None => CamelModel::init(cfg.train.init_seed),
    };
    let parts = split_with(records, cfg.train.split, cfg.train.seed)?;
    std::fs::create_dir_all(out)?;
    let best_path = out.join(BEST_CHECKPOINT);
    let outcome = train_loop(&cfg.train, &cfg.nav, start, &parts.train, &parts.val, |_, improved, model| {
        if improved {
            model.save(&best_path)?;
        }
        Ok(())
    })?;
    outcome.last.save(&out.join(LAST_CHECKPOINT))?;
    write_atomic_str(&out.join(LOSS_CSV), &loss_curve_csv(&outcome.curve))?;
    let nav = cfg.nav.with_tau(cfg.train.tau);
    let test_mse = if parts.test.is_empty() {
        f64::NAN
    } else {
        evaluate(&outcome.best, &parts.test, &nav)?
    };
    let summary = TrainSummary {
        train_records: parts.train.len(),
        val_records: parts.val.len(),
        test_records: parts.test.len(),
        best_epoch: outcome.best_epoch,
        best_val_mse: outcome.best_val,
        test_mse,
        final_train_mse: outcome.curve.last().map_or(f64::NAN, |e| e.train_mse),
    };
    write_atomic_str(
        &out.join(TRAIN_SUMMARY),
        &serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )?;
    Ok(summary)
}

pub fn train(cfg: &RunConfig, index: &Path, out: &Path, resume: Option<&Path>) -> Result<TrainSummary> {
    if !index.is_file() {
        return Err(CommandError::Missing(format!("dataset index {}", index.display())));
    }
    train_records(cfg, load_dataset(index)?, out, resume)
}

/// Hard-pipeline result on one map; `None` when no kernel is admissible.
#[derive(Debug, Clone)]
pub struct PlanReport {
    pub camel: Option<NavOutcome>,
    pub handcrafted: Option<NavOutcome>,
    pub camel_map: CostMap,
    pub handcrafted_map: CostMap,
}

fn navigate_or_none(map: &CostMap, cfg: &RunConfig, bearing: f64) -> Result<Option<NavOutcome>> {
    match navigate(map, &cfg.nav.with_bearing(bearing)) {
        Ok(o) => Ok(Some(o)),
        Err(NavError::NoAdmissibleGoal) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Predicted and handcrafted cost maps for one grid, with the paths the
/// navigation stack plans on each.
pub fn plan_grid(cfg: &RunConfig, model: &CamelModel, grid: &LayeredGrid, bearing: f64) -> Result<PlanReport> {
    let camel_map = CostMap::from_tensor(&model.predict(&grid.to_tensor())?)?;
    let handcrafted_map = handcrafted_cost(grid);
    Ok(PlanReport {
        camel: navigate_or_none(&camel_map, cfg, bearing)?,
        handcrafted: navigate_or_none(&handcrafted_map, cfg, bearing)?,
        camel_map,
        handcrafted_map,
    })
}

/// Write `camel_cost.{pgm,csv}`, `handcrafted_cost.{pgm,csv}`, the planned
/// paths, and a `plan.json` summary.
pub fn plan(cfg: &RunConfig, checkpoint: &Path, grid_path: &Path, bearing: f64, out: &Path) -> Result<PlanReport> {
    let model = CamelModel::load(checkpoint)?;
    let grid = load_grid(grid_path)?;
    let report = plan_grid(cfg, &model, &grid, bearing)?;
    std::fs::create_dir_all(out)?;
    let mut summary = serde_json::Map::new();
    for (name, map, outcome) in [
        ("camel", &report.camel_map, &report.camel),
        ("handcrafted", &report.handcrafted_map, &report.handcrafted),
    ] {
        save_costmap_pgm(&out.join(format!("{name}_cost.pgm")), map)?;
        save_costmap_csv(&out.join(format!("{name}_cost.csv")), map)?;
        let entry = match outcome {
            Some(o) => {
                save_path_csv(&out.join(format!("{name}_path.csv")), &o.path)?;
                serde_json::json!({
                    "goal_kernel": o.goal_kernel,
                    "goal_cell": [o.goal_cell.0, o.goal_cell.1],
                    "path_cells": o.path.len(),
                    "path_cost": o.path.cost(),
                    "throttle": o.command.throttle,
                    "steering": o.command.steering,
                    "steering_raw": o.command.steering_raw,
                })
            }
            None => serde_json::json!({ "no_admissible_goal": true }),
        };
        summary.insert(name.to_string(), entry);
    }
    write_atomic_str(
        &out.join("plan.json"),
        &serde_json::to_string_pretty(&summary).expect("plan summary serializes"),
    )?;
    Ok(report)
}

/// One rollout's outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutRow {
    pub scene: u64,
    pub policy: PolicyKind,
    pub reached: bool,
    pub collided: bool,
    pub steps: usize,
    pub path_length: f64,
}

impl RolloutRow {
    pub fn success(&self) -> bool {
        self.reached && !self.collided
    }
}

/// Per-policy aggregate over a set of scenes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub policy: PolicyKind,
    pub scenes: usize,
    pub success_rate: f64,
    pub collision_free_rate: f64,
    pub mean_path_length: f64,
    /// Mean over scenes both this policy and the expert completed of the
    /// ratio of their path lengths; `None` without expert rollouts.
    pub path_ratio_vs_expert: Option<f64>,
}

/// Drive one policy through one scene from its start toward its goal.
pub fn run_policy(
    cfg: &RunConfig,
    policy: PolicyKind,
    model: Option<&CamelModel>,
    world: &World,
) -> Result<RolloutResult> {
    let mut driver: Box<dyn Driver + '_> = match policy {
        PolicyKind::Expert => Box::new(Expert::new(cfg.nav, cfg.grid)),
        PolicyKind::Handcrafted => Box::new(SensingDriver {
            source: CostSource::Handcrafted,
            sensors: cfg.sensors(),
            nav: cfg.nav,
        }),
        PolicyKind::Camel => Box::new(SensingDriver {
            source: CostSource::Learned(
                model.ok_or_else(|| CommandError::Missing("a checkpoint is required for the camel policy".into()))?,
            ),
            sensors: cfg.sensors(),
            nav: cfg.nav,
        }),
    };
    let seed = cfg.seed ^ world.scene.seed.wrapping_mul(0x9E37_79B9);
    let rcfg = RolloutConfig {
        steering_noise: 0.0,
        ..cfg.rollout
    };
    Ok(rollout(driver.as_mut(), world, world.scene.start, world.scene.goal, &rcfg, seed)?)
}

/// Every policy on every scene; trajectories go to `traj_dir` when given.
pub fn run_rollouts(
    cfg: &RunConfig,
    scenes: &[Scene],
    policies: &[PolicyKind],
    model: Option<&CamelModel>,
    traj_dir: Option<&Path>,
) -> Result<Vec<RolloutRow>> {
    let mut rows = Vec::with_capacity(scenes.len() * policies.len());
    for scene in scenes {
        let world = World::new(scene.clone());
        for &policy in policies {
            let res = run_policy(cfg, policy, model, &world)?;
            if let Some(dir) = traj_dir {
                let name = format!("{}_{:04}.csv", policy.as_str(), scene.seed);
                write_atomic_str(&dir.join(name), &trajectory_csv(&res.trajectory))?;
            }
            rows.push(RolloutRow {
                scene: scene.seed,
                policy,
                reached: res.reached,
                collided: res.collided,
                steps: res.steps(),
                path_length: res.path_length,
            });
        }
    }
    Ok(rows)
}

pub fn summarize(rows: &[RolloutRow]) -> Vec<PolicySummary> {
    let mut policies: Vec<PolicyKind> = Vec::new();
    for r in rows {
        if !policies.contains(&r.policy) {
            policies.push(r.policy);
        }
    }
    let expert_len = |scene: u64| {
        rows.iter()
            .find(|r| r.scene == scene && r.policy == PolicyKind::Expert && r.success())
            .map(|r| r.path_length)
    };
    let has_expert = policies.contains(&PolicyKind::Expert);
    policies
        .into_iter()
        .map(|policy| {
            let mine: Vec<&RolloutRow> = rows.iter().filter(|r| r.policy == policy).collect();
            let n = mine.len() as f64;
            let ratios: Vec<f64> = mine
                .iter()
                .filter(|r| r.success())
                .filter_map(|r| expert_len(r.scene).filter(|&e| e > 0.0).map(|e| r.path_length / e))
                .collect();
            PolicySummary {
                policy,
                scenes: mine.len(),
                success_rate: mine.iter().filter(|r| r.success()).count() as f64 / n,
                collision_free_rate: mine.iter().filter(|r| !r.collided).count() as f64 / n,
                mean_path_length: mine.iter().map(|r| r.path_length).sum::<f64>() / n,
                path_ratio_vs_expert: (has_expert && !ratios.is_empty())
                    .then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
            }
        })
        .collect()
}

pub fn rollout_report_csv(rows: &[RolloutRow]) -> String {
    let mut s = String::from("scene,policy,reached,collided,success,steps,path_length\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.4}",
            r.scene,
            r.policy.as_str(),
            r.reached,
            r.collided,
            r.success(),
            r.steps,
            r.path_length
        );
    }
    s
}

pub fn summary_csv(summary: &[PolicySummary]) -> String {
    let mut s = String::from("policy,scenes,success_rate,collision_free_rate,mean_path_length,path_ratio_vs_expert\n");
    for p in summary {
        let ratio = p.path_ratio_vs_expert.map_or(String::new(), |r| format!("{r:.4}"));
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{:.4},{}",
            p.policy.as_str(),
            p.scenes,
            p.success_rate,
            p.collision_free_rate,
            p.mean_path_length,
            ratio
        );
    }
    s
}

/// Sibling path for the per-policy summary of `report`.
pub fn summary_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    report.with_file_name(format!("{stem}_summary.csv"))
}

/// Roll out each policy on the scenes in `scenes_dir` and write the report,
/// its summary, and optionally the trajectories.
pub fn rollout_scenes(
    cfg: &RunConfig,
    checkpoint: Option<&Path>,
    scenes_dir: &Path,
    policies: &[PolicyKind],
    report: &Path,
    traj_dir: Option<&Path>,
) -> Result<Vec<PolicySummary>> {
    if policies.is_empty() {
        return Err(CommandError::Argument("no policy given".into()));
    }
    let model = checkpoint.map(CamelModel::load).transpose()?;
    if policies.contains(&PolicyKind::Camel) && model.is_none() {
        return Err(CommandError::Missing("a checkpoint is required for the camel policy".into()));
    }
    let scenes = load_scenes(scenes_dir)?;
    let rows = run_rollouts(cfg, &scenes, policies, model.as_ref(), traj_dir)?;
    let summary = summarize(&rows);
    write_atomic(report, rollout_report_csv(&rows).as_bytes())?;
    write_atomic_str(&summary_path(report), &summary_csv(&summary))?;
    Ok(summary)
}
