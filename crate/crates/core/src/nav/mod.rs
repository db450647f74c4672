//! Cost-map to drive command.
//!
//! The map is tiled into 4x4 kernels. Each kernel gets a traversability
//! score (mean plus minimum cost) and a weight that grows with its kernel
//! grid distance from the kernels facing the global goal. The admissible
//! kernel with the least weighted score holds the local goal, its cheapest
//! cell. Dijkstra with a three-cell vehicle footprint connects the vehicle
//! to that cell, and the command steers toward a lookahead point on the path.
//!
//! Geometry is in cell units: cell `(r, c)` has its center `r + 0.5` cells
//! ahead of the vehicle and `c + 0.5 - w/2` cells to its left.
//!
//! [`soft_steering`] is a differentiable stand-in for the whole pipeline,
//! used to train the network.

mod command;
mod export;
mod kernels;
mod planner;
mod soft;

pub use command::{navigate, path_to_command, shortcut_lookahead, NavOutcome};
pub use export::{costmap_csv, costmap_pgm, path_csv, save_costmap_csv, save_costmap_pgm, save_path_csv};
pub use kernels::{
    kernel_scores, kernel_weights, local_goal_cell, select_goal_kernel, traversability, KernelLayout,
    KernelScore, KERNELS_PER_SIDE,
};
pub use planner::{plan_path, start_cell, step_cost, PlannedPath};
pub use soft::{soft_steering, soft_steering_value};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum NavError {
    #[error("cost map shape: {0}")]
    Shape(String),
    #[error("cost {value} at cell {index} is not in [0, 1]")]
    InvalidCost { index: usize, value: f64 },
    #[error("every kernel exceeds the obstacle threshold; no admissible goal")]
    NoAdmissibleGoal,
    #[error("goal {goal:?} unreachable from {start:?}")]
    Unreachable { start: (usize, usize), goal: (usize, usize) },
    #[error("invalid request: {0}")]
    Argument(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NavError>;

/// Row-major `rows x cols` grid of costs in `[0, 1]`. Row 0 is nearest the
/// vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMap {
    rows: usize,
    cols: usize,
    cells: Vec<f64>,
}

impl CostMap {
    pub fn new(rows: usize, cols: usize, cells: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 || cells.len() != rows * cols {
            return Err(NavError::Shape(format!("{} values for {rows}x{cols}", cells.len())));
        }
        if let Some((index, &value)) = cells
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && (0.0..=1.0).contains(*v)))
        {
            return Err(NavError::InvalidCost { index, value });
        }
        Ok(Self { rows, cols, cells })
    }

    pub fn uniform(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    /// From a `[rows, cols]` or `[rows, cols, 1]` tensor.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.shape() {
            [r, c] | [r, c, 1] => Self::new(r, c, t.data().to_vec()),
            ref s => Err(NavError::Shape(format!("expected [rows, cols], got {s:?}"))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([self.rows, self.cols], self.cells.clone()).expect("consistent shape")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[f64] {
        &self.cells
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.cols + col]
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        let cells = (0..self.rows * self.cols)
            .map(|i| self.cells[mirror_index(self.cols, i)])
            .collect();
        Self { cells, ..*self }
    }
}

/// Flat index of the mirror cell.
pub(crate) fn mirror_index(cols: usize, i: usize) -> usize {
    let (r, c) = (i / cols, i % cols);
    r * cols + cols - 1 - c
}

/// Forward and left offsets of a cell center, in cells.
pub fn cell_offset(cols: usize, row: usize, col: usize) -> (f64, f64) {
    (row as f64 + 0.5, ((2 * col + 1) as f64 - cols as f64) / 2.0)
}

/// Steering in `[-1, 1]` for a heading offset `atan2(lat, fwd)`.
pub fn steering_from(lat: f64, fwd: f64) -> f64 {
    std::f64::consts::FRAC_2_PI * lat.atan2(fwd)
}

/// Navigation parameters plus the current bearing to the global goal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NavContext {
    /// Vehicle-relative bearing to the global goal, radians, left positive.
    pub bearing_to_goal: f64,
    /// Weight of the kernels facing the goal.
    pub w_k: f64,
    /// Kernels with a mean cost above this are never chosen.
    pub obstacle_threshold: f64,
    /// Surrogate temperature.
    pub tau: f64,
    pub throttle_max: f64,
    pub steering_limit: f64,
    /// Minimum lookahead along the path, in cells.
    pub lookahead: usize,
    /// A straight shortcut to a farther path cell is taken while it costs at
    /// most this fraction more than the path up to that cell.
    pub shortcut_tolerance: f64,
    /// Surrogate penalty added to the risk of an over-threshold kernel.
    pub obstacle_penalty: f64,
}

impl Default for NavContext {
    fn default() -> Self {
        Self {
            bearing_to_goal: 0.0,
            w_k: 1.0,
            obstacle_threshold: 0.625,
            tau: 0.1,
            throttle_max: 0.7,
            steering_limit: 0.4,
            lookahead: 5,
            shortcut_tolerance: 0.1,
            obstacle_penalty: 20.0,
        }
    }
}

impl NavContext {
    pub fn with_bearing(self, bearing_to_goal: f64) -> Self {
        Self {
            bearing_to_goal,
            ..self
        }
    }

    pub fn with_tau(self, tau: f64) -> Self {
        Self { tau, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NavError::Argument(m.into()));
        if !self.bearing_to_goal.is_finite() {
            return bad("bearing must be finite");
        }
        if !(self.w_k > 0.0) {
            return bad("w_k must be positive");
        }
        if !(self.obstacle_threshold > 0.0 && self.obstacle_threshold < 1.0) {
            return bad("obstacle threshold must lie in (0, 1)");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(0.0..=1.0).contains(&self.throttle_max) || !(0.0..=1.0).contains(&self.steering_limit) {
            return bad("command limits must lie in [0, 1]");
        }
        if self.lookahead == 0 {
            return bad("lookahead must be at least one cell");
        }
        if !(self.shortcut_tolerance >= 0.0) || !(self.obstacle_penalty >= 0.0) {
            return bad("shortcut tolerance and obstacle penalty must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveCommand {
    /// In `[0, throttle_max]`.
    pub throttle: f64,
    /// Clamped to the steering limit.
    pub steering: f64,
    /// Before clamping, in `[-1, 1]`.
    pub steering_raw: f64,
}

impl DriveCommand {
    pub const STOP: DriveCommand = DriveCommand {
        throttle: 0.0,
        steering: 0.0,
        steering_raw: 0.0,
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_map_rejects_out_of_range_values() {
        assert!(CostMap::new(1, 2, vec![0.0, 1.0]).is_ok());
        assert!(matches!(CostMap::new(1, 2, vec![0.0, 1.5]), Err(NavError::InvalidCost { index: 1, .. })));
        assert!(CostMap::new(1, 1, vec![f64::NAN]).is_err());
        assert!(CostMap::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn mirror_offsets_are_exact_negations() {
        for c in 0..28 {
            let (_, a) = cell_offset(28, 3, c);
            let (_, b) = cell_offset(28, 3, 27 - c);
            assert_eq!(a, -b);
        }
        assert_eq!(cell_offset(28, 0, 14), (0.5, 0.5));
    }

    #[test]
    fn steering_limits() {
        assert_eq!(steering_from(0.0, 3.0), 0.0);
        assert!((steering_from(1.0, 1e-12) - 1.0).abs() < 1e-9);
        assert!((steering_from(-1.0, 1.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn default_context_is_valid() {
        NavContext::default().validate().unwrap();
        assert!(NavContext { w_k: 0.0, ..Default::default() }.validate().is_err());
        assert!(NavContext::default().with_tau(0.0).validate().is_err());
    }
}
