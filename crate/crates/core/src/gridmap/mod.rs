//! Fusion of LiDAR points and camera semantics into the four-channel grid
//! fed to the network.
//!
//! The grid covers a rectangle in front of the vehicle. Row `r` spans
//! forward distance `[r*res, (r+1)*res)`; column `c` spans lateral offset
//! `[(c - w/2)*res, (c - w/2 + 1)*res)` with `+y` to the left, so the
//! vehicle sits on the near edge between columns `w/2 - 1` and `w/2`.
//!
//! Points are binned into voxels of half the cell size. Every per-cell
//! quantity is a two-level mean: first over the points of a voxel, then
//! over the voxels of the cell.

mod camera;
mod io;
mod kdtree;
mod layers;
mod normals;
mod voxel;

pub use camera::{project_semantics, CameraModel, SemanticMask};
pub use io::{decode_grid, encode_grid, load_grid, load_ply, read_ply, save_grid, save_ply, write_ply};
pub use kdtree::KdTree3;
pub use layers::{
    assemble, fill_missing, height_grid, intensity_grid, semantic_grid, slope_grid, GridLayer,
    LayeredGrid, HEIGHT_CLAMP, MAX_INTENSITY,
};
pub use normals::{estimate_normals, SurfaceNormal, MAX_NEIGHBOURS};
pub use voxel::{voxelize, Voxel, VoxelGrid, VoxelKey};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Semantic classes in ascending order of risk.
pub const CLASS_SKY: u8 = 0;
pub const CLASS_TRAVERSABLE: u8 = 1;
pub const CLASS_NON_TRAVERSABLE: u8 = 2;
pub const CLASS_OBSTACLE: u8 = 3;
pub const NUM_CLASSES: u8 = 4;

pub const CHANNELS: usize = 4;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("layer has no known cells to interpolate from")]
    AllMissing,
    #[error("layer shape mismatch: {0}")]
    Shape(String),
    #[error("invalid camera: {0}")]
    Camera(String),
    #[error("invalid semantic mask: {0}")]
    Mask(String),
    #[error("PLY parse error on line {line}: {detail}")]
    Ply { line: usize, detail: String },
    #[error("grid file: {0}")]
    Format(String),
    #[error("grid file truncated")]
    Truncated,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One LiDAR return in the vehicle frame (x forward, y left, z up).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub intensity: f64,
    pub class: Option<u8>,
}

impl LidarPoint {
    pub fn new(x: f64, y: f64, z: f64, intensity: f64) -> Self {
        Self {
            x,
            y,
            z,
            intensity,
            class: None,
        }
    }

    pub fn with_class(mut self, class: u8) -> Self {
        self.class = Some(class);
        self
    }
}

/// Grid geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Cells along the forward axis.
    pub length_cells: usize,
    /// Cells across.
    pub width_cells: usize,
    /// Cell edge in meters.
    pub resolution: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            length_cells: 40,
            width_cells: 28,
            resolution: 0.3,
        }
    }
}

impl GridSpec {
    pub fn cells(&self) -> usize {
        self.length_cells * self.width_cells
    }

    pub fn voxel_size(&self) -> f64 {
        self.resolution / 2.0
    }

    pub fn half_width(&self) -> f64 {
        self.width_cells as f64 * self.resolution / 2.0
    }

    pub fn forward_extent(&self) -> f64 {
        self.length_cells as f64 * self.resolution
    }

    /// The near-edge center cell, `(0, w/2)`.
    pub fn vehicle_cell(&self) -> (usize, usize) {
        (0, self.width_cells / 2)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.width_cells + col
    }

    /// Cell containing a vehicle-frame point, if inside the region of
    /// interest.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let r = (x / self.resolution).floor();
        let c = ((y + self.half_width()) / self.resolution).floor();
        (r >= 0.0 && c >= 0.0 && (r as usize) < self.length_cells && (c as usize) < self.width_cells)
            .then_some((r as usize, c as usize))
    }

    /// Vehicle-frame `(x, y)` of a cell center.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        // Integer numerator keeps mirrored columns exactly negated.
        (
            (row as f64 + 0.5) * self.resolution,
            ((2 * col + 1) as f64 - self.width_cells as f64) * self.resolution / 2.0,
        )
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.length_cells == 0 || self.width_cells == 0 || !(self.resolution > 0.0) {
            return Err(GridError::Shape(format!("degenerate grid spec {self:?}")));
        }
        Ok(())
    }
}

/// Full fusion: voxelize, estimate normals, build the four layers, fill
/// holes, and scale into a [`LayeredGrid`].
pub fn build_layered_grid(points: &[LidarPoint], spec: &GridSpec) -> Result<LayeredGrid, GridError> {
    let vox = voxelize(points, spec);
    let normals = estimate_normals(&vox);
    let occupancy = vox.occupancy();
    let sem = fill_missing(&semantic_grid(&vox))?;
    let height = fill_missing(&height_grid(&vox))?;
    let slope = fill_missing(&slope_grid(&vox, &normals))?;
    let intensity = fill_missing(&intensity_grid(&vox))?;
    assemble(spec, &sem, &height, &slope, &intensity, occupancy)
}
