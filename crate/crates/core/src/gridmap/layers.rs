use std::f64::consts::FRAC_PI_2;

use super::{GridError, GridSpec, SurfaceNormal, VoxelGrid, CHANNELS, CLASS_SKY, NUM_CLASSES};
use crate::tensor::Tensor;

/// Height channel clamp, meters.
pub const HEIGHT_CLAMP: f64 = 2.0;
pub const MAX_INTENSITY: f64 = 255.0;

/// A single `rows x cols` layer where some cells may be unknown.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayer {
    pub rows: usize,
    pub cols: usize,
    pub cells: Vec<Option<f64>>,
}

impl GridLayer {
    pub fn missing(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            cells: vec![None; rows * cols],
        }
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        self.cells[row * self.cols + col]
    }

    pub fn missing_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_none()).count()
    }

    pub fn from_complete(rows: usize, cols: usize, values: &[f64]) -> Self {
        Self {
            rows,
            cols,
            cells: values.iter().map(|&v| Some(v)).collect(),
        }
    }
}

/// Per-cell mean of a per-voxel quantity.
fn cell_mean(vox: &VoxelGrid, per_voxel: impl Fn(usize) -> f64) -> GridLayer {
    let spec = &vox.spec;
    let mut layer = GridLayer::missing(spec.length_cells, spec.width_cells);
    for (cell, members) in vox.voxels_by_cell().into_iter().enumerate() {
        if !members.is_empty() {
            let total: f64 = members.iter().map(|&i| per_voxel(i)).sum();
            layer.cells[cell] = Some(total / members.len() as f64);
        }
    }
    layer
}

/// Mean over the cell's voxels of each voxel's mean point height.
pub fn height_grid(vox: &VoxelGrid) -> GridLayer {
    cell_mean(vox, |i| vox.voxels[i].height())
}

/// Mean over the cell's voxels of each voxel's mean intensity.
pub fn intensity_grid(vox: &VoxelGrid) -> GridLayer {
    cell_mean(vox, |i| vox.voxels[i].intensity())
}

/// Mean over the cell's voxels of the angle between normal and +z.
pub fn slope_grid(vox: &VoxelGrid, normals: &[SurfaceNormal]) -> GridLayer {
    assert_eq!(normals.len(), vox.voxels.len(), "one normal per voxel");
    cell_mean(vox, |i| normals[i].slope.clamp(0.0, FRAC_PI_2))
}

/// Highest class index among the cell's labelled points. A cell whose only
/// label is sky is left unknown.
pub fn semantic_grid(vox: &VoxelGrid) -> GridLayer {
    let spec = &vox.spec;
    let mut best: Vec<Option<u8>> = vec![None; spec.cells()];
    for v in &vox.voxels {
        if let Some(c) = v.max_class {
            let (r, col) = vox.cell_of(&v.key);
            let slot = &mut best[spec.index(r, col)];
            *slot = Some(slot.map_or(c, |b| b.max(c)));
        }
    }
    GridLayer {
        rows: spec.length_cells,
        cols: spec.width_cells,
        cells: best
            .into_iter()
            .map(|c| c.filter(|&c| c != CLASS_SKY).map(f64::from))
            .collect(),
    }
}

/// Fill unknown cells by repeated 8-neighbour averaging. Each pass reads
/// only the previous pass's state, so the result is order independent.
pub fn fill_missing(layer: &GridLayer) -> Result<Vec<f64>, GridError> {
    if layer.cells.iter().all(Option::is_none) {
        return Err(GridError::AllMissing);
    }
    let (rows, cols) = (layer.rows, layer.cols);
    let mut cur = layer.cells.clone();
    while cur.iter().any(Option::is_none) {
        let mut next = cur.clone();
        for r in 0..rows {
            for c in 0..cols {
                if cur[r * cols + c].is_some() {
                    continue;
                }
                let (mut sum, mut n) = (0.0, 0usize);
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                            continue;
                        }
                        if let Some(v) = cur[nr as usize * cols + nc as usize] {
                            sum += v;
                            n += 1;
                        }
                    }
                }
                if n > 0 {
                    next[r * cols + c] = Some(sum / n as f64);
                }
            }
        }
        cur = next;
    }
    Ok(cur.into_iter().map(|v| v.expect("filled")).collect())
}

/// The network input: four scaled channels plus the pre-fill occupancy.
///
/// Values are stored channel-major (`[channel][row][col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayeredGrid {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    pub occupancy: Vec<bool>,
}

impl LayeredGrid {
    pub fn channel(&self, ch: usize) -> &[f64] {
        let n = self.rows * self.cols;
        &self.data[ch * n..(ch + 1) * n]
    }

    pub fn get(&self, ch: usize, row: usize, col: usize) -> f64 {
        self.channel(ch)[row * self.cols + col]
    }

    /// Channels-last `[rows, cols, 4]` tensor for the network.
    pub fn to_tensor(&self) -> Tensor {
        let n = self.rows * self.cols;
        let mut out = Vec::with_capacity(n * CHANNELS);
        for cell in 0..n {
            for ch in 0..CHANNELS {
                out.push(self.data[ch * n + cell]);
            }
        }
        Tensor::new(vec![self.rows, self.cols, CHANNELS], out).expect("grid shape")
    }

    /// Class index recovered from the semantic channel; fractional where
    /// holes were filled.
    pub fn class_at(&self, row: usize, col: usize) -> f64 {
        self.get(0, row, col) * (NUM_CLASSES - 1) as f64
    }

    /// Height in meters (within the clamp).
    pub fn height_at(&self, row: usize, col: usize) -> f64 {
        self.get(1, row, col) * HEIGHT_CLAMP
    }

    /// Slope in radians.
    pub fn slope_at(&self, row: usize, col: usize) -> f64 {
        self.get(2, row, col) * FRAC_PI_2
    }

    pub fn spec_matches(&self, spec: &GridSpec) -> bool {
        self.rows == spec.length_cells && self.cols == spec.width_cells
    }

    /// Same grid with the lateral axis reversed.
    pub fn mirrored(&self) -> Self {
        let mut out = self.clone();
        for ch in 0..CHANNELS {
            for r in 0..self.rows {
                for c in 0..self.cols {
                    let n = self.rows * self.cols;
                    out.data[ch * n + r * self.cols + c] = self.data[ch * n + r * self.cols + self.cols - 1 - c];
                }
            }
        }
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.occupancy[r * self.cols + c] = self.occupancy[r * self.cols + self.cols - 1 - c];
            }
        }
        out
    }
}

/// Scale complete layers into channels: class / 3, clamped height / 2,
/// slope / (pi/2), intensity / 255.
pub fn assemble(
    spec: &GridSpec,
    semantic: &[f64],
    height: &[f64],
    slope: &[f64],
    intensity: &[f64],
    occupancy: Vec<bool>,
) -> Result<LayeredGrid, GridError> {
    let n = spec.cells();
    let lens = [semantic.len(), height.len(), slope.len(), intensity.len(), occupancy.len()];
    if lens.iter().any(|&l| l != n) {
        return Err(GridError::Shape(format!(
            "expected {n} cells per layer, got semantic/height/slope/intensity/occupancy = {lens:?}"
        )));
    }
    let mut data = Vec::with_capacity(CHANNELS * n);
    data.extend(semantic.iter().map(|c| (c / (NUM_CLASSES - 1) as f64).clamp(0.0, 1.0)));
    data.extend(height.iter().map(|h| h.clamp(-HEIGHT_CLAMP, HEIGHT_CLAMP) / HEIGHT_CLAMP));
    data.extend(slope.iter().map(|s| (s / FRAC_PI_2).clamp(0.0, 1.0)));
    data.extend(intensity.iter().map(|i| (i / MAX_INTENSITY).clamp(0.0, 1.0)));
    if data.iter().any(|v| !v.is_finite()) {
        return Err(GridError::Shape("non-finite layer value".into()));
    }
    Ok(LayeredGrid {
        rows: spec.length_cells,
        cols: spec.width_cells,
        data,
        occupancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridmap::{voxelize, LidarPoint};

    fn layer(rows: usize, cols: usize, f: impl Fn(usize, usize) -> Option<f64>) -> GridLayer {
        let mut l = GridLayer::missing(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                l.cells[r * cols + c] = f(r, c);
            }
        }
        l
    }

    #[test]
    fn lone_hole_takes_neighbour_value() {
        let l = layer(3, 3, |r, c| if (r, c) == (1, 1) { None } else { Some(0.5) });
        assert_eq!(fill_missing(&l).unwrap(), vec![0.5; 9]);
    }

    #[test]
    fn missing_column_between_zero_and_one_becomes_half() {
        let l = layer(4, 3, |_, c| match c {
            0 => Some(0.0),
            1 => None,
            _ => Some(1.0),
        });
        let out = fill_missing(&l).unwrap();
        for r in 0..4 {
            assert_eq!(out[r * 3 + 1], 0.5);
        }
    }

    #[test]
    fn all_missing_is_rejected() {
        assert!(matches!(fill_missing(&GridLayer::missing(2, 2)), Err(GridError::AllMissing)));
    }

    #[test]
    fn two_voxel_heights_average() {
        let spec = GridSpec::default();
        // Same cell (row 3, col 14), two voxels stacked at 0.1 and 0.3 m.
        let pts = [LidarPoint::new(1.0, 0.1, 0.1, 10.0), LidarPoint::new(1.0, 0.1, 0.3, 30.0)];
        let vox = voxelize(&pts, &spec);
        assert_eq!(vox.voxels.len(), 2);
        let h = height_grid(&vox);
        assert!((h.get(3, 14).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(intensity_grid(&vox).get(3, 14), Some(20.0));
        assert_eq!(h.missing_count(), spec.cells() - 1);
    }

    #[test]
    fn three_voxel_intensities_average() {
        let spec = GridSpec::default();
        let pts = [
            LidarPoint::new(1.0, 0.1, 0.0, 10.0),
            LidarPoint::new(1.0, 0.1, 0.2, 20.0),
            LidarPoint::new(1.0, 0.1, 0.4, 30.0),
        ];
        let vox = voxelize(&pts, &spec);
        assert_eq!(intensity_grid(&vox).get(3, 14), Some(20.0));
    }

    #[test]
    fn semantic_cell_takes_highest_class() {
        let spec = GridSpec::default();
        let pts = [
            LidarPoint::new(1.0, 0.1, 0.0, 0.0).with_class(1),
            LidarPoint::new(1.1, 0.2, 0.0, 0.0).with_class(1),
            LidarPoint::new(1.15, 0.05, 0.0, 0.0).with_class(3),
            LidarPoint::new(2.0, 0.1, 0.0, 0.0).with_class(1),
            LidarPoint::new(3.0, 0.1, 0.0, 0.0).with_class(0),
        ];
        let sem = semantic_grid(&voxelize(&pts, &spec));
        assert_eq!(sem.get(3, 14), Some(3.0));
        assert_eq!(sem.get(6, 14), Some(1.0));
        assert_eq!(sem.get(10, 14), None, "sky-only cell is unknown");
    }

    #[test]
    fn assemble_scales_channels() {
        let one = GridSpec {
            length_cells: 1,
            width_cells: 1,
            resolution: 0.3,
        };
        let g = assemble(&one, &[3.0], &[2.5], &[std::f64::consts::FRAC_PI_4], &[51.0], vec![true]).unwrap();
        assert_eq!(g.data, vec![1.0, 1.0, 0.5, 0.2]);
        assert!(assemble(&one, &[3.0], &[2.5, 1.0], &[0.0], &[0.0], vec![true]).is_err());
    }
}
