use std::collections::BTreeMap;

use super::{GridSpec, LidarPoint};

/// Integer voxel coordinates. `ix` counts from the near edge, `iy` from the
/// right-hand edge of the region of interest, so both are non-negative for
/// retained points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VoxelKey {
    pub ix: i64,
    pub iy: i64,
    pub iz: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Voxel {
    pub key: VoxelKey,
    pub count: usize,
    sum: [f64; 3],
    sum_intensity: f64,
    /// Highest class among labelled points, if any were labelled.
    pub max_class: Option<u8>,
}

impl Voxel {
    fn new(key: VoxelKey) -> Self {
        Self {
            key,
            count: 0,
            sum: [0.0; 3],
            sum_intensity: 0.0,
            max_class: None,
        }
    }

    fn add(&mut self, p: &LidarPoint) {
        self.count += 1;
        self.sum[0] += p.x;
        self.sum[1] += p.y;
        self.sum[2] += p.z;
        self.sum_intensity += p.intensity;
        if let Some(c) = p.class {
            self.max_class = Some(self.max_class.map_or(c, |m| m.max(c)));
        }
    }

    pub fn mean(&self) -> [f64; 3] {
        let n = self.count as f64;
        [self.sum[0] / n, self.sum[1] / n, self.sum[2] / n]
    }

    /// Mean point height.
    pub fn height(&self) -> f64 {
        self.sum[2] / self.count as f64
    }

    pub fn intensity(&self) -> f64 {
        self.sum_intensity / self.count as f64
    }
}

/// Occupied voxels inside the grid's region of interest, ordered by key.
#[derive(Debug, Clone)]
pub struct VoxelGrid {
    pub spec: GridSpec,
    pub voxel_size: f64,
    pub voxels: Vec<Voxel>,
}

impl VoxelGrid {
    /// Grid cell `(row, col)` holding a voxel. Two voxels per cell edge.
    pub fn cell_of(&self, key: &VoxelKey) -> (usize, usize) {
        ((key.ix / 2) as usize, (key.iy / 2) as usize)
    }

    pub fn point_count(&self) -> usize {
        self.voxels.iter().map(|v| v.count).sum()
    }

    /// Cells holding at least one voxel, row-major.
    pub fn occupancy(&self) -> Vec<bool> {
        let mut occ = vec![false; self.spec.cells()];
        for v in &self.voxels {
            let (r, c) = self.cell_of(&v.key);
            occ[self.spec.index(r, c)] = true;
        }
        occ
    }

    /// Voxel indices grouped by cell, row-major.
    pub fn voxels_by_cell(&self) -> Vec<Vec<usize>> {
        let mut cells = vec![Vec::new(); self.spec.cells()];
        for (i, v) in self.voxels.iter().enumerate() {
            let (r, c) = self.cell_of(&v.key);
            cells[self.spec.index(r, c)].push(i);
        }
        cells
    }
}

/// Voxel key for a point, or `None` outside the region of interest.
pub(crate) fn voxel_key(spec: &GridSpec, p: &LidarPoint) -> Option<VoxelKey> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return None;
    }
    let size = spec.voxel_size();
    let ix = (p.x / size).floor() as i64;
    let iy = ((p.y + spec.half_width()) / size).floor() as i64;
    let iz = (p.z / size).floor() as i64;
    let inside = (0..2 * spec.length_cells as i64).contains(&ix)
        && (0..2 * spec.width_cells as i64).contains(&iy);
    inside.then_some(VoxelKey { ix, iy, iz })
}

/// Bin points into voxels of half the grid resolution. Points outside the
/// region of interest are dropped.
pub fn voxelize(points: &[LidarPoint], spec: &GridSpec) -> VoxelGrid {
    let mut map: BTreeMap<VoxelKey, Voxel> = BTreeMap::new();
    for p in points {
        if let Some(key) = voxel_key(spec, p) {
            map.entry(key).or_insert_with(|| Voxel::new(key)).add(p);
        }
    }
    VoxelGrid {
        spec: *spec,
        voxel_size: spec.voxel_size(),
        voxels: map.into_values().collect(),
    }
}
