//! Brute-force oracles and random inputs shared by the integration tests.
#![allow(dead_code)]

pub mod criteria;
pub mod grad;

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, SQRT_2};

use camel::gridmap::{GridSpec, LidarPoint, SurfaceNormal, VoxelGrid, CLASS_SKY};
use camel::nav::{CostMap, NavContext};
use camel::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_tensor(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

pub fn random_cost_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CostMap {
    CostMap::new(rows, cols, (0..rows * cols).map(|_| rng.random()).collect()).unwrap()
}

/// Costs from a few smooth blobs over a cheap floor, closer to what the
/// network produces than independent noise.
pub fn blob_cost_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CostMap {
    let blobs: Vec<(f64, f64, f64, f64)> = (0..rng.random_range(1..5))
        .map(|_| {
            (
                rng.random_range(0.0..rows as f64),
                rng.random_range(0.0..cols as f64),
                rng.random_range(1.5..5.0),
                rng.random_range(0.4..1.0),
            )
        })
        .collect();
    let floor = rng.random_range(0.02..0.2);
    let cells = (0..rows * cols)
        .map(|i| {
            let (r, c) = ((i / cols) as f64 + 0.5, (i % cols) as f64 + 0.5);
            let bump: f64 = blobs
                .iter()
                .map(|&(br, bc, s, h)| h * (-((r - br).powi(2) + (c - bc).powi(2)) / (2.0 * s * s)).exp())
                .sum();
            (floor + bump + rng.random_range(0.0..0.02)).min(1.0)
        })
        .collect();
    CostMap::new(rows, cols, cells).unwrap()
}

/// Points scattered over and around the region of interest, with random
/// intensities and a mix of labelled and unlabelled returns.
pub fn random_cloud(rng: &mut ChaCha8Rng, spec: &GridSpec, n: usize) -> Vec<LidarPoint> {
    let (len, half) = (spec.forward_extent(), spec.half_width());
    (0..n)
        .map(|_| {
            let p = LidarPoint::new(
                rng.random_range(-0.5..len + 0.5),
                rng.random_range(-half - 0.5..half + 0.5),
                rng.random_range(-0.6..1.5),
                rng.random_range(0.0..255.0),
            );
            match rng.random_range(0..6u8) {
                5 => p,
                c => p.with_class(c.min(3)),
            }
        })
        .collect()
}

type Key = (i64, i64, i64);

/// Per-cell layers from a direct two-level grouping: points into voxels,
/// voxels into cells.
pub struct GroupingOracle {
    pub rows: usize,
    pub cols: usize,
    /// Voxel keys per cell, sorted.
    pub cell_voxels: Vec<Vec<Key>>,
    pub height: Vec<Option<f64>>,
    pub intensity: Vec<Option<f64>>,
    pub semantic: Vec<Option<f64>>,
}

impl GroupingOracle {
    pub fn new(points: &[LidarPoint], spec: &GridSpec) -> Self {
        let size = spec.resolution / 2.0;
        let half = spec.width_cells as f64 * spec.resolution / 2.0;
        let (rows, cols) = (spec.length_cells, spec.width_cells);
        let mut members: HashMap<Key, Vec<&LidarPoint>> = HashMap::new();
        for p in points {
            let ix = (p.x / size).floor() as i64;
            let iy = ((p.y + half) / size).floor() as i64;
            let iz = (p.z / size).floor() as i64;
            if ix < 0 || iy < 0 || ix >= 2 * rows as i64 || iy >= 2 * cols as i64 {
                continue;
            }
            members.entry((ix, iy, iz)).or_default().push(p);
        }
        let mut cell_voxels = vec![Vec::new(); rows * cols];
        for key in members.keys() {
            cell_voxels[(key.0 / 2) as usize * cols + (key.1 / 2) as usize].push(*key);
        }
        let voxel_mean = |key: &Key, f: &dyn Fn(&LidarPoint) -> f64| {
            let pts = &members[key];
            pts.iter().map(|p| f(p)).sum::<f64>() / pts.len() as f64
        };
        let mut height = vec![None; rows * cols];
        let mut intensity = vec![None; rows * cols];
        let mut semantic = vec![None; rows * cols];
        for (cell, keys) in cell_voxels.iter_mut().enumerate() {
            if keys.is_empty() {
                continue;
            }
            keys.sort();
            let n = keys.len() as f64;
            height[cell] = Some(keys.iter().map(|k| voxel_mean(k, &|p| p.z)).sum::<f64>() / n);
            intensity[cell] = Some(keys.iter().map(|k| voxel_mean(k, &|p| p.intensity)).sum::<f64>() / n);
            semantic[cell] = keys
                .iter()
                .flat_map(|k| members[k].iter().filter_map(|p| p.class))
                .filter(|&c| c != CLASS_SKY)
                .max()
                .map(f64::from);
        }
        Self {
            rows,
            cols,
            cell_voxels,
            height,
            intensity,
            semantic,
        }
    }

    pub fn occupancy(&self) -> Vec<bool> {
        self.cell_voxels.iter().map(|v| !v.is_empty()).collect()
    }

    /// Cell means of the given per-voxel normals' slopes.
    pub fn slope(&self, vox: &VoxelGrid, normals: &[SurfaceNormal]) -> Vec<Option<f64>> {
        let by_key: HashMap<Key, f64> = vox
            .voxels
            .iter()
            .zip(normals)
            .map(|(v, n)| ((v.key.ix, v.key.iy, v.key.iz), n.normal[2].clamp(0.0, 1.0).acos().min(FRAC_PI_2)))
            .collect();
        self.cell_voxels
            .iter()
            .map(|keys| {
                (!keys.is_empty()).then(|| keys.iter().map(|k| by_key[k]).sum::<f64>() / keys.len() as f64)
            })
            .collect()
    }
}

/// Exhaustive goal-kernel choice: score all sixteen kernels from their
/// definitions and take the admissible one of least risk.
pub fn oracle_goal_kernel(map: &CostMap, ctx: &NavContext) -> Option<usize> {
    let (rows, cols) = (map.rows(), map.cols());
    let (kh, kw) = (rows / 4, cols / 4);
    let kernel = |k: usize| (k / 4, k % 4);
    let bearing = |k: usize| {
        let (kr, kc) = kernel(k);
        let fwd = (kr * kh) as f64 + kh as f64 / 2.0;
        let lat = (kc * kw) as f64 + kw as f64 / 2.0 - cols as f64 / 2.0;
        lat.atan2(fwd)
    };
    let off: Vec<f64> = (0..16).map(|k| (bearing(k) - ctx.bearing_to_goal).abs()).collect();
    let best_off = off.iter().cloned().fold(f64::INFINITY, f64::min);
    let facing: Vec<usize> = (0..16).filter(|&k| off[k] - best_off <= 1e-12).collect();
    let least_turn = facing.iter().map(|&k| bearing(k).abs()).fold(f64::INFINITY, f64::min);
    let aligned: Vec<usize> = facing.into_iter().filter(|&k| bearing(k).abs() - least_turn <= 1e-12).collect();
    let mut best: Option<(f64, f64, usize)> = None;
    for k in 0..16 {
        let (kr, kc) = kernel(k);
        let mut costs = Vec::new();
        for r in kr * kh..(kr + 1) * kh {
            for c in kc * kw..(kc + 1) * kw {
                costs.push(map.get(r, c));
            }
        }
        let mean = costs.iter().sum::<f64>() / costs.len() as f64;
        if mean > ctx.obstacle_threshold {
            continue;
        }
        let t = mean + costs.iter().cloned().fold(f64::INFINITY, f64::min);
        let d = aligned
            .iter()
            .map(|&a| {
                let (ar, ac) = kernel(a);
                (kr as f64 - ar as f64).hypot(kc as f64 - ac as f64)
            })
            .fold(f64::INFINITY, f64::min);
        let w = ctx.w_k * (1.0 + d);
        let v = w * t;
        if best.is_none_or(|(bv, bw, _)| v < bv || (v == bv && w < bw)) {
            best = Some((v, w, k));
        }
    }
    best.map(|b| b.2)
}

/// Cost of entering `(r, c)`: the mean of the cell and its two lateral
/// neighbours (clamped at the edges), times the step length.
pub fn oracle_step_cost(map: &CostMap, r: usize, c: usize, diagonal: bool) -> f64 {
    let cols = map.cols();
    let row = [c.saturating_sub(1), c, (c + 1).min(cols - 1)].map(|cc| map.get(r, cc));
    let mean = row.iter().sum::<f64>() / 3.0;
    if diagonal {
        SQRT_2 * mean
    } else {
        mean
    }
}

/// Least cost over every simple 8-connected path, by depth-first
/// enumeration pruned only where the partial cost already exceeds the best
/// complete path.
pub fn exhaustive_path_cost(map: &CostMap, start: (usize, usize), goal: (usize, usize)) -> f64 {
    fn dfs(
        map: &CostMap,
        at: (usize, usize),
        goal: (usize, usize),
        cost: f64,
        seen: &mut Vec<bool>,
        best: &mut f64,
    ) {
        if cost >= *best {
            return;
        }
        if at == goal {
            *best = cost;
            return;
        }
        let (rows, cols) = (map.rows() as i64, map.cols() as i64);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (r, c) = (at.0 as i64 + dr, at.1 as i64 + dc);
                if (dr, dc) == (0, 0) || r < 0 || c < 0 || r >= rows || c >= cols {
                    continue;
                }
                let i = (r * cols + c) as usize;
                if seen[i] {
                    continue;
                }
                seen[i] = true;
                let step = oracle_step_cost(map, r as usize, c as usize, dr != 0 && dc != 0);
                dfs(map, (r as usize, c as usize), goal, cost + step, seen, best);
                seen[i] = false;
            }
        }
    }
    let mut seen = vec![false; map.rows() * map.cols()];
    seen[start.0 * map.cols() + start.1] = true;
    let mut best = f64::INFINITY;
    dfs(map, start, goal, 0.0, &mut seen, &mut best);
    best
}

/// Noise-free plane `z = tan(angle) * (x cos(azimuth) + y sin(azimuth))`
/// sampled on a square lattice over the region of interest.
pub fn plane_cloud(spec: &GridSpec, angle: f64, azimuth: f64, spacing: f64) -> Vec<LidarPoint> {
    let (len, half) = (spec.forward_extent(), spec.half_width());
    let g = angle.tan();
    let mut pts = Vec::new();
    let nx = (len / spacing) as usize;
    let ny = (2.0 * half / spacing) as usize;
    for i in 0..nx {
        for j in 0..ny {
            let x = (i as f64 + 0.5) * spacing;
            let y = (j as f64 + 0.5) * spacing - half;
            let z = g * (x * azimuth.cos() + y * azimuth.sin());
            pts.push(LidarPoint::new(x, y, z, 100.0).with_class(1));
        }
    }
    pts
}
