use super::{cell_offset, CostMap, NavContext, NavError, Result};

pub const KERNELS_PER_SIDE: usize = 4;
/// Bearings closer than this count as equally aligned.
const BEARING_TIE: f64 = 1e-12;

/// Exact 4x4 tiling of a map. Kernel `i` sits at kernel-grid position
/// `(i / 4, i % 4)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KernelLayout {
    pub rows: usize,
    pub cols: usize,
    /// Cells per kernel along the forward axis.
    pub kernel_rows: usize,
    pub kernel_cols: usize,
}

impl KernelLayout {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || !rows.is_multiple_of(KERNELS_PER_SIDE) || !cols.is_multiple_of(KERNELS_PER_SIDE) {
            return Err(NavError::Shape(format!(
                "{rows}x{cols} does not tile into {KERNELS_PER_SIDE}x{KERNELS_PER_SIDE} kernels"
            )));
        }
        Ok(Self {
            rows,
            cols,
            kernel_rows: rows / KERNELS_PER_SIDE,
            kernel_cols: cols / KERNELS_PER_SIDE,
        })
    }

    pub fn for_map(map: &CostMap) -> Result<Self> {
        Self::new(map.rows(), map.cols())
    }

    pub fn count(&self) -> usize {
        KERNELS_PER_SIDE * KERNELS_PER_SIDE
    }

    pub fn cells_per_kernel(&self) -> usize {
        self.kernel_rows * self.kernel_cols
    }

    /// Kernel-grid `(row, col)`.
    pub fn position(&self, k: usize) -> (usize, usize) {
        (k / KERNELS_PER_SIDE, k % KERNELS_PER_SIDE)
    }

    /// Map cells of kernel `k`, row-major.
    pub fn cells(&self, k: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (kr, kc) = self.position(k);
        let (r0, c0) = (kr * self.kernel_rows, kc * self.kernel_cols);
        (r0..r0 + self.kernel_rows).flat_map(move |r| (c0..c0 + self.kernel_cols).map(move |c| (r, c)))
    }

    /// Flat map indices of kernel `k`, row-major.
    pub fn indices(&self, k: usize) -> Vec<usize> {
        self.cells(k).map(|(r, c)| r * self.cols + c).collect()
    }

    pub fn kernel_of(&self, row: usize, col: usize) -> usize {
        (row / self.kernel_rows) * KERNELS_PER_SIDE + col / self.kernel_cols
    }

    /// Forward and left offset of the kernel center, in cells.
    pub fn center(&self, k: usize) -> (f64, f64) {
        let (kr, kc) = self.position(k);
        let fwd = (kr * self.kernel_rows) as f64 + self.kernel_rows as f64 / 2.0;
        let lat = ((2 * kc * self.kernel_cols + self.kernel_cols) as f64 - self.cols as f64) / 2.0;
        (fwd, lat)
    }

    /// Vehicle-relative bearing of the kernel center.
    pub fn bearing(&self, k: usize) -> f64 {
        let (fwd, lat) = self.center(k);
        lat.atan2(fwd)
    }
}

/// Mean plus minimum of the kernel's costs.
pub fn traversability(map: &CostMap, layout: &KernelLayout, k: usize) -> f64 {
    let (sum, min) = layout
        .cells(k)
        .map(|(r, c)| map.get(r, c))
        .fold((0.0, f64::INFINITY), |(s, m), v| (s + v, m.min(v)));
    sum / layout.cells_per_kernel() as f64 + min
}

/// `W_k * (1 + d)`, with `d` the kernel-grid distance to the nearest kernel
/// facing the goal. Facing means the center bearing is closest to the goal
/// bearing; among equals the smaller absolute bearing wins, and mirror pairs
/// both count.
pub fn kernel_weights(layout: &KernelLayout, bearing_to_goal: f64, w_k: f64) -> Vec<f64> {
    let n = layout.count();
    let bearings: Vec<f64> = (0..n).map(|k| layout.bearing(k)).collect();
    let off: Vec<f64> = bearings.iter().map(|b| (b - bearing_to_goal).abs()).collect();
    let best_off = off.iter().copied().fold(f64::INFINITY, f64::min);
    let closest: Vec<usize> = (0..n).filter(|&k| off[k] <= best_off + BEARING_TIE).collect();
    let best_abs = closest.iter().map(|&k| bearings[k].abs()).fold(f64::INFINITY, f64::min);
    let aligned: Vec<usize> = closest
        .into_iter()
        .filter(|&k| bearings[k].abs() <= best_abs + BEARING_TIE)
        .collect();
    (0..n)
        .map(|i| {
            let (ir, ic) = layout.position(i);
            let d = aligned
                .iter()
                .map(|&a| {
                    let (ar, ac) = layout.position(a);
                    ((ir as f64 - ar as f64).powi(2) + (ic as f64 - ac as f64).powi(2)).sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            w_k * (1.0 + d)
        })
        .collect()
}

/// Per-kernel quantities behind the goal choice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelScore {
    pub mean: f64,
    /// Mean plus minimum.
    pub traversability: f64,
    pub weight: f64,
    /// Weight times traversability.
    pub risk: f64,
    /// Mean cost within the obstacle threshold.
    pub admissible: bool,
}

pub fn kernel_scores(map: &CostMap, layout: &KernelLayout, ctx: &NavContext) -> Vec<KernelScore> {
    let weights = kernel_weights(layout, ctx.bearing_to_goal, ctx.w_k);
    (0..layout.count())
        .map(|k| {
            let t = traversability(map, layout, k);
            let mean = layout.cells(k).map(|(r, c)| map.get(r, c)).sum::<f64>() / layout.cells_per_kernel() as f64;
            KernelScore {
                mean,
                traversability: t,
                weight: weights[k],
                risk: weights[k] * t,
                admissible: mean <= ctx.obstacle_threshold,
            }
        })
        .collect()
}

/// Admissible kernel of least risk; ties go to the smaller weight, then the
/// lower index.
pub fn select_goal_kernel(map: &CostMap, layout: &KernelLayout, ctx: &NavContext) -> Result<usize> {
    let scores = kernel_scores(map, layout, ctx);
    (0..scores.len())
        .filter(|&k| scores[k].admissible)
        .min_by(|&a, &b| {
            scores[a]
                .risk
                .total_cmp(&scores[b].risk)
                .then(scores[a].weight.total_cmp(&scores[b].weight))
                .then(a.cmp(&b))
        })
        .ok_or(NavError::NoAdmissibleGoal)
}

/// Cheapest cell of kernel `k`. Ties go to the farthest row, then the cell
/// nearest the vehicle's axis, then the lower column.
pub fn local_goal_cell(map: &CostMap, layout: &KernelLayout, k: usize) -> (usize, usize) {
    let cols = map.cols();
    layout
        .cells(k)
        .min_by(|&(ra, ca), &(rb, cb)| {
            map.get(ra, ca)
                .total_cmp(&map.get(rb, cb))
                .then(rb.cmp(&ra))
                .then(cell_offset(cols, ra, ca).1.abs().total_cmp(&cell_offset(cols, rb, cb).1.abs()))
                .then(ca.cmp(&cb))
        })
        .expect("kernels are non-empty")
}
