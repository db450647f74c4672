//! Measurements behind the oracle checks, shared by the integration tests
//! and the acceptance report.

use camel::gridmap::{
    build_layered_grid, estimate_normals, height_grid, intensity_grid, semantic_grid, slope_grid, voxelize,
    GridSpec, HEIGHT_CLAMP, MAX_INTENSITY,
};
use camel::nav::{
    local_goal_cell, navigate, plan_path, select_goal_kernel, soft_steering_value, CostMap, KernelLayout,
    NavContext,
};
use rand::Rng;

use super::{exhaustive_path_cost, oracle_goal_kernel, plane_cloud, random_cloud, random_cost_map, rng, GroupingOracle};

#[derive(Debug, Default)]
pub struct GroupingReport {
    pub clouds: usize,
    /// Cells where a pre-fill layer or the occupancy differs from the oracle.
    pub mean_mismatches: usize,
    /// Occupied cells whose scaled channel differs from the scaled oracle.
    pub channel_mismatches: usize,
    pub max_slope_error: f64,
}

pub fn grouping_oracle(clouds: u64) -> GroupingReport {
    let spec = GridSpec::default();
    let mut report = GroupingReport::default();
    for seed in 0..clouds {
        let mut g = rng(1000 + seed);
        let n = g.random_range(500..6000);
        let points = random_cloud(&mut g, &spec, n);
        let oracle = GroupingOracle::new(&points, &spec);
        let vox = voxelize(&points, &spec);
        let normals = estimate_normals(&vox);
        let count = |a: &[Option<f64>], b: &[Option<f64>]| a.iter().zip(b).filter(|(x, y)| x != y).count();
        report.mean_mismatches += count(&height_grid(&vox).cells, &oracle.height)
            + count(&intensity_grid(&vox).cells, &oracle.intensity)
            + count(&semantic_grid(&vox).cells, &oracle.semantic);
        report.mean_mismatches += vox.occupancy().iter().zip(oracle.occupancy()).filter(|(a, b)| **a != *b).count();
        for (a, b) in slope_grid(&vox, &normals).cells.iter().zip(oracle.slope(&vox, &normals)) {
            match (a, b) {
                (Some(a), Some(b)) => report.max_slope_error = report.max_slope_error.max((a - b).abs()),
                (None, None) => {}
                _ => report.mean_mismatches += 1,
            }
        }
        let grid = build_layered_grid(&points, &spec).unwrap();
        for (i, occupied) in oracle.occupancy().into_iter().enumerate() {
            if !occupied {
                continue;
            }
            let (r, c) = (i / spec.width_cells, i % spec.width_cells);
            let h = oracle.height[i].unwrap().clamp(-HEIGHT_CLAMP, HEIGHT_CLAMP) / HEIGHT_CLAMP;
            let inten = (oracle.intensity[i].unwrap() / MAX_INTENSITY).clamp(0.0, 1.0);
            let sem_ok = oracle.semantic[i].is_none_or(|s| grid.get(0, r, c) == s / 3.0);
            if grid.get(1, r, c) != h || grid.get(3, r, c) != inten || !sem_ok || !grid.occupancy[i] {
                report.channel_mismatches += 1;
            }
        }
        report.clouds += 1;
    }
    report
}

/// Worst per-cell slope error in degrees for a noise-free plane.
pub fn plane_slope_error(angle_deg: f64, azimuth: f64) -> f64 {
    let spec = GridSpec::default();
    let grid = build_layered_grid(&plane_cloud(&spec, angle_deg.to_radians(), azimuth, 0.03), &spec).unwrap();
    let mut worst: f64 = 0.0;
    for r in 0..spec.length_cells {
        for c in 0..spec.width_cells {
            worst = worst.max((grid.slope_at(r, c).to_degrees() - angle_deg).abs());
        }
    }
    worst
}

#[derive(Debug, Default)]
pub struct KernelReport {
    pub maps: usize,
    pub kernel_mismatches: usize,
    pub goal_cell_mismatches: usize,
}

pub fn kernel_oracle(maps: u64) -> KernelReport {
    let mut report = KernelReport::default();
    let layout = KernelLayout::new(40, 28).unwrap();
    for seed in 0..maps {
        let mut g = rng(2000 + seed);
        let map = random_cost_map(&mut g, 40, 28);
        let ctx = NavContext::default().with_bearing(g.random_range(-2.0..2.0));
        let got = select_goal_kernel(&map, &layout, &ctx).ok();
        if got != oracle_goal_kernel(&map, &ctx) {
            report.kernel_mismatches += 1;
        }
        if let Some(k) = got {
            let cell = local_goal_cell(&map, &layout, k);
            let least = layout.cells(k).map(|(r, c)| map.get(r, c)).fold(f64::INFINITY, f64::min);
            if map.get(cell.0, cell.1) != least || layout.kernel_of(cell.0, cell.1) != k {
                report.goal_cell_mismatches += 1;
            }
        }
        report.maps += 1;
    }
    report
}

#[derive(Debug, Default)]
pub struct PathReport {
    pub trials: usize,
    pub max_cost_error: f64,
}

/// Every grid shape up to 6x6 with at least two cells, then random 6x6
/// grids until `trials` is reached.
pub fn path_oracle(trials: usize) -> PathReport {
    let mut shapes: Vec<(usize, usize)> = (1..=6)
        .flat_map(|r| (1..=6).map(move |c| (r, c)))
        .filter(|&(r, c)| r * c >= 2)
        .collect();
    while shapes.len() < trials {
        shapes.push((6, 6));
    }
    let mut report = PathReport::default();
    for (i, &(rows, cols)) in shapes.iter().take(trials).enumerate() {
        let mut g = rng(3000 + i as u64);
        let map = random_cost_map(&mut g, rows, cols);
        let start = (g.random_range(0..rows), g.random_range(0..cols));
        let goal = loop {
            let c = (g.random_range(0..rows), g.random_range(0..cols));
            if c != start {
                break c;
            }
        };
        let planned = plan_path(&map, start, goal).unwrap();
        let best = exhaustive_path_cost(&map, start, goal);
        report.max_cost_error = report.max_cost_error.max((planned.cost() - best).abs());
        report.trials += 1;
    }
    report
}

#[derive(Debug, Default)]
pub struct SurrogateReport {
    pub maps: usize,
    pub max_gap: f64,
    pub within: usize,
    /// Mirrored maps whose steering is not exactly negated, either pipeline.
    pub mirror_failures: usize,
}

/// Soft steering at `tau` against the hard pipeline's pre-clamp steering on
/// random maps and random goal bearings.
pub fn surrogate_consistency(maps: u64, tau: f64, tolerance: f64, make: fn(&mut rand_chacha::ChaCha8Rng) -> CostMap) -> SurrogateReport {
    let mut report = SurrogateReport::default();
    for seed in 0..maps {
        let mut g = rng(4000 + seed);
        let map = make(&mut g);
        let ctx = NavContext::default().with_tau(tau).with_bearing(g.random_range(-1.0..1.0));
        let soft = soft_steering_value(&map, &ctx).unwrap();
        let hard = navigate(&map, &ctx).unwrap().command.steering_raw;
        let gap = (soft - hard).abs();
        report.max_gap = report.max_gap.max(gap);
        report.within += usize::from(gap <= tolerance);

        let straight = ctx.with_bearing(0.0);
        let mirror = map.mirrored();
        let soft_pair = (soft_steering_value(&map, &straight).unwrap(), soft_steering_value(&mirror, &straight).unwrap());
        let hard_pair = (
            navigate(&map, &straight).unwrap().command.steering_raw,
            navigate(&mirror, &straight).unwrap().command.steering_raw,
        );
        if soft_pair.0 != -soft_pair.1 || hard_pair.0 != -hard_pair.1 {
            report.mirror_failures += 1;
        }
        report.maps += 1;
    }
    report
}
