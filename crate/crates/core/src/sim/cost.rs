use super::{vehicle_to_world, Pose, Scene};
use crate::gridmap::{GridSpec, LayeredGrid, CLASS_OBSTACLE, NUM_CLASSES};
use crate::nav::CostMap;

/// Slopes steeper than this are penalised, radians (20 degrees).
pub const STEEP_SLOPE: f64 = 20.0 * std::f64::consts::PI / 180.0;
/// Surfaces higher than this above the vehicle's ground are penalised, meters.
pub const TALL_HEIGHT: f64 = 0.5;

/// Handcrafted cell cost: `0.3 * class / 3 + 0.4 [steep] + 0.3 [tall]`,
/// clamped to `[0, 1]`; obstacles cost 1.
pub fn handcrafted_rule(class: u8, slope: f64, height: f64) -> f64 {
    if class == CLASS_OBSTACLE {
        return 1.0;
    }
    let steep = if slope > STEEP_SLOPE { 0.4 } else { 0.0 };
    let tall = if height > TALL_HEIGHT { 0.3 } else { 0.0 };
    (0.3 * class as f64 / (NUM_CLASSES - 1) as f64 + steep + tall).clamp(0.0, 1.0)
}

/// The rule applied to the true scene at every cell center around `pose`.
pub fn ground_truth_cost(scene: &Scene, pose: &Pose, spec: &GridSpec) -> CostMap {
    clearance_cost(scene, pose, spec, 0.0)
}

/// [`ground_truth_cost`] with every obstacle grown by `clearance` meters,
/// so that a vehicle of that radius is kept off them.
pub fn clearance_cost(scene: &Scene, pose: &Pose, spec: &GridSpec, clearance: f64) -> CostMap {
    let ground = scene.terrain_height(pose.x, pose.y);
    let mut cells = Vec::with_capacity(spec.cells());
    for r in 0..spec.length_cells {
        for c in 0..spec.width_cells {
            let (vx, vy) = spec.cell_center(r, c);
            let w = vehicle_to_world(scene, pose, [vx, vy, 0.0]);
            let near = scene
                .obstacles
                .iter()
                .any(|o| (o.x - w[0]).hypot(o.y - w[1]) < o.radius + clearance);
            cells.push(if near {
                1.0
            } else {
                let height = scene.height(w[0], w[1]) - ground;
                handcrafted_rule(scene.class_at(w[0], w[1]), scene.slope_at(w[0], w[1]), height)
            });
        }
    }
    CostMap::new(spec.length_cells, spec.width_cells, cells).expect("rule stays in [0, 1]")
}

/// The rule applied to a sensed grid, with the class channel rounded to the
/// nearest class.
pub fn handcrafted_cost(grid: &LayeredGrid) -> CostMap {
    let mut cells = Vec::with_capacity(grid.rows * grid.cols);
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let class = grid.class_at(r, c).round().clamp(0.0, (NUM_CLASSES - 1) as f64) as u8;
            cells.push(handcrafted_rule(class, grid.slope_at(r, c), grid.height_at(r, c)));
        }
    }
    CostMap::new(grid.rows, grid.cols, cells).expect("rule stays in [0, 1]")
}
