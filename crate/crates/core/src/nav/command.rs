use std::cmp::Ordering;

use super::{
    cell_offset, local_goal_cell, plan_path, select_goal_kernel, start_cell, step_cost, steering_from,
    CostMap, DriveCommand, KernelLayout, NavContext, NavError, PlannedPath, Result, KERNELS_PER_SIDE,
};

const MIN_THROTTLE: f64 = 0.1;
/// Samples per cell along a shortcut.
const SHORTCUT_SAMPLES: f64 = 4.0;

/// Footprint cost integrated along the straight segment between two cell
/// centers.
fn segment_cost(map: &CostMap, a: (usize, usize), b: (usize, usize)) -> f64 {
    let (dr, dc) = (b.0 as f64 - a.0 as f64, b.1 as f64 - a.1 as f64);
    let len = dr.hypot(dc);
    let n = (len * SHORTCUT_SAMPLES).ceil().max(1.0) as usize;
    let ds = len / n as f64;
    (0..n)
        .map(|k| {
            let t = (k as f64 + 0.5) / n as f64;
            let r = (a.0 as f64 + t * dr).round() as usize;
            let c = (a.1 as f64 + t * dc).round() as usize;
            step_cost(map, r, c, false) * ds
        })
        .sum()
}

/// Index of the path cell to steer toward: the farthest cell whose straight
/// shortcut from the start costs no more than `1 + shortcut_tolerance` times
/// the path up to it, and never nearer than the minimum lookahead.
pub fn shortcut_lookahead(map: &CostMap, path: &PlannedPath, ctx: &NavContext) -> usize {
    let n = path.len();
    let floor = ctx.lookahead.min(n - 1);
    (floor + 1..n)
        .rev()
        .find(|&j| segment_cost(map, path.cells[0], path.cells[j]) <= (1.0 + ctx.shortcut_tolerance) * path.cumulative[j])
        .unwrap_or(floor)
}

/// Steer from the start cell toward the lookahead cell; slow down for the
/// costliest of the first `lookahead` cells.
pub fn path_to_command(path: &PlannedPath, map: &CostMap, ctx: &NavContext) -> Result<DriveCommand> {
    if path.len() < 2 {
        return Err(NavError::Argument("a command needs a path of at least two cells".into()));
    }
    let j = shortcut_lookahead(map, path, ctx);
    let (s, l) = (path.cells[0], path.cells[j]);
    let (fs, ls) = cell_offset(map.cols(), s.0, s.1);
    let (fl, ll) = cell_offset(map.cols(), l.0, l.1);
    let steering_raw = steering_from(ll - ls, fl - fs);
    let worst = path.cells[..ctx.lookahead.min(path.len())]
        .iter()
        .map(|&(r, c)| map.get(r, c))
        .fold(0.0, f64::max);
    let throttle = (ctx.throttle_max * (1.0 - worst)).max(MIN_THROTTLE.min(ctx.throttle_max));
    Ok(DriveCommand {
        throttle,
        steering: steering_raw.clamp(-ctx.steering_limit, ctx.steering_limit),
        steering_raw,
    })
}

/// Everything the hard pipeline decided for one map.
#[derive(Debug, Clone, PartialEq)]
pub struct NavOutcome {
    pub goal_kernel: usize,
    pub goal_cell: (usize, usize),
    pub path: PlannedPath,
    pub command: DriveCommand,
}

impl NavOutcome {
    fn mirrored(self, cols: usize) -> Self {
        let (kr, kc) = (self.goal_kernel / KERNELS_PER_SIDE, self.goal_kernel % KERNELS_PER_SIDE);
        Self {
            goal_kernel: kr * KERNELS_PER_SIDE + KERNELS_PER_SIDE - 1 - kc,
            goal_cell: (self.goal_cell.0, cols - 1 - self.goal_cell.1),
            path: self.path.mirrored(cols),
            command: DriveCommand {
                steering: -self.command.steering,
                steering_raw: -self.command.steering_raw,
                ..self.command
            },
        }
    }
}

/// Full hard pipeline: goal kernel, local goal, path, command.
///
/// The problem is solved in a canonical left-right orientation (goal bearing
/// not to the left; for a dead-ahead goal, the lexicographically smaller of
/// the map and its mirror) and mapped back, so a mirrored input always
/// yields the mirrored outcome even where ties must be broken.
pub fn navigate(map: &CostMap, ctx: &NavContext) -> Result<NavOutcome> {
    ctx.validate()?;
    let layout = KernelLayout::for_map(map)?;
    let mirror = map.mirrored();
    let flip = ctx.bearing_to_goal > 0.0
        || (ctx.bearing_to_goal == 0.0 && lexicographic(mirror.cells(), map.cells()) == Ordering::Less);
    let (m, c) = if flip {
        (&mirror, ctx.with_bearing(-ctx.bearing_to_goal))
    } else {
        (map, *ctx)
    };
    let goal_kernel = select_goal_kernel(m, &layout, &c)?;
    let goal_cell = local_goal_cell(m, &layout, goal_kernel);
    let start = start_cell(m.cols(), goal_cell);
    let path = if start == goal_cell {
        // Only possible on maps a single kernel row tall; stay put.
        PlannedPath {
            cells: vec![start, start],
            cumulative: vec![0.0, 0.0],
        }
    } else {
        plan_path(m, start, goal_cell)?
    };
    let command = path_to_command(&path, m, &c)?;
    let out = NavOutcome {
        goal_kernel,
        goal_cell,
        path,
        command,
    };
    Ok(if flip { out.mirrored(map.cols()) } else { out })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(n: usize, col: usize) -> PlannedPath {
        PlannedPath {
            cells: (0..n).map(|r| (r, col)).collect(),
            cumulative: (0..n).map(|r| r as f64 * 0.1).collect(),
        }
    }

    #[test]
    fn straight_path_gives_zero_steering_and_full_throttle() {
        let map = CostMap::uniform(40, 28, 0.0).unwrap();
        let cmd = path_to_command(&straight(12, 13), &map, &NavContext::default()).unwrap();
        assert_eq!(cmd.steering_raw, 0.0);
        assert_eq!(cmd.throttle, 0.7);
    }

    #[test]
    fn sideways_lookahead_saturates() {
        let map = CostMap::uniform(40, 28, 0.2).unwrap();
        let path = PlannedPath {
            cells: (13..20).map(|c| (0, c)).collect(),
            cumulative: (0..7).map(|i| i as f64 * 0.2).collect(),
        };
        let cmd = path_to_command(&path, &map, &NavContext::default()).unwrap();
        assert_eq!(cmd.steering_raw, 1.0);
        assert_eq!(cmd.steering, 0.4);
        assert!((cmd.throttle - 0.7 * 0.8).abs() < 1e-12);
    }

    #[test]
    fn throttle_never_drops_below_floor() {
        let map = CostMap::uniform(40, 28, 1.0).unwrap();
        let cmd = path_to_command(&straight(8, 13), &map, &NavContext::default()).unwrap();
        assert_eq!(cmd.throttle, 0.1);
    }

    #[test]
    fn uniform_map_drives_straight() {
        let map = CostMap::uniform(40, 28, 0.1).unwrap();
        let out = navigate(&map, &NavContext::default()).unwrap();
        assert_eq!(out.command.steering_raw, 0.0);
        assert_eq!(out.path.cells[0].0, 0);
        assert_eq!(*out.path.cells.last().unwrap(), out.goal_cell);
    }

    #[test]
    fn obstacle_on_the_axis_forces_a_turn() {
        let mut cells = vec![0.1; 40 * 28];
        for r in 8..14 {
            for c in 11..18 {
                cells[r * 28 + c] = 1.0;
            }
        }
        let map = CostMap::new(40, 28, cells).unwrap();
        let out = navigate(&map, &NavContext::default()).unwrap();
        assert!(out.command.steering_raw.abs() > 0.05, "{:?}", out.command);
        let mirrored = navigate(&map.mirrored(), &NavContext::default()).unwrap();
        assert_eq!(mirrored.command.steering_raw, -out.command.steering_raw);
    }

    #[test]
    fn shortcut_stops_before_an_obstacle() {
        let mut cells = vec![0.1; 40 * 28];
        for r in 15..25 {
            for c in 8..16 {
                cells[r * 28 + c] = 1.0;
            }
        }
        let map = CostMap::new(40, 28, cells).unwrap();
        let ctx = NavContext::default();
        let path = plan_path(&map, (0, 13), (39, 13)).unwrap();
        let j = shortcut_lookahead(&map, &path, &ctx);
        assert!(j >= ctx.lookahead && j < path.len() - 1, "{j} of {}", path.len());
    }
}
