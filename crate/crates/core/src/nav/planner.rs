use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{CostMap, NavError, Result};

/// Cells from the vehicle to the goal, with the cumulative cost of reaching
/// each one.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannedPath {
    pub cells: Vec<(usize, usize)>,
    /// `cumulative[i]` is the cost of the path up to and including cell `i`;
    /// the start costs nothing.
    pub cumulative: Vec<f64>,
}

impl PlannedPath {
    pub fn cost(&self) -> f64 {
        *self.cumulative.last().expect("paths are non-empty")
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn mirrored(&self, cols: usize) -> Self {
        Self {
            cells: self.cells.iter().map(|&(r, c)| (r, cols - 1 - c)).collect(),
            cumulative: self.cumulative.clone(),
        }
    }
}

/// The vehicle straddles the two center columns of the near row; the path
/// leaves from whichever of them is on the goal's side.
pub fn start_cell(cols: usize, goal: (usize, usize)) -> (usize, usize) {
    if cols % 2 == 1 || goal.1 >= cols / 2 {
        (0, cols / 2)
    } else {
        (0, cols / 2 - 1)
    }
}

/// Cost of stepping into `(r, c)` from a neighbour: step length times the
/// mean cost under the three-cell vehicle footprint.
pub fn step_cost(map: &CostMap, r: usize, c: usize, diagonal: bool) -> f64 {
    let left = map.get(r, c.saturating_sub(1));
    let right = map.get(r, (c + 1).min(map.cols() - 1));
    let footprint = ((left + right) + map.get(r, c)) / 3.0;
    if diagonal {
        std::f64::consts::SQRT_2 * footprint
    } else {
        footprint
    }
}

#[derive(Debug, PartialEq)]
struct Entry {
    dist: f64,
    seq: u64,
    cell: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    // Reversed: the heap pops the smallest distance, then the earliest push.
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Least-cost 8-connected path. Equal-cost alternatives resolve by settle
/// order, with neighbours expanded row-major; an existing predecessor is
/// only replaced by a strictly cheaper one.
pub fn plan_path(map: &CostMap, start: (usize, usize), goal: (usize, usize)) -> Result<PlannedPath> {
    let (rows, cols) = (map.rows(), map.cols());
    for (name, (r, c)) in [("start", start), ("goal", goal)] {
        if r >= rows || c >= cols {
            return Err(NavError::Argument(format!("{name} ({r}, {c}) outside {rows}x{cols} map")));
        }
    }
    if start == goal {
        return Err(NavError::Argument("start equals goal".into()));
    }
    let idx = |(r, c): (usize, usize)| r * cols + c;
    let mut dist = vec![f64::INFINITY; rows * cols];
    let mut prev = vec![usize::MAX; rows * cols];
    let mut done = vec![false; rows * cols];
    let mut heap = BinaryHeap::new();
    let mut seq = 0u64;
    dist[idx(start)] = 0.0;
    heap.push(Entry {
        dist: 0.0,
        seq,
        cell: idx(start),
    });
    while let Some(Entry { dist: d, cell, .. }) = heap.pop() {
        if done[cell] {
            continue;
        }
        done[cell] = true;
        if cell == idx(goal) {
            break;
        }
        let (r, c) = (cell / cols, cell % cols);
        for dr in -1i64..=1 {
            for dc in -1i64..=1 {
                let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                if (dr, dc) == (0, 0) || nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                    continue;
                }
                let n = nr as usize * cols + nc as usize;
                if done[n] {
                    continue;
                }
                let nd = d + step_cost(map, nr as usize, nc as usize, dr != 0 && dc != 0);
                if nd < dist[n] {
                    dist[n] = nd;
                    prev[n] = cell;
                    seq += 1;
                    heap.push(Entry { dist: nd, seq, cell: n });
                }
            }
        }
    }
    if !done[idx(goal)] {
        return Err(NavError::Unreachable { start, goal });
    }
    let mut cells = vec![goal];
    let mut cur = idx(goal);
    while cur != idx(start) {
        cur = prev[cur];
        cells.push((cur / cols, cur % cols));
    }
    cells.reverse();
    let cumulative = cells.iter().map(|&cell| dist[idx(cell)]).collect();
    Ok(PlannedPath { cells, cumulative })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_corridor_is_straight() {
        let map = CostMap::uniform(10, 5, 0.2).unwrap();
        let p = plan_path(&map, (0, 2), (9, 2)).unwrap();
        assert_eq!(p.cells, (0..10).map(|r| (r, 2)).collect::<Vec<_>>());
        assert!((p.cost() - 9.0 * 0.2).abs() < 1e-12);
    }

    #[test]
    fn adjacent_goal_gives_two_cells() {
        let map = CostMap::uniform(4, 4, 0.5).unwrap();
        let p = plan_path(&map, (0, 1), (1, 2)).unwrap();
        assert_eq!(p.cells, vec![(0, 1), (1, 2)]);
        assert!((p.cost() - 0.5 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn wall_with_gap_routes_through_gap() {
        // 8 rows x 6 cols, wall on row 4 except column 5.
        let mut cells = vec![0.05; 48];
        for c in 0..5 {
            cells[4 * 6 + c] = 1.0;
        }
        let map = CostMap::new(8, 6, cells).unwrap();
        let p = plan_path(&map, (0, 2), (7, 2)).unwrap();
        assert!(p.cells.contains(&(4, 5)), "{:?}", p.cells);
        for w in p.cells.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1 && a != b);
        }
    }

    #[test]
    fn footprint_clamps_at_borders() {
        let map = CostMap::new(1, 3, vec![0.3, 0.6, 0.9]).unwrap();
        assert!((step_cost(&map, 0, 0, false) - (0.3 + 0.6 + 0.3) / 3.0).abs() < 1e-12);
        assert!((step_cost(&map, 0, 2, true) - 2f64.sqrt() * (0.6 + 0.9 + 0.9) / 3.0).abs() < 1e-12);
    }

    #[test]
    fn start_side_follows_goal() {
        assert_eq!(start_cell(28, (30, 3)), (0, 13));
        assert_eq!(start_cell(28, (30, 13)), (0, 13));
        assert_eq!(start_cell(28, (30, 14)), (0, 14));
        assert_eq!(start_cell(5, (3, 0)), (0, 2));
    }

    #[test]
    fn degenerate_requests_are_rejected() {
        let map = CostMap::uniform(3, 3, 0.1).unwrap();
        assert!(plan_path(&map, (0, 1), (0, 1)).is_err());
        assert!(plan_path(&map, (0, 1), (3, 1)).is_err());
    }
}
