use std::fmt::Write as _;
use std::path::Path;

use super::{CostMap, PlannedPath, Result};
use crate::io_util::write_atomic_str;

/// Plain PGM (P2) with 255 levels. The farthest row is the top line of the
/// image, so the vehicle sits at the bottom center.
pub fn costmap_pgm(map: &CostMap) -> String {
    let mut s = format!("P2\n{} {}\n255\n", map.cols(), map.rows());
    for r in (0..map.rows()).rev() {
        let line: Vec<String> = (0..map.cols())
            .map(|c| ((map.get(r, c) * 255.0).round() as u8).to_string())
            .collect();
        s.push_str(&line.join(" "));
        s.push('\n');
    }
    s
}

/// One CSV line per map row, nearest row first.
pub fn costmap_csv(map: &CostMap) -> String {
    let mut s = String::new();
    for r in 0..map.rows() {
        let line: Vec<String> = (0..map.cols()).map(|c| map.get(r, c).to_string()).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    s
}

pub fn path_csv(path: &PlannedPath) -> String {
    let mut s = String::from("row,col\n");
    for (r, c) in &path.cells {
        let _ = writeln!(s, "{r},{c}");
    }
    s
}

pub fn save_costmap_pgm(path: &Path, map: &CostMap) -> Result<()> {
    Ok(write_atomic_str(path, &costmap_pgm(map))?)
}

pub fn save_costmap_csv(path: &Path, map: &CostMap) -> Result<()> {
    Ok(write_atomic_str(path, &costmap_csv(map))?)
}

pub fn save_path_csv(path: &Path, planned: &PlannedPath) -> Result<()> {
    Ok(write_atomic_str(path, &path_csv(planned))?)
}
