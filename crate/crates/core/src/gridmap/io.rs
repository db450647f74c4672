use std::fmt::Write as _;
use std::path::Path;

use super::{GridError, LayeredGrid, LidarPoint, CHANNELS, NUM_CLASSES};
use crate::io_util::{write_atomic, write_atomic_str};

const GRID_MAGIC: &[u8; 4] = b"CMLG";
/// Class byte for points no camera labelled.
const UNLABELLED: u8 = 255;

/// Parse an ASCII PLY point cloud with float properties `x y z intensity`
/// and an optional `uchar class`. Extra properties are ignored.
pub fn read_ply(text: &str) -> Result<Vec<LidarPoint>, GridError> {
    let err = |line: usize, detail: String| GridError::Ply { line, detail };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));

    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(err(1, "missing 'ply' magic".into())),
    }
    let mut count: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut in_vertex = false;
    let mut header_done = false;
    for (n, line) in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", _] => {}
            ["format", other, ..] => return Err(err(n, format!("unsupported format '{other}'"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", c] => {
                count = Some(c.parse().map_err(|_| err(n, format!("bad vertex count '{c}'")))?);
                in_vertex = true;
            }
            ["element", ..] => in_vertex = false,
            ["property", "list", ..] if in_vertex => {
                return Err(err(n, "list properties are not supported on vertices".into()))
            }
            ["property", _ty, name] => {
                if in_vertex {
                    props.push(name.to_string());
                }
            }
            ["end_header"] => {
                header_done = true;
                break;
            }
            _ => return Err(err(n, format!("unexpected header line '{line}'"))),
        }
    }
    if !header_done {
        return Err(err(0, "missing end_header".into()));
    }
    let count = count.ok_or_else(|| err(0, "no vertex element".into()))?;
    let find = |name: &str| props.iter().position(|p| p == name);
    let column = |name: &str| find(name).ok_or_else(|| err(0, format!("missing property '{name}'")));
    let (ix, iy, iz, ii) = (column("x")?, column("y")?, column("z")?, column("intensity")?);
    let iclass = find("class");

    let mut points = Vec::with_capacity(count);
    for (n, line) in lines {
        if points.len() == count {
            if line.is_empty() {
                continue;
            }
            return Err(err(n, "more vertices than declared".into()));
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != props.len() {
            return Err(err(n, format!("expected {} values, found {}", props.len(), fields.len())));
        }
        let num = |i: usize| -> Result<f64, GridError> {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(n, format!("bad number '{}'", fields[i])))
        };
        let mut p = LidarPoint::new(num(ix)?, num(iy)?, num(iz)?, num(ii)?);
        if let Some(ic) = iclass {
            let c: u8 = fields[ic]
                .parse()
                .map_err(|_| err(n, format!("bad class '{}'", fields[ic])))?;
            if c != UNLABELLED {
                if c >= NUM_CLASSES {
                    return Err(err(n, format!("class {c} out of range")));
                }
                p.class = Some(c);
            }
        }
        points.push(p);
    }
    if points.len() != count {
        return Err(err(0, format!("declared {count} vertices, found {}", points.len())));
    }
    Ok(points)
}

/// ASCII PLY text for `points`, with a class column (255 = unlabelled).
pub fn write_ply(points: &[LidarPoint]) -> String {
    let mut s = String::with_capacity(64 * points.len() + 200);
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", points.len());
    s.push_str(
        "property float x\nproperty float y\nproperty float z\nproperty float intensity\n\
         property uchar class\nend_header\n",
    );
    for p in points {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            p.x,
            p.y,
            p.z,
            p.intensity,
            p.class.unwrap_or(UNLABELLED)
        );
    }
    s
}

pub fn save_ply(path: &Path, points: &[LidarPoint]) -> Result<(), GridError> {
    Ok(write_atomic_str(path, &write_ply(points))?)
}

pub fn load_ply(path: &Path) -> Result<Vec<LidarPoint>, GridError> {
    read_ply(&std::fs::read_to_string(path)?)
}

pub fn encode_grid(grid: &LayeredGrid) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * grid.data.len() + grid.occupancy.len());
    out.extend_from_slice(GRID_MAGIC);
    out.extend_from_slice(&(grid.rows as u32).to_le_bytes());
    out.extend_from_slice(&(grid.cols as u32).to_le_bytes());
    out.extend_from_slice(&(CHANNELS as u32).to_le_bytes());
    for v in &grid.data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(grid.occupancy.iter().map(|&o| o as u8));
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<LayeredGrid, GridError> {
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8], GridError> {
        let s = bytes.get(pos..pos + n).ok_or(GridError::Truncated)?;
        pos += n;
        Ok(s)
    };
    if take(4)? != GRID_MAGIC {
        return Err(GridError::Format("bad magic".into()));
    }
    let mut u32_at = || -> Result<usize, GridError> {
        Ok(u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize)
    };
    let (rows, cols, channels) = (u32_at()?, u32_at()?, u32_at()?);
    if channels != CHANNELS {
        return Err(GridError::Format(format!("expected {CHANNELS} channels, found {channels}")));
    }
    let cells = rows
        .checked_mul(cols)
        .ok_or_else(|| GridError::Format("grid dimensions overflow".into()))?;
    let body = cells * (8 * CHANNELS + 1);
    let rest = &bytes[16..];
    if rest.len() < body {
        return Err(GridError::Truncated);
    }
    if rest.len() > body {
        return Err(GridError::Format("trailing bytes".into()));
    }
    let (values, occ) = rest.split_at(8 * CHANNELS * cells);
    let data: Vec<f64> = values
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(GridError::Format("non-finite value".into()));
    }
    let occupancy = occ
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(GridError::Format(format!("occupancy byte {b}"))),
        })
        .collect::<Result<Vec<bool>, _>>()?;
    Ok(LayeredGrid {
        rows,
        cols,
        data,
        occupancy,
    })
}

pub fn save_grid(path: &Path, grid: &LayeredGrid) -> Result<(), GridError> {
    Ok(write_atomic(path, &encode_grid(grid))?)
}

pub fn load_grid(path: &Path) -> Result<LayeredGrid, GridError> {
    decode_grid(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_grid() -> LayeredGrid {
        let (rows, cols) = (3, 2);
        LayeredGrid {
            rows,
            cols,
            data: (0..rows * cols * CHANNELS).map(|i| i as f64 * 0.1 - 0.7).collect(),
            occupancy: (0..rows * cols).map(|i| i % 3 == 0).collect(),
        }
    }

    #[test]
    fn grid_round_trip_is_bitwise() {
        let g = sample_grid();
        let bytes = encode_grid(&g);
        assert_eq!(&bytes[..4], b"CMLG");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(decode_grid(&bytes).unwrap(), g);
    }

    #[test]
    fn grid_truncation_and_magic_are_reported() {
        let bytes = encode_grid(&sample_grid());
        for cut in [0, 3, 10, 16, bytes.len() - 1] {
            assert!(matches!(decode_grid(&bytes[..cut]), Err(GridError::Truncated)), "cut {cut}");
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode_grid(&bad), Err(GridError::Format(_))));
    }

    #[test]
    fn ply_round_trip_keeps_labels() {
        let pts = vec![
            LidarPoint::new(1.5, -0.25, 0.125, 80.0).with_class(2),
            LidarPoint::new(3.0, 2.0, -0.5, 30.0),
        ];
        assert_eq!(read_ply(&write_ply(&pts)).unwrap(), pts);
    }

    #[test]
    fn ply_without_class_column_is_unlabelled() {
        let text = "ply\nformat ascii 1.0\ncomment test\nelement vertex 2\nproperty float x\n\
                    property float y\nproperty float z\nproperty float intensity\nend_header\n\
                    1 2 3 4\n5 6 7 8\n";
        let pts = read_ply(text).unwrap();
        assert_eq!(pts.len(), 2);
        assert!(pts.iter().all(|p| p.class.is_none()));
        assert_eq!(pts[1].intensity, 8.0);
    }

    #[test]
    fn malformed_ply_names_the_line() {
        let text = "ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\n\
                    property float z\nproperty float intensity\nend_header\n1 2 oops 4\n";
        match read_ply(text) {
            Err(GridError::Ply { line, .. }) => assert_eq!(line, 9),
            other => panic!("{other:?}"),
        }
        assert!(read_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
        let short = "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
                     property float z\nproperty float intensity\nend_header\n1 2 3 4\n";
        assert!(read_ply(short).is_err());
    }
}
