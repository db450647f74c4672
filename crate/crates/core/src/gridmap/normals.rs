use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::{KdTree3, VoxelGrid};

/// Neighbour cap for the plane fit.
pub const MAX_NEIGHBOURS: usize = 10;
/// Fewer neighbours than this (the voxel itself included) gives the flat
/// fallback normal.
const MIN_NEIGHBOURS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurfaceNormal {
    /// Unit normal with non-negative z.
    pub normal: [f64; 3],
    /// Angle between the normal and +z, in `[0, pi/2]`.
    pub slope: f64,
    /// Set when too few neighbours were found and `(0, 0, 1)` was used.
    pub fallback: bool,
}

impl SurfaceNormal {
    pub const FLAT: SurfaceNormal = SurfaceNormal {
        normal: [0.0, 0.0, 1.0],
        slope: 0.0,
        fallback: true,
    };

    pub fn from_normal(n: [f64; 3]) -> Self {
        Self {
            normal: n,
            slope: n[2].clamp(0.0, 1.0).acos(),
            fallback: false,
        }
    }
}

/// Normal of the best-fit plane through `points`: the eigenvector of the
/// smallest covariance eigenvalue, oriented upward.
pub fn plane_normal(points: &[[f64; 3]]) -> [f64; 3] {
    let n = points.len() as f64;
    let centroid = points
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + Vector3::from(*p))
        / n;
    let cov = points.iter().fold(Matrix3::zeros(), |acc, p| {
        let d = Vector3::from(*p) - centroid;
        acc + d * d.transpose()
    }) / n;
    let eig = SymmetricEigen::new(cov);
    let (imin, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &v)| if v < best.1 { (i, v) } else { best });
    let mut v = eig.eigenvectors.column(imin).normalize();
    if v.z < 0.0 {
        v = -v;
    }
    [v.x, v.y, v.z]
}

/// One normal per voxel, in `vox.voxels` order. Neighbours are voxel mean
/// positions within twice the voxel size, nearest ten at most.
pub fn estimate_normals(vox: &VoxelGrid) -> Vec<SurfaceNormal> {
    let centers: Vec<[f64; 3]> = vox.voxels.iter().map(|v| v.mean()).collect();
    let tree = KdTree3::build(centers.clone());
    let radius = 2.0 * vox.voxel_size;
    centers
        .iter()
        .map(|&c| {
            let hood = tree.within(c, radius, MAX_NEIGHBOURS);
            if hood.len() < MIN_NEIGHBOURS {
                return SurfaceNormal::FLAT;
            }
            let pts: Vec<[f64; 3]> = hood.iter().map(|&i| tree.point(i)).collect();
            SurfaceNormal::from_normal(plane_normal(&pts))
        })
        .collect()
}
