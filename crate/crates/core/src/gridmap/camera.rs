use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{GridError, LidarPoint, NUM_CLASSES};

/// Pinhole camera with a rigid vehicle-to-camera transform.
///
/// Camera axes follow the usual optical convention: +z along the optical
/// axis, +x to the image right, +y down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// Rows of the rotation taking vehicle-frame vectors to camera frame.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl CameraModel {
    /// Camera at `position` (vehicle frame) looking along `yaw` (left
    /// positive) and pitched down by `pitch`, both in radians.
    #[allow(clippy::too_many_arguments)]
    pub fn mounted(
        position: [f64; 3],
        yaw: f64,
        pitch: f64,
        fx: f64,
        fy: f64,
        width: usize,
        height: usize,
    ) -> Self {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let forward = Vector3::new(cp * cy, cp * sy, -sp);
        let right = Vector3::new(sy, -cy, 0.0);
        let down = forward.cross(&right);
        let r = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let t = -(r * Vector3::from(position));
        Self {
            fx,
            fy,
            cx: width as f64 / 2.0,
            cy: height as f64 / 2.0,
            width,
            height,
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
        }
    }

    fn rotation_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GridError::Camera(format!("focal lengths must be positive ({}, {})", self.fx, self.fy)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(GridError::Camera("empty image".into()));
        }
        let r = self.rotation_matrix();
        let err = (r * r.transpose() - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(GridError::Camera(format!("rotation is not orthonormal (error {err:e})")));
        }
        Ok(())
    }

    /// Vehicle-frame point to camera frame.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation_matrix() * Vector3::from(p) + Vector3::from(self.translation);
        [v.x, v.y, v.z]
    }

    /// Camera center in the vehicle frame.
    pub fn center(&self) -> [f64; 3] {
        let c = -(self.rotation_matrix().transpose() * Vector3::from(self.translation));
        [c.x, c.y, c.z]
    }

    /// Vehicle-frame ray direction through continuous pixel `(u, v)`.
    pub fn ray(&self, u: f64, v: f64) -> [f64; 3] {
        let d = Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0);
        let w = self.rotation_matrix().transpose() * d;
        [w.x, w.y, w.z]
    }

    /// Continuous pixel coordinates `(u, v)` of a point in front of the
    /// camera and inside the image.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let [x, y, z] = self.to_camera(p);
        if z <= 0.0 {
            return None;
        }
        let u = self.fx * x / z + self.cx;
        let v = self.fy * y / z + self.cy;
        let inside = u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64;
        inside.then_some((u, v))
    }

    /// Same camera with its yaw rotated by `delta` about the vehicle z axis
    /// (camera center unchanged).
    pub fn with_yaw_offset(&self, delta: f64) -> Self {
        let center = Vector3::from(self.center());
        let (s, c) = delta.sin_cos();
        let rz = Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0);
        // New camera axes are the old ones rotated by rz in the vehicle frame.
        let r = self.rotation_matrix() * rz.transpose();
        let t = -(r * center);
        Self {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t.x, t.y, t.z],
            ..self.clone()
        }
    }
}

/// Per-pixel class image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticMask {
    pub width: usize,
    pub height: usize,
    pub classes: Vec<u8>,
}

impl SemanticMask {
    pub fn new(width: usize, height: usize, classes: Vec<u8>) -> Result<Self, GridError> {
        if classes.len() != width * height {
            return Err(GridError::Mask(format!(
                "{} pixels for a {width}x{height} mask",
                classes.len()
            )));
        }
        if let Some(bad) = classes.iter().find(|&&c| c >= NUM_CLASSES) {
            return Err(GridError::Mask(format!("class {bad} out of range")));
        }
        Ok(Self {
            width,
            height,
            classes,
        })
    }

    pub fn filled(width: usize, height: usize, class: u8) -> Self {
        Self {
            width,
            height,
            classes: vec![class; width * height],
        }
    }

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.classes[row * self.width + col]
    }
}

/// Label each point with the highest class any camera sees it as. Points no
/// camera sees keep `class = None`.
pub fn project_semantics(
    points: &[LidarPoint],
    views: &[(CameraModel, SemanticMask)],
) -> Result<Vec<LidarPoint>, GridError> {
    for (cam, mask) in views {
        cam.validate()?;
        if (cam.width, cam.height) != (mask.width, mask.height) {
            return Err(GridError::Mask(format!(
                "mask {}x{} does not match camera {}x{}",
                mask.width, mask.height, cam.width, cam.height
            )));
        }
    }
    Ok(points
        .iter()
        .map(|p| {
            let class = views
                .iter()
                .filter_map(|(cam, mask)| {
                    cam.project([p.x, p.y, p.z])
                        .map(|(u, v)| mask.at(v as usize, u as usize))
                })
                .max();
            LidarPoint { class, ..*p }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front_camera() -> CameraModel {
        CameraModel::mounted([0.0, 0.0, 1.0], 0.0, 0.0, 50.0, 50.0, 64, 48)
    }

    #[test]
    fn mounted_rotation_is_orthonormal() {
        for yaw in [-1.0, 0.0, 0.7] {
            CameraModel::mounted([0.2, 0.1, 1.2], yaw, 0.3, 40.0, 40.0, 32, 24)
                .validate()
                .unwrap();
        }
    }

    #[test]
    fn optical_axis_point_hits_principal_point() {
        let cam = front_camera();
        let (u, v) = cam.project([5.0, 0.0, 1.0]).unwrap();
        assert!((u - cam.cx).abs() < 1e-12 && (v - cam.cy).abs() < 1e-12);
        let mut mask = SemanticMask::filled(64, 48, 1);
        mask.classes[24 * 64 + 32] = 2;
        let out = project_semantics(&[LidarPoint::new(5.0, 0.0, 1.0, 0.0)], &[(cam, mask)]).unwrap();
        assert_eq!(out[0].class, Some(2));
    }

    #[test]
    fn points_behind_the_camera_stay_unlabelled() {
        let cam = front_camera();
        assert!(cam.project([-3.0, 0.0, 1.0]).is_none());
        let out = project_semantics(
            &[LidarPoint::new(-3.0, 0.0, 1.0, 0.0)],
            &[(cam, SemanticMask::filled(64, 48, 3))],
        )
        .unwrap();
        assert_eq!(out[0].class, None);
    }

    #[test]
    fn overlapping_cameras_take_the_maximum_class() {
        let a = front_camera();
        let b = CameraModel::mounted([0.0, 0.0, 1.0], 0.2, 0.0, 50.0, 50.0, 64, 48);
        let p = LidarPoint::new(5.0, 0.3, 1.0, 0.0);
        assert!(a.project([p.x, p.y, p.z]).is_some() && b.project([p.x, p.y, p.z]).is_some());
        let views = [(a, SemanticMask::filled(64, 48, 1)), (b, SemanticMask::filled(64, 48, 3))];
        assert_eq!(project_semantics(&[p], &views).unwrap()[0].class, Some(3));
    }

    #[test]
    fn pixel_ray_reprojects_to_its_pixel() {
        let cam = CameraModel::mounted([0.1, -0.2, 1.3], 0.4, 0.35, 45.0, 45.0, 64, 48);
        let c = cam.center();
        for (u, v) in [(0.5, 0.5), (10.25, 40.5), (63.5, 47.5)] {
            let d = cam.ray(u, v);
            let p = [c[0] + 3.0 * d[0], c[1] + 3.0 * d[1], c[2] + 3.0 * d[2]];
            let (pu, pv) = cam.project(p).unwrap();
            assert!((pu - u).abs() < 1e-9 && (pv - v).abs() < 1e-9);
        }
    }

    #[test]
    fn yaw_offset_turns_the_view() {
        let cam = front_camera();
        let turned = cam.with_yaw_offset(5f64.to_radians());
        turned.validate().unwrap();
        // A point straight ahead now appears right of center (camera looks left).
        let (u, _) = turned.project([5.0, 0.0, 1.0]).unwrap();
        assert!(u > cam.cx);
        assert_eq!(turned.center(), cam.center());
    }

    #[test]
    fn bad_masks_are_rejected() {
        assert!(SemanticMask::new(2, 2, vec![0, 1, 2]).is_err());
        assert!(SemanticMask::new(2, 1, vec![0, 4]).is_err());
    }
}
