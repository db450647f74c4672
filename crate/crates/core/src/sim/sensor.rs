use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Pose, Scene};
use crate::gridmap::{CameraModel, GridSpec, LidarPoint, SemanticMask, CLASS_SKY};

/// Vehicle-frame point (x forward, y left, z up from the ground under the
/// vehicle) to world coordinates.
pub fn vehicle_to_world(scene: &Scene, pose: &Pose, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = pose.theta.sin_cos();
    [
        pose.x + c * p[0] - s * p[1],
        pose.y + s * p[0] + c * p[1],
        p[2] + scene.terrain_height(pose.x, pose.y),
    ]
}

/// World point to the vehicle frame.
pub fn world_to_vehicle(scene: &Scene, pose: &Pose, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = pose.theta.sin_cos();
    let (dx, dy) = (p[0] - pose.x, p[1] - pose.y);
    [c * dx + s * dy, -s * dx + c * dy, p[2] - scene.terrain_height(pose.x, pose.y)]
}

/// A scene with its ray-marching raster.
pub struct World {
    pub scene: Scene,
    pub raster: SceneRaster,
}

impl World {
    pub fn new(scene: Scene) -> Self {
        let raster = SceneRaster::new(&scene);
        Self { scene, raster }
    }
}

/// A sampled scan with the true class of every point. The points themselves
/// are unlabelled.
#[derive(Debug, Clone)]
pub struct SampledCloud {
    pub points: Vec<LidarPoint>,
    pub truth: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LidarConfig {
    /// Returns per square meter of ground in the region of interest.
    pub density: f64,
    /// Standard deviation of the vertical noise, meters.
    pub noise_std: f64,
    /// Keep one point in four, as a 16-beam sensor would against a 64-beam one.
    pub sparse: bool,
    /// Sensor height above the ground under the vehicle, meters.
    pub mount_height: f64,
    /// Drop returns hidden from the sensor by terrain or obstacles.
    pub occlusion: bool,
}

impl Default for LidarConfig {
    fn default() -> Self {
        Self {
            density: 100.0,
            noise_std: 0.01,
            sparse: false,
            mount_height: SENSOR_HEIGHT,
            occlusion: true,
        }
    }
}

/// Height of the sensor head (LiDAR and cameras), meters.
pub const SENSOR_HEIGHT: f64 = 1.8;

/// Scan of the grid's region of interest from `pose`: uniformly placed
/// returns on the visible surface (terrain and obstacle tops), vertical
/// noise, and class-dependent intensity.
pub fn sample_pointcloud(world: &World, pose: &Pose, spec: &GridSpec, lidar: &LidarConfig, seed: u64) -> SampledCloud {
    let (scene, raster) = (&world.scene, &world.raster);
    assert!(lidar.density > 0.0, "density must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (len, half) = (spec.forward_extent(), spec.half_width());
    let n = (lidar.density * len * 2.0 * half).round() as usize;
    let noise = Normal::new(0.0, lidar.noise_std.max(0.0)).expect("finite std");
    let mut points = Vec::with_capacity(if lidar.sparse { n / 4 + 1 } else { n });
    let mut truth = Vec::with_capacity(points.capacity());
    let origin = vehicle_to_world(scene, pose, [0.0, 0.0, lidar.mount_height]);
    for i in 0..n {
        let vx = rng.random_range(0.0..len);
        let vy = rng.random_range(-half..half);
        let dz = noise.sample(&mut rng);
        let unit: f64 = StandardNormal.sample(&mut rng);
        // Every point draws the same numbers before the sparse cut, so the
        // sparse scan is exactly every fourth dense return.
        if lidar.sparse && i % 4 != 0 {
            continue;
        }
        let w = vehicle_to_world(scene, pose, [vx, vy, 0.0]);
        let surface = scene.height(w[0], w[1]);
        if lidar.occlusion && !raster.visible(origin, [w[0], w[1], surface]) {
            continue;
        }
        let class = scene.class_at(w[0], w[1]);
        let z = surface - w[2] + dz;
        let (m, s) = (scene.intensity.mean[class as usize], scene.intensity.std[class as usize]);
        let intensity = (m + s * unit).clamp(0.0, 255.0);
        points.push(LidarPoint::new(vx, vy, z, intensity));
        truth.push(class);
    }
    SampledCloud { points, truth }
}

/// Surface heights and classes sampled on a regular lattice, for fast ray
/// marching.
#[derive(Debug, Clone)]
pub struct SceneRaster {
    x0: f64,
    y0: f64,
    res: f64,
    nx: usize,
    ny: usize,
    height: Vec<f64>,
    class: Vec<u8>,
    max_height: f64,
}

/// Lattice spacing of [`SceneRaster`], meters.
pub const RASTER_RES: f64 = 0.05;
const RASTER_MARGIN: f64 = 15.0;

impl SceneRaster {
    pub fn new(scene: &Scene) -> Self {
        let e = scene.extent;
        let (x0, y0) = (e.x_min - RASTER_MARGIN, e.y_min - RASTER_MARGIN);
        let nx = ((e.x_max - e.x_min + 2.0 * RASTER_MARGIN) / RASTER_RES).ceil() as usize;
        let ny = ((e.y_max - e.y_min + 2.0 * RASTER_MARGIN) / RASTER_RES).ceil() as usize;
        let mut height = Vec::with_capacity(nx * ny);
        let mut class = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let (x, y) = (x0 + (ix as f64 + 0.5) * RASTER_RES, y0 + (iy as f64 + 0.5) * RASTER_RES);
                height.push(scene.height(x, y));
                class.push(scene.class_at(x, y));
            }
        }
        let max_height = height.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            max_height,
            x0,
            y0,
            res: RASTER_RES,
            nx,
            ny,
            height,
            class,
        }
    }

    fn lookup(&self, x: f64, y: f64) -> Option<usize> {
        let ix = ((x - self.x0) / self.res).floor();
        let iy = ((y - self.y0) / self.res).floor();
        (ix >= 0.0 && iy >= 0.0 && (ix as usize) < self.nx && (iy as usize) < self.ny)
            .then(|| ix as usize * self.ny + iy as usize)
    }

    /// Whether the segment from `from` to `to` clears the surface, ignoring
    /// the last few centimeters where it meets the target.
    pub fn visible(&self, from: [f64; 3], to: [f64; 3]) -> bool {
        let d = [to[0] - from[0], to[1] - from[1], to[2] - from[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let mut t = MARCH_STEP;
        while t < len - VISIBILITY_SLACK {
            let f = t / len;
            let p = [from[0] + f * d[0], from[1] + f * d[1], from[2] + f * d[2]];
            if let Some(i) = self.lookup(p[0], p[1]) {
                if p[2] < self.height[i] - 1e-3 {
                    return false;
                }
            }
            t += MARCH_STEP;
        }
        true
    }

    /// Class of the first surface along a world ray, or sky.
    pub fn cast(&self, origin: [f64; 3], dir: [f64; 3], max_range: f64, step: f64) -> u8 {
        let norm = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
        let d = [dir[0] / norm, dir[1] / norm, dir[2] / norm];
        let at = |t: f64| [origin[0] + t * d[0], origin[1] + t * d[1], origin[2] + t * d[2]];
        let below = |p: [f64; 3]| self.lookup(p[0], p[1]).map(|i| (p[2] <= self.height[i], i));
        let mut t = step;
        while t <= max_range {
            let p = at(t);
            if d[2] >= 0.0 && p[2] > self.max_height {
                return CLASS_SKY;
            }
            match below(p) {
                None => return CLASS_SKY,
                Some((true, _)) => {
                    // Narrow the crossing down to raster scale.
                    let (mut lo, mut hi) = (t - step, t);
                    while hi - lo > self.res / 2.0 {
                        let mid = 0.5 * (lo + hi);
                        match below(at(mid)) {
                            Some((true, _)) => hi = mid,
                            _ => lo = mid,
                        }
                    }
                    return below(at(hi)).map_or(CLASS_SKY, |(_, i)| self.class[i]);
                }
                _ => {}
            }
            t += step;
        }
        CLASS_SKY
    }
}

/// Three cameras on the sensor head, facing ahead and 60 degrees to either
/// side, pitched 30 degrees down, 64x48 pixels with a 70 degree horizontal
/// field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraRig {
    pub cameras: Vec<CameraModel>,
}

impl Default for CameraRig {
    fn default() -> Self {
        let cam = |yaw: f64| CameraModel::mounted([0.0, 0.0, SENSOR_HEIGHT], yaw.to_radians(), 30f64.to_radians(), 46.0, 46.0, 64, 48);
        Self {
            cameras: vec![cam(60.0), cam(0.0), cam(-60.0)],
        }
    }
}

impl CameraRig {
    /// Index of the forward camera in the default rig.
    pub const FRONT: usize = 1;

    /// Copy with camera `index` physically turned by `yaw_error` radians.
    pub fn with_yaw_error(&self, index: usize, yaw_error: f64) -> Self {
        let mut out = self.clone();
        out.cameras[index] = out.cameras[index].with_yaw_offset(yaw_error);
        out
    }
}

/// Longest ray, meters.
const MAX_RANGE: f64 = 20.0;
/// Ray-march step, meters. Finer than the smallest obstacle; crossings are
/// then refined by bisection.
const MARCH_STEP: f64 = 0.1;
/// Stretch of a visibility ray next to its target that is not tested, meters.
const VISIBILITY_SLACK: f64 = 0.1;

/// Per-pixel class seen by `camera` from `pose`, sampled at pixel centers.
pub fn render_mask(raster: &SceneRaster, scene: &Scene, pose: &Pose, camera: &CameraModel) -> SemanticMask {
    let origin = vehicle_to_world(scene, pose, camera.center());
    let (s, c) = pose.theta.sin_cos();
    let mut classes = Vec::with_capacity(camera.width * camera.height);
    for v in 0..camera.height {
        for u in 0..camera.width {
            let r = camera.ray(u as f64 + 0.5, v as f64 + 0.5);
            let dir = [c * r[0] - s * r[1], s * r[0] + c * r[1], r[2]];
            classes.push(raster.cast(origin, dir, MAX_RANGE, MARCH_STEP));
        }
    }
    SemanticMask::new(camera.width, camera.height, classes).expect("classes come from the scene")
}
