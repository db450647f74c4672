use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;
use crate::gridmap::{CLASS_NON_TRAVERSABLE, CLASS_OBSTACLE, CLASS_TRAVERSABLE, NUM_CLASSES};
use crate::io_util::write_atomic_str;

/// Axis-aligned world rectangle, meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Extent {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

/// Planar pose: position in meters, heading in radians from +x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

/// Gaussian bump `height * exp(-d^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hill {
    pub x: f64,
    pub y: f64,
    pub height: f64,
    pub sigma: f64,
}

/// Incline along +x rising by `rise` over `[x_start, x_start + length]`,
/// level beyond.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ramp {
    pub x_start: f64,
    pub length: f64,
    pub rise: f64,
}

/// Disc of a given class. Obstacles also carry a height above the terrain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disc {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
    #[serde(default)]
    pub height: f64,
}

impl Disc {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        (x - self.x).powi(2) + (y - self.y).powi(2) <= self.radius * self.radius
    }
}

/// Reflectance per class: mean and standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityModel {
    pub mean: [f64; NUM_CLASSES as usize],
    pub std: [f64; NUM_CLASSES as usize],
}

impl Default for IntensityModel {
    fn default() -> Self {
        Self {
            mean: [0.0, 30.0, 80.0, 150.0],
            std: [0.0, 5.0, 10.0, 15.0],
        }
    }
}

/// A complete synthetic world. Terrain is hills plus an optional ramp;
/// obstacles stand on it as flat-topped cylinders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub seed: u64,
    pub difficulty: f64,
    pub extent: Extent,
    pub start: Pose,
    pub goal: [f64; 2],
    pub hills: Vec<Hill>,
    pub ramp: Option<Ramp>,
    /// Non-traversable ground.
    pub patches: Vec<Disc>,
    pub obstacles: Vec<Disc>,
    pub intensity: IntensityModel,
}

/// Minimum obstacle height above the terrain.
pub const MIN_OBSTACLE_HEIGHT: f64 = 1.0;
const MAX_OBSTACLES: f64 = 12.0;
const MAX_PATCHES: f64 = 6.0;
const MAX_HILLS: f64 = 6.0;
/// Free radius around the start and the goal.
const CLEARANCE: f64 = 2.5;
/// Rejection-sampling budget per disc family; dense requests may place fewer.
const PLACEMENT_ATTEMPTS: usize = 2000;

impl Scene {
    /// Deterministic scene for `(seed, difficulty)`. Difficulty in `[0, 1]`
    /// scales obstacle and patch counts and terrain relief; zero gives a flat
    /// empty field.
    pub fn generate(seed: u64, difficulty: f64) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&difficulty) {
            return Err(SimError::Scene(format!("difficulty {difficulty} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5CE4_E000);
        let extent = Extent {
            x_min: -5.0,
            x_max: 35.0,
            y_min: -12.0,
            y_max: 12.0,
        };
        let start = Pose {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        };
        let goal = [28.0, rng.random_range(-4.0..4.0)];
        let count = |max: f64| (max * difficulty).round() as usize;

        let hills = (0..count(MAX_HILLS))
            .map(|_| Hill {
                x: rng.random_range(3.0..32.0),
                y: rng.random_range(-10.0..10.0),
                height: rng.random_range(0.2..1.2) * difficulty * 2.0,
                sigma: rng.random_range(1.5..4.0),
            })
            .collect();
        let ramp = (difficulty > 0.0 && rng.random_bool(difficulty)).then(|| Ramp {
            x_start: rng.random_range(6.0..20.0),
            length: rng.random_range(4.0..8.0),
            rise: rng.random_range(0.3..1.5) * difficulty,
        });
        let clear = |x: f64, y: f64, r: f64| {
            (x - start.x).hypot(y - start.y) > r + CLEARANCE && (x - goal[0]).hypot(y - goal[1]) > r + CLEARANCE
        };
        let mut patches = Vec::new();
        let mut attempts = 0;
        while patches.len() < count(MAX_PATCHES) && attempts < PLACEMENT_ATTEMPTS {
            attempts += 1;
            let d = Disc {
                x: rng.random_range(3.0..30.0),
                y: rng.random_range(-8.0..8.0),
                radius: rng.random_range(0.8..2.5),
                height: 0.0,
            };
            if clear(d.x, d.y, d.radius) {
                patches.push(d);
            }
        }
        let mut obstacles: Vec<Disc> = Vec::new();
        attempts = 0;
        while obstacles.len() < count(MAX_OBSTACLES) && attempts < PLACEMENT_ATTEMPTS {
            attempts += 1;
            let d = Disc {
                x: rng.random_range(4.0..26.0),
                y: rng.random_range(-6.0..6.0),
                radius: rng.random_range(0.4..1.0),
                height: rng.random_range(MIN_OBSTACLE_HEIGHT..1.6),
            };
            // Keep a drivable gap between obstacles.
            let spaced = obstacles
                .iter()
                .all(|o| (o.x - d.x).hypot(o.y - d.y) > o.radius + d.radius + 1.5);
            if clear(d.x, d.y, d.radius) && spaced {
                obstacles.push(d);
            }
        }
        Ok(Self {
            seed,
            difficulty,
            extent,
            start,
            goal,
            hills,
            ramp,
            patches,
            obstacles,
            intensity: IntensityModel::default(),
        })
    }

    /// Ground height without obstacles.
    pub fn terrain_height(&self, x: f64, y: f64) -> f64 {
        let hills: f64 = self
            .hills
            .iter()
            .map(|h| h.height * (-((x - h.x).powi(2) + (y - h.y).powi(2)) / (2.0 * h.sigma * h.sigma)).exp())
            .sum();
        let ramp = self
            .ramp
            .map_or(0.0, |r| r.rise * ((x - r.x_start) / r.length).clamp(0.0, 1.0));
        hills + ramp
    }

    /// Terrain gradient `(dz/dx, dz/dy)`.
    pub fn terrain_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut gx, mut gy) = (0.0, 0.0);
        for h in &self.hills {
            let (dx, dy) = (x - h.x, y - h.y);
            let s2 = h.sigma * h.sigma;
            let g = h.height * (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / s2;
            gx -= g * dx;
            gy -= g * dy;
        }
        if let Some(r) = self.ramp {
            if x > r.x_start && x < r.x_start + r.length {
                gx += r.rise / r.length;
            }
        }
        (gx, gy)
    }

    /// Terrain inclination in radians.
    pub fn slope_at(&self, x: f64, y: f64) -> f64 {
        let (gx, gy) = self.terrain_gradient(x, y);
        gx.hypot(gy).atan()
    }

    pub fn obstacle_at(&self, x: f64, y: f64) -> Option<&Disc> {
        self.obstacles.iter().find(|o| o.contains(x, y))
    }

    /// Surface height including obstacle tops.
    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.terrain_height(x, y) + self.obstacle_at(x, y).map_or(0.0, |o| o.height)
    }

    pub fn class_at(&self, x: f64, y: f64) -> u8 {
        if self.obstacle_at(x, y).is_some() {
            CLASS_OBSTACLE
        } else if self.patches.iter().any(|p| p.contains(x, y)) {
            CLASS_NON_TRAVERSABLE
        } else {
            CLASS_TRAVERSABLE
        }
    }

    /// The scene reflected across the x axis.
    pub fn mirrored(&self) -> Self {
        let flip = |d: &Disc| Disc { y: -d.y, ..*d };
        Self {
            extent: Extent {
                y_min: -self.extent.y_max,
                y_max: -self.extent.y_min,
                ..self.extent
            },
            start: Pose {
                y: -self.start.y,
                theta: -self.start.theta,
                ..self.start
            },
            goal: [self.goal[0], -self.goal[1]],
            hills: self.hills.iter().map(|h| Hill { y: -h.y, ..*h }).collect(),
            patches: self.patches.iter().map(flip).collect(),
            obstacles: self.obstacles.iter().map(flip).collect(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let e = &self.extent;
        let bad = |m: String| Err(SimError::Scene(m));
        if !(e.x_min < e.x_max && e.y_min < e.y_max) {
            return bad(format!("empty extent {e:?}"));
        }
        if self.hills.iter().any(|h| !(h.sigma > 0.0) || !h.height.is_finite()) {
            return bad("hills need a positive sigma and finite height".into());
        }
        if let Some(r) = self.ramp {
            if !(r.length > 0.0) {
                return bad("ramp length must be positive".into());
            }
        }
        if self.patches.iter().chain(&self.obstacles).any(|d| !(d.radius > 0.0)) {
            return bad("disc radius must be positive".into());
        }
        if self.obstacles.iter().any(|o| o.height < MIN_OBSTACLE_HEIGHT) {
            return bad(format!("obstacles must stand at least {MIN_OBSTACLE_HEIGHT} m tall"));
        }
        if self.intensity.std.iter().any(|s| !(*s >= 0.0)) {
            return bad("intensity std must be non-negative".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let scene: Scene = serde_json::from_str(text).map_err(|e| SimError::Scene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn save(&self, path: &Path) -> Result<(), SimError> {
        Ok(write_atomic_str(path, &self.to_json())?)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Missing(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        assert_eq!(Scene::generate(4, 0.5).unwrap(), Scene::generate(4, 0.5).unwrap());
        assert_ne!(Scene::generate(4, 0.5).unwrap(), Scene::generate(5, 0.5).unwrap());
    }

    #[test]
    fn zero_difficulty_is_flat_and_empty() {
        let s = Scene::generate(11, 0.0).unwrap();
        assert!(s.obstacles.is_empty() && s.hills.is_empty() && s.ramp.is_none());
        assert_eq!(s.height(10.0, 3.0), 0.0);
        assert_eq!(s.class_at(10.0, 3.0), CLASS_TRAVERSABLE);
    }

    #[test]
    fn obstacle_count_grows_with_difficulty() {
        for seed in 0..5 {
            let n = |d| Scene::generate(seed, d).unwrap().obstacles.len();
            assert!(n(0.0) < n(0.5) && n(0.5) < n(1.0));
        }
    }

    #[test]
    fn obstacles_rise_at_least_a_meter() {
        let s = Scene::generate(2, 1.0).unwrap();
        for o in &s.obstacles {
            assert!(s.height(o.x, o.y) - s.terrain_height(o.x, o.y) >= MIN_OBSTACLE_HEIGHT);
            assert_eq!(s.class_at(o.x, o.y), CLASS_OBSTACLE);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let s = Scene::generate(8, 1.0).unwrap();
        let h = 1e-6;
        for (x, y) in [(5.0, 1.0), (12.3, -2.2), (20.0, 4.0)] {
            let (gx, gy) = s.terrain_gradient(x, y);
            let fx = (s.terrain_height(x + h, y) - s.terrain_height(x - h, y)) / (2.0 * h);
            let fy = (s.terrain_height(x, y + h) - s.terrain_height(x, y - h)) / (2.0 * h);
            assert!((gx - fx).abs() < 1e-6 && (gy - fy).abs() < 1e-6);
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let s = Scene::generate(3, 0.7).unwrap();
        assert_eq!(Scene::from_json(&s.to_json()).unwrap(), s);
        let mut v: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        v["bogus"] = serde_json::json!(1);
        assert!(Scene::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn mirror_reflects_every_field() {
        let s = Scene::generate(6, 0.8).unwrap();
        let m = s.mirrored();
        for (x, y) in [(7.0, 2.0), (15.5, -3.25), (22.0, 0.7)] {
            assert_eq!(s.height(x, y), m.height(x, -y));
            assert_eq!(s.class_at(x, y), m.class_at(x, -y));
            assert_eq!(s.slope_at(x, y), m.slope_at(x, -y));
        }
        assert_eq!(m.mirrored(), s);
    }
}
