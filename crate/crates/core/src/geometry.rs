//! Planar indoor world: outer walls, axis-aligned rectangular obstacles and
//! the spawn-point set, plus the exact ray and clearance queries used for
//! lidar, collision and goal checks.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::DEFAULT_VEHICLE_RADIUS;

/// Extra margin beyond the vehicle radius that every spawn point must keep
/// from walls and obstacles.
pub const SPAWN_MARGIN: f64 = 0.5;

/// Required clearance of a spawn point under the default vehicle radius.
pub const SPAWN_CLEARANCE: f64 = DEFAULT_VEHICLE_RADIUS + SPAWN_MARGIN;

/// Minimum start/goal separation in meters.
pub const DEFAULT_MIN_SEPARATION: f64 = 6.0;

const MAX_SAMPLE_ATTEMPTS: usize = 10_000;

pub const EMPTY_WORLD_JSON: &str = include_str!("../../../worlds/empty.json");
pub const OBSTACLE_WORLD_JSON: &str = include_str!("../../../worlds/obstacles.json");

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("malformed world file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("degenerate rect: {element} has min ({min}) not strictly below max ({max})")]
    DegenerateRect { element: String, min: Vec2, max: Vec2 },
    #[error("non-finite coordinate in {element}")]
    NonFinite { element: String },
    #[error("obstacle {index} extends outside the world bounds")]
    ObstacleOutOfBounds { index: usize },
    #[error("spawn point {index} at ({point}) has clearance {clearance:.3} m, needs at least {required} m")]
    SpawnClearance {
        index: usize,
        point: Vec2,
        clearance: f64,
        required: f64,
    },
    #[error("world {name:?} has {count} usable spawn points, needs at least 2")]
    TooFewSpawnPoints { name: String, count: usize },
    #[error("world {name:?}: no start/goal pair is at least {min_separation} m apart")]
    Sampling { name: String, min_separation: f64 },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Self) -> f64 {
        (self - other).norm()
    }

    /// Bearing of this vector, counterclockwise from +x.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}, {}", self.x, self.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// Axis-aligned rectangle. Used both for the arena bounds and for obstacles.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub const fn new(min: Vec2, max: Vec2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    /// Closed containment test (boundary counts as inside).
    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    pub fn contains_strictly(&self, p: Vec2) -> bool {
        p.x > self.min.x && p.x < self.max.x && p.y > self.min.y && p.y < self.max.y
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.contains(other.min) && self.contains(other.max)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    /// Euclidean distance from an exterior point; 0 on or inside the rect.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }

    /// Distance from `p` to the nearest edge, for a point inside the rect.
    fn interior_depth(&self, p: Vec2) -> f64 {
        (p.x - self.min.x)
            .min(self.max.x - p.x)
            .min(p.y - self.min.y)
            .min(self.max.y - p.y)
    }

    /// Entry distance of a ray into this rect, if it hits ahead of the origin.
    fn ray_entry(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let (mut t_near, mut t_far) = (f64::NEG_INFINITY, f64::INFINITY);
        for (o, d, lo, hi) in [
            (origin.x, dir.x, self.min.x, self.max.x),
            (origin.y, dir.y, self.min.y, self.max.y),
        ] {
            if d == 0.0 {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let (t0, t1) = ((lo - o) / d, (hi - o) / d);
            let (t0, t1) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
        }
        (t_near <= t_far && t_near > 0.0).then_some(t_near)
    }

    /// Whether the closed segment `p0 -> p1` touches the closed rect
    /// (Liang-Barsky clipping).
    fn intersects_segment(&self, p0: Vec2, p1: Vec2) -> bool {
        let d = p1 - p0;
        let (mut t0, mut t1) = (0.0_f64, 1.0_f64);
        for (p, q) in [
            (-d.x, p0.x - self.min.x),
            (d.x, self.max.x - p0.x),
            (-d.y, p0.y - self.min.y),
            (d.y, self.max.y - p0.y),
        ] {
            if p == 0.0 {
                if q < 0.0 {
                    return false;
                }
            } else {
                let r = q / p;
                if p < 0.0 {
                    t0 = t0.max(r);
                } else {
                    t1 = t1.min(r);
                }
                if t0 > t1 {
                    return false;
                }
            }
        }
        true
    }

    fn validate(&self, element: &str) -> Result<(), WorldError> {
        if !self.min.is_finite() || !self.max.is_finite() {
            return Err(WorldError::NonFinite {
                element: element.to_string(),
            });
        }
        if !(self.min.x < self.max.x && self.min.y < self.max.y) {
            return Err(WorldError::DegenerateRect {
                element: element.to_string(),
                min: self.min,
                max: self.max,
            });
        }
        Ok(())
    }
}

/// Distance from `p` to the closed segment `a -> b`.
pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// On-disk layout of a world file. `spawn_points` may be omitted, in which
/// case the default grid is generated and pruned.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorldFile {
    name: String,
    bounds: Rect,
    #[serde(default)]
    obstacles: Vec<Rect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spawn_points: Option<Vec<Vec2>>,
}

/// A validated, immutable world.
#[derive(Clone, Debug, PartialEq)]
pub struct WorldSpec {
    name: String,
    bounds: Rect,
    obstacles: Vec<Rect>,
    spawn_points: Vec<Vec2>,
}

impl WorldSpec {
    /// Builds and validates a world. With `spawn_points = None` the default
    /// 5 x 5 grid is generated and every point lacking clearance is dropped;
    /// explicit spawn points are instead required to satisfy the clearance.
    pub fn new(
        name: impl Into<String>,
        bounds: Rect,
        obstacles: Vec<Rect>,
        spawn_points: Option<Vec<Vec2>>,
    ) -> Result<Self, WorldError> {
        let name = name.into();
        bounds.validate("bounds")?;
        for (i, obstacle) in obstacles.iter().enumerate() {
            obstacle.validate(&format!("obstacle {i}"))?;
            if !bounds.contains_rect(obstacle) {
                return Err(WorldError::ObstacleOutOfBounds { index: i });
            }
        }
        let mut world = Self {
            name,
            bounds,
            obstacles,
            spawn_points: Vec::new(),
        };
        world.spawn_points = match spawn_points {
            Some(points) => {
                for (index, &point) in points.iter().enumerate() {
                    if !point.is_finite() {
                        return Err(WorldError::NonFinite {
                            element: format!("spawn point {index}"),
                        });
                    }
                    let clearance = world.spawn_clearance(point);
                    if clearance < SPAWN_CLEARANCE {
                        return Err(WorldError::SpawnClearance {
                            index,
                            point,
                            clearance,
                            required: SPAWN_CLEARANCE,
                        });
                    }
                }
                points
            }
            None => default_spawn_grid(&bounds)
                .into_iter()
                .filter(|&p| world.spawn_clearance(p) >= SPAWN_CLEARANCE)
                .collect(),
        };
        if world.spawn_points.len() < 2 {
            return Err(WorldError::TooFewSpawnPoints {
                name: world.name,
                count: world.spawn_points.len(),
            });
        }
        Ok(world)
    }

    /// Parses and validates a world file.
    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let file: WorldFile = serde_json::from_str(text)?;
        Self::new(file.name, file.bounds, file.obstacles, file.spawn_points)
    }

    /// Serializes with explicit spawn points, so that `from_json` reproduces
    /// this exact world.
    pub fn to_json(&self) -> String {
        let file = WorldFile {
            name: self.name.clone(),
            bounds: self.bounds,
            obstacles: self.obstacles.clone(),
            spawn_points: Some(self.spawn_points.clone()),
        };
        let mut text = serde_json::to_string_pretty(&file).expect("world serializes");
        text.push('\n');
        text
    }

    /// The bundled obstacle-free room.
    pub fn empty_room() -> Self {
        Self::from_json(EMPTY_WORLD_JSON).expect("bundled empty world is valid")
    }

    /// The bundled four-obstacle room.
    pub fn obstacle_room() -> Self {
        Self::from_json(OBSTACLE_WORLD_JSON).expect("bundled obstacle world is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> &Rect {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Rect] {
        &self.obstacles
    }

    pub fn spawn_points(&self) -> &[Vec2] {
        &self.spawn_points
    }

    /// Whether `p` lies strictly inside the arena and outside every obstacle.
    pub fn is_free(&self, p: Vec2) -> bool {
        self.bounds.contains_strictly(p) && !self.obstacles.iter().any(|o| o.contains(p))
    }

    fn spawn_clearance(&self, p: Vec2) -> f64 {
        if self.bounds.contains_strictly(p) {
            self.min_clearance(p)
        } else {
            0.0
        }
    }

    /// Distance along the ray from `origin` at `angle` to the first wall or
    /// obstacle, clamped to `max_range`.
    pub fn raycast(&self, origin: Vec2, angle: f64, max_range: f64) -> f64 {
        debug_assert!(max_range > 0.0);
        debug_assert!(self.is_free(origin), "raycast origin {origin} not in free space");
        self.raycast_dir(origin, Vec2::from_angle(angle), max_range)
    }

    pub(crate) fn raycast_dir(&self, origin: Vec2, dir: Vec2, max_range: f64) -> f64 {
        let b = &self.bounds;
        let mut t = max_range;
        if dir.x > 0.0 {
            t = t.min((b.max.x - origin.x) / dir.x);
        } else if dir.x < 0.0 {
            t = t.min((b.min.x - origin.x) / dir.x);
        }
        if dir.y > 0.0 {
            t = t.min((b.max.y - origin.y) / dir.y);
        } else if dir.y < 0.0 {
            t = t.min((b.min.y - origin.y) / dir.y);
        }
        for obstacle in &self.obstacles {
            if let Some(hit) = obstacle.ray_entry(origin, dir) {
                t = t.min(hit);
            }
        }
        t
    }

    /// Distance from `p` to the nearest wall or obstacle boundary. Zero on a
    /// boundary, and also for points outside the arena or inside an obstacle.
    pub fn min_clearance(&self, p: Vec2) -> f64 {
        if !self.bounds.contains(p) {
            return 0.0;
        }
        let mut clearance = self.bounds.interior_depth(p);
        for obstacle in &self.obstacles {
            clearance = clearance.min(obstacle.distance_to(p));
        }
        clearance
    }

    /// Minimum of `min_clearance` over the closed segment `p0 -> p1`.
    pub fn segment_clearance(&self, p0: Vec2, p1: Vec2) -> f64 {
        if !self.bounds.contains(p0) || !self.bounds.contains(p1) {
            return 0.0;
        }
        // Wall distance is a minimum of linear functions along the segment.
        let mut clearance = self.bounds.interior_depth(p0).min(self.bounds.interior_depth(p1));
        for obstacle in &self.obstacles {
            if clearance == 0.0 {
                break;
            }
            let d = if obstacle.intersects_segment(p0, p1) {
                0.0
            } else {
                obstacle
                    .corners()
                    .iter()
                    .map(|&c| point_segment_distance(c, p0, p1))
                    .fold(obstacle.distance_to(p0).min(obstacle.distance_to(p1)), f64::min)
            };
            clearance = clearance.min(d);
        }
        clearance
    }

    /// True iff some point of the segment `p0 -> p1` has clearance below
    /// `radius`.
    pub fn swept_clearance_below(&self, p0: Vec2, p1: Vec2, radius: f64) -> bool {
        self.segment_clearance(p0, p1) < radius
    }

    /// Draws a distinct (start, goal) pair uniformly among spawn-point pairs
    /// separated by at least `min_separation`.
    pub fn sample_start_goal<R: Rng + ?Sized>(
        &self,
        min_separation: f64,
        rng: &mut R,
    ) -> Result<(Vec2, Vec2), WorldError> {
        let points = &self.spawn_points;
        let feasible = points
            .iter()
            .enumerate()
            .any(|(i, &a)| points[i + 1..].iter().any(|&b| a.distance(b) >= min_separation));
        let err = || WorldError::Sampling {
            name: self.name.clone(),
            min_separation,
        };
        if !feasible {
            return Err(err());
        }
        let n = points.len();
        for _ in 0..MAX_SAMPLE_ATTEMPTS {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n - 1);
            let j = if j >= i { j + 1 } else { j };
            if points[i].distance(points[j]) >= min_separation {
                return Ok((points[i], points[j]));
            }
        }
        Err(err())
    }
}

/// The 5 x 5 spawn grid at offsets 3 + 6k meters from the lower-left corner.
pub fn default_spawn_grid(bounds: &Rect) -> Vec<Vec2> {
    let mut points = Vec::with_capacity(25);
    for j in 0..5 {
        for i in 0..5 {
            points.push(Vec2::new(
                bounds.min.x + 3.0 + 6.0 * i as f64,
                bounds.min.y + 3.0 + 6.0 * j as f64,
            ));
        }
    }
    points
}
