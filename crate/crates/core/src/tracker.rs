//! Look-ahead path tracking.
//!
//! A path is a densely sampled polyline. Each control step the tracker
//! intersects it with a circle around the platform, steers toward the exit
//! point ahead of its progress cursor, and emits a constant-speed velocity
//! target for the track-velocity task.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{TaskSpec, VelocityTarget};

#[derive(Debug, Error, PartialEq)]
pub enum TrackerError {
    #[error("path needs at least two waypoints")]
    EmptyPath,
    #[error("{0} must be positive and finite, got {1}")]
    NonPositive(&'static str, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeKind {
    Circle,
    Square,
    Infinite,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Circle, ShapeKind::Square, ShapeKind::Infinite];

    pub fn name(self) -> &'static str {
        match self {
            ShapeKind::Circle => "circle",
            ShapeKind::Square => "square",
            ShapeKind::Infinite => "infinite",
        }
    }
}

/// Curve used for the figure-eight shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Lemniscate {
    /// `x = s sin t, y = s sin t cos t`
    #[default]
    Gerono,
    /// `x = s cos t / (1 + sin^2 t), y = s sin t cos t / (1 + sin^2 t)`
    Bernoulli,
}

pub type Point = [f64; 2];

fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Samples a closed parametric curve on `t in [0, 2pi)` with a point count
/// that is a multiple of four and keeps every gap (including the closing one)
/// at most `spacing`.
fn sample_closed(spacing: f64, f: impl Fn(f64) -> Point) -> Vec<Point> {
    let mut n = 64;
    loop {
        let pts: Vec<Point> = (0..n).map(|i| f(TAU * i as f64 / n as f64)).collect();
        let worst = (0..n).map(|i| dist(pts[i], pts[(i + 1) % n])).fold(0.0, f64::max);
        if worst <= spacing {
            return pts;
        }
        n = (n as f64 * (worst / spacing) * 1.05).ceil() as usize;
        n = n.div_ceil(4) * 4;
    }
}

/// Waypoints for a reference shape, ordered counter-clockwise for the circle
/// and square. The closing gap back to the first point is part of the path.
pub fn make_shape(kind: ShapeKind, size: f64, center: Point, lemniscate: Lemniscate, spacing: f64) -> Vec<Point> {
    let [cx, cy] = center;
    match kind {
        ShapeKind::Circle => sample_closed(spacing, |t| [cx + size * t.cos(), cy + size * t.sin()]),
        ShapeKind::Square => {
            let per_side = (2.0 * size / spacing).ceil() as usize;
            let corners = [[size, -size], [size, size], [-size, size], [-size, -size]];
            let mut pts = Vec::with_capacity(4 * per_side);
            for k in 0..4 {
                let a = corners[(k + 3) % 4];
                let b = corners[k];
                for i in 0..per_side {
                    let s = i as f64 / per_side as f64;
                    pts.push([cx + a[0] + s * (b[0] - a[0]), cy + a[1] + s * (b[1] - a[1])]);
                }
            }
            pts
        }
        ShapeKind::Infinite => match lemniscate {
            Lemniscate::Gerono => sample_closed(spacing, |t| {
                let (s, c) = t.sin_cos();
                [cx + size * s, cy + size * s * c]
            }),
            Lemniscate::Bernoulli => sample_closed(spacing, |t| {
                // phase shift so the sampling starts and crosses at the center
                let (s, c) = (t + PI / 2.0).sin_cos();
                let d = 1.0 + s * s;
                [cx + size * c / d, cy + size * s * c / d]
            }),
        },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathSpec {
    waypoints: Vec<Point>,
    closed: bool,
    lookahead_r: f64,
    target_speed: f64,
}

impl PathSpec {
    pub fn new(waypoints: Vec<Point>, closed: bool, lookahead_r: f64, target_speed: f64) -> Result<Self, TrackerError> {
        if waypoints.len() < 2 {
            return Err(TrackerError::EmptyPath);
        }
        for (name, v) in [("lookahead_r", lookahead_r), ("target_speed", target_speed)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(TrackerError::NonPositive(name, v));
            }
        }
        Ok(Self {
            waypoints,
            closed,
            lookahead_r,
            target_speed,
        })
    }

    pub fn shape(kind: ShapeKind, cfg: &TrackerConfig) -> Result<Self, TrackerError> {
        if !(cfg.size > 0.0 && cfg.size.is_finite()) {
            return Err(TrackerError::NonPositive("size", cfg.size));
        }
        if !(cfg.spacing > 0.0 && cfg.spacing.is_finite()) {
            return Err(TrackerError::NonPositive("spacing", cfg.spacing));
        }
        let pts = make_shape(kind, cfg.size, cfg.center, cfg.lemniscate, cfg.spacing);
        Self::new(pts, true, cfg.lookahead_r, cfg.target_speed)
    }

    pub fn waypoints(&self) -> &[Point] {
        &self.waypoints
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn lookahead_r(&self) -> f64 {
        self.lookahead_r
    }

    pub fn target_speed(&self) -> f64 {
        self.target_speed
    }

    fn len(&self) -> usize {
        self.waypoints.len()
    }

    /// Waypoint at unrolled progress index `k` (laps wrap on closed paths).
    fn at(&self, k: usize) -> Point {
        if self.closed {
            self.waypoints[k % self.len()]
        } else {
            self.waypoints[k.min(self.len() - 1)]
        }
    }

    fn last_progress(&self, cursor: usize) -> usize {
        if self.closed {
            cursor + self.len()
        } else {
            self.len() - 1
        }
    }

    /// Index of the waypoint nearest to `p`.
    pub fn nearest(&self, p: Point) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, &w) in self.waypoints.iter().enumerate() {
            let d = dist(p, w);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Distance from `p` to the nearest point of the polyline.
    pub fn distance_to(&self, p: Point) -> f64 {
        let n = self.len();
        let segs = if self.closed { n } else { n - 1 };
        (0..segs)
            .map(|i| segment_distance(p, self.waypoints[i], self.waypoints[(i + 1) % n]))
            .fold(f64::INFINITY, f64::min)
    }
}

fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let s = if len2 > 0.0 {
        (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    dist(p, [a[0] + s * d[0], a[1] + s * d[1]])
}

/// Point where segment `a -> b` leaves the circle `|x - c| = r`, assuming `a`
/// is inside and `b` outside.
fn exit_point(c: Point, r: f64, a: Point, b: Point) -> Point {
    let d = [b[0] - a[0], b[1] - a[1]];
    let f = [a[0] - c[0], a[1] - c[1]];
    let qa = d[0] * d[0] + d[1] * d[1];
    let qb = 2.0 * (f[0] * d[0] + f[1] * d[1]);
    let qc = f[0] * f[0] + f[1] * f[1] - r * r;
    let s = ((-qb + (qb * qb - 4.0 * qa * qc).max(0.0).sqrt()) / (2.0 * qa)).clamp(0.0, 1.0);
    [a[0] + s * d[0], a[1] + s * d[1]]
}

/// Look-ahead point for a platform at `pos`, and the updated progress cursor.
///
/// Starting from the cursor, the search walks forward to the first waypoint
/// inside the circle (within one lap) and then on to where the path leaves
/// the circle. If no waypoint ahead is inside, the globally nearest waypoint
/// is returned and the cursor jumps to it.
pub fn lookahead_target(pos: Point, path: &PathSpec, cursor: usize) -> (Point, usize) {
    let r = path.lookahead_r;
    let end = path.last_progress(cursor);
    let inside = |k: usize| dist(pos, path.at(k)) <= r;
    let Some(first) = (cursor..=end).find(|&k| inside(k)) else {
        let i = path.nearest(pos);
        let lap = if path.closed { cursor / path.len() } else { 0 };
        return (path.waypoints[i], lap * path.len() + i);
    };
    let mut k = first;
    while k < end && inside(k + 1) {
        k += 1;
    }
    if k == end {
        // end of an open path, or a whole lap inside the circle
        return (path.at(k), k);
    }
    (exit_point(pos, r, path.at(k), path.at(k + 1)), k)
}

/// Constant-speed velocity target toward `point`. A zero-length direction
/// keeps `prev_dir`.
pub fn velocity_command(pos: Point, point: Point, speed: f64, prev_dir: Point) -> (TaskSpec, Point) {
    let d = [point[0] - pos[0], point[1] - pos[1]];
    let n = d[0].hypot(d[1]);
    let dir = if n > 1e-12 { [d[0] / n, d[1] / n] } else { prev_dir };
    (
        TaskSpec::TrackVelocity(VelocityTarget {
            vx: speed * dir[0],
            vy: speed * dir[1],
            omega: 0.0,
        }),
        dir,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackerConfig {
    /// Circle radius, half the square side, or the lemniscate scale, m.
    pub size: f64,
    pub center: Point,
    pub lookahead_r: f64,
    pub target_speed: f64,
    /// Maximum waypoint spacing, m.
    pub spacing: f64,
    pub lemniscate: Lemniscate,
    /// Control steps per tracking run.
    pub steps: u64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            size: 1.0,
            center: [0.0, 0.0],
            lookahead_r: 0.25,
            target_speed: 0.2,
            spacing: 0.01,
            lemniscate: Lemniscate::Gerono,
            steps: 250,
        }
    }
}

/// Stateful wrapper: path, cursor and last commanded direction.
#[derive(Debug, Clone)]
pub struct Tracker {
    path: PathSpec,
    cursor: usize,
    dir: Point,
}

impl Tracker {
    pub fn new(path: PathSpec) -> Self {
        let w = path.waypoints();
        let d = [w[1][0] - w[0][0], w[1][1] - w[0][1]];
        let n = d[0].hypot(d[1]).max(1e-12);
        Self {
            path,
            cursor: 0,
            dir: [d[0] / n, d[1] / n],
        }
    }

    pub fn path(&self) -> &PathSpec {
        &self.path
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Look-ahead point and velocity target for the current position.
    pub fn command(&mut self, pos: Point) -> (Point, TaskSpec) {
        let (point, cursor) = lookahead_target(pos, &self.path, self.cursor);
        self.cursor = cursor;
        let (spec, dir) = velocity_command(pos, point, self.path.target_speed, self.dir);
        self.dir = dir;
        (point, spec)
    }
}
