//! AP layout, user movement on a wraparound square, and the minimum-image
//! geometry that goes with it.
//!
//! The simulation area is a torus: distances and angles always use the
//! nearest periodic image of each AP. When the nearest image of an AP that
//! is serving the user flips to another period, the AP effectively becomes
//! a new node and the episode charges a forced handoff for it.

use crate::config::ScenarioConfig;
use crate::math;
use crate::rng::RngStream;
use alloc::vec::Vec;

/// Planar point / vector in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Self = Self { x: 0.0, y: 0.0 };

    #[inline]
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    #[inline]
    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    #[inline]
    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    #[inline]
    pub fn dot(self, o: Self) -> f64 {
        self.x * o.x + self.y * o.y
    }

    #[inline]
    pub fn norm(self) -> f64 {
        math::hypot(self.x, self.y)
    }

    #[inline]
    pub fn from_angle(theta: f64) -> Self {
        Self::new(math::cos(theta), math::sin(theta))
    }
}

/// Fixed AP positions inside the wraparound square.
#[derive(Clone, Debug)]
pub struct NetworkLayout {
    pub ap_positions: Vec<Vec2>,
    pub area_side: f64,
}

/// The moving user: wrapped position, unit heading, and per-step distance.
#[derive(Clone, Debug)]
pub struct UserTrack {
    pub position: Vec2,
    pub heading: Vec2,
    pub speed: f64,
    pub step_length: f64,
}

/// Integer number of area periods removed per axis while wrapping a step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WrapShift {
    pub x: i64,
    pub y: i64,
}

/// Nearest periodic image of an AP relative to a reference point, together
/// with the integer period indices that produce it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApImage {
    pub point: Vec2,
    pub period: [i64; 2],
}

/// Place APs on a near-square grid, each jittered uniformly inside its cell
/// by at most `jitter_frac` of the cell pitch per axis.
pub fn place_aps(cfg: &ScenarioConfig, rng: &mut RngStream) -> NetworkLayout {
    let b = cfg.ap_count;
    let area = cfg.area_side_m;
    let cols = ceil_sqrt(b);
    let rows = b.div_ceil(cols);
    let pitch_x = area / cols as f64;
    let pitch_y = area / rows as f64;
    let mut ap_positions = Vec::with_capacity(b);
    for i in 0..b {
        let (r, c) = (i / cols, i % cols);
        let cx = (c as f64 + 0.5) * pitch_x;
        let cy = (r as f64 + 0.5) * pitch_y;
        let jx = rng.uniform_in(-cfg.jitter_frac, cfg.jitter_frac) * pitch_x;
        let jy = rng.uniform_in(-cfg.jitter_frac, cfg.jitter_frac) * pitch_y;
        ap_positions.push(Vec2::new(cx + jx, cy + jy));
    }
    NetworkLayout {
        ap_positions,
        area_side: area,
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut k = 1usize;
    while k * k < n {
        k += 1;
    }
    k
}

/// Advance the user one decision step along its heading, wrapping the
/// position back into the area and reporting the periods removed.
pub fn step_user(track: &UserTrack, layout: &NetworkLayout) -> (UserTrack, WrapShift) {
    let area = layout.area_side;
    let raw = track.position.add(track.heading.scale(track.step_length));
    let kx = math::floor(raw.x / area);
    let ky = math::floor(raw.y / area);
    let next = UserTrack {
        position: Vec2::new(raw.x - kx * area, raw.y - ky * area),
        ..track.clone()
    };
    (
        next,
        WrapShift {
            x: kx as i64,
            y: ky as i64,
        },
    )
}

/// Minimum-image distance between two points and the image of `q` that
/// realizes it.
pub fn toroidal_distance(p: Vec2, q: Vec2, area_side: f64) -> (f64, Vec2) {
    let img = ap_image(p, q, area_side);
    (img.point.sub(p).norm(), img.point)
}

/// Nearest periodic image of `q` relative to `reference` (which may live in
/// an unwrapped coordinate frame).
pub fn ap_image(reference: Vec2, q: Vec2, area_side: f64) -> ApImage {
    let mx = math::round((reference.x - q.x) / area_side);
    let my = math::round((reference.y - q.y) / area_side);
    ApImage {
        point: Vec2::new(q.x + mx * area_side, q.y + my * area_side),
        period: [mx as i64, my as i64],
    }
}

/// Angle in [0, pi] between the user's heading and the direction from the
/// user to the given AP image. A degenerate in-plane coincidence maps to 0
/// (the height gap keeps the physical separation positive).
pub fn angle_to_ap(track: &UserTrack, ap_image: Vec2) -> f64 {
    let v = ap_image.sub(track.position);
    let n = v.norm();
    if n == 0.0 {
        return 0.0;
    }
    let c = (track.heading.dot(v) / n).clamp(-1.0, 1.0);
    math::acos(c)
}

/// Flag the serving APs whose nearest image moved to another period between
/// two consecutive steps; those count as removed-then-added in the handoff
/// accounting.
pub fn detect_forced_handoffs(
    prev_images: &[ApImage],
    new_images: &[ApImage],
    serving: &[bool],
) -> Vec<bool> {
    debug_assert_eq!(prev_images.len(), new_images.len());
    debug_assert_eq!(prev_images.len(), serving.len());
    prev_images
        .iter()
        .zip(new_images)
        .zip(serving)
        .map(|((p, n), &s)| s && p.period != n.period)
        .collect()
}
