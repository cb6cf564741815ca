//! Shared domain types: ticks, ego state, actions, rasters and observations.

use std::f64::consts::{PI, TAU};
use std::hash::Hasher;
use std::ops::{Add, Mul, Sub};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default simulation and control rate.
pub const DEFAULT_SIM_RATE_HZ: u32 = 20;

/// A simulator step index at a fixed rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tick {
    pub index: u64,
    pub rate_hz: u32,
}

impl Tick {
    pub fn new(index: u64, rate_hz: u32) -> Self {
        debug_assert!(rate_hz > 0);
        Self { index, rate_hz }
    }

    pub fn zero(rate_hz: u32) -> Self {
        Self::new(0, rate_hz)
    }

    pub fn next(self) -> Self {
        Self::new(self.index + 1, self.rate_hz)
    }

    pub fn seconds(self) -> f64 {
        self.index as f64 / self.rate_hz as f64
    }

    pub fn dt(self) -> f64 {
        1.0 / self.rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c, s)
    }

    pub fn dot(self, o: Vec2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Vec2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Rotates by `theta` radians counter-clockwise.
    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Expresses a world point in the frame at `origin` with heading `heading`.
    pub fn to_frame(self, origin: Vec2, heading: f64) -> Self {
        (self - origin).rotate(-heading)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

/// Wraps an angle into `(-pi, pi]`.
pub fn normalize_angle(theta: f64) -> f64 {
    let mut a = theta.rem_euclid(TAU);
    if a > PI {
        a -= TAU;
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

/// Simulator truth for the ego vehicle. `position` is the rear-axle centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoState {
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub steer_angle: f64,
}

impl EgoState {
    pub fn at_rest(pose: Pose) -> Self {
        Self {
            position: pose.position,
            heading: normalize_angle(pose.heading),
            speed: 0.0,
            acceleration: 0.0,
            steer_angle: 0.0,
        }
    }

    pub fn pose(&self) -> Pose {
        Pose {
            position: self.position,
            heading: self.heading,
        }
    }
}

/// A control command. `created_tick` is the tick of the observation it was
/// computed from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub throttle: f64,
    pub brake: f64,
    pub steer: f64,
    pub created_tick: u64,
}

impl Action {
    pub fn new(throttle: f64, brake: f64, steer: f64, created_tick: u64) -> Result<Self> {
        let a = Self {
            throttle,
            brake,
            steer,
            created_tick,
        };
        a.validate()?;
        Ok(a)
    }

    /// Builds an action with every field clamped into range; NaN maps to 0.
    pub fn clamped(throttle: f64, brake: f64, steer: f64, created_tick: u64) -> Self {
        let fix = |v: f64, lo: f64, hi: f64| if v.is_nan() { 0.0 } else { v.clamp(lo, hi) };
        Self {
            throttle: fix(throttle, 0.0, 1.0),
            brake: fix(brake, 0.0, 1.0),
            steer: fix(steer, -1.0, 1.0),
            created_tick,
        }
    }

    pub fn full_brake(created_tick: u64) -> Self {
        Self::clamped(0.0, 1.0, 0.0, created_tick)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.throttle)
            && (0.0..=1.0).contains(&self.brake)
            && (-1.0..=1.0).contains(&self.steer);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "action out of bounds: {self:?}"
            )))
        }
    }

    /// Same command contents, ignoring the creation stamp.
    pub fn same_command(&self, other: &Action) -> bool {
        self.throttle.to_bits() == other.throttle.to_bits()
            && self.brake.to_bits() == other.brake.to_bits()
            && self.steer.to_bits() == other.steer.to_bits()
    }
}

/// Single-channel image with values in `[0, 1]`, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Raster {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Raster {
    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, col: usize, row: usize) -> f32 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, col: usize, row: usize, value: f32) {
        self.data[row * self.width + col] = value;
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn count(&self, value: f32) -> usize {
        self.data.iter().filter(|&&v| v == value).count()
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        self.hash_into(&mut h);
        h.finish()
    }

    fn hash_into(&self, h: &mut FnvHasher) {
        h.write(&(self.width as u64).to_le_bytes());
        h.write(&(self.height as u64).to_le_bytes());
        for v in &self.data {
            h.write(&v.to_le_bytes());
        }
    }
}

/// What the policy receives each tick.
///
/// `compass` is the ego heading in radians; it is never perturbed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub camera: Raster,
    pub gps: Vec2,
    pub speed: f64,
    pub target_point: Vec2,
    pub compass: f64,
    pub stamp: u64,
}

impl Observation {
    /// 64-bit content hash over the raster and every scalar channel.
    pub fn digest(&self) -> u64 {
        let mut h = FnvHasher::default();
        self.camera.hash_into(&mut h);
        for v in [
            self.gps.x,
            self.gps.y,
            self.speed,
            self.target_point.x,
            self.target_point.y,
            self.compass,
        ] {
            h.write(&v.to_le_bytes());
        }
        h.write(&self.stamp.to_le_bytes());
        h.finish()
    }
}

/// Hex rendering used for digests in run logs.
pub fn hex64(v: u64) -> String {
    format!("{v:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tick_time() {
        let t = Tick::new(60, 20);
        assert_eq!(t.seconds(), 3.0);
        assert_eq!(t.next().index, 61);
    }

    #[test]
    fn normalize_into_half_open_interval() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert!((normalize_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((normalize_angle(-0.5) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn action_bounds() {
        assert!(Action::new(0.5, 0.0, -1.0, 0).is_ok());
        assert!(Action::new(1.5, 0.0, 0.0, 0).is_err());
        assert!(Action::new(0.0, -0.1, 0.0, 0).is_err());
        let a = Action::clamped(f64::NAN, 3.0, -7.0, 4);
        assert_eq!((a.throttle, a.brake, a.steer), (0.0, 1.0, -1.0));
    }

    #[test]
    fn frame_transform_round_trip() {
        let p = Vec2::new(3.0, 4.0);
        let local = p.to_frame(Vec2::new(1.0, 1.0), PI / 2.0);
        assert!((local.x - 3.0).abs() < 1e-12);
        assert!((local.y + 2.0).abs() < 1e-12);
    }

    #[test]
    fn digest_sensitive_to_channels() {
        let obs = Observation {
            camera: Raster::filled(4, 4, 0.5),
            gps: Vec2::new(1.0, 2.0),
            speed: 3.0,
            target_point: Vec2::new(5.0, 2.0),
            compass: 0.0,
            stamp: 9,
        };
        let mut other = obs.clone();
        assert_eq!(obs.digest(), other.digest());
        other.speed = 3.000001;
        assert_ne!(obs.digest(), other.digest());
        let mut cam = obs.clone();
        cam.camera.set(1, 1, 0.0);
        assert_ne!(obs.digest(), cam.digest());
    }
}
