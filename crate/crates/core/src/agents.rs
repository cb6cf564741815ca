//! Scripted reference policies.
//!
//! All three share one controller: pure-pursuit steering toward the target
//! point, proportional speed control toward a curve-limited cruise speed, and
//! (when the camera is used) braking for in-lane actors and red lights seen
//! in the raster. They differ only in which channels they read:
//!
//! | policy          | camera | gps | speed |
//! |-----------------|--------|-----|-------|
//! | full-pursuit    | yes    | yes | yes   |
//! | blind-follower  | no     | yes | yes   |
//! | deadreckon      | yes    | no  | yes   |
//!
//! `deadreckon` localises by integrating speed and compass from the route
//! start pose given at [`Policy::reset`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{normalize_angle, Action, Observation, Pose, Raster, Vec2};
use crate::world::{codes, CameraConfig, WorldConfig};

pub const POLICY_NAMES: [&str; 3] = ["full-pursuit", "blind-follower", "deadreckon"];

/// Controller gains and declared channel usage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PolicySpec {
    pub name: String,
    pub uses_camera: bool,
    pub uses_gps: bool,
    pub uses_speed: bool,
    /// Floor on the pure-pursuit distance.
    pub lookahead: f64,
    pub speed_gain: f64,
    pub overspeed_brake_gain: f64,
    pub cruise_speed: f64,
    /// Lateral acceleration the speed planner aims for in curves.
    pub comfort_lateral_accel: f64,
    /// Deceleration assumed when sizing the braking zone.
    pub comfort_decel: f64,
    pub reaction_time: f64,
    /// Standoff kept to a hazard, measured from the camera.
    pub brake_threshold: f64,
    /// Standoff kept to a red stop line, measured from the camera.
    pub stop_line_threshold: f64,
    pub wheelbase: f64,
    pub max_steer: f64,
    pub max_decel: f64,
    pub rate_hz: u32,
    pub camera: CameraConfig,
}

impl Default for PolicySpec {
    fn default() -> Self {
        Self::calibrated("full-pursuit", &WorldConfig::default())
    }
}

impl PolicySpec {
    /// Default gains for `name`, with vehicle and camera calibration taken
    /// from `world`.
    pub fn calibrated(name: &str, world: &WorldConfig) -> Self {
        Self {
            name: name.to_string(),
            uses_camera: name != "blind-follower",
            uses_gps: name != "deadreckon",
            uses_speed: true,
            lookahead: 4.0,
            speed_gain: 0.5,
            overspeed_brake_gain: 0.2,
            cruise_speed: 10.0,
            comfort_lateral_accel: 7.0,
            comfort_decel: 4.0,
            reaction_time: 0.3,
            brake_threshold: 3.0,
            stop_line_threshold: 3.0,
            wheelbase: world.wheelbase,
            max_steer: world.max_steer,
            max_decel: world.max_decel,
            rate_hz: world.rate_hz,
            camera: world.camera.clone(),
        }
    }
}

pub trait Policy: Send {
    fn spec(&self) -> &PolicySpec;

    /// Clears rollout-local state. `start` is the route start pose.
    fn reset(&mut self, start: Pose);

    fn act(&mut self, obs: &Observation) -> Action;
}

/// Builds a reference policy by name.
pub fn make_policy(name: &str, world: &WorldConfig) -> Result<Box<dyn Policy>> {
    make_policy_with(PolicySpec::calibrated(name, world))
}

pub fn make_policy_with(spec: PolicySpec) -> Result<Box<dyn Policy>> {
    match spec.name.as_str() {
        "full-pursuit" | "blind-follower" => Ok(Box::new(Pursuit { spec })),
        "deadreckon" => Ok(Box::new(DeadReckon::new(spec))),
        other => Err(Error::UnknownPolicy(other.to_string())),
    }
}

/// Expands `all` and validates names.
pub fn resolve_policy_names(names: &[String]) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for n in names {
        if n == "all" {
            out.extend(POLICY_NAMES.iter().map(|s| s.to_string()));
        } else if POLICY_NAMES.contains(&n.as_str()) {
            out.push(n.clone());
        } else {
            return Err(Error::UnknownPolicy(n.clone()));
        }
    }
    out.dedup();
    Ok(out)
}

fn well_formed(obs: &Observation, cam: &CameraConfig) -> bool {
    obs.gps.is_finite()
        && obs.target_point.is_finite()
        && obs.speed.is_finite()
        && obs.speed >= 0.0
        && obs.compass.is_finite()
        && obs.camera.width == cam.width
        && obs.camera.height == cam.height_px
        && obs.camera.data.len() == cam.width * cam.height_px
}

/// Nearest hazard the camera shows, as a distance from the camera minus the
/// matching standoff. `None` when nothing relevant is visible.
pub fn camera_hazard(raster: &Raster, spec: &PolicySpec) -> Option<f64> {
    let cam = &spec.camera;
    let (w, h) = (raster.width, raster.height);
    let mut nearest = f64::INFINITY;
    for col in 0..w {
        // Lowest actor pixel in this column.
        if let Some(row) = (0..h).rev().find(|&r| raster.get(col, r) == codes::ACTOR) {
            let grounded = row + 1 >= h || codes::is_drivable(raster.get(col, row + 1));
            if grounded {
                let d = cam.distance_from_bottom_row(row) - spec.brake_threshold;
                nearest = nearest.min(d);
            }
        }
        if let Some(row) = (0..h)
            .rev()
            .find(|&r| raster.get(col, r) == codes::LIGHT_RED)
        {
            let d = cam.distance_from_light_row(row) - spec.stop_line_threshold;
            nearest = nearest.min(d);
        }
    }
    nearest.is_finite().then_some(nearest)
}

/// Distance up to which every ground row shows some drivable surface.
pub fn clear_distance(raster: &Raster, spec: &PolicySpec) -> f64 {
    let cam = &spec.camera;
    let mut clear = 0.0;
    for row in (0..raster.height).rev() {
        let Some(d) = cam.ground_distance(row) else {
            break;
        };
        if d > cam.max_range {
            break;
        }
        if !(0..raster.width).any(|c| codes::is_drivable(raster.get(c, row))) {
            break;
        }
        clear = d;
    }
    clear
}

/// Highest speed that can still stop within `distance`.
fn stopping_speed(distance: f64, decel: f64, reaction: f64) -> f64 {
    decel * ((reaction * reaction + 2.0 * distance / decel).sqrt() - reaction)
}

/// Shared controller given an ego position estimate.
fn control(spec: &PolicySpec, obs: &Observation, position: Vec2) -> Action {
    let local = obs.target_point.to_frame(position, obs.compass);
    let ld = local.norm().max(spec.lookahead);
    let curvature = 2.0 * local.y / (ld * ld);
    let steer = (spec.wheelbase * curvature).atan() / spec.max_steer;

    let v = if spec.uses_speed {
        obs.speed
    } else {
        spec.cruise_speed
    };
    let curve_speed = (spec.comfort_lateral_accel / curvature.abs().max(1e-6)).sqrt();
    let mut target = spec.cruise_speed.min(curve_speed);
    if spec.uses_camera {
        let sight = clear_distance(&obs.camera, spec);
        target = target.min(stopping_speed(
            sight,
            spec.comfort_decel,
            spec.reaction_time,
        ));
    }
    let mut throttle = (spec.speed_gain * (target - v)).clamp(0.0, 1.0);
    let mut brake = (spec.overspeed_brake_gain * (v - target - 0.5)).clamp(0.0, 1.0);

    if spec.uses_camera {
        if let Some(gap) = camera_hazard(&obs.camera, spec) {
            let zone = v * v / (2.0 * spec.comfort_decel) + v * spec.reaction_time;
            if gap <= 0.5 {
                throttle = 0.0;
                brake = 1.0;
            } else if gap <= zone {
                let needed = v * v / (2.0 * gap);
                throttle = 0.0;
                brake = brake.max((needed / spec.max_decel + 0.1).min(1.0));
            }
        }
    }
    Action::clamped(throttle, brake, steer, obs.stamp)
}

/// Pure-pursuit follower localised by GPS. Stateless.
pub struct Pursuit {
    spec: PolicySpec,
}

impl Policy for Pursuit {
    fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    fn reset(&mut self, _start: Pose) {}

    fn act(&mut self, obs: &Observation) -> Action {
        if !well_formed(obs, &self.spec.camera) {
            return Action::full_brake(obs.stamp);
        }
        control(&self.spec, obs, obs.gps)
    }
}

/// Follower localised by integrating speed and compass.
pub struct DeadReckon {
    spec: PolicySpec,
    position: Vec2,
    last: Option<(u64, f64, f64)>,
}

impl DeadReckon {
    pub fn new(spec: PolicySpec) -> Self {
        Self {
            spec,
            position: Vec2::ZERO,
            last: None,
        }
    }

    pub fn position_estimate(&self) -> Vec2 {
        self.position
    }

    fn integrate(&mut self, obs: &Observation) {
        if let Some((stamp, v0, h0)) = self.last {
            let dt = obs.stamp.saturating_sub(stamp) as f64 / self.spec.rate_hz as f64;
            let ds = 0.5 * (v0 + obs.speed) * dt;
            let half = 0.5 * normalize_angle(obs.compass - h0);
            let chord = if half.abs() < 1e-9 {
                ds
            } else {
                ds * half.sin() / half
            };
            self.position = self.position + Vec2::from_angle(h0 + half) * chord;
        }
        self.last = Some((obs.stamp, obs.speed, obs.compass));
    }
}

impl Policy for DeadReckon {
    fn spec(&self) -> &PolicySpec {
        &self.spec
    }

    fn reset(&mut self, start: Pose) {
        self.position = start.position;
        self.last = None;
    }

    fn act(&mut self, obs: &Observation) -> Action {
        if !well_formed(obs, &self.spec.camera) {
            return Action::full_brake(obs.stamp);
        }
        self.integrate(obs);
        control(&self.spec, obs, self.position)
    }
}
