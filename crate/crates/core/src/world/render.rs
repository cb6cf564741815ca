//! Synthetic forward camera.
//!
//! A pinhole camera mounted `mount_forward` metres ahead of the rear axle at
//! height `height` looks along the ego heading. A ground point at forward
//! distance `d` and lateral offset `y` (left positive) lands on
//!
//! ```text
//! row = horizon + focal * height / d
//! col = width / 2 - focal * y / d
//! ```
//!
//! Ground pixels are classified against the route centerline (corridor,
//! centerline band, off-road); actors are drawn as upright billboards at
//! their nearest face and the traffic-light head as a block above the lane.
//! Objects are painted far to near. Rendering reads the world and nothing
//! else.

use serde::{Deserialize, Serialize};

use super::route::RouteSpec;
use super::sim::{LightPhase, WorldConfig, WorldState};
use crate::types::{Raster, Vec2};

/// Pixel intensity codes.
pub mod codes {
    pub const SKY: f32 = 0.9;
    pub const OFFROAD: f32 = 0.2;
    pub const CORRIDOR: f32 = 0.4;
    pub const CENTERLINE: f32 = 0.5;
    pub const LIGHT_RED: f32 = 0.6;
    pub const LIGHT_GREEN: f32 = 0.75;
    pub const ACTOR: f32 = 1.0;

    pub fn is_drivable(v: f32) -> bool {
        v == CORRIDOR || v == CENTERLINE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CameraConfig {
    pub width: usize,
    pub height_px: usize,
    pub horizon_row: f64,
    pub focal_px: f64,
    /// Mount height above the ground.
    pub height: f64,
    pub mount_forward: f64,
    pub max_range: f64,
    pub centerline_half_width: f64,
    pub light_bottom: f64,
    pub light_top: f64,
    pub light_half_width: f64,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height_px: 64,
            horizon_row: 24.0,
            focal_px: 40.0,
            height: 1.6,
            mount_forward: 1.5,
            max_range: 60.0,
            centerline_half_width: 0.2,
            light_bottom: 2.6,
            light_top: 3.4,
            light_half_width: 0.4,
        }
    }
}

impl CameraConfig {
    /// Image row of a ground point at forward distance `d`.
    pub fn ground_row(&self, d: f64) -> f64 {
        self.horizon_row + self.focal_px * self.height / d
    }

    /// Forward distance of the ground seen through the centre of `row`.
    pub fn ground_distance(&self, row: usize) -> Option<f64> {
        let denom = row as f64 + 0.5 - self.horizon_row;
        (denom > 0.0).then(|| self.focal_px * self.height / denom)
    }

    /// Distance implied by the lowest row of a billboard resting on the ground.
    pub fn distance_from_bottom_row(&self, row: usize) -> f64 {
        let denom = (row as f64 + 1.0 - self.horizon_row).max(1e-3);
        self.focal_px * self.height / denom
    }

    /// Distance implied by the lowest row of a traffic-light head.
    pub fn distance_from_light_row(&self, row: usize) -> f64 {
        let denom = (self.horizon_row - row as f64).max(1e-3);
        self.focal_px * (self.light_bottom - self.height) / denom
    }

    /// Lateral offset (left positive) of the ground point at `col`, distance `d`.
    pub fn lateral_at(&self, col: usize, d: f64) -> f64 {
        -((col as f64 + 0.5) - self.width as f64 / 2.0) * d / self.focal_px
    }

    fn col_of(&self, lateral: f64, d: f64) -> f64 {
        self.width as f64 / 2.0 - self.focal_px * lateral / d
    }
}

struct Billboard {
    distance: f64,
    lat_min: f64,
    lat_max: f64,
    bottom_h: f64,
    top_h: f64,
    code: f32,
}

const NEAR_CLIP: f64 = 0.3;

/// Renders the ego-centric forward view for `state`.
pub fn render_camera(route: &RouteSpec, world: &WorldConfig, state: &WorldState) -> Raster {
    let cam = &world.camera;
    let (w, h) = (cam.width, cam.height_px);
    let mut raster = Raster::filled(w, h, codes::SKY);
    let heading = state.ego.heading;
    let origin = state.ego.position + Vec2::from_angle(heading) * cam.mount_forward;

    // Local centerline segments in the camera frame.
    let s0 = state.route_progress - 10.0;
    let s1 = state.route_progress + cam.max_range + 10.0;
    let mut segments: Vec<(Vec2, Vec2)> = route
        .segments_between(s0, s1)
        .map(|i| {
            let (a, b, _) = route.segment(i);
            (a.to_frame(origin, heading), b.to_frame(origin, heading))
        })
        .collect();
    // The road continues straight past both ends of the route.
    if s1 > route.length() {
        let (a, b) = (route.point_at(route.length()), route.point_at(s1));
        segments.push((a.to_frame(origin, heading), b.to_frame(origin, heading)));
    }
    if s0 < 0.0 {
        let b = route.point_at(0.0);
        let a = b - Vec2::from_angle(route.heading_at(0.0)) * -s0;
        segments.push((a.to_frame(origin, heading), b.to_frame(origin, heading)));
    }
    let band = cam.centerline_half_width;
    let lane = world.lane_half_width;

    let mut near: Vec<&(Vec2, Vec2)> = Vec::with_capacity(segments.len());
    for row in 0..h {
        let Some(d) = cam.ground_distance(row) else {
            continue;
        };
        if d > cam.max_range {
            for col in 0..w {
                raster.set(col, row, codes::OFFROAD);
            }
            continue;
        }
        near.clear();
        near.extend(
            segments
                .iter()
                .filter(|(a, b)| a.x.min(b.x) <= d + lane && a.x.max(b.x) >= d - lane),
        );
        for col in 0..w {
            let p = Vec2::new(d, cam.lateral_at(col, d));
            let dist = near
                .iter()
                .map(|(a, b)| point_segment_distance(p, *a, *b))
                .fold(f64::INFINITY, f64::min);
            let code = if dist <= band {
                codes::CENTERLINE
            } else if dist <= lane {
                codes::CORRIDOR
            } else {
                codes::OFFROAD
            };
            raster.set(col, row, code);
        }
    }

    let mut boards = Vec::new();
    for actor in state.actors.iter().filter(|a| a.active) {
        let local: Vec<Vec2> = actor
            .corners()
            .iter()
            .map(|c| c.to_frame(origin, heading))
            .collect();
        let far = local.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
        if far < NEAR_CLIP {
            continue;
        }
        let distance = local
            .iter()
            .map(|p| p.x)
            .fold(f64::INFINITY, f64::min)
            .max(NEAR_CLIP);
        boards.push(Billboard {
            distance,
            lat_min: local.iter().map(|p| p.y).fold(f64::INFINITY, f64::min),
            lat_max: local.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max),
            bottom_h: 0.0,
            top_h: actor.height,
            code: codes::ACTOR,
        });
    }
    for light in &state.lights {
        let p = light.position.to_frame(origin, heading);
        if p.x < NEAR_CLIP {
            continue;
        }
        boards.push(Billboard {
            distance: p.x,
            lat_min: p.y - cam.light_half_width,
            lat_max: p.y + cam.light_half_width,
            bottom_h: cam.light_bottom,
            top_h: cam.light_top,
            code: match light.phase {
                LightPhase::Red => codes::LIGHT_RED,
                LightPhase::Green => codes::LIGHT_GREEN,
            },
        });
    }
    boards.sort_by(|a, b| b.distance.total_cmp(&a.distance));
    for b in &boards {
        if b.distance > cam.max_range {
            continue;
        }
        paint_billboard(&mut raster, cam, b);
    }
    raster
}

fn paint_billboard(raster: &mut Raster, cam: &CameraConfig, b: &Billboard) {
    let d = b.distance;
    let top = cam.horizon_row - cam.focal_px * (b.top_h - cam.height) / d;
    let bottom = cam.horizon_row - cam.focal_px * (b.bottom_h - cam.height) / d;
    let left = cam.col_of(b.lat_max, d);
    let right = cam.col_of(b.lat_min, d);
    let (w, h) = (cam.width as f64, cam.height_px as f64);
    if bottom < 0.0 || top >= h || right < 0.0 || left >= w {
        return;
    }
    let r0 = top.max(0.0).floor() as usize;
    let r1 = (bottom.min(h - 1.0)).floor() as usize;
    let c0 = left.max(0.0).floor() as usize;
    let c1 = (right.min(w - 1.0)).floor() as usize;
    for row in r0..=r1 {
        for col in c0..=c1 {
            raster.set(col, row, b.code);
        }
    }
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let t = ((p - a).dot(ab) / ab.dot(ab)).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::types::Action;
    use crate::world::route::{RouteSpec, ScenarioEvent};
    use crate::world::sim::Simulator;

    fn straight_sim(events: Vec<ScenarioEvent>) -> Simulator {
        let route = RouteSpec::new(
            "straight",
            "straight",
            (0..=100).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect(),
            10.0,
            60.0,
            events,
            vec![],
        )
        .unwrap();
        Simulator::new(Arc::new(route), WorldConfig::default())
    }

    fn lead_at(gap: f64) -> ScenarioEvent {
        ScenarioEvent::LeadVehicle {
            trigger: 0.0,
            gap,
            cruise_speed: 0.0,
            cruise_s: 100.0,
            stop_s: 0.0,
            half_extents: [2.25, 0.95],
        }
    }

    fn lowest_actor_row(r: &Raster) -> Option<usize> {
        (0..r.height)
            .rev()
            .find(|&row| (0..r.width).any(|c| r.get(c, row) == codes::ACTOR))
    }

    #[test]
    fn empty_road_has_no_actor_pixels() {
        let sim = straight_sim(vec![]);
        let img = sim.render_camera(&sim.initial_state());
        assert_eq!(img.count(codes::ACTOR), 0);
        assert!(img.count(codes::CORRIDOR) > 0);
        assert!(img.count(codes::CENTERLINE) > 0);
        assert_eq!(
            img.count(codes::LIGHT_RED) + img.count(codes::LIGHT_GREEN),
            0
        );
    }

    #[test]
    fn closer_lead_sits_lower_in_image() {
        // The lead's rear face is at gap - 2.25 m from the route start, the
        // camera at 1.5 m: faces at 10 m and 20 m from the camera.
        let near = straight_sim(vec![lead_at(10.0 + 2.25 + 1.5)]);
        let far = straight_sim(vec![lead_at(20.0 + 2.25 + 1.5)]);
        let rn = lowest_actor_row(&near.render_camera(&near.initial_state())).unwrap();
        let rf = lowest_actor_row(&far.render_camera(&far.initial_state())).unwrap();
        let cam = CameraConfig::default();
        assert_eq!(rn, cam.ground_row(10.0).floor() as usize);
        assert_eq!(rf, cam.ground_row(20.0).floor() as usize);
        assert!(rn > rf);
    }

    #[test]
    fn rendering_is_pure() {
        let sim = straight_sim(vec![lead_at(25.0)]);
        let s = sim.initial_state();
        let before = s.clone();
        assert_eq!(sim.render_camera(&s), sim.render_camera(&s));
        assert_eq!(s, before);
    }

    #[test]
    fn red_light_block_is_visible_and_ranged() {
        let sim = straight_sim(vec![ScenarioEvent::RedLight {
            trigger: 0.0,
            stop_line: 20.0,
            red_s: 5.0,
        }]);
        let state = sim.initial_state();
        let img = sim.render_camera(&state);
        assert!(img.count(codes::LIGHT_RED) > 0);
        let cam = &sim.config().camera;
        let bottom = (0..img.height)
            .rev()
            .find(|&r| (0..img.width).any(|c| img.get(c, r) == codes::LIGHT_RED))
            .unwrap();
        // The estimate reads the top edge of the lowest lit row, so it never
        // overshoots and the next row down would.
        let est = cam.distance_from_light_row(bottom);
        assert!(est <= 18.5, "estimate {est}");
        assert!(cam.distance_from_light_row(bottom + 1) > 18.5);
        // A step must not disturb rendering purity either.
        let next = sim.step(&state, &Action::full_brake(0));
        assert!(sim.render_camera(&next).count(codes::LIGHT_RED) > 0);
    }

    #[test]
    fn inverse_row_mapping_matches_forward() {
        let cam = CameraConfig::default();
        for row in 30..64 {
            let d = cam.ground_distance(row).unwrap();
            let back = cam.ground_row(d);
            assert!((back - (row as f64 + 0.5)).abs() < 1e-9);
        }
        assert!(cam.ground_distance(10).is_none());
    }
}
