//! Kinematic-bicycle closed-loop simulator with scripted traffic.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::render::{render_camera, CameraConfig};
use super::route::{RouteSpec, ScenarioEvent};
use crate::types::{normalize_angle, Action, EgoState, Observation, Pose, Raster, Tick, Vec2};

/// Vehicle, road and detector parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub rate_hz: u32,
    pub wheelbase: f64,
    pub max_accel: f64,
    pub max_decel: f64,
    pub max_steer: f64,
    pub max_speed: f64,
    /// Friction-limited lateral acceleration; beyond it the path curvature
    /// saturates (understeer).
    pub max_lateral_accel: f64,
    /// Ego half length and half width.
    pub ego_half_extents: [f64; 2],
    /// Distance from the rear axle to the body centre.
    pub ego_center_offset: f64,
    pub lane_half_width: f64,
    pub deviation_threshold: f64,
    pub blocked_speed: f64,
    pub blocked_window_s: f64,
    pub debounce_s: f64,
    pub target_lookahead: f64,
    pub goal_tolerance: f64,
    pub camera: CameraConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            rate_hz: crate::types::DEFAULT_SIM_RATE_HZ,
            wheelbase: 2.7,
            max_accel: 3.0,
            max_decel: 8.0,
            max_steer: 0.6,
            max_speed: 30.0,
            max_lateral_accel: 8.0,
            ego_half_extents: [2.3, 0.95],
            ego_center_offset: 1.35,
            lane_half_width: 2.0,
            deviation_threshold: 4.0,
            blocked_speed: 0.1,
            blocked_window_s: 90.0,
            debounce_s: 2.0,
            target_lookahead: 6.0,
            goal_tolerance: 1.0,
            camera: CameraConfig::default(),
        }
    }
}

impl WorldConfig {
    pub fn with_rate(mut self, rate_hz: u32) -> Self {
        self.rate_hz = rate_hz;
        self
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.rate_hz as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfractionKind {
    CollisionVehicle,
    CollisionStatic,
    RedLight,
    RouteDeviation,
    Blocked,
    Timeout,
}

impl InfractionKind {
    pub const ALL: [InfractionKind; 6] = [
        InfractionKind::CollisionVehicle,
        InfractionKind::CollisionStatic,
        InfractionKind::RedLight,
        InfractionKind::RouteDeviation,
        InfractionKind::Blocked,
        InfractionKind::Timeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InfractionKind::CollisionVehicle => "collision_vehicle",
            InfractionKind::CollisionStatic => "collision_static",
            InfractionKind::RedLight => "red_light",
            InfractionKind::RouteDeviation => "route_deviation",
            InfractionKind::Blocked => "blocked",
            InfractionKind::Timeout => "timeout",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Infraction {
    pub kind: InfractionKind,
    pub tick: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Vehicle,
    Walker,
    Parked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LeadPhase {
    Cruise { remaining: u64 },
    Braking,
    Stopped { remaining: u64 },
    Resume,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ActorMotion {
    Static,
    /// Follows the route centerline at arc-length `s`.
    AlongRoute {
        s: f64,
        cruise_speed: f64,
        stop_ticks: u64,
        phase: LeadPhase,
    },
    /// Straight-line motion for a fixed distance, then despawn.
    Crossing {
        remaining: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: u32,
    pub kind: ActorKind,
    pub position: Vec2,
    pub heading: f64,
    pub speed: f64,
    pub half_extents: [f64; 2],
    pub height: f64,
    pub motion: ActorMotion,
    /// Inactive actors neither render nor collide (despawned or already hit).
    pub active: bool,
}

impl Actor {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_angle(self.heading) * self.speed
    }

    pub fn corners(&self) -> [Vec2; 4] {
        box_corners(self.position, self.heading, self.half_extents)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LightPhase {
    Red,
    Green,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficLight {
    pub position: Vec2,
    pub stop_line_s: f64,
    pub phase: LightPhase,
    /// Ticks left in the current red phase.
    pub timer: u64,
    red_ticks: u64,
    trigger: f64,
    armed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RouteStatus {
    Running,
    Completed,
    Deviated,
    Blocked,
    TimedOut,
}

impl RouteStatus {
    pub fn is_terminal(self) -> bool {
        self != RouteStatus::Running
    }
}

/// Full simulator truth at one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: Tick,
    pub ego: EgoState,
    pub actors: Vec<Actor>,
    pub lights: Vec<TrafficLight>,
    pub route_progress: f64,
    pub lateral_offset: f64,
    pub infractions: Vec<Infraction>,
    pub status: RouteStatus,
    /// Lateral acceleration over the last step, for comfort scoring.
    pub lateral_accel: f64,
    stopped_ticks: u64,
    last_active: [Option<u64>; 6],
    fired: Vec<bool>,
}

impl WorldState {
    pub fn completion(&self, route: &RouteSpec) -> f64 {
        (self.route_progress / route.length()).clamp(0.0, 1.0)
    }

    pub fn active_actor_count(&self) -> usize {
        self.actors.iter().filter(|a| a.active).count()
    }
}

fn box_corners(center: Vec2, heading: f64, half: [f64; 2]) -> [Vec2; 4] {
    let f = Vec2::from_angle(heading);
    let l = Vec2::new(-f.y, f.x);
    let (hx, hy) = (half[0], half[1]);
    [
        center + f * hx + l * hy,
        center + f * hx - l * hy,
        center - f * hx - l * hy,
        center - f * hx + l * hy,
    ]
}

/// Separating-axis test for two oriented rectangles.
pub fn boxes_overlap(a: &[Vec2; 4], b: &[Vec2; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..2 {
            let edge = poly[i + 1] - poly[i];
            let axis = Vec2::new(-edge.y, edge.x);
            let (amin, amax) = extent(a, axis);
            let (bmin, bmax) = extent(b, axis);
            if amax < bmin || bmax < amin {
                return false;
            }
        }
    }
    true
}

fn extent(poly: &[Vec2; 4], axis: Vec2) -> (f64, f64) {
    poly.iter()
        .map(|p| p.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

const LEAD_BRAKE_DECEL: f64 = 4.0;
const LEAD_RESUME_ACCEL: f64 = 2.0;

/// Immutable route and parameters; all state lives in [`WorldState`].
#[derive(Debug, Clone)]
pub struct Simulator {
    route: Arc<RouteSpec>,
    config: WorldConfig,
}

impl Simulator {
    pub fn new(route: Arc<RouteSpec>, config: WorldConfig) -> Self {
        Self { route, config }
    }

    pub fn route(&self) -> &RouteSpec {
        &self.route
    }

    pub fn config(&self) -> &WorldConfig {
        &self.config
    }

    pub fn time_budget_ticks(&self) -> u64 {
        self.route.time_budget_ticks(self.config.rate_hz)
    }

    pub fn initial_state(&self) -> WorldState {
        let ego = EgoState::at_rest(self.route.start_pose());
        let mut actors = Vec::new();
        for (i, ob) in self.route.static_obstacles.iter().enumerate() {
            let pose = self.route.pose_at(ob.at, ob.offset);
            actors.push(Actor {
                id: i as u32,
                kind: ActorKind::Parked,
                position: pose.position,
                heading: pose.heading,
                speed: 0.0,
                half_extents: ob.half_extents,
                height: ob.height,
                motion: ActorMotion::Static,
                active: true,
            });
        }
        let lights = self
            .route
            .events
            .iter()
            .filter_map(|ev| match *ev {
                ScenarioEvent::RedLight {
                    trigger,
                    stop_line,
                    red_s,
                } => Some(TrafficLight {
                    position: self.route.point_at(stop_line),
                    stop_line_s: stop_line,
                    phase: LightPhase::Green,
                    timer: 0,
                    red_ticks: (red_s * self.config.rate_hz as f64).round() as u64,
                    trigger,
                    armed: false,
                }),
                _ => None,
            })
            .collect();
        let mut state = WorldState {
            tick: Tick::zero(self.config.rate_hz),
            ego,
            actors,
            lights,
            route_progress: 0.0,
            lateral_offset: 0.0,
            infractions: Vec::new(),
            status: RouteStatus::Running,
            lateral_accel: 0.0,
            stopped_ticks: 0,
            last_active: [None; 6],
            fired: vec![false; self.route.events.len()],
        };
        self.fire_events(&mut state);
        state
    }

    fn ego_box(&self, ego: &EgoState) -> [Vec2; 4] {
        let center = ego.position + Vec2::from_angle(ego.heading) * self.config.ego_center_offset;
        box_corners(center, ego.heading, self.config.ego_half_extents)
    }

    /// Rear-axle pose after one step of the kinematic bicycle under `action`.
    fn integrate_ego(&self, ego: &EgoState, action: &Action) -> (EgoState, f64) {
        let cfg = &self.config;
        let dt = cfg.dt();
        let commanded = action.throttle * cfg.max_accel - action.brake * cfg.max_decel;
        let v0 = ego.speed;
        let v1 = (v0 + commanded * dt).clamp(0.0, cfg.max_speed);
        let accel = (v1 - v0) / dt;
        let steer_angle = action.steer.clamp(-1.0, 1.0) * cfg.max_steer;
        let v_avg = 0.5 * (v0 + v1);
        let mut curvature = steer_angle.tan() / cfg.wheelbase;
        if v_avg > 0.0 && v_avg * v_avg * curvature.abs() > cfg.max_lateral_accel {
            curvature = curvature.signum() * cfg.max_lateral_accel / (v_avg * v_avg);
        }
        let ds = v_avg * dt;
        let dtheta = curvature * ds;
        // Exact arc: chord of length ds * sinc(dtheta / 2) along the mid heading.
        let half = 0.5 * dtheta;
        let chord = if half.abs() < 1e-9 {
            ds
        } else {
            ds * half.sin() / half
        };
        let position = ego.position + Vec2::from_angle(ego.heading + half) * chord;
        let next = EgoState {
            position,
            heading: normalize_angle(ego.heading + dtheta),
            speed: v1,
            acceleration: accel,
            steer_angle,
        };
        (next, v_avg * v_avg * curvature)
    }

    fn advance_actor(&self, actor: &mut Actor) {
        if !actor.active {
            return;
        }
        let dt = self.config.dt();
        match actor.motion {
            ActorMotion::Static => {}
            ActorMotion::AlongRoute {
                s,
                cruise_speed,
                stop_ticks,
                phase,
            } => {
                let (speed, phase) = match phase {
                    LeadPhase::Cruise { remaining } if remaining > 0 => (
                        cruise_speed,
                        LeadPhase::Cruise {
                            remaining: remaining - 1,
                        },
                    ),
                    LeadPhase::Cruise { .. } | LeadPhase::Braking => {
                        let v = (actor.speed - LEAD_BRAKE_DECEL * dt).max(0.0);
                        if v == 0.0 {
                            (
                                0.0,
                                LeadPhase::Stopped {
                                    remaining: stop_ticks,
                                },
                            )
                        } else {
                            (v, LeadPhase::Braking)
                        }
                    }
                    LeadPhase::Stopped { remaining } if remaining > 0 => (
                        0.0,
                        LeadPhase::Stopped {
                            remaining: remaining - 1,
                        },
                    ),
                    LeadPhase::Stopped { .. } | LeadPhase::Resume => (
                        (actor.speed + LEAD_RESUME_ACCEL * dt).min(cruise_speed),
                        LeadPhase::Resume,
                    ),
                };
                let s = s + 0.5 * (actor.speed + speed) * dt;
                let pose = self.route.pose_at(s, 0.0);
                actor.position = pose.position;
                actor.heading = pose.heading;
                actor.speed = speed;
                actor.motion = ActorMotion::AlongRoute {
                    s,
                    cruise_speed,
                    stop_ticks,
                    phase,
                };
                if s > self.route.length() + 30.0 {
                    actor.active = false;
                }
            }
            ActorMotion::Crossing { remaining } => {
                let step = actor.speed * dt;
                actor.position = actor.position + Vec2::from_angle(actor.heading) * step;
                let remaining = remaining - step;
                actor.motion = ActorMotion::Crossing { remaining };
                if remaining <= 0.0 {
                    actor.active = false;
                }
            }
        }
    }

    fn fire_events(&self, state: &mut WorldState) {
        for (i, ev) in self.route.events.iter().enumerate() {
            if state.fired[i] || state.route_progress < ev.trigger() {
                continue;
            }
            state.fired[i] = true;
            let id = state.actors.len() as u32;
            match *ev {
                ScenarioEvent::LeadVehicle {
                    trigger,
                    gap,
                    cruise_speed,
                    cruise_s,
                    stop_s,
                    half_extents,
                } => {
                    let s = trigger + gap;
                    let pose = self.route.pose_at(s, 0.0);
                    let rate = self.config.rate_hz as f64;
                    state.actors.push(Actor {
                        id,
                        kind: ActorKind::Vehicle,
                        position: pose.position,
                        heading: pose.heading,
                        speed: cruise_speed,
                        half_extents,
                        height: 1.5,
                        motion: ActorMotion::AlongRoute {
                            s,
                            cruise_speed,
                            stop_ticks: (stop_s * rate).round() as u64,
                            phase: LeadPhase::Cruise {
                                remaining: (cruise_s * rate).round() as u64,
                            },
                        },
                        active: true,
                    });
                }
                ScenarioEvent::CrossingActor {
                    at,
                    start_offset,
                    speed,
                    half_extents,
                    height,
                    ..
                } => {
                    let start = self.route.pose_at(at, start_offset);
                    let road_heading = self.route.heading_at(at);
                    let dir = if start_offset > 0.0 {
                        road_heading - std::f64::consts::FRAC_PI_2
                    } else {
                        road_heading + std::f64::consts::FRAC_PI_2
                    };
                    let kind = if half_extents[0] > 1.0 {
                        ActorKind::Vehicle
                    } else {
                        ActorKind::Walker
                    };
                    state.actors.push(Actor {
                        id,
                        kind,
                        position: start.position,
                        heading: normalize_angle(dir),
                        speed,
                        half_extents,
                        height,
                        motion: ActorMotion::Crossing {
                            remaining: 2.0 * start_offset.abs(),
                        },
                        active: true,
                    });
                }
                ScenarioEvent::RedLight { .. } => {}
            }
        }
        for light in &mut state.lights {
            if !light.armed && state.route_progress >= light.trigger {
                light.armed = true;
                light.phase = LightPhase::Red;
                light.timer = light.red_ticks;
            }
        }
    }

    fn debounced(&self, state: &mut WorldState, kind: InfractionKind, tick: u64) {
        let window = (self.config.debounce_s * self.config.rate_hz as f64).round() as u64;
        let slot = &mut state.last_active[kind.index()];
        let fresh = match *slot {
            None => true,
            Some(last) => tick.saturating_sub(last) > window,
        };
        *slot = Some(tick);
        if fresh {
            state.infractions.push(Infraction { kind, tick });
        }
    }

    /// Advances the world by one tick. Pure in `(state, action)`.
    pub fn step(&self, state: &WorldState, action: &Action) -> WorldState {
        let mut next = state.clone();
        if state.status.is_terminal() {
            return next;
        }
        let cfg = &self.config;
        let tick = state.tick.index + 1;
        next.tick = state.tick.next();

        let prev_front = state.route_progress + cfg.ego_center_offset + cfg.ego_half_extents[0];
        let (ego, lat_accel) = self.integrate_ego(&state.ego, action);
        next.ego = ego;
        next.lateral_accel = lat_accel;

        for actor in &mut next.actors {
            self.advance_actor(actor);
        }

        for light in &mut next.lights {
            if light.phase == LightPhase::Red {
                light.timer = light.timer.saturating_sub(1);
                if light.timer == 0 {
                    light.phase = LightPhase::Green;
                }
            }
        }

        let proj = self.route.project_window(
            next.ego.position,
            state.route_progress - 5.0,
            state.route_progress + 20.0,
        );
        next.lateral_offset = proj.lateral;
        if proj.s > next.route_progress {
            next.route_progress = proj.s;
        }

        // Collisions.
        let ego_box = self.ego_box(&next.ego);
        let mut hit = None;
        for actor in next.actors.iter_mut().filter(|a| a.active) {
            if boxes_overlap(&ego_box, &actor.corners()) {
                actor.active = false;
                hit = Some(match actor.kind {
                    ActorKind::Parked => InfractionKind::CollisionStatic,
                    _ => InfractionKind::CollisionVehicle,
                });
                break;
            }
        }
        if let Some(kind) = hit {
            next.ego.speed = 0.0;
            self.debounced(&mut next, kind, tick);
        }

        // Red light: front bumper crosses the stop line while red.
        let front = next.route_progress + cfg.ego_center_offset + cfg.ego_half_extents[0];
        let ran_red = next.lights.iter().any(|l| {
            l.phase == LightPhase::Red && prev_front < l.stop_line_s && front >= l.stop_line_s
        });
        if ran_red && proj.lateral.abs() <= cfg.deviation_threshold {
            self.debounced(&mut next, InfractionKind::RedLight, tick);
        }

        if next.route_progress >= self.route.length() - cfg.goal_tolerance {
            next.route_progress = self.route.length();
            next.status = RouteStatus::Completed;
        } else if proj.lateral.abs() > cfg.deviation_threshold {
            self.debounced(&mut next, InfractionKind::RouteDeviation, tick);
            next.status = RouteStatus::Deviated;
        } else {
            if next.ego.speed < cfg.blocked_speed {
                next.stopped_ticks += 1;
            } else {
                next.stopped_ticks = 0;
            }
            let blocked_window = (cfg.blocked_window_s * cfg.rate_hz as f64).round() as u64;
            if next.stopped_ticks > blocked_window {
                self.debounced(&mut next, InfractionKind::Blocked, tick);
                next.status = RouteStatus::Blocked;
            } else if tick > self.time_budget_ticks() {
                self.debounced(&mut next, InfractionKind::Timeout, tick);
                next.status = RouteStatus::TimedOut;
            }
        }

        if !next.status.is_terminal() {
            self.fire_events(&mut next);
        }
        next
    }

    /// Centerline point `target_lookahead` metres ahead of current progress.
    pub fn target_point(&self, state: &WorldState) -> Vec2 {
        self.route
            .point_at(state.route_progress + self.config.target_lookahead)
    }

    pub fn render_camera(&self, state: &WorldState) -> Raster {
        render_camera(&self.route, &self.config, state)
    }

    /// Clean observation: exact channels and the current tick as stamp.
    pub fn observe(&self, state: &WorldState) -> Observation {
        Observation {
            camera: self.render_camera(state),
            gps: state.ego.position,
            speed: state.ego.speed,
            target_point: self.target_point(state),
            compass: state.ego.heading,
            stamp: state.tick.index,
        }
    }

    pub fn start_pose(&self) -> Pose {
        self.route.start_pose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::route::StaticObstacle;

    fn straight(len: f64, events: Vec<ScenarioEvent>) -> Simulator {
        let n = (len / 2.0) as usize;
        let route = RouteSpec::new(
            "straight",
            "straight",
            (0..=n).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect(),
            10.0,
            60.0,
            events,
            vec![],
        )
        .unwrap();
        Simulator::new(Arc::new(route), WorldConfig::default())
    }

    fn with_speed(mut s: WorldState, v: f64) -> WorldState {
        s.ego.speed = v;
        s
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let sim = straight(200.0, vec![]);
        let s0 = sim.initial_state();
        let s1 = sim.step(&s0, &Action::clamped(0.0, 0.0, 0.0, 0));
        assert_eq!(s1.tick.index, 1);
        assert_eq!(s1.ego.position, s0.ego.position);
        assert_eq!(s1.ego.speed, 0.0);
    }

    #[test]
    fn full_brake_stops_within_closed_form_bound() {
        let sim = straight(200.0, vec![]);
        let cfg = sim.config().clone();
        let mut s = with_speed(sim.initial_state(), 5.0);
        let bound = (5.0 / cfg.max_decel * cfg.rate_hz as f64).floor() as u64 + 1;
        let mut prev = s.ego.speed;
        let mut ticks = 0;
        while s.ego.speed > 0.0 {
            s = sim.step(&s, &Action::full_brake(s.tick.index));
            assert!(s.ego.speed < prev);
            prev = s.ego.speed;
            ticks += 1;
            assert!(ticks <= bound, "still moving after {ticks} ticks");
        }
        // Constant deceleration: 5 / (8 * 0.05) = 12.5 -> 13 ticks.
        assert_eq!(ticks, 13);
    }

    #[test]
    fn zero_steer_keeps_heading() {
        let sim = straight(200.0, vec![]);
        let mut s = sim.initial_state();
        for _ in 0..100 {
            s = sim.step(&s, &Action::clamped(0.5, 0.0, 0.0, 0));
        }
        assert_eq!(s.ego.heading, 0.0);
        assert!(s.ego.position.y.abs() < 1e-12);
    }

    #[test]
    fn constant_steer_traces_bicycle_circle() {
        // Open area: a huge route so no detector terminates the run.
        let route = RouteSpec::new(
            "pad",
            "",
            vec![Vec2::new(-1000.0, 0.0), Vec2::new(1000.0, 0.0)],
            10.0,
            1000.0,
            vec![],
            vec![],
        )
        .unwrap();
        let cfg = WorldConfig {
            deviation_threshold: f64::INFINITY,
            ..WorldConfig::default()
        };
        let sim = Simulator::new(Arc::new(route), cfg.clone());
        let mut s = sim.initial_state();
        s.ego.position = Vec2::ZERO;
        s.route_progress = 1000.0 - 100.0;
        s.ego.speed = 4.0;
        let steer = 0.3;
        let radius = cfg.wheelbase / (steer * cfg.max_steer).tan();
        let center = Vec2::new(0.0, radius);
        let omega = 4.0 / radius;
        let ticks = (std::f64::consts::TAU / omega * cfg.rate_hz as f64).ceil() as usize;
        let mut max_err: f64 = 0.0;
        for _ in 0..ticks {
            s = sim.step(&s, &Action::clamped(0.0, 0.0, steer, 0));
            let r = (s.ego.position - center).norm();
            max_err = max_err.max((r - radius).abs() / radius);
        }
        assert!(max_err < 0.01, "radius error {max_err}");
    }

    #[test]
    fn progress_never_decreases() {
        let sim = straight(200.0, vec![]);
        let mut s = sim.initial_state();
        let mut last = 0.0;
        for i in 0..200 {
            let a = if i < 100 {
                Action::clamped(1.0, 0.0, 0.1, 0)
            } else {
                Action::clamped(0.0, 0.3, -0.2, 0)
            };
            s = sim.step(&s, &a);
            assert!(s.route_progress >= last);
            last = s.route_progress;
            let c = s.completion(sim.route());
            assert!((0.0..=1.0).contains(&c));
        }
    }

    #[test]
    fn running_red_light_records_one_infraction() {
        let sim = straight(
            200.0,
            vec![ScenarioEvent::RedLight {
                trigger: 0.0,
                stop_line: 30.0,
                red_s: 30.0,
            }],
        );
        let mut s = with_speed(sim.initial_state(), 8.0);
        let mut crossing_tick = None;
        for _ in 0..100 {
            let before = s.infractions.len();
            s = sim.step(&s, &Action::clamped(0.0, 0.0, 0.0, 0));
            if s.infractions.len() > before {
                crossing_tick.get_or_insert(s.tick.index);
            }
        }
        let reds: Vec<_> = s
            .infractions
            .iter()
            .filter(|i| i.kind == InfractionKind::RedLight)
            .collect();
        assert_eq!(reds.len(), 1);
        assert_eq!(Some(reds[0].tick), crossing_tick);
        // Front bumper = progress + 1.35 + 2.3 reaches 30 m at progress 26.35.
        let expected = (26.35_f64 / 8.0 * 20.0).ceil() as u64;
        assert_eq!(reds[0].tick, expected);
    }

    #[test]
    fn green_light_is_not_an_infraction() {
        let sim = straight(
            200.0,
            vec![ScenarioEvent::RedLight {
                trigger: 150.0,
                stop_line: 160.0,
                red_s: 30.0,
            }],
        );
        let mut s = with_speed(sim.initial_state(), 8.0);
        for _ in 0..60 {
            s = sim.step(&s, &Action::clamped(0.0, 0.0, 0.0, 0));
        }
        assert!(s.infractions.is_empty());
    }

    #[test]
    fn collision_with_lead_counts_once_and_stops_ego() {
        let sim = straight(
            200.0,
            vec![ScenarioEvent::LeadVehicle {
                trigger: 0.0,
                gap: 20.0,
                cruise_speed: 0.0,
                cruise_s: 100.0,
                stop_s: 100.0,
                half_extents: [2.25, 0.95],
            }],
        );
        let mut s = with_speed(sim.initial_state(), 10.0);
        for _ in 0..80 {
            s = sim.step(&s, &Action::clamped(0.3, 0.0, 0.0, 0));
        }
        let hits: Vec<_> = s
            .infractions
            .iter()
            .filter(|i| i.kind == InfractionKind::CollisionVehicle)
            .collect();
        assert_eq!(hits.len(), 1);
        assert_eq!(s.active_actor_count(), 0);
    }

    #[test]
    fn parked_car_collision_is_static() {
        let route = RouteSpec::new(
            "p",
            "straight",
            (0..=100).map(|i| Vec2::new(i as f64 * 2.0, 0.0)).collect(),
            10.0,
            60.0,
            vec![],
            vec![StaticObstacle {
                at: 30.0,
                offset: 0.0,
                half_extents: [2.25, 0.95],
                height: 1.5,
            }],
        )
        .unwrap();
        let sim = Simulator::new(Arc::new(route), WorldConfig::default());
        let mut s = with_speed(sim.initial_state(), 8.0);
        for _ in 0..80 {
            s = sim.step(&s, &Action::clamped(0.0, 0.0, 0.0, 0));
        }
        assert_eq!(s.infractions.len(), 1);
        assert_eq!(s.infractions[0].kind, InfractionKind::CollisionStatic);
        assert_eq!(s.ego.speed, 0.0);
    }

    #[test]
    fn leaving_the_lane_terminates_with_deviation() {
        let sim = straight(200.0, vec![]);
        let mut s = with_speed(sim.initial_state(), 8.0);
        for _ in 0..100 {
            s = sim.step(&s, &Action::clamped(0.0, 0.0, 0.5, 0));
            if s.status.is_terminal() {
                break;
            }
        }
        assert_eq!(s.status, RouteStatus::Deviated);
        assert_eq!(
            s.infractions.last().unwrap().kind,
            InfractionKind::RouteDeviation
        );
    }

    #[test]
    fn standing_still_times_out() {
        let sim = straight(200.0, vec![]);
        let mut s = sim.initial_state();
        let budget = sim.time_budget_ticks();
        while !s.status.is_terminal() {
            s = sim.step(&s, &Action::full_brake(s.tick.index));
        }
        assert_eq!(s.status, RouteStatus::TimedOut);
        assert_eq!(s.tick.index, budget + 1);
    }

    #[test]
    fn reaching_the_end_completes() {
        let sim = straight(100.0, vec![]);
        let mut s = with_speed(sim.initial_state(), 10.0);
        while !s.status.is_terminal() {
            s = sim.step(&s, &Action::clamped(0.0, 0.0, 0.0, 0));
        }
        assert_eq!(s.status, RouteStatus::Completed);
        assert_eq!(s.completion(sim.route()), 1.0);
        assert!(s.infractions.is_empty());
    }

    #[test]
    fn observe_is_clean_and_stamped() {
        let sim = straight(200.0, vec![]);
        let mut s = sim.initial_state();
        let o = sim.observe(&s);
        assert_eq!(o.gps, Vec2::ZERO);
        s.ego.speed = 7.3;
        assert_eq!(sim.observe(&s).speed, 7.3);
        for _ in 0..100 {
            assert_eq!(sim.observe(&s).stamp, s.tick.index);
            s = sim.step(&s, &Action::clamped(0.2, 0.0, 0.0, 0));
        }
    }

    #[test]
    fn identical_rollouts_are_identical() {
        let sim = straight(
            200.0,
            vec![ScenarioEvent::LeadVehicle {
                trigger: 0.0,
                gap: 30.0,
                cruise_speed: 5.0,
                cruise_s: 3.0,
                stop_s: 2.0,
                half_extents: [2.25, 0.95],
            }],
        );
        let run = || {
            let mut s = sim.initial_state();
            let mut log = Vec::new();
            for i in 0..150 {
                s = sim.step(
                    &s,
                    &Action::clamped(0.6, 0.0, ((i % 7) as f64 - 3.0) * 0.01, i),
                );
                log.push(serde_json::to_string(&s).unwrap());
            }
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn boxes_overlap_sat() {
        let a = box_corners(Vec2::ZERO, 0.0, [1.0, 1.0]);
        let b = box_corners(Vec2::new(1.5, 0.0), 0.7, [1.0, 0.2]);
        let c = box_corners(Vec2::new(3.5, 0.0), 0.0, [1.0, 1.0]);
        assert!(boxes_overlap(&a, &b));
        assert!(!boxes_overlap(&a, &c));
    }
}
