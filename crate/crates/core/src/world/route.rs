//! Route definitions and the bundled route suite.
//!
//! A route file is TOML (schema version 1):
//!
//! ```toml
//! schema = 1
//! id = "curve_01"
//! kind = "curve"
//! speed_limit = 10.0          # m/s
//! time_budget_s = 45.0
//! centerline = [[0.0, 0.0], [2.0, 0.0], ...]
//!
//! [[events]]
//! kind = "red_light"          # or lead_vehicle / crossing_actor
//! trigger = 40.0              # ego arc-length that arms the event
//! ...
//!
//! [[static_obstacles]]
//! at = 50.0                   # arc-length of the obstacle centre
//! offset = 3.4                # signed lateral offset, left positive
//! ```
//!
//! See `routes/SCHEMA.md` for every field.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Pose, Vec2};

pub const ROUTE_SCHEMA_VERSION: u32 = 1;

fn default_car_extents() -> [f64; 2] {
    [2.25, 0.95]
}

fn default_car_height() -> f64 {
    1.5
}

fn default_walker_extents() -> [f64; 2] {
    [0.35, 0.35]
}

fn default_walker_height() -> f64 {
    1.8
}

/// Scripted scenario content, armed when ego progress reaches `trigger`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScenarioEvent {
    /// A vehicle appears `gap` metres past the trigger, cruises, brakes to a
    /// stop, waits, then drives off along the route.
    LeadVehicle {
        trigger: f64,
        gap: f64,
        cruise_speed: f64,
        cruise_s: f64,
        stop_s: f64,
        #[serde(default = "default_car_extents")]
        half_extents: [f64; 2],
    },
    /// A signal at `stop_line` turns red when triggered and stays red for
    /// `red_s` seconds.
    RedLight {
        trigger: f64,
        stop_line: f64,
        red_s: f64,
    },
    /// An actor starts `start_offset` metres to the side of the route at
    /// arc-length `at` and crosses to the mirrored offset at `speed`.
    CrossingActor {
        trigger: f64,
        at: f64,
        start_offset: f64,
        speed: f64,
        #[serde(default = "default_walker_extents")]
        half_extents: [f64; 2],
        #[serde(default = "default_walker_height")]
        height: f64,
    },
}

impl ScenarioEvent {
    pub fn trigger(&self) -> f64 {
        match self {
            ScenarioEvent::LeadVehicle { trigger, .. }
            | ScenarioEvent::RedLight { trigger, .. }
            | ScenarioEvent::CrossingActor { trigger, .. } => *trigger,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            ScenarioEvent::LeadVehicle { .. } => "lead_vehicle",
            ScenarioEvent::RedLight { .. } => "red_light",
            ScenarioEvent::CrossingActor { .. } => "crossing_actor",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticObstacle {
    pub at: f64,
    pub offset: f64,
    #[serde(default = "default_car_extents")]
    pub half_extents: [f64; 2],
    #[serde(default = "default_car_height")]
    pub height: f64,
}

#[derive(Debug, Clone, Deserialize)]
struct RouteFile {
    schema: u32,
    id: String,
    #[serde(default)]
    kind: String,
    speed_limit: f64,
    time_budget_s: f64,
    centerline: Vec<[f64; 2]>,
    #[serde(default)]
    events: Vec<ScenarioEvent>,
    #[serde(default)]
    static_obstacles: Vec<StaticObstacle>,
}

/// Result of projecting a point onto the centerline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc-length of the closest point.
    pub s: f64,
    /// Signed lateral offset, left of the direction of travel positive.
    pub lateral: f64,
}

/// A validated route with precomputed arc-lengths.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RouteSpec {
    pub id: String,
    pub kind: String,
    pub speed_limit: f64,
    pub time_budget_s: f64,
    pub centerline: Vec<Vec2>,
    pub events: Vec<ScenarioEvent>,
    pub static_obstacles: Vec<StaticObstacle>,
    #[serde(skip)]
    arc: Vec<f64>,
}

impl RouteSpec {
    pub fn new(
        id: impl Into<String>,
        kind: impl Into<String>,
        centerline: Vec<Vec2>,
        speed_limit: f64,
        time_budget_s: f64,
        events: Vec<ScenarioEvent>,
        static_obstacles: Vec<StaticObstacle>,
    ) -> Result<Self> {
        let id = id.into();
        let bad = |reason: String| Error::InvalidRoute {
            id: id.clone(),
            reason,
        };
        if centerline.len() < 2 {
            return Err(bad("centerline needs at least two points".into()));
        }
        if centerline.iter().any(|p| !p.is_finite()) {
            return Err(bad("centerline contains non-finite points".into()));
        }
        let mut arc = Vec::with_capacity(centerline.len());
        arc.push(0.0);
        for w in centerline.windows(2) {
            let seg = (w[1] - w[0]).norm();
            if seg <= 1e-9 {
                return Err(bad("arc-length must be strictly increasing".into()));
            }
            arc.push(arc.last().unwrap() + seg);
        }
        let length = *arc.last().unwrap();
        if speed_limit.is_nan() || speed_limit <= 0.0 {
            return Err(bad("speed_limit must be positive".into()));
        }
        if time_budget_s.is_nan() || time_budget_s <= 0.0 {
            return Err(bad("time_budget_s must be positive".into()));
        }
        for ev in &events {
            let t = ev.trigger();
            if !(0.0..=length).contains(&t) {
                return Err(bad(format!(
                    "{} trigger {t} outside route length {length:.1}",
                    ev.kind_name()
                )));
            }
            match ev {
                ScenarioEvent::RedLight { stop_line, .. }
                    if !(0.0..=length).contains(stop_line) =>
                {
                    return Err(bad(format!("stop line {stop_line} outside route")));
                }
                ScenarioEvent::CrossingActor { at, .. } if !(0.0..=length).contains(at) => {
                    return Err(bad(format!("crossing point {at} outside route")));
                }
                _ => {}
            }
        }
        for ob in &static_obstacles {
            if !(0.0..=length).contains(&ob.at) {
                return Err(bad(format!("static obstacle at {} outside route", ob.at)));
            }
        }
        Ok(Self {
            id,
            kind: kind.into(),
            speed_limit,
            time_budget_s,
            centerline,
            events,
            static_obstacles,
            arc,
        })
    }

    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self> {
        let file: RouteFile = toml::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })?;
        if file.schema != ROUTE_SCHEMA_VERSION {
            return Err(Error::InvalidRoute {
                id: file.id,
                reason: format!(
                    "unsupported schema {} (expected {ROUTE_SCHEMA_VERSION})",
                    file.schema
                ),
            });
        }
        Self::new(
            file.id,
            file.kind,
            file.centerline
                .into_iter()
                .map(|[x, y]| Vec2::new(x, y))
                .collect(),
            file.speed_limit,
            file.time_budget_s,
            file.events,
            file.static_obstacles,
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, path)
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    pub fn time_budget_ticks(&self, rate_hz: u32) -> u64 {
        (self.time_budget_s * rate_hz as f64).ceil() as u64
    }

    pub fn start_pose(&self) -> Pose {
        Pose {
            position: self.centerline[0],
            heading: self.segment_heading(0),
        }
    }

    pub fn segment_count(&self) -> usize {
        self.centerline.len() - 1
    }

    /// Start point, end point and start arc-length of segment `i`.
    pub fn segment(&self, i: usize) -> (Vec2, Vec2, f64) {
        (self.centerline[i], self.centerline[i + 1], self.arc[i])
    }

    fn segment_heading(&self, i: usize) -> f64 {
        let d = self.centerline[i + 1] - self.centerline[i];
        d.y.atan2(d.x)
    }

    fn segment_index(&self, s: f64) -> usize {
        match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(i) => i.min(self.segment_count() - 1),
            Err(i) => i.saturating_sub(1).min(self.segment_count() - 1),
        }
    }

    /// Segment index range covering arc-lengths `[s0, s1]`.
    pub fn segments_between(&self, s0: f64, s1: f64) -> std::ops::RangeInclusive<usize> {
        self.segment_index(s0.max(0.0))..=self.segment_index(s1.min(self.length()))
    }

    /// Point on the centerline at arc-length `s`; beyond the end the final
    /// segment is extended linearly.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let i = if s >= self.length() {
            self.segment_count() - 1
        } else {
            self.segment_index(s.max(0.0))
        };
        let (a, b, s0) = self.segment(i);
        let seg_len = self.arc[i + 1] - s0;
        a + (b - a) * ((s.max(0.0) - s0) / seg_len)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.segment_heading(self.segment_index(s.clamp(0.0, self.length())))
    }

    /// Pose on the route at `s` shifted laterally by `offset` (left positive).
    pub fn pose_at(&self, s: f64, offset: f64) -> Pose {
        let heading = self.heading_at(s);
        let normal = Vec2::from_angle(heading + std::f64::consts::FRAC_PI_2);
        Pose {
            position: self.point_at(s) + normal * offset,
            heading,
        }
    }

    /// Projects `p` onto the centerline, searching only arc-lengths within
    /// `[s_lo, s_hi]` so self-approaching routes do not alias.
    pub fn project_window(&self, p: Vec2, s_lo: f64, s_hi: f64) -> Projection {
        let mut best = Projection {
            s: 0.0,
            lateral: f64::INFINITY,
        };
        let mut best_d2 = f64::INFINITY;
        for i in self.segments_between(s_lo, s_hi) {
            let (a, b, s0) = self.segment(i);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let q = a + ab * t;
            let d2 = (p - q).dot(p - q);
            if d2 < best_d2 {
                best_d2 = d2;
                let side = ab.cross(p - a).signum();
                best = Projection {
                    s: s0 + t * len2.sqrt(),
                    lateral: side * d2.sqrt(),
                };
            }
        }
        best
    }

    pub fn project(&self, p: Vec2) -> Projection {
        self.project_window(p, 0.0, self.length())
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("straight_01", include_str!("../../routes/straight_01.toml")),
    ("straight_02", include_str!("../../routes/straight_02.toml")),
    ("curve_01", include_str!("../../routes/curve_01.toml")),
    ("curve_02", include_str!("../../routes/curve_02.toml")),
    (
        "signal_turn_01",
        include_str!("../../routes/signal_turn_01.toml"),
    ),
    (
        "signal_turn_02",
        include_str!("../../routes/signal_turn_02.toml"),
    ),
    (
        "lead_stop_01",
        include_str!("../../routes/lead_stop_01.toml"),
    ),
    (
        "lead_stop_02",
        include_str!("../../routes/lead_stop_02.toml"),
    ),
    ("s_curve_01", include_str!("../../routes/s_curve_01.toml")),
    ("s_curve_02", include_str!("../../routes/s_curve_02.toml")),
    ("crossing_01", include_str!("../../routes/crossing_01.toml")),
    ("crossing_02", include_str!("../../routes/crossing_02.toml")),
];

/// Route kinds without interactive actors; every reference policy is
/// expected to finish these cleanly.
pub const EASY_KINDS: &[&str] = &["straight", "curve", "s_curve"];

/// A named, ordered collection of routes.
#[derive(Debug, Clone)]
pub struct RouteSuite {
    pub id: String,
    pub routes: Vec<RouteSpec>,
}

impl RouteSuite {
    /// The twelve-route suite compiled into the binary.
    pub fn bundled() -> Self {
        let routes = BUNDLED
            .iter()
            .map(|(name, text)| {
                RouteSpec::from_toml_str(text, Path::new(name))
                    .unwrap_or_else(|e| panic!("bundled route {name} is invalid: {e}"))
            })
            .collect();
        Self {
            id: "bundled".into(),
            routes,
        }
    }

    /// Loads every `*.toml` in `dir`, ordered by file name.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "toml"))
            .collect();
        paths.sort();
        let routes = paths
            .iter()
            .map(|p| RouteSpec::load(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            id: dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| "custom".into()),
            routes,
        })
    }

    pub fn get(&self, id: &str) -> Result<&RouteSpec> {
        self.routes
            .iter()
            .find(|r| r.id == id)
            .ok_or_else(|| Error::UnknownRoute(id.to_string()))
    }

    /// Keeps only the listed route ids, preserving suite order.
    pub fn filter(&self, ids: &[String]) -> Result<Self> {
        for id in ids {
            self.get(id)?;
        }
        Ok(Self {
            id: self.id.clone(),
            routes: self
                .routes
                .iter()
                .filter(|r| ids.contains(&r.id))
                .cloned()
                .collect(),
        })
    }

    pub fn easy(&self) -> Self {
        Self {
            id: format!("{}-easy", self.id),
            routes: self
                .routes
                .iter()
                .filter(|r| EASY_KINDS.contains(&r.kind.as_str()))
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn straight(len: f64) -> RouteSpec {
        RouteSpec::new(
            "s",
            "straight",
            vec![Vec2::new(0.0, 0.0), Vec2::new(len, 0.0)],
            10.0,
            30.0,
            vec![],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn rejects_degenerate_centerline() {
        let err = RouteSpec::new("x", "", vec![Vec2::ZERO], 10.0, 10.0, vec![], vec![]);
        assert!(err.is_err());
        let dup = RouteSpec::new(
            "x",
            "",
            vec![Vec2::ZERO, Vec2::ZERO, Vec2::new(1.0, 0.0)],
            10.0,
            10.0,
            vec![],
            vec![],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn rejects_trigger_past_end() {
        let ev = ScenarioEvent::RedLight {
            trigger: 150.0,
            stop_line: 90.0,
            red_s: 3.0,
        };
        let r = RouteSpec::new(
            "x",
            "",
            vec![Vec2::ZERO, Vec2::new(100.0, 0.0)],
            10.0,
            10.0,
            vec![ev],
            vec![],
        );
        assert!(matches!(r, Err(Error::InvalidRoute { .. })));
    }

    #[test]
    fn projection_signs_left_positive() {
        let r = straight(100.0);
        let p = r.project(Vec2::new(30.0, 2.0));
        assert!((p.s - 30.0).abs() < 1e-12);
        assert!((p.lateral - 2.0).abs() < 1e-12);
        let q = r.project(Vec2::new(30.0, -1.5));
        assert!((q.lateral + 1.5).abs() < 1e-12);
    }

    #[test]
    fn point_at_extrapolates_past_end() {
        let r = straight(100.0);
        assert_eq!(r.point_at(50.0), Vec2::new(50.0, 0.0));
        let p = r.point_at(110.0);
        assert!((p.x - 110.0).abs() < 1e-9 && p.y == 0.0);
    }

    #[test]
    fn bundled_suite_is_valid() {
        let suite = RouteSuite::bundled();
        assert_eq!(suite.routes.len(), 12);
        for r in &suite.routes {
            assert!(r.length() > 50.0, "{} too short", r.id);
        }
        let kinds: std::collections::BTreeSet<_> =
            suite.routes.iter().map(|r| r.kind.as_str()).collect();
        assert_eq!(kinds.len(), 6);
        assert_eq!(suite.easy().routes.len(), 6);
    }

    #[test]
    fn unknown_route_is_reported() {
        let suite = RouteSuite::bundled();
        assert!(matches!(suite.get("nope"), Err(Error::UnknownRoute(_))));
    }
}
