//! Deterministic 2D driving world: routes, kinematics, scripted traffic,
//! infraction detection and the synthetic camera.

pub mod render;
pub mod route;
pub mod sim;

pub use render::{codes, render_camera, CameraConfig};
pub use route::{RouteSpec, RouteSuite, ScenarioEvent, StaticObstacle};
pub use sim::{
    Actor, ActorKind, Infraction, InfractionKind, LightPhase, RouteStatus, Simulator, WorldConfig,
    WorldState,
};
