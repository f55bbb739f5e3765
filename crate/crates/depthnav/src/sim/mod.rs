//! Simulation harness: synthetic depth camera, sensor-noise injection, a
//! kinematic robot, and closed-loop scenario execution with collision
//! checking.

pub mod noise;
pub mod render;
pub mod robot;
pub mod scenario;
pub mod scenarios;
pub mod scene;

pub use noise::{inject_noise, NoiseSpec};
pub use render::render_depth;
pub use robot::{step_robot, wrap_angle, RobotState};
pub use scenario::{run_scenario, FrameLog, FrameProcessor, Outcome, Pipeline, ScenarioResult};
pub use scenarios::{
    cylinder_slalom, hanging_cable, shipped_scenarios, sphere_field, start_of, ShippedScenario,
};
pub use scene::{GoalRegion, Primitive, Scene, SceneError, StartPose};
