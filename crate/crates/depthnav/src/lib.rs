//! Reactive 3D obstacle avoidance from noisy depth-image streams.
//!
//! The pipeline discretizes each depth image into a 2.5D voxel grid, tracks a
//! belief over occupied voxels (plus an obstacle-free boundary state) with a
//! particle filter, and steers a non-holonomic robot along the negative
//! gradient of a belief-weighted artificial potential field.
//!
//! Modules follow the data flow:
//!
//! * [`grid`] — depth images, the voxel grid, state indexing, pinhole projection
//! * [`image_io`] — PFM and raw binary depth-image files
//! * [`models`] — state-transition and observation models
//! * [`filter`] — particle filter and the exact forward-filter oracle
//! * [`control`] — potentials, gradients, and the steering law
//! * [`sim`] — depth renderer, noise injection, kinematic robot, scenarios
//! * [`config`] — run configuration files and shipped presets
//! * [`logs`] — CSV artifacts and the run manifest
//! * [`plot`] — SVG report generation

pub mod config;
pub mod control;
pub mod filter;
pub mod grid;
mod hash;
pub mod image_io;
pub mod logs;
pub mod models;
pub mod plot;
pub mod sim;

pub use config::RunConfig;
pub use control::{
    attractive_force, net_direction, repulsive_force, steering_command, BodyFrameExtrinsics,
    ControlCommand, NetDirection, PotentialConfig, VelocityLimits,
};
pub use filter::{exact_forward_filter, exact_forward_step, Belief, ParticleSet};
pub use grid::{
    build_grid_spec, discretize, project_state_to_3d, CameraIntrinsics, DepthImage, GridSpec,
    StateIndex, VoxelObservation,
};
pub use models::{ObservationParams, TransitionModel};
pub use sim::{
    inject_noise, render_depth, run_scenario, NoiseSpec, Outcome, Pipeline, RobotState,
    ScenarioResult, Scene,
};
