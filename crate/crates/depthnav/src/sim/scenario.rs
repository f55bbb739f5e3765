//! Closed-loop execution: render, corrupt, perceive, steer, integrate.

use crate::control::{
    net_direction, steering_command, BodyFrameExtrinsics, ControlCommand, PotentialConfig,
    VelocityLimits,
};
use crate::filter::ParticleSet;
use crate::grid::{discretize, CameraIntrinsics, DepthImage, GridSpec};
use crate::models::{ObservationParams, TransitionModel};
use crate::sim::noise::{inject_noise, NoiseSpec};
use crate::sim::render::render_depth;
use crate::sim::robot::{step_robot, RobotState};
use crate::sim::scene::{GoalRegion, Scene};
use nalgebra::Vector3;
use std::time::Instant;

/// Everything a run needs, prebuilt from a validated configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub spec: GridSpec,
    pub intr: CameraIntrinsics,
    pub extr: BodyFrameExtrinsics,
    pub model: TransitionModel,
    pub obs_params: ObservationParams,
    pub potential: PotentialConfig,
    pub limits: VelocityLimits,
    pub noise: NoiseSpec,
    pub frame_rate: f64,
    pub robot_radius: f64,
    pub max_range: f64,
    pub particles: usize,
    pub filter_seed: u64,
    pub max_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Reached,
    Collided,
    Timeout,
}

impl Outcome {
    pub fn as_str(&self) -> &'static str {
        match self {
            Outcome::Reached => "reached",
            Outcome::Collided => "collided",
            Outcome::Timeout => "timeout",
        }
    }
}

/// Per-frame record of the perception and control quantities the CSV
/// artifacts export.
#[derive(Debug, Clone)]
pub struct FrameLog {
    pub frame: usize,
    /// Robot time at the start of the frame, seconds.
    pub time: f64,
    pub command: ControlCommand,
    pub nu: Vector3<f64>,
    pub f_rep_magnitude: f64,
    pub stagnation: bool,
    pub mode_linear: usize,
    pub mode_belief: f64,
    /// Depth of the closest valid pixel in the (noisy) frame, if any.
    pub closest_raw_depth: Option<f32>,
    /// Wall-clock cost of discretize + filter update + controller, ms.
    pub compute_ms: f64,
    /// Nonzero belief entries, sorted by linear state.
    pub belief_sparse: Vec<(u32, f64)>,
}

/// Result of one closed-loop run.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub outcome: Outcome,
    /// Poses: starting pose plus one per executed frame.
    pub trajectory: Vec<RobotState>,
    pub frames: Vec<FrameLog>,
    /// Smallest surface-to-surface distance to any obstacle, minus nothing —
    /// infinity in an empty scene.
    pub min_clearance: f64,
    pub path_length: f64,
}

/// The per-frame perception/control core shared by closed-loop runs and
/// offline replays: discretize, filter update, steer.
pub struct FrameProcessor {
    spec: GridSpec,
    intr: CameraIntrinsics,
    extr: BodyFrameExtrinsics,
    model: TransitionModel,
    obs_params: ObservationParams,
    potential: PotentialConfig,
    limits: VelocityLimits,
    particles: ParticleSet,
    frame: usize,
}

impl FrameProcessor {
    pub fn new(pl: &Pipeline) -> Self {
        let particles = ParticleSet::init_uniform(pl.particles, &pl.spec, pl.filter_seed)
            .expect("particle count validated with the config");
        Self {
            spec: pl.spec,
            intr: pl.intr,
            extr: pl.extr,
            model: pl.model.clone(),
            obs_params: pl.obs_params,
            potential: pl.potential,
            limits: pl.limits,
            particles,
            frame: 0,
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Process one depth frame against a body-frame goal vector. `time` only
    /// stamps the log.
    pub fn step(&mut self, img: &DepthImage, x_goal_body: &Vector3<f64>, time: f64) -> FrameLog {
        let started = Instant::now();
        let obs = discretize(img, &self.spec).expect("image dimensions match the grid");
        self.particles
            .update_belief(&obs, &self.model, &self.obs_params);
        let belief = self.particles.belief();
        let nd = net_direction(
            x_goal_body,
            &belief,
            &self.spec,
            &self.intr,
            &self.extr,
            &self.potential,
        );
        let command = steering_command(&nd.nu, &self.limits).expect("net direction is unit");
        let compute_ms = started.elapsed().as_secs_f64() * 1e3;

        let belief_sparse = belief
            .probs()
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(s, &p)| (s as u32, p))
            .collect();
        let log = FrameLog {
            frame: self.frame,
            time,
            command,
            nu: nd.nu,
            f_rep_magnitude: nd.repulsive_magnitude,
            stagnation: nd.stagnation,
            mode_linear: belief.mode_linear(),
            mode_belief: belief.mode_prob(),
            closest_raw_depth: img.closest_depth(),
            compute_ms,
            belief_sparse,
        };
        self.frame += 1;
        log
    }
}

/// Run one scenario to completion: reached, collided, or timed out.
pub fn run_scenario(
    scene: &Scene,
    start: &RobotState,
    goal: &GoalRegion,
    pl: &Pipeline,
) -> ScenarioResult {
    let dt = 1.0 / pl.frame_rate;
    let collision_of = |p: &Vector3<f64>| scene.clearance(p) - pl.robot_radius;

    let mut robot = *start;
    let mut trajectory = vec![robot];
    let mut frames = Vec::new();
    let mut min_clearance = collision_of(&robot.position);
    let mut path_length = 0.0;

    let inside_goal = |p: &Vector3<f64>| (p - goal.center).norm() <= goal.radius;
    if inside_goal(&robot.position) {
        return ScenarioResult {
            outcome: Outcome::Reached,
            trajectory,
            frames,
            min_clearance,
            path_length,
        };
    }
    if min_clearance < 0.0 {
        return ScenarioResult {
            outcome: Outcome::Collided,
            trajectory,
            frames,
            min_clearance,
            path_length,
        };
    }

    let mut processor = FrameProcessor::new(pl);
    let outcome = loop {
        if robot.time >= pl.max_time {
            break Outcome::Timeout;
        }
        let frame_index = frames.len();
        let rendered = render_depth(
            scene,
            &robot,
            &pl.intr,
            &pl.extr,
            pl.spec.width,
            pl.spec.height,
            pl.max_range,
        );
        let noisy = inject_noise(&rendered, &pl.noise.for_frame(frame_index as u64));
        let x_goal_body = robot.world_to_body(&(goal.center - robot.position));
        let log = processor.step(&noisy, &x_goal_body, robot.time);
        let command = log.command;
        frames.push(log);

        let next = step_robot(&robot, &command, dt);
        path_length += (next.position - robot.position).norm();
        robot = next;
        trajectory.push(robot);

        let clearance = collision_of(&robot.position);
        min_clearance = min_clearance.min(clearance);
        if clearance < 0.0 {
            break Outcome::Collided;
        }
        if inside_goal(&robot.position) {
            break Outcome::Reached;
        }
    };

    ScenarioResult {
        outcome,
        trajectory,
        frames,
        min_clearance,
        path_length,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid_spec;
    use crate::sim::scene::Primitive;

    /// A quick pipeline on a coarse 160x120 image for unit tests.
    pub(crate) fn test_pipeline(seed: u64) -> Pipeline {
        let spec = build_grid_spec(160, 120, 20, 20, 0.2, 20).unwrap();
        let model = TransitionModel::build(&spec, 4.0, 0.4, 1e-8).unwrap();
        let obs_params = ObservationParams::for_grid(30.0, 10.0, &spec).unwrap();
        Pipeline {
            spec,
            intr: CameraIntrinsics::new(95.0, 95.0, 80.0, 60.0).unwrap(),
            extr: BodyFrameExtrinsics::camera_forward(),
            model,
            obs_params,
            potential: PotentialConfig::new(0.4, 1.1, 0.5, 3.0, 0.05).unwrap(),
            limits: VelocityLimits::new(0.6, 0.6, 1.0).unwrap(),
            noise: NoiseSpec::quiet(seed),
            frame_rate: 15.0,
            robot_radius: 0.35,
            max_range: 4.0,
            particles: 4000,
            filter_seed: seed,
            max_time: 60.0,
        }
    }

    #[test]
    fn empty_scene_reaches_a_straight_goal() {
        let pl = test_pipeline(1);
        let scene = Scene::default();
        let start = RobotState::new(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let goal = GoalRegion {
            center: Vector3::new(5.0, 0.0, 1.5),
            radius: 0.4,
        };
        let result = run_scenario(&scene, &start, &goal, &pl);
        assert_eq!(result.outcome, Outcome::Reached);
        let direct = (goal.center - start.position).norm()
            - (goal.center - result.trajectory.last().unwrap().position).norm();
        assert!(
            result.path_length <= 1.05 * direct.max(0.0) + 1e-9,
            "path {} vs direct {}",
            result.path_length,
            direct
        );
        assert_eq!(result.min_clearance, f64::INFINITY);
    }

    #[test]
    fn goal_containing_the_start_is_reached_at_t0() {
        let pl = test_pipeline(2);
        let scene = Scene::default();
        let start = RobotState::new(Vector3::new(0.0, 0.0, 1.5), 0.3);
        let goal = GoalRegion {
            center: Vector3::new(0.1, 0.0, 1.5),
            radius: 0.5,
        };
        let result = run_scenario(&scene, &start, &goal, &pl);
        assert_eq!(result.outcome, Outcome::Reached);
        assert!(result.frames.is_empty());
        assert_eq!(result.trajectory.len(), 1);
    }

    #[test]
    fn wall_with_a_gap_is_passable() {
        let pl = test_pipeline(3);
        // A wall of spheres at x=2.5. The sphere at y=-0.3 blocks the direct
        // path; the gap between it and the next sphere at y=+1.0 is the way
        // through, and its asymmetry around the heading lets the gradient
        // find it.
        let mut obstacles = Vec::new();
        for y in [-2.5, -1.95, -1.4, -0.85, -0.3, 1.0, 1.55, 2.1] {
            obstacles.push(Primitive::Sphere {
                center: Vector3::new(2.5, y, 1.5),
                radius: 0.135,
            });
        }
        let scene = Scene {
            obstacles,
            goals: vec![],
            start: None,
        };
        let start = RobotState::new(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let goal = GoalRegion {
            center: Vector3::new(5.5, 0.0, 1.5),
            radius: 0.5,
        };
        let result = run_scenario(&scene, &start, &goal, &pl);
        assert_eq!(
            result.outcome,
            Outcome::Reached,
            "min clearance {}",
            result.min_clearance
        );
        assert!(result.min_clearance > 0.0);
    }

    #[test]
    fn runs_are_bitwise_deterministic() {
        let pl = test_pipeline(7);
        let scene = Scene {
            obstacles: vec![Primitive::Sphere {
                center: Vector3::new(2.5, 0.15, 1.5),
                radius: 0.2,
            }],
            goals: vec![],
            start: None,
        };
        let start = RobotState::new(Vector3::new(0.0, 0.0, 1.5), 0.0);
        let goal = GoalRegion {
            center: Vector3::new(5.0, 0.0, 1.5),
            radius: 0.4,
        };
        let mut noisy_pl = pl.clone();
        noisy_pl.noise = NoiseSpec {
            sigma: 0.2,
            stride: Some(2),
            dropout: 0.02,
            spurious_range: 4.0,
            seed: 5,
        };
        let a = run_scenario(&scene, &start, &goal, &noisy_pl);
        let b = run_scenario(&scene, &start, &goal, &noisy_pl);
        assert_eq!(a.outcome, b.outcome);
        assert_eq!(a.trajectory.len(), b.trajectory.len());
        for (pa, pb) in a.trajectory.iter().zip(&b.trajectory) {
            assert_eq!(pa.position, pb.position);
            assert_eq!(pa.yaw, pb.yaw);
        }
        for (fa, fb) in a.frames.iter().zip(&b.frames) {
            assert_eq!(fa.command, fb.command);
            assert_eq!(fa.belief_sparse, fb.belief_sparse);
        }
    }
}
