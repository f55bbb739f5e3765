//! Potential-field control: attractive/repulsive forces, the belief-weighted
//! net gradient, and the non-holonomic steering law.
//!
//! The goal pulls with a conic potential that switches to a parabolic well
//! inside `rho_r`; obstacles push with the classic inverse-distance barrier
//! cut off at the sensing horizon `rho_0`. Forces are the analytic negative
//! gradients of those potentials with respect to the robot position. Each
//! in-grid state contributes repulsion scaled by its belief; the boundary
//! state contributes nothing, so free-space confidence relaxes the robot
//! toward the goal.

use crate::filter::Belief;
use crate::grid::{project_state_to_3d, CameraIntrinsics, GridSpec, StateIndex};
use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ControlError {
    #[error("invalid control parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("steering needs a unit direction, got norm {0}")]
    NonUnitDirection(f64),
}

/// Gains and ranges of the potential field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PotentialConfig {
    /// Attractive gain.
    pub xi: f64,
    /// Repulsive gain.
    pub eta: f64,
    /// Conic/parabolic switch radius around the goal, meters.
    pub rho_r: f64,
    /// Repulsive sensing horizon, meters.
    pub rho_0: f64,
    /// Minimum obstacle distance; closer obstacles repel as if at this range.
    pub eps_min: f64,
}

impl PotentialConfig {
    pub fn new(
        xi: f64,
        eta: f64,
        rho_r: f64,
        rho_0: f64,
        eps_min: f64,
    ) -> Result<Self, ControlError> {
        for (name, v) in [
            ("xi", xi),
            ("eta", eta),
            ("rho_r", rho_r),
            ("rho_0", rho_0),
            ("eps_min", eps_min),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ControlError::InvalidParameter {
                    name: match name {
                        "xi" => "xi",
                        "eta" => "eta",
                        "rho_r" => "rho_r",
                        "rho_0" => "rho_0",
                        _ => "eps_min",
                    },
                    reason: "must be positive".into(),
                });
            }
        }
        if eps_min >= rho_0 {
            return Err(ControlError::InvalidParameter {
                name: "eps_min",
                reason: format!("must be below rho_0 = {rho_0}"),
            });
        }
        Ok(Self {
            xi,
            eta,
            rho_r,
            rho_0,
            eps_min,
        })
    }
}

/// Rotation from the camera optical frame to the robot body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrameExtrinsics {
    rotation: Matrix3<f64>,
}

impl BodyFrameExtrinsics {
    pub fn new(rotation: Matrix3<f64>) -> Result<Self, ControlError> {
        let gram = rotation.transpose() * rotation - Matrix3::identity();
        if gram.norm() > 1e-9 {
            return Err(ControlError::InvalidParameter {
                name: "rotation",
                reason: "matrix is not orthonormal".into(),
            });
        }
        if (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(ControlError::InvalidParameter {
                name: "rotation",
                reason: "matrix is not a proper rotation".into(),
            });
        }
        Ok(Self { rotation })
    }

    /// Forward-facing camera on a z-up body: optical axis along body x,
    /// image right along -y (body left is +y), image down along -z.
    pub fn camera_forward() -> Self {
        Self {
            rotation: Matrix3::new(0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0),
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn camera_to_body(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p
    }
}

/// Velocity envelope of the platform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityLimits {
    pub v_x_max: f64,
    pub v_z_max: f64,
    pub v_psi_max: f64,
}

impl VelocityLimits {
    pub fn new(v_x_max: f64, v_z_max: f64, v_psi_max: f64) -> Result<Self, ControlError> {
        if !(v_x_max > 0.0 && v_z_max > 0.0 && v_psi_max > 0.0) {
            return Err(ControlError::InvalidParameter {
                name: "limits",
                reason: "velocity limits must be positive".into(),
            });
        }
        Ok(Self {
            v_x_max,
            v_z_max,
            v_psi_max,
        })
    }
}

/// Body-frame velocity command: forward, vertical, yaw rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    pub v_x: f64,
    pub v_z: f64,
    pub v_psi: f64,
}

/// Attractive potential: conic beyond `rho_r`, parabolic inside.
pub fn attractive_potential(x_goal: &Vector3<f64>, cfg: &PotentialConfig) -> f64 {
    let r = x_goal.norm();
    if r > cfg.rho_r {
        cfg.rho_r * cfg.xi * r
    } else {
        0.5 * cfg.xi * r * r
    }
}

/// Repulsive potential inside the sensing horizon, clamped at `eps_min`.
pub fn repulsive_potential(x_obs: &Vector3<f64>, cfg: &PotentialConfig) -> f64 {
    let r = x_obs.norm();
    if r >= cfg.rho_0 {
        return 0.0;
    }
    let r_eff = r.max(cfg.eps_min);
    let gap = 1.0 / r_eff - 1.0 / cfg.rho_0;
    0.5 * cfg.eta * gap * gap
}

/// Negative gradient of the attractive potential with respect to the robot
/// position: constant pull `rho_r·xi` toward the goal outside `rho_r`,
/// proportional pull `xi·x_goal` inside, zero at the goal.
pub fn attractive_force(x_goal: &Vector3<f64>, cfg: &PotentialConfig) -> Vector3<f64> {
    let r = x_goal.norm();
    if r == 0.0 {
        return Vector3::zeros();
    }
    if r > cfg.rho_r {
        x_goal * (cfg.rho_r * cfg.xi / r)
    } else {
        x_goal * cfg.xi
    }
}

/// Negative gradient of the repulsive potential: pushes directly away from
/// the obstacle, vanishes at and beyond `rho_0`, and is evaluated at
/// `eps_min` when the obstacle is closer than that (finite actuation).
pub fn repulsive_force(x_obs: &Vector3<f64>, cfg: &PotentialConfig) -> Vector3<f64> {
    let r = x_obs.norm();
    if r >= cfg.rho_0 || r == 0.0 {
        return Vector3::zeros();
    }
    let r_eff = r.max(cfg.eps_min);
    let magnitude = cfg.eta * (1.0 / r_eff - 1.0 / cfg.rho_0) / (r_eff * r_eff);
    x_obs * (-magnitude / r)
}

/// Unit steering direction from the belief-weighted net force.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetDirection {
    /// Unit vector along the negative net-potential gradient, body frame.
    pub nu: Vector3<f64>,
    /// The un-normalized net force.
    pub force: Vector3<f64>,
    /// Magnitude of the belief-weighted repulsive component.
    pub repulsive_magnitude: f64,
    /// Set when the net force vanished and `nu` fell back to the goal bearing.
    pub stagnation: bool,
}

/// Net steering direction: attractive pull plus the belief-weighted sum of
/// per-voxel repulsions. The boundary state carries no repulsion, so belief
/// mass on it simply scales the total repulsion down.
pub fn net_direction(
    x_goal: &Vector3<f64>,
    belief: &Belief,
    spec: &GridSpec,
    intr: &CameraIntrinsics,
    extr: &BodyFrameExtrinsics,
    cfg: &PotentialConfig,
) -> NetDirection {
    assert_eq!(belief.len(), spec.state_count());
    let mut repulsion = Vector3::zeros();
    for lin in 0..spec.voxel_count() {
        let mass = belief.prob_linear(lin);
        if mass == 0.0 {
            continue;
        }
        let p_cam = project_state_to_3d(StateIndex::from_linear(spec, lin), spec, intr)
            .expect("in-grid states always project");
        let x_obs = extr.camera_to_body(&p_cam);
        repulsion += repulsive_force(&x_obs, cfg) * mass;
    }
    let force = attractive_force(x_goal, cfg) + repulsion;
    let norm = force.norm();
    if norm < 1e-12 {
        let goal_norm = x_goal.norm();
        let nu = if goal_norm > 0.0 {
            x_goal / goal_norm
        } else {
            Vector3::x()
        };
        return NetDirection {
            nu,
            force,
            repulsive_magnitude: repulsion.norm(),
            stagnation: true,
        };
    }
    NetDirection {
        nu: force / norm,
        force,
        repulsive_magnitude: repulsion.norm(),
        stagnation: false,
    }
}

/// Map a unit direction to the non-holonomic command: yaw rate proportional
/// to the bearing angle (saturating at ±pi), forward speed by the bearing
/// cosine floored at zero, vertical speed by the direction's z component.
pub fn steering_command(
    nu: &Vector3<f64>,
    limits: &VelocityLimits,
) -> Result<ControlCommand, ControlError> {
    let norm = nu.norm();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(ControlError::NonUnitDirection(norm));
    }
    let theta = nu.y.atan2(nu.x);
    let v_psi = theta / std::f64::consts::PI * limits.v_psi_max;
    let v_x = (limits.v_x_max * theta.cos()).max(0.0);
    let v_z = (limits.v_z_max * nu.z).clamp(-limits.v_z_max, limits.v_z_max);
    Ok(ControlCommand { v_x, v_z, v_psi })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Belief;
    use crate::grid::build_grid_spec;
    use proptest::prelude::*;

    fn cfg() -> PotentialConfig {
        PotentialConfig::new(0.4, 1.1, 0.5, 3.0, 0.05).unwrap()
    }

    fn limits() -> VelocityLimits {
        VelocityLimits::new(0.6, 0.6, 1.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(PotentialConfig::new(0.0, 1.1, 0.5, 3.0, 0.05).is_err());
        assert!(PotentialConfig::new(0.4, 1.1, 0.5, 3.0, 3.0).is_err());
        assert!(VelocityLimits::new(0.6, 0.0, 1.0).is_err());
    }

    #[test]
    fn attractive_force_far_from_goal() {
        let f = attractive_force(&Vector3::new(2.0, 0.0, 0.0), &cfg());
        assert!((f - Vector3::new(0.2, 0.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn attractive_force_is_continuous_at_the_switch_radius() {
        let c = cfg();
        let just_out = attractive_force(&Vector3::new(c.rho_r + 1e-12, 0.0, 0.0), &c);
        let just_in = attractive_force(&Vector3::new(c.rho_r - 1e-12, 0.0, 0.0), &c);
        assert!((just_out.norm() - c.xi * c.rho_r).abs() < 1e-9);
        assert!((just_in.norm() - c.xi * c.rho_r).abs() < 1e-9);
    }

    #[test]
    fn attractive_force_vanishes_at_the_goal() {
        assert_eq!(
            attractive_force(&Vector3::zeros(), &cfg()),
            Vector3::zeros()
        );
    }

    #[test]
    fn repulsive_force_at_the_horizon_is_zero() {
        let f = repulsive_force(&Vector3::new(3.0, 0.0, 0.0), &cfg());
        assert_eq!(f, Vector3::zeros());
        assert_eq!(
            repulsive_force(&Vector3::new(5.0, 0.0, 0.0), &cfg()),
            Vector3::zeros()
        );
    }

    #[test]
    fn repulsive_force_derived_example() {
        // eta (1/r - 1/rho_0) / r^2 at r=1: 1.1 * (1 - 1/3) = 0.73333...,
        // pointing back along -x.
        let f = repulsive_force(&Vector3::new(1.0, 0.0, 0.0), &cfg());
        assert!((f.x - (-1.1 * (2.0 / 3.0))).abs() < 1e-12);
        assert_eq!(f.y, 0.0);
        assert_eq!(f.z, 0.0);
    }

    #[test]
    fn repulsive_force_clamps_below_eps_min() {
        let c = cfg();
        let at_clamp = repulsive_force(&Vector3::new(c.eps_min, 0.0, 0.0), &c);
        let inside = repulsive_force(&Vector3::new(0.01, 0.0, 0.0), &c);
        assert!(inside.norm().is_finite());
        assert!((inside.norm() - at_clamp.norm()).abs() < 1e-9);
        assert!(inside.x < 0.0);
    }

    #[test]
    fn extrinsics_validation_and_forward_preset() {
        let extr = BodyFrameExtrinsics::camera_forward();
        // Optical axis maps to body-forward.
        let fwd = extr.camera_to_body(&Vector3::new(0.0, 0.0, 1.0));
        assert!((fwd - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        // Image right maps to body-right (-y), image down to -z.
        assert!(
            (extr.camera_to_body(&Vector3::new(1.0, 0.0, 0.0)) - Vector3::new(0.0, -1.0, 0.0))
                .norm()
                < 1e-15
        );
        assert!(
            (extr.camera_to_body(&Vector3::new(0.0, 1.0, 0.0)) - Vector3::new(0.0, 0.0, -1.0))
                .norm()
                < 1e-15
        );
        assert!(BodyFrameExtrinsics::new(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0
        ))
        .is_err());
        // Orthonormal but improper (a reflection).
        assert!(BodyFrameExtrinsics::new(Matrix3::new(
            1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0
        ))
        .is_err());
    }

    fn test_grid() -> (GridSpec, CameraIntrinsics, BodyFrameExtrinsics) {
        let spec = build_grid_spec(640, 480, 50, 50, 0.1, 40).unwrap();
        let intr = CameraIntrinsics::new(380.0, 380.0, 320.0, 240.0).unwrap();
        (spec, intr, BodyFrameExtrinsics::camera_forward())
    }

    #[test]
    fn free_space_belief_steers_straight_at_the_goal() {
        let (spec, intr, extr) = test_grid();
        let mut probs = vec![0.0; spec.state_count()];
        probs[spec.boundary_index()] = 1.0;
        let belief = Belief::from_probs(probs);
        let goal = Vector3::new(4.0, 1.0, -0.5);
        let nd = net_direction(&goal, &belief, &spec, &intr, &extr, &cfg());
        assert!(!nd.stagnation);
        assert_eq!(nd.repulsive_magnitude, 0.0);
        assert!((nd.nu - goal / goal.norm()).norm() < 1e-12);
    }

    #[test]
    fn split_belief_averages_the_per_voxel_forces() {
        let (spec, intr, extr) = test_grid();
        let a = StateIndex::InGrid { i: 3, j: 4, k: 10 };
        let b = StateIndex::InGrid { i: 9, j: 5, k: 14 };
        let mut probs = vec![0.0; spec.state_count()];
        probs[a.linear(&spec)] = 0.5;
        probs[b.linear(&spec)] = 0.5;
        let belief = Belief::from_probs(probs);
        let goal = Vector3::new(5.0, 0.0, 0.0);
        let nd = net_direction(&goal, &belief, &spec, &intr, &extr, &cfg());

        let force_of = |s: StateIndex| {
            let p = project_state_to_3d(s, &spec, &intr).unwrap();
            repulsive_force(&extr.camera_to_body(&p), &cfg())
        };
        let expected_rep = (force_of(a) + force_of(b)) * 0.5;
        let expected = attractive_force(&goal, &cfg()) + expected_rep;
        assert!((nd.force - expected).norm() < 1e-12);
        assert!((nd.repulsive_magnitude - expected_rep.norm()).abs() < 1e-12);
    }

    #[test]
    fn net_direction_is_unit_or_flagged() {
        let (spec, intr, extr) = test_grid();
        let belief = Belief::uniform(spec.state_count());
        let nd = net_direction(
            &Vector3::new(2.0, -1.0, 0.3),
            &belief,
            &spec,
            &intr,
            &extr,
            &cfg(),
        );
        assert!((nd.nu.norm() - 1.0).abs() < 1e-12 || nd.stagnation);
    }

    #[test]
    fn stagnation_falls_back_to_the_goal_bearing() {
        let (spec, intr, extr) = test_grid();
        let mut probs = vec![0.0; spec.state_count()];
        probs[spec.boundary_index()] = 1.0;
        let belief = Belief::from_probs(probs);
        // Zero goal vector with free space: no force at all.
        let nd = net_direction(&Vector3::zeros(), &belief, &spec, &intr, &extr, &cfg());
        assert!(nd.stagnation);
        assert!((nd.nu.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gain_scaling_leaves_the_direction_unchanged() {
        let (spec, intr, extr) = test_grid();
        let s = StateIndex::InGrid { i: 6, j: 4, k: 8 };
        let mut probs = vec![0.0; spec.state_count()];
        probs[s.linear(&spec)] = 0.7;
        probs[spec.boundary_index()] = 0.3;
        let belief = Belief::from_probs(probs);
        let goal = Vector3::new(3.0, 0.5, 0.2);
        let base = PotentialConfig::new(0.4, 1.1, 0.5, 3.0, 0.05).unwrap();
        let scaled = PotentialConfig::new(0.4 * 7.5, 1.1 * 7.5, 0.5, 3.0, 0.05).unwrap();
        let nd_a = net_direction(&goal, &belief, &spec, &intr, &extr, &base);
        let nd_b = net_direction(&goal, &belief, &spec, &intr, &extr, &scaled);
        assert!((nd_a.nu - nd_b.nu).norm() < 1e-12);
    }

    /// Independent finite-difference check of the net force against the
    /// potential field written straight from its defining formulas.
    #[test]
    fn net_force_matches_finite_differences() {
        let (spec, intr, extr) = test_grid();
        let c = cfg();
        let s1 = StateIndex::InGrid { i: 5, j: 4, k: 12 };
        let s2 = StateIndex::InGrid { i: 7, j: 5, k: 20 };
        let mut probs = vec![0.0; spec.state_count()];
        probs[s1.linear(&spec)] = 0.45;
        probs[s2.linear(&spec)] = 0.25;
        probs[spec.boundary_index()] = 0.30;
        let belief = Belief::from_probs(probs);
        let goal = Vector3::new(3.5, 0.8, 0.1);

        let obstacles: Vec<(Vector3<f64>, f64)> = [s1, s2]
            .iter()
            .map(|&s| {
                let p = extr.camera_to_body(&project_state_to_3d(s, &spec, &intr).unwrap());
                (p, belief.prob(s, &spec))
            })
            .collect();

        // Scalar field under a virtual robot displacement, from the raw
        // potential formulas (not the library's gradient path).
        let u = |delta: Vector3<f64>| -> f64 {
            let g = goal - delta;
            let gr = g.norm();
            let mut total = if gr > c.rho_r {
                c.rho_r * c.xi * gr
            } else {
                0.5 * c.xi * gr * gr
            };
            for (obs, mass) in &obstacles {
                let r = (obs - delta).norm();
                if r < c.rho_0 {
                    let gap = 1.0 / r - 1.0 / c.rho_0;
                    total += mass * 0.5 * c.eta * gap * gap;
                }
            }
            total
        };

        let h = 1e-6;
        let fd = Vector3::new(
            -(u(Vector3::new(h, 0.0, 0.0)) - u(Vector3::new(-h, 0.0, 0.0))) / (2.0 * h),
            -(u(Vector3::new(0.0, h, 0.0)) - u(Vector3::new(0.0, -h, 0.0))) / (2.0 * h),
            -(u(Vector3::new(0.0, 0.0, h)) - u(Vector3::new(0.0, 0.0, -h))) / (2.0 * h),
        );
        let nd = net_direction(&goal, &belief, &spec, &intr, &extr, &c);
        let rel = (nd.force - fd).norm() / nd.force.norm();
        assert!(rel < 1e-5, "relative error {rel}");
    }

    #[test]
    fn steering_examples() {
        let l = limits();
        let straight = steering_command(&Vector3::new(1.0, 0.0, 0.0), &l).unwrap();
        assert_eq!(straight.v_x, l.v_x_max);
        assert_eq!(straight.v_psi, 0.0);
        assert_eq!(straight.v_z, 0.0);

        let side = steering_command(&Vector3::new(0.0, 1.0, 0.0), &l).unwrap();
        assert!((side.v_psi - l.v_psi_max / 2.0).abs() < 1e-12);
        assert!(side.v_x.abs() < 1e-12);

        let behind = steering_command(&Vector3::new(-1.0, 0.0, 0.0), &l).unwrap();
        assert_eq!(behind.v_x, 0.0, "reverse motion is floored at zero");
        assert!((behind.v_psi - l.v_psi_max).abs() < 1e-12);
    }

    #[test]
    fn steering_rejects_non_unit_input() {
        assert!(matches!(
            steering_command(&Vector3::new(0.5, 0.0, 0.0), &limits()),
            Err(ControlError::NonUnitDirection(_))
        ));
    }

    proptest! {
        #[test]
        fn attractive_magnitude_formula(x in -5.0f64..5.0, y in -5.0f64..5.0, z in -5.0f64..5.0) {
            let c = cfg();
            let v = Vector3::new(x, y, z);
            let f = attractive_force(&v, &c);
            let want = (c.xi * v.norm()).min(c.xi * c.rho_r);
            prop_assert!((f.norm() - want).abs() < 1e-12);
            // Always points toward the goal.
            if v.norm() > 1e-9 {
                prop_assert!(f.dot(&v) >= 0.0);
            }
        }

        #[test]
        fn repulsive_magnitude_is_decreasing_and_bounded(r1 in 0.05f64..2.99, r2 in 0.05f64..2.99) {
            let c = cfg();
            let f = |r: f64| repulsive_force(&Vector3::new(r, 0.0, 0.0), &c).norm();
            let cap = f(c.eps_min);
            prop_assert!(f(r1) <= cap + 1e-12);
            if r1 < r2 {
                prop_assert!(f(r1) >= f(r2) - 1e-12);
            }
        }

        #[test]
        fn steering_contract(azimuth in -3.1f64..3.1, zfrac in -0.99f64..0.99) {
            let l = limits();
            let planar = (1.0 - zfrac * zfrac).sqrt();
            let nu = Vector3::new(planar * azimuth.cos(), planar * azimuth.sin(), zfrac);
            let cmd = steering_command(&nu, &l).unwrap();
            prop_assert!(cmd.v_x >= 0.0);
            prop_assert!(cmd.v_x <= l.v_x_max + 1e-12);
            prop_assert!(cmd.v_psi.abs() <= l.v_psi_max + 1e-12);
            prop_assert!(cmd.v_z.abs() <= l.v_z_max + 1e-12);
            // Yaw rate is odd in the lateral component.
            let mirrored = steering_command(&Vector3::new(nu.x, -nu.y, nu.z), &l).unwrap();
            prop_assert!((mirrored.v_psi + cmd.v_psi).abs() < 1e-12);
        }
    }
}
