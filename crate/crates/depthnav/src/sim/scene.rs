//! World model: obstacle primitives, goal regions, and the scene file format.
//!
//! Scene files are line-oriented records, `#` starts a comment:
//!
//! ```text
//! start    x y z yaw
//! goal     x y z radius
//! sphere   x y z radius
//! cylinder x y z radius height        # vertical, grows +z from the base
//! cable    x0 y0 z0 x1 y1 z1 radius   # capsule around the segment
//! ```
//!
//! The world frame is fixed, z-up, right-handed; units are meters and radians.

use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("scene parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// An obstacle primitive. Distances are measured to a core point or segment,
/// so every primitive behaves like an inflated point/segment for collisions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Primitive {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Vertical cylinder growing +z from the base point.
    Cylinder {
        base: Vector3<f64>,
        radius: f64,
        height: f64,
    },
    /// Capsule around the segment `a`..`b` (hanging cables, cords).
    Cable {
        a: Vector3<f64>,
        b: Vector3<f64>,
        radius: f64,
    },
}

impl Primitive {
    pub fn radius(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. }
            | Primitive::Cylinder { radius, .. }
            | Primitive::Cable { radius, .. } => radius,
        }
    }

    /// Distance from a point to the primitive's core (center or axis segment).
    pub fn core_distance(&self, p: &Vector3<f64>) -> f64 {
        match *self {
            Primitive::Sphere { center, .. } => (p - center).norm(),
            Primitive::Cylinder { base, height, .. } => {
                let z = p.z.clamp(base.z, base.z + height);
                (p - Vector3::new(base.x, base.y, z)).norm()
            }
            Primitive::Cable { a, b, .. } => {
                let axis = b - a;
                let len2 = axis.norm_squared();
                let t = if len2 > 0.0 {
                    ((p - a).dot(&axis) / len2).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                (p - (a + axis * t)).norm()
            }
        }
    }

    /// Signed distance from a point to the primitive surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.core_distance(p) - self.radius()
    }

    /// Center and radius of a bounding sphere (renderer culling).
    pub fn bounding_sphere(&self) -> (Vector3<f64>, f64) {
        match *self {
            Primitive::Sphere { center, radius } => (center, radius),
            Primitive::Cylinder {
                base,
                radius,
                height,
            } => (
                base + Vector3::new(0.0, 0.0, height / 2.0),
                (height / 2.0).hypot(radius),
            ),
            Primitive::Cable { a, b, radius } => ((a + b) / 2.0, (b - a).norm() / 2.0 + radius),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoalRegion {
    pub center: Vector3<f64>,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartPose {
    pub position: Vector3<f64>,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scene {
    pub obstacles: Vec<Primitive>,
    pub goals: Vec<GoalRegion>,
    pub start: Option<StartPose>,
}

impl Scene {
    pub fn from_path(path: &Path) -> Result<Self, SceneError> {
        Self::from_str_checked(&std::fs::read_to_string(path)?)
    }

    pub fn from_str_checked(text: &str) -> Result<Self, SceneError> {
        let mut scene = Scene::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let mut fields = content.split_whitespace();
            let record = fields.next().unwrap();
            let nums: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>().map_err(|_| SceneError::Parse {
                        line,
                        msg: format!("expected a number, got {f:?}"),
                    })
                })
                .collect::<Result<_, _>>()?;
            let expect = |want: usize| -> Result<(), SceneError> {
                if nums.len() != want {
                    return Err(SceneError::Parse {
                        line,
                        msg: format!("{record} takes {want} numbers, got {}", nums.len()),
                    });
                }
                Ok(())
            };
            let positive = |what: &str, v: f64| -> Result<f64, SceneError> {
                if !(v.is_finite() && v > 0.0) {
                    return Err(SceneError::Parse {
                        line,
                        msg: format!("{what} must be positive, got {v}"),
                    });
                }
                Ok(v)
            };
            match record {
                "start" => {
                    expect(4)?;
                    scene.start = Some(StartPose {
                        position: Vector3::new(nums[0], nums[1], nums[2]),
                        yaw: nums[3],
                    });
                }
                "goal" => {
                    expect(4)?;
                    scene.goals.push(GoalRegion {
                        center: Vector3::new(nums[0], nums[1], nums[2]),
                        radius: positive("goal radius", nums[3])?,
                    });
                }
                "sphere" => {
                    expect(4)?;
                    scene.obstacles.push(Primitive::Sphere {
                        center: Vector3::new(nums[0], nums[1], nums[2]),
                        radius: positive("sphere radius", nums[3])?,
                    });
                }
                "cylinder" => {
                    expect(5)?;
                    scene.obstacles.push(Primitive::Cylinder {
                        base: Vector3::new(nums[0], nums[1], nums[2]),
                        radius: positive("cylinder radius", nums[3])?,
                        height: positive("cylinder height", nums[4])?,
                    });
                }
                "cable" => {
                    expect(7)?;
                    scene.obstacles.push(Primitive::Cable {
                        a: Vector3::new(nums[0], nums[1], nums[2]),
                        b: Vector3::new(nums[3], nums[4], nums[5]),
                        radius: positive("cable radius", nums[6])?,
                    });
                }
                other => {
                    return Err(SceneError::Parse {
                        line,
                        msg: format!(
                            "unknown record {other:?} (expected start/goal/sphere/cylinder/cable)"
                        ),
                    });
                }
            }
        }
        Ok(scene)
    }

    /// Serialize back to the scene file format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        if let Some(start) = &self.start {
            let _ = writeln!(
                out,
                "start {} {} {} {}",
                start.position.x, start.position.y, start.position.z, start.yaw
            );
        }
        for g in &self.goals {
            let _ = writeln!(
                out,
                "goal {} {} {} {}",
                g.center.x, g.center.y, g.center.z, g.radius
            );
        }
        for p in &self.obstacles {
            match *p {
                Primitive::Sphere { center, radius } => {
                    let _ = writeln!(
                        out,
                        "sphere {} {} {} {}",
                        center.x, center.y, center.z, radius
                    );
                }
                Primitive::Cylinder {
                    base,
                    radius,
                    height,
                } => {
                    let _ = writeln!(
                        out,
                        "cylinder {} {} {} {} {}",
                        base.x, base.y, base.z, radius, height
                    );
                }
                Primitive::Cable { a, b, radius } => {
                    let _ = writeln!(
                        out,
                        "cable {} {} {} {} {} {} {}",
                        a.x, a.y, a.z, b.x, b.y, b.z, radius
                    );
                }
            }
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), SceneError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Smallest surface distance from a point over all obstacles.
    pub fn clearance(&self, p: &Vector3<f64>) -> f64 {
        self.obstacles
            .iter()
            .map(|o| o.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let text = "\
# a demo scene
start 0 0 1.5 0
goal 6 0 1.5 0.5
sphere 3 0.4 1.5 0.135
cylinder 2 -1 0 0.045 3
cable 4 -0.5 0 4 0.5 3 0.004
";
        let scene = Scene::from_str_checked(text).unwrap();
        assert_eq!(scene.obstacles.len(), 3);
        assert_eq!(scene.goals.len(), 1);
        assert!(scene.start.is_some());
        let again = Scene::from_str_checked(&scene.to_text()).unwrap();
        assert_eq!(scene, again);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Scene::from_str_checked("goal 1 2 3 0.5\nwedge 1 2 3\n").unwrap_err();
        match err {
            SceneError::Parse { line, msg } => {
                assert_eq!(line, 2);
                assert!(msg.contains("wedge"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let err = Scene::from_str_checked("sphere 1 2 3 -0.1\n").unwrap_err();
        assert!(matches!(err, SceneError::Parse { line: 1, .. }));
        let err = Scene::from_str_checked("sphere 1 2 x 0.1\n").unwrap_err();
        assert!(matches!(err, SceneError::Parse { line: 1, .. }));
    }

    #[test]
    fn core_distances() {
        let sphere = Primitive::Sphere {
            center: Vector3::new(1.0, 0.0, 0.0),
            radius: 0.25,
        };
        assert!((sphere.surface_distance(&Vector3::zeros()) - 0.75).abs() < 1e-12);

        let cyl = Primitive::Cylinder {
            base: Vector3::new(0.0, 0.0, 0.0),
            radius: 0.1,
            height: 2.0,
        };
        // Beside the shaft.
        assert!((cyl.core_distance(&Vector3::new(0.5, 0.0, 1.0)) - 0.5).abs() < 1e-12);
        // Above the top: distance to the rim point.
        assert!((cyl.core_distance(&Vector3::new(0.0, 0.0, 2.5)) - 0.5).abs() < 1e-12);

        let cable = Primitive::Cable {
            a: Vector3::new(0.0, 0.0, 0.0),
            b: Vector3::new(0.0, 0.0, 2.0),
            radius: 0.004,
        };
        assert!((cable.core_distance(&Vector3::new(0.3, 0.4, 1.0)) - 0.5).abs() < 1e-12);
        assert!((cable.core_distance(&Vector3::new(0.0, 0.0, 3.0)) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn scene_clearance_takes_the_minimum() {
        let scene = Scene {
            obstacles: vec![
                Primitive::Sphere {
                    center: Vector3::new(2.0, 0.0, 0.0),
                    radius: 0.5,
                },
                Primitive::Sphere {
                    center: Vector3::new(-1.0, 0.0, 0.0),
                    radius: 0.25,
                },
            ],
            goals: vec![],
            start: None,
        };
        assert!((scene.clearance(&Vector3::zeros()) - 0.75).abs() < 1e-12);
        assert_eq!(Scene::default().clearance(&Vector3::zeros()), f64::INFINITY);
    }
}
