//! Run configuration: a strict TOML file with nested sections for every
//! tunable in the stack. Unknown keys are rejected — a typo that silently
//! falls back to a default is the main operational hazard here.
//!
//! Two presets ship with the artifact: `cable-test` (static-cable noise
//! study) and `flight` (closed-loop navigation, outlier-tolerant weights).

use crate::control::{BodyFrameExtrinsics, PotentialConfig, VelocityLimits};
use crate::grid::{build_grid_spec, CameraIntrinsics, GridSpec};
use crate::hash::fnv1a64;
use crate::models::{ObservationParams, TransitionModel};
use crate::sim::{NoiseSpec, Pipeline};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid config value {key}: {reason}")]
    Invalid { key: String, reason: String },
    #[error("model construction failed: {0}")]
    Model(#[from] crate::models::ModelError),
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub filter: FilterSection,
    pub potential: PotentialSection,
    pub limits: LimitsSection,
    pub camera: CameraSection,
    pub sim: SimSection,
    #[serde(default)]
    pub io: IoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub width: usize,
    pub height: usize,
    pub k_w: usize,
    pub k_h: usize,
    pub k_d: f64,
    pub n_d: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSection {
    pub particles: usize,
    pub sigma_s: f64,
    pub sigma_z: f64,
    pub sigma_o: f64,
    pub sigma_n: f64,
    pub seed: u64,
    #[serde(default = "default_truncation")]
    pub truncation: f64,
}

fn default_truncation() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub xi: f64,
    pub eta: f64,
    pub rho_r: f64,
    #[serde(default = "default_rho_0")]
    pub rho_0: f64,
    #[serde(default = "default_eps_min")]
    pub eps_min: f64,
}

fn default_rho_0() -> f64 {
    3.0
}

fn default_eps_min() -> f64 {
    0.05
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsSection {
    pub v_x_max: f64,
    pub v_z_max: f64,
    pub v_psi_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraSection {
    pub f_x: f64,
    pub f_y: f64,
    pub c_x: f64,
    pub c_y: f64,
    /// Either the name `"camera_forward"` or a row-major 3x3 matrix.
    #[serde(default)]
    pub rotation: RotationSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RotationSpec {
    Named(String),
    Matrix([f64; 9]),
}

impl Default for RotationSpec {
    fn default() -> Self {
        RotationSpec::Named("camera_forward".to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default = "default_frame_rate")]
    pub frame_rate: f64,
    #[serde(default = "default_robot_radius")]
    pub robot_radius: f64,
    /// Renderer range; defaults to the grid's sensing horizon.
    #[serde(default)]
    pub max_range: Option<f64>,
    #[serde(default = "default_max_time")]
    pub max_time: f64,
    #[serde(default)]
    pub noise: NoiseSection,
}

fn default_frame_rate() -> f64 {
    15.0
}

fn default_robot_radius() -> f64 {
    0.35
}

fn default_max_time() -> f64 {
    60.0
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            frame_rate: default_frame_rate(),
            robot_radius: default_robot_radius(),
            max_range: None,
            max_time: default_max_time(),
            noise: NoiseSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default)]
    pub sigma: f64,
    /// One-in-n pixel stride; omit for no additive/spurious noise.
    #[serde(default)]
    pub stride: Option<u32>,
    #[serde(default)]
    pub dropout: f64,
    /// Depth range for spurious returns; defaults to sim.max_range.
    #[serde(default)]
    pub spurious_range: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IoSection {
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Directory for the binary transition-table cache, if any.
    #[serde(default)]
    pub cache_dir: Option<String>,
}

fn default_out_dir() -> String {
    "out".to_string()
}

impl Default for IoSection {
    fn default() -> Self {
        Self {
            out_dir: default_out_dir(),
            cache_dir: None,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// FNV-1a over the canonical serialization of everything that affects
    /// results; the `[io]` section (output paths, cache location) is
    /// excluded so reruns into different directories share a hash.
    pub fn hash(&self) -> u64 {
        let mut semantic = self.clone();
        semantic.io = IoSection::default();
        fnv1a64(semantic.to_toml_string().as_bytes())
    }

    /// Check every section invariant. Returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>, ConfigError> {
        let mut warnings = Vec::new();
        let g = &self.grid;
        let spec = build_grid_spec(g.width, g.height, g.k_w, g.k_h, g.k_d, g.n_d)
            .map_err(|e| invalid("grid", e.to_string()))?;

        let f = &self.filter;
        if f.particles == 0 {
            return Err(invalid("filter.particles", "must be positive"));
        }
        if f.particles < spec.state_count() {
            warnings.push(format!(
                "filter.particles = {} is below the {} states of the grid; the belief will be sparse",
                f.particles,
                spec.state_count()
            ));
        }
        for (key, v) in [
            ("filter.sigma_s", f.sigma_s),
            ("filter.sigma_z", f.sigma_z),
            ("filter.sigma_o", f.sigma_o),
            ("filter.sigma_n", f.sigma_n),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(key, format!("must be positive, got {v}")));
            }
        }
        if !(0.0..=1e-3).contains(&f.truncation) {
            return Err(invalid("filter.truncation", "must lie in [0, 1e-3]"));
        }

        let p = &self.potential;
        PotentialConfig::new(p.xi, p.eta, p.rho_r, p.rho_0, p.eps_min)
            .map_err(|e| invalid("potential", e.to_string()))?;
        VelocityLimits::new(
            self.limits.v_x_max,
            self.limits.v_z_max,
            self.limits.v_psi_max,
        )
        .map_err(|e| invalid("limits", e.to_string()))?;
        CameraIntrinsics::new(
            self.camera.f_x,
            self.camera.f_y,
            self.camera.c_x,
            self.camera.c_y,
        )
        .map_err(|e| invalid("camera", e.to_string()))?;
        self.extrinsics()?;

        let s = &self.sim;
        if !(s.frame_rate.is_finite() && s.frame_rate > 0.0) {
            return Err(invalid("sim.frame_rate", "must be positive"));
        }
        if !(s.robot_radius.is_finite() && s.robot_radius > 0.0) {
            return Err(invalid("sim.robot_radius", "must be positive"));
        }
        if let Some(r) = s.max_range {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid("sim.max_range", "must be positive"));
            }
        }
        if !(s.max_time.is_finite() && s.max_time > 0.0) {
            return Err(invalid("sim.max_time", "must be positive"));
        }
        if !(0.0..=1.0).contains(&s.noise.dropout) {
            return Err(invalid("sim.noise.dropout", "must lie in [0, 1]"));
        }
        if s.noise.stride == Some(0) {
            return Err(invalid(
                "sim.noise.stride",
                "stride counts pixels; use 1 or more",
            ));
        }
        if !(s.noise.sigma.is_finite() && s.noise.sigma >= 0.0) {
            return Err(invalid("sim.noise.sigma", "must be non-negative"));
        }
        if let Some(r) = s.noise.spurious_range {
            if !(r.is_finite() && r > 0.0) {
                return Err(invalid("sim.noise.spurious_range", "must be positive"));
            }
        }
        Ok(warnings)
    }

    pub fn grid_spec(&self) -> Result<GridSpec, ConfigError> {
        let g = &self.grid;
        build_grid_spec(g.width, g.height, g.k_w, g.k_h, g.k_d, g.n_d)
            .map_err(|e| invalid("grid", e.to_string()))
    }

    fn extrinsics(&self) -> Result<BodyFrameExtrinsics, ConfigError> {
        match &self.camera.rotation {
            RotationSpec::Named(name) if name == "camera_forward" => {
                Ok(BodyFrameExtrinsics::camera_forward())
            }
            RotationSpec::Named(other) => Err(invalid(
                "camera.rotation",
                format!("unknown rotation preset {other:?}"),
            )),
            RotationSpec::Matrix(m) => BodyFrameExtrinsics::new(Matrix3::new(
                m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8],
            ))
            .map_err(|e| invalid("camera.rotation", e.to_string())),
        }
    }

    pub fn max_range(&self) -> f64 {
        self.sim
            .max_range
            .unwrap_or(self.grid.n_d as f64 * self.grid.k_d)
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            sigma: self.sim.noise.sigma,
            stride: self.sim.noise.stride,
            dropout: self.sim.noise.dropout,
            spurious_range: self
                .sim
                .noise
                .spurious_range
                .unwrap_or_else(|| self.max_range()),
            seed: self.sim.noise.seed,
        }
    }

    /// Build every runtime component. Validates first; the transition table
    /// is loaded from the binary cache when `io.cache_dir` is set.
    pub fn build_pipeline(&self) -> Result<Pipeline, ConfigError> {
        self.validate()?;
        let spec = self.grid_spec()?;
        let f = &self.filter;
        let model = match &self.io.cache_dir {
            Some(dir) => TransitionModel::load_or_build(
                Path::new(dir),
                &spec,
                f.sigma_s,
                f.sigma_z,
                f.truncation,
            )?,
            None => TransitionModel::build(&spec, f.sigma_s, f.sigma_z, f.truncation)?,
        };
        let obs_params = ObservationParams::for_grid(f.sigma_o, f.sigma_n, &spec)?;
        let p = &self.potential;
        Ok(Pipeline {
            spec,
            intr: CameraIntrinsics::new(
                self.camera.f_x,
                self.camera.f_y,
                self.camera.c_x,
                self.camera.c_y,
            )
            .map_err(|e| invalid("camera", e.to_string()))?,
            extr: self.extrinsics()?,
            model,
            obs_params,
            potential: PotentialConfig::new(p.xi, p.eta, p.rho_r, p.rho_0, p.eps_min)
                .map_err(|e| invalid("potential", e.to_string()))?,
            limits: VelocityLimits::new(
                self.limits.v_x_max,
                self.limits.v_z_max,
                self.limits.v_psi_max,
            )
            .map_err(|e| invalid("limits", e.to_string()))?,
            noise: self.noise_spec(),
            frame_rate: self.sim.frame_rate,
            robot_radius: self.sim.robot_radius,
            max_range: self.max_range(),
            particles: f.particles,
            filter_seed: f.seed,
            max_time: self.sim.max_time,
        })
    }

    /// Static-cable noise-study preset: tight outlier rejection.
    pub fn preset_cable_test() -> Self {
        Self {
            grid: GridSection {
                width: 640,
                height: 480,
                k_w: 50,
                k_h: 50,
                k_d: 0.1,
                n_d: 40,
            },
            filter: FilterSection {
                particles: 20_000,
                sigma_s: 8.0,
                sigma_z: 0.4,
                sigma_o: 300.0,
                sigma_n: 1.0,
                seed: 7,
                truncation: default_truncation(),
            },
            potential: PotentialSection {
                xi: 0.4,
                eta: 1.1,
                rho_r: 0.5,
                rho_0: default_rho_0(),
                eps_min: default_eps_min(),
            },
            limits: LimitsSection {
                v_x_max: 0.6,
                v_z_max: 0.6,
                v_psi_max: 1.0,
            },
            camera: CameraSection {
                f_x: 380.0,
                f_y: 380.0,
                c_x: 320.0,
                c_y: 240.0,
                rotation: RotationSpec::default(),
            },
            sim: SimSection::default(),
            io: IoSection::default(),
        }
    }

    /// Closed-loop navigation preset: outlier-tolerant observation weights.
    pub fn preset_flight() -> Self {
        let mut cfg = Self::preset_cable_test();
        cfg.filter.sigma_o = 170.0;
        cfg.filter.sigma_n = 60.0;
        cfg
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cable-test" => Some(Self::preset_cable_test()),
            "flight" => Some(Self::preset_flight()),
            _ => None,
        }
    }
}
