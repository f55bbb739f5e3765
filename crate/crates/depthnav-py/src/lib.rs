//! Python bindings for the depthnav stack: grid discretization, the belief
//! filter, potential-field control, and the simulator, importable as
//! `depthnav_py`.

use depthnav::config::RunConfig;
use depthnav::control;
use depthnav::filter;
use depthnav::grid;
use depthnav::image_io;
use depthnav::models;
use depthnav::sim;
use nalgebra::{Matrix3, Vector3};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn io_err(e: impl std::fmt::Display) -> PyErr {
    PyIOError::new_err(e.to_string())
}

fn vec3(t: (f64, f64, f64)) -> Vector3<f64> {
    Vector3::new(t.0, t.1, t.2)
}

fn tuple3(v: &Vector3<f64>) -> (f64, f64, f64) {
    (v.x, v.y, v.z)
}

fn rotation_from(rows: Option<[f64; 9]>) -> PyResult<control::BodyFrameExtrinsics> {
    match rows {
        None => Ok(control::BodyFrameExtrinsics::camera_forward()),
        Some(m) => control::BodyFrameExtrinsics::new(Matrix3::new(
            m[0], m[1], m[2], m[3], m[4], m[5], m[6], m[7], m[8],
        ))
        .map_err(value_err),
    }
}

/// 2.5D voxel grid layout over a depth image.
#[pyclass(name = "GridSpec", frozen)]
struct PyGridSpec {
    inner: grid::GridSpec,
}

#[pymethods]
impl PyGridSpec {
    #[new]
    fn new(
        width: usize,
        height: usize,
        k_w: usize,
        k_h: usize,
        k_d: f64,
        n_d: usize,
    ) -> PyResult<Self> {
        Ok(Self {
            inner: grid::build_grid_spec(width, height, k_w, k_h, k_d, n_d).map_err(value_err)?,
        })
    }

    #[getter]
    fn n_w(&self) -> usize {
        self.inner.n_w
    }

    #[getter]
    fn n_h(&self) -> usize {
        self.inner.n_h
    }

    #[getter]
    fn n_d(&self) -> usize {
        self.inner.n_d
    }

    #[getter]
    fn max_depth(&self) -> f64 {
        self.inner.max_depth
    }

    fn state_count(&self) -> usize {
        self.inner.state_count()
    }

    fn boundary_index(&self) -> usize {
        self.inner.boundary_index()
    }

    /// Linear index of voxel (i, j, k).
    fn linear(&self, i: usize, j: usize, k: usize) -> usize {
        grid::StateIndex::InGrid { i, j, k }.linear(&self.inner)
    }

    /// (i, j, k) of a linear state, or None for the boundary state.
    fn voxel_of(&self, linear: usize) -> Option<(usize, usize, usize)> {
        match grid::StateIndex::from_linear(&self.inner, linear) {
            grid::StateIndex::InGrid { i, j, k } => Some((i, j, k)),
            grid::StateIndex::Boundary => None,
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "GridSpec({}x{} px, {}x{}x{} voxels, {:.2} m horizon)",
            self.inner.width,
            self.inner.height,
            self.inner.n_w,
            self.inner.n_h,
            self.inner.n_d,
            self.inner.max_depth
        )
    }
}

/// One depth frame; meters, non-positive or NaN = no return.
#[pyclass(name = "DepthImage")]
struct PyDepthImage {
    inner: grid::DepthImage,
}

#[pymethods]
impl PyDepthImage {
    #[new]
    fn new(width: usize, height: usize, depths: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: grid::DepthImage::new(width, height, depths).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn empty(width: usize, height: usize) -> Self {
        Self {
            inner: grid::DepthImage::empty(width, height),
        }
    }

    /// Read a .pfm or .raw depth image.
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: image_io::read_depth_image(&path).map_err(io_err)?,
        })
    }

    fn to_file(&self, path: PathBuf) -> PyResult<()> {
        image_io::write_depth_image(&path, &self.inner).map_err(io_err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn depths(&self) -> Vec<f32> {
        self.inner.depths().to_vec()
    }

    fn at(&self, x: usize, y: usize) -> f32 {
        self.inner.at(x, y)
    }

    fn closest_depth(&self) -> Option<f32> {
        self.inner.closest_depth()
    }

    fn valid_count(&self) -> usize {
        self.inner
            .depths()
            .iter()
            .filter(|&&d| grid::DepthImage::is_valid(d))
            .count()
    }
}

/// Per-voxel point counts from one frame.
#[pyclass(name = "VoxelObservation", frozen)]
struct PyVoxelObservation {
    inner: grid::VoxelObservation,
}

#[pymethods]
impl PyVoxelObservation {
    #[new]
    fn new(counts: Vec<u32>) -> Self {
        Self {
            inner: grid::VoxelObservation::from_counts(counts),
        }
    }

    fn counts(&self) -> Vec<u32> {
        self.inner.counts().to_vec()
    }

    fn max_count(&self) -> u32 {
        self.inner.max_count()
    }

    fn total(&self) -> u64 {
        self.inner.total()
    }
}

#[pyfunction]
fn discretize(image: &PyDepthImage, spec: &PyGridSpec) -> PyResult<PyVoxelObservation> {
    Ok(PyVoxelObservation {
        inner: grid::discretize(&image.inner, &spec.inner).map_err(value_err)?,
    })
}

/// Pinhole intrinsics in pixels.
#[pyclass(name = "CameraIntrinsics", frozen)]
struct PyCameraIntrinsics {
    inner: grid::CameraIntrinsics,
}

#[pymethods]
impl PyCameraIntrinsics {
    #[new]
    fn new(f_x: f64, f_y: f64, c_x: f64, c_y: f64) -> PyResult<Self> {
        Ok(Self {
            inner: grid::CameraIntrinsics::new(f_x, f_y, c_x, c_y).map_err(value_err)?,
        })
    }

    /// Forward projection of a camera-frame point to (pixel_x, pixel_y).
    fn project(&self, p: (f64, f64, f64)) -> (f64, f64) {
        self.inner.project(&vec3(p))
    }
}

/// Camera-frame 3D center of voxel (i, j, k).
#[pyfunction]
fn project_state_to_3d(
    i: usize,
    j: usize,
    k: usize,
    spec: &PyGridSpec,
    intr: &PyCameraIntrinsics,
) -> PyResult<(f64, f64, f64)> {
    let p = grid::project_state_to_3d(
        grid::StateIndex::InGrid { i, j, k },
        &spec.inner,
        &intr.inner,
    )
    .map_err(value_err)?;
    Ok(tuple3(&p))
}

/// Precomputed state-transition table.
#[pyclass(name = "TransitionModel", frozen)]
struct PyTransitionModel {
    inner: models::TransitionModel,
}

#[pymethods]
impl PyTransitionModel {
    #[staticmethod]
    #[pyo3(signature = (spec, sigma_s, sigma_z, truncation = 1e-8))]
    fn build(spec: &PyGridSpec, sigma_s: f64, sigma_z: f64, truncation: f64) -> PyResult<Self> {
        Ok(Self {
            inner: models::TransitionModel::build(&spec.inner, sigma_s, sigma_z, truncation)
                .map_err(value_err)?,
        })
    }

    /// Transition probability between two linear states.
    fn prob(&self, from_linear: usize, to_linear: usize) -> f64 {
        let spec = self.inner.spec();
        self.inner.prob(
            grid::StateIndex::from_linear(spec, from_linear),
            grid::StateIndex::from_linear(spec, to_linear),
        )
    }

    /// Surviving (target_linear, probability) entries of one row.
    fn row(&self, from_linear: usize) -> Vec<(usize, f64)> {
        self.inner.row_entries(from_linear).collect()
    }

    fn state_count(&self) -> usize {
        self.inner.state_count()
    }
}

/// Observation-model parameters.
#[pyclass(name = "ObservationParams", frozen)]
struct PyObservationParams {
    inner: models::ObservationParams,
}

#[pymethods]
impl PyObservationParams {
    #[staticmethod]
    fn for_grid(sigma_o: f64, sigma_n: f64, spec: &PyGridSpec) -> PyResult<Self> {
        Ok(Self {
            inner: models::ObservationParams::for_grid(sigma_o, sigma_n, &spec.inner)
                .map_err(value_err)?,
        })
    }

    fn weight_in_grid(&self, n: u32) -> f64 {
        self.inner.weight_in_grid(n)
    }

    fn weight_boundary(&self, max_count: u32) -> f64 {
        self.inner.weight_boundary(max_count)
    }

    #[getter]
    fn n_max(&self) -> u32 {
        self.inner.n_max()
    }
}

/// Normalized belief over the grid states plus the boundary.
#[pyclass(name = "Belief", frozen)]
struct PyBelief {
    inner: filter::Belief,
}

#[pymethods]
impl PyBelief {
    #[staticmethod]
    fn uniform(state_count: usize) -> Self {
        Self {
            inner: filter::Belief::uniform(state_count),
        }
    }

    fn probs(&self) -> Vec<f64> {
        self.inner.probs().to_vec()
    }

    fn mode_linear(&self) -> usize {
        self.inner.mode_linear()
    }

    fn mode_prob(&self) -> f64 {
        self.inner.mode_prob()
    }

    fn boundary_prob(&self) -> f64 {
        self.inner.boundary_prob()
    }

    fn tv_distance(&self, other: &PyBelief) -> f64 {
        self.inner.tv_distance(&other.inner)
    }
}

/// Particle filter over the voxel grid.
#[pyclass(name = "ParticleFilter")]
struct PyParticleFilter {
    inner: filter::ParticleSet,
}

#[pymethods]
impl PyParticleFilter {
    #[new]
    fn new(particles: usize, spec: &PyGridSpec, seed: u64) -> PyResult<Self> {
        Ok(Self {
            inner: filter::ParticleSet::init_uniform(particles, &spec.inner, seed)
                .map_err(value_err)?,
        })
    }

    /// One propagate-weight-resample iteration.
    fn update(
        &mut self,
        obs: &PyVoxelObservation,
        model: &PyTransitionModel,
        params: &PyObservationParams,
    ) {
        self.inner
            .update_belief(&obs.inner, &model.inner, &params.inner);
    }

    fn belief(&self) -> PyBelief {
        PyBelief {
            inner: self.inner.belief(),
        }
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn last_update_degenerate(&self) -> bool {
        self.inner.last_update_degenerate()
    }
}

/// One exact Bayes step; returns (posterior, degenerate_flag).
#[pyfunction]
fn exact_forward_step(
    prior: &PyBelief,
    obs: &PyVoxelObservation,
    model: &PyTransitionModel,
    params: &PyObservationParams,
) -> (PyBelief, bool) {
    let (belief, degenerate) =
        filter::exact_forward_step(&prior.inner, &obs.inner, &model.inner, &params.inner);
    (PyBelief { inner: belief }, degenerate)
}

/// Potential-field gains and ranges.
#[pyclass(name = "PotentialConfig", frozen)]
struct PyPotentialConfig {
    inner: control::PotentialConfig,
}

#[pymethods]
impl PyPotentialConfig {
    #[new]
    #[pyo3(signature = (xi, eta, rho_r, rho_0 = 3.0, eps_min = 0.05))]
    fn new(xi: f64, eta: f64, rho_r: f64, rho_0: f64, eps_min: f64) -> PyResult<Self> {
        Ok(Self {
            inner: control::PotentialConfig::new(xi, eta, rho_r, rho_0, eps_min)
                .map_err(value_err)?,
        })
    }
}

#[pyfunction]
fn attractive_force(x_goal: (f64, f64, f64), cfg: &PyPotentialConfig) -> (f64, f64, f64) {
    tuple3(&control::attractive_force(&vec3(x_goal), &cfg.inner))
}

#[pyfunction]
fn repulsive_force(x_obs: (f64, f64, f64), cfg: &PyPotentialConfig) -> (f64, f64, f64) {
    tuple3(&control::repulsive_force(&vec3(x_obs), &cfg.inner))
}

/// Belief-weighted net steering direction. Returns a dict with `nu`,
/// `f_rep_magnitude`, and `stagnation`.
#[pyfunction]
#[pyo3(signature = (x_goal, belief, spec, intr, cfg, rotation = None))]
fn net_direction(
    py: Python<'_>,
    x_goal: (f64, f64, f64),
    belief: &PyBelief,
    spec: &PyGridSpec,
    intr: &PyCameraIntrinsics,
    cfg: &PyPotentialConfig,
    rotation: Option<[f64; 9]>,
) -> PyResult<Py<PyDict>> {
    let extr = rotation_from(rotation)?;
    let nd = control::net_direction(
        &vec3(x_goal),
        &belief.inner,
        &spec.inner,
        &intr.inner,
        &extr,
        &cfg.inner,
    );
    let dict = PyDict::new(py);
    dict.set_item("nu", tuple3(&nd.nu))?;
    dict.set_item("f_rep_magnitude", nd.repulsive_magnitude)?;
    dict.set_item("stagnation", nd.stagnation)?;
    Ok(dict.into())
}

/// Non-holonomic steering: (v_x, v_z, v_psi) from a unit direction.
#[pyfunction]
fn steering_command(
    nu: (f64, f64, f64),
    v_x_max: f64,
    v_z_max: f64,
    v_psi_max: f64,
) -> PyResult<(f64, f64, f64)> {
    let limits = control::VelocityLimits::new(v_x_max, v_z_max, v_psi_max).map_err(value_err)?;
    let cmd = control::steering_command(&vec3(nu), &limits).map_err(value_err)?;
    Ok((cmd.v_x, cmd.v_z, cmd.v_psi))
}

/// Obstacle course plus start pose and goal regions.
#[pyclass(name = "Scene", frozen)]
struct PyScene {
    inner: sim::Scene,
}

#[pymethods]
impl PyScene {
    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: sim::Scene::from_str_checked(text).map_err(value_err)?,
        })
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: sim::Scene::from_path(&path).map_err(io_err)?,
        })
    }

    fn to_text(&self) -> String {
        self.inner.to_text()
    }

    fn obstacle_count(&self) -> usize {
        self.inner.obstacles.len()
    }

    /// Smallest surface distance from a point to any obstacle.
    fn clearance(&self, p: (f64, f64, f64)) -> f64 {
        self.inner.clearance(&vec3(p))
    }
}

/// Render a depth frame from a camera pose (position, yaw).
#[pyfunction]
#[pyo3(signature = (scene, position, yaw, intr, width, height, max_range, rotation = None))]
#[allow(clippy::too_many_arguments)]
fn render_depth(
    scene: &PyScene,
    position: (f64, f64, f64),
    yaw: f64,
    intr: &PyCameraIntrinsics,
    width: usize,
    height: usize,
    max_range: f64,
    rotation: Option<[f64; 9]>,
) -> PyResult<PyDepthImage> {
    let extr = rotation_from(rotation)?;
    let robot = sim::RobotState::new(vec3(position), yaw);
    Ok(PyDepthImage {
        inner: sim::render_depth(
            &scene.inner,
            &robot,
            &intr.inner,
            &extr,
            width,
            height,
            max_range,
        ),
    })
}

/// Apply the noise protocol (additive Gaussian at a pixel stride, spurious
/// returns, dropout) deterministically per seed.
#[pyfunction]
#[pyo3(signature = (image, sigma, stride, dropout, spurious_range, seed))]
fn inject_noise(
    image: &PyDepthImage,
    sigma: f64,
    stride: Option<u32>,
    dropout: f64,
    spurious_range: f64,
    seed: u64,
) -> PyDepthImage {
    let spec = sim::NoiseSpec {
        sigma,
        stride,
        dropout,
        spurious_range,
        seed,
    };
    PyDepthImage {
        inner: sim::inject_noise(&image.inner, &spec),
    }
}

/// Unicycle step: ((x, y, z), yaw) after dt seconds of (v_x, v_z, v_psi).
#[pyfunction]
fn step_robot(
    position: (f64, f64, f64),
    yaw: f64,
    v_x: f64,
    v_z: f64,
    v_psi: f64,
    dt: f64,
) -> ((f64, f64, f64), f64) {
    let state = sim::RobotState::new(vec3(position), yaw);
    let cmd = control::ControlCommand { v_x, v_z, v_psi };
    let next = sim::step_robot(&state, &cmd, dt);
    (tuple3(&next.position), next.yaw)
}

/// Run a closed-loop scenario from a config TOML string and a scene string.
/// Returns a dict with outcome, frames, path_length_m, min_clearance_m,
/// sim_time_s.
#[pyfunction]
fn run_scenario(py: Python<'_>, config_toml: &str, scene_text: &str) -> PyResult<Py<PyDict>> {
    let cfg = RunConfig::from_toml_str(config_toml).map_err(value_err)?;
    let scene = sim::Scene::from_str_checked(scene_text).map_err(value_err)?;
    let goal = scene
        .goals
        .first()
        .copied()
        .ok_or_else(|| value_err("scene has no goal region"))?;
    let start = scene
        .start
        .map(|p| sim::RobotState::new(p.position, p.yaw))
        .ok_or_else(|| value_err("scene has no start pose"))?;
    let pipeline = cfg.build_pipeline().map_err(value_err)?;
    let result = sim::run_scenario(&scene, &start, &goal, &pipeline);
    let dict = PyDict::new(py);
    dict.set_item("outcome", result.outcome.as_str())?;
    dict.set_item("frames", result.frames.len())?;
    dict.set_item("path_length_m", result.path_length)?;
    dict.set_item("min_clearance_m", result.min_clearance)?;
    dict.set_item(
        "sim_time_s",
        result.trajectory.last().map(|p| p.time).unwrap_or(0.0),
    )?;
    Ok(dict.into())
}

/// Built-in config presets: "cable-test" or "flight", as a TOML string.
#[pyfunction]
fn preset_config(name: &str) -> PyResult<String> {
    RunConfig::preset(name)
        .map(|c| c.to_toml_string())
        .ok_or_else(|| value_err(format!("unknown preset {name:?}")))
}

#[pymodule]
fn depthnav_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PyDepthImage>()?;
    m.add_class::<PyVoxelObservation>()?;
    m.add_class::<PyCameraIntrinsics>()?;
    m.add_class::<PyTransitionModel>()?;
    m.add_class::<PyObservationParams>()?;
    m.add_class::<PyBelief>()?;
    m.add_class::<PyParticleFilter>()?;
    m.add_class::<PyPotentialConfig>()?;
    m.add_class::<PyScene>()?;
    m.add_function(wrap_pyfunction!(discretize, m)?)?;
    m.add_function(wrap_pyfunction!(project_state_to_3d, m)?)?;
    m.add_function(wrap_pyfunction!(exact_forward_step, m)?)?;
    m.add_function(wrap_pyfunction!(attractive_force, m)?)?;
    m.add_function(wrap_pyfunction!(repulsive_force, m)?)?;
    m.add_function(wrap_pyfunction!(net_direction, m)?)?;
    m.add_function(wrap_pyfunction!(steering_command, m)?)?;
    m.add_function(wrap_pyfunction!(render_depth, m)?)?;
    m.add_function(wrap_pyfunction!(inject_noise, m)?)?;
    m.add_function(wrap_pyfunction!(step_robot, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    m.add_function(wrap_pyfunction!(preset_config, m)?)?;
    Ok(())
}
