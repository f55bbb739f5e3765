//! State-transition and observation models over the voxel grid.
//!
//! The transition probability factors into a motion term over the Manhattan
//! distance between states (in voxel units) and a distance term that biases
//! transitions toward the vehicle; both use the half-normal kernel
//! `exp(-x²/(2σ²))`, whose constant factors cancel under row normalization.
//! Rows are precomputed for every state, truncated below a probability
//! threshold, renormalized, and stored sparsely with their CDFs so that
//! per-particle sampling is a binary search.
//!
//! The observation weight of an in-grid state grows with the number of
//! points in its voxel toward the per-voxel maximum `k_w·k_h`; the weight of
//! the boundary state shrinks with the count of the most populated voxel, so
//! sparse outliers are absorbed instead of being mistaken for obstacles.

use crate::grid::{GridSpec, StateIndex, VoxelObservation};
use crate::hash::{fnv1a64, fnv1a64_extend};
use rand::Rng;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("transition cache does not match the requested model (key {got:#018x}, expected {want:#018x})")]
    CacheMismatch { want: u64, got: u64 },
    #[error("corrupt transition cache: {0}")]
    CorruptCache(String),
}

#[inline]
fn half_normal_kernel(x: f64, sigma: f64) -> f64 {
    (-x * x / (2.0 * sigma * sigma)).exp()
}

/// One sparse, normalized categorical row stored as targets plus a CDF.
#[derive(Debug, Clone, PartialEq)]
struct Row {
    targets: Vec<u32>,
    cdf: Vec<f64>,
}

impl Row {
    fn prob_at(&self, pos: usize) -> f64 {
        let prev = if pos == 0 { 0.0 } else { self.cdf[pos - 1] };
        self.cdf[pos] - prev
    }

    fn sample(&self, u: f64) -> u32 {
        let pos = self.cdf.partition_point(|&c| c <= u);
        self.targets[pos.min(self.targets.len() - 1)]
    }
}

/// Precomputed transition lookup table for every state of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    spec: GridSpec,
    sigma_s: f64,
    sigma_z: f64,
    truncation: f64,
    rows: Vec<Row>,
}

pub fn build_transition_model(
    spec: &GridSpec,
    sigma_s: f64,
    sigma_z: f64,
    truncation: f64,
) -> Result<TransitionModel, ModelError> {
    TransitionModel::build(spec, sigma_s, sigma_z, truncation)
}

/// Draw the next state for one particle from its transition row.
pub fn sample_next_state<R: Rng + ?Sized>(
    model: &TransitionModel,
    s: StateIndex,
    rng: &mut R,
) -> StateIndex {
    model.sample_next(s, rng)
}

impl TransitionModel {
    pub fn build(
        spec: &GridSpec,
        sigma_s: f64,
        sigma_z: f64,
        truncation: f64,
    ) -> Result<Self, ModelError> {
        if !(sigma_s.is_finite() && sigma_s > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma_s",
                reason: "must be positive".into(),
            });
        }
        if !(sigma_z.is_finite() && sigma_z > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma_z",
                reason: "must be positive".into(),
            });
        }
        if !(0.0..=1e-3).contains(&truncation) {
            return Err(ModelError::InvalidParameter {
                name: "truncation",
                reason: "must lie in [0, 1e-3]".into(),
            });
        }

        let n_voxels = spec.voxel_count();
        let boundary = spec.boundary_index();

        // Both kernel factors take a small set of arguments; precompute them.
        let max_manhattan = (spec.n_w - 1) + (spec.n_h - 1) + (spec.n_d - 1) + 1;
        let move_kernel: Vec<f64> = (0..=max_manhattan)
            .map(|d| half_normal_kernel(d as f64, sigma_s))
            .collect();
        let depth_kernel: Vec<f64> = (0..spec.n_d)
            .map(|k| half_normal_kernel((k as f64 + 0.5) * spec.k_d, sigma_z))
            .collect();

        let mut rows = Vec::with_capacity(spec.state_count());
        let mut weights = vec![0f64; spec.state_count()];
        for from in 0..spec.state_count() {
            let src = StateIndex::from_linear(spec, from);
            let mut idx = 0usize;
            match src {
                StateIndex::InGrid { i, j, k } => {
                    for (k2, &pd) in depth_kernel.iter().enumerate() {
                        let dk = k.abs_diff(k2);
                        for j2 in 0..spec.n_h {
                            let dj = j.abs_diff(j2);
                            for i2 in 0..spec.n_w {
                                let dm = i.abs_diff(i2) + dj + dk;
                                weights[idx] = move_kernel[dm] * pd;
                                idx += 1;
                            }
                        }
                    }
                    // Boundary: one voxel step beyond the nearest grid face;
                    // the toward-vehicle bias does not apply to the free state.
                    let face = src.steps_to_face(spec).unwrap();
                    weights[boundary] = move_kernel[face + 1];
                }
                StateIndex::Boundary => {
                    for (k2, &pd) in depth_kernel.iter().enumerate() {
                        for j2 in 0..spec.n_h {
                            for i2 in 0..spec.n_w {
                                let face = StateIndex::InGrid {
                                    i: i2,
                                    j: j2,
                                    k: k2,
                                }
                                .steps_to_face(spec)
                                .unwrap();
                                weights[idx] = move_kernel[face + 1] * pd;
                                idx += 1;
                            }
                        }
                    }
                    weights[boundary] = move_kernel[0];
                }
            }
            rows.push(Self::normalize_row(&weights, from, truncation));
        }
        let _ = n_voxels;
        Ok(Self {
            spec: *spec,
            sigma_s,
            sigma_z,
            truncation,
            rows,
        })
    }

    /// Normalize, truncate, renormalize, and pack one row as a CDF.
    fn normalize_row(weights: &[f64], from: usize, truncation: f64) -> Row {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            // All kernels underflowed; stay put. Unreachable for sane sigmas.
            return Row {
                targets: vec![from as u32],
                cdf: vec![1.0],
            };
        }
        let cut = truncation * total;
        let mut kept: f64 = weights.iter().filter(|&&w| w >= cut).sum();
        let mut use_cut = cut;
        if kept <= 0.0 {
            // Truncation removed every entry (only possible with near-uniform
            // rows and the maximum threshold); fall back to no truncation.
            use_cut = 0.0;
            kept = total;
        }
        let mut targets = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = 0.0;
        for (t, &w) in weights.iter().enumerate() {
            if w > 0.0 && w >= use_cut {
                acc += w / kept;
                targets.push(t as u32);
                cdf.push(acc);
            }
        }
        debug_assert!((acc - 1.0).abs() < 1e-9);
        *cdf.last_mut().unwrap() = 1.0;
        Row { targets, cdf }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn sigma_s(&self) -> f64 {
        self.sigma_s
    }

    pub fn sigma_z(&self) -> f64 {
        self.sigma_z
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, s: StateIndex, rng: &mut R) -> StateIndex {
        let lin = self.sample_next_linear(s.linear(&self.spec), rng);
        StateIndex::from_linear(&self.spec, lin)
    }

    #[inline]
    pub fn sample_next_linear<R: Rng + ?Sized>(&self, from: usize, rng: &mut R) -> usize {
        self.rows[from].sample(rng.random::<f64>()) as usize
    }

    /// Transition probability between two states (zero if truncated away).
    pub fn prob(&self, from: StateIndex, to: StateIndex) -> f64 {
        let row = &self.rows[from.linear(&self.spec)];
        let target = to.linear(&self.spec) as u32;
        match row.targets.binary_search(&target) {
            Ok(pos) => row.prob_at(pos),
            Err(_) => 0.0,
        }
    }

    /// Iterate `(target_linear, probability)` over a row's surviving entries.
    pub fn row_entries(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let row = &self.rows[from];
        row.targets
            .iter()
            .enumerate()
            .map(move |(pos, &t)| (t as usize, row.prob_at(pos)))
    }

    pub fn state_count(&self) -> usize {
        self.rows.len()
    }

    /// Cache key tying a serialized table to the parameters that built it.
    pub fn cache_key(spec: &GridSpec, sigma_s: f64, sigma_z: f64, truncation: f64) -> u64 {
        let mut h = fnv1a64(b"depthnav-transition-v1");
        for v in [
            spec.width as u64,
            spec.height as u64,
            spec.k_w as u64,
            spec.k_h as u64,
            spec.n_d as u64,
        ] {
            h = fnv1a64_extend(h, &v.to_le_bytes());
        }
        for v in [spec.k_d, sigma_s, sigma_z, truncation] {
            h = fnv1a64_extend(h, &v.to_bits().to_le_bytes());
        }
        h
    }

    pub fn key(&self) -> u64 {
        Self::cache_key(&self.spec, self.sigma_s, self.sigma_z, self.truncation)
    }

    const CACHE_MAGIC: &'static [u8; 8] = b"DNTMCH01";

    /// Serialize the table to a binary cache file.
    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(Self::CACHE_MAGIC)?;
        w.write_all(&self.key().to_le_bytes())?;
        for v in [
            self.spec.width as u64,
            self.spec.height as u64,
            self.spec.k_w as u64,
            self.spec.k_h as u64,
            self.spec.n_d as u64,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [self.spec.k_d, self.sigma_s, self.sigma_z, self.truncation] {
            w.write_all(&v.to_bits().to_le_bytes())?;
        }
        w.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        for row in &self.rows {
            w.write_all(&(row.targets.len() as u32).to_le_bytes())?;
            for t in &row.targets {
                w.write_all(&t.to_le_bytes())?;
            }
            for c in &row.cdf {
                w.write_all(&c.to_bits().to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Load a cached table and verify it matches the requested parameters.
    pub fn load(
        path: &Path,
        spec: &GridSpec,
        sigma_s: f64,
        sigma_z: f64,
        truncation: f64,
    ) -> Result<Self, ModelError> {
        let want = Self::cache_key(spec, sigma_s, sigma_z, truncation);
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != Self::CACHE_MAGIC {
            return Err(ModelError::CorruptCache("bad magic".into()));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let got = u64::from_le_bytes(u64buf);
        if got != want {
            return Err(ModelError::CacheMismatch { want, got });
        }
        // Parameter block (already covered by the key; skip over it).
        let mut params = [0u8; 8 * 9];
        r.read_exact(&mut params)?;
        r.read_exact(&mut u64buf)?;
        let n_rows = u64::from_le_bytes(u64buf) as usize;
        if n_rows != spec.state_count() {
            return Err(ModelError::CorruptCache(format!(
                "row count {n_rows} does not match the grid"
            )));
        }
        let mut rows = Vec::with_capacity(n_rows);
        for _ in 0..n_rows {
            let mut u32buf = [0u8; 4];
            r.read_exact(&mut u32buf)?;
            let len = u32::from_le_bytes(u32buf) as usize;
            if len == 0 || len > spec.state_count() {
                return Err(ModelError::CorruptCache(format!("bad row length {len}")));
            }
            let mut targets = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut u32buf)?;
                targets.push(u32::from_le_bytes(u32buf));
            }
            let mut cdf = Vec::with_capacity(len);
            for _ in 0..len {
                r.read_exact(&mut u64buf)?;
                cdf.push(f64::from_bits(u64::from_le_bytes(u64buf)));
            }
            rows.push(Row { targets, cdf });
        }
        Ok(Self {
            spec: *spec,
            sigma_s,
            sigma_z,
            truncation,
            rows,
        })
    }

    /// Load from `dir/transition-<key>.bin` if present, else build and cache.
    pub fn load_or_build(
        dir: &Path,
        spec: &GridSpec,
        sigma_s: f64,
        sigma_z: f64,
        truncation: f64,
    ) -> Result<Self, ModelError> {
        let key = Self::cache_key(spec, sigma_s, sigma_z, truncation);
        let path = dir.join(format!("transition-{key:016x}.bin"));
        if path.exists() {
            if let Ok(model) = Self::load(&path, spec, sigma_s, sigma_z, truncation) {
                return Ok(model);
            }
        }
        let model = Self::build(spec, sigma_s, sigma_z, truncation)?;
        std::fs::create_dir_all(dir)?;
        model.save(&path)?;
        Ok(model)
    }
}

/// Parameters of the observation model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationParams {
    sigma_o: f64,
    sigma_n: f64,
    n_max: u32,
}

impl ObservationParams {
    pub fn new(sigma_o: f64, sigma_n: f64, n_max: u32) -> Result<Self, ModelError> {
        if !(sigma_o.is_finite() && sigma_o > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma_o",
                reason: "must be positive".into(),
            });
        }
        if !(sigma_n.is_finite() && sigma_n > 0.0) {
            return Err(ModelError::InvalidParameter {
                name: "sigma_n",
                reason: "must be positive".into(),
            });
        }
        if n_max == 0 {
            return Err(ModelError::InvalidParameter {
                name: "n_max",
                reason: "at least one point must fit in a voxel".into(),
            });
        }
        Ok(Self {
            sigma_o,
            sigma_n,
            n_max,
        })
    }

    /// `n_max` is the nominal per-voxel pixel capacity `k_w·k_h`.
    pub fn for_grid(sigma_o: f64, sigma_n: f64, spec: &GridSpec) -> Result<Self, ModelError> {
        Self::new(sigma_o, sigma_n, (spec.k_w * spec.k_h) as u32)
    }

    pub fn sigma_o(&self) -> f64 {
        self.sigma_o
    }

    pub fn sigma_n(&self) -> f64 {
        self.sigma_n
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    /// Relative observation weight of a state given the voxel counts.
    ///
    /// In-grid states peak when their voxel holds `n_max` points; the
    /// boundary state peaks on an empty observation and decays with the most
    /// populated voxel. Constant density factors are dropped uniformly.
    pub fn weight(&self, s: StateIndex, obs: &VoxelObservation, spec: &GridSpec) -> f64 {
        match s {
            StateIndex::InGrid { .. } => self.weight_in_grid(obs.count_at(s, spec)),
            StateIndex::Boundary => self.weight_boundary(obs.max_count()),
        }
    }

    /// Weight addressed by linear state index (hot path of the filter).
    #[inline]
    pub fn weight_linear(&self, lin: usize, boundary: usize, obs: &VoxelObservation) -> f64 {
        if lin == boundary {
            self.weight_boundary(obs.max_count())
        } else {
            self.weight_in_grid(obs.counts()[lin])
        }
    }

    #[inline]
    pub fn weight_in_grid(&self, n: u32) -> f64 {
        let d = n as f64 - self.n_max as f64;
        half_normal_kernel(d, self.sigma_o)
    }

    #[inline]
    pub fn weight_boundary(&self, max_count: u32) -> f64 {
        half_normal_kernel(max_count as f64, self.sigma_n)
    }
}

/// Spec-level convenience mirroring the filter's weighting step.
pub fn observation_weight(
    params: &ObservationParams,
    s: StateIndex,
    obs: &VoxelObservation,
    spec: &GridSpec,
) -> f64 {
    params.weight(s, obs, spec)
}
