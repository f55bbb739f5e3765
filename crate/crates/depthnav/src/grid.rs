//! Depth images and their 2.5D discretization into a voxel grid.
//!
//! A depth image is cut into `k_w × k_h` pixel blocks and `k_d`-meter depth
//! bins, giving `N_w · N_h · N_d` voxels that form a pyramidal frustum in
//! front of the camera. One extra state, the boundary state, stands for
//! "no obstacle inside the sensing horizon" so that a belief over the state
//! space always sums to one.

use nalgebra::Vector3;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("invalid grid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("image is {got_w}x{got_h} but the grid was built for {want_w}x{want_h}")]
    DimensionMismatch {
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("depth buffer has {got} entries, expected width*height = {want}")]
    BadBufferLength { want: usize, got: usize },
    #[error("the boundary state has no 3D projection")]
    BoundaryNotProjectable,
}

/// A single depth frame. Depths are meters; non-finite or non-positive
/// entries mean no depth return for that pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    depths: Vec<f32>,
}

/// Sentinel the simulator writes for no-return pixels.
pub const NO_RETURN: f32 = 0.0;

impl DepthImage {
    pub fn new(width: usize, height: usize, depths: Vec<f32>) -> Result<Self, GridError> {
        if depths.len() != width * height {
            return Err(GridError::BadBufferLength {
                want: width * height,
                got: depths.len(),
            });
        }
        Ok(Self {
            width,
            height,
            depths,
        })
    }

    /// All-invalid image (every pixel a no-return).
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depths: vec![NO_RETURN; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn depths(&self) -> &[f32] {
        &self.depths
    }

    pub fn depths_mut(&mut self) -> &mut [f32] {
        &mut self.depths
    }

    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.depths[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f32) {
        self.depths[y * self.width + x] = depth;
    }

    /// A depth reading counts as valid when it is finite and strictly positive.
    pub fn is_valid(depth: f32) -> bool {
        depth.is_finite() && depth > 0.0
    }

    /// Smallest valid depth in the frame, if any pixel returned.
    pub fn closest_depth(&self) -> Option<f32> {
        self.depths
            .iter()
            .copied()
            .filter(|&d| Self::is_valid(d))
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f32| a.min(d))))
    }
}

/// Discretization of a depth image: pixel steps, depth step, and bin counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    /// Image dimensions the grid was built for.
    pub width: usize,
    pub height: usize,
    /// Pixel step along image width.
    pub k_w: usize,
    /// Pixel step along image height.
    pub k_h: usize,
    /// Depth step in meters.
    pub k_d: f64,
    /// Bin counts along width, height, depth.
    pub n_w: usize,
    pub n_h: usize,
    pub n_d: usize,
    /// Sensing-horizon depth of the grid: `n_d * k_d` meters.
    pub max_depth: f64,
}

impl GridSpec {
    /// Number of in-grid voxel states (excluding the boundary state).
    pub fn voxel_count(&self) -> usize {
        self.n_w * self.n_h * self.n_d
    }

    /// Total state count including the boundary state.
    pub fn state_count(&self) -> usize {
        self.voxel_count() + 1
    }

    /// Linear index of the boundary state (the last slot).
    pub fn boundary_index(&self) -> usize {
        self.voxel_count()
    }
}

pub fn build_grid_spec(
    width: usize,
    height: usize,
    k_w: usize,
    k_h: usize,
    k_d: f64,
    n_d: usize,
) -> Result<GridSpec, GridError> {
    fn positive(name: &'static str, v: usize) -> Result<(), GridError> {
        if v == 0 {
            return Err(GridError::InvalidParameter {
                name,
                reason: "must be positive".into(),
            });
        }
        Ok(())
    }
    positive("width", width)?;
    positive("height", height)?;
    positive("k_w", k_w)?;
    positive("k_h", k_h)?;
    positive("n_d", n_d)?;
    if !(k_d.is_finite() && k_d > 0.0) {
        return Err(GridError::InvalidParameter {
            name: "k_d",
            reason: "must be a positive finite depth step".into(),
        });
    }
    if k_w > width {
        return Err(GridError::InvalidParameter {
            name: "k_w",
            reason: format!("pixel step {k_w} exceeds image width {width}"),
        });
    }
    if k_h > height {
        return Err(GridError::InvalidParameter {
            name: "k_h",
            reason: format!("pixel step {k_h} exceeds image height {height}"),
        });
    }
    Ok(GridSpec {
        width,
        height,
        k_w,
        k_h,
        k_d,
        n_w: width.div_ceil(k_w),
        n_h: height.div_ceil(k_h),
        n_d,
        max_depth: n_d as f64 * k_d,
    })
}

/// A voxel-grid state: either an in-grid voxel or the obstacle-free boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateIndex {
    InGrid { i: usize, j: usize, k: usize },
    Boundary,
}

impl StateIndex {
    pub fn is_boundary(&self) -> bool {
        matches!(self, StateIndex::Boundary)
    }

    /// Bijection onto `{0, …, N_w·N_h·N_d}`; the boundary takes the last slot.
    pub fn linear(&self, spec: &GridSpec) -> usize {
        match *self {
            StateIndex::InGrid { i, j, k } => {
                debug_assert!(i < spec.n_w && j < spec.n_h && k < spec.n_d);
                i + spec.n_w * (j + spec.n_h * k)
            }
            StateIndex::Boundary => spec.boundary_index(),
        }
    }

    pub fn from_linear(spec: &GridSpec, idx: usize) -> Self {
        if idx == spec.boundary_index() {
            return StateIndex::Boundary;
        }
        debug_assert!(idx < spec.voxel_count());
        let i = idx % spec.n_w;
        let rest = idx / spec.n_w;
        StateIndex::InGrid {
            i,
            j: rest % spec.n_h,
            k: rest / spec.n_h,
        }
    }

    /// Depth of the voxel center in meters; `None` for the boundary state.
    pub fn depth_m(&self, spec: &GridSpec) -> Option<f64> {
        match *self {
            StateIndex::InGrid { k, .. } => Some((k as f64 + 0.5) * spec.k_d),
            StateIndex::Boundary => None,
        }
    }

    /// Voxel steps from an in-grid state to the nearest grid face. Used by the
    /// transition model's distance to the boundary state.
    pub fn steps_to_face(&self, spec: &GridSpec) -> Option<usize> {
        match *self {
            StateIndex::InGrid { i, j, k } => {
                let d = i
                    .min(spec.n_w - 1 - i)
                    .min(j)
                    .min(spec.n_h - 1 - j)
                    .min(k)
                    .min(spec.n_d - 1 - k);
                Some(d)
            }
            StateIndex::Boundary => None,
        }
    }
}

/// Per-voxel point counts extracted from one depth image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoxelObservation {
    counts: Vec<u32>,
    max_count: u32,
}

impl VoxelObservation {
    pub fn from_counts(counts: Vec<u32>) -> Self {
        let max_count = counts.iter().copied().max().unwrap_or(0);
        Self { counts, max_count }
    }

    /// Counts indexed by the in-grid linear state index.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Count at an in-grid state; the boundary state holds no points.
    pub fn count_at(&self, s: StateIndex, spec: &GridSpec) -> u32 {
        match s {
            StateIndex::InGrid { .. } => self.counts[s.linear(spec)],
            StateIndex::Boundary => 0,
        }
    }

    /// Number of points in the most populated voxel.
    pub fn max_count(&self) -> u32 {
        self.max_count
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Count, per voxel, the valid pixels whose depth falls inside the grid.
///
/// A pixel lands in the voxel given by its pixel-block position and
/// `floor(depth / k_d)`. Invalid pixels and pixels at or beyond the sensing
/// horizon contribute nothing (they are treated as free space).
pub fn discretize(image: &DepthImage, spec: &GridSpec) -> Result<VoxelObservation, GridError> {
    if image.width() != spec.width || image.height() != spec.height {
        return Err(GridError::DimensionMismatch {
            want_w: spec.width,
            want_h: spec.height,
            got_w: image.width(),
            got_h: image.height(),
        });
    }
    let mut counts = vec![0u32; spec.voxel_count()];
    let depths = image.depths();
    for py in 0..spec.height {
        let j = py / spec.k_h;
        let row = py * spec.width;
        for px in 0..spec.width {
            let d = depths[row + px];
            if !DepthImage::is_valid(d) {
                continue;
            }
            let k = (d as f64 / spec.k_d).floor() as usize;
            if k >= spec.n_d {
                continue;
            }
            let i = px / spec.k_w;
            counts[i + spec.n_w * (j + spec.n_h * k)] += 1;
        }
    }
    Ok(VoxelObservation::from_counts(counts))
}

/// Pinhole camera intrinsics, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f_x: f64,
    pub f_y: f64,
    pub c_x: f64,
    pub c_y: f64,
}

impl CameraIntrinsics {
    pub fn new(f_x: f64, f_y: f64, c_x: f64, c_y: f64) -> Result<Self, GridError> {
        if !(f_x > 0.0 && f_y > 0.0) {
            return Err(GridError::InvalidParameter {
                name: "focal_length",
                reason: "focal lengths must be positive".into(),
            });
        }
        Ok(Self { f_x, f_y, c_x, c_y })
    }

    /// Forward pinhole projection of a camera-frame point onto the image:
    /// returns `(s_x, s_y)` in pixels. The caller keeps the depth `p.z`.
    pub fn project(&self, p: &Vector3<f64>) -> (f64, f64) {
        (
            p.x * (self.f_x / p.z) + self.c_x,
            p.y * (self.f_y / p.z) + self.c_y,
        )
    }
}

/// 3D camera-frame position of a voxel's representative point.
///
/// Uses the voxel center — pixel `(i·k_w + k_w/2, j·k_h + k_h/2)` at depth
/// `(k + ½)·k_d` — and inverts the pinhole projection.
pub fn project_state_to_3d(
    s: StateIndex,
    spec: &GridSpec,
    intr: &CameraIntrinsics,
) -> Result<Vector3<f64>, GridError> {
    let StateIndex::InGrid { i, j, k } = s else {
        return Err(GridError::BoundaryNotProjectable);
    };
    let s_x = i as f64 * spec.k_w as f64 + spec.k_w as f64 / 2.0;
    let s_y = j as f64 * spec.k_h as f64 + spec.k_h as f64 / 2.0;
    let s_z = (k as f64 + 0.5) * spec.k_d;
    Ok(Vector3::new(
        (s_x - intr.c_x) * s_z / intr.f_x,
        (s_y - intr.c_y) * s_z / intr.f_y,
        s_z,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paper_spec() -> GridSpec {
        build_grid_spec(640, 480, 50, 50, 0.1, 40).unwrap()
    }

    #[test]
    fn build_grid_spec_paper_values() {
        let spec = paper_spec();
        assert_eq!(spec.n_w, 13);
        assert_eq!(spec.n_h, 10);
        assert_eq!(spec.n_d, 40);
        assert!((spec.max_depth - 4.0).abs() < 1e-12);
        assert_eq!(spec.state_count(), 5201);
    }

    #[test]
    fn build_grid_spec_single_bin() {
        let spec = build_grid_spec(640, 480, 640, 480, 1.0, 4).unwrap();
        assert_eq!((spec.n_w, spec.n_h), (1, 1));
    }

    #[test]
    fn build_grid_spec_rejects_bad_params() {
        assert!(build_grid_spec(640, 480, 50, 50, 0.1, 0).is_err());
        assert!(build_grid_spec(640, 480, 0, 50, 0.1, 40).is_err());
        assert!(build_grid_spec(640, 480, 50, 50, 0.0, 40).is_err());
        assert!(build_grid_spec(640, 480, 700, 50, 0.1, 40).is_err());
        assert!(build_grid_spec(640, 480, 50, 481, 0.1, 40).is_err());
    }

    #[test]
    fn discretize_single_pixel() {
        let spec = paper_spec();
        let mut img = DepthImage::empty(640, 480);
        img.set(75, 25, 1.23);
        let obs = discretize(&img, &spec).unwrap();
        let target = StateIndex::InGrid { i: 1, j: 0, k: 12 };
        assert_eq!(obs.count_at(target, &spec), 1);
        assert_eq!(obs.total(), 1);
        assert_eq!(obs.max_count(), 1);
    }

    #[test]
    fn discretize_all_invalid() {
        let spec = paper_spec();
        let obs = discretize(&DepthImage::empty(640, 480), &spec).unwrap();
        assert_eq!(obs.total(), 0);
        assert_eq!(obs.max_count(), 0);
    }

    #[test]
    fn discretize_saturated_block() {
        let spec = paper_spec();
        let mut img = DepthImage::empty(640, 480);
        for y in 0..50 {
            for x in 0..50 {
                img.set(x, y, 0.05);
            }
        }
        let obs = discretize(&img, &spec).unwrap();
        assert_eq!(
            obs.count_at(StateIndex::InGrid { i: 0, j: 0, k: 0 }, &spec),
            2500
        );
        assert_eq!(obs.max_count(), 2500);
    }

    #[test]
    fn discretize_drops_beyond_horizon() {
        let spec = paper_spec();
        let mut img = DepthImage::empty(640, 480);
        img.set(0, 0, 4.0); // exactly at the horizon: free space
        img.set(1, 0, 5.0);
        img.set(2, 0, 3.999);
        let obs = discretize(&img, &spec).unwrap();
        assert_eq!(obs.total(), 1);
        assert_eq!(
            obs.count_at(StateIndex::InGrid { i: 0, j: 0, k: 39 }, &spec),
            1
        );
    }

    #[test]
    fn discretize_rejects_dimension_mismatch() {
        let spec = paper_spec();
        let img = DepthImage::empty(320, 240);
        assert!(matches!(
            discretize(&img, &spec),
            Err(GridError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn project_on_optical_axis() {
        let spec = build_grid_spec(640, 480, 640, 480, 0.4, 4).unwrap();
        let intr = CameraIntrinsics::new(380.0, 380.0, 320.0, 240.0).unwrap();
        let p = project_state_to_3d(StateIndex::InGrid { i: 0, j: 0, k: 2 }, &spec, &intr).unwrap();
        assert!((p - Vector3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn project_derived_example() {
        // Voxel (10, 0, 9) of a 40x480-pixel, 0.2 m grid has its center at
        // pixel (420, 240), depth 1.9 m; with c=(320,240), f_x=380 the
        // deprojection gives p_x = 100*1.9/380 = 0.5 exactly.
        let spec = build_grid_spec(640, 480, 40, 480, 0.2, 20).unwrap();
        let intr = CameraIntrinsics::new(380.0, 380.0, 320.0, 240.0).unwrap();
        let p =
            project_state_to_3d(StateIndex::InGrid { i: 10, j: 0, k: 9 }, &spec, &intr).unwrap();
        assert!((p.x - 0.5).abs() < 1e-12);
        assert!(p.y.abs() < 1e-12);
        assert!((p.z - 1.9).abs() < 1e-12);
        // Substituting back through the forward model recovers the pixel.
        let (sx, sy) = intr.project(&p);
        assert!((sx - 420.0).abs() < 1e-9);
        assert!((sy - 240.0).abs() < 1e-9);
    }

    #[test]
    fn boundary_is_not_projectable() {
        let spec = paper_spec();
        let intr = CameraIntrinsics::new(380.0, 380.0, 320.0, 240.0).unwrap();
        assert_eq!(
            project_state_to_3d(StateIndex::Boundary, &spec, &intr),
            Err(GridError::BoundaryNotProjectable)
        );
    }

    #[test]
    fn linearization_is_a_bijection() {
        for (w, h, d) in [(1usize, 1usize, 1usize), (3, 2, 4), (5, 5, 5)] {
            let spec = build_grid_spec(w * 10, h * 10, 10, 10, 0.5, d).unwrap();
            let mut seen = vec![false; spec.state_count()];
            for k in 0..d {
                for j in 0..h {
                    for i in 0..w {
                        let s = StateIndex::InGrid { i, j, k };
                        let lin = s.linear(&spec);
                        assert!(!seen[lin]);
                        seen[lin] = true;
                        assert_eq!(StateIndex::from_linear(&spec, lin), s);
                    }
                }
            }
            let b = StateIndex::Boundary.linear(&spec);
            assert_eq!(b, spec.voxel_count());
            assert!(!seen[b]);
            assert_eq!(StateIndex::from_linear(&spec, b), StateIndex::Boundary);
        }
    }

    proptest! {
        #[test]
        fn projection_round_trip(i in 0usize..13, j in 0usize..10, k in 0usize..40) {
            let spec = paper_spec();
            let intr = CameraIntrinsics::new(380.0, 390.0, 319.5, 239.5).unwrap();
            let s = StateIndex::InGrid { i, j, k };
            let p = project_state_to_3d(s, &spec, &intr).unwrap();
            let (sx, sy) = intr.project(&p);
            let want_x = i as f64 * 50.0 + 25.0;
            let want_y = j as f64 * 50.0 + 25.0;
            prop_assert!((sx - want_x).abs() <= 1e-9 * want_x.max(1.0));
            prop_assert!((sy - want_y).abs() <= 1e-9 * want_y.max(1.0));
            // Rebinning the projected pixel and depth recovers the voxel.
            prop_assert_eq!((sx / 50.0).floor() as usize, i);
            prop_assert_eq!((sy / 50.0).floor() as usize, j);
            prop_assert_eq!((p.z / 0.1).floor() as usize, k);
        }

        #[test]
        fn discretize_counts_partition_the_image(depths in proptest::collection::vec(
            prop_oneof![
                Just(f32::NAN),
                Just(0.0f32),
                Just(-1.0f32),
                0.01f32..6.0f32,
            ],
            64 * 48,
        )) {
            let spec = build_grid_spec(64, 48, 16, 16, 0.5, 6).unwrap();
            let img = DepthImage::new(64, 48, depths.clone()).unwrap();
            let obs = discretize(&img, &spec).unwrap();
            let in_range = depths.iter().filter(|&&d| DepthImage::is_valid(d) && (d as f64) < spec.max_depth).count() as u64;
            prop_assert_eq!(obs.total(), in_range);
        }

        #[test]
        fn discretize_is_permutation_invariant_within_a_block(
            mut depths in proptest::collection::vec(0.01f32..2.9f32, 16 * 16),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            // One 16x16 block, one depth bin wide enough to hold everything.
            let spec = build_grid_spec(16, 16, 16, 16, 3.0, 2).unwrap();
            let img = DepthImage::new(16, 16, depths.clone()).unwrap();
            let before = discretize(&img, &spec).unwrap();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            depths.shuffle(&mut rng);
            let shuffled = DepthImage::new(16, 16, depths).unwrap();
            let after = discretize(&shuffled, &spec).unwrap();
            prop_assert_eq!(before, after);
        }
    }
}
