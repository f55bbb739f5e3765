//! Depth-noise injection reproducing the evaluation protocol: additive
//! Gaussian depth noise on a row-major pixel stride, spurious returns on
//! no-return pixels at the same stride, and independent no-depth-return
//! dropout.

use crate::grid::{DepthImage, NO_RETURN};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Noise protocol parameters. `stride: None` disables the additive and
/// spurious components entirely; `Some(1)` hits every pixel, `Some(2)` every
/// other pixel, `Some(10)` every tenth pixel (row-major indices).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Standard deviation of the additive depth noise, meters.
    pub sigma: f64,
    /// One-in-n pixel stride; `None` means no additive/spurious noise.
    pub stride: Option<u32>,
    /// Probability that a returned pixel is dropped to no-return.
    pub dropout: f64,
    /// Spurious returns on invalid pixels draw a depth uniform in
    /// `(0, spurious_range]`.
    pub spurious_range: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn quiet(seed: u64) -> Self {
        Self {
            sigma: 0.0,
            stride: None,
            dropout: 0.0,
            spurious_range: 4.0,
            seed,
        }
    }

    /// Same spec with a decorrelated per-frame seed.
    pub fn for_frame(&self, frame: u64) -> Self {
        Self {
            seed: self
                .seed
                .wrapping_add((frame + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)),
            ..*self
        }
    }
}

/// Apply the noise protocol to one frame. Deterministic per `spec.seed`.
pub fn inject_noise(img: &DepthImage, spec: &NoiseSpec) -> DepthImage {
    let mut out = img.clone();
    if spec.stride.is_none() && spec.dropout <= 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = Normal::new(0.0, spec.sigma.max(0.0)).expect("finite sigma");
    let stride = spec.stride.map(|n| n.max(1) as usize);
    for (idx, d) in out.depths_mut().iter_mut().enumerate() {
        if let Some(n) = stride {
            if idx % n == 0 {
                if DepthImage::is_valid(*d) {
                    *d = (*d as f64 + gauss.sample(&mut rng)) as f32;
                } else {
                    // Off-object spurious return.
                    *d = (rng.random::<f64>() * spec.spurious_range) as f32;
                }
            }
        }
        if spec.dropout > 0.0 && DepthImage::is_valid(*d) && rng.random::<f64>() < spec.dropout {
            *d = NO_RETURN;
        }
    }
    out
}
