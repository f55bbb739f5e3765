//! Particle-filter belief tracking, plus an exact forward filter used as a
//! validation oracle on small grids.
//!
//! Each update propagates every particle through the transition table,
//! weights it with the observation model at its drawn state, and resamples
//! the whole set multinomially from those weights — resampling happens every
//! frame. A frame whose weights all vanish keeps the propagated set
//! unweighted and raises a degeneracy flag instead of silently resetting the
//! belief.

use crate::grid::{GridSpec, StateIndex, VoxelObservation};
use crate::models::{ObservationParams, TransitionModel};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum FilterError {
    #[error("invalid filter parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

/// Normalized belief over all states (in-grid voxels plus the boundary).
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
    mode_linear: usize,
    mode_prob: f64,
}

impl Belief {
    /// Wrap a probability vector; the caller guarantees it sums to one.
    /// The mode ties break toward the lowest linear index.
    pub fn from_probs(probs: Vec<f64>) -> Self {
        debug_assert!(!probs.is_empty());
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let (mode_linear, mode_prob) =
            probs
                .iter()
                .enumerate()
                .fold(
                    (0usize, f64::MIN),
                    |(bi, bp), (i, &p)| {
                        if p > bp {
                            (i, p)
                        } else {
                            (bi, bp)
                        }
                    },
                );
        Self {
            probs,
            mode_linear,
            mode_prob,
        }
    }

    pub fn uniform(state_count: usize) -> Self {
        Self::from_probs(vec![1.0 / state_count as f64; state_count])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob_linear(&self, lin: usize) -> f64 {
        self.probs[lin]
    }

    pub fn prob(&self, s: StateIndex, spec: &GridSpec) -> f64 {
        self.probs[s.linear(spec)]
    }

    pub fn boundary_prob(&self) -> f64 {
        *self.probs.last().unwrap()
    }

    pub fn mode_linear(&self) -> usize {
        self.mode_linear
    }

    pub fn mode(&self, spec: &GridSpec) -> StateIndex {
        StateIndex::from_linear(spec, self.mode_linear)
    }

    pub fn mode_prob(&self) -> f64 {
        self.mode_prob
    }

    /// Total-variation distance to another belief over the same states.
    pub fn tv_distance(&self, other: &Belief) -> f64 {
        debug_assert_eq!(self.probs.len(), other.probs.len());
        self.probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0
    }
}

/// A fixed-size set of state particles with its own seeded random stream.
#[derive(Debug, Clone)]
pub struct ParticleSet {
    particles: Vec<u32>,
    state_count: usize,
    rng: ChaCha8Rng,
    degenerate: bool,
    // Scratch buffers reused across updates.
    propagated: Vec<u32>,
    cumulative: Vec<f64>,
}

impl ParticleSet {
    /// Spread `n` particles over all states: an equal share per state,
    /// remainder distributed one-per-state by a seeded shuffle.
    pub fn init_uniform(n: usize, spec: &GridSpec, seed: u64) -> Result<Self, FilterError> {
        if n == 0 {
            return Err(FilterError::InvalidParameter {
                name: "particles",
                reason: "need at least one particle".into(),
            });
        }
        let state_count = spec.state_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = n / state_count;
        let remainder = n % state_count;
        let mut particles = Vec::with_capacity(n);
        for s in 0..state_count as u32 {
            for _ in 0..base {
                particles.push(s);
            }
        }
        if remainder > 0 {
            let mut order: Vec<u32> = (0..state_count as u32).collect();
            // Fisher-Yates; each favored state gains exactly one particle.
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            particles.extend_from_slice(&order[..remainder]);
        }
        Ok(Self {
            particles,
            state_count,
            rng,
            degenerate: false,
            propagated: Vec::new(),
            cumulative: Vec::new(),
        })
    }

    /// Build a set from explicit linear states (analysis and test setups).
    pub fn from_states(
        states: Vec<u32>,
        state_count: usize,
        seed: u64,
    ) -> Result<Self, FilterError> {
        if states.is_empty() {
            return Err(FilterError::InvalidParameter {
                name: "particles",
                reason: "need at least one particle".into(),
            });
        }
        if let Some(&bad) = states.iter().find(|&&s| s as usize >= state_count) {
            return Err(FilterError::InvalidParameter {
                name: "particles",
                reason: format!("state {bad} out of range for {state_count} states"),
            });
        }
        Ok(Self {
            particles: states,
            state_count,
            rng: ChaCha8Rng::seed_from_u64(seed),
            degenerate: false,
            propagated: Vec::new(),
            cumulative: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[u32] {
        &self.particles
    }

    /// Whether the last update saw every observation weight vanish.
    pub fn last_update_degenerate(&self) -> bool {
        self.degenerate
    }

    /// One filter iteration: propagate, weight, multinomially resample.
    pub fn update_belief(
        &mut self,
        obs: &VoxelObservation,
        model: &TransitionModel,
        params: &ObservationParams,
    ) {
        assert_eq!(
            model.state_count(),
            self.state_count,
            "transition model was built for a different grid"
        );
        let boundary = self.state_count - 1;
        let n = self.particles.len();

        self.propagated.clear();
        self.cumulative.clear();
        let mut total = 0.0f64;
        for idx in 0..n {
            let next = model.sample_next_linear(self.particles[idx] as usize, &mut self.rng);
            self.propagated.push(next as u32);
            total += params.weight_linear(next, boundary, obs);
            self.cumulative.push(total);
        }

        if total <= 0.0 || !total.is_finite() {
            // Every weight underflowed: keep the propagated set unweighted.
            self.degenerate = true;
            std::mem::swap(&mut self.particles, &mut self.propagated);
            return;
        }
        self.degenerate = false;
        for slot in self.particles.iter_mut() {
            let u = self.rng.random::<f64>() * total;
            let pos = self.cumulative.partition_point(|&c| c <= u);
            *slot = self.propagated[pos.min(n - 1)];
        }
    }

    /// Belief as normalized particle counts per state.
    pub fn belief(&self) -> Belief {
        let mut counts = vec![0u32; self.state_count];
        for &p in &self.particles {
            counts[p as usize] += 1;
        }
        let n = self.particles.len() as f64;
        Belief::from_probs(counts.into_iter().map(|c| c as f64 / n).collect())
    }
}

/// Spec-style free function: one filter update on a particle set.
pub fn update_belief(
    ps: &mut ParticleSet,
    obs: &VoxelObservation,
    model: &TransitionModel,
    params: &ObservationParams,
) {
    ps.update_belief(obs, model, params)
}

/// Spec-style free function: the belief carried by a particle set.
pub fn belief_of(ps: &ParticleSet) -> Belief {
    ps.belief()
}

/// One exact Bayes-recursion step: `b' ∝ Z(·, o) ⊙ (Tᵀ b)`.
///
/// Returns the posterior and whether the normalizer vanished (in which case
/// the posterior falls back to uniform).
pub fn exact_forward_step(
    prior: &Belief,
    obs: &VoxelObservation,
    model: &TransitionModel,
    params: &ObservationParams,
) -> (Belief, bool) {
    let n = model.state_count();
    assert_eq!(prior.len(), n);
    let boundary = n - 1;
    let mut predicted = vec![0.0f64; n];
    for (s, &mass) in prior.probs().iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (t, p) in model.row_entries(s) {
            predicted[t] += mass * p;
        }
    }
    let mut total = 0.0;
    for (t, value) in predicted.iter_mut().enumerate() {
        *value *= params.weight_linear(t, boundary, obs);
        total += *value;
    }
    if total <= 0.0 || !total.is_finite() {
        return (Belief::uniform(n), true);
    }
    for value in predicted.iter_mut() {
        *value /= total;
    }
    (Belief::from_probs(predicted), false)
}

/// Run the exact filter over a whole observation sequence.
pub fn exact_forward_filter(
    prior: &Belief,
    observations: &[VoxelObservation],
    model: &TransitionModel,
    params: &ObservationParams,
) -> Belief {
    let mut belief = prior.clone();
    for obs in observations {
        belief = exact_forward_step(&belief, obs, model, params).0;
    }
    belief
}
