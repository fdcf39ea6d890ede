//! Desk-scale toolkit for studying how downstream models react to
//! knowledge-graph perturbations.
//!
//! The crate is organised around a pipeline:
//!
//! * [`kg`] — immutable graph snapshots and the TSV interchange format.
//! * [`nn`] — tiny neural substrate (parameter blocks, MLPs, LSTM cells,
//!   reverse-mode gradients, Adam) everything trainable is built on.
//! * [`scorer`] — a diagonal bilinear triple scorer used both as a
//!   plausibility metric and as the embedding source for the policy.
//! * [`perturb`] — the four perturbation heuristics and scale sweeps.
//! * [`metrics`] — semantic and structural agreement between an original
//!   graph and a perturbed one.
//! * [`downstream`] — synthetic recommendation / QA worlds, the models that
//!   consume the graph, and noisy ablation baselines.
//! * [`rl`] — a hierarchical DQN that learns where to perturb so that
//!   downstream behaviour is preserved while plausibility drops.
//!
//! Everything is deterministic per seed: same inputs and seeds give
//! bit-identical artifacts.

pub mod downstream;
pub mod fixtures;
pub mod kg;
pub mod metrics;
pub mod nn;
pub mod perturb;
pub mod rl;
pub mod scorer;

use rand_chacha::rand_core::SeedableRng;

/// The crate-wide RNG. ChaCha keeps streams identical across platforms and
/// library versions, which the byte-identical artifact guarantees rely on.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Creates the deterministic RNG for `seed`.
pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

/// Formats a float with the fixed 9-decimal precision used by every
/// serialized artifact.
pub fn fmt9(x: f64) -> String {
    format!("{x:.9}")
}
