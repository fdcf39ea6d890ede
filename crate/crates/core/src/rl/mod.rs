//! Reinforcement-learned perturbation policies.
//!
//! Two Q-learned variants target the same one-edit-per-step budget as the
//! heuristics: RL-RR swaps one triple's relation, RL-ER rewires one
//! triple's tail. Each step decomposes into three subactions: a head
//! entity drawn uniformly, an incident edge chosen by Q1, and a
//! replacement chosen by Q2 from the K candidates the frozen triple
//! scorer rates lowest. A running LSTM encodes the action history into
//! the state both Q functions condition on, and rewards arrive every few
//! steps as the scaled change in a frozen downstream model's dev
//! statistic.

pub mod policy;
pub mod train;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::downstream::{DownstreamError, Evaluator};
use crate::kg::{EntityId, KgError, KnowledgeGraph, RelationId, Triple};
use crate::nn::{NnError, Optimizer};
use crate::perturb::PerturbMethod;
use crate::scorer::ScorerError;

pub use policy::{DqnPolicy, PolicyDims, QNets};
pub use train::{
    bellman_gradients, bellman_losses, bellman_update, epsilon_at, greedy_rollout, run_episode,
    select_action, train_policy, ActionContext, EpisodeEnv, EpisodeOutcome, Learner,
    ReplayBuffer, SelectedAction, TrainOutcome, Transition,
};

/// Denominator floor for reward scaling, keeping early rewards bounded.
pub const REWARD_FLOOR: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum RlError {
    #[error("bad training config: {0}")]
    Config(String),
    #[error("no entity has an outgoing edge to start from")]
    NoStartEntity,
    #[error("no legal replacement candidates after bounded resampling")]
    NoCandidates,
    #[error("non-finite value during training")]
    NonFinite,
    #[error("failed to read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("failed to write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("checkpoint {path}: {msg}")]
    Format { path: String, msg: String },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Downstream(#[from] DownstreamError),
}

/// Which edit the learned policy performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlVariant {
    RelationReplace,
    EdgeRewire,
}

impl RlVariant {
    pub fn label(self) -> &'static str {
        match self {
            RlVariant::RelationReplace => "RL-RR",
            RlVariant::EdgeRewire => "RL-ER",
        }
    }

    pub fn method(self) -> PerturbMethod {
        match self {
            RlVariant::RelationReplace => PerturbMethod::RlRelationReplace,
            RlVariant::EdgeRewire => PerturbMethod::RlEdgeRewire,
        }
    }
}

impl fmt::Display for RlVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for RlVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RL-RR" => Ok(RlVariant::RelationReplace),
            "RL-ER" => Ok(RlVariant::EdgeRewire),
            other => Err(format!("unknown policy variant {other:?}")),
        }
    }
}

/// The replacement component of one policy step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubactionTarget {
    Relation(RelationId),
    Entity(EntityId),
}

/// One fully resolved policy action: start head, chosen incident edge, and
/// replacement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SubactionTriple {
    pub a0: EntityId,
    pub a1: Triple,
    pub a2: SubactionTarget,
}

impl SubactionTriple {
    /// The triple that replaces `a1` in the graph.
    pub fn result_triple(&self) -> Triple {
        match self.a2 {
            SubactionTarget::Relation(r) => Triple::new(self.a1.head, r, self.a1.tail),
            SubactionTarget::Entity(e) => Triple::new(self.a1.head, self.a1.relation, e),
        }
    }
}

/// Knobs for one policy training run.
#[derive(Debug, Clone)]
pub struct RlTrainConfig {
    pub episodes: usize,
    pub steps_per_episode: usize,
    /// Reward every this many steps within an episode.
    pub reward_period: usize,
    /// Replacement candidates kept after scorer ranking.
    pub top_k: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub learning_rate: f64,
    /// Full target copy every this many updates.
    pub target_sync: usize,
    /// History states recomputed from a shuffled order per update batch.
    pub shuffle_recompute: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Magnitude rewards are normalized toward.
    pub scale_target: f64,
    pub lstm_hidden: usize,
    pub head_width: usize,
    /// Rewire candidates from the head's one-hop neighborhood instead of
    /// its complement.
    pub literal_neighbor_rewire: bool,
    /// Reward the statistic itself instead of its change.
    pub absolute_statistic_reward: bool,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for RlTrainConfig {
    fn default() -> Self {
        RlTrainConfig {
            episodes: 30,
            steps_per_episode: 20,
            reward_period: 20,
            top_k: 8,
            gamma: 0.95,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_steps: 2000,
            learning_rate: 1e-3,
            target_sync: 100,
            shuffle_recompute: 1,
            replay_capacity: 4096,
            batch_size: 32,
            scale_target: 1.0,
            lstm_hidden: 32,
            head_width: 32,
            literal_neighbor_rewire: false,
            absolute_statistic_reward: false,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

impl RlTrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let fail = |msg: String| Err(RlError::Config(msg));
        if self.episodes == 0 || self.steps_per_episode == 0 {
            return fail("episodes and steps per episode must be positive".into());
        }
        if self.reward_period == 0 {
            return fail("reward period must be at least 1".into());
        }
        if self.top_k == 0 {
            return fail("top-k must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail(format!("gamma must lie in [0, 1], got {}", self.gamma));
        }
        for (name, eps) in [("epsilon_start", self.epsilon_start), ("epsilon_end", self.epsilon_end)] {
            if !(0.0..=1.0).contains(&eps) {
                return fail(format!("{name} must lie in [0, 1], got {eps}"));
            }
        }
        if self.epsilon_decay_steps == 0 {
            return fail("epsilon decay needs at least one step".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.learning_rate));
        }
        if self.target_sync == 0 {
            return fail("target sync period must be at least 1".into());
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return fail("replay capacity must hold at least one batch".into());
        }
        if !(self.scale_target > 0.0) {
            return fail(format!("scale target must be positive, got {}", self.scale_target));
        }
        if self.lstm_hidden == 0 || self.head_width == 0 {
            return fail("network widths must be positive".into());
        }
        Ok(())
    }
}

/// One reward emission, as written to the reward curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardEvent {
    pub step: usize,
    pub raw: f64,
    pub scaled: f64,
    /// The task statistic the raw reward was derived from.
    pub statistic: f64,
}

/// Normalizes rewards to a target magnitude using the running mean of
/// absolute raw rewards, and remembers the previous statistic for the
/// delta form.
#[derive(Debug, Clone)]
pub struct RewardTracker {
    pub scale_target: f64,
    pub higher_is_better: bool,
    pub absolute: bool,
    pub previous: f64,
    mean_abs: f64,
    events: usize,
}

impl RewardTracker {
    pub fn new(initial: f64, higher_is_better: bool, scale_target: f64, absolute: bool) -> Self {
        RewardTracker {
            scale_target,
            higher_is_better,
            absolute,
            previous: initial,
            mean_abs: 0.0,
            events: 0,
        }
    }

    /// Resets the comparison point; the running mean persists across
    /// episodes.
    pub fn begin_episode(&mut self, initial: f64) {
        self.previous = initial;
    }

    /// Folds one statistic into the tracker and returns `(raw, scaled)`.
    pub fn record(&mut self, statistic: f64) -> (f64, f64) {
        let oriented = if self.higher_is_better { statistic } else { -statistic };
        let raw = if self.absolute {
            oriented
        } else if self.higher_is_better {
            statistic - self.previous
        } else {
            self.previous - statistic
        };
        self.events += 1;
        self.mean_abs += (raw.abs() - self.mean_abs) / self.events as f64;
        let scaled = raw * self.scale_target / self.mean_abs.max(REWARD_FLOOR);
        self.previous = statistic;
        (raw, scaled)
    }
}

/// Evaluates the tracked statistic on `kg` and emits a reward if
/// `step_in_episode` falls on the period. The returned event carries the
/// episode-local step; callers renumber it for global curves.
pub fn compute_reward(
    tracker: &mut RewardTracker,
    evaluator: &Evaluator,
    kg: &KnowledgeGraph,
    step_in_episode: usize,
    period: usize,
) -> Result<Option<RewardEvent>, RlError> {
    if step_in_episode == 0 || step_in_episode % period != 0 {
        return Ok(None);
    }
    let statistic = evaluator.dev_statistic(kg)?;
    let (raw, scaled) = tracker.record(statistic);
    if !scaled.is_finite() {
        return Err(RlError::NonFinite);
    }
    Ok(Some(RewardEvent { step: step_in_episode, raw, scaled, statistic }))
}
