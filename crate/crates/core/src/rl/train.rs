//! Experience collection, replay, and the double-level Q updates.
//!
//! An episode walks a working copy of the graph, one edit per step. Every
//! step stores a transition holding both candidate sets it saw, so a
//! single replayed sample can regress level 1 toward the discounted best
//! level-2 target at the same step and level 2 toward the reward plus the
//! discounted best level-1 target at the next step. Training ends with
//! one greedy episode on a dedicated random stream; that rollout is the
//! perturbation the run returns, and rerunning it from a saved checkpoint
//! reproduces the same graph.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::downstream::Evaluator;
use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::perturb::{Edit, PerturbationRecord, STEP_RETRIES};
use crate::scorer::Scorer;

use super::policy::{DqnPolicy, PolicyDims};
use super::{
    compute_reward, RewardEvent, RewardTracker, RlError, RlTrainConfig, RlVariant,
    SubactionTarget, SubactionTriple,
};

/// Stream separator for the final evaluation episode's generator, so the
/// rollout never shares draws with training.
const GREEDY_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn entity_emb(scorer: &Scorer, e: EntityId) -> Vec<f64> {
    scorer.entities.row(e.0 as usize).to_vec()
}

fn relation_emb(scorer: &Scorer, r: RelationId) -> Vec<f64> {
    scorer.relations.row(r.0 as usize).to_vec()
}

/// Level-1 action embedding: relation and tail concatenated.
fn edge_emb(scorer: &Scorer, r: RelationId, t: EntityId) -> Vec<f64> {
    let mut out = relation_emb(scorer, r);
    out.extend(entity_emb(scorer, t));
    out
}

fn target_emb(scorer: &Scorer, target: &SubactionTarget) -> Vec<f64> {
    match *target {
        SubactionTarget::Relation(r) => relation_emb(scorer, r),
        SubactionTarget::Entity(e) => entity_emb(scorer, e),
    }
}

/// History embedding of a completed action: start, edge relation, edge
/// tail, and replacement, concatenated.
fn action_emb(scorer: &Scorer, action: &SubactionTriple) -> Vec<f64> {
    let mut out = entity_emb(scorer, action.a0);
    out.extend(relation_emb(scorer, action.a1.relation));
    out.extend(entity_emb(scorer, action.a1.tail));
    out.extend(target_emb(scorer, &action.a2));
    out
}

/// Everything action selection reads from the environment.
pub struct ActionContext<'a> {
    pub kg: &'a KnowledgeGraph,
    pub scorer: &'a Scorer,
    pub variant: RlVariant,
    pub top_k: usize,
    pub literal_neighbor_rewire: bool,
}

/// One sampled action together with the candidate lists that framed it.
pub struct SelectedAction {
    pub action: SubactionTriple,
    /// Embeddings of the start entity's outgoing edges, the level-1
    /// choice set.
    pub a1_edge_embs: Vec<Vec<f64>>,
    /// Level-2 candidates surviving the scorer's lowest-k cut, ranked
    /// lowest first.
    pub a2_cands: Vec<SubactionTarget>,
    pub a2_cand_embs: Vec<Vec<f64>>,
}

/// Draws one action: a uniform start among entities with outgoing edges,
/// an epsilon-greedy edge, and an epsilon-greedy replacement from the
/// scorer-restricted candidates. Start entities whose edge yields no
/// legal replacement are resampled a bounded number of times.
pub fn select_action<R: Rng>(
    policy: &DqnPolicy,
    ctx: &ActionContext<'_>,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<SelectedAction, RlError> {
    let heads: Vec<EntityId> = (0..ctx.kg.n_entities() as u32)
        .map(EntityId)
        .filter(|&e| !ctx.kg.out_edges(e).is_empty())
        .collect();
    if heads.is_empty() {
        return Err(RlError::NoStartEntity);
    }
    for _ in 0..STEP_RETRIES {
        let a0 = heads[rng.gen_range(0..heads.len())];
        let a0_vec = entity_emb(ctx.scorer, a0);
        let edges = ctx.kg.out_edges(a0);
        let edge_embs: Vec<Vec<f64>> =
            edges.iter().map(|&(r, t)| edge_emb(ctx.scorer, r, t)).collect();
        let a1_idx = if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..edges.len())
        } else {
            argmax_first(&policy.q1_scores(state, &a0_vec, &edge_embs)?)
        };
        let (rel, tail) = edges[a1_idx];
        let a1 = Triple::new(a0, rel, tail);
        let cands = restricted_candidates(ctx, &a1)?;
        if cands.is_empty() {
            continue;
        }
        let cand_embs: Vec<Vec<f64>> =
            cands.iter().map(|c| target_emb(ctx.scorer, c)).collect();
        let a2_idx = if rng.gen::<f64>() < epsilon {
            rng.gen_range(0..cands.len())
        } else {
            let a1_vec = edge_emb(ctx.scorer, rel, tail);
            argmax_first(&policy.q2_scores(state, &a0_vec, &a1_vec, &cand_embs)?)
        };
        let action = SubactionTriple { a0, a1, a2: cands[a2_idx] };
        return Ok(SelectedAction {
            action,
            a1_edge_embs: edge_embs,
            a2_cands: cands,
            a2_cand_embs: cand_embs,
        });
    }
    Err(RlError::NoCandidates)
}

/// The legal replacement pool for `a1`, cut down to the scorer's lowest
/// `top_k`. Relation replacement keeps the current relation and any
/// relation whose swap creates no duplicate triple. Rewiring draws from
/// outside the start's one-hop neighborhood by default, or from inside it
/// behind the literal switch, either way excluding duplicates and self
/// loops.
fn restricted_candidates(
    ctx: &ActionContext<'_>,
    a1: &Triple,
) -> Result<Vec<SubactionTarget>, RlError> {
    match ctx.variant {
        RlVariant::RelationReplace => {
            let pool: Vec<RelationId> = (0..ctx.kg.n_relations() as u32)
                .map(RelationId)
                .filter(|&r| {
                    r == a1.relation || !ctx.kg.contains(&Triple::new(a1.head, r, a1.tail))
                })
                .collect();
            let kept = ctx.scorer.k_lowest_relations(a1.head, a1.tail, &pool, ctx.top_k)?;
            Ok(kept.into_iter().map(SubactionTarget::Relation).collect())
        }
        RlVariant::EdgeRewire => {
            let neighbors = ctx.kg.undirected_neighbors(a1.head);
            let pool: Vec<EntityId> = if ctx.literal_neighbor_rewire {
                neighbors
                    .iter()
                    .copied()
                    .filter(|&t| {
                        t != a1.head && !ctx.kg.contains(&Triple::new(a1.head, a1.relation, t))
                    })
                    .collect()
            } else {
                (0..ctx.kg.n_entities() as u32)
                    .map(EntityId)
                    .filter(|&t| t != a1.head && !neighbors.contains(&t))
                    .collect()
            };
            if pool.is_empty() {
                return Ok(Vec::new());
            }
            let kept = ctx.scorer.k_lowest_tails(a1.head, a1.relation, &pool, ctx.top_k)?;
            Ok(kept.into_iter().map(SubactionTarget::Entity).collect())
        }
    }
}

/// Index of the largest score, lowest index on ties.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Linear exploration schedule over global environment steps.
pub fn epsilon_at(cfg: &RlTrainConfig, global_step: usize) -> f64 {
    let frac = (global_step as f64 / cfg.epsilon_decay_steps as f64).min(1.0);
    cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac
}

/// One stored environment step. Both candidate embedding lists ride
/// along: the level-2 set of this step for the level-1 target, and the
/// level-1 set of the next step for the level-2 target.
#[derive(Debug, Clone)]
pub struct Transition {
    pub state: Vec<f64>,
    /// Action embeddings that produced `state`, kept for shuffled
    /// recomputation.
    pub history: Vec<Vec<f64>>,
    pub a0_emb: Vec<f64>,
    pub a1_emb: Vec<f64>,
    pub a2_emb: Vec<f64>,
    pub a2_cand_embs: Vec<Vec<f64>>,
    pub reward: f64,
    pub terminal: bool,
    pub next_state: Vec<f64>,
    pub next_a0_emb: Vec<f64>,
    pub next_a1_cand_embs: Vec<Vec<f64>>,
}

/// Fixed-capacity ring of transitions sampled uniformly with
/// replacement.
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        ReplayBuffer { capacity, items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    pub fn sample<R: Rng>(&self, batch: usize, rng: &mut R) -> Vec<Transition> {
        (0..batch).map(|_| self.items[rng.gen_range(0..self.items.len())].clone()).collect()
    }
}

/// Replay buffer plus the update counter driving target syncs.
pub struct Learner {
    pub buffer: ReplayBuffer,
    pub updates: usize,
}

impl Learner {
    pub fn new(capacity: usize) -> Self {
        Learner { buffer: ReplayBuffer::new(capacity), updates: 0 }
    }
}

fn bellman_targets(
    policy: &DqnPolicy,
    t: &Transition,
    gamma: f64,
) -> Result<(f64, f64), RlError> {
    let q2t = policy.q2_scores_target(&t.state, &t.a0_emb, &t.a1_emb, &t.a2_cand_embs)?;
    let y1 = gamma * max_of(&q2t);
    let y2 = if t.terminal {
        t.reward
    } else {
        let q1t = policy.q1_scores_target(&t.next_state, &t.next_a0_emb, &t.next_a1_cand_embs)?;
        t.reward + gamma * max_of(&q1t)
    };
    Ok((y1, y2))
}

fn max_of(scores: &[f64]) -> f64 {
    scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Mean squared errors of both levels against their frozen targets,
/// without touching any gradients.
pub fn bellman_losses(
    policy: &DqnPolicy,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, f64), RlError> {
    assert!(!batch.is_empty(), "empty batch");
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for t in batch {
        let (y1, y2) = bellman_targets(policy, t, gamma)?;
        let q1 = policy.q1_scores(&t.state, &t.a0_emb, std::slice::from_ref(&t.a1_emb))?[0];
        let q2 =
            policy.q2_scores(&t.state, &t.a0_emb, &t.a1_emb, std::slice::from_ref(&t.a2_emb))?[0];
        l1 += (q1 - y1).powi(2);
        l2 += (q2 - y2).powi(2);
    }
    let n = batch.len() as f64;
    Ok((l1 / n, l2 / n))
}

/// Accumulates gradients of both mean squared Bellman errors into the
/// online networks and returns the losses.
pub fn bellman_gradients(
    policy: &mut DqnPolicy,
    batch: &[Transition],
    gamma: f64,
) -> Result<(f64, f64), RlError> {
    assert!(!batch.is_empty(), "empty batch");
    let n = batch.len() as f64;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    for t in batch {
        let (y1, y2) = bellman_targets(policy, t, gamma)?;
        let (q1, tape1) = policy.q1_forward(&t.state, &t.a0_emb, &t.a1_emb)?;
        policy.q1_backward(&tape1, 2.0 * (q1 - y1) / n);
        l1 += (q1 - y1).powi(2);
        let (q2, tape2) = policy.q2_forward(&t.state, &t.a0_emb, &t.a1_emb, &t.a2_emb)?;
        policy.q2_backward(&tape2, 2.0 * (q2 - y2) / n);
        l2 += (q2 - y2).powi(2);
    }
    Ok((l1 / n, l2 / n))
}

/// One optimizer step on the online networks from a sampled batch.
pub fn bellman_update(
    policy: &mut DqnPolicy,
    batch: &[Transition],
    cfg: &RlTrainConfig,
) -> Result<(f64, f64), RlError> {
    policy.zero_online_grads();
    let losses = bellman_gradients(policy, batch, cfg.gamma)?;
    if !(losses.0.is_finite() && losses.1.is_finite()) {
        return Err(RlError::NonFinite);
    }
    cfg.optimizer.step_all(&mut policy.online_blocks_mut(), cfg.learning_rate)?;
    Ok(losses)
}

/// Recomputes the stored state of `count` sampled batch rows from a
/// shuffled copy of their action history. Only the local batch changes;
/// the buffer keeps the original order.
fn shuffle_recompute_states<R: Rng>(
    policy: &DqnPolicy,
    batch: &mut [Transition],
    count: usize,
    rng: &mut R,
) -> Result<(), RlError> {
    for _ in 0..count.min(batch.len()) {
        let idx = rng.gen_range(0..batch.len());
        let mut shuffled = batch[idx].history.clone();
        shuffled.shuffle(rng);
        batch[idx].state = policy.state_embed(&shuffled)?;
    }
    Ok(())
}

fn store_and_train<R: Rng>(
    policy: &mut DqnPolicy,
    learner: &mut Option<&mut Learner>,
    transition: Transition,
    cfg: &RlTrainConfig,
    rng: &mut R,
) -> Result<(), RlError> {
    let Some(learner) = learner.as_deref_mut() else {
        return Ok(());
    };
    learner.buffer.push(transition);
    if learner.buffer.len() < cfg.batch_size {
        return Ok(());
    }
    let mut batch = learner.buffer.sample(cfg.batch_size, rng);
    shuffle_recompute_states(policy, &mut batch, cfg.shuffle_recompute, rng)?;
    bellman_update(policy, &batch, cfg)?;
    learner.updates += 1;
    if learner.updates % cfg.target_sync == 0 {
        policy.sync_targets();
    }
    Ok(())
}

/// Borrowed environment pieces shared by every episode of a run.
pub struct EpisodeEnv<'a> {
    pub base: &'a KnowledgeGraph,
    pub scorer: &'a Scorer,
    pub evaluator: &'a Evaluator,
    pub cfg: &'a RlTrainConfig,
}

/// What one episode produced: the perturbed graph, the edit sequence,
/// any reward events (renumbered to global steps), and the downstream
/// dev statistic of the final graph.
pub struct EpisodeOutcome {
    pub kg: KnowledgeGraph,
    pub edits: Vec<Edit>,
    pub rewards: Vec<RewardEvent>,
    pub final_statistic: f64,
}

/// Plays one episode from a fresh copy of the base graph. With a learner
/// the episode also stores transitions and trains on replayed batches;
/// without one it only acts, which is the evaluation mode.
pub fn run_episode<R: Rng>(
    policy: &mut DqnPolicy,
    env: &EpisodeEnv<'_>,
    tracker: &mut RewardTracker,
    mut learner: Option<&mut Learner>,
    global_step: &mut usize,
    epsilon_override: Option<f64>,
    rng: &mut R,
) -> Result<EpisodeOutcome, RlError> {
    let cfg = env.cfg;
    let mut kg = env.base.clone();
    let mut edits: Vec<Edit> = Vec::new();
    let mut rewards: Vec<RewardEvent> = Vec::new();
    let mut history: Vec<Vec<f64>> = Vec::new();
    let mut h = vec![0.0; policy.dims.hidden];
    let mut c = vec![0.0; policy.dims.hidden];
    let mut pending: Option<Transition> = None;

    for step in 0..cfg.steps_per_episode {
        let epsilon = epsilon_override.unwrap_or_else(|| epsilon_at(cfg, *global_step));
        let ctx = ActionContext {
            kg: &kg,
            scorer: env.scorer,
            variant: policy.variant,
            top_k: cfg.top_k,
            literal_neighbor_rewire: cfg.literal_neighbor_rewire,
        };
        let sel = select_action(policy, &ctx, &h, epsilon, rng)?;
        let a0_vec = entity_emb(env.scorer, sel.action.a0);
        let a1_vec = edge_emb(env.scorer, sel.action.a1.relation, sel.action.a1.tail);
        let a2_vec = target_emb(env.scorer, &sel.action.a2);

        // The previous step's transition sees this step's state and the
        // level-1 choice set its successor actually faced.
        if let Some(mut prev) = pending.take() {
            prev.next_state = h.clone();
            prev.next_a0_emb = a0_vec.clone();
            prev.next_a1_cand_embs = sel.a1_edge_embs.clone();
            store_and_train(policy, &mut learner, prev, cfg, rng)?;
        }

        let edit = Edit { removed: vec![sel.action.a1], added: vec![sel.action.result_triple()] };
        kg = kg.apply_edits(&edit.removed, &edit.added)?;
        edits.push(edit);

        let state_before = h.clone();
        let history_before = history.clone();
        let act = action_emb(env.scorer, &sel.action);
        let (nh, nc, _) = policy.state_cell.forward(&act, &h, &c)?;
        h = nh;
        c = nc;
        history.push(act);

        *global_step += 1;
        let mut reward = 0.0;
        if let Some(mut event) =
            compute_reward(tracker, env.evaluator, &kg, step + 1, cfg.reward_period)?
        {
            reward = event.scaled;
            event.step = *global_step;
            rewards.push(event);
        }

        pending = Some(Transition {
            state: state_before,
            history: history_before,
            a0_emb: a0_vec,
            a1_emb: a1_vec,
            a2_emb: a2_vec,
            a2_cand_embs: sel.a2_cand_embs,
            reward,
            terminal: false,
            next_state: Vec::new(),
            next_a0_emb: Vec::new(),
            next_a1_cand_embs: Vec::new(),
        });
    }

    if let Some(mut last) = pending.take() {
        last.terminal = true;
        last.next_state = h.clone();
        store_and_train(policy, &mut learner, last, cfg, rng)?;
    }

    let final_statistic = env.evaluator.dev_statistic(&kg)?;
    Ok(EpisodeOutcome { kg, edits, rewards, final_statistic })
}

/// A finished training run: the policy, the graph its evaluation episode
/// produced, the replayable edit record, and the reward curve.
pub struct TrainOutcome {
    pub policy: DqnPolicy,
    pub kg: KnowledgeGraph,
    pub record: PerturbationRecord,
    pub rewards: Vec<RewardEvent>,
}

/// Trains a policy against a frozen scorer and a frozen downstream
/// evaluator, then plays one greedy episode on a dedicated stream. The
/// returned graph and record come from that final episode.
pub fn train_policy(
    kg: &KnowledgeGraph,
    scorer: &Scorer,
    evaluator: &Evaluator,
    variant: RlVariant,
    cfg: &RlTrainConfig,
) -> Result<TrainOutcome, RlError> {
    cfg.validate()?;
    scorer.check_compat(kg)?;
    let original = evaluator.dev_statistic(kg)?;
    let mut rng = crate::rng(cfg.seed);
    let dims = PolicyDims { emb: scorer.dim, hidden: cfg.lstm_hidden, head: cfg.head_width };
    let mut policy = DqnPolicy::init(variant, dims, &mut rng);
    let mut tracker = RewardTracker::new(
        original,
        evaluator.higher_is_better(),
        cfg.scale_target,
        cfg.absolute_statistic_reward,
    );
    let mut learner = Learner::new(cfg.replay_capacity);
    let env = EpisodeEnv { base: kg, scorer, evaluator, cfg };
    let mut global_step = 0;
    let mut rewards = Vec::new();

    for _ in 0..cfg.episodes {
        tracker.begin_episode(original);
        let out = run_episode(
            &mut policy,
            &env,
            &mut tracker,
            Some(&mut learner),
            &mut global_step,
            None,
            &mut rng,
        )?;
        rewards.extend(out.rewards);
    }

    tracker.begin_episode(original);
    let mut eval_rng = crate::rng(cfg.seed ^ GREEDY_STREAM);
    let out = run_episode(
        &mut policy,
        &env,
        &mut tracker,
        None,
        &mut global_step,
        Some(0.0),
        &mut eval_rng,
    )?;
    rewards.extend(out.rewards.iter().copied());

    let record = PerturbationRecord {
        method: variant.method(),
        seed: cfg.seed,
        scale: cfg.steps_per_episode as f64 / kg.n_triples() as f64,
        edits: out.edits,
        skipped: 0,
    };
    Ok(TrainOutcome { policy, kg: out.kg, record, rewards })
}

/// Replays the deterministic evaluation episode of a trained policy,
/// reproducing the graph `train_policy` returned for the same config.
/// Reward events are rescaled against a fresh tracker, so only the graph
/// and edits are comparable to the training run.
pub fn greedy_rollout(
    policy: &DqnPolicy,
    kg: &KnowledgeGraph,
    scorer: &Scorer,
    evaluator: &Evaluator,
    cfg: &RlTrainConfig,
) -> Result<EpisodeOutcome, RlError> {
    cfg.validate()?;
    scorer.check_compat(kg)?;
    if policy.dims.emb != scorer.dim {
        return Err(RlError::Config(format!(
            "policy embedding width {} does not match scorer dimension {}",
            policy.dims.emb, scorer.dim
        )));
    }
    let original = evaluator.dev_statistic(kg)?;
    let mut policy = policy.clone();
    let mut tracker = RewardTracker::new(
        original,
        evaluator.higher_is_better(),
        cfg.scale_target,
        cfg.absolute_statistic_reward,
    );
    let env = EpisodeEnv { base: kg, scorer, evaluator, cfg };
    let mut global_step = cfg.episodes * cfg.steps_per_episode;
    let mut eval_rng = crate::rng(cfg.seed ^ GREEDY_STREAM);
    run_episode(&mut policy, &env, &mut tracker, None, &mut global_step, Some(0.0), &mut eval_rng)
}
