//! Perturbation heuristics over graph snapshots.
//!
//! Four single-step edits, all vocabulary-preserving:
//!
//! * relation swap (RS): two distinct triples exchange relations;
//! * relation replace (RR): one triple's relation becomes the scorer's
//!   argmin over the whole relation vocabulary, so the replacement never
//!   scores higher than what it replaces;
//! * edge rewire (ER): one triple's tail moves to an entity that is incident
//!   to the same relation somewhere in the graph but not already adjacent to
//!   the head;
//! * edge delete (ED): one triple disappears.
//!
//! [`perturb_scale`] chains steps until a budget of `ceil(scale * |T|)`
//! edge-touches is spent (a swap touches two edges). Within one run targets
//! are drawn without replacement, so at full scale every original edge is
//! touched once. Steps that cannot produce a legal edit after a bounded
//! number of resamples are skipped and counted; the returned record replays
//! edit-for-edit onto the original graph.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use thiserror::Error;

use crate::kg::{EntityId, KgError, KnowledgeGraph, Triple};
use crate::scorer::{Scorer, ScorerError};
use crate::Rng;

/// Retry budget for steps whose sampled target admits no legal edit.
pub const STEP_RETRIES: usize = 16;

#[derive(Debug, Error)]
pub enum PerturbError {
    #[error("relation swap needs at least 2 triples")]
    TooFewTriples,
    #[error("cannot perturb an empty graph")]
    EmptyGraph,
    #[error("scale {0} outside [0, 1]")]
    InvalidScale(f64),
    #[error("{0} requires a trained scorer")]
    ScorerRequired(PerturbMethod),
    #[error("{0} is produced by policy training, not by the heuristic driver")]
    PolicyMethod(PerturbMethod),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Which procedure produced a perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerturbMethod {
    RelationSwap,
    RelationReplace,
    EdgeRewire,
    EdgeDelete,
    RlRelationReplace,
    RlEdgeRewire,
}

impl PerturbMethod {
    pub const ALL_HEURISTIC: [PerturbMethod; 4] = [
        PerturbMethod::RelationSwap,
        PerturbMethod::RelationReplace,
        PerturbMethod::EdgeRewire,
        PerturbMethod::EdgeDelete,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PerturbMethod::RelationSwap => "RS",
            PerturbMethod::RelationReplace => "RR",
            PerturbMethod::EdgeRewire => "ER",
            PerturbMethod::EdgeDelete => "ED",
            PerturbMethod::RlRelationReplace => "RL-RR",
            PerturbMethod::RlEdgeRewire => "RL-ER",
        }
    }
}

impl fmt::Display for PerturbMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PerturbMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RS" => Ok(PerturbMethod::RelationSwap),
            "RR" => Ok(PerturbMethod::RelationReplace),
            "ER" => Ok(PerturbMethod::EdgeRewire),
            "ED" => Ok(PerturbMethod::EdgeDelete),
            "RL-RR" => Ok(PerturbMethod::RlRelationReplace),
            "RL-ER" => Ok(PerturbMethod::RlEdgeRewire),
            other => Err(format!("unknown perturbation method {other:?}")),
        }
    }
}

/// One atomic edit: removals applied before additions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Edit {
    pub removed: Vec<Triple>,
    pub added: Vec<Triple>,
}

/// Everything needed to reproduce a perturbation run.
#[derive(Debug, Clone)]
pub struct PerturbationRecord {
    pub method: PerturbMethod,
    pub seed: u64,
    pub scale: f64,
    pub edits: Vec<Edit>,
    /// Steps abandoned after [`STEP_RETRIES`] resamples.
    pub skipped: usize,
}

impl PerturbationRecord {
    /// Applies the recorded edits in order to `original`.
    pub fn replay(&self, original: &KnowledgeGraph) -> Result<KnowledgeGraph, KgError> {
        let mut current = original.clone();
        for edit in &self.edits {
            current = current.apply_edits(&edit.removed, &edit.added)?;
        }
        Ok(current)
    }

    /// Serializes the run as an edit log: a header, then one `-` line per
    /// removal and one `+` line per addition, in application order, with
    /// labels resolved against `vocab`.
    pub fn to_edit_log(&self, vocab: &KnowledgeGraph) -> String {
        let mut out = format!(
            "kgperturb-edits v1 method={} seed={} scale={}\n",
            self.method,
            self.seed,
            crate::fmt9(self.scale)
        );
        let mut push = |sign: char, t: &Triple| {
            out.push(sign);
            out.push('\t');
            out.push_str(vocab.entity_label(t.head));
            out.push('\t');
            out.push_str(vocab.relation_label(t.relation));
            out.push('\t');
            out.push_str(vocab.entity_label(t.tail));
            out.push('\n');
        };
        for edit in &self.edits {
            for t in &edit.removed {
                push('-', t);
            }
            for t in &edit.added {
                push('+', t);
            }
        }
        out
    }
}

/// Result of one perturbation step.
#[derive(Debug)]
pub enum StepResult {
    Applied { graph: KnowledgeGraph, edit: Edit },
    /// No legal edit was found within the retry budget.
    Skipped,
}

/// Entities eligible as the new tail when rewiring `target`: incident to
/// some edge with the same relation, but neither the head itself nor one of
/// its current one-hop neighbours. Sorted by id.
pub fn rewire_candidates(kg: &KnowledgeGraph, target: &Triple) -> Vec<EntityId> {
    let mut incident: BTreeSet<EntityId> = BTreeSet::new();
    for t in kg.triples() {
        if t.relation == target.relation {
            incident.insert(t.head);
            incident.insert(t.tail);
        }
    }
    let blocked = kg.undirected_neighbors(target.head);
    incident
        .into_iter()
        .filter(|e| *e != target.head && !blocked.contains(e))
        .collect()
}

fn pick<'a>(pool: &'a [Triple], rng: &mut Rng) -> &'a Triple {
    &pool[rng.gen_range(0..pool.len())]
}

fn mark_touched(pool: &mut Vec<Triple>, t: &Triple) {
    if let Some(idx) = pool.iter().position(|x| x == t) {
        pool.swap_remove(idx);
    }
}

fn swap_step(kg: &KnowledgeGraph, pool: &mut Vec<Triple>, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    if kg.n_triples() < 2 {
        return Err(PerturbError::TooFewTriples);
    }
    for _ in 0..STEP_RETRIES {
        let first = *pick(pool, rng);
        // Prefer an untouched partner; fall back to any other current triple
        // when the pool is down to one entry.
        let second = if pool.len() >= 2 {
            let mut t = first;
            while t == first {
                t = *pick(pool, rng);
            }
            t
        } else {
            let others: Vec<Triple> = kg.triples().iter().copied().filter(|t| *t != first).collect();
            *pick(&others, rng)
        };
        let new_first = Triple::new(first.head, second.relation, first.tail);
        let new_second = Triple::new(second.head, first.relation, second.tail);
        // A swapped triple may already exist elsewhere in the graph, which
        // would break set semantics; resample the pair in that case.
        let collides = |t: &Triple| kg.contains(t) && *t != first && *t != second;
        if collides(&new_first) || collides(&new_second) {
            continue;
        }
        let removed = vec![first, second];
        let added = vec![new_first, new_second];
        let graph = kg.apply_edits(&removed, &added)?;
        mark_touched(pool, &first);
        mark_touched(pool, &second);
        return Ok(StepResult::Applied { graph, edit: Edit { removed, added } });
    }
    Ok(StepResult::Skipped)
}

fn replace_step(
    kg: &KnowledgeGraph,
    scorer: &Scorer,
    pool: &mut Vec<Triple>,
    rng: &mut Rng,
) -> Result<StepResult, PerturbError> {
    if kg.n_triples() == 0 {
        return Err(PerturbError::EmptyGraph);
    }
    for _ in 0..STEP_RETRIES {
        let target = *pick(pool, rng);
        let replacement = scorer.argmin_relation(target.head, target.tail)?;
        let new = Triple::new(target.head, replacement, target.tail);
        if new != target && kg.contains(&new) {
            // The lowest-scoring parallel edge already exists; this target
            // admits no legal replacement, try another one.
            continue;
        }
        let graph = kg.apply_edits(&[target], &[new])?;
        mark_touched(pool, &target);
        return Ok(StepResult::Applied { graph, edit: Edit { removed: vec![target], added: vec![new] } });
    }
    Ok(StepResult::Skipped)
}

fn rewire_step(kg: &KnowledgeGraph, pool: &mut Vec<Triple>, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    if kg.n_triples() == 0 {
        return Err(PerturbError::EmptyGraph);
    }
    for _ in 0..STEP_RETRIES {
        let target = *pick(pool, rng);
        let candidates = rewire_candidates(kg, &target);
        if candidates.is_empty() {
            continue;
        }
        let tail = candidates[rng.gen_range(0..candidates.len())];
        let new = Triple::new(target.head, target.relation, tail);
        let graph = kg.apply_edits(&[target], &[new])?;
        mark_touched(pool, &target);
        return Ok(StepResult::Applied { graph, edit: Edit { removed: vec![target], added: vec![new] } });
    }
    Ok(StepResult::Skipped)
}

fn delete_step(kg: &KnowledgeGraph, pool: &mut Vec<Triple>, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    if kg.n_triples() == 0 {
        return Err(PerturbError::EmptyGraph);
    }
    let target = *pick(pool, rng);
    let graph = kg.apply_edits(&[target], &[])?;
    mark_touched(pool, &target);
    Ok(StepResult::Applied { graph, edit: Edit { removed: vec![target], added: vec![] } })
}

/// One relation swap, targets uniform over all triples.
pub fn relation_swap(kg: &KnowledgeGraph, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    swap_step(kg, &mut kg.triples().to_vec(), rng)
}

/// One relation replacement, target uniform over all triples.
pub fn relation_replace(kg: &KnowledgeGraph, scorer: &Scorer, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    scorer.check_compat(kg)?;
    replace_step(kg, scorer, &mut kg.triples().to_vec(), rng)
}

/// One edge rewiring, target uniform over all triples.
pub fn edge_rewire(kg: &KnowledgeGraph, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    rewire_step(kg, &mut kg.triples().to_vec(), rng)
}

/// One edge deletion, target uniform over all triples.
pub fn edge_delete(kg: &KnowledgeGraph, rng: &mut Rng) -> Result<StepResult, PerturbError> {
    delete_step(kg, &mut kg.triples().to_vec(), rng)
}

/// Runs `method` until `ceil(scale * |T|)` edge-touches are spent and
/// returns the perturbed graph with its replayable record. `scorer` is
/// required for RR only. Deterministic per `(kg, method, scale, seed)`.
pub fn perturb_scale(
    kg: &KnowledgeGraph,
    method: PerturbMethod,
    scale: f64,
    scorer: Option<&Scorer>,
    seed: u64,
) -> Result<(KnowledgeGraph, PerturbationRecord), PerturbError> {
    if !(0.0..=1.0).contains(&scale) || !scale.is_finite() {
        return Err(PerturbError::InvalidScale(scale));
    }
    if matches!(method, PerturbMethod::RlRelationReplace | PerturbMethod::RlEdgeRewire) {
        return Err(PerturbError::PolicyMethod(method));
    }
    let scorer = match method {
        PerturbMethod::RelationReplace => {
            let s = scorer.ok_or(PerturbError::ScorerRequired(method))?;
            s.check_compat(kg)?;
            Some(s)
        }
        _ => None,
    };

    // The epsilon guards against ties like 0.1 * 400 landing a hair above
    // the integer it denotes; a swap spends two touches, so an odd budget
    // overshoots by at most one touch.
    let touches = ((scale * kg.n_triples() as f64) - 1e-9).ceil().max(0.0) as usize;
    let steps = match method {
        PerturbMethod::RelationSwap => touches.div_ceil(2),
        _ => touches,
    };

    let mut rng = crate::rng(seed);
    let mut record = PerturbationRecord { method, seed, scale, edits: Vec::new(), skipped: 0 };
    let mut current = kg.clone();
    let mut pool: Vec<Triple> = kg.triples().to_vec();

    for _ in 0..steps {
        let outcome = match method {
            PerturbMethod::RelationSwap => swap_step(&current, &mut pool, &mut rng)?,
            PerturbMethod::RelationReplace => replace_step(&current, scorer.unwrap(), &mut pool, &mut rng)?,
            PerturbMethod::EdgeRewire => rewire_step(&current, &mut pool, &mut rng)?,
            PerturbMethod::EdgeDelete => delete_step(&current, &mut pool, &mut rng)?,
            PerturbMethod::RlRelationReplace | PerturbMethod::RlEdgeRewire => unreachable!(),
        };
        match outcome {
            StepResult::Applied { graph, edit } => {
                current = graph;
                record.edits.push(edit);
            }
            StepResult::Skipped => {
                record.skipped += 1;
                log::warn!("{method} step found no legal edit after {STEP_RETRIES} resamples; skipping");
            }
        }
    }
    Ok((current, record))
}
