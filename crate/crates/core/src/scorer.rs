//! Diagonal bilinear triple scorer.
//!
//! A triple `(h, r, t)` gets the raw score `sum_i h_i * r_i * t_i` over
//! learned embeddings, squashed through a logistic to a plausibility in
//! `(0, 1)`. Training is link prediction: observed triples are positives,
//! negatives corrupt the head or tail uniformly. The trained tables also
//! serve as the action-embedding source for the policy networks.

use std::path::Path;

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph, RelationId, Triple};
use crate::nn::{logistic_loss, sigmoid, Optimizer, ParamBlock};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("entity id {0} out of range (scorer covers {1} entities)")]
    EntityOutOfRange(u32, usize),
    #[error("relation id {0} out of range (scorer covers {1} relations)")]
    RelationOutOfRange(u32, usize),
    #[error("scorer sized for {se} entities / {sr} relations, graph has {ge} / {gr}")]
    SizeMismatch { se: usize, sr: usize, ge: usize, gr: usize },
    #[error("no candidates to rank")]
    NoCandidates,
    #[error("cannot train on an empty graph")]
    EmptyGraph,
    #[error("non-finite loss at epoch {0}")]
    NonFinite(usize),
    #[error("failed to read {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write {path}: {source}")]
    Write {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint {path}: {msg}")]
    Format { path: String, msg: String },
}

/// Training settings for [`train_scorer`].
#[derive(Debug, Clone)]
pub struct ScorerConfig {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Negatives sampled per observed triple.
    pub negatives: usize,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        ScorerConfig {
            dim: 16,
            epochs: 300,
            learning_rate: 0.05,
            negatives: 2,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

/// Frozen (or in-training) embedding tables.
#[derive(Debug, Clone)]
pub struct Scorer {
    pub dim: usize,
    /// `n_entities x dim`.
    pub entities: ParamBlock,
    /// `n_relations x dim`.
    pub relations: ParamBlock,
}

const CHECKPOINT_MAGIC: &str = "kgperturb-scorer v1";

impl Scorer {
    pub fn init<R: rand::Rng>(n_entities: usize, n_relations: usize, dim: usize, rng: &mut R) -> Self {
        Scorer {
            dim,
            entities: ParamBlock::uniform(n_entities, dim, rng),
            relations: ParamBlock::uniform(n_relations, dim, rng),
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entities.rows
    }

    pub fn n_relations(&self) -> usize {
        self.relations.rows
    }

    /// Errors unless the scorer tables cover exactly the graph's vocabulary.
    pub fn check_compat(&self, kg: &KnowledgeGraph) -> Result<(), ScorerError> {
        if self.n_entities() != kg.n_entities() || self.n_relations() != kg.n_relations() {
            return Err(ScorerError::SizeMismatch {
                se: self.n_entities(),
                sr: self.n_relations(),
                ge: kg.n_entities(),
                gr: kg.n_relations(),
            });
        }
        Ok(())
    }

    fn check_entity(&self, e: EntityId) -> Result<(), ScorerError> {
        if (e.0 as usize) < self.n_entities() {
            Ok(())
        } else {
            Err(ScorerError::EntityOutOfRange(e.0, self.n_entities()))
        }
    }

    fn check_relation(&self, r: RelationId) -> Result<(), ScorerError> {
        if (r.0 as usize) < self.n_relations() {
            Ok(())
        } else {
            Err(ScorerError::RelationOutOfRange(r.0, self.n_relations()))
        }
    }

    fn raw_unchecked(&self, h: EntityId, r: RelationId, t: EntityId) -> f64 {
        let hv = self.entities.row(h.0 as usize);
        let rv = self.relations.row(r.0 as usize);
        let tv = self.entities.row(t.0 as usize);
        let mut acc = 0.0;
        for i in 0..self.dim {
            acc += hv[i] * rv[i] * tv[i];
        }
        acc
    }

    /// Raw bilinear score before the logistic squash.
    pub fn raw_score(&self, h: EntityId, r: RelationId, t: EntityId) -> Result<f64, ScorerError> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        self.check_entity(t)?;
        Ok(self.raw_unchecked(h, r, t))
    }

    /// Plausibility in `(0, 1)`.
    pub fn score(&self, t: &Triple) -> Result<f64, ScorerError> {
        Ok(sigmoid(self.raw_score(t.head, t.relation, t.tail)?))
    }

    /// The relation whose substitution scores lowest for `(h, _, t)`, over
    /// the whole relation vocabulary, ties broken by lowest id.
    pub fn argmin_relation(&self, h: EntityId, t: EntityId) -> Result<RelationId, ScorerError> {
        self.check_entity(h)?;
        self.check_entity(t)?;
        if self.n_relations() == 0 {
            return Err(ScorerError::NoCandidates);
        }
        let mut best = RelationId(0);
        let mut best_score = f64::INFINITY;
        for r in 0..self.n_relations() as u32 {
            let s = self.raw_unchecked(h, RelationId(r), t);
            if s < best_score {
                best_score = s;
                best = RelationId(r);
            }
        }
        Ok(best)
    }

    /// The `k` relations whose substituted triples `(h, r, t)` score lowest,
    /// ascending, ties broken by lower id. Fewer than `k` candidates yield
    /// all of them; an empty candidate list is an error.
    pub fn k_lowest_relations(
        &self,
        h: EntityId,
        t: EntityId,
        candidates: &[RelationId],
        k: usize,
    ) -> Result<Vec<RelationId>, ScorerError> {
        self.check_entity(h)?;
        self.check_entity(t)?;
        if candidates.is_empty() {
            return Err(ScorerError::NoCandidates);
        }
        let mut scored: Vec<(f64, RelationId)> = Vec::with_capacity(candidates.len());
        for &r in candidates {
            self.check_relation(r)?;
            scored.push((self.raw_unchecked(h, r, t), r));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|(_, r)| r).collect())
    }

    /// The `k` tails whose substituted triples `(h, r, t')` score lowest,
    /// ascending, ties broken by lower id.
    pub fn k_lowest_tails(
        &self,
        h: EntityId,
        r: RelationId,
        candidates: &[EntityId],
        k: usize,
    ) -> Result<Vec<EntityId>, ScorerError> {
        self.check_entity(h)?;
        self.check_relation(r)?;
        if candidates.is_empty() {
            return Err(ScorerError::NoCandidates);
        }
        let mut scored: Vec<(f64, EntityId)> = Vec::with_capacity(candidates.len());
        for &t in candidates {
            self.check_entity(t)?;
            scored.push((self.raw_unchecked(h, r, t), t));
        }
        scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(k).map(|(_, t)| t).collect())
    }

    /// Serializes the tables: a header naming the dimension, then one line
    /// per entity and per relation with 9-decimal fixed-precision values.
    pub fn to_checkpoint(&self) -> String {
        let mut out = format!("{CHECKPOINT_MAGIC} d={}\n", self.dim);
        for row in 0..self.entities.rows {
            push_row(&mut out, self.entities.row(row));
        }
        for row in 0..self.relations.rows {
            push_row(&mut out, self.relations.row(row));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), ScorerError> {
        std::fs::write(path, self.to_checkpoint()).map_err(|source| ScorerError::Write {
            path: path.display().to_string(),
            source,
        })
    }

    /// Loads a checkpoint. The table sizes are not part of the format, so the
    /// caller supplies the expected entity and relation counts (normally from
    /// the graph the scorer was trained on).
    pub fn load(path: &Path, n_entities: usize, n_relations: usize) -> Result<Self, ScorerError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScorerError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_checkpoint(&text, n_entities, n_relations)
            .map_err(|msg| ScorerError::Format { path: path.display().to_string(), msg })
    }

    pub fn from_checkpoint(text: &str, n_entities: usize, n_relations: usize) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let dim_field = header
            .strip_prefix(CHECKPOINT_MAGIC)
            .and_then(|rest| rest.trim().strip_prefix("d="))
            .ok_or_else(|| format!("bad header {header:?}"))?;
        let dim: usize = dim_field.parse().map_err(|_| format!("bad dimension {dim_field:?}"))?;

        let mut scorer = Scorer {
            dim,
            entities: ParamBlock::zeros(n_entities, dim),
            relations: ParamBlock::zeros(n_relations, dim),
        };
        let mut rows = 0usize;
        for line in lines {
            let values: Result<Vec<f64>, _> = line.split('\t').map(str::parse::<f64>).collect();
            let values = values.map_err(|e| format!("row {}: {e}", rows + 1))?;
            if values.len() != dim {
                return Err(format!("row {}: expected {} values, got {}", rows + 1, dim, values.len()));
            }
            let target = if rows < n_entities {
                scorer.entities.row_mut(rows)
            } else if rows < n_entities + n_relations {
                scorer.relations.row_mut(rows - n_entities)
            } else {
                return Err(format!("too many rows, expected {}", n_entities + n_relations));
            };
            target.copy_from_slice(&values);
            rows += 1;
        }
        if rows != n_entities + n_relations {
            return Err(format!("expected {} rows, got {rows}", n_entities + n_relations));
        }
        Ok(scorer)
    }
}

fn push_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push('\t');
        }
        out.push_str(&crate::fmt9(*v));
    }
    out.push('\n');
}

/// How many times negative sampling retries before accepting a corrupted
/// triple that collides with an observed one (tiny dense graphs may leave no
/// non-colliding choice).
const NEGATIVE_RETRIES: usize = 32;

/// Trains embeddings on `kg` by logistic link prediction: full-batch
/// gradients, one optimizer step per epoch, negatives drawn fresh each
/// epoch from the seeded stream. Deterministic per config.
pub fn train_scorer(kg: &KnowledgeGraph, cfg: &ScorerConfig) -> Result<Scorer, ScorerError> {
    use rand::Rng as _;

    if kg.n_triples() == 0 {
        return Err(ScorerError::EmptyGraph);
    }
    let mut rng = crate::rng(cfg.seed);
    let mut scorer = Scorer::init(kg.n_entities(), kg.n_relations(), cfg.dim, &mut rng);
    let n_entities = kg.n_entities() as u32;

    for epoch in 0..cfg.epochs {
        let mut loss_sum = 0.0;
        for &pos in kg.triples() {
            loss_sum += accumulate(&mut scorer, &pos, 1.0, 1.0);
            for _ in 0..cfg.negatives {
                let mut neg = pos;
                for _ in 0..NEGATIVE_RETRIES {
                    neg = pos;
                    let e = EntityId(rng.gen_range(0..n_entities));
                    if rng.gen_bool(0.5) {
                        neg.head = e;
                    } else {
                        neg.tail = e;
                    }
                    if !kg.contains(&neg) {
                        break;
                    }
                }
                loss_sum += accumulate(&mut scorer, &neg, 0.0, 1.0);
            }
        }
        if !loss_sum.is_finite() {
            return Err(ScorerError::NonFinite(epoch));
        }
        let Scorer { entities, relations, .. } = &mut scorer;
        cfg.optimizer
            .step_all(&mut [entities, relations], cfg.learning_rate)
            .map_err(|_| ScorerError::NonFinite(epoch))?;
    }
    Ok(scorer)
}

/// Mean logistic loss of labelled triples under the current tables; pure,
/// used by the finite-difference audits.
pub fn batch_loss(scorer: &Scorer, examples: &[(Triple, f64)]) -> f64 {
    let mut total = 0.0;
    for (t, label) in examples {
        let raw = scorer.raw_unchecked(t.head, t.relation, t.tail);
        total += logistic_loss(raw, *label).0;
    }
    total / examples.len() as f64
}

/// Accumulates the gradient of [`batch_loss`] and returns the loss.
pub fn batch_gradients(scorer: &mut Scorer, examples: &[(Triple, f64)]) -> f64 {
    let scale = 1.0 / examples.len() as f64;
    let mut total = 0.0;
    for (t, label) in examples {
        total += accumulate(scorer, t, *label, scale);
    }
    total * scale
}

/// Adds the scaled logistic-loss gradient of one labelled triple to the
/// tables and returns the loss term.
fn accumulate(scorer: &mut Scorer, t: &Triple, label: f64, scale: f64) -> f64 {
    let raw = scorer.raw_unchecked(t.head, t.relation, t.tail);
    let (loss, dlogit) = logistic_loss(raw, label);
    let dlogit = dlogit * scale;
    let dim = scorer.dim;
    let (h, r, tl) = (t.head.0 as usize, t.relation.0 as usize, t.tail.0 as usize);
    for i in 0..dim {
        let hv = scorer.entities.at(h, i);
        let rv = scorer.relations.at(r, i);
        let tv = scorer.entities.at(t.tail.0 as usize, i);
        scorer.entities.grad[h * dim + i] += dlogit * rv * tv;
        scorer.relations.grad[r * dim + i] += dlogit * hv * tv;
        scorer.entities.grad[tl * dim + i] += dlogit * hv * rv;
    }
    loss
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::Rng as _;

    /// Scorer whose tables make `raw(h, r, t)` easy to set by hand.
    fn unit_scorer(dim: usize, n_entities: usize, n_relations: usize) -> Scorer {
        Scorer {
            dim,
            entities: ParamBlock::zeros(n_entities, dim),
            relations: ParamBlock::zeros(n_relations, dim),
        }
    }

    #[test]
    fn logistic_squash_closed_forms() {
        // h=[1,0], r=[2,1], t=[1,0] gives raw 2; opposing tail gives -2.
        let mut s = unit_scorer(2, 3, 1);
        s.entities.row_mut(0).copy_from_slice(&[1.0, 0.0]);
        s.entities.row_mut(1).copy_from_slice(&[1.0, 0.0]);
        s.entities.row_mut(2).copy_from_slice(&[-1.0, 0.0]);
        s.relations.row_mut(0).copy_from_slice(&[2.0, 1.0]);
        let p = s.score(&Triple::new(EntityId(0), RelationId(0), EntityId(1))).unwrap();
        assert!((p - 0.880797).abs() < 1e-6);
        let zero = unit_scorer(2, 2, 1);
        let p0 = zero.score(&Triple::new(EntityId(0), RelationId(0), EntityId(1))).unwrap();
        assert_eq!(p0, 0.5);
        let pneg = s.score(&Triple::new(EntityId(0), RelationId(0), EntityId(2))).unwrap();
        assert!((pneg - 0.119203).abs() < 1e-6);
    }

    #[test]
    fn score_rejects_out_of_range_ids() {
        let s = unit_scorer(2, 2, 1);
        assert!(matches!(
            s.score(&Triple::new(EntityId(5), RelationId(0), EntityId(0))),
            Err(ScorerError::EntityOutOfRange(5, 2))
        ));
        assert!(matches!(
            s.score(&Triple::new(EntityId(0), RelationId(3), EntityId(0))),
            Err(ScorerError::RelationOutOfRange(3, 1))
        ));
    }

    #[test]
    fn zero_learning_rate_keeps_seeded_init() {
        let g = fixtures::tiny6();
        let cfg = ScorerConfig { epochs: 1, learning_rate: 0.0, seed: 9, ..Default::default() };
        let trained = train_scorer(&g, &cfg).unwrap();
        let mut rng = crate::rng(9);
        let init = Scorer::init(g.n_entities(), g.n_relations(), cfg.dim, &mut rng);
        assert_eq!(trained.entities.values, init.entities.values);
        assert_eq!(trained.relations.values, init.relations.values);
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let g = fixtures::tiny6();
        let cfg = ScorerConfig { dim: 8, epochs: 40, seed: 3, ..Default::default() };
        let a = train_scorer(&g, &cfg).unwrap();
        let b = train_scorer(&g, &cfg).unwrap();
        assert_eq!(a.entities.values, b.entities.values);
        assert_eq!(a.relations.values, b.relations.values);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng(23);
        let kg = crate::kg::random_graph(10, 3, 24, &mut rng);
        let examples: Vec<(Triple, f64)> = kg
            .triples()
            .iter()
            .enumerate()
            .map(|(i, &t)| (t, f64::from(u8::from(i % 2 == 0))))
            .collect();
        let mut scorer = Scorer::init(10, 3, 5, &mut rng);
        batch_gradients(&mut scorer, &examples);
        let dim = scorer.dim;
        let mut blocks = vec![scorer.entities, scorer.relations];
        let examples_ref = &examples;
        let report = crate::nn::finite_diff_check(
            &mut blocks,
            |b| {
                let view =
                    Scorer { dim, entities: b[0].clone(), relations: b[1].clone() };
                batch_loss(&view, examples_ref)
            },
            &mut rng,
        );
        assert!(report.ok(1e-4), "worst rel err {}", report.worst_rel_err);
    }

    #[test]
    fn training_separates_observed_from_corrupted() {
        let g = fixtures::tiny6();
        let cfg = ScorerConfig { dim: 8, epochs: 200, seed: 7, ..Default::default() };
        let s = train_scorer(&g, &cfg).unwrap();
        let mean_true: f64 =
            g.triples().iter().map(|t| s.score(t).unwrap()).sum::<f64>() / g.n_triples() as f64;
        let mut rng = crate::rng(70);
        let mut mean_corrupt = 0.0;
        for _ in 0..100 {
            let mut t = g.triples()[rng.gen_range(0..g.n_triples())];
            let e = EntityId(rng.gen_range(0..g.n_entities() as u32));
            if rng.gen_bool(0.5) {
                t.head = e;
            } else {
                t.tail = e;
            }
            mean_corrupt += s.score(&t).unwrap();
        }
        mean_corrupt /= 100.0;
        assert!(
            mean_true - mean_corrupt >= 0.2,
            "separation too small: {mean_true} vs {mean_corrupt}"
        );
    }

    #[test]
    fn argmin_relation_prefers_lowest_id_on_ties() {
        let s = unit_scorer(2, 2, 3);
        // All relations score 0; the lowest id must win.
        assert_eq!(s.argmin_relation(EntityId(0), EntityId(1)).unwrap(), RelationId(0));
    }

    #[test]
    fn k_lowest_relations_sorted_ascending() {
        let mut s = unit_scorer(1, 2, 3);
        s.entities.row_mut(0).copy_from_slice(&[1.0]);
        s.entities.row_mut(1).copy_from_slice(&[1.0]);
        s.relations.row_mut(0).copy_from_slice(&[0.5]);
        s.relations.row_mut(1).copy_from_slice(&[-1.0]);
        s.relations.row_mut(2).copy_from_slice(&[0.0]);
        let all = [RelationId(0), RelationId(1), RelationId(2)];
        let picked = s.k_lowest_relations(EntityId(0), EntityId(1), &all, 2).unwrap();
        assert_eq!(picked, vec![RelationId(1), RelationId(2)]);
        // k larger than the candidate list returns everything.
        let picked = s.k_lowest_relations(EntityId(0), EntityId(1), &all, 10).unwrap();
        assert_eq!(picked.len(), 3);
        assert!(matches!(
            s.k_lowest_relations(EntityId(0), EntityId(1), &[], 2),
            Err(ScorerError::NoCandidates)
        ));
    }

    #[test]
    fn checkpoint_round_trips_bytewise() {
        let g = fixtures::tiny6();
        let cfg = ScorerConfig { dim: 4, epochs: 10, seed: 1, ..Default::default() };
        let s = train_scorer(&g, &cfg).unwrap();
        let text = s.to_checkpoint();
        let reloaded = Scorer::from_checkpoint(&text, s.n_entities(), s.n_relations()).unwrap();
        assert_eq!(reloaded.to_checkpoint(), text);
    }

    #[test]
    fn checkpoint_rejects_bad_header_and_row_counts() {
        assert!(Scorer::from_checkpoint("bogus v9 d=4\n", 1, 1).is_err());
        let s = unit_scorer(2, 2, 1);
        let text = s.to_checkpoint();
        assert!(Scorer::from_checkpoint(&text, 3, 1).is_err());
    }
}
