//! Multiple-choice QA over relation paths.
//!
//! A question and each candidate answer are entity sets. For every
//! question-candidate pair the model enumerates the connecting paths of
//! length one or two (edges traversed in either direction), encodes each
//! path's relation sequence with a small MLP, mean-pools the encodings,
//! and scores the pool with a linear head. The softmax over the k
//! candidates is both the prediction and the probability surface that
//! divergence-based rewards read. A pair with no connecting paths pools to
//! the zero vector, so a fully disconnected task degenerates to a uniform
//! prediction.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::downstream::{DownstreamError, NoisyMode, QaDataset, QaTask};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::nn::{
    cross_entropy, dot, dump_rows, parse_rows, softmax, standard_normal, Mlp, MlpSpec, Optimizer,
    ParamBlock,
};

pub const QA_MAGIC: &str = "kgperturb-qa v1";

#[derive(Debug, Clone)]
pub struct QaConfig {
    /// Relation embedding width; path features are two of these.
    pub dim: usize,
    pub hidden: usize,
    pub encoded: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for QaConfig {
    fn default() -> Self {
        QaConfig {
            dim: 16,
            hidden: 32,
            encoded: 16,
            epochs: 200,
            learning_rate: 0.02,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

/// A trained QA scorer; `frozen` gates the evaluation paths.
#[derive(Debug, Clone)]
pub struct QaModel {
    pub relations: ParamBlock,
    pub encoder: Mlp,
    pub head_w: ParamBlock,
    pub head_b: ParamBlock,
    pub frozen: bool,
}

/// Relation sequences of all connecting paths: `(r, None)` for a direct
/// edge, `(r1, Some(r2))` for a two-edge path. Question entities, their
/// adjacency lists (outgoing before incoming), and middle hops are walked
/// in deterministic order.
pub fn relation_paths(
    kg: &KnowledgeGraph,
    question: &[EntityId],
    answer: &[EntityId],
) -> Vec<(u32, Option<u32>)> {
    let targets: HashSet<u32> = answer.iter().map(|e| e.0).collect();
    let edges_of = |e: EntityId| {
        let mut edges: Vec<(u32, u32)> = kg.out_edges(e).iter().map(|(r, t)| (r.0, t.0)).collect();
        edges.extend(kg.in_edges(e).iter().map(|(r, h)| (r.0, h.0)));
        edges
    };
    let mut paths = Vec::new();
    for &q in question {
        for (r, t) in edges_of(q) {
            if targets.contains(&t) {
                paths.push((r, None));
            }
        }
        for (r1, mid) in edges_of(q) {
            for (r2, t) in edges_of(EntityId(mid)) {
                if targets.contains(&t) {
                    paths.push((r1, Some(r2)));
                }
            }
        }
    }
    paths
}

fn path_feature(relations: &ParamBlock, path: (u32, Option<u32>)) -> Vec<f64> {
    let dim = relations.cols;
    let mut feat = vec![0.0; 2 * dim];
    feat[..dim].copy_from_slice(relations.row(path.0 as usize));
    if let Some(r2) = path.1 {
        feat[dim..].copy_from_slice(relations.row(r2 as usize));
    }
    feat
}

fn pooled_encoding(
    model: &QaModel,
    kg: &KnowledgeGraph,
    question: &[EntityId],
    answer: &[EntityId],
) -> Result<(Vec<f64>, Vec<(u32, Option<u32>)>), DownstreamError> {
    let paths = relation_paths(kg, question, answer);
    let mut pooled = vec![0.0; model.encoder.spec.output()];
    for &path in &paths {
        let (enc, _) = model.encoder.forward(&path_feature(&model.relations, path))?;
        for (acc, v) in pooled.iter_mut().zip(&enc) {
            *acc += v;
        }
    }
    if !paths.is_empty() {
        let inv = 1.0 / paths.len() as f64;
        for v in &mut pooled {
            *v *= inv;
        }
    }
    Ok((pooled, paths))
}

fn candidate_logits(
    model: &QaModel,
    kg: &KnowledgeGraph,
    task: &QaTask,
) -> Result<Vec<f64>, DownstreamError> {
    let mut logits = Vec::with_capacity(task.k());
    for cand in &task.candidates {
        let (pooled, _) = pooled_encoding(model, kg, &task.question, cand)?;
        logits.push(dot(model.head_w.row(0), &pooled) + model.head_b.at(0, 0));
    }
    Ok(logits)
}

/// Mean cross-entropy of `tasks`; pure, used by the finite-difference
/// audits.
pub fn batch_loss(model: &QaModel, kg: &KnowledgeGraph, tasks: &[QaTask]) -> Result<f64, DownstreamError> {
    let mut total = 0.0;
    for task in tasks {
        let logits = candidate_logits(model, kg, task)?;
        total += cross_entropy(&logits, task.correct).0;
    }
    Ok(total / tasks.len() as f64)
}

/// Accumulates the gradient of [`batch_loss`] and returns the loss.
pub fn batch_gradients(
    model: &mut QaModel,
    kg: &KnowledgeGraph,
    tasks: &[QaTask],
) -> Result<f64, DownstreamError> {
    let scale = 1.0 / tasks.len() as f64;
    let mut total = 0.0;
    for task in tasks {
        let logits = candidate_logits(model, kg, task)?;
        let (loss, _, dlogits) = cross_entropy(&logits, task.correct);
        total += loss;
        for (cand, dlogit) in task.candidates.iter().zip(dlogits) {
            let dlogit = dlogit * scale;
            let (pooled, paths) = pooled_encoding(model, kg, &task.question, cand)?;
            {
                let gw = model.head_w.grad_row_mut(0);
                for (acc, v) in gw.iter_mut().zip(&pooled) {
                    *acc += dlogit * v;
                }
            }
            model.head_b.grad_row_mut(0)[0] += dlogit;
            if paths.is_empty() {
                continue;
            }
            let per_path = 1.0 / paths.len() as f64;
            let upstream: Vec<f64> = model
                .head_w
                .row(0)
                .iter()
                .map(|w| dlogit * w * per_path)
                .collect();
            let dim = model.relations.cols;
            for &path in &paths {
                let feat = path_feature(&model.relations, path);
                let (_, tape) = model.encoder.forward(&feat)?;
                let dfeat = model.encoder.backward(&tape, &upstream);
                let gr = model.relations.grad_row_mut(path.0 as usize);
                for (acc, v) in gr.iter_mut().zip(&dfeat[..dim]) {
                    *acc += v;
                }
                if let Some(r2) = path.1 {
                    let gr = model.relations.grad_row_mut(r2 as usize);
                    for (acc, v) in gr.iter_mut().zip(&dfeat[dim..]) {
                        *acc += v;
                    }
                }
            }
        }
    }
    Ok(total * scale)
}

impl QaModel {
    fn init(kg: &KnowledgeGraph, cfg: &QaConfig, rng: &mut crate::Rng) -> Self {
        QaModel {
            relations: ParamBlock::uniform(kg.n_relations(), cfg.dim, rng),
            encoder: Mlp::init(MlpSpec::new(vec![2 * cfg.dim, cfg.hidden, cfg.encoded]), rng),
            head_w: ParamBlock::uniform(1, cfg.encoded, rng),
            head_b: ParamBlock::zeros(1, 1),
            frozen: false,
        }
    }

    pub fn blocks(&self) -> Vec<&ParamBlock> {
        let mut blocks = vec![&self.relations];
        blocks.extend(self.encoder.blocks.iter());
        blocks.push(&self.head_w);
        blocks.push(&self.head_b);
        blocks
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut ParamBlock> {
        let mut blocks: Vec<&mut ParamBlock> = vec![&mut self.relations];
        blocks.extend(self.encoder.blocks.iter_mut());
        blocks.push(&mut self.head_w);
        blocks.push(&mut self.head_b);
        blocks
    }

    fn check(&self, kg: &KnowledgeGraph) -> Result<(), DownstreamError> {
        if !self.frozen {
            return Err(DownstreamError::NotFrozen);
        }
        if self.relations.rows != kg.n_relations() {
            return Err(DownstreamError::VocabMismatch {
                expected: usize::MAX,
                expected_r: self.relations.rows,
                got: kg.n_entities(),
                got_r: kg.n_relations(),
            });
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> String {
        let dim = self.relations.cols;
        let hidden = self.encoder.spec.widths[1];
        let encoded = self.encoder.spec.output();
        let mut out = format!(
            "{QA_MAGIC} dim={dim} hidden={hidden} encoded={encoded} relations={}\n",
            self.relations.rows
        );
        dump_rows(&mut out, &self.relations);
        for block in &self.encoder.blocks {
            dump_rows(&mut out, block);
        }
        dump_rows(&mut out, &self.head_w);
        dump_rows(&mut out, &self.head_b);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let mut tokens = header.split(' ');
        if tokens.next() != Some("kgperturb-qa") || tokens.next() != Some("v1") {
            return Err(format!("unrecognized header {header:?}"));
        }
        let mut fields = [0usize; 4];
        for (slot, key) in fields.iter_mut().zip(["dim", "hidden", "encoded", "relations"]) {
            let token = tokens.next().ok_or_else(|| format!("header missing {key}"))?;
            let value = token
                .strip_prefix(&format!("{key}="))
                .ok_or_else(|| format!("expected {key}=.. in header, found {token:?}"))?;
            *slot = value.parse().map_err(|_| format!("bad {key} value {value:?}"))?;
        }
        let [dim, hidden, encoded, n_relations] = fields;
        let relations = parse_rows(&mut lines, n_relations, dim)?;
        let spec = MlpSpec::new(vec![2 * dim, hidden, encoded]);
        let mut blocks = Vec::new();
        for l in 0..spec.widths.len() - 1 {
            blocks.push(parse_rows(&mut lines, spec.widths[l + 1], spec.widths[l])?);
            blocks.push(parse_rows(&mut lines, spec.widths[l + 1], 1)?);
        }
        let encoder = Mlp { spec, blocks };
        let head_w = parse_rows(&mut lines, 1, encoded)?;
        let head_b = parse_rows(&mut lines, 1, 1)?;
        if lines.next().is_some() {
            return Err("trailing data after parameter rows".into());
        }
        Ok(QaModel { relations, encoder, head_w, head_b, frozen: true })
    }

    pub fn save(&self, path: &Path) -> Result<(), DownstreamError> {
        fs::write(path, self.to_checkpoint())
            .map_err(|source| DownstreamError::Write { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, DownstreamError> {
        let text = fs::read_to_string(path)
            .map_err(|source| DownstreamError::Read { path: path.display().to_string(), source })?;
        Self::from_checkpoint(&text)
            .map_err(|msg| DownstreamError::Format { path: path.display().to_string(), msg })
    }
}

/// Trains on the dataset's train split with full-batch steps and returns
/// the frozen model. Zero epochs freeze the seeded initialization, which is
/// the chance-level reference model.
pub fn train_qa(
    kg: &KnowledgeGraph,
    tasks: &QaDataset,
    cfg: &QaConfig,
) -> Result<QaModel, DownstreamError> {
    if tasks.train.is_empty() {
        return Err(DownstreamError::NoTasks);
    }
    for task in tasks.all() {
        task.validate(kg)?;
    }
    let mut rng = crate::rng(cfg.seed);
    let mut model = QaModel::init(kg, cfg, &mut rng);
    for _ in 0..cfg.epochs {
        let loss = batch_gradients(&mut model, kg, &tasks.train)?;
        if !loss.is_finite() {
            return Err(DownstreamError::NonFinite);
        }
        let mut blocks = model.blocks_mut();
        cfg.optimizer.step_all(&mut blocks, cfg.learning_rate)?;
    }
    model.frozen = true;
    Ok(model)
}

/// Accuracy and per-task answer distributions of the frozen model against
/// `kg`. Argmax ties resolve to the lowest candidate index.
pub fn eval_qa(
    model: &QaModel,
    kg: &KnowledgeGraph,
    tasks: &[QaTask],
) -> Result<(f64, Vec<Vec<f64>>), DownstreamError> {
    model.check(kg)?;
    if tasks.is_empty() {
        return Err(DownstreamError::NoTasks);
    }
    let mut correct = 0usize;
    let mut distributions = Vec::with_capacity(tasks.len());
    for task in tasks {
        task.validate(kg)?;
        let logits = candidate_logits(model, kg, task)?;
        let probs = softmax(&logits);
        let mut best = 0;
        for (i, p) in probs.iter().enumerate() {
            if *p > probs[best] {
                best = i;
            }
        }
        if best == task.correct {
            correct += 1;
        }
        distributions.push(probs);
    }
    Ok((correct as f64 / tasks.len() as f64, distributions))
}

/// Test accuracy under a noising regime; the neighborhood mode has no
/// meaning for a path model and is rejected.
pub fn noisy_accuracy(
    model: &QaModel,
    kg: &KnowledgeGraph,
    tasks: &[QaTask],
    mode: NoisyMode,
    seed: u64,
) -> Result<f64, DownstreamError> {
    model.check(kg)?;
    if tasks.is_empty() {
        return Err(DownstreamError::NoTasks);
    }
    let mut rng = crate::rng(seed);
    match mode {
        NoisyMode::ZeroGraphEmb | NoisyMode::RandomGraphEmb => {
            let mut correct = 0usize;
            for task in tasks {
                task.validate(kg)?;
                let mut logits = Vec::with_capacity(task.k());
                for _ in &task.candidates {
                    let pooled: Vec<f64> = match mode {
                        NoisyMode::ZeroGraphEmb => vec![0.0; model.encoder.spec.output()],
                        _ => (0..model.encoder.spec.output()).map(|_| standard_normal(&mut rng)).collect(),
                    };
                    logits.push(dot(model.head_w.row(0), &pooled) + model.head_b.at(0, 0));
                }
                let probs = softmax(&logits);
                let mut best = 0;
                for (i, p) in probs.iter().enumerate() {
                    if *p > probs[best] {
                        best = i;
                    }
                }
                if best == task.correct {
                    correct += 1;
                }
            }
            Ok(correct as f64 / tasks.len() as f64)
        }
        NoisyMode::RandomKgEmb => {
            let mut noisy = model.clone();
            for v in noisy.relations.values.iter_mut() {
                *v = standard_normal(&mut rng);
            }
            Ok(eval_qa(&noisy, kg, tasks)?.0)
        }
        NoisyMode::RandomNeighborhood => Err(DownstreamError::ModeMismatch { mode, model: "qa" }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::downstream::kl_to_dirac;
    use crate::nn::finite_diff_check;
    use rand::Rng as _;

    fn entity(kg: &KnowledgeGraph, label: &str) -> EntityId {
        kg.entity_id(label).unwrap()
    }

    /// Eight items, two hubs; the correct candidate is reachable by a
    /// direct `good` edge, the distractor only by `bad` edges.
    fn path_world() -> (KnowledgeGraph, QaDataset) {
        let mut tsv = String::new();
        for i in 0..8 {
            let hub = if i % 2 == 0 { "hub_a" } else { "hub_b" };
            let other = if i % 2 == 0 { "hub_b" } else { "hub_a" };
            tsv.push_str(&format!("item_{i}\tgood\t{hub}\n"));
            tsv.push_str(&format!("item_{i}\tbad\t{other}\n"));
        }
        let kg = KnowledgeGraph::parse_tsv(&tsv).unwrap().graph;
        let task = |i: usize, correct_first: bool| {
            let hub = if i % 2 == 0 { "hub_a" } else { "hub_b" };
            let other = if i % 2 == 0 { "hub_b" } else { "hub_a" };
            let (c0, c1, correct) = if correct_first { (hub, other, 0) } else { (other, hub, 1) };
            QaTask {
                question: vec![entity(&kg, &format!("item_{i}"))],
                candidates: vec![vec![entity(&kg, c0)], vec![entity(&kg, c1)]],
                correct,
            }
        };
        let train: Vec<QaTask> = (0..6).map(|i| task(i, i % 3 == 0)).collect();
        let test: Vec<QaTask> = (6..8).map(|i| task(i, i == 7)).collect();
        let dataset = QaDataset { train, dev: vec![task(0, false)], test };
        (kg, dataset)
    }

    #[test]
    fn path_enumeration_order_and_directions() {
        let kg = KnowledgeGraph::parse_tsv("q\tr1\tm\nm\tr2\ta\nq\tr3\ta\n").unwrap().graph;
        let q = vec![entity(&kg, "q")];
        let a = vec![entity(&kg, "a")];
        let r = |label: &str| kg.relation_id(label).unwrap().0;
        let paths = relation_paths(&kg, &q, &a);
        assert_eq!(paths, vec![(r("r3"), None), (r("r1"), Some(r("r2")))]);

        // Reversing the middle edge changes traversal direction only.
        let flipped = KnowledgeGraph::parse_tsv("q\tr1\tm\na\tr2\tm\nq\tr3\ta\n").unwrap().graph;
        let q = vec![entity(&flipped, "q")];
        let a = vec![entity(&flipped, "a")];
        let r = |label: &str| flipped.relation_id(label).unwrap().0;
        let paths = relation_paths(&flipped, &q, &a);
        assert_eq!(paths, vec![(r("r3"), None), (r("r1"), Some(r("r2")))]);
    }

    #[test]
    fn disconnected_pair_pools_to_zero_and_uniform() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 10, ..Default::default() }).unwrap();
        let empty = kg.apply_edits(&kg.triples().to_vec(), &[]).unwrap();
        let (pooled, paths) =
            pooled_encoding(&model, &empty, &data.test[0].question, &data.test[0].candidates[0]).unwrap();
        assert!(paths.is_empty());
        assert!(pooled.iter().all(|&v| v == 0.0));
        let (_, dists) = eval_qa(&model, &empty, &data.test).unwrap();
        for dist in dists {
            for p in dist {
                assert!((p - 0.5).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn distributions_are_normalized() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 30, ..Default::default() }).unwrap();
        let (_, dists) = eval_qa(&model, &kg, &data.test).unwrap();
        for dist in dists {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn untrained_model_sits_near_chance() {
        let mut rng = crate::rng(77);
        let kg = crate::kg::random_graph(30, 4, 120, &mut rng);
        let tasks: Vec<QaTask> = (0..100)
            .map(|_| {
                let mut ids: Vec<u32> = Vec::new();
                while ids.len() < 5 {
                    let e = rng.gen_range(0..30);
                    if !ids.contains(&e) {
                        ids.push(e);
                    }
                }
                QaTask {
                    question: vec![EntityId(ids[0])],
                    candidates: ids[1..].iter().map(|&e| vec![EntityId(e)]).collect(),
                    correct: rng.gen_range(0..4),
                }
            })
            .collect();
        let dataset = QaDataset { train: tasks.clone(), dev: vec![], test: vec![] };
        let model = train_qa(&kg, &dataset, &QaConfig { epochs: 0, seed: 5, ..Default::default() }).unwrap();
        let (acc, _) = eval_qa(&model, &kg, &tasks).unwrap();
        assert!((acc - 0.25).abs() <= 0.1, "untrained accuracy {acc}");
    }

    #[test]
    fn training_learns_the_connecting_relation() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 150, seed: 2, ..Default::default() }).unwrap();
        let (train_acc, _) = eval_qa(&model, &kg, &data.train).unwrap();
        let (test_acc, _) = eval_qa(&model, &kg, &data.test).unwrap();
        assert_eq!(train_acc, 1.0);
        assert_eq!(test_acc, 1.0);
        let (_, dists) = eval_qa(&model, &kg, &data.test).unwrap();
        let kl: f64 = data.test.iter().zip(&dists).map(|(t, p)| kl_to_dirac(p[t.correct])).sum();
        assert!(kl / 2.0 < 0.3, "confident model should have small divergence");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng(19);
        let kg = crate::kg::random_graph(14, 3, 40, &mut rng);
        let tasks: Vec<QaTask> = (0..6)
            .map(|_| QaTask {
                question: vec![EntityId(rng.gen_range(0..14))],
                candidates: (0..3).map(|_| vec![EntityId(rng.gen_range(0..14))]).collect(),
                correct: rng.gen_range(0..3),
            })
            .collect();
        let dataset = QaDataset { train: tasks.clone(), dev: vec![], test: vec![] };
        let cfg = QaConfig { dim: 5, hidden: 7, encoded: 4, epochs: 0, seed: 3, ..Default::default() };
        let mut model = train_qa(&kg, &dataset, &cfg).unwrap();
        batch_gradients(&mut model, &kg, &tasks).unwrap();
        let mut flat: Vec<ParamBlock> = model.blocks().into_iter().cloned().collect();
        let base = model.clone();
        let kg_ref = &kg;
        let tasks_ref = &tasks;
        let report = finite_diff_check(
            &mut flat,
            |blocks| {
                let mut m = base.clone();
                for (dst, src) in m.blocks_mut().into_iter().zip(blocks) {
                    dst.values.clone_from(&src.values);
                }
                batch_loss(&m, kg_ref, tasks_ref).unwrap()
            },
            &mut rng,
        );
        assert!(report.ok(1e-4), "worst rel err {}", report.worst_rel_err);
    }

    #[test]
    fn argmax_ties_take_the_lowest_index() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 5, ..Default::default() }).unwrap();
        let empty = kg.apply_edits(&kg.triples().to_vec(), &[]).unwrap();
        // Uniform distributions everywhere: only tasks whose correct index
        // is 0 count as hits.
        let zero_correct = QaTask { correct: 0, ..data.test[0].clone() };
        let one_correct = QaTask { correct: 1, ..data.test[0].clone() };
        let (acc, _) = eval_qa(&model, &empty, &[zero_correct, one_correct]).unwrap();
        assert_eq!(acc, 0.5);
    }

    #[test]
    fn noisy_modes_behave_and_neighborhood_is_rejected() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 60, seed: 2, ..Default::default() }).unwrap();
        let zero = noisy_accuracy(&model, &kg, &data.test, NoisyMode::ZeroGraphEmb, 0).unwrap();
        let zero_again = noisy_accuracy(&model, &kg, &data.test, NoisyMode::ZeroGraphEmb, 9).unwrap();
        assert_eq!(zero, zero_again, "zero mode ignores the seed");
        let rand_a = noisy_accuracy(&model, &kg, &data.test, NoisyMode::RandomGraphEmb, 4).unwrap();
        let rand_b = noisy_accuracy(&model, &kg, &data.test, NoisyMode::RandomGraphEmb, 4).unwrap();
        assert_eq!(rand_a, rand_b);
        assert!(matches!(
            noisy_accuracy(&model, &kg, &data.test, NoisyMode::RandomNeighborhood, 0),
            Err(DownstreamError::ModeMismatch { .. })
        ));
    }

    #[test]
    fn checkpoint_round_trips_bytewise() {
        let (kg, data) = path_world();
        let model = train_qa(&kg, &data, &QaConfig { epochs: 3, ..Default::default() }).unwrap();
        let text = model.to_checkpoint();
        let back = QaModel::from_checkpoint(&text).unwrap();
        assert_eq!(back.to_checkpoint(), text);
        assert!(QaModel::from_checkpoint("kgperturb-qa v2\n").is_err());
    }
}
