//! Recommender whose item representations mix KG neighborhoods.
//!
//! Every entity carries a base embedding. An item's representation at hop
//! `l` blends its own hop `l-1` representation with a weighted sum of its
//! neighbors' hop `l-1` representations, half and half; the weights are a
//! softmax over the user's affinity to each edge's relation embedding, so
//! the same graph aggregates differently per user. A pair's score is the
//! inner product of the user embedding with the item's final
//! representation. With zero hops the model is plain matrix factorization
//! and the graph cannot influence it.

use std::fs;
use std::path::Path;

use crate::downstream::{auc, DownstreamError, Interaction, Interactions, NoisyMode, Split};
use crate::kg::{EntityId, KnowledgeGraph};
use crate::nn::{dot, dump_rows, logistic_loss, parse_rows, softmax, standard_normal, Optimizer, ParamBlock};

pub const REC_MAGIC: &str = "kgperturb-rec v1";

#[derive(Debug, Clone)]
pub struct RecConfig {
    pub dim: usize,
    pub hops: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
}

impl Default for RecConfig {
    fn default() -> Self {
        RecConfig {
            dim: 16,
            hops: 1,
            epochs: 100,
            learning_rate: 0.05,
            optimizer: Optimizer::default(),
            seed: 0,
        }
    }
}

/// A trained recommender. `frozen` flips on when training finishes; the
/// evaluation paths refuse to run before that.
#[derive(Debug, Clone)]
pub struct RecModel {
    pub hops: usize,
    pub users: ParamBlock,
    pub entities: ParamBlock,
    pub relations: ParamBlock,
    pub frozen: bool,
}

/// Neighbor edges `(relation, other endpoint)` in adjacency order, outgoing
/// before incoming. Aggregation treats edges as undirected.
fn neighbor_edges(kg: &KnowledgeGraph, e: u32) -> Vec<(u32, u32)> {
    let id = EntityId(e);
    let mut edges: Vec<(u32, u32)> = kg.out_edges(id).iter().map(|(r, t)| (r.0, t.0)).collect();
    edges.extend(kg.in_edges(id).iter().map(|(r, h)| (r.0, h.0)));
    edges
}

/// Where the aggregation reads adjacency from: the graph itself, or a
/// pre-sampled replacement table for the random-neighborhood baseline.
enum Edges<'a> {
    Graph(&'a KnowledgeGraph),
    Table(&'a [Vec<(u32, u32)>]),
}

impl Edges<'_> {
    fn of(&self, e: u32) -> Vec<(u32, u32)> {
        match self {
            Edges::Graph(kg) => neighbor_edges(kg, e),
            Edges::Table(table) => table[e as usize].clone(),
        }
    }
}

/// One node of the aggregation tree, taped for the backward pass.
struct AggNode {
    entity: u32,
    repr: Vec<f64>,
    weights: Vec<f64>,
    /// Neighbor edges as `(relation, subtree one hop shallower)`.
    children: Vec<(u32, AggNode)>,
    /// The same entity one hop shallower; absent at hop zero.
    below: Option<Box<AggNode>>,
}

fn aggregate(
    entities: &ParamBlock,
    relations: &ParamBlock,
    user_row: &[f64],
    edges: &Edges<'_>,
    entity: u32,
    hop: usize,
    drop_neighbors: bool,
) -> AggNode {
    if hop == 0 {
        return AggNode {
            entity,
            repr: entities.row(entity as usize).to_vec(),
            weights: Vec::new(),
            children: Vec::new(),
            below: None,
        };
    }
    let below = aggregate(entities, relations, user_row, edges, entity, hop - 1, drop_neighbors);
    if drop_neighbors {
        // Zeroed graph side: the neighbor term vanishes but the self half
        // keeps its factor, scaling every representation by the same
        // constant so rankings match plain matrix factorization.
        let repr = below.repr.iter().map(|v| 0.5 * v).collect();
        return AggNode { entity, repr, weights: Vec::new(), children: Vec::new(), below: Some(Box::new(below)) };
    }
    let edge_list = edges.of(entity);
    if edge_list.is_empty() {
        let repr = below.repr.clone();
        return AggNode { entity, repr, weights: Vec::new(), children: Vec::new(), below: Some(Box::new(below)) };
    }
    let logits: Vec<f64> = edge_list
        .iter()
        .map(|&(r, _)| dot(user_row, relations.row(r as usize)))
        .collect();
    let weights = softmax(&logits);
    let mut repr: Vec<f64> = below.repr.iter().map(|v| 0.5 * v).collect();
    let mut children = Vec::with_capacity(edge_list.len());
    for (i, &(r, t)) in edge_list.iter().enumerate() {
        let child = aggregate(entities, relations, user_row, edges, t, hop - 1, drop_neighbors);
        for (acc, v) in repr.iter_mut().zip(&child.repr) {
            *acc += 0.5 * weights[i] * v;
        }
        children.push((r, child));
    }
    AggNode { entity, repr, weights, children, below: Some(Box::new(below)) }
}

/// Pushes the upstream gradient `g` of a node's representation down the
/// aggregation tree, accumulating into entity/relation grads and the
/// user-embedding gradient `du` (the softmax weights depend on the user).
fn backprop(
    node: &AggNode,
    g: &[f64],
    user_row: &[f64],
    entities: &mut ParamBlock,
    relations: &mut ParamBlock,
    du: &mut [f64],
) {
    let Some(below) = &node.below else {
        let ge = entities.grad_row_mut(node.entity as usize);
        for (acc, v) in ge.iter_mut().zip(g) {
            *acc += v;
        }
        return;
    };
    if node.children.is_empty() {
        // No neighbors: the hop was an identity pass-through.
        backprop(below, g, user_row, entities, relations, du);
        return;
    }
    let half: Vec<f64> = g.iter().map(|v| 0.5 * v).collect();
    backprop(below, &half, user_row, entities, relations, du);
    let q: Vec<f64> = node.children.iter().map(|(_, ch)| 0.5 * dot(g, &ch.repr)).collect();
    let qbar: f64 = node.weights.iter().zip(&q).map(|(w, qi)| w * qi).sum();
    for (i, (r, child)) in node.children.iter().enumerate() {
        let gw: Vec<f64> = g.iter().map(|v| 0.5 * node.weights[i] * v).collect();
        backprop(child, &gw, user_row, entities, relations, du);
        let dz = node.weights[i] * (q[i] - qbar);
        for (acc, v) in du.iter_mut().zip(relations.row(*r as usize)) {
            *acc += dz * v;
        }
        let gr = relations.grad_row_mut(*r as usize);
        for (acc, v) in gr.iter_mut().zip(user_row) {
            *acc += dz * v;
        }
    }
}

/// Mean logistic loss of `rows` under the given tables; pure, used by the
/// finite-difference audits.
pub fn batch_loss(
    users: &ParamBlock,
    entities: &ParamBlock,
    relations: &ParamBlock,
    hops: usize,
    kg: &KnowledgeGraph,
    rows: &[Interaction],
) -> f64 {
    let edges = Edges::Graph(kg);
    let mut total = 0.0;
    for row in rows {
        let user_row = users.row(row.user as usize);
        let node = aggregate(entities, relations, user_row, &edges, row.item.0, hops, false);
        let logit = dot(user_row, &node.repr);
        total += logistic_loss(logit, f64::from(u8::from(row.label))).0;
    }
    total / rows.len() as f64
}

/// Accumulates the gradient of [`batch_loss`] and returns the loss.
pub fn batch_gradients(
    users: &mut ParamBlock,
    entities: &mut ParamBlock,
    relations: &mut ParamBlock,
    hops: usize,
    kg: &KnowledgeGraph,
    rows: &[Interaction],
) -> f64 {
    let scale = 1.0 / rows.len() as f64;
    let mut total = 0.0;
    for row in rows {
        let user_row = users.row(row.user as usize).to_vec();
        let node = {
            let edges = Edges::Graph(kg);
            aggregate(entities, relations, &user_row, &edges, row.item.0, hops, false)
        };
        let logit = dot(&user_row, &node.repr);
        let (loss, dlogit) = logistic_loss(logit, f64::from(u8::from(row.label)));
        total += loss;
        let dlogit = dlogit * scale;
        let mut du: Vec<f64> = node.repr.iter().map(|v| dlogit * v).collect();
        let g_root: Vec<f64> = user_row.iter().map(|v| dlogit * v).collect();
        backprop(&node, &g_root, &user_row, entities, relations, &mut du);
        let gu = users.grad_row_mut(row.user as usize);
        for (acc, v) in gu.iter_mut().zip(&du) {
            *acc += v;
        }
    }
    total * scale
}

/// Trains on the train split with full-batch steps and returns the frozen
/// model.
pub fn train_recommender(
    kg: &KnowledgeGraph,
    data: &Interactions,
    cfg: &RecConfig,
) -> Result<RecModel, DownstreamError> {
    data.validate(kg)?;
    let rows: Vec<Interaction> = data.split(Split::Train).copied().collect();
    if rows.is_empty() {
        return Err(DownstreamError::EmptySplit(Split::Train));
    }
    let mut rng = crate::rng(cfg.seed);
    let mut users = ParamBlock::uniform(data.n_users, cfg.dim, &mut rng);
    let mut entities = ParamBlock::uniform(kg.n_entities(), cfg.dim, &mut rng);
    let mut relations = ParamBlock::uniform(kg.n_relations(), cfg.dim, &mut rng);
    for _ in 0..cfg.epochs {
        let loss = batch_gradients(&mut users, &mut entities, &mut relations, cfg.hops, kg, &rows);
        if !loss.is_finite() {
            return Err(DownstreamError::NonFinite);
        }
        cfg.optimizer
            .step_all(&mut [&mut users, &mut entities, &mut relations], cfg.learning_rate)?;
    }
    Ok(RecModel { hops: cfg.hops, users, entities, relations, frozen: true })
}

impl RecModel {
    fn check(&self, kg: &KnowledgeGraph) -> Result<(), DownstreamError> {
        if !self.frozen {
            return Err(DownstreamError::NotFrozen);
        }
        if self.entities.rows != kg.n_entities() || self.relations.rows != kg.n_relations() {
            return Err(DownstreamError::VocabMismatch {
                expected: self.entities.rows,
                expected_r: self.relations.rows,
                got: kg.n_entities(),
                got_r: kg.n_relations(),
            });
        }
        Ok(())
    }

    fn check_pair(&self, user: u32, item: EntityId) -> Result<(), DownstreamError> {
        if item.0 as usize >= self.entities.rows {
            return Err(DownstreamError::EntityOutOfRange(item.0));
        }
        if user as usize >= self.users.rows {
            return Err(DownstreamError::Parse {
                line: 0,
                msg: format!("user id {user} outside the trained table of {} users", self.users.rows),
            });
        }
        Ok(())
    }

    /// Raw compatibility score of one pair against `kg`.
    pub fn score(&self, kg: &KnowledgeGraph, user: u32, item: EntityId) -> Result<f64, DownstreamError> {
        self.check(kg)?;
        self.check_pair(user, item)?;
        let user_row = self.users.row(user as usize);
        let edges = Edges::Graph(kg);
        let node = aggregate(&self.entities, &self.relations, user_row, &edges, item.0, self.hops, false);
        Ok(dot(user_row, &node.repr))
    }

    /// Aggregation weights over `entity`'s neighbor edges for `user`, in
    /// adjacency order; empty when the entity has no edges.
    pub fn neighbor_weights(
        &self,
        kg: &KnowledgeGraph,
        user: u32,
        entity: EntityId,
    ) -> Result<Vec<f64>, DownstreamError> {
        self.check(kg)?;
        self.check_pair(user, entity)?;
        let edge_list = neighbor_edges(kg, entity.0);
        if edge_list.is_empty() {
            return Ok(Vec::new());
        }
        let user_row = self.users.row(user as usize);
        let logits: Vec<f64> = edge_list
            .iter()
            .map(|&(r, _)| dot(user_row, self.relations.row(r as usize)))
            .collect();
        Ok(softmax(&logits))
    }

    pub fn to_checkpoint(&self) -> String {
        let mut out = format!(
            "{REC_MAGIC} dim={} hops={} users={} entities={} relations={}\n",
            self.users.cols, self.hops, self.users.rows, self.entities.rows, self.relations.rows
        );
        dump_rows(&mut out, &self.users);
        dump_rows(&mut out, &self.entities);
        dump_rows(&mut out, &self.relations);
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty checkpoint")?;
        let mut fields = [0usize; 5];
        let mut tokens = header.split(' ');
        if tokens.next() != Some("kgperturb-rec") || tokens.next() != Some("v1") {
            return Err(format!("unrecognized header {header:?}"));
        }
        for (slot, key) in fields.iter_mut().zip(["dim", "hops", "users", "entities", "relations"]) {
            let token = tokens.next().ok_or_else(|| format!("header missing {key}"))?;
            let value = token
                .strip_prefix(&format!("{key}="))
                .ok_or_else(|| format!("expected {key}=.. in header, found {token:?}"))?;
            *slot = value.parse().map_err(|_| format!("bad {key} value {value:?}"))?;
        }
        let [dim, hops, n_users, n_entities, n_relations] = fields;
        let users = parse_rows(&mut lines, n_users, dim)?;
        let entities = parse_rows(&mut lines, n_entities, dim)?;
        let relations = parse_rows(&mut lines, n_relations, dim)?;
        if lines.next().is_some() {
            return Err("trailing data after parameter rows".into());
        }
        Ok(RecModel { hops, users, entities, relations, frozen: true })
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

fn collect_scores(
    model: &RecModel,
    edges: &Edges<'_>,
    data: &Interactions,
    split: Split,
    drop_neighbors: bool,
) -> Result<Vec<(f64, bool)>, DownstreamError> {
    let mut scored = Vec::new();
    for row in data.split(split) {
        model.check_pair(row.user, row.item)?;
        let user_row = model.users.row(row.user as usize);
        let node = aggregate(
            &model.entities,
            &model.relations,
            user_row,
            edges,
            row.item.0,
            model.hops,
            drop_neighbors,
        );
        scored.push((dot(user_row, &node.repr), row.label));
    }
    if scored.is_empty() {
        return Err(DownstreamError::EmptySplit(split));
    }
    Ok(scored)
}

/// AUC of the frozen model on one split, with item neighborhoods read from
/// `kg` (which may be a perturbed snapshot of the training graph).
pub fn eval_auc(
    model: &RecModel,
    kg: &KnowledgeGraph,
    data: &Interactions,
    split: Split,
) -> Result<f64, DownstreamError> {
    model.check(kg)?;
    auc(&collect_scores(model, &Edges::Graph(kg), data, split, false)?)
}

/// AUC under one of the noising regimes.
pub fn noisy_auc(
    model: &RecModel,
    kg: &KnowledgeGraph,
    data: &Interactions,
    split: Split,
    mode: NoisyMode,
    seed: u64,
) -> Result<f64, DownstreamError> {
    model.check(kg)?;
    let mut rng = crate::rng(seed);
    match mode {
        NoisyMode::ZeroGraphEmb => auc(&collect_scores(model, &Edges::Graph(kg), data, split, true)?),
        NoisyMode::RandomGraphEmb => {
            let mut scored = Vec::new();
            for row in data.split(split) {
                model.check_pair(row.user, row.item)?;
                let user_row = model.users.row(row.user as usize);
                let repr: Vec<f64> = (0..model.users.cols).map(|_| standard_normal(&mut rng)).collect();
                scored.push((dot(user_row, &repr), row.label));
            }
            if scored.is_empty() {
                return Err(DownstreamError::EmptySplit(split));
            }
            auc(&scored)
        }
        NoisyMode::RandomKgEmb => {
            let mut noisy = model.clone();
            for v in noisy.entities.values.iter_mut().chain(noisy.relations.values.iter_mut()) {
                *v = standard_normal(&mut rng);
            }
            auc(&collect_scores(&noisy, &Edges::Graph(kg), data, split, false)?)
        }
        NoisyMode::RandomNeighborhood => {
            use rand::Rng as _;
            let n = kg.n_entities() as u32;
            let table: Vec<Vec<(u32, u32)>> = (0..n)
                .map(|e| {
                    neighbor_edges(kg, e)
                        .into_iter()
                        .map(|(r, _)| (r, rng.gen_range(0..n)))
                        .collect()
                })
                .collect();
            auc(&collect_scores(model, &Edges::Table(&table), data, split, false)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kg::Triple;
    use crate::nn::finite_diff_check;

    /// Four items split over two hubs, users preferring one hub each. Dev
    /// items never appear in train, so only aggregation can score them.
    fn mini_world() -> (KnowledgeGraph, Interactions) {
        let kg = KnowledgeGraph::parse_tsv(
            "i0\tattr\th0\ni1\tattr\th0\ni2\tattr\th1\ni3\tattr\th1\n",
        )
        .unwrap()
        .graph;
        let item = |label: &str| kg.entity_id(label).unwrap();
        let rows = vec![
            Interaction { user: 0, item: item("i0"), label: true, split: Split::Train },
            Interaction { user: 0, item: item("i2"), label: false, split: Split::Train },
            Interaction { user: 1, item: item("i2"), label: true, split: Split::Train },
            Interaction { user: 1, item: item("i0"), label: false, split: Split::Train },
            Interaction { user: 0, item: item("i1"), label: true, split: Split::Dev },
            Interaction { user: 0, item: item("i3"), label: false, split: Split::Dev },
            Interaction { user: 1, item: item("i3"), label: true, split: Split::Dev },
            Interaction { user: 1, item: item("i1"), label: false, split: Split::Dev },
        ];
        (kg, Interactions::new(2, rows))
    }

    #[test]
    fn singleton_neighbor_weight_is_one() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 1, ..Default::default() }).unwrap();
        let w = model.neighbor_weights(&kg, 0, kg.entity_id("i0").unwrap()).unwrap();
        assert_eq!(w, vec![1.0]);
        let w = model.neighbor_weights(&kg, 1, kg.entity_id("i3").unwrap()).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn weights_sum_to_one_in_adjacency_order() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 1, ..Default::default() }).unwrap();
        // h0 has two incoming attr edges.
        let w = model.neighbor_weights(&kg, 0, kg.entity_id("h0").unwrap()).unwrap();
        assert_eq!(w.len(), 2);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_hops_is_matrix_factorization_and_ignores_perturbation() {
        let (kg, data) = mini_world();
        let cfg = RecConfig { hops: 0, epochs: 30, ..Default::default() };
        let model = train_recommender(&kg, &data, &cfg).unwrap();
        let item = kg.entity_id("i0").unwrap();
        let direct = dot(model.users.row(0), model.entities.row(item.0 as usize));
        assert_eq!(model.score(&kg, 0, item).unwrap(), direct);
        // Deleting an edge cannot move any score at zero hops.
        let pruned = kg.apply_edits(&[kg.triples()[0]], &[]).unwrap();
        assert_eq!(
            eval_auc(&model, &kg, &data, Split::Dev).unwrap(),
            eval_auc(&model, &pruned, &data, Split::Dev).unwrap()
        );
        assert_eq!(model.score(&kg, 0, item).unwrap(), model.score(&pruned, 0, item).unwrap());
    }

    #[test]
    fn hops_through_isolated_entity_are_identity() {
        let labels = vec!["a".to_string(), "b".to_string(), "lone".to_string()];
        let rels = vec!["r".to_string()];
        let kg = KnowledgeGraph::new(
            labels,
            rels,
            vec![Triple::new(EntityId(0), crate::kg::RelationId(0), EntityId(1))],
        )
        .unwrap();
        let rows = vec![
            Interaction { user: 0, item: EntityId(0), label: true, split: Split::Train },
            Interaction { user: 0, item: EntityId(1), label: false, split: Split::Train },
        ];
        let data = Interactions::new(1, rows);
        let model = train_recommender(&kg, &data, &RecConfig { hops: 2, epochs: 1, ..Default::default() }).unwrap();
        let lone = EntityId(2);
        let direct = dot(model.users.row(0), model.entities.row(2));
        assert_eq!(model.score(&kg, 0, lone).unwrap(), direct);
    }

    #[test]
    fn aggregation_scores_cold_items_above_chance() {
        let (kg, data) = mini_world();
        let kgcn = train_recommender(&kg, &data, &RecConfig { epochs: 120, seed: 3, ..Default::default() }).unwrap();
        let mf = train_recommender(
            &kg,
            &data,
            &RecConfig { hops: 0, epochs: 120, seed: 3, ..Default::default() },
        )
        .unwrap();
        let kgcn_dev = eval_auc(&kgcn, &kg, &data, Split::Dev).unwrap();
        let mf_dev = eval_auc(&mf, &kg, &data, Split::Dev).unwrap();
        assert!(kgcn_dev >= 0.75, "aggregation dev AUC {kgcn_dev}");
        assert!(kgcn_dev > mf_dev - 1e-12, "kgcn {kgcn_dev} vs mf {mf_dev}");
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = crate::rng(41);
        use rand::Rng as _;
        let kg = crate::kg::random_graph(12, 3, 30, &mut rng);
        let rows: Vec<Interaction> = (0..10)
            .map(|i| Interaction {
                user: rng.gen_range(0..4),
                item: EntityId(rng.gen_range(0..12)),
                label: rng.gen_bool(0.5),
                split: if i < 8 { Split::Train } else { Split::Dev },
            })
            .collect();
        let train: Vec<Interaction> = rows.iter().filter(|r| r.split == Split::Train).copied().collect();
        let mut users = ParamBlock::uniform(4, 6, &mut rng);
        let mut entities = ParamBlock::uniform(12, 6, &mut rng);
        let mut relations = ParamBlock::uniform(3, 6, &mut rng);
        batch_gradients(&mut users, &mut entities, &mut relations, 2, &kg, &train);
        let mut blocks = vec![users, entities, relations];
        let kg_ref = &kg;
        let train_ref = &train;
        let report = finite_diff_check(
            &mut blocks,
            |b| batch_loss(&b[0], &b[1], &b[2], 2, kg_ref, train_ref),
            &mut rng,
        );
        assert!(report.ok(1e-4), "worst rel err {}", report.worst_rel_err);
    }

    #[test]
    fn zero_graph_emb_ranks_like_matrix_factorization() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 60, ..Default::default() }).unwrap();
        let mut mf_view = model.clone();
        mf_view.hops = 0;
        assert_eq!(
            noisy_auc(&model, &kg, &data, Split::Dev, NoisyMode::ZeroGraphEmb, 0).unwrap(),
            eval_auc(&mf_view, &kg, &data, Split::Dev).unwrap()
        );
    }

    #[test]
    fn noisy_modes_are_deterministic_per_seed() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 20, ..Default::default() }).unwrap();
        for mode in [
            NoisyMode::ZeroGraphEmb,
            NoisyMode::RandomGraphEmb,
            NoisyMode::RandomKgEmb,
            NoisyMode::RandomNeighborhood,
        ] {
            let a = noisy_auc(&model, &kg, &data, Split::Dev, mode, 7).unwrap();
            let b = noisy_auc(&model, &kg, &data, Split::Dev, mode, 7).unwrap();
            assert_eq!(a, b, "{mode} not reproducible");
        }
    }

    #[test]
    fn eval_rejects_wrong_vocab_and_unfrozen_models() {
        let (kg, data) = mini_world();
        let mut model = train_recommender(&kg, &data, &RecConfig { epochs: 1, ..Default::default() }).unwrap();
        let other = crate::fixtures::tiny6();
        assert!(matches!(
            eval_auc(&model, &other, &data, Split::Dev),
            Err(DownstreamError::VocabMismatch { .. })
        ));
        model.frozen = false;
        assert!(matches!(
            eval_auc(&model, &kg, &data, Split::Dev),
            Err(DownstreamError::NotFrozen)
        ));
    }

    #[test]
    fn empty_split_is_an_error() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 1, ..Default::default() }).unwrap();
        assert!(matches!(
            eval_auc(&model, &kg, &data, Split::Test),
            Err(DownstreamError::EmptySplit(Split::Test))
        ));
    }

    #[test]
    fn checkpoint_round_trips_bytewise() {
        let (kg, data) = mini_world();
        let model = train_recommender(&kg, &data, &RecConfig { epochs: 5, ..Default::default() }).unwrap();
        let text = model.to_checkpoint();
        let back = RecModel::from_checkpoint(&text).unwrap();
        assert_eq!(back.to_checkpoint(), text);
        assert!(back.frozen);
        assert!(RecModel::from_checkpoint("kgperturb-rec v2 x\n").is_err());
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let (kg, data) = mini_world();
        let cfg = RecConfig { epochs: 15, seed: 9, ..Default::default() };
        let a = train_recommender(&kg, &data, &cfg).unwrap();
        let b = train_recommender(&kg, &data, &cfg).unwrap();
        assert_eq!(a.to_checkpoint(), b.to_checkpoint());
    }
}
