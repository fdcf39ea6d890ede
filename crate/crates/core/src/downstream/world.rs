//! Synthetic dataset generator.
//!
//! The generated world makes the graph structure carry real signal. Items
//! belong to one of four latent genres. Attribute hubs anchor each genre:
//! every item links to hubs of its own genre, warm items to two of them,
//! cold items to exactly one (so a cold item's entire neighborhood is that
//! single edge). Warm items of a genre form a `same_genre` ring, hubs of a
//! genre form a `related_to` ring, and the remaining triple budget is
//! filled with unique `noise_link` edges among warm items and hubs. Users
//! prefer one genre each, interaction labels follow genre match, and QA
//! tasks ask which hub an item is attached to, with non-adjacent
//! other-genre hubs as distractors. Cold items appear only in test splits,
//! so test metrics probe parts of the graph the models never trained on.

use std::collections::HashSet;

use rand::Rng as _;

use crate::downstream::{DownstreamError, Interaction, Interactions, QaDataset, QaTask, Split};
use crate::kg::KnowledgeGraph;

const GENRES: usize = 4;
const REL_ATTRIBUTE: &str = "has_attribute";
const REL_SAME_GENRE: &str = "same_genre";
const REL_RELATED: &str = "related_to";
const REL_NOISE: &str = "noise_link";

/// Size and signal knobs for one generated world.
#[derive(Debug, Clone)]
pub struct WorldSpec {
    pub n_entities: usize,
    /// The schema is fixed, so this must be exactly 4.
    pub n_relations: usize,
    pub n_triples: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_qa_tasks: usize,
    /// Candidates per QA task.
    pub qa_k: usize,
    /// Probability that an interaction pair is chosen consistently with its
    /// label; 0 decouples labels from the graph entirely.
    pub genre_signal: f64,
    /// Probability of flipping an interaction label after pairing.
    pub label_noise: f64,
    /// Fraction of generated train interactions kept, for sparse-training
    /// regimes.
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for WorldSpec {
    fn default() -> Self {
        WorldSpec {
            n_entities: 100,
            n_relations: 4,
            n_triples: 400,
            n_users: 50,
            n_items: 60,
            n_interactions: 500,
            n_qa_tasks: 100,
            qa_k: 4,
            genre_signal: 1.0,
            label_noise: 0.05,
            train_fraction: 1.0,
            seed: 0,
        }
    }
}

impl WorldSpec {
    /// Smallest world the generator supports comfortably; used by smoke
    /// tests that only need valid shapes.
    pub fn tiny(seed: u64) -> Self {
        WorldSpec {
            n_entities: 28,
            n_relations: 4,
            n_triples: 60,
            n_users: 12,
            n_items: 18,
            n_interactions: 60,
            n_qa_tasks: 20,
            qa_k: 4,
            seed,
            ..Default::default()
        }
    }

    fn n_cold_items(&self) -> usize {
        self.n_items / 3
    }

    fn n_dev_items(&self) -> usize {
        self.n_items / 6
    }

    fn n_train_items(&self) -> usize {
        self.n_items - self.n_dev_items() - self.n_cold_items()
    }

    fn n_warm_items(&self) -> usize {
        self.n_train_items() + self.n_dev_items()
    }

    fn n_hubs(&self) -> usize {
        self.n_entities.saturating_sub(self.n_items)
    }

    fn validate(&self) -> Result<(), DownstreamError> {
        let fail = |msg: String| Err(DownstreamError::DegenerateSpec(msg));
        if self.n_relations != GENRES {
            return fail(format!(
                "the relation schema is fixed at 4 relations, spec asks for {}",
                self.n_relations
            ));
        }
        if self.n_items < 12 {
            return fail(format!("need at least 12 items, spec has {}", self.n_items));
        }
        if self.n_hubs() < 2 * GENRES {
            return fail(format!(
                "need at least {} hub entities beyond the items, spec leaves {}",
                2 * GENRES,
                self.n_hubs()
            ));
        }
        if self.n_users < GENRES {
            return fail(format!("need at least {GENRES} users, spec has {}", self.n_users));
        }
        if self.n_interactions < 10 {
            return fail(format!(
                "need at least 10 interactions for populated splits, spec has {}",
                self.n_interactions
            ));
        }
        if self.n_qa_tasks < 5 {
            return fail(format!("need at least 5 QA tasks, spec has {}", self.n_qa_tasks));
        }
        if self.qa_k < 2 {
            return fail(format!("QA needs at least 2 candidates, spec has {}", self.qa_k));
        }
        if !(0.0..=1.0).contains(&self.genre_signal) {
            return fail(format!("genre_signal must lie in [0, 1], got {}", self.genre_signal));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return fail(format!("label_noise must lie in [0, 0.5), got {}", self.label_noise));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            return fail(format!("train_fraction must lie in (0, 1], got {}", self.train_fraction));
        }
        Ok(())
    }
}

/// Graph node handle used during generation, before entity ids exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Node {
    Item(usize),
    Hub(usize),
}

impl Node {
    fn label(self) -> String {
        match self {
            Node::Item(i) => format!("item_{i}"),
            Node::Hub(j) => format!("hub_{j}"),
        }
    }
}

fn edge_key(a: Node, b: Node) -> (Node, Node) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

struct Builder {
    triples: Vec<(Node, &'static str, Node)>,
    adjacent: HashSet<(Node, Node)>,
}

impl Builder {
    fn push(&mut self, head: Node, relation: &'static str, tail: Node) {
        self.triples.push((head, relation, tail));
        self.adjacent.insert(edge_key(head, tail));
    }
}

/// Generates the knowledge graph, the interaction table, and the QA tasks
/// for `spec`, deterministically per seed. The graph comes back from a
/// canonical-text round trip, so entity ids match what any later reload of
/// the saved TSV would produce.
pub fn generate_synthetic_world(
    spec: &WorldSpec,
) -> Result<(KnowledgeGraph, Interactions, QaDataset), DownstreamError> {
    spec.validate()?;
    let mut rng = crate::rng(spec.seed);
    let degenerate = |msg: &str| DownstreamError::DegenerateSpec(msg.to_string());

    let n_warm = spec.n_warm_items();
    let n_hubs = spec.n_hubs();
    let hubs_of_genre: Vec<Vec<usize>> = (0..GENRES)
        .map(|g| (0..n_hubs).filter(|j| j % GENRES == g).collect())
        .collect();

    let mut builder = Builder { triples: Vec::new(), adjacent: HashSet::new() };

    // Attribute edges; cold items get exactly one so their neighborhood
    // stays a single edge.
    let mut attached: Vec<Vec<usize>> = Vec::with_capacity(spec.n_items);
    for i in 0..spec.n_items {
        let pool = &hubs_of_genre[i % GENRES];
        let first = pool[rng.gen_range(0..pool.len())];
        let mut hubs = vec![first];
        if i < n_warm {
            loop {
                let second = pool[rng.gen_range(0..pool.len())];
                if second != first {
                    hubs.push(second);
                    break;
                }
            }
        }
        for &j in &hubs {
            builder.push(Node::Item(i), REL_ATTRIBUTE, Node::Hub(j));
        }
        attached.push(hubs);
    }

    // Same-genre rings over warm items and related-to rings over hubs.
    for g in 0..GENRES {
        let members: Vec<usize> = (0..n_warm).filter(|i| i % GENRES == g).collect();
        if members.len() >= 2 {
            for idx in 0..members.len() {
                let next = members[(idx + 1) % members.len()];
                builder.push(Node::Item(members[idx]), REL_SAME_GENRE, Node::Item(next));
            }
        }
        let hubs = &hubs_of_genre[g];
        if hubs.len() >= 2 {
            for idx in 0..hubs.len() {
                let next = hubs[(idx + 1) % hubs.len()];
                builder.push(Node::Hub(hubs[idx]), REL_RELATED, Node::Hub(next));
            }
        }
    }

    // Unique noise edges among warm items and hubs fill the triple budget.
    let structural = builder.triples.len();
    if spec.n_triples <= structural {
        return Err(DownstreamError::DegenerateSpec(format!(
            "n_triples must exceed the {structural} structural triples this spec produces"
        )));
    }
    let fill = spec.n_triples - structural;
    let noise_pool: Vec<Node> = (0..n_warm)
        .map(Node::Item)
        .chain((0..n_hubs).map(Node::Hub))
        .collect();
    let mut noise_seen: HashSet<(Node, Node)> = HashSet::new();
    let mut attempts = 0usize;
    while noise_seen.len() < fill {
        attempts += 1;
        if attempts > fill * 200 {
            return Err(degenerate("could not place enough unique noise edges"));
        }
        let head = noise_pool[rng.gen_range(0..noise_pool.len())];
        let tail = noise_pool[rng.gen_range(0..noise_pool.len())];
        if head == tail || !noise_seen.insert((head, tail)) {
            continue;
        }
        builder.push(head, REL_NOISE, tail);
    }

    // Interactions: balanced labels, pairs drawn to match the label with
    // probability genre_signal.
    let n_test = spec.n_interactions / 5;
    let n_dev = spec.n_interactions / 5;
    let n_train = spec.n_interactions - n_dev - n_test;
    let ranges = [
        (Split::Train, 0..spec.n_train_items(), n_train),
        (Split::Dev, spec.n_train_items()..n_warm, n_dev),
        (Split::Test, n_warm..spec.n_items, n_test),
    ];
    let mut rows: Vec<(u32, usize, bool, Split)> = Vec::with_capacity(spec.n_interactions);
    let mut used_pairs: HashSet<(u32, usize)> = HashSet::new();
    for (split, range, count) in ranges {
        let items: Vec<usize> = range.collect();
        let mut placed = 0usize;
        let mut attempts = 0usize;
        while placed < count {
            attempts += 1;
            if attempts > count * 1000 {
                return Err(degenerate("could not place enough distinct interaction pairs"));
            }
            let wanted = placed % 2 == 0;
            let user = rng.gen_range(0..spec.n_users as u32);
            let pref = user as usize % GENRES;
            let item = if rng.gen::<f64>() < spec.genre_signal {
                let aligned: Vec<usize> = items
                    .iter()
                    .copied()
                    .filter(|&i| (i % GENRES == pref) == wanted)
                    .collect();
                if aligned.is_empty() {
                    continue;
                }
                aligned[rng.gen_range(0..aligned.len())]
            } else {
                items[rng.gen_range(0..items.len())]
            };
            if !used_pairs.insert((user, item)) {
                continue;
            }
            let label = wanted != (rng.gen::<f64>() < spec.label_noise);
            rows.push((user, item, label, split));
            placed += 1;
        }
    }
    if spec.train_fraction < 1.0 {
        let keep = ((spec.train_fraction * n_train as f64).round() as usize).clamp(1, n_train);
        rows.drain(keep..n_train);
    }

    // QA tasks: which hub is this item attached to. Distractors are
    // other-genre hubs with no edge to the item.
    let n_qa_test = spec.n_qa_tasks / 5;
    let n_qa_dev = spec.n_qa_tasks / 5;
    let n_qa_train = spec.n_qa_tasks - n_qa_dev - n_qa_test;
    let qa_ranges = [
        (Split::Train, 0..spec.n_train_items(), n_qa_train),
        (Split::Dev, spec.n_train_items()..n_warm, n_qa_dev),
        (Split::Test, n_warm..spec.n_items, n_qa_test),
    ];
    let mut qa_raw: Vec<(Split, usize, Vec<Node>, usize)> = Vec::new();
    for (split, range, count) in qa_ranges {
        let items: Vec<usize> = range.collect();
        for _ in 0..count {
            let item = items[rng.gen_range(0..items.len())];
            let hubs = &attached[item];
            let correct_hub = hubs[rng.gen_range(0..hubs.len())];
            let mut distractors: Vec<usize> = Vec::new();
            let mut attempts = 0usize;
            while distractors.len() < spec.qa_k - 1 {
                attempts += 1;
                if attempts > 10_000 {
                    return Err(degenerate("could not find enough non-adjacent distractor hubs"));
                }
                let hub = rng.gen_range(0..n_hubs);
                if hub % GENRES == item % GENRES
                    || distractors.contains(&hub)
                    || builder.adjacent.contains(&edge_key(Node::Item(item), Node::Hub(hub)))
                {
                    continue;
                }
                distractors.push(hub);
            }
            let correct = rng.gen_range(0..spec.qa_k);
            let mut candidates: Vec<Node> = distractors.into_iter().map(Node::Hub).collect();
            candidates.insert(correct, Node::Hub(correct_hub));
            qa_raw.push((split, item, candidates, correct));
        }
    }

    // Canonical-text round trip fixes the entity ids for everything above.
    let mut label_rows: Vec<(String, &'static str, String)> = builder
        .triples
        .iter()
        .map(|(h, r, t)| (h.label(), *r, t.label()))
        .collect();
    label_rows.sort_unstable();
    let mut text = String::new();
    for (h, r, t) in &label_rows {
        text.push_str(&format!("{h}\t{r}\t{t}\n"));
    }
    let loaded = KnowledgeGraph::parse_tsv(&text).map_err(|e| {
        DownstreamError::DegenerateSpec(format!("generated graph failed to parse: {e}"))
    })?;
    debug_assert_eq!(loaded.duplicates_dropped, 0);
    let kg = loaded.graph;
    debug_assert_eq!(kg.n_entities(), spec.n_entities);
    debug_assert_eq!(kg.n_triples(), spec.n_triples);
    let id_of = |node: Node| kg.entity_id(&node.label()).expect("generated node is in the graph");

    let interactions = Interactions::new(
        spec.n_users,
        rows.into_iter()
            .map(|(user, item, label, split)| Interaction {
                user,
                item: id_of(Node::Item(item)),
                label,
                split,
            })
            .collect(),
    );
    interactions.validate(&kg)?;

    let mut qa = QaDataset::default();
    for (split, item, candidates, correct) in qa_raw {
        let task = QaTask {
            question: vec![id_of(Node::Item(item))],
            candidates: candidates.into_iter().map(|n| vec![id_of(n)]).collect(),
            correct,
        };
        match split {
            Split::Train => qa.train.push(task),
            Split::Dev => qa.dev.push(task),
            Split::Test => qa.test.push(task),
        }
    }

    Ok((kg, interactions, qa))
}
