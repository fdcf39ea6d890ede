//! Downstream task models evaluated on perturbed graphs.
//!
//! Two frozen evaluators realize "task performance as a function of the
//! graph": a recommender whose item representations aggregate KG
//! neighborhoods ([`recommender`]) and a multiple-choice QA scorer pooling
//! relation-path features ([`qa`]). [`world`] generates the synthetic
//! dataset all of this trains on. Models are trained once on the original
//! graph, frozen, and then re-evaluated against arbitrary snapshots sharing
//! the same vocabulary.

pub mod qa;
pub mod recommender;
pub mod world;

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::kg::{EntityId, KnowledgeGraph};

pub use qa::{eval_qa, train_qa, QaConfig, QaModel};
pub use recommender::{eval_auc, train_recommender, RecConfig, RecModel};
pub use world::{generate_synthetic_world, WorldSpec};

/// Probabilities are clamped here before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum DownstreamError {
    #[error("failed to read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("failed to write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("checkpoint {path}: {msg}")]
    Format { path: String, msg: String },
    #[error("entity id {0} out of range for this graph")]
    EntityOutOfRange(u32),
    #[error("model was trained on a different vocabulary ({expected} entities / {expected_r} relations, graph has {got} / {got_r})")]
    VocabMismatch { expected: usize, expected_r: usize, got: usize, got_r: usize },
    #[error("{0} split is empty")]
    EmptySplit(Split),
    #[error("task list is empty")]
    NoTasks,
    #[error("AUC needs both a positive and a negative example")]
    SingleClass,
    #[error("non-finite score encountered")]
    NonFinite,
    #[error("model must be frozen before evaluation")]
    NotFrozen,
    #[error("{mode} does not apply to the {model} model")]
    ModeMismatch { mode: NoisyMode, model: &'static str },
    #[error("degenerate world spec: {0}")]
    DegenerateSpec(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
}

/// Which partition an example belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

/// One labeled user-item pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interaction {
    pub user: u32,
    pub item: EntityId,
    pub label: bool,
    pub split: Split,
}

/// A user-item interaction table. Items refer to KG entities; users are
/// indices into the recommender's own embedding table.
#[derive(Debug, Clone)]
pub struct Interactions {
    pub n_users: usize,
    pub rows: Vec<Interaction>,
}

impl Interactions {
    pub fn new(n_users: usize, rows: Vec<Interaction>) -> Self {
        Interactions { n_users, rows }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Interaction> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Sorted deduplicated item universe.
    pub fn items(&self) -> Vec<EntityId> {
        let mut items: Vec<EntityId> = self.rows.iter().map(|r| r.item).collect();
        items.sort_unstable();
        items.dedup();
        items
    }

    /// Every item id must name a KG entity, and no (user, item) pair may
    /// appear in more than one split.
    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<(), DownstreamError> {
        let mut seen = std::collections::HashSet::new();
        for row in &self.rows {
            if row.item.0 as usize >= kg.n_entities() {
                return Err(DownstreamError::EntityOutOfRange(row.item.0));
            }
            if row.user as usize >= self.n_users {
                return Err(DownstreamError::Parse {
                    line: 0,
                    msg: format!("user id {} exceeds declared user count {}", row.user, self.n_users),
                });
            }
            if !seen.insert((row.user, row.item)) {
                return Err(DownstreamError::Parse {
                    line: 0,
                    msg: format!(
                        "pair (user {}, item {}) appears more than once across splits",
                        row.user, row.item.0
                    ),
                });
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("user,item,label,split\n");
        for row in &self.rows {
            out.push_str(&format!(
                "{},{},{},{}\n",
                row.user,
                row.item.0,
                u8::from(row.label),
                row.split
            ));
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Self, DownstreamError> {
        let mut rows = Vec::new();
        let mut max_user = 0u32;
        for (idx, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if idx == 0 {
                if line != "user,item,label,split" {
                    return Err(DownstreamError::Parse {
                        line: 1,
                        msg: format!("expected header user,item,label,split, found {line:?}"),
                    });
                }
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let lineno = idx + 1;
            let parse = |msg: String| DownstreamError::Parse { line: lineno, msg };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 4 {
                return Err(parse(format!("expected 4 fields, found {}", fields.len())));
            }
            let user: u32 = fields[0].parse().map_err(|_| parse(format!("bad user id {:?}", fields[0])))?;
            let item: u32 = fields[1].parse().map_err(|_| parse(format!("bad item id {:?}", fields[1])))?;
            let label = match fields[2] {
                "0" => false,
                "1" => true,
                other => return Err(parse(format!("label must be 0 or 1, found {other:?}"))),
            };
            let split = Split::from_str(fields[3]).map_err(|e| parse(e))?;
            max_user = max_user.max(user);
            rows.push(Interaction { user, item: EntityId(item), label, split });
        }
        if rows.is_empty() {
            return Err(DownstreamError::Parse { line: 1, msg: "no interaction rows".into() });
        }
        Ok(Interactions { n_users: max_user as usize + 1, rows })
    }

    pub fn save(&self, path: &Path) -> Result<(), DownstreamError> {
        fs::write(path, self.to_csv())
            .map_err(|source| DownstreamError::Write { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<Self, DownstreamError> {
        let text = fs::read_to_string(path)
            .map_err(|source| DownstreamError::Read { path: path.display().to_string(), source })?;
        Self::parse_csv(&text)
    }
}

/// One multiple-choice question: a question entity set, `k` candidate
/// answer entity sets, and the index of the correct candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaTask {
    pub question: Vec<EntityId>,
    pub candidates: Vec<Vec<EntityId>>,
    pub correct: usize,
}

impl QaTask {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn validate(&self, kg: &KnowledgeGraph) -> Result<(), DownstreamError> {
        for e in self.question.iter().chain(self.candidates.iter().flatten()) {
            if e.0 as usize >= kg.n_entities() {
                return Err(DownstreamError::EntityOutOfRange(e.0));
            }
        }
        Ok(())
    }
}

/// QA tasks partitioned by split.
#[derive(Debug, Clone, Default)]
pub struct QaDataset {
    pub train: Vec<QaTask>,
    pub dev: Vec<QaTask>,
    pub test: Vec<QaTask>,
}

impl QaDataset {
    pub fn split(&self, split: Split) -> &[QaTask] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.dev.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn all(&self) -> Vec<&QaTask> {
        self.train.iter().chain(&self.dev).chain(&self.test).collect()
    }
}

fn entity_list(ids: &[EntityId]) -> String {
    let parts: Vec<String> = ids.iter().map(|e| e.0.to_string()).collect();
    parts.join(",")
}

fn parse_entity_list(field: &str, lineno: usize) -> Result<Vec<EntityId>, DownstreamError> {
    let mut out = Vec::new();
    for part in field.split(',') {
        let id: u32 = part.parse().map_err(|_| DownstreamError::Parse {
            line: lineno,
            msg: format!("bad entity id {part:?}"),
        })?;
        out.push(EntityId(id));
    }
    Ok(out)
}

/// Serializes tasks one per line: question entities, each candidate's
/// entities, and the correct index, `|`-separated with comma-separated ids
/// inside each field.
pub fn qa_tasks_to_text(tasks: &[QaTask]) -> String {
    let mut out = String::new();
    for task in tasks {
        out.push_str(&entity_list(&task.question));
        for cand in &task.candidates {
            out.push('|');
            out.push_str(&entity_list(cand));
        }
        out.push('|');
        out.push_str(&task.correct.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_qa_tasks(text: &str) -> Result<Vec<QaTask>, DownstreamError> {
    let mut tasks = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let fields: Vec<&str> = line.split('|').collect();
        if fields.len() < 4 {
            return Err(DownstreamError::Parse {
                line: lineno,
                msg: "a task needs a question, at least two candidates, and a correct index".into(),
            });
        }
        let question = parse_entity_list(fields[0], lineno)?;
        let candidates: Vec<Vec<EntityId>> = fields[1..fields.len() - 1]
            .iter()
            .map(|f| parse_entity_list(f, lineno))
            .collect::<Result<_, _>>()?;
        let correct: usize = fields[fields.len() - 1].parse().map_err(|_| DownstreamError::Parse {
            line: lineno,
            msg: format!("bad correct index {:?}", fields[fields.len() - 1]),
        })?;
        if correct >= candidates.len() {
            return Err(DownstreamError::Parse {
                line: lineno,
                msg: format!("correct index {} out of range for {} candidates", correct, candidates.len()),
            });
        }
        tasks.push(QaTask { question, candidates, correct });
    }
    Ok(tasks)
}

pub fn save_qa_tasks(path: &Path, tasks: &[QaTask]) -> Result<(), DownstreamError> {
    fs::write(path, qa_tasks_to_text(tasks))
        .map_err(|source| DownstreamError::Write { path: path.display().to_string(), source })
}

pub fn load_qa_tasks(path: &Path) -> Result<Vec<QaTask>, DownstreamError> {
    let text = fs::read_to_string(path)
        .map_err(|source| DownstreamError::Read { path: path.display().to_string(), source })?;
    parse_qa_tasks(&text)
}

/// Area under the ROC curve by rank statistic, tied scores counted half.
pub fn auc(scored: &[(f64, bool)]) -> Result<f64, DownstreamError> {
    let positives = scored.iter().filter(|(_, y)| *y).count();
    let negatives = scored.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(DownstreamError::SingleClass);
    }
    if scored.iter().any(|(s, _)| !s.is_finite()) {
        return Err(DownstreamError::NonFinite);
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).unwrap());
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based; a tie group shares the average of its ranks.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 {
                rank_sum += avg_rank;
            }
        }
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

/// Divergence of a predicted distribution from the point mass on the
/// correct answer; reduces to a clamped negative log probability.
pub fn kl_to_dirac(p_correct: f64) -> f64 {
    -p_correct.max(PROB_FLOOR).ln()
}

/// Graph-noising regimes for the robustness baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoisyMode {
    /// Graph-side embedding forced to the zero vector.
    ZeroGraphEmb,
    /// Graph-side embedding forced to a seeded standard normal per instance.
    RandomGraphEmb,
    /// Embedding tables replaced wholesale by seeded standard normals.
    RandomKgEmb,
    /// Every entity's neighbor list redirected to uniform random entities.
    RandomNeighborhood,
}

impl NoisyMode {
    pub fn label(self) -> &'static str {
        match self {
            NoisyMode::ZeroGraphEmb => "zero-graph-emb",
            NoisyMode::RandomGraphEmb => "random-graph-emb",
            NoisyMode::RandomKgEmb => "random-kg-emb",
            NoisyMode::RandomNeighborhood => "random-neighborhood",
        }
    }
}

impl fmt::Display for NoisyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for NoisyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero-graph-emb" => Ok(NoisyMode::ZeroGraphEmb),
            "random-graph-emb" => Ok(NoisyMode::RandomGraphEmb),
            "random-kg-emb" => Ok(NoisyMode::RandomKgEmb),
            "random-neighborhood" => Ok(NoisyMode::RandomNeighborhood),
            other => Err(format!("unknown noisy mode {other:?}")),
        }
    }
}

/// A frozen model bundled with its evaluation data, presenting one scoring
/// surface to perturbation drivers regardless of the task behind it.
#[derive(Debug, Clone)]
pub enum Evaluator {
    Recommender { model: RecModel, data: Interactions },
    Qa { model: QaModel, tasks: QaDataset },
}

impl Evaluator {
    pub fn task_name(&self) -> &'static str {
        match self {
            Evaluator::Recommender { .. } => "recommender",
            Evaluator::Qa { .. } => "qa",
        }
    }

    /// Headline test-split score: AUC for the recommender, accuracy for QA.
    pub fn test_score(&self, kg: &KnowledgeGraph) -> Result<f64, DownstreamError> {
        match self {
            Evaluator::Recommender { model, data } => eval_auc(model, kg, data, Split::Test),
            Evaluator::Qa { model, tasks } => Ok(eval_qa(model, kg, tasks.split(Split::Test))?.0),
        }
    }

    /// Statistic driving delayed rewards: dev AUC for the recommender, mean
    /// dev divergence from the correct answer for QA.
    pub fn dev_statistic(&self, kg: &KnowledgeGraph) -> Result<f64, DownstreamError> {
        match self {
            Evaluator::Recommender { model, data } => eval_auc(model, kg, data, Split::Dev),
            Evaluator::Qa { model, tasks } => {
                let dev = tasks.split(Split::Dev);
                if dev.is_empty() {
                    return Err(DownstreamError::EmptySplit(Split::Dev));
                }
                let (_, dists) = eval_qa(model, kg, dev)?;
                let total: f64 = dev
                    .iter()
                    .zip(&dists)
                    .map(|(task, p)| kl_to_dirac(p[task.correct]))
                    .sum();
                Ok(total / dev.len() as f64)
            }
        }
    }

    /// Whether a larger dev statistic means the task got better (true for
    /// AUC, false for divergence).
    pub fn higher_is_better(&self) -> bool {
        matches!(self, Evaluator::Recommender { .. })
    }

    /// Test-split score under a noising regime.
    pub fn noisy_score(&self, kg: &KnowledgeGraph, mode: NoisyMode, seed: u64) -> Result<f64, DownstreamError> {
        match self {
            Evaluator::Recommender { model, data } => {
                recommender::noisy_auc(model, kg, data, Split::Test, mode, seed)
            }
            Evaluator::Qa { model, tasks } => {
                qa::noisy_accuracy(model, kg, tasks.split(Split::Test), mode, seed)
            }
        }
    }
}
