//! Run configuration. One TOML file drives every subcommand; command-line
//! flags override the master seed and the output directory. Resolution
//! fills section seeds from the master seed and input paths from the
//! output directory, and the resolved result is written next to each
//! command's outputs so a run is reproducible from its own artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use kgperturb_core::downstream::{QaConfig, RecConfig, WorldSpec};
use kgperturb_core::nn::Optimizer;
use kgperturb_core::rl::RlTrainConfig;
use kgperturb_core::scorer::ScorerConfig;
use serde::{Deserialize, Serialize};

/// Which downstream task the perturbation commands evaluate against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Recommender,
    Qa,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; sections without their own seed inherit it.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub task: TaskKind,
    pub world: WorldSection,
    pub inputs: InputsSection,
    pub scorer: ScorerSection,
    pub recommender: RecommenderSection,
    pub qa: QaSection,
    pub perturb: PerturbSection,
    pub curve: CurveSection,
    pub rl: RlSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            task: TaskKind::Recommender,
            world: WorldSection::default(),
            inputs: InputsSection::default(),
            scorer: ScorerSection::default(),
            recommender: RecommenderSection::default(),
            qa: QaSection::default(),
            perturb: PerturbSection::default(),
            curve: CurveSection::default(),
            rl: RlSection::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or the defaults when no path is given.
    /// Unknown keys are rejected so typos fail loudly.
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))
            }
        }
    }

    /// Applies command-line overrides, then fills every optional seed and
    /// input path with its derived default.
    pub fn resolve(mut self, seed: Option<u64>, out_dir: Option<PathBuf>) -> RunConfig {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out_dir {
            self.out_dir = o;
        }
        let master = self.seed;
        self.world.seed.get_or_insert(master);
        self.scorer.seed.get_or_insert(master);
        self.recommender.seed.get_or_insert(master);
        self.qa.seed.get_or_insert(master);
        self.perturb.seed.get_or_insert(master);
        self.rl.seed.get_or_insert(master);
        self.inputs.fill_defaults(&self.out_dir);
        self
    }

    /// Writes the fully resolved config next to the command's outputs.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating {}", self.out_dir.display()))?;
        let path = self.out_dir.join(format!("resolved_{command}.toml"));
        let text = toml::to_string_pretty(self).context("serializing resolved config")?;
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Paths the commands read. Unset paths resolve to well-known file names
/// under the output directory, which is exactly where `gen_world`,
/// `train_scorer`, and `train_downstream` write them.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputsSection {
    pub kg: Option<PathBuf>,
    pub interactions: Option<PathBuf>,
    pub qa_train: Option<PathBuf>,
    pub qa_dev: Option<PathBuf>,
    pub qa_test: Option<PathBuf>,
    pub scorer: Option<PathBuf>,
    pub recommender: Option<PathBuf>,
    pub qa_model: Option<PathBuf>,
}

impl InputsSection {
    fn fill_defaults(&mut self, out_dir: &Path) {
        self.kg.get_or_insert_with(|| out_dir.join("kg.tsv"));
        self.interactions.get_or_insert_with(|| out_dir.join("interactions.csv"));
        self.qa_train.get_or_insert_with(|| out_dir.join("qa_train.txt"));
        self.qa_dev.get_or_insert_with(|| out_dir.join("qa_dev.txt"));
        self.qa_test.get_or_insert_with(|| out_dir.join("qa_test.txt"));
        self.scorer.get_or_insert_with(|| out_dir.join("scorer.ckpt"));
        self.recommender.get_or_insert_with(|| out_dir.join("recommender.ckpt"));
        self.qa_model.get_or_insert_with(|| out_dir.join("qa_model.ckpt"));
    }

    pub fn kg(&self) -> &Path {
        self.kg.as_deref().expect("config not resolved")
    }

    pub fn interactions(&self) -> &Path {
        self.interactions.as_deref().expect("config not resolved")
    }

    pub fn qa_train(&self) -> &Path {
        self.qa_train.as_deref().expect("config not resolved")
    }

    pub fn qa_dev(&self) -> &Path {
        self.qa_dev.as_deref().expect("config not resolved")
    }

    pub fn qa_test(&self) -> &Path {
        self.qa_test.as_deref().expect("config not resolved")
    }

    pub fn scorer(&self) -> &Path {
        self.scorer.as_deref().expect("config not resolved")
    }

    pub fn recommender(&self) -> &Path {
        self.recommender.as_deref().expect("config not resolved")
    }

    pub fn qa_model(&self) -> &Path {
        self.qa_model.as_deref().expect("config not resolved")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldSection {
    pub n_entities: usize,
    pub n_relations: usize,
    pub n_triples: usize,
    pub n_users: usize,
    pub n_items: usize,
    pub n_interactions: usize,
    pub n_qa_tasks: usize,
    pub qa_k: usize,
    pub genre_signal: f64,
    pub label_noise: f64,
    pub train_fraction: f64,
    pub seed: Option<u64>,
}

impl Default for WorldSection {
    fn default() -> Self {
        let core = WorldSpec::default();
        WorldSection {
            n_entities: core.n_entities,
            n_relations: core.n_relations,
            n_triples: core.n_triples,
            n_users: core.n_users,
            n_items: core.n_items,
            n_interactions: core.n_interactions,
            n_qa_tasks: core.n_qa_tasks,
            qa_k: core.qa_k,
            genre_signal: core.genre_signal,
            label_noise: core.label_noise,
            train_fraction: core.train_fraction,
            seed: None,
        }
    }
}

impl WorldSection {
    pub fn to_spec(&self) -> WorldSpec {
        WorldSpec {
            n_entities: self.n_entities,
            n_relations: self.n_relations,
            n_triples: self.n_triples,
            n_users: self.n_users,
            n_items: self.n_items,
            n_interactions: self.n_interactions,
            n_qa_tasks: self.n_qa_tasks,
            qa_k: self.qa_k,
            genre_signal: self.genre_signal,
            label_noise: self.label_noise,
            train_fraction: self.train_fraction,
            seed: self.seed.unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScorerSection {
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub negatives: usize,
    pub optimizer: String,
    pub seed: Option<u64>,
}

impl Default for ScorerSection {
    fn default() -> Self {
        let core = ScorerConfig::default();
        ScorerSection {
            dim: core.dim,
            epochs: core.epochs,
            learning_rate: core.learning_rate,
            negatives: core.negatives,
            optimizer: "adam".to_string(),
            seed: None,
        }
    }
}

impl ScorerSection {
    pub fn to_core(&self) -> Result<ScorerConfig> {
        Ok(ScorerConfig {
            dim: self.dim,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            negatives: self.negatives,
            optimizer: parse_optimizer(&self.optimizer)?,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecommenderSection {
    pub dim: usize,
    pub hops: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub seed: Option<u64>,
}

impl Default for RecommenderSection {
    fn default() -> Self {
        let core = RecConfig::default();
        RecommenderSection {
            dim: core.dim,
            hops: core.hops,
            epochs: core.epochs,
            learning_rate: core.learning_rate,
            optimizer: "adam".to_string(),
            seed: None,
        }
    }
}

impl RecommenderSection {
    pub fn to_core(&self) -> Result<RecConfig> {
        Ok(RecConfig {
            dim: self.dim,
            hops: self.hops,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: parse_optimizer(&self.optimizer)?,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QaSection {
    pub dim: usize,
    pub hidden: usize,
    pub encoded: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub seed: Option<u64>,
}

impl Default for QaSection {
    fn default() -> Self {
        let core = QaConfig::default();
        QaSection {
            dim: core.dim,
            hidden: core.hidden,
            encoded: core.encoded,
            epochs: core.epochs,
            learning_rate: core.learning_rate,
            optimizer: "adam".to_string(),
            seed: None,
        }
    }
}

impl QaSection {
    pub fn to_core(&self) -> Result<QaConfig> {
        Ok(QaConfig {
            dim: self.dim,
            hidden: self.hidden,
            encoded: self.encoded,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            optimizer: parse_optimizer(&self.optimizer)?,
            seed: self.seed.unwrap_or(0),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbSection {
    /// Method label: RS, RR, ER, or ED. The policy variants come from
    /// `rl_train`, which owns their training loop.
    pub method: String,
    pub scale: f64,
    pub seed: Option<u64>,
}

impl Default for PerturbSection {
    fn default() -> Self {
        PerturbSection { method: "RR".to_string(), scale: 1.0, seed: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveSection {
    pub methods: Vec<String>,
    pub scales: Vec<f64>,
    /// Perturbation seeds; each (method, scale, seed) tuple is one row.
    pub seeds: Vec<u64>,
}

impl Default for CurveSection {
    fn default() -> Self {
        CurveSection {
            methods: vec!["RS".into(), "RR".into(), "ER".into(), "ED".into()],
            scales: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RlSection {
    /// Policy variant label: RL-RR or RL-ER.
    pub variant: String,
    /// When set, skip training: load this policy checkpoint and play the
    /// deterministic evaluation episode.
    pub eval_checkpoint: Option<PathBuf>,
    pub episodes: usize,
    pub steps_per_episode: usize,
    pub reward_period: usize,
    pub top_k: usize,
    pub gamma: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub epsilon_decay_steps: usize,
    pub learning_rate: f64,
    pub target_sync: usize,
    pub shuffle_recompute: usize,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub scale_target: f64,
    pub lstm_hidden: usize,
    pub head_width: usize,
    pub literal_neighbor_rewire: bool,
    pub absolute_statistic_reward: bool,
    pub optimizer: String,
    pub seed: Option<u64>,
}

impl Default for RlSection {
    fn default() -> Self {
        let core = RlTrainConfig::default();
        RlSection {
            variant: "RL-RR".to_string(),
            eval_checkpoint: None,
            episodes: core.episodes,
            steps_per_episode: core.steps_per_episode,
            reward_period: core.reward_period,
            top_k: core.top_k,
            gamma: core.gamma,
            epsilon_start: core.epsilon_start,
            epsilon_end: core.epsilon_end,
            epsilon_decay_steps: core.epsilon_decay_steps,
            learning_rate: core.learning_rate,
            target_sync: core.target_sync,
            shuffle_recompute: core.shuffle_recompute,
            replay_capacity: core.replay_capacity,
            batch_size: core.batch_size,
            scale_target: core.scale_target,
            lstm_hidden: core.lstm_hidden,
            head_width: core.head_width,
            literal_neighbor_rewire: core.literal_neighbor_rewire,
            absolute_statistic_reward: core.absolute_statistic_reward,
            optimizer: "adam".to_string(),
            seed: None,
        }
    }
}

impl RlSection {
    pub fn to_core(&self) -> Result<RlTrainConfig> {
        Ok(RlTrainConfig {
            episodes: self.episodes,
            steps_per_episode: self.steps_per_episode,
            reward_period: self.reward_period,
            top_k: self.top_k,
            gamma: self.gamma,
            epsilon_start: self.epsilon_start,
            epsilon_end: self.epsilon_end,
            epsilon_decay_steps: self.epsilon_decay_steps,
            learning_rate: self.learning_rate,
            target_sync: self.target_sync,
            shuffle_recompute: self.shuffle_recompute,
            replay_capacity: self.replay_capacity,
            batch_size: self.batch_size,
            scale_target: self.scale_target,
            lstm_hidden: self.lstm_hidden,
            head_width: self.head_width,
            literal_neighbor_rewire: self.literal_neighbor_rewire,
            absolute_statistic_reward: self.absolute_statistic_reward,
            optimizer: parse_optimizer(&self.optimizer)?,
            seed: self.seed.unwrap_or(0),
        })
    }
}

fn parse_optimizer(name: &str) -> Result<Optimizer> {
    match name {
        "adam" => Ok(Optimizer::default()),
        "sgd" => Ok(Optimizer::Sgd),
        other => bail!("unknown optimizer {other:?}, expected \"adam\" or \"sgd\""),
    }
}
