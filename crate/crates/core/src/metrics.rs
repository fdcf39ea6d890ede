//! Agreement metrics between an original graph and a perturbed one.
//!
//! Semantic drift is measured by ATS, the mean scorer plausibility of the
//! perturbed triples. Structural drift compares per-entity feature vectors
//! averaged over relation subgraphs: SC2D uses local clustering
//! coefficients, SD2 uses degrees. Both collapse each relation subgraph to
//! its undirected simple projection first (parallel edges within a relation
//! merge, self-loops drop), then convert the L2 distance `dist` between the
//! original and perturbed vectors into the similarity `1 / (dist + b)`.

use thiserror::Error;

use crate::kg::KnowledgeGraph;
use crate::scorer::{Scorer, ScorerError};

/// Default smoothing constant `b`.
pub const DEFAULT_B: f64 = 1.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("graphs have different vocabularies; structural metrics need identical entity and relation tables")]
    VocabMismatch,
    #[error("ATS is undefined on a graph without triples")]
    EmptyGraph,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

/// Watts–Strogatz local clustering coefficient per entity, on the graph's
/// undirected simple projection. Entities with degree below 2 get 0.
pub fn local_clustering(kg: &KnowledgeGraph) -> Vec<f64> {
    let n = kg.n_entities();
    let mut out = vec![0.0; n];
    for e in 0..n {
        let neighbors = kg.undirected_neighbors(crate::kg::EntityId(e as u32));
        let deg = neighbors.len();
        if deg < 2 {
            continue;
        }
        let mut links = 0usize;
        let ns: Vec<_> = neighbors.iter().copied().collect();
        for i in 0..ns.len() {
            let ni = kg.undirected_neighbors(ns[i]);
            for nj in ns.iter().skip(i + 1) {
                if ni.contains(nj) {
                    links += 1;
                }
            }
        }
        out[e] = 2.0 * links as f64 / (deg as f64 * (deg - 1) as f64);
    }
    out
}

/// Undirected simple-projection degree per entity.
pub fn simple_degrees(kg: &KnowledgeGraph) -> Vec<f64> {
    (0..kg.n_entities())
        .map(|e| kg.undirected_neighbors(crate::kg::EntityId(e as u32)).len() as f64)
        .collect()
}

fn per_relation_mean(kg: &KnowledgeGraph, feature: fn(&KnowledgeGraph) -> Vec<f64>) -> Vec<f64> {
    let n = kg.n_entities();
    let nr = kg.n_relations();
    let mut acc = vec![0.0; n];
    if nr == 0 {
        return acc;
    }
    for r in 0..nr {
        let sub = kg
            .relation_subgraph(crate::kg::RelationId(r as u32))
            .expect("relation id within vocabulary");
        for (a, f) in acc.iter_mut().zip(feature(&sub)) {
            *a += f;
        }
    }
    for a in &mut acc {
        *a /= nr as f64;
    }
    acc
}

/// Per-entity clustering coefficients averaged over relation subgraphs.
pub fn clustering_vector(kg: &KnowledgeGraph) -> Vec<f64> {
    per_relation_mean(kg, local_clustering)
}

/// Per-entity degrees averaged over relation subgraphs.
pub fn degree_vector(kg: &KnowledgeGraph) -> Vec<f64> {
    per_relation_mean(kg, simple_degrees)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_vocab(original: &KnowledgeGraph, perturbed: &KnowledgeGraph) -> Result<(), MetricsError> {
    if original.entity_labels() != perturbed.entity_labels()
        || original.relation_labels() != perturbed.relation_labels()
    {
        return Err(MetricsError::VocabMismatch);
    }
    Ok(())
}

/// Clustering-based structural agreement: `1 / (||c_o - c_p|| + b)`.
pub fn sc2d(original: &KnowledgeGraph, perturbed: &KnowledgeGraph, b: f64) -> Result<f64, MetricsError> {
    check_vocab(original, perturbed)?;
    Ok(1.0 / (l2(&clustering_vector(original), &clustering_vector(perturbed)) + b))
}

/// Degree-based structural agreement: `1 / (||d_o - d_p|| + b)`.
pub fn sd2(original: &KnowledgeGraph, perturbed: &KnowledgeGraph, b: f64) -> Result<f64, MetricsError> {
    check_vocab(original, perturbed)?;
    Ok(1.0 / (l2(&degree_vector(original), &degree_vector(perturbed)) + b))
}

/// Mean scorer plausibility over the (perturbed) graph's triples.
pub fn ats(scorer: &Scorer, kg: &KnowledgeGraph) -> Result<f64, MetricsError> {
    scorer.check_compat(kg)?;
    if kg.n_triples() == 0 {
        return Err(MetricsError::EmptyGraph);
    }
    let mut sum = 0.0;
    for t in kg.triples() {
        sum += scorer.score(t)?;
    }
    Ok(sum / kg.n_triples() as f64)
}

/// The three agreement numbers for one original/perturbed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub ats: f64,
    pub sc2d: f64,
    pub sd2: f64,
    pub b: f64,
}

impl MetricReport {
    pub fn compute(
        scorer: &Scorer,
        original: &KnowledgeGraph,
        perturbed: &KnowledgeGraph,
        b: f64,
    ) -> Result<Self, MetricsError> {
        Ok(MetricReport {
            ats: ats(scorer, perturbed)?,
            sc2d: sc2d(original, perturbed, b)?,
            sd2: sd2(original, perturbed, b)?,
            b,
        })
    }

    pub const CSV_HEADER: &'static str = "ats,sc2d,sd2,b";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            crate::fmt9(self.ats),
            crate::fmt9(self.sc2d),
            crate::fmt9(self.sd2),
            crate::fmt9(self.b)
        )
    }

    /// Header plus one row, trailing newline.
    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}
