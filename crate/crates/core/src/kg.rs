//! Knowledge-graph snapshots with a closed vocabulary.
//!
//! A [`KnowledgeGraph`] owns an entity vocabulary, a relation vocabulary, and
//! a duplicate-free set of directed triples. Snapshots are immutable: edits
//! go through [`KnowledgeGraph::apply_edits`], which validates the edit and
//! returns a new snapshot. Perturbations elsewhere in the crate only ever
//! rearrange triples over this fixed vocabulary; they never invent entities
//! or relations.
//!
//! The on-disk form is a tab-separated file of `head⇥relation⇥tail` labels.
//! Saving always writes the canonical form: triples sorted by
//! `(head, relation, tail)` label, one per line, trailing newline. Canonical
//! files therefore round-trip byte-for-byte through load/save.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Dense entity index into a graph's entity vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

/// Dense relation index into a graph's relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RelationId(pub u32);

/// One directed edge `(head, relation, tail)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId) -> Self {
        Triple { head, relation, tail }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

impl fmt::Display for RelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum KgError {
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
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no triples found")]
    Empty,
    #[error("invalid label {0:?}: labels must be non-empty, free of tabs and newlines, and must not start with '#'")]
    BadLabel(String),
    #[error("duplicate label {0:?} in vocabulary")]
    DuplicateLabel(String),
    #[error("entity id {0} out of range (vocabulary has {1} entities)")]
    EntityOutOfRange(u32, usize),
    #[error("relation id {0} out of range (vocabulary has {1} relations)")]
    RelationOutOfRange(u32, usize),
    #[error("duplicate triple ({0}, {1}, {2})")]
    DuplicateTriple(String, String, String),
    #[error("cannot remove absent triple ({0}, {1}, {2})")]
    RemoveAbsent(String, String, String),
    #[error("cannot add duplicate triple ({0}, {1}, {2})")]
    AddDuplicate(String, String, String),
    #[error("unknown entity {0:?}")]
    UnknownEntity(String),
}

/// A loaded graph together with how many duplicate lines were dropped.
#[derive(Debug)]
pub struct LoadedGraph {
    pub graph: KnowledgeGraph,
    pub duplicates_dropped: usize,
}

/// Immutable knowledge-graph snapshot with adjacency indexes.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entity_labels: Vec<String>,
    relation_labels: Vec<String>,
    entity_index: HashMap<String, EntityId>,
    relation_index: HashMap<String, RelationId>,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    /// Per head entity: `(relation, tail)` pairs in triple order.
    out_edges: Vec<Vec<(RelationId, EntityId)>>,
    /// Per tail entity: `(relation, head)` pairs in triple order.
    in_edges: Vec<Vec<(RelationId, EntityId)>>,
    /// Per entity: distinct one-hop neighbours, ignoring direction and self.
    undirected: Vec<BTreeSet<EntityId>>,
}

impl KnowledgeGraph {
    /// Builds a graph from explicit vocabularies and triples.
    ///
    /// Label lists fix the id assignment (position = id). Fails on invalid or
    /// duplicate labels, out-of-range ids, or duplicate triples.
    pub fn new(
        entity_labels: Vec<String>,
        relation_labels: Vec<String>,
        triples: Vec<Triple>,
    ) -> Result<Self, KgError> {
        let mut entity_index = HashMap::with_capacity(entity_labels.len());
        for (i, label) in entity_labels.iter().enumerate() {
            validate_label(label)?;
            if entity_index.insert(label.clone(), EntityId(i as u32)).is_some() {
                return Err(KgError::DuplicateLabel(label.clone()));
            }
        }
        let mut relation_index = HashMap::with_capacity(relation_labels.len());
        for (i, label) in relation_labels.iter().enumerate() {
            validate_label(label)?;
            if relation_index.insert(label.clone(), RelationId(i as u32)).is_some() {
                return Err(KgError::DuplicateLabel(label.clone()));
            }
        }

        let mut graph = KnowledgeGraph {
            entity_labels,
            relation_labels,
            entity_index,
            relation_index,
            triples: Vec::with_capacity(triples.len()),
            triple_set: HashSet::with_capacity(triples.len()),
            out_edges: Vec::new(),
            in_edges: Vec::new(),
            undirected: Vec::new(),
        };
        for t in triples {
            graph.check_ids(&t)?;
            if !graph.triple_set.insert(t) {
                let (h, r, tl) = graph.labels_of(&t);
                return Err(KgError::DuplicateTriple(h.into(), r.into(), tl.into()));
            }
            graph.triples.push(t);
        }
        graph.rebuild_indexes();
        Ok(graph)
    }

    fn check_ids(&self, t: &Triple) -> Result<(), KgError> {
        let ne = self.entity_labels.len();
        let nr = self.relation_labels.len();
        if t.head.0 as usize >= ne {
            return Err(KgError::EntityOutOfRange(t.head.0, ne));
        }
        if t.tail.0 as usize >= ne {
            return Err(KgError::EntityOutOfRange(t.tail.0, ne));
        }
        if t.relation.0 as usize >= nr {
            return Err(KgError::RelationOutOfRange(t.relation.0, nr));
        }
        Ok(())
    }

    fn rebuild_indexes(&mut self) {
        let ne = self.entity_labels.len();
        self.out_edges = vec![Vec::new(); ne];
        self.in_edges = vec![Vec::new(); ne];
        self.undirected = vec![BTreeSet::new(); ne];
        for t in &self.triples {
            self.out_edges[t.head.0 as usize].push((t.relation, t.tail));
            self.in_edges[t.tail.0 as usize].push((t.relation, t.head));
            if t.head != t.tail {
                self.undirected[t.head.0 as usize].insert(t.tail);
                self.undirected[t.tail.0 as usize].insert(t.head);
            }
        }
    }

    pub fn n_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relation_labels.len()
    }

    pub fn n_triples(&self) -> usize {
        self.triples.len()
    }

    /// Triples in insertion order (original file order plus appended edits).
    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn entity_labels(&self) -> &[String] {
        &self.entity_labels
    }

    pub fn relation_labels(&self) -> &[String] {
        &self.relation_labels
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entity_labels[e.0 as usize]
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        &self.relation_labels[r.0 as usize]
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entity_index.get(label).copied()
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relation_index.get(label).copied()
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    /// Outgoing `(relation, tail)` pairs of `e`, in triple order.
    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_edges[e.0 as usize]
    }

    /// Incoming `(relation, head)` pairs of `e`, in triple order.
    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_edges[e.0 as usize]
    }

    /// Distinct one-hop neighbours of `e`, ignoring edge direction and self.
    pub fn undirected_neighbors(&self, e: EntityId) -> &BTreeSet<EntityId> {
        &self.undirected[e.0 as usize]
    }

    fn labels_of(&self, t: &Triple) -> (&str, &str, &str) {
        (
            self.entity_label(t.head),
            self.relation_label(t.relation),
            self.entity_label(t.tail),
        )
    }

    /// Entities reachable from `start` within `hops` undirected steps,
    /// excluding `start` itself. `hops = 0` yields the empty set.
    pub fn n_hop_neighbors(&self, start: EntityId, hops: usize) -> Result<BTreeSet<EntityId>, KgError> {
        if start.0 as usize >= self.n_entities() {
            return Err(KgError::EntityOutOfRange(start.0, self.n_entities()));
        }
        let mut seen: BTreeSet<EntityId> = BTreeSet::new();
        let mut frontier: Vec<EntityId> = vec![start];
        for _ in 0..hops {
            let mut next = Vec::new();
            for &e in &frontier {
                for &n in self.undirected_neighbors(e) {
                    if n != start && seen.insert(n) {
                        next.push(n);
                    }
                }
            }
            if next.is_empty() {
                break;
            }
            frontier = next;
        }
        Ok(seen)
    }

    /// Subgraph keeping the full vocabulary but only triples labelled `r`.
    pub fn relation_subgraph(&self, r: RelationId) -> Result<KnowledgeGraph, KgError> {
        if r.0 as usize >= self.n_relations() {
            return Err(KgError::RelationOutOfRange(r.0, self.n_relations()));
        }
        let triples = self.triples.iter().copied().filter(|t| t.relation == r).collect();
        KnowledgeGraph::new(self.entity_labels.clone(), self.relation_labels.clone(), triples)
    }

    /// Triple count per relation id. Sums to `n_triples()`.
    pub fn relation_histogram(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.n_relations()];
        for t in &self.triples {
            counts[t.relation.0 as usize] += 1;
        }
        counts
    }

    /// Returns a new snapshot with `removed` taken out and then `added` put
    /// in. Every removed triple must be present, and no added triple may
    /// already be present once the removals are applied, so removing and
    /// re-adding the same triple is a valid identity edit.
    pub fn apply_edits(&self, removed: &[Triple], added: &[Triple]) -> Result<KnowledgeGraph, KgError> {
        let mut set = self.triple_set.clone();
        for t in removed {
            self.check_ids(t)?;
            if !set.remove(t) {
                let (h, r, tl) = self.labels_of(t);
                return Err(KgError::RemoveAbsent(h.into(), r.into(), tl.into()));
            }
        }
        let mut appended = Vec::with_capacity(added.len());
        for t in added {
            self.check_ids(t)?;
            if !set.insert(*t) {
                let (h, r, tl) = self.labels_of(t);
                return Err(KgError::AddDuplicate(h.into(), r.into(), tl.into()));
            }
            appended.push(*t);
        }

        let mut graph = self.clone();
        graph.triples.retain(|t| set.contains(t) && !appended.contains(t));
        graph.triples.extend(appended);
        graph.triple_set = set;
        graph.rebuild_indexes();
        Ok(graph)
    }

    /// True when both graphs have the same vocabularies and triple sets,
    /// regardless of triple order.
    pub fn same_triple_set(&self, other: &KnowledgeGraph) -> bool {
        self.entity_labels == other.entity_labels
            && self.relation_labels == other.relation_labels
            && self.triple_set == other.triple_set
    }

    /// Canonical serialization: triples sorted by `(head, relation, tail)`
    /// label, tab-separated, trailing newline.
    pub fn to_canonical_tsv(&self) -> String {
        let mut rows: Vec<(&str, &str, &str)> = self.triples.iter().map(|t| self.labels_of(t)).collect();
        rows.sort_unstable();
        let mut out = String::new();
        for (h, r, t) in rows {
            out.push_str(h);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    /// Parses TSV text: one `head⇥relation⇥tail` triple per line, `#` lines
    /// and blank lines ignored. Vocabulary ids follow first appearance.
    /// Duplicate triples are dropped and counted, an input without any data
    /// line is an error.
    pub fn parse_tsv(text: &str) -> Result<LoadedGraph, KgError> {
        let mut entity_labels: Vec<String> = Vec::new();
        let mut relation_labels: Vec<String> = Vec::new();
        let mut entity_index: HashMap<String, EntityId> = HashMap::new();
        let mut relation_index: HashMap<String, RelationId> = HashMap::new();
        let mut triples: Vec<Triple> = Vec::new();
        let mut triple_set: HashSet<Triple> = HashSet::new();
        let mut duplicates = 0usize;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(KgError::Parse {
                    line: lineno + 1,
                    msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            if fields.iter().any(|f| f.is_empty()) {
                return Err(KgError::Parse { line: lineno + 1, msg: "empty field".into() });
            }
            let head = intern_entity(fields[0], &mut entity_labels, &mut entity_index);
            let relation = intern_relation(fields[1], &mut relation_labels, &mut relation_index);
            let tail = intern_entity(fields[2], &mut entity_labels, &mut entity_index);
            let t = Triple::new(head, relation, tail);
            if triple_set.insert(t) {
                triples.push(t);
            } else {
                duplicates += 1;
            }
        }
        if triples.is_empty() {
            return Err(KgError::Empty);
        }
        let graph = KnowledgeGraph::new(entity_labels, relation_labels, triples)?;
        Ok(LoadedGraph { graph, duplicates_dropped: duplicates })
    }

    /// Loads a triple file from disk. See [`KnowledgeGraph::parse_tsv`].
    pub fn load(path: &Path) -> Result<LoadedGraph, KgError> {
        let text = std::fs::read_to_string(path).map_err(|source| KgError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse_tsv(&text)
    }

    /// Writes the canonical serialization to disk.
    pub fn save(&self, path: &Path) -> Result<(), KgError> {
        std::fs::write(path, self.to_canonical_tsv()).map_err(|source| KgError::Write {
            path: path.display().to_string(),
            source,
        })
    }
}

fn validate_label(label: &str) -> Result<(), KgError> {
    if label.is_empty() || label.starts_with('#') || label.contains('\t') || label.contains('\n') {
        return Err(KgError::BadLabel(label.to_string()));
    }
    Ok(())
}

fn intern_entity(
    label: &str,
    labels: &mut Vec<String>,
    index: &mut HashMap<String, EntityId>,
) -> EntityId {
    if let Some(&id) = index.get(label) {
        return id;
    }
    let id = EntityId(labels.len() as u32);
    labels.push(label.to_string());
    index.insert(label.to_string(), id);
    id
}

fn intern_relation(
    label: &str,
    labels: &mut Vec<String>,
    index: &mut HashMap<String, RelationId>,
) -> RelationId {
    if let Some(&id) = index.get(label) {
        return id;
    }
    let id = RelationId(labels.len() as u32);
    labels.push(label.to_string());
    index.insert(label.to_string(), id);
    id
}

/// Samples a graph with `n_triples` distinct triples over vocabularies of the
/// given sizes. Intended for randomized tests; entities that end up isolated
/// stay in the vocabulary. Sampling gives up ceil when the requested count
/// cannot be reached (tiny vocabularies), so callers get at most `n_triples`.
pub fn random_graph<R: rand::Rng>(
    n_entities: usize,
    n_relations: usize,
    n_triples: usize,
    rng: &mut R,
) -> KnowledgeGraph {
    assert!(n_entities > 0 && n_relations > 0);
    let entity_labels = (0..n_entities).map(|i| format!("e{i}")).collect();
    let relation_labels = (0..n_relations).map(|i| format!("r{i}")).collect();
    let mut set = HashSet::new();
    let mut triples = Vec::new();
    let mut attempts = 0usize;
    while triples.len() < n_triples && attempts < n_triples * 50 {
        attempts += 1;
        let t = Triple::new(
            EntityId(rng.gen_range(0..n_entities as u32)),
            RelationId(rng.gen_range(0..n_relations as u32)),
            EntityId(rng.gen_range(0..n_entities as u32)),
        );
        if set.insert(t) {
            triples.push(t);
        }
    }
    KnowledgeGraph::new(entity_labels, relation_labels, triples).expect("sampled triples are distinct and in range")
}
