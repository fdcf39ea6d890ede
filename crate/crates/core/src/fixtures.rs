//! Small shared fixtures for tests and examples.

use crate::kg::KnowledgeGraph;

/// Six triples over six entities: a triangle `A→B→C→A` under `r1` and a
/// path `A→D→E→F` under `r2`. Small enough that neighbourhoods, clustering
/// coefficients, and degree vectors are all checkable by hand.
pub const TINY6_TSV: &str = "A\tr1\tB\nB\tr1\tC\nC\tr1\tA\nA\tr2\tD\nD\tr2\tE\nE\tr2\tF\n";

/// Parses [`TINY6_TSV`].
pub fn tiny6() -> KnowledgeGraph {
    KnowledgeGraph::parse_tsv(TINY6_TSV).expect("fixture parses").graph
}
