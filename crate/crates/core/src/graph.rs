//! Computation-graph data model, structural validation, and connectivity
//! pruning.
//!
//! A [`ComputationGraph`] is a layered multi-edge DAG with a unique source
//! (no incoming edges) and a unique target (no outgoing edges). Parallel
//! edges between the same node pair are disambiguated by a `qualifier`
//! string; the canonical identity of an edge is its [`Edge::key`],
//! `tail|head|qualifier`. Graphs are immutable after construction and all
//! operations here are pure functions of their inputs.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator used in canonical edge keys. Forbidden inside identifiers.
pub const KEY_SEPARATOR: char = '|';

/// A named node with its topological stratum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub layer: u32,
}

impl Node {
    pub fn new(id: impl Into<String>, layer: u32) -> Self {
        Self { id: id.into(), layer }
    }
}

/// A directed edge `tail -> head`, disambiguated by `qualifier`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub tail: String,
    pub head: String,
    pub qualifier: String,
}

impl Edge {
    pub fn new(
        tail: impl Into<String>,
        head: impl Into<String>,
        qualifier: impl Into<String>,
    ) -> Self {
        Self {
            tail: tail.into(),
            head: head.into(),
            qualifier: qualifier.into(),
        }
    }

    /// Canonical key `tail|head|qualifier`.
    pub fn key(&self) -> String {
        format!("{}{sep}{}{sep}{}", self.tail, self.head, self.qualifier, sep = KEY_SEPARATOR)
    }
}

/// Errors that prevent a graph value from being constructed at all.
///
/// Anything indexable-but-broken (wrong degrees, cycles, layer-order
/// violations, duplicate edges) is instead reported by
/// [`ComputationGraph::validate`], which never aborts.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("duplicate node id: {0}")]
    DuplicateNodeId(String),
    #[error("edge references unknown node: {0}")]
    UnknownEndpoint(String),
    #[error("source node not found: {0}")]
    UnknownSource(String),
    #[error("target node not found: {0}")]
    UnknownTarget(String),
    #[error("graph has no nodes")]
    Empty,
}

/// One violated structural invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    SourceHasIncoming { count: usize },
    TargetHasOutgoing { count: usize },
    MultipleRoots { ids: Vec<String> },
    MultipleSinks { ids: Vec<String> },
    DuplicateEdge { key: String, occurrences: usize },
    LayerOrder { key: String, tail_layer: u32, head_layer: u32 },
    InteriorLayerOutOfRange { id: String, layer: u32 },
    Cycle { ids: Vec<String> },
    SeparatorInIdentifier { text: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::SourceHasIncoming { count } => {
                write!(f, "source has incoming edge(s): {count}")
            }
            Violation::TargetHasOutgoing { count } => {
                write!(f, "target has outgoing edge(s): {count}")
            }
            Violation::MultipleRoots { ids } => {
                write!(f, "expected the source to be the only node without incoming edges, also found: {}", ids.join(", "))
            }
            Violation::MultipleSinks { ids } => {
                write!(f, "expected the target to be the only node without outgoing edges, also found: {}", ids.join(", "))
            }
            Violation::DuplicateEdge { key, occurrences } => {
                write!(f, "duplicate edge triple {key} ({occurrences} occurrences)")
            }
            Violation::LayerOrder { key, tail_layer, head_layer } => {
                write!(f, "edge {key} does not advance layers (tail layer {tail_layer}, head layer {head_layer})")
            }
            Violation::InteriorLayerOutOfRange { id, layer } => {
                write!(f, "interior node {id} has layer {layer} outside the open source..target layer range")
            }
            Violation::Cycle { ids } => {
                write!(f, "cycle detected involving: {}", ids.join(", "))
            }
            Violation::SeparatorInIdentifier { text } => {
                write!(f, "identifier contains '{KEY_SEPARATOR}': {text}")
            }
        }
    }
}

/// Outcome of [`ComputationGraph::validate`]. Empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    /// True if any violation's message contains `needle`.
    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.to_string().contains(needle))
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for v in &self.violations {
            writeln!(f, "- {v}")?;
        }
        Ok(())
    }
}

/// JSON mirror of the graph interchange format.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct GraphFile {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    source: String,
    target: String,
}

/// A layered multi-edge DAG with unique source and target.
///
/// Edge order is the canonical ordering from the interchange file.
#[derive(Debug, Clone)]
pub struct ComputationGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    edge_keys: Vec<String>,
    source: usize,
    target: usize,
    node_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
    out_edges: Vec<Vec<usize>>,
    in_edges: Vec<Vec<usize>>,
}

impl ComputationGraph {
    /// Build a graph from raw parts. Fails only on conditions that make
    /// indexing impossible; see [`ComputationGraph::validate`] for
    /// structural diagnostics.
    pub fn from_parts(
        nodes: Vec<Node>,
        edges: Vec<Edge>,
        source: &str,
        target: &str,
    ) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if node_index.insert(n.id.clone(), i).is_some() {
                return Err(GraphError::DuplicateNodeId(n.id.clone()));
            }
        }
        let source = *node_index
            .get(source)
            .ok_or_else(|| GraphError::UnknownSource(source.to_string()))?;
        let target = *node_index
            .get(target)
            .ok_or_else(|| GraphError::UnknownTarget(target.to_string()))?;

        let mut out_edges = vec![Vec::new(); nodes.len()];
        let mut in_edges = vec![Vec::new(); nodes.len()];
        let mut edge_keys = Vec::with_capacity(edges.len());
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (e, edge) in edges.iter().enumerate() {
            let t = *node_index
                .get(&edge.tail)
                .ok_or_else(|| GraphError::UnknownEndpoint(edge.tail.clone()))?;
            let h = *node_index
                .get(&edge.head)
                .ok_or_else(|| GraphError::UnknownEndpoint(edge.head.clone()))?;
            out_edges[t].push(e);
            in_edges[h].push(e);
            let key = edge.key();
            edge_index.insert(key.clone(), e);
            edge_keys.push(key);
        }

        Ok(Self {
            nodes,
            edges,
            edge_keys,
            source,
            target,
            node_index,
            edge_index,
            out_edges,
            in_edges,
        })
    }

    pub fn from_json_str(s: &str) -> Result<Self, GraphError> {
        let file: GraphFile =
            serde_json::from_str(s).map_err(|e| GraphError::UnknownEndpoint(e.to_string()))?;
        Self::from_file(file)
    }

    fn from_file(file: GraphFile) -> Result<Self, GraphError> {
        Self::from_parts(file.nodes, file.edges, &file.source, &file.target)
    }

    pub fn to_json_string(&self) -> String {
        let file = GraphFile {
            nodes: self.nodes.clone(),
            edges: self.edges.clone(),
            source: self.source_id().to_string(),
            target: self.target_id().to_string(),
        };
        serde_json::to_string_pretty(&file).expect("graph serialization cannot fail")
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Canonical edge keys in file order.
    pub fn edge_keys(&self) -> &[String] {
        &self.edge_keys
    }

    pub fn edge_position(&self, key: &str) -> Option<usize> {
        self.edge_index.get(key).copied()
    }

    pub fn source_id(&self) -> &str {
        &self.nodes[self.source].id
    }

    pub fn target_id(&self) -> &str {
        &self.nodes[self.target].id
    }

    pub fn node_position(&self, id: &str) -> Option<usize> {
        self.node_index.get(id).copied()
    }

    pub(crate) fn source_pos(&self) -> usize {
        self.source
    }

    pub(crate) fn target_pos(&self) -> usize {
        self.target
    }

    pub(crate) fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let edge = &self.edges[e];
        (self.node_index[&edge.tail], self.node_index[&edge.head])
    }

    pub(crate) fn in_edge_ids(&self, v: usize) -> &[usize] {
        &self.in_edges[v]
    }

    pub(crate) fn out_edge_ids(&self, v: usize) -> &[usize] {
        &self.out_edges[v]
    }

    /// Diagnose every violated structural invariant. Never aborts; an
    /// empty report means the graph is valid.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();

        for n in &self.nodes {
            if n.id.contains(KEY_SEPARATOR) {
                violations.push(Violation::SeparatorInIdentifier { text: n.id.clone() });
            }
        }
        for e in &self.edges {
            if e.qualifier.contains(KEY_SEPARATOR) {
                violations.push(Violation::SeparatorInIdentifier { text: e.qualifier.clone() });
            }
        }

        let incoming = self.in_edges[self.source].len();
        if incoming > 0 {
            violations.push(Violation::SourceHasIncoming { count: incoming });
        }
        let outgoing = self.out_edges[self.target].len();
        if outgoing > 0 {
            violations.push(Violation::TargetHasOutgoing { count: outgoing });
        }

        let extra_roots: Vec<String> = (0..self.nodes.len())
            .filter(|&v| v != self.source && self.in_edges[v].is_empty())
            .map(|v| self.nodes[v].id.clone())
            .collect();
        if !extra_roots.is_empty() {
            violations.push(Violation::MultipleRoots { ids: extra_roots });
        }
        let extra_sinks: Vec<String> = (0..self.nodes.len())
            .filter(|&v| v != self.target && self.out_edges[v].is_empty())
            .map(|v| self.nodes[v].id.clone())
            .collect();
        if !extra_sinks.is_empty() {
            violations.push(Violation::MultipleSinks { ids: extra_sinks });
        }

        let mut seen: HashMap<&str, usize> = HashMap::new();
        for key in &self.edge_keys {
            *seen.entry(key.as_str()).or_insert(0) += 1;
        }
        let mut duplicates: Vec<(&str, usize)> =
            seen.into_iter().filter(|&(_, c)| c > 1).collect();
        duplicates.sort();
        for (key, occurrences) in duplicates {
            violations.push(Violation::DuplicateEdge { key: key.to_string(), occurrences });
        }

        for (e, edge) in self.edges.iter().enumerate() {
            let (t, h) = self.edge_endpoints(e);
            let (tl, hl) = (self.nodes[t].layer, self.nodes[h].layer);
            if tl >= hl {
                violations.push(Violation::LayerOrder {
                    key: self.edge_keys[e].clone(),
                    tail_layer: tl,
                    head_layer: hl,
                });
            }
        }

        let (src_layer, tgt_layer) = (self.nodes[self.source].layer, self.nodes[self.target].layer);
        for (v, node) in self.nodes.iter().enumerate() {
            if v == self.source || v == self.target {
                continue;
            }
            if node.layer <= src_layer || node.layer >= tgt_layer {
                violations.push(Violation::InteriorLayerOutOfRange {
                    id: node.id.clone(),
                    layer: node.layer,
                });
            }
        }

        if let Some(ids) = self.find_cycle_nodes() {
            violations.push(Violation::Cycle { ids });
        }

        ValidationReport { violations }
    }

    /// Kahn's algorithm; returns the ids stuck on a cycle, if any.
    fn find_cycle_nodes(&self) -> Option<Vec<String>> {
        let mut indegree: Vec<usize> = self.in_edges.iter().map(Vec::len).collect();
        let mut queue: Vec<usize> =
            (0..self.nodes.len()).filter(|&v| indegree[v] == 0).collect();
        let mut processed = 0;
        while let Some(v) = queue.pop() {
            processed += 1;
            for &e in &self.out_edges[v] {
                let (_, h) = self.edge_endpoints(e);
                indegree[h] -= 1;
                if indegree[h] == 0 {
                    queue.push(h);
                }
            }
        }
        if processed == self.nodes.len() {
            None
        } else {
            let mut stuck: Vec<String> = (0..self.nodes.len())
                .filter(|&v| indegree[v] > 0)
                .map(|v| self.nodes[v].id.clone())
                .collect();
            stuck.sort();
            Some(stuck)
        }
    }

    /// Maximal subset of `edges` in which every retained edge lies on some
    /// source-to-target path. Unknown keys are dropped. Idempotent.
    ///
    /// An edge (u, v) survives iff u is reachable from the source and the
    /// target is reachable from v, both within the retained subset; this is
    /// the fixpoint of iterated removal of dangling nodes.
    pub fn prune_to_connected(&self, edges: &BTreeSet<String>) -> BTreeSet<String> {
        let retained: Vec<usize> =
            edges.iter().filter_map(|k| self.edge_position(k)).collect();
        if retained.is_empty() {
            return BTreeSet::new();
        }
        let in_set: HashSet<usize> = retained.iter().copied().collect();

        let forward = self.reach(self.source, &in_set, true);
        let backward = self.reach(self.target, &in_set, false);

        retained
            .into_iter()
            .filter(|&e| {
                let (t, h) = self.edge_endpoints(e);
                forward.contains(&t) && backward.contains(&h)
            })
            .map(|e| self.edge_keys[e].clone())
            .collect()
    }

    fn reach(&self, start: usize, edge_set: &HashSet<usize>, forward: bool) -> HashSet<usize> {
        let mut seen = HashSet::new();
        seen.insert(start);
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            let incident = if forward { &self.out_edges[v] } else { &self.in_edges[v] };
            for &e in incident {
                if !edge_set.contains(&e) {
                    continue;
                }
                let (t, h) = self.edge_endpoints(e);
                let next = if forward { h } else { t };
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        seen
    }

    /// Number of edges lying on at least one source-to-target path.
    pub fn edge_count_on_paths(&self) -> usize {
        let all: BTreeSet<String> = self.edge_keys.iter().cloned().collect();
        self.prune_to_connected(&all).len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain() -> ComputationGraph {
        ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("t", 2)],
            vec![Edge::new("s", "a", ""), Edge::new("a", "t", "")],
            "s",
            "t",
        )
        .unwrap()
    }

    fn diamond() -> ComputationGraph {
        ComputationGraph::from_parts(
            vec![
                Node::new("s", 0),
                Node::new("a", 1),
                Node::new("b", 1),
                Node::new("t", 2),
            ],
            vec![
                Edge::new("s", "a", ""),
                Edge::new("s", "b", ""),
                Edge::new("a", "t", ""),
                Edge::new("b", "t", ""),
            ],
            "s",
            "t",
        )
        .unwrap()
    }

    fn keys(v: &[&str]) -> BTreeSet<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn chain_is_valid() {
        assert!(chain().validate().is_valid());
    }

    #[test]
    fn target_outgoing_edge_is_reported() {
        let g = ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("t", 2)],
            vec![
                Edge::new("s", "a", ""),
                Edge::new("a", "t", ""),
                Edge::new("t", "a", ""),
            ],
            "s",
            "t",
        )
        .unwrap();
        let report = g.validate();
        assert!(!report.is_valid());
        assert!(report.mentions("target has outgoing edge"));
    }

    #[test]
    fn duplicate_parallel_edge_is_reported() {
        let g = ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("t", 2)],
            vec![
                Edge::new("s", "a", "q"),
                Edge::new("s", "a", "q"),
                Edge::new("a", "t", ""),
            ],
            "s",
            "t",
        )
        .unwrap();
        let report = g.validate();
        assert!(report.mentions("duplicate edge triple s|a|q"));
    }

    #[test]
    fn layer_violation_and_cycle_are_reported() {
        let g = ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("b", 1), Node::new("t", 2)],
            vec![
                Edge::new("s", "a", ""),
                Edge::new("a", "b", ""),
                Edge::new("b", "a", ""),
                Edge::new("b", "t", ""),
            ],
            "s",
            "t",
        )
        .unwrap();
        let report = g.validate();
        assert!(report.mentions("does not advance layers"));
        assert!(report.mentions("cycle detected"));
    }

    #[test]
    fn prune_keeps_connected_chain() {
        let g = chain();
        let set = keys(&["s|a|", "a|t|"]);
        assert_eq!(g.prune_to_connected(&set), set);
    }

    #[test]
    fn prune_drops_dangling_edge() {
        let g = chain();
        assert!(g.prune_to_connected(&keys(&["s|a|"])).is_empty());
    }

    #[test]
    fn prune_diamond_partial() {
        // {s->a, s->b, a->t}: b has no outgoing edge, so s->b falls away.
        let g = diamond();
        let got = g.prune_to_connected(&keys(&["s|a|", "s|b|", "a|t|"]));
        assert_eq!(got, keys(&["s|a|", "a|t|"]));
    }

    /// Independent oracle: iterated removal of dangling nodes to fixpoint.
    fn prune_by_iterated_removal(g: &ComputationGraph, edges: &BTreeSet<String>) -> BTreeSet<String> {
        let mut kept: BTreeSet<String> =
            edges.iter().filter(|k| g.edge_position(k).is_some()).cloned().collect();
        loop {
            let mut removed = false;
            let mut in_deg: HashMap<&str, usize> = HashMap::new();
            let mut out_deg: HashMap<&str, usize> = HashMap::new();
            for key in &kept {
                let e = g.edge_position(key).unwrap();
                let edge = &g.edges()[e];
                *out_deg.entry(edge.tail.as_str()).or_insert(0) += 1;
                *in_deg.entry(edge.head.as_str()).or_insert(0) += 1;
            }
            let next: BTreeSet<String> = kept
                .iter()
                .filter(|key| {
                    let e = g.edge_position(key).unwrap();
                    let edge = &g.edges()[e];
                    let tail_ok = edge.tail == g.source_id()
                        || in_deg.get(edge.tail.as_str()).copied().unwrap_or(0) > 0;
                    let head_ok = edge.head == g.target_id()
                        || out_deg.get(edge.head.as_str()).copied().unwrap_or(0) > 0;
                    tail_ok && head_ok
                })
                .cloned()
                .collect();
            if next.len() != kept.len() {
                removed = true;
            }
            kept = next;
            if !removed {
                return kept;
            }
        }
    }

    #[test]
    fn prune_matches_iterated_removal_oracle() {
        let g = diamond();
        let all: Vec<String> = g.edge_keys().to_vec();
        // Every subset of the diamond's four edges.
        for mask in 0u32..16 {
            let subset: BTreeSet<String> = all
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, k)| k.clone())
                .collect();
            let fast = g.prune_to_connected(&subset);
            let slow = prune_by_iterated_removal(&g, &subset);
            assert_eq!(fast, slow, "mask {mask}");
            // Idempotence.
            assert_eq!(g.prune_to_connected(&fast), fast);
        }
    }

    #[test]
    fn edge_counts_on_paths() {
        assert_eq!(chain().edge_count_on_paths(), 2);
        assert_eq!(diamond().edge_count_on_paths(), 4);
        // Edge a->b dangles off every source-target path.
        let g = ComputationGraph::from_parts(
            vec![
                Node::new("s", 0),
                Node::new("a", 1),
                Node::new("b", 2),
                Node::new("t", 3),
            ],
            vec![
                Edge::new("s", "a", ""),
                Edge::new("a", "t", ""),
                Edge::new("a", "b", ""),
            ],
            "s",
            "t",
        )
        .unwrap();
        assert_eq!(g.edge_count_on_paths(), 2);
    }

    #[test]
    fn json_round_trip_preserves_edge_order() {
        let g = diamond();
        let restored = ComputationGraph::from_json_str(&g.to_json_string()).unwrap();
        assert_eq!(restored.edge_keys(), g.edge_keys());
        assert_eq!(restored.source_id(), "s");
        assert_eq!(restored.target_id(), "t");
    }
}
