//! Exact circuit selection as a 0/1 integer program.
//!
//! One binary variable `x_e` per eligible edge and `y_v` per node. The
//! program maximizes the total (rank-mode-transformed) score of selected
//! edges subject to:
//!
//! - budget: at most k edges selected;
//! - source/target: `y_s = y_t = 1`;
//! - consistency: `x_e <= y_tail` and `x_e <= y_head` for every edge
//!   (the linearized form of `x_e <= min(y_u, y_v)`);
//! - connectivity: every used non-target node has a selected outgoing
//!   edge, every used non-source node a selected incoming edge;
//! - optional positive floor: the number of selected positively-scored
//!   edges is at least `PNR * k`, taken un-rounded (integrality of the
//!   left side supplies the ceiling).
//!
//! [`solve_exact`] runs an in-repo depth-first branch-and-bound;
//! [`brute_force_oracle`] enumerates all subsets on small instances and
//! serves as ground truth. Every returned solution is re-audited against
//! the raw constraint rows; an audit failure is a hard error, not a
//! warning.

mod oracle;
mod solve;

pub use oracle::{brute_force_oracle, ORACLE_MAX_EDGES};
pub use solve::solve_exact;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ComputationGraph, ValidationReport};
use crate::scoring::EdgeScores;
use crate::selection::{RankMode, SelectionConfig};

#[derive(Debug, Error)]
pub enum IlpError {
    #[error("graph failed validation:\n{0}")]
    InvalidGraph(ValidationReport),
    #[error("budget k must be at least 1")]
    BudgetTooSmall,
    #[error("no score for graph edge {0}")]
    MissingScore(String),
    #[error("pnr must be in [0, 1], got {0}")]
    PnrOutOfRange(f64),
    #[error("brute-force oracle limited to {max} edges, got {edges}")]
    TooManyEdges { edges: usize, max: usize },
    #[error("solution failed the post-solve constraint audit: {0}")]
    AuditFailure(String),
}

/// Node/time budget for the branch-and-bound search.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolveLimits {
    pub max_nodes: u64,
    pub max_seconds: f64,
}

impl Default for SolveLimits {
    fn default() -> Self {
        Self { max_nodes: 10_000_000, max_seconds: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// Node or time limit hit; the best incumbent found is attached.
    BudgetExhausted,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IlpSolution {
    pub status: SolveStatus,
    pub selected_edges: BTreeSet<String>,
    pub objective_value: f64,
    pub nodes_used: BTreeSet<String>,
    /// Search nodes visited (subsets examined for the oracle).
    pub explored_nodes: u64,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct ModelEdge {
    pub key: String,
    pub tail: usize,
    pub head: usize,
    /// Objective coefficient after the rank-mode transform.
    pub coef: f64,
    /// Raw score strictly positive (membership in the PNR floor row).
    pub positive: bool,
}

/// One instantiated constraint row.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintRow {
    /// sum_e x_e <= k
    Budget { k: usize },
    /// y_node = 1
    FixNode { node: usize },
    /// x_edge <= y_tail
    EdgeImpliesTail { edge: usize },
    /// x_edge <= y_head
    EdgeImpliesHead { edge: usize },
    /// sum of x over edges out of `node` >= y_node
    NodeOut { node: usize },
    /// sum of x over edges into `node` >= y_node
    NodeIn { node: usize },
    /// sum of x over positively-scored edges >= rhs
    PnrFloor { rhs: f64 },
}

/// The instantiated integer program for one (graph, scores, config)
/// triple. Edges excluded upstream carry no variable: they can never be
/// selected, matching the heuristic strategies.
#[derive(Debug, Clone)]
pub struct IlpModel {
    pub(crate) graph_ref: String,
    pub(crate) budget_k: usize,
    pub(crate) pnr: Option<f64>,
    pub(crate) edges: Vec<ModelEdge>,
    pub(crate) node_keys: Vec<String>,
    pub(crate) source: usize,
    pub(crate) target: usize,
    pub(crate) out_edges: Vec<Vec<usize>>,
    pub(crate) in_edges: Vec<Vec<usize>>,
    rows: Vec<ConstraintRow>,
}

/// Instantiate every row of the program. Rejects graphs that fail
/// structural validation and configs with k = 0 or an out-of-range PNR.
pub fn build_model(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
) -> Result<IlpModel, IlpError> {
    let report = g.validate();
    if !report.is_valid() {
        return Err(IlpError::InvalidGraph(report));
    }
    if cfg.budget_k < 1 {
        return Err(IlpError::BudgetTooSmall);
    }
    if let Some(p) = cfg.pnr {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(IlpError::PnrOutOfRange(p));
        }
    }

    let n = g.nodes().len();
    let mut edges = Vec::new();
    let mut out_edges = vec![Vec::new(); n];
    let mut in_edges = vec![Vec::new(); n];
    for (pos, key) in g.edge_keys().iter().enumerate() {
        let entry = scores.get(key).ok_or_else(|| IlpError::MissingScore(key.clone()))?;
        if entry.excluded {
            continue;
        }
        let (tail, head) = g.edge_endpoints(pos);
        let e = edges.len();
        out_edges[tail].push(e);
        in_edges[head].push(e);
        edges.push(ModelEdge {
            key: key.clone(),
            tail,
            head,
            coef: cfg.rank_mode.value(entry.score),
            positive: entry.score > 0.0,
        });
    }

    let source = g.source_pos();
    let target = g.target_pos();
    let mut rows = Vec::new();
    rows.push(ConstraintRow::Budget { k: cfg.budget_k });
    rows.push(ConstraintRow::FixNode { node: source });
    rows.push(ConstraintRow::FixNode { node: target });
    for e in 0..edges.len() {
        rows.push(ConstraintRow::EdgeImpliesTail { edge: e });
        rows.push(ConstraintRow::EdgeImpliesHead { edge: e });
    }
    for v in 0..n {
        if v != target {
            rows.push(ConstraintRow::NodeOut { node: v });
        }
    }
    for v in 0..n {
        if v != source {
            rows.push(ConstraintRow::NodeIn { node: v });
        }
    }
    if let Some(p) = cfg.pnr {
        rows.push(ConstraintRow::PnrFloor { rhs: p * cfg.budget_k as f64 });
    }

    Ok(IlpModel {
        graph_ref: scores.graph_ref.clone(),
        budget_k: cfg.budget_k,
        pnr: cfg.pnr,
        edges,
        node_keys: g.nodes().iter().map(|node| node.id.clone()).collect(),
        source,
        target,
        out_edges,
        in_edges,
        rows,
    })
}

impl IlpModel {
    pub fn edge_var_count(&self) -> usize {
        self.edges.len()
    }

    pub fn node_var_count(&self) -> usize {
        self.node_keys.len()
    }

    pub fn rows(&self) -> &[ConstraintRow] {
        &self.rows
    }

    pub fn budget_k(&self) -> usize {
        self.budget_k
    }

    pub(crate) fn edge_flags(&self, selected: &BTreeSet<String>) -> Vec<bool> {
        self.edges.iter().map(|e| selected.contains(&e.key)).collect()
    }

    /// Node indicators implied by an edge assignment: source, target, and
    /// every endpoint of a selected edge.
    pub(crate) fn derive_node_flags(&self, x: &[bool]) -> Vec<bool> {
        let mut y = vec![false; self.node_keys.len()];
        y[self.source] = true;
        y[self.target] = true;
        for (e, edge) in self.edges.iter().enumerate() {
            if x[e] {
                y[edge.tail] = true;
                y[edge.head] = true;
            }
        }
        y
    }

    /// Objective in canonical (model edge) order, so identical selections
    /// always sum to the identical float.
    pub(crate) fn objective(&self, x: &[bool]) -> f64 {
        self.edges
            .iter()
            .enumerate()
            .filter(|&(e, _)| x[e])
            .map(|(_, edge)| edge.coef)
            .sum()
    }

    /// Evaluate every constraint row exactly (integer arithmetic on x/y,
    /// the float PNR bound as written). Returns the first violated row.
    pub fn audit(&self, selected: &BTreeSet<String>) -> Result<(), IlpError> {
        let x = self.edge_flags(selected);
        if x.iter().filter(|&&b| b).count() != selected.len() {
            return Err(IlpError::AuditFailure(
                "selection contains edges absent from the model".to_string(),
            ));
        }
        let y = self.derive_node_flags(&x);
        for row in &self.rows {
            let ok = match *row {
                ConstraintRow::Budget { k } => {
                    x.iter().filter(|&&b| b).count() <= k
                }
                ConstraintRow::FixNode { node } => y[node],
                ConstraintRow::EdgeImpliesTail { edge } => {
                    !x[edge] || y[self.edges[edge].tail]
                }
                ConstraintRow::EdgeImpliesHead { edge } => {
                    !x[edge] || y[self.edges[edge].head]
                }
                ConstraintRow::NodeOut { node } => {
                    let lhs = self.out_edges[node].iter().filter(|&&e| x[e]).count();
                    lhs >= usize::from(y[node])
                }
                ConstraintRow::NodeIn { node } => {
                    let lhs = self.in_edges[node].iter().filter(|&&e| x[e]).count();
                    lhs >= usize::from(y[node])
                }
                ConstraintRow::PnrFloor { rhs } => {
                    let lhs = self
                        .edges
                        .iter()
                        .enumerate()
                        .filter(|&(e, edge)| x[e] && edge.positive)
                        .count();
                    lhs as f64 >= rhs
                }
            };
            if !ok {
                return Err(IlpError::AuditFailure(format!("{row:?}")));
            }
        }
        Ok(())
    }

    /// Selected edges that lie on no source-to-target path within the
    /// selection. The degree rows make this empty for any valid DAG; it
    /// is reported, never silently fixed.
    pub(crate) fn off_path_edges(&self, x: &[bool]) -> Vec<String> {
        let n = self.node_keys.len();
        let mut forward = vec![false; n];
        let mut backward = vec![false; n];
        let mut stack = vec![self.source];
        forward[self.source] = true;
        while let Some(v) = stack.pop() {
            for &e in &self.out_edges[v] {
                if x[e] && !forward[self.edges[e].head] {
                    forward[self.edges[e].head] = true;
                    stack.push(self.edges[e].head);
                }
            }
        }
        let mut stack = vec![self.target];
        backward[self.target] = true;
        while let Some(v) = stack.pop() {
            for &e in &self.in_edges[v] {
                if x[e] && !backward[self.edges[e].tail] {
                    backward[self.edges[e].tail] = true;
                    stack.push(self.edges[e].tail);
                }
            }
        }
        self.edges
            .iter()
            .enumerate()
            .filter(|&(e, edge)| x[e] && !(forward[edge.tail] && backward[edge.head]))
            .map(|(_, edge)| edge.key.clone())
            .collect()
    }

    pub(crate) fn solution_from_flags(
        &self,
        status: SolveStatus,
        x: &[bool],
        explored_nodes: u64,
    ) -> IlpSolution {
        let selected_edges: BTreeSet<String> = self
            .edges
            .iter()
            .enumerate()
            .filter(|&(e, _)| x[e])
            .map(|(_, edge)| edge.key.clone())
            .collect();
        let nodes_used = if selected_edges.is_empty() && status == SolveStatus::Infeasible {
            BTreeSet::new()
        } else {
            self.derive_node_flags(x)
                .iter()
                .enumerate()
                .filter(|&(_, &used)| used)
                .map(|(v, _)| self.node_keys[v].clone())
                .collect()
        };
        let objective_value = if status == SolveStatus::Infeasible { 0.0 } else { self.objective(x) };
        IlpSolution {
            status,
            selected_edges,
            objective_value,
            nodes_used,
            explored_nodes,
            warnings: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};
    use crate::scoring::Provenance;
    use std::collections::BTreeMap;

    pub(crate) fn chain() -> ComputationGraph {
        ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("t", 2)],
            vec![Edge::new("s", "a", ""), Edge::new("a", "t", "")],
            "s",
            "t",
        )
        .unwrap()
    }

    pub(crate) fn scores_for(values: &[(&str, f64)]) -> EdgeScores {
        let map: BTreeMap<String, f64> =
            values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        EdgeScores::from_values("test", &map, Provenance::SingleRun)
    }

    #[test]
    fn chain_model_row_counts() {
        let g = chain();
        let scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        let model = build_model(&g, &scores, &cfg).unwrap();

        assert_eq!(model.edge_var_count(), 2);
        assert_eq!(model.node_var_count(), 3);
        let count = |pred: fn(&ConstraintRow) -> bool| model.rows().iter().filter(|r| pred(r)).count();
        assert_eq!(count(|r| matches!(r, ConstraintRow::Budget { .. })), 1);
        assert_eq!(count(|r| matches!(r, ConstraintRow::FixNode { .. })), 2);
        let consistency = count(|r| {
            matches!(r, ConstraintRow::EdgeImpliesTail { .. } | ConstraintRow::EdgeImpliesHead { .. })
        });
        assert_eq!(consistency, 4);
        // Out rows for s and a (target exempt), in rows for a and t
        // (source exempt).
        assert_eq!(count(|r| matches!(r, ConstraintRow::NodeOut { .. })), 2);
        assert_eq!(count(|r| matches!(r, ConstraintRow::NodeIn { .. })), 2);
        assert_eq!(count(|r| matches!(r, ConstraintRow::PnrFloor { .. })), 0);
    }

    #[test]
    fn pnr_row_present_only_when_requested() {
        let g = chain();
        let scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(2, RankMode::Signed).with_pnr(0.5);
        let model = build_model(&g, &scores, &cfg).unwrap();
        assert!(model
            .rows()
            .iter()
            .any(|r| matches!(r, ConstraintRow::PnrFloor { rhs } if *rhs == 1.0)));
    }

    #[test]
    fn build_rejects_invalid_graph_and_zero_budget() {
        let bad = ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("t", 2)],
            vec![Edge::new("s", "a", ""), Edge::new("a", "t", ""), Edge::new("t", "a", "x")],
            "s",
            "t",
        )
        .unwrap();
        let scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0), ("t|a|x", 1.0)]);
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        assert!(matches!(build_model(&bad, &scores, &cfg), Err(IlpError::InvalidGraph(_))));

        let g = chain();
        let scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(0, RankMode::Signed);
        assert!(matches!(build_model(&g, &scores, &cfg), Err(IlpError::BudgetTooSmall)));
    }

    #[test]
    fn excluded_edges_get_no_variable() {
        let g = chain();
        let mut scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0)]);
        scores.edges.get_mut("a|t|").unwrap().excluded = true;
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        let model = build_model(&g, &scores, &cfg).unwrap();
        assert_eq!(model.edge_var_count(), 1);
    }

    #[test]
    fn audit_flags_disconnected_selection() {
        let g = chain();
        let scores = scores_for(&[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        let model = build_model(&g, &scores, &cfg).unwrap();

        let ok: BTreeSet<String> = ["s|a|", "a|t|"].iter().map(|s| s.to_string()).collect();
        assert!(model.audit(&ok).is_ok());

        // {s->a} alone leaves a without an outgoing edge and t without an
        // incoming one.
        let partial: BTreeSet<String> = ["s|a|"].iter().map(|s| s.to_string()).collect();
        assert!(matches!(model.audit(&partial), Err(IlpError::AuditFailure(_))));

        // The empty selection violates the source/target degree rows.
        assert!(matches!(model.audit(&BTreeSet::new()), Err(IlpError::AuditFailure(_))));
    }
}
