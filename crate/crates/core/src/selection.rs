//! Heuristic circuit construction: top-k, the greedy backward pass, and
//! two-phase positive-negative-ratio (PNR) selection.
//!
//! Ranking is either by raw signed score or by absolute score. Ties are
//! broken everywhere by ascending edge key, so identical inputs always
//! yield identical selections. Edges flagged as excluded (e.g. dropped by
//! the confidence filter) are never eligible for selection.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ComputationGraph;
use crate::scoring::EdgeScores;

#[derive(Debug, Error)]
pub enum SelectError {
    #[error("pnr must be in [0, 1], got {0}")]
    PnrOutOfRange(f64),
    #[error("pnr selection requires a pnr value")]
    PnrMissing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankMode {
    /// Rank by raw signed score (CPR-style).
    Signed,
    /// Rank by absolute score (CMD-style).
    Absolute,
}

impl RankMode {
    pub fn value(self, score: f64) -> f64 {
        match self {
            RankMode::Signed => score,
            RankMode::Absolute => score.abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Topk,
    Pnr,
    Ilp,
}

#[derive(Debug, Clone)]
pub struct SelectionConfig {
    pub budget_k: usize,
    pub rank_mode: RankMode,
    pub pnr: Option<f64>,
    pub prune_after: bool,
}

impl SelectionConfig {
    pub fn new(budget_k: usize, rank_mode: RankMode) -> Self {
        Self { budget_k, rank_mode, pnr: None, prune_after: true }
    }

    pub fn with_pnr(mut self, pnr: f64) -> Self {
        self.pnr = Some(pnr);
        self
    }

    pub fn check(&self) -> Result<(), SelectError> {
        if let Some(p) = self.pnr {
            if !(0.0..=1.0).contains(&p) || !p.is_finite() {
                return Err(SelectError::PnrOutOfRange(p));
            }
        }
        Ok(())
    }
}

/// A chosen edge subset with its provenance and objective value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitSelection {
    pub graph_ref: String,
    pub strategy: Strategy,
    pub budget_k: usize,
    pub selected_edges: BTreeSet<String>,
    pub objective_value: f64,
    pub warnings: Vec<String>,
}

/// Sum of rank-mode-transformed scores over the selected set, accumulated
/// in canonical (graph file) edge order so every strategy reports
/// comparable objectives.
pub fn objective_of(
    g: &ComputationGraph,
    scores: &EdgeScores,
    mode: RankMode,
    selected: &BTreeSet<String>,
) -> f64 {
    g.edge_keys()
        .iter()
        .filter(|k| selected.contains(*k))
        .filter_map(|k| scores.eligible(k))
        .map(|s| mode.value(s))
        .sum()
}

/// Eligible edges ranked by `rank(score)` descending, edge key ascending.
fn ranked(g: &ComputationGraph, scores: &EdgeScores, rank: impl Fn(f64) -> f64) -> Vec<(String, f64)> {
    let mut entries: Vec<(String, f64)> = g
        .edge_keys()
        .iter()
        .filter_map(|k| scores.eligible(k).map(|s| (k.clone(), rank(s))))
        .collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    entries
}

const EMPTY_AFTER_PRUNE: &str =
    "budget too small to contain any source-to-target path; selection empty after pruning";

fn finish(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
    strategy: Strategy,
    picked: BTreeSet<String>,
    prune: bool,
) -> CircuitSelection {
    let mut warnings = Vec::new();
    let selected = if prune {
        let pruned = g.prune_to_connected(&picked);
        if pruned.is_empty() && !picked.is_empty() {
            warnings.push(EMPTY_AFTER_PRUNE.to_string());
        }
        pruned
    } else {
        picked
    };
    let objective_value = objective_of(g, scores, cfg.rank_mode, &selected);
    CircuitSelection {
        graph_ref: scores.graph_ref.clone(),
        strategy,
        budget_k: cfg.budget_k,
        selected_edges: selected,
        objective_value,
        warnings,
    }
}

/// The k highest-ranked eligible edges under the configured rank mode.
pub fn select_topk(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
) -> Result<CircuitSelection, SelectError> {
    cfg.check()?;
    let picked: BTreeSet<String> = ranked(g, scores, |s| cfg.rank_mode.value(s))
        .into_iter()
        .take(cfg.budget_k)
        .map(|(k, _)| k)
        .collect();
    Ok(finish(g, scores, cfg, Strategy::Topk, picked, cfg.prune_after))
}

/// Two-phase selection: ceil(PNR * k) top positive edges by signed score,
/// then the remaining budget from the rest by absolute score. A phase-1
/// shortfall (fewer positive edges than the quota) rolls into phase 2.
pub fn select_pnr(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
) -> Result<CircuitSelection, SelectError> {
    cfg.check()?;
    let pnr = cfg.pnr.ok_or(SelectError::PnrMissing)?;
    let k = cfg.budget_k;
    let quota = ((pnr * k as f64).ceil() as usize).min(k);

    let positives: Vec<(String, f64)> = ranked(g, scores, |s| s)
        .into_iter()
        .filter(|&(_, s)| s > 0.0)
        .collect();
    let phase1: BTreeSet<String> =
        positives.into_iter().take(quota).map(|(key, _)| key).collect();

    // Phase 2 fills the rest of the budget (including any phase-1
    // shortfall) by absolute score.
    let mut picked = phase1.clone();
    for (key, _) in ranked(g, scores, |s| s.abs()) {
        if picked.len() >= k {
            break;
        }
        if !phase1.contains(&key) {
            picked.insert(key);
        }
    }
    Ok(finish(g, scores, cfg, Strategy::Pnr, picked, cfg.prune_after))
}

/// Candidate edge in the greedy frontier. Max-heap order: rank
/// descending, then edge key ascending.
struct Candidate {
    rank: f64,
    edge: usize,
    key: String,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank.total_cmp(&other.rank).then_with(|| other.key.cmp(&self.key))
    }
}

/// Backward pass from the target: repeatedly admit the highest-ranked
/// eligible edge whose head is already connected to the target through
/// admitted edges, until the budget is exhausted. The result is always
/// pruned to its source-to-target connected core; an empty core sets a
/// warning instead of failing.
pub fn select_greedy(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
) -> Result<CircuitSelection, SelectError> {
    cfg.check()?;
    let n = g.nodes().len();
    let m = g.edges().len();
    let mut admissible = vec![false; n];
    let mut in_heap = vec![false; m];
    let mut selected = vec![false; m];
    let mut heap: BinaryHeap<Candidate> = BinaryHeap::new();

    let mut admit_node = |v: usize,
                          admissible: &mut Vec<bool>,
                          in_heap: &mut Vec<bool>,
                          heap: &mut BinaryHeap<Candidate>| {
        if admissible[v] {
            return;
        }
        admissible[v] = true;
        for &e in g.in_edge_ids(v) {
            if in_heap[e] {
                continue;
            }
            let key = &g.edge_keys()[e];
            if let Some(score) = scores.eligible(key) {
                in_heap[e] = true;
                heap.push(Candidate { rank: cfg.rank_mode.value(score), edge: e, key: key.clone() });
            }
        }
    };

    admit_node(g.target_pos(), &mut admissible, &mut in_heap, &mut heap);

    let mut count = 0;
    let mut picked = BTreeSet::new();
    while count < cfg.budget_k {
        let Some(cand) = heap.pop() else { break };
        if selected[cand.edge] {
            continue;
        }
        selected[cand.edge] = true;
        picked.insert(cand.key);
        count += 1;
        let (tail, _) = g.edge_endpoints(cand.edge);
        admit_node(tail, &mut admissible, &mut in_heap, &mut heap);
    }

    let mut result = finish(g, scores, cfg, Strategy::Greedy, picked, true);
    if result.selected_edges.is_empty() && result.warnings.is_empty() {
        result.warnings.push(EMPTY_AFTER_PRUNE.to_string());
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Edge, Node};
    use crate::scoring::Provenance;
    use std::collections::BTreeMap;

    fn scores_for(g: &ComputationGraph, values: &[(&str, f64)]) -> EdgeScores {
        let map: BTreeMap<String, f64> =
            values.iter().map(|(k, v)| (k.to_string(), *v)).collect();
        for key in g.edge_keys() {
            assert!(map.contains_key(key), "test scores missing {key}");
        }
        EdgeScores::from_values("test", &map, Provenance::SingleRun)
    }

    fn parallel_graph(qualifiers: &[&str]) -> ComputationGraph {
        ComputationGraph::from_parts(
            vec![Node::new("s", 0), Node::new("t", 1)],
            qualifiers.iter().map(|q| Edge::new("s", "t", *q)).collect(),
            "s",
            "t",
        )
        .unwrap()
    }

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
            vec![Node::new("s", 0), Node::new("a", 1), Node::new("b", 1), Node::new("t", 2)],
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

    fn set(keys: &[&str]) -> BTreeSet<String> {
        keys.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn topk_zero_budget_is_empty() {
        let g = parallel_graph(&["e1", "e2"]);
        let scores = scores_for(&g, &[("s|t|e1", 5.0), ("s|t|e2", 3.0)]);
        let mut cfg = SelectionConfig::new(0, RankMode::Signed);
        cfg.prune_after = false;
        let c = select_topk(&g, &scores, &cfg).unwrap();
        assert!(c.selected_edges.is_empty());
        assert_eq!(c.objective_value, 0.0);
    }

    #[test]
    fn topk_absolute_vs_signed() {
        let g = parallel_graph(&["e1", "e2", "e3"]);
        let scores =
            scores_for(&g, &[("s|t|e1", 5.0), ("s|t|e2", -7.0), ("s|t|e3", 3.0)]);
        let mut cfg = SelectionConfig::new(2, RankMode::Absolute);
        cfg.prune_after = false;

        let c = select_topk(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e1", "s|t|e2"]));

        cfg.rank_mode = RankMode::Signed;
        let c = select_topk(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e1", "s|t|e3"]));
    }

    #[test]
    fn topk_skips_excluded_edges() {
        let g = parallel_graph(&["e1", "e2"]);
        let mut scores = scores_for(&g, &[("s|t|e1", 5.0), ("s|t|e2", 3.0)]);
        scores.edges.get_mut("s|t|e1").unwrap().excluded = true;
        let mut cfg = SelectionConfig::new(1, RankMode::Signed);
        cfg.prune_after = false;
        let c = select_topk(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e2"]));
    }

    #[test]
    fn pnr_two_phase_worked_example() {
        let g = parallel_graph(&["e1", "e2", "e3", "e4"]);
        let scores = scores_for(
            &g,
            &[("s|t|e1", 5.0), ("s|t|e2", 3.0), ("s|t|e3", -4.0), ("s|t|e4", 1.0)],
        );
        // ceil(0.34 * 3) = 2 positives {e1, e2}; one more by absolute -> e3.
        let mut cfg = SelectionConfig::new(3, RankMode::Absolute).with_pnr(0.34);
        cfg.prune_after = false;
        let c = select_pnr(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e1", "s|t|e2", "s|t|e3"]));
    }

    #[test]
    fn pnr_zero_matches_absolute_topk() {
        let g = parallel_graph(&["e1", "e2", "e3", "e4"]);
        let scores = scores_for(
            &g,
            &[("s|t|e1", 2.0), ("s|t|e2", -3.0), ("s|t|e3", 1.0), ("s|t|e4", -0.5)],
        );
        let mut cfg = SelectionConfig::new(2, RankMode::Absolute).with_pnr(0.0);
        cfg.prune_after = false;
        let via_pnr = select_pnr(&g, &scores, &cfg).unwrap();
        let via_topk = select_topk(&g, &scores, &cfg).unwrap();
        assert_eq!(via_pnr.selected_edges, via_topk.selected_edges);
    }

    #[test]
    fn pnr_one_matches_signed_positive_topk() {
        let g = parallel_graph(&["e1", "e2", "e3", "e4"]);
        let scores = scores_for(
            &g,
            &[("s|t|e1", 2.0), ("s|t|e2", -3.0), ("s|t|e3", 1.0), ("s|t|e4", 0.5)],
        );
        let mut cfg = SelectionConfig::new(2, RankMode::Absolute).with_pnr(1.0);
        cfg.prune_after = false;
        let c = select_pnr(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e1", "s|t|e3"]));
    }

    #[test]
    fn pnr_shortfall_rolls_into_phase_two() {
        // Only one positive edge; PNR = 1 still fills the budget.
        let g = parallel_graph(&["e1", "e2", "e3"]);
        let scores =
            scores_for(&g, &[("s|t|e1", 2.0), ("s|t|e2", -3.0), ("s|t|e3", -1.0)]);
        let mut cfg = SelectionConfig::new(2, RankMode::Absolute).with_pnr(1.0);
        cfg.prune_after = false;
        let c = select_pnr(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|t|e1", "s|t|e2"]));
    }

    #[test]
    fn pnr_requires_ratio() {
        let g = parallel_graph(&["e1"]);
        let scores = scores_for(&g, &[("s|t|e1", 1.0)]);
        let cfg = SelectionConfig::new(1, RankMode::Absolute);
        assert!(matches!(select_pnr(&g, &scores, &cfg), Err(SelectError::PnrMissing)));
        let bad = SelectionConfig::new(1, RankMode::Absolute).with_pnr(1.5);
        assert!(matches!(select_pnr(&g, &scores, &bad), Err(SelectError::PnrOutOfRange(_))));
    }

    #[test]
    fn greedy_chain_takes_the_only_path() {
        let g = chain();
        let scores = scores_for(&g, &[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        let c = select_greedy(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|a|", "a|t|"]));
        assert!(c.warnings.is_empty());
    }

    #[test]
    fn greedy_diamond_follows_the_strong_branch() {
        let g = diamond();
        let scores = scores_for(
            &g,
            &[("s|a|", 5.0), ("a|t|", 5.0), ("s|b|", 1.0), ("b|t|", 1.0)],
        );
        let cfg = SelectionConfig::new(2, RankMode::Signed);
        let c = select_greedy(&g, &scores, &cfg).unwrap();
        assert_eq!(c.selected_edges, set(&["s|a|", "a|t|"]));
        assert_eq!(c.objective_value, 10.0);
    }

    #[test]
    fn greedy_budget_below_path_length_warns() {
        let g = chain();
        let scores = scores_for(&g, &[("s|a|", 1.0), ("a|t|", 1.0)]);
        let cfg = SelectionConfig::new(1, RankMode::Signed);
        let c = select_greedy(&g, &scores, &cfg).unwrap();
        assert!(c.selected_edges.is_empty());
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn selection_is_deterministic_on_ties() {
        let g = parallel_graph(&["a", "b", "c"]);
        let scores =
            scores_for(&g, &[("s|t|a", 1.0), ("s|t|b", 1.0), ("s|t|c", 1.0)]);
        let mut cfg = SelectionConfig::new(2, RankMode::Signed);
        cfg.prune_after = false;
        let c = select_topk(&g, &scores, &cfg).unwrap();
        // Ties broken by ascending edge key.
        assert_eq!(c.selected_edges, set(&["s|t|a", "s|t|b"]));
    }
}
