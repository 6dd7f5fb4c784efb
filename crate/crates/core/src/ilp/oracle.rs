//! Exhaustive ground truth for small instances.
//!
//! Enumerates every subset of the eligible edges and checks the budget,
//! degree, and PNR conditions directly — no shared code with the model
//! audit or the branch-and-bound, so the equivalence suite compares two
//! independent routes. Ties on the objective are broken toward the
//! lexicographically smallest edge-key set.

use std::collections::BTreeSet;

use super::{IlpError, IlpSolution, SolveStatus};
use crate::graph::ComputationGraph;
use crate::scoring::EdgeScores;
use crate::selection::SelectionConfig;

/// Enumeration bound: 2^20 subsets is the most the oracle will examine.
pub const ORACLE_MAX_EDGES: usize = 20;

struct Entry {
    key: String,
    tail: usize,
    head: usize,
    coef: f64,
    positive: bool,
}

/// Enumerate all edge subsets and return the best feasible one.
pub fn brute_force_oracle(
    g: &ComputationGraph,
    scores: &EdgeScores,
    cfg: &SelectionConfig,
) -> Result<IlpSolution, IlpError> {
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
    if g.edges().len() > ORACLE_MAX_EDGES {
        return Err(IlpError::TooManyEdges { edges: g.edges().len(), max: ORACLE_MAX_EDGES });
    }

    let mut entries = Vec::new();
    for (pos, key) in g.edge_keys().iter().enumerate() {
        let entry = scores.get(key).ok_or_else(|| IlpError::MissingScore(key.clone()))?;
        if entry.excluded {
            continue;
        }
        let (tail, head) = g.edge_endpoints(pos);
        entries.push(Entry {
            key: key.clone(),
            tail,
            head,
            coef: cfg.rank_mode.value(entry.score),
            positive: entry.score > 0.0,
        });
    }

    let m = entries.len();
    let n = g.nodes().len();
    let (source, target) = (g.source_pos(), g.target_pos());
    let k = cfg.budget_k;
    let pnr_rhs = cfg.pnr.map(|p| p * k as f64);

    let mut best: Option<(f64, u64, BTreeSet<String>)> = None;
    let total_masks = 1u64 << m;
    let mut in_cnt = vec![0u32; n];
    let mut out_cnt = vec![0u32; n];

    for mask in 0..total_masks {
        if (mask.count_ones() as usize) > k {
            continue;
        }
        in_cnt.fill(0);
        out_cnt.fill(0);
        let mut positives = 0usize;
        for (i, entry) in entries.iter().enumerate() {
            if mask & (1 << i) != 0 {
                in_cnt[entry.head] += 1;
                out_cnt[entry.tail] += 1;
                if entry.positive {
                    positives += 1;
                }
            }
        }

        let mut feasible = true;
        for v in 0..n {
            let used = v == source || v == target || in_cnt[v] > 0 || out_cnt[v] > 0;
            if !used {
                continue;
            }
            if (v != source && in_cnt[v] == 0) || (v != target && out_cnt[v] == 0) {
                feasible = false;
                break;
            }
        }
        if feasible {
            if let Some(rhs) = pnr_rhs {
                feasible = positives as f64 >= rhs;
            }
        }
        if !feasible {
            continue;
        }

        let objective: f64 = entries
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask & (1 << i) != 0)
            .map(|(_, e)| e.coef)
            .sum();

        let replace = match &best {
            None => true,
            Some((best_obj, _, best_set)) => {
                objective > *best_obj
                    || (objective == *best_obj && key_set(&entries, mask) < *best_set)
            }
        };
        if replace {
            best = Some((objective, mask, key_set(&entries, mask)));
        }
    }

    let solution = match best {
        Some((objective_value, mask, selected_edges)) => {
            let mut used: BTreeSet<String> = BTreeSet::new();
            used.insert(g.source_id().to_string());
            used.insert(g.target_id().to_string());
            for (i, entry) in entries.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    used.insert(g.nodes()[entry.tail].id.clone());
                    used.insert(g.nodes()[entry.head].id.clone());
                }
            }
            IlpSolution {
                status: SolveStatus::Optimal,
                selected_edges,
                objective_value,
                nodes_used: used,
                explored_nodes: total_masks,
                warnings: Vec::new(),
            }
        }
        None => IlpSolution {
            status: SolveStatus::Infeasible,
            selected_edges: BTreeSet::new(),
            objective_value: 0.0,
            nodes_used: BTreeSet::new(),
            explored_nodes: total_masks,
            warnings: Vec::new(),
        },
    };
    Ok(solution)
}

fn key_set(entries: &[Entry], mask: u64) -> BTreeSet<String> {
    entries
        .iter()
        .enumerate()
        .filter(|&(i, _)| mask & (1 << i) != 0)
        .map(|(_, e)| e.key.clone())
        .collect()
}
