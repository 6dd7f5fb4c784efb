//! Depth-first branch-and-bound over the edge indicators.
//!
//! Node indicators never need their own branches: any edge assignment
//! forces `y` on the endpoints of selected edges, and fixing every other
//! interior `y` to zero is always the feasible choice. The search
//! therefore branches on edges only — largest |coefficient| first, edge
//! key as tie-break, the improving side explored first — and checks the
//! degree and PNR rows directly on each completed assignment.
//!
//! The upper bound for a partial assignment is the running score of the
//! selected edges plus the largest non-negative undecided coefficients
//! that still fit in the budget; subtrees are pruned only when the bound
//! (padded by a small relative slack against float reordering) cannot
//! beat the incumbent, so the returned objective is exactly the maximum
//! of the canonical objective over all feasible assignments.

use std::time::Instant;

use super::{IlpError, IlpModel, IlpSolution, SolveLimits, SolveStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Assign {
    Undecided,
    Zero,
    One,
}

struct Search<'a> {
    model: &'a IlpModel,
    limits: SolveLimits,
    start: Instant,
    /// Branch order: |coef| descending, edge key ascending.
    order: Vec<usize>,
    /// Non-negative coefficients, descending, for the budget bound.
    nonneg_desc: Vec<usize>,
    assign: Vec<Assign>,
    in_sel: Vec<u32>,
    out_sel: Vec<u32>,
    selected_count: usize,
    pos_selected: usize,
    pos_zeroed: usize,
    total_pos: usize,
    sum_selected: f64,
    pnr_rhs: Option<f64>,
    best: Option<(f64, Vec<bool>)>,
    explored: u64,
    hit_limit: bool,
}

impl<'a> Search<'a> {
    fn new(model: &'a IlpModel, limits: SolveLimits) -> Self {
        let m = model.edges.len();
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| {
            model.edges[b]
                .coef
                .abs()
                .total_cmp(&model.edges[a].coef.abs())
                .then_with(|| model.edges[a].key.cmp(&model.edges[b].key))
        });
        let mut nonneg_desc: Vec<usize> = (0..m).filter(|&e| model.edges[e].coef >= 0.0).collect();
        nonneg_desc.sort_by(|&a, &b| {
            model.edges[b].coef.total_cmp(&model.edges[a].coef).then(a.cmp(&b))
        });
        Self {
            model,
            limits,
            start: Instant::now(),
            order,
            nonneg_desc,
            assign: vec![Assign::Undecided; m],
            in_sel: vec![0; model.node_keys.len()],
            out_sel: vec![0; model.node_keys.len()],
            selected_count: 0,
            pos_selected: 0,
            pos_zeroed: 0,
            total_pos: model.edges.iter().filter(|e| e.positive).count(),
            sum_selected: 0.0,
            pnr_rhs: model.pnr.map(|p| p * model.budget_k as f64),
            best: None,
            explored: 0,
            hit_limit: false,
        }
    }

    fn set(&mut self, e: usize, value: Assign) {
        debug_assert_eq!(self.assign[e], Assign::Undecided);
        self.assign[e] = value;
        let edge = &self.model.edges[e];
        match value {
            Assign::One => {
                self.selected_count += 1;
                self.sum_selected += edge.coef;
                self.in_sel[edge.head] += 1;
                self.out_sel[edge.tail] += 1;
                if edge.positive {
                    self.pos_selected += 1;
                }
            }
            Assign::Zero => {
                if edge.positive {
                    self.pos_zeroed += 1;
                }
            }
            Assign::Undecided => unreachable!(),
        }
    }

    fn unset(&mut self, e: usize, value: Assign) {
        let edge = &self.model.edges[e];
        match value {
            Assign::One => {
                self.selected_count -= 1;
                self.sum_selected -= edge.coef;
                self.in_sel[edge.head] -= 1;
                self.out_sel[edge.tail] -= 1;
                if edge.positive {
                    self.pos_selected -= 1;
                }
            }
            Assign::Zero => {
                if edge.positive {
                    self.pos_zeroed -= 1;
                }
            }
            Assign::Undecided => unreachable!(),
        }
        self.assign[e] = Assign::Undecided;
    }

    fn node_used(&self, v: usize) -> bool {
        v == self.model.source || v == self.model.target || self.in_sel[v] > 0 || self.out_sel[v] > 0
    }

    /// Can the current partial assignment still be completed? Checks that
    /// every degree obligation has a selectable edge left, that fixing the
    /// remaining deficits fits in the budget, and that enough positive
    /// edges remain for the PNR floor.
    fn completion_possible(&self) -> bool {
        let mut in_deficit = 0usize;
        let mut out_deficit = 0usize;
        for v in 0..self.model.node_keys.len() {
            if !self.node_used(v) {
                continue;
            }
            if v != self.model.source && self.in_sel[v] == 0 {
                if !self.model.in_edges[v].iter().any(|&e| self.assign[e] != Assign::Zero) {
                    return false;
                }
                in_deficit += 1;
            }
            if v != self.model.target && self.out_sel[v] == 0 {
                if !self.model.out_edges[v].iter().any(|&e| self.assign[e] != Assign::Zero) {
                    return false;
                }
                out_deficit += 1;
            }
        }
        if self.selected_count + in_deficit.max(out_deficit) > self.model.budget_k {
            return false;
        }
        if let Some(rhs) = self.pnr_rhs {
            let reachable_pos = self.total_pos - self.pos_zeroed;
            if (reachable_pos as f64) < rhs {
                return false;
            }
        }
        true
    }

    /// Running score plus the best non-negative undecided coefficients
    /// that fit in the remaining budget.
    fn upper_bound(&self) -> f64 {
        let mut ub = self.sum_selected;
        let mut room = self.model.budget_k - self.selected_count;
        for &e in &self.nonneg_desc {
            if room == 0 {
                break;
            }
            if self.assign[e] == Assign::Undecided {
                ub += self.model.edges[e].coef;
                room -= 1;
            }
        }
        ub
    }

    /// Treat every undecided edge as unselected and score the leaf.
    fn evaluate_leaf(&mut self) {
        for v in 0..self.model.node_keys.len() {
            if !self.node_used(v) {
                continue;
            }
            if v != self.model.source && self.in_sel[v] == 0 {
                return;
            }
            if v != self.model.target && self.out_sel[v] == 0 {
                return;
            }
        }
        if let Some(rhs) = self.pnr_rhs {
            if (self.pos_selected as f64) < rhs {
                return;
            }
        }
        let x: Vec<bool> = self.assign.iter().map(|&a| a == Assign::One).collect();
        let obj = self.model.objective(&x);
        if self.best.as_ref().is_none_or(|(b, _)| obj > *b) {
            self.best = Some((obj, x));
        }
    }

    fn dfs(&mut self, depth: usize) {
        if self.hit_limit {
            return;
        }
        if self.explored >= self.limits.max_nodes
            || (self.explored % 1024 == 0
                && self.start.elapsed().as_secs_f64() > self.limits.max_seconds)
        {
            self.hit_limit = true;
            return;
        }
        self.explored += 1;

        if self.selected_count == self.model.budget_k || depth == self.order.len() {
            self.evaluate_leaf();
            return;
        }
        if !self.completion_possible() {
            return;
        }
        let ub = self.upper_bound();
        if let Some((best_obj, _)) = &self.best {
            // Conservative prune: the slack absorbs summation-order noise
            // so a leaf that beats the incumbent by an ulp is never cut.
            if ub + 1e-9 * (1.0 + ub.abs()) <= *best_obj {
                return;
            }
        }

        let e = self.order[depth];
        let branches = if self.model.edges[e].coef > 0.0 {
            [Assign::One, Assign::Zero]
        } else {
            [Assign::Zero, Assign::One]
        };
        for value in branches {
            self.set(e, value);
            self.dfs(depth + 1);
            self.unset(e, value);
        }
    }
}

/// Solve the model to proven optimality, or report infeasibility, or —
/// when the node/time limits trip first — return the best incumbent with
/// [`SolveStatus::BudgetExhausted`]. Optimal and incumbent solutions are
/// re-audited against the raw constraint rows before being returned.
pub fn solve_exact(model: &IlpModel, limits: SolveLimits) -> Result<IlpSolution, IlpError> {
    let mut search = Search::new(model, limits);
    search.dfs(0);

    let status = if search.hit_limit {
        SolveStatus::BudgetExhausted
    } else if search.best.is_some() {
        SolveStatus::Optimal
    } else {
        SolveStatus::Infeasible
    };

    let explored = search.explored;
    let (x, have_incumbent) = match &search.best {
        Some((_, x)) => (x.clone(), true),
        None => (vec![false; model.edges.len()], false),
    };

    let mut solution = model.solution_from_flags(status, &x, explored);
    if have_incumbent {
        model.audit(&solution.selected_edges)?;
        let off_path = model.off_path_edges(&x);
        if !off_path.is_empty() {
            solution.warnings.push(format!(
                "selected edges off every source-to-target path: {}",
                off_path.join(", ")
            ));
        }
    } else if status == SolveStatus::BudgetExhausted {
        solution
            .warnings
            .push("limits exhausted before any feasible incumbent was found".to_string());
    }
    Ok(solution)
}
