//! Score ingestion, bootstrap resampling, confidence-interval filtering,
//! and sign-instability statistics.
//!
//! A [`ScoreMatrix`] holds one row of N raw attribution scores per edge.
//! Columns are either dataset examples (`per_example`) or bootstrap runs
//! (`per_bootstrap_run`). Bootstrapping draws tau with-replacement
//! resamples of the example columns and averages each; the confidence
//! filter then keeps an edge only when its normal-quantile interval
//! `mu ± z * sigma / sqrt(tau)` lies strictly beyond the significance
//! threshold on the side of `mu`'s sign, with `mu` as the final score.
//!
//! Resampling uses ChaCha8 seeded from a caller-supplied `u64`, drawing N
//! independent uniform indices in `[0, N)` per run; identical seeds give
//! byte-identical output.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::ComputationGraph;

#[derive(Debug, Error)]
pub enum ScoreError {
    #[error("score matrix declares {declared} columns but edge {edge} has {actual} values")]
    ColumnMismatch { edge: String, declared: usize, actual: usize },
    #[error("score matrix must have at least one column")]
    NoColumns,
    #[error("non-finite score for edge {0}")]
    NonFinite(String),
    #[error("expected column kind {expected:?}, got {actual:?}")]
    WrongColumnKind { expected: ColumnKind, actual: ColumnKind },
    #[error("tau must be at least 2 (sample std undefined), got {0}")]
    TauTooSmall(usize),
    #[error("z must be positive, got {0}")]
    NonPositiveZ(f64),
    #[error("threshold must be non-negative, got {0}")]
    NegativeThreshold(f64),
    #[error("scores missing for graph edge {0}")]
    MissingEdge(String),
    #[error("scores contain unknown edge {0}")]
    UnknownEdge(String),
    #[error("invalid score JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    PerExample,
    PerBootstrapRun,
}

/// Per-edge, per-sample raw attribution scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub graph_ref: String,
    pub column_kind: ColumnKind,
    pub columns: usize,
    /// edge_key -> N values. Sorted map so serialization is deterministic.
    pub scores: BTreeMap<String, Vec<f64>>,
}

impl ScoreMatrix {
    pub fn from_json_str(s: &str) -> Result<Self, ScoreError> {
        let m: ScoreMatrix = serde_json::from_str(s).map_err(|e| ScoreError::Json(e.to_string()))?;
        m.check()?;
        Ok(m)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("score matrix serialization cannot fail")
    }

    /// Internal consistency: every row has `columns` finite values, N >= 1.
    pub fn check(&self) -> Result<(), ScoreError> {
        if self.columns == 0 {
            return Err(ScoreError::NoColumns);
        }
        for (key, row) in &self.scores {
            if row.len() != self.columns {
                return Err(ScoreError::ColumnMismatch {
                    edge: key.clone(),
                    declared: self.columns,
                    actual: row.len(),
                });
            }
            if row.iter().any(|v| !v.is_finite()) {
                return Err(ScoreError::NonFinite(key.clone()));
            }
        }
        Ok(())
    }

    /// The matrix must cover exactly the edges of `g`.
    pub fn check_against(&self, g: &ComputationGraph) -> Result<(), ScoreError> {
        for key in g.edge_keys() {
            if !self.scores.contains_key(key) {
                return Err(ScoreError::MissingEdge(key.clone()));
            }
        }
        for key in self.scores.keys() {
            if g.edge_position(key).is_none() {
                return Err(ScoreError::UnknownEdge(key.clone()));
            }
        }
        Ok(())
    }
}

/// Per-edge bootstrap statistics and retention verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeSummary {
    pub mu: f64,
    pub sigma: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub retained: bool,
}

/// Result of [`confidence_filter`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BootstrapSummary {
    pub graph_ref: String,
    pub tau: usize,
    pub z: f64,
    pub threshold: f64,
    pub edges: BTreeMap<String, EdgeSummary>,
}

impl BootstrapSummary {
    pub fn from_json_str(s: &str) -> Result<Self, ScoreError> {
        serde_json::from_str(s).map_err(|e| ScoreError::Json(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialization cannot fail")
    }

    pub fn retained_count(&self) -> usize {
        self.edges.values().filter(|e| e.retained).count()
    }

    /// Retained edges carry `mu` as their final score; the rest carry 0
    /// and the excluded flag.
    pub fn to_edge_scores(&self) -> EdgeScores {
        let edges = self
            .edges
            .iter()
            .map(|(key, s)| {
                let score = if s.retained { s.mu } else { 0.0 };
                (key.clone(), EdgeScore { score, excluded: !s.retained })
            })
            .collect();
        EdgeScores {
            graph_ref: self.graph_ref.clone(),
            provenance: Provenance::BootstrapMean,
            edges,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    SingleRun,
    BootstrapMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub score: f64,
    pub excluded: bool,
}

/// One final score per edge; excluded edges keep a zero placeholder so
/// downstream formats always see a value for every edge.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeScores {
    pub graph_ref: String,
    pub provenance: Provenance,
    pub edges: BTreeMap<String, EdgeScore>,
}

impl EdgeScores {
    pub fn from_values(graph_ref: &str, values: &BTreeMap<String, f64>, provenance: Provenance) -> Self {
        let edges = values
            .iter()
            .map(|(k, &v)| (k.clone(), EdgeScore { score: v, excluded: false }))
            .collect();
        Self { graph_ref: graph_ref.to_string(), provenance, edges }
    }

    /// Score of an edge if it is eligible for selection.
    pub fn eligible(&self, key: &str) -> Option<f64> {
        self.edges.get(key).and_then(|e| (!e.excluded).then_some(e.score))
    }

    pub fn get(&self, key: &str) -> Option<&EdgeScore> {
        self.edges.get(key)
    }
}

/// Mean of `values`, summed in index order.
fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n-1 denominator).
fn sample_std(values: &[f64], mu: f64) -> f64 {
    let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Draw `tau` with-replacement resamples of the example columns; run j's
/// value for an edge is the mean of that edge's scores over run j's
/// resampled example indices. All edges share the same index draws per
/// run, mirroring dataset-level resampling.
pub fn bootstrap_resample(m: &ScoreMatrix, tau: usize, seed: u64) -> Result<ScoreMatrix, ScoreError> {
    m.check()?;
    if m.column_kind != ColumnKind::PerExample {
        return Err(ScoreError::WrongColumnKind {
            expected: ColumnKind::PerExample,
            actual: m.column_kind,
        });
    }
    if tau < 2 {
        return Err(ScoreError::TauTooSmall(tau));
    }
    let n = m.columns;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<usize>> = (0..tau)
        .map(|_| (0..n).map(|_| rng.random_range(0..n)).collect())
        .collect();

    let scores = m
        .scores
        .iter()
        .map(|(key, row)| {
            let runs: Vec<f64> = draws
                .iter()
                .map(|idx| idx.iter().map(|&i| row[i]).sum::<f64>() / n as f64)
                .collect();
            (key.clone(), runs)
        })
        .collect();

    Ok(ScoreMatrix {
        graph_ref: m.graph_ref.clone(),
        column_kind: ColumnKind::PerBootstrapRun,
        columns: tau,
        scores,
    })
}

/// Compute per-edge mean, sample std, and the interval
/// `mu ± z * sigma / sqrt(tau)`; retain an edge iff the interval lies
/// strictly beyond `threshold` on the side of `mu`'s sign.
pub fn confidence_filter(m: &ScoreMatrix, z: f64, threshold: f64) -> Result<BootstrapSummary, ScoreError> {
    m.check()?;
    if m.column_kind != ColumnKind::PerBootstrapRun {
        return Err(ScoreError::WrongColumnKind {
            expected: ColumnKind::PerBootstrapRun,
            actual: m.column_kind,
        });
    }
    let tau = m.columns;
    if tau < 2 {
        return Err(ScoreError::TauTooSmall(tau));
    }
    if !(z > 0.0) {
        return Err(ScoreError::NonPositiveZ(z));
    }
    if threshold < 0.0 {
        return Err(ScoreError::NegativeThreshold(threshold));
    }

    let sqrt_tau = (tau as f64).sqrt();
    let edges = m
        .scores
        .iter()
        .map(|(key, runs)| {
            let mu = mean(runs);
            let sigma = sample_std(runs, mu);
            let ci_lo = mu - z * sigma / sqrt_tau;
            let ci_hi = mu + z * sigma / sqrt_tau;
            let retained =
                (mu > 0.0 && ci_lo > threshold) || (mu < 0.0 && ci_hi < -threshold);
            (key.clone(), EdgeSummary { mu, sigma, ci_lo, ci_hi, retained })
        })
        .collect();

    Ok(BootstrapSummary {
        graph_ref: m.graph_ref.clone(),
        tau,
        z,
        threshold,
        edges,
    })
}

/// Per-edge sign-instability flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeInstability {
    pub mean: f64,
    /// |mean| exceeds the floor, so the edge counts toward the fraction.
    pub qualifies: bool,
    /// At least one strictly positive and one strictly negative value.
    pub unstable: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstabilityReport {
    pub graph_ref: String,
    pub mu_floor: f64,
    pub columns: usize,
    pub qualifying_edges: usize,
    pub unstable_edges: usize,
    /// unstable / qualifying, 0 when nothing qualifies.
    pub fraction: f64,
    pub edges: BTreeMap<String, EdgeInstability>,
}

impl InstabilityReport {
    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

pub const DEFAULT_MU_FLOOR: f64 = 1e-6;

/// Among edges whose |mean| exceeds `mu_floor`, the fraction seeing both
/// strictly positive and strictly negative sample values.
pub fn sign_instability(m: &ScoreMatrix, mu_floor: f64) -> InstabilityReport {
    let mut qualifying = 0usize;
    let mut unstable_count = 0usize;
    let edges: BTreeMap<String, EdgeInstability> = m
        .scores
        .iter()
        .map(|(key, row)| {
            let mu = mean(row);
            let qualifies = mu.abs() > mu_floor;
            let unstable = qualifies
                && row.iter().any(|&v| v > 0.0)
                && row.iter().any(|&v| v < 0.0);
            if qualifies {
                qualifying += 1;
            }
            if unstable {
                unstable_count += 1;
            }
            (key.clone(), EdgeInstability { mean: mu, qualifies, unstable })
        })
        .collect();

    let fraction = if qualifying == 0 {
        0.0
    } else {
        unstable_count as f64 / qualifying as f64
    };

    InstabilityReport {
        graph_ref: m.graph_ref.clone(),
        mu_floor,
        columns: m.columns,
        qualifying_edges: qualifying,
        unstable_edges: unstable_count,
        fraction,
        edges,
    }
}

/// Per-edge mean across columns, with no filtering.
pub fn collapse_to_scores(m: &ScoreMatrix) -> Result<EdgeScores, ScoreError> {
    m.check()?;
    let provenance = if m.columns == 1 { Provenance::SingleRun } else { Provenance::BootstrapMean };
    let edges = m
        .scores
        .iter()
        .map(|(key, row)| (key.clone(), EdgeScore { score: mean(row), excluded: false }))
        .collect();
    Ok(EdgeScores { graph_ref: m.graph_ref.clone(), provenance, edges })
}
