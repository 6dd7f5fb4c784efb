//! Synthetic layered graphs and score matrices with planted circuits.
//!
//! The generator builds complete-bipartite connectivity between adjacent
//! strata (one synthetic source below, one synthetic target above, `q`
//! parallel qualifiers per node pair) and plants a union of random
//! source-to-target paths. Planted edges score `1.0 + N(0, sigma)` per
//! example; non-planted edges score a half-normal magnitude
//! `|N(0, sigma)|` whose per-example sign flips negative with the given
//! probability, which manufactures sign instability at rates that follow
//! the closed form `1 - p^N - (1-p)^N`. Everything is deterministic per
//! seed.

use std::collections::BTreeMap;
use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ComputationGraph, Edge, GraphError, Node};
use crate::scoring::{ColumnKind, ScoreMatrix};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("layers must be at least 2, got {0}")]
    TooFewLayers(usize),
    #[error("nodes_per_layer must be at least 1")]
    NoNodes,
    #[error("qualifiers_per_pair must be at least 1")]
    NoQualifiers,
    #[error("planted_fraction must be in (0, 1], got {0}")]
    BadPlantedFraction(f64),
    #[error("noise_sigma must be finite and non-negative, got {0}")]
    BadNoiseSigma(f64),
    #[error("flip_probability must be in [0, 1], got {0}")]
    BadFlipProbability(f64),
    #[error("examples_n must be at least 1")]
    NoExamples,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    /// Total strata including the source and target strata.
    pub layers: usize,
    pub nodes_per_layer: usize,
    pub qualifiers_per_pair: usize,
    /// Fraction of all edges the planted circuit should cover.
    pub planted_fraction: f64,
    pub noise_sigma: f64,
    pub flip_probability: f64,
    pub examples_n: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn check(&self) -> Result<(), SynthError> {
        if self.layers < 2 {
            return Err(SynthError::TooFewLayers(self.layers));
        }
        if self.nodes_per_layer < 1 {
            return Err(SynthError::NoNodes);
        }
        if self.qualifiers_per_pair < 1 {
            return Err(SynthError::NoQualifiers);
        }
        if !(self.planted_fraction > 0.0 && self.planted_fraction <= 1.0) {
            return Err(SynthError::BadPlantedFraction(self.planted_fraction));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(SynthError::BadNoiseSigma(self.noise_sigma));
        }
        if !(0.0..=1.0).contains(&self.flip_probability) {
            return Err(SynthError::BadFlipProbability(self.flip_probability));
        }
        if self.examples_n < 1 {
            return Err(SynthError::NoExamples);
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub graph: ComputationGraph,
    pub scores: ScoreMatrix,
    pub planted: BTreeSet<String>,
}

/// Node ids of one stratum, in canonical order.
fn stratum_ids(spec: &SynthSpec, layer: usize) -> Vec<String> {
    if layer == 0 {
        vec!["src".to_string()]
    } else if layer == spec.layers - 1 {
        vec!["tgt".to_string()]
    } else {
        (0..spec.nodes_per_layer).map(|i| format!("n{layer}_{i}")).collect()
    }
}

/// Generate a layered graph, a per-example score matrix, and the planted
/// edge set. Deterministic per seed.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut nodes = Vec::new();
    for layer in 0..spec.layers {
        for id in stratum_ids(spec, layer) {
            nodes.push(Node::new(id, layer as u32));
        }
    }

    let mut edges = Vec::new();
    for layer in 0..spec.layers - 1 {
        for tail in stratum_ids(spec, layer) {
            for head in stratum_ids(spec, layer + 1) {
                for q in 0..spec.qualifiers_per_pair {
                    edges.push(Edge::new(tail.clone(), head.clone(), format!("q{q}")));
                }
            }
        }
    }
    let graph = ComputationGraph::from_parts(nodes, edges, "src", "tgt")?;

    let total_edges = graph.edges().len();
    let planted = if spec.planted_fraction == 1.0 {
        graph.edge_keys().iter().cloned().collect()
    } else {
        let target = (spec.planted_fraction * total_edges as f64).ceil() as usize;
        let mut planted: BTreeSet<String> = BTreeSet::new();
        let mut attempts = 0;
        while planted.len() < target && attempts < 100_000 {
            attempts += 1;
            let mut tail = "src".to_string();
            for layer in 1..spec.layers {
                let ids = stratum_ids(spec, layer);
                let head = ids[rng.random_range(0..ids.len())].clone();
                let q = rng.random_range(0..spec.qualifiers_per_pair);
                planted.insert(Edge::new(tail.clone(), head.clone(), format!("q{q}")).key());
                tail = head;
            }
        }
        planted
    };

    let noise = Normal::new(0.0, spec.noise_sigma)
        .map_err(|_| SynthError::BadNoiseSigma(spec.noise_sigma))?;
    let mut rows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for key in graph.edge_keys() {
        let is_planted = planted.contains(key);
        let row: Vec<f64> = (0..spec.examples_n)
            .map(|_| {
                if is_planted {
                    1.0 + noise.sample(&mut rng)
                } else {
                    let magnitude = noise.sample(&mut rng).abs();
                    let flip = rng.random::<f64>() < spec.flip_probability;
                    if magnitude == 0.0 {
                        0.0
                    } else if flip {
                        -magnitude
                    } else {
                        magnitude
                    }
                }
            })
            .collect();
        rows.insert(key.clone(), row);
    }

    let scores = ScoreMatrix {
        graph_ref: format!("synth-seed{}", spec.seed),
        column_kind: ColumnKind::PerExample,
        columns: spec.examples_n,
        scores: rows,
    };

    Ok(SynthOutput { graph, scores, planted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::sign_instability;

    fn base_spec() -> SynthSpec {
        SynthSpec {
            layers: 4,
            nodes_per_layer: 3,
            qualifiers_per_pair: 2,
            planted_fraction: 0.25,
            noise_sigma: 0.1,
            flip_probability: 0.5,
            examples_n: 8,
            seed: 17,
        }
    }

    #[test]
    fn generation_is_deterministic_per_seed() {
        let spec = base_spec();
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.graph.to_json_string(), b.graph.to_json_string());
        assert_eq!(a.scores.to_json_string(), b.scores.to_json_string());
        assert_eq!(a.planted, b.planted);

        let other = generate(&SynthSpec { seed: 18, ..spec }).unwrap();
        assert_ne!(a.scores.to_json_string(), other.scores.to_json_string());
    }

    #[test]
    fn generated_graph_is_valid_and_scores_cover_it() {
        let out = generate(&base_spec()).unwrap();
        assert!(out.graph.validate().is_valid());
        out.scores.check().unwrap();
        out.scores.check_against(&out.graph).unwrap();
    }

    #[test]
    fn planted_set_survives_pruning_unchanged() {
        let out = generate(&base_spec()).unwrap();
        assert!(!out.planted.is_empty());
        assert_eq!(out.graph.prune_to_connected(&out.planted), out.planted);
    }

    #[test]
    fn zero_noise_makes_planted_exactly_the_positive_edges() {
        let spec = SynthSpec { noise_sigma: 0.0, flip_probability: 0.0, ..base_spec() };
        let out = generate(&spec).unwrap();
        for (key, row) in &out.scores.scores {
            if out.planted.contains(key) {
                assert!(row.iter().all(|&v| v == 1.0), "planted {key}");
            } else {
                assert!(row.iter().all(|&v| v == 0.0), "non-planted {key}");
            }
        }
    }

    #[test]
    fn full_fraction_plants_every_edge() {
        let spec = SynthSpec { planted_fraction: 1.0, ..base_spec() };
        let out = generate(&spec).unwrap();
        assert_eq!(out.planted.len(), out.graph.edges().len());
    }

    #[test]
    fn flip_model_matches_closed_form_instability() {
        // Non-planted edge shows both signs unless all N flips agree:
        // P = 1 - p^N - (1-p)^N.
        let spec = SynthSpec {
            layers: 4,
            nodes_per_layer: 4,
            qualifiers_per_pair: 2,
            planted_fraction: 0.1,
            noise_sigma: 1.0,
            flip_probability: 0.5,
            examples_n: 6,
            seed: 23,
        };
        let out = generate(&spec).unwrap();
        let report = sign_instability(&out.scores, 1e-6);

        let non_planted: Vec<&str> = out
            .scores
            .scores
            .keys()
            .filter(|k| !out.planted.contains(*k))
            .map(String::as_str)
            .collect();
        let qualifying: Vec<&str> = non_planted
            .iter()
            .filter(|k| report.edges[**k].qualifies)
            .copied()
            .collect();
        assert!(qualifying.len() >= 30, "want enough non-planted edges");
        let unstable =
            qualifying.iter().filter(|k| report.edges[**k].unstable).count();
        let fraction = unstable as f64 / qualifying.len() as f64;

        let p: f64 = spec.flip_probability;
        let n = spec.examples_n as i32;
        let expected = 1.0 - p.powi(n) - (1.0 - p).powi(n);
        assert!(
            (fraction - expected).abs() < 0.1,
            "fraction {fraction} vs expected {expected}"
        );
    }

    #[test]
    fn spec_bounds_are_enforced() {
        let spec = SynthSpec { layers: 1, ..base_spec() };
        assert!(matches!(generate(&spec), Err(SynthError::TooFewLayers(1))));
        let spec = SynthSpec { planted_fraction: 0.0, ..base_spec() };
        assert!(matches!(generate(&spec), Err(SynthError::BadPlantedFraction(_))));
        let spec = SynthSpec { flip_probability: 1.5, ..base_spec() };
        assert!(matches!(generate(&spec), Err(SynthError::BadFlipProbability(_))));
    }
}
