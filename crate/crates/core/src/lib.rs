//! Circuit selection over layered computation graphs.
//!
//! Given a multi-edge DAG with a unique source and target and a set of
//! per-edge attribution scores, this crate builds connected subgraphs
//! ("circuits") under an edge budget. It provides:
//!
//! - [`graph`]: the graph data model, structural validation, and
//!   connectivity pruning shared by every selection strategy.
//! - [`scoring`]: score-matrix ingestion, bootstrap resampling,
//!   confidence-interval filtering, and sign-instability statistics.
//! - [`selection`]: heuristic strategies — top-k, the greedy backward
//!   pass, and two-phase positive-negative-ratio selection.
//! - [`ilp`]: an exact 0/1 integer program over edge and node
//!   indicators, solved by an in-repo branch-and-bound, plus a
//!   brute-force oracle for small instances.
//! - [`metrics`]: CPR/CMD area metrics over faithfulness curves and
//!   budget-grid helpers.
//! - [`synth`]: synthetic graph + score generators with planted
//!   circuits, used by tests and demos.

pub mod graph;
pub mod ilp;
pub mod metrics;
pub mod scoring;
pub mod selection;
pub mod synth;

pub use graph::{ComputationGraph, Edge, GraphError, Node, ValidationReport};
pub use ilp::{IlpError, IlpModel, IlpSolution, SolveLimits, SolveStatus};
pub use metrics::{FaithfulnessCurve, MetricError, SizeGrid};
pub use scoring::{
    BootstrapSummary, ColumnKind, EdgeScore, EdgeScores, Provenance, ScoreError, ScoreMatrix,
};
pub use selection::{CircuitSelection, RankMode, SelectError, SelectionConfig, Strategy};
pub use synth::{SynthError, SynthOutput, SynthSpec};
