//! Area metrics over faithfulness curves and budget-grid helpers.
//!
//! Curves are piecewise linear in the circuit-size fraction. `cpr` is the
//! normalized area under the curve (higher is better); `cmd` is the
//! normalized area between the curve and the optimal value 1 (lower is
//! better), with segments split where they cross 1 so curves above the
//! optimum also accumulate distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("curve needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("curve fractions must be strictly increasing at index {0}")]
    NotIncreasing(usize),
    #[error("curve contains a non-finite value at index {0}")]
    NonFinite(usize),
    #[error("curve fraction {0} outside [0, 1]")]
    FractionOutOfRange(f64),
    #[error("curve spans zero width")]
    ZeroSpan,
    #[error("size grid fraction {0} outside (0, 1]")]
    BadGridFraction(f64),
    #[error("invalid curve JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawCurve {
    points: Vec<(f64, f64)>,
}

/// Piecewise-linear faithfulness as a function of circuit-size fraction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "RawCurve", into = "RawCurve")]
pub struct FaithfulnessCurve {
    points: Vec<(f64, f64)>,
}

impl TryFrom<RawCurve> for FaithfulnessCurve {
    type Error = MetricError;
    fn try_from(raw: RawCurve) -> Result<Self, MetricError> {
        FaithfulnessCurve::new(raw.points)
    }
}

impl From<FaithfulnessCurve> for RawCurve {
    fn from(curve: FaithfulnessCurve) -> Self {
        RawCurve { points: curve.points }
    }
}

impl FaithfulnessCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, MetricError> {
        if points.len() < 2 {
            return Err(MetricError::TooFewPoints(points.len()));
        }
        for (i, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(MetricError::NonFinite(i));
            }
            if !(0.0..=1.0).contains(&x) {
                return Err(MetricError::FractionOutOfRange(x));
            }
            if i > 0 && x <= points[i - 1].0 {
                return Err(MetricError::NotIncreasing(i));
            }
        }
        let span = points[points.len() - 1].0 - points[0].0;
        if span <= 0.0 {
            return Err(MetricError::ZeroSpan);
        }
        Ok(Self { points })
    }

    pub fn from_json_str(s: &str) -> Result<Self, MetricError> {
        serde_json::from_str(s).map_err(|e| MetricError::Json(e.to_string()))
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("curve serialization cannot fail")
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn span(&self) -> f64 {
        self.points[self.points.len() - 1].0 - self.points[0].0
    }

    /// Normalized trapezoidal area under the curve; a constant curve f
    /// returns f.
    pub fn cpr(&self) -> f64 {
        let mut area = 0.0;
        for pair in self.points.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            area += (x1 - x0) * (y0 + y1) / 2.0;
        }
        area / self.span()
    }

    /// Normalized trapezoidal integral of |f - 1|, splitting segments at
    /// crossings of 1.
    pub fn cmd(&self) -> f64 {
        let mut area = 0.0;
        for pair in self.points.windows(2) {
            let (x0, y0) = pair[0];
            let (x1, y1) = pair[1];
            let (d0, d1) = (y0 - 1.0, y1 - 1.0);
            if d0 * d1 < 0.0 {
                // Crossing: two triangles around f = 1.
                let xc = x0 + (x1 - x0) * d0 / (d0 - d1);
                area += d0.abs() * (xc - x0) / 2.0;
                area += d1.abs() * (x1 - xc) / 2.0;
            } else {
                area += (x1 - x0) * (d0.abs() + d1.abs()) / 2.0;
            }
        }
        area / self.span()
    }
}

/// Fractions of the total edge count at which circuits are evaluated.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SizeGrid {
    pub fractions: Vec<f64>,
}

impl SizeGrid {
    pub fn new(fractions: Vec<f64>) -> Result<Self, MetricError> {
        for &f in &fractions {
            if !(f.is_finite() && f > 0.0 && f <= 1.0) {
                return Err(MetricError::BadGridFraction(f));
            }
        }
        Ok(Self { fractions })
    }

    /// `count` log-spaced fractions from `lo` to `hi` inclusive.
    pub fn log_spaced(count: usize, lo: f64, hi: f64) -> Result<Self, MetricError> {
        let (llo, lhi) = (lo.log10(), hi.log10());
        let fractions = (0..count)
            .map(|i| {
                let t = if count == 1 { 0.0 } else { i as f64 / (count - 1) as f64 };
                10f64.powf(llo + t * (lhi - llo))
            })
            .collect();
        Self::new(fractions)
    }
}

impl Default for SizeGrid {
    fn default() -> Self {
        Self::log_spaced(10, 1e-3, 1.0).expect("default grid is valid")
    }
}

/// Deterministic list of edge budgets: each fraction rounded, clipped to
/// [1, total_edges], deduplicated, ascending.
pub fn sweep_sizes(total_edges: usize, grid: &SizeGrid) -> Vec<usize> {
    let mut ks: Vec<usize> = grid
        .fractions
        .iter()
        .map(|f| ((f * total_edges as f64).round() as usize).clamp(1, total_edges))
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}
