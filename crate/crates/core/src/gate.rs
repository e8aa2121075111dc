//! Accept/reject decisions for labeled configurations, acceptance rates, and
//! landmark-localization metrics (point-to-point error and outlier counts).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Shape;
use crate::ssm::{MatchResult, SsmError};

pub const DEFAULT_WRIST_DISTANCE_LIMIT: f64 = 16.0;
pub const DEFAULT_EXEMPT_PAIR: (usize, usize) = (2, 3);
pub const DEFAULT_RADII: [f64; 4] = [2.0, 4.0, 10.0, 20.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GateError {
    #[error("no decisions to summarize")]
    EmptyInput,
    #[error("{predictions} predictions but {ground_truth} ground-truth shapes")]
    CountMismatch {
        predictions: usize,
        ground_truth: usize,
    },
    #[error("shape {index}: {found} landmarks, expected {expected}")]
    LandmarkMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid gate configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = GateError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub coincidence_exempt_pair: (usize, usize),
    /// Distances strictly below this count as a shared coordinate.
    pub coincidence_tolerance: f64,
    pub wrist_region_indices: BTreeSet<usize>,
    pub wrist_distance_limit: f64,
}

impl GateConfig {
    /// The coincidence tolerance defaults to one heatmap pixel in mm.
    pub fn new(wrist_region_indices: impl IntoIterator<Item = usize>, mm_per_px: f64) -> Self {
        Self {
            coincidence_exempt_pair: DEFAULT_EXEMPT_PAIR,
            coincidence_tolerance: mm_per_px,
            wrist_region_indices: wrist_region_indices.into_iter().collect(),
            wrist_distance_limit: DEFAULT_WRIST_DISTANCE_LIMIT,
        }
    }

    pub fn validate(&self, landmark_count: usize) -> Result<()> {
        let (a, b) = self.coincidence_exempt_pair;
        if a == b || a >= landmark_count || b >= landmark_count {
            return Err(GateError::InvalidConfig(format!(
                "exempt pair ({a}, {b}) invalid for {landmark_count} landmarks"
            )));
        }
        if let Some(&i) = self.wrist_region_indices.iter().find(|&&i| i >= landmark_count) {
            return Err(GateError::InvalidConfig(format!("wrist index {i} out of range")));
        }
        if !(self.coincidence_tolerance > 0.0 && self.wrist_distance_limit > 0.0) {
            return Err(GateError::InvalidConfig("limits must be > 0".into()));
        }
        Ok(())
    }

    fn is_exempt(&self, i: usize, j: usize) -> bool {
        let (a, b) = self.coincidence_exempt_pair;
        (i, j) == (a, b) || (i, j) == (b, a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    /// Two landmarks share a coordinate.
    Coincident { landmarks: (usize, usize), distance_mm: f64 },
    /// A wrist-region landmark is too far from its posed mean coordinate.
    WristDeviation { landmark: usize, distance_mm: f64 },
    /// The shape model could not be matched robustly.
    ShapeMatch { inliers: usize, required: usize },
}

impl Violation {
    pub fn id(&self) -> &'static str {
        match self {
            Violation::Coincident { .. } => "coincident",
            Violation::WristDeviation { .. } => "wrist_deviation",
            Violation::ShapeMatch { .. } => "shape_match",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub accepted: bool,
    pub violations: Vec<Violation>,
}

/// Applies the coincidence and wrist-deviation constraints to a labeled shape.
/// A failed shape-model match is itself a violation.
pub fn check_constraints(
    labeled: &Shape,
    matched: std::result::Result<&MatchResult, &SsmError>,
    cfg: &GateConfig,
) -> GateDecision {
    let pts = labeled.points();
    let mut violations = Vec::new();
    for i in 0..pts.len() {
        for j in (i + 1)..pts.len() {
            if cfg.is_exempt(i, j) {
                continue;
            }
            let d = pts[i].distance(&pts[j]);
            if d < cfg.coincidence_tolerance {
                violations.push(Violation::Coincident {
                    landmarks: (i, j),
                    distance_mm: d,
                });
            }
        }
    }
    match matched {
        Ok(m) => {
            for &i in &cfg.wrist_region_indices {
                let (Some(p), Some(q)) = (pts.get(i), m.transformed_mean.points().get(i)) else {
                    continue;
                };
                let d = p.distance(q);
                if d > cfg.wrist_distance_limit {
                    violations.push(Violation::WristDeviation {
                        landmark: i,
                        distance_mm: d,
                    });
                }
            }
        }
        Err(err) => {
            let (inliers, required) = match err {
                SsmError::MatchFailed { inliers, required } => (*inliers, *required),
                _ => (0, 0),
            };
            violations.push(Violation::ShapeMatch { inliers, required });
        }
    }
    GateDecision {
        accepted: violations.is_empty(),
        violations,
    }
}

pub fn acceptance_rate(decisions: &[GateDecision]) -> Result<f64> {
    if decisions.is_empty() {
        return Err(GateError::EmptyInput);
    }
    let accepted = decisions.iter().filter(|d| d.accepted).count();
    Ok(accepted as f64 / decisions.len() as f64)
}

/// Count of each violation kind over a batch of decisions.
pub fn violation_histogram(decisions: &[GateDecision]) -> BTreeMap<String, usize> {
    let mut hist = BTreeMap::new();
    for v in decisions.iter().flat_map(|d| &d.violations) {
        *hist.entry(v.id().to_string()).or_insert(0) += 1;
    }
    hist
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierCount {
    pub radius_mm: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub landmarks: usize,
    pub pe_mean: f64,
    /// Population standard deviation of the pooled errors.
    pub pe_sd: f64,
    /// Sorted by radius.
    pub outliers: Vec<OutlierCount>,
}

impl EvalReport {
    pub fn outliers_at(&self, radius: f64) -> Option<usize> {
        self.outliers
            .iter()
            .find(|o| o.radius_mm == radius)
            .map(|o| o.count)
    }
}

/// Point-to-point error pooled over every landmark of every image, plus the
/// number of predictions farther than each radius from the ground truth.
pub fn evaluate(predictions: &[Shape], ground_truth: &[Shape], radii: &[f64]) -> Result<EvalReport> {
    if predictions.len() != ground_truth.len() {
        return Err(GateError::CountMismatch {
            predictions: predictions.len(),
            ground_truth: ground_truth.len(),
        });
    }
    let mut errors = Vec::new();
    for (index, (p, g)) in predictions.iter().zip(ground_truth).enumerate() {
        if p.len() != g.len() {
            return Err(GateError::LandmarkMismatch {
                index,
                expected: g.len(),
                found: p.len(),
            });
        }
        errors.extend(p.points().iter().zip(g.points()).map(|(a, b)| a.distance(b)));
    }
    let n = errors.len();
    let (pe_mean, pe_sd) = if n == 0 {
        (0.0, 0.0)
    } else {
        let mean = errors.iter().sum::<f64>() / n as f64;
        let var = errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n as f64;
        (mean, var.sqrt())
    };
    let mut sorted_radii = radii.to_vec();
    sorted_radii.sort_by(f64::total_cmp);
    sorted_radii.dedup();
    let outliers = sorted_radii
        .into_iter()
        .map(|r| OutlierCount {
            radius_mm: r,
            count: errors.iter().filter(|&&e| e > r).count(),
        })
        .collect();
    Ok(EvalReport {
        landmarks: n,
        pe_mean,
        pe_sd,
        outliers,
    })
}
