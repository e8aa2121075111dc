//! Statistical shape model: generalized Procrustes alignment, a PCA shape space
//! `x = mean + P b`, and RANSAC matching of the mean shape onto a labeled
//! configuration.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{centroid, Point2, Shape, Unit};

const GPA_MAX_ITERATIONS: usize = 100;
const GPA_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SsmError {
    #[error("need at least {needed} shapes, got {got}")]
    TooFewShapes { needed: usize, got: usize },
    #[error("shape {0} has {1} landmarks, expected {2}")]
    LandmarkCountMismatch(usize, usize, usize),
    #[error("shape {0} is degenerate (all points coincide)")]
    DegenerateShape(usize),
    #[error("source points coincide; similarity is undetermined")]
    CoincidentSource,
    #[error("point sets differ in size ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("vector of length {found} does not match model dimension {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("variance fraction must be in (0, 1], got {0}")]
    InvalidVarianceFraction(f64),
    #[error("invalid RANSAC parameters: {0}")]
    InvalidParams(String),
    #[error("RANSAC found {inliers} inliers, needed {required}")]
    MatchFailed { inliers: usize, required: usize },
    #[error("invalid shape model: {0}")]
    InvalidModel(String),
}

pub type Result<T, E = SsmError> = std::result::Result<T, E>;

/// `p -> scale * R(rotation) * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl SimilarityTransform {
    pub const IDENTITY: SimilarityTransform = SimilarityTransform {
        scale: 1.0,
        rotation: 0.0,
        translation: (0.0, 0.0),
    };

    pub fn new(scale: f64, rotation: f64, translation: (f64, f64)) -> Self {
        Self {
            scale,
            rotation: wrap_angle(rotation),
            translation,
        }
    }

    pub fn apply(&self, p: &Point2) -> Point2 {
        let (s, c) = self.rotation.sin_cos();
        Point2::new(
            self.scale * (c * p.x - s * p.y) + self.translation.0,
            self.scale * (s * p.x + c * p.y) + self.translation.1,
        )
    }

    pub fn apply_all(&self, points: &[Point2]) -> Vec<Point2> {
        points.iter().map(|p| self.apply(p)).collect()
    }
}

/// Wraps into `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    use std::f64::consts::PI;
    let mut t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t -= 2.0 * PI;
    }
    t
}

/// Least-squares similarity mapping `src` onto `dst` (closed form through the
/// centered cross-covariance). Exact for two pairs.
pub fn estimate_similarity(src: &[Point2], dst: &[Point2]) -> Result<SimilarityTransform> {
    if src.len() != dst.len() {
        return Err(SsmError::SizeMismatch(src.len(), dst.len()));
    }
    if src.len() < 2 {
        return Err(SsmError::CoincidentSource);
    }
    let cs = centroid(src);
    let cd = centroid(dst);
    let (mut dot, mut cross, mut norm) = (0.0, 0.0, 0.0);
    for (s, d) in src.iter().zip(dst) {
        let (ax, ay) = (s.x - cs.x, s.y - cs.y);
        let (bx, by) = (d.x - cd.x, d.y - cd.y);
        dot += ax * bx + ay * by;
        cross += ax * by - ay * bx;
        norm += ax * ax + ay * ay;
    }
    if norm <= f64::EPSILON * f64::EPSILON {
        return Err(SsmError::CoincidentSource);
    }
    let rotation = cross.atan2(dot);
    let scale = dot.hypot(cross) / norm;
    let (s, c) = rotation.sin_cos();
    let translation = (
        cd.x - scale * (c * cs.x - s * cs.y),
        cd.y - scale * (s * cs.x + c * cs.y),
    );
    Ok(SimilarityTransform::new(scale, rotation, translation))
}

fn centered_unit(points: &[Point2]) -> Option<Vec<Point2>> {
    let c = centroid(points);
    let centered: Vec<Point2> = points.iter().map(|p| Point2::new(p.x - c.x, p.y - c.y)).collect();
    let size = centroid_size(&centered);
    (size > 0.0).then(|| centered.iter().map(|p| p.scaled(1.0 / size)).collect())
}

fn centroid_size(centered: &[Point2]) -> f64 {
    centered.iter().map(|p| p.x * p.x + p.y * p.y).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcrustesResult {
    pub aligned: Vec<Shape>,
    /// Centered, unit centroid size.
    pub mean: Shape,
    pub iterations: usize,
}

/// Generalized Procrustes analysis under similarity transforms.
///
/// The returned frame is canonical: the mean is rotated so its first landmark
/// that is away from the centroid lies on the positive x-axis. This makes the
/// aligned output independent of how each input was posed.
pub fn procrustes_align(shapes: &[Shape]) -> Result<ProcrustesResult> {
    if shapes.len() < 2 {
        return Err(SsmError::TooFewShapes {
            needed: 2,
            got: shapes.len(),
        });
    }
    let l = shapes[0].len();
    let mut normalized = Vec::with_capacity(shapes.len());
    for (i, s) in shapes.iter().enumerate() {
        if s.len() != l {
            return Err(SsmError::LandmarkCountMismatch(i, s.len(), l));
        }
        normalized.push(centered_unit(s.points()).ok_or(SsmError::DegenerateShape(i))?);
    }

    let mut mean = normalized[0].clone();
    let mut aligned = normalized.clone();
    let mut iterations = 0;
    while iterations < GPA_MAX_ITERATIONS {
        iterations += 1;
        for (out, shape) in aligned.iter_mut().zip(&normalized) {
            let t = estimate_similarity(shape, &mean)?;
            *out = t.apply_all(shape);
        }
        let mut next = average(&aligned);
        // keep the mean's pose tied to the previous iterate
        let t = estimate_similarity(&next, &mean)?;
        next = t.apply_all(&next);
        next = centered_unit(&next).ok_or(SsmError::DegenerateShape(0))?;
        let change = next
            .iter()
            .zip(&mean)
            .map(|(a, b)| a.distance_squared(b))
            .sum::<f64>()
            .sqrt();
        mean = next;
        if change < GPA_TOLERANCE {
            break;
        }
    }

    mean = canonical_orientation(&mean);
    for (out, shape) in aligned.iter_mut().zip(&normalized) {
        let t = estimate_similarity(shape, &mean)?;
        *out = t.apply_all(shape);
    }
    let to_shape = |pts: Vec<Point2>| Shape::new(pts, Unit::Millimeters).expect("L >= 2, finite");
    Ok(ProcrustesResult {
        aligned: aligned.into_iter().map(to_shape).collect(),
        mean: to_shape(mean),
        iterations,
    })
}

fn average(shapes: &[Vec<Point2>]) -> Vec<Point2> {
    let n = shapes.len() as f64;
    (0..shapes[0].len())
        .map(|i| {
            let (sx, sy) = shapes
                .iter()
                .fold((0.0, 0.0), |(sx, sy), s| (sx + s[i].x, sy + s[i].y));
            Point2::new(sx / n, sy / n)
        })
        .collect()
}

fn canonical_orientation(mean: &[Point2]) -> Vec<Point2> {
    let anchor = mean
        .iter()
        .find(|p| p.x.hypot(p.y) > 1e-6)
        .copied()
        .unwrap_or(Point2::new(1.0, 0.0));
    let t = SimilarityTransform::new(1.0, -anchor.y.atan2(anchor.x), (0.0, 0.0));
    t.apply_all(mean)
}

/// PCA shape space over aligned shape vectors `[x0, y0, x1, y1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsmModel {
    pub mean_shape: Vec<Point2>,
    /// Column vectors of length `2L`, one per retained mode.
    pub eigenvectors: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub total_variance: f64,
}

impl SsmModel {
    pub fn modes(&self) -> usize {
        self.eigenvectors.len()
    }

    pub fn landmark_count(&self) -> usize {
        self.mean_shape.len()
    }

    pub fn mean(&self) -> Shape {
        Shape::new(self.mean_shape.clone(), Unit::Millimeters).expect("validated model")
    }

    pub fn validate(&self) -> Result<()> {
        let dim = 2 * self.mean_shape.len();
        if self.mean_shape.len() < 2 {
            return Err(SsmError::InvalidModel("mean shape needs >= 2 landmarks".into()));
        }
        if self.eigenvalues.len() != self.eigenvectors.len() {
            return Err(SsmError::InvalidModel("eigenvalue/eigenvector count differ".into()));
        }
        if self.eigenvectors.iter().any(|v| v.len() != dim) {
            return Err(SsmError::InvalidModel(format!("eigenvectors must have length {dim}")));
        }
        if self.eigenvalues.iter().any(|&v| !(v >= 0.0)) {
            return Err(SsmError::InvalidModel("negative eigenvalue".into()));
        }
        if self.eigenvalues.windows(2).any(|w| w[0] < w[1]) {
            return Err(SsmError::InvalidModel("eigenvalues not descending".into()));
        }
        for (i, a) in self.eigenvectors.iter().enumerate() {
            for (j, b) in self.eigenvectors.iter().enumerate().skip(i) {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot - target).abs() > 1e-9 {
                    return Err(SsmError::InvalidModel(format!(
                        "eigenvectors {i} and {j} not orthonormal"
                    )));
                }
            }
        }
        Ok(())
    }

    /// `b = P^T (x - mean)`.
    pub fn project(&self, shape: &Shape) -> Result<Vec<f64>> {
        let x = shape.to_vector();
        let m = flatten(&self.mean_shape);
        if x.len() != m.len() {
            return Err(SsmError::DimensionMismatch {
                expected: m.len(),
                found: x.len(),
            });
        }
        let diff: Vec<f64> = x.iter().zip(&m).map(|(a, b)| a - b).collect();
        Ok(self
            .eigenvectors
            .iter()
            .map(|v| v.iter().zip(&diff).map(|(a, b)| a * b).sum())
            .collect())
    }

    /// `x = mean + P b`.
    pub fn reconstruct(&self, b: &[f64]) -> Result<Shape> {
        if b.len() != self.modes() {
            return Err(SsmError::DimensionMismatch {
                expected: self.modes(),
                found: b.len(),
            });
        }
        let mut x = flatten(&self.mean_shape);
        for (v, &coef) in self.eigenvectors.iter().zip(b) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += coef * vi;
            }
        }
        Ok(Shape::from_vector(&x, Unit::Millimeters).expect("finite model"))
    }
}

fn flatten(points: &[Point2]) -> Vec<f64> {
    points.iter().flat_map(|p| [p.x, p.y]).collect()
}

pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

/// Eigen-decomposition of the sample covariance of the aligned shape vectors,
/// keeping the fewest modes that explain `variance_fraction` of the variance.
pub fn fit_pca(aligned: &[Shape], mean: &Shape, variance_fraction: f64) -> Result<SsmModel> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(SsmError::InvalidVarianceFraction(variance_fraction));
    }
    let n = aligned.len();
    if n <= 1 {
        return Err(SsmError::TooFewShapes { needed: 2, got: n });
    }
    let dim = 2 * mean.len();
    let m = DVector::from_vec(mean.to_vector());
    let mut data = DMatrix::zeros(dim, n);
    for (j, s) in aligned.iter().enumerate() {
        if s.len() != mean.len() {
            return Err(SsmError::LandmarkCountMismatch(j, s.len(), mean.len()));
        }
        data.set_column(j, &DVector::from_vec(s.to_vector()));
    }
    // sample covariance about the average of the aligned shapes
    let average = data.column_mean();
    for mut col in data.column_iter_mut() {
        col -= &average;
    }
    let cov = (&data * data.transpose()) / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    // eigenvalues at rounding level relative to the shape size are treated as zero
    let floor = 1e-13 * m.norm_squared().max(f64::MIN_POSITIVE);
    let values: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i])
        .map(|v| if v > floor { v } else { 0.0 })
        .collect();
    let total: f64 = values.iter().sum();

    let mut modes = 0;
    if total > 0.0 {
        let target = variance_fraction * total * (1.0 - 1e-12);
        let mut acc = 0.0;
        for &v in &values {
            if acc >= target {
                break;
            }
            acc += v;
            modes += 1;
        }
    }
    let eigenvectors = order[..modes]
        .iter()
        .map(|&i| {
            let mut v: Vec<f64> = eig.eigenvectors.column(i).iter().copied().collect();
            // sign convention: largest-magnitude component positive
            let pivot = v
                .iter()
                .copied()
                .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            v
        })
        .collect();
    Ok(SsmModel {
        mean_shape: mean.points().to_vec(),
        eigenvectors,
        eigenvalues: values[..modes].to_vec(),
        total_variance: total,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RansacParams {
    pub iterations: usize,
    pub inlier_threshold: f64,
    /// `None` means `ceil(L / 2)`.
    pub min_inliers: Option<usize>,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 500,
            inlier_threshold: 10.0,
            min_inliers: None,
            seed: 0,
        }
    }
}

impl RansacParams {
    pub fn required_inliers(&self, landmark_count: usize) -> usize {
        self.min_inliers.unwrap_or(landmark_count.div_ceil(2))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub transform: SimilarityTransform,
    pub inlier_mask: Vec<bool>,
    pub transformed_mean: Shape,
    pub residuals: Vec<f64>,
}

impl MatchResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }
}

/// Robustly poses `mean_shape` onto `labeled` (correspondence by index).
///
/// Each iteration draws two distinct correspondences from its own ChaCha
/// stream (seed, iteration), so results do not depend on evaluation order.
pub fn ransac_match(mean_shape: &Shape, labeled: &Shape, params: &RansacParams) -> Result<MatchResult> {
    let l = mean_shape.len();
    if labeled.len() != l {
        return Err(SsmError::SizeMismatch(l, labeled.len()));
    }
    if params.iterations == 0 {
        return Err(SsmError::InvalidParams("iterations must be >= 1".into()));
    }
    if !(params.inlier_threshold > 0.0) {
        return Err(SsmError::InvalidParams("inlier threshold must be > 0".into()));
    }
    let src = mean_shape.points();
    let dst = labeled.points();
    let required = params.required_inliers(l);

    let score = |t: &SimilarityTransform| -> (Vec<bool>, usize, f64) {
        let mut mask = vec![false; l];
        let (mut count, mut sum) = (0usize, 0.0);
        for i in 0..l {
            let r = t.apply(&src[i]).distance(&dst[i]);
            if r <= params.inlier_threshold {
                mask[i] = true;
                count += 1;
                sum += r;
            }
        }
        let mean = if count > 0 { sum / count as f64 } else { f64::INFINITY };
        (mask, count, mean)
    };

    let mut best: Option<(usize, f64, Vec<bool>)> = None;
    for iter in 0..params.iterations {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(iter as u64);
        let a = rng.random_range(0..l);
        let mut b = rng.random_range(0..l - 1);
        if b >= a {
            b += 1;
        }
        let Ok(t) = estimate_similarity(&[src[a], src[b]], &[dst[a], dst[b]]) else {
            continue;
        };
        if !(t.scale > 0.0 && t.scale.is_finite()) {
            continue;
        }
        let (mask, count, mean) = score(&t);
        let better = match &best {
            None => true,
            Some((bc, bm, _)) => count > *bc || (count == *bc && mean < *bm),
        };
        if better {
            best = Some((count, mean, mask));
        }
    }

    let (best_count, _, mask) = best.unwrap_or((0, f64::INFINITY, vec![false; l]));
    if best_count < required || best_count < 2 {
        return Err(SsmError::MatchFailed {
            inliers: best_count,
            required,
        });
    }
    let (s_in, d_in): (Vec<Point2>, Vec<Point2>) = mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(i, _)| (src[i], dst[i]))
        .unzip();
    let transform = estimate_similarity(&s_in, &d_in)?;
    let transformed = transform.apply_all(src);
    let residuals: Vec<f64> = transformed.iter().zip(dst).map(|(a, b)| a.distance(b)).collect();
    let inlier_mask: Vec<bool> = residuals.iter().map(|&r| r <= params.inlier_threshold).collect();
    let final_count = inlier_mask.iter().filter(|&&m| m).count();
    if final_count < required {
        return Err(SsmError::MatchFailed {
            inliers: final_count,
            required,
        });
    }
    Ok(MatchResult {
        transform,
        inlier_mask,
        transformed_mean: Shape::new(transformed, Unit::Millimeters).expect("finite transform"),
        residuals,
    })
}
