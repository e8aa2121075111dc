//! End-to-end orchestration: training-set preparation, per-image gating of a
//! heatmap directory, and the synthetic hand fixture used for experiments.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gate::{self, GateConfig, GateDecision, GateError};
use crate::geometry::{self, Dataset, GeometryError, NormalizationSpec, Point2, Shape, Unit};
use crate::heatmap::{self, Candidate, Heatmap, HeatmapError, DEFAULT_MIN_VALUE, DEFAULT_SIGMA, DEFAULT_WINDOW};
use crate::mrf::{self, LbpParams, MrfError};
use crate::shapestats::{self, StatsError, Topology, TrainStats};
use crate::ssm::{self, MatchResult, RansacParams, SimilarityTransform};

pub const CONFIG_MAGIC: &str = "landmark-gate-config";
pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no heatmaps found in {0}")]
    EmptyInput(PathBuf),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Heatmap(#[from] HeatmapError),
    #[error(transparent)]
    Mrf(#[from] MrfError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateParams {
    /// Pool size; `None` uses the landmark count.
    pub count: Option<usize>,
    pub window: usize,
    pub min_value: f64,
}

impl Default for CandidateParams {
    fn default() -> Self {
        Self {
            count: None,
            window: DEFAULT_WINDOW,
            min_value: DEFAULT_MIN_VALUE,
        }
    }
}

/// Settings for [`gate_directory`].
///
/// Each image gets its own RANSAC seed derived from `seed` and the image id,
/// so `ransac.seed` is not used here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub stats_path: PathBuf,
    pub heatmap_dir: PathBuf,
    pub mm_per_px: f64,
    pub gate: GateConfig,
    #[serde(default)]
    pub lbp: LbpParams,
    #[serde(default)]
    pub ransac: RansacParams,
    #[serde(default)]
    pub candidates: CandidateParams,
    #[serde(default)]
    pub seed: u64,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub jobs: usize,
    /// Record wall-clock stage timings. Off by default so output is reproducible.
    #[serde(default)]
    pub record_timings: bool,
}

impl PipelineConfig {
    pub fn new(stats_path: impl Into<PathBuf>, heatmap_dir: impl Into<PathBuf>, mm_per_px: f64, gate: GateConfig) -> Self {
        Self {
            stats_path: stats_path.into(),
            heatmap_dir: heatmap_dir.into(),
            mm_per_px,
            gate,
            lbp: LbpParams::default(),
            ransac: RansacParams::default(),
            candidates: CandidateParams::default(),
            seed: 0,
            jobs: 0,
            record_timings: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mm_per_px.is_finite() && self.mm_per_px > 0.0) {
            return Err(PipelineError::InvalidConfig(format!(
                "mm_per_px must be > 0, got {}",
                self.mm_per_px
            )));
        }
        self.lbp.validate()?;
        if self.ransac.iterations == 0 || !(self.ransac.inlier_threshold > 0.0) {
            return Err(PipelineError::InvalidConfig("ransac needs iterations >= 1 and threshold > 0".into()));
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let body = toml::to_string(self).expect("config serializes to TOML");
        format!("{CONFIG_MAGIC} v{CONFIG_VERSION}\n{body}")
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let body = shapestats::versioned_body(text, CONFIG_MAGIC, CONFIG_VERSION)?;
        let cfg: PipelineConfig =
            toml::from_str(body).map_err(|e| StatsError::Malformed(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(io_err(path))?)
    }
}

/// Converts a pixel-unit dataset to millimeters by wrist normalization.
/// Millimeter datasets pass through unchanged.
pub fn prepare_training(ds: &Dataset, spec: &NormalizationSpec) -> Result<Dataset> {
    if ds.unit == Unit::Millimeters {
        return Ok(ds.clone());
    }
    let mut out = Dataset::new(ds.landmark_count, Unit::Millimeters);
    for (id, shape) in ds.ids.iter().zip(&ds.shapes) {
        let (mm, _) = geometry::normalize_to_wrist(shape, spec)?;
        out.push(id.clone(), mm)?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelingRecord {
    pub assignment: Vec<usize>,
    pub converged: bool,
    pub iterations: usize,
    pub energy: f64,
}

/// Labeled configuration for one heatmap.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutput {
    /// Candidate pool in millimeters.
    pub candidates: Vec<Candidate>,
    pub labeling: LabelingRecord,
    pub labeled: Shape,
}

/// Extracts candidates, converts them to mm and labels them with LBP.
pub fn label_heatmap(
    h: &Heatmap,
    stats: &TrainStats,
    mm_per_px: f64,
    candidates: &CandidateParams,
    lbp: &LbpParams,
) -> Result<MatchOutput> {
    let count = candidates.count.unwrap_or(stats.landmark_count);
    let pool: Vec<Candidate> = heatmap::extract_candidates(h, count, candidates.window, candidates.min_value)
        .into_iter()
        .map(|c| Candidate {
            position: c.position.scaled(mm_per_px),
            peak_value: c.peak_value,
        })
        .collect();
    let graph = mrf::build_graph(&pool, stats)?;
    let labeling = mrf::lbp_map(&graph, lbp)?;
    let energy = mrf::energy(&graph, &labeling.assignment)?;
    let points = labeling.assignment.iter().map(|&k| pool[k].position).collect();
    let labeled = Shape::new(points, Unit::Millimeters)?;
    Ok(MatchOutput {
        candidates: pool,
        labeling: LabelingRecord {
            assignment: labeling.assignment,
            converged: labeling.converged,
            iterations: labeling.iterations,
            energy,
        },
        labeled,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchSummary {
    pub transform: SimilarityTransform,
    pub inliers: usize,
    pub inlier_mask: Vec<bool>,
}

impl From<&MatchResult> for MatchSummary {
    fn from(m: &MatchResult) -> Self {
        Self {
            transform: m.transform,
            inliers: m.inlier_count(),
            inlier_mask: m.inlier_mask.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub candidates_ms: f64,
    pub mrf_ms: f64,
    pub ssm_ms: f64,
    pub gate_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageVerdict {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeling: Option<LabelingRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labeled_mm: Option<Vec<Point2>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ssm_match: Option<MatchSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub match_error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decision: Option<GateDecision>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timings: Option<StageTimings>,
}

impl ImageVerdict {
    fn failed(id: String, error: impl ToString) -> Self {
        Self {
            id,
            error: Some(error.to_string()),
            labeling: None,
            labeled_mm: None,
            ssm_match: None,
            match_error: None,
            decision: None,
            timings: None,
        }
    }

    pub fn accepted(&self) -> bool {
        self.decision.as_ref().is_some_and(|d| d.accepted)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateSummary {
    pub images: usize,
    pub failed: usize,
    pub accepted: usize,
    /// `None` when no image could be processed.
    pub acceptance_rate: Option<f64>,
    pub violations: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GateRun {
    pub verdicts: Vec<ImageVerdict>,
    pub summary: GateSummary,
}

impl GateRun {
    pub fn has_failures(&self) -> bool {
        self.summary.failed > 0
    }
}

pub fn summarize(verdicts: &[ImageVerdict]) -> GateSummary {
    let decisions: Vec<GateDecision> = verdicts.iter().filter_map(|v| v.decision.clone()).collect();
    GateSummary {
        images: verdicts.len(),
        failed: verdicts.iter().filter(|v| v.error.is_some()).count(),
        accepted: decisions.iter().filter(|d| d.accepted).count(),
        acceptance_rate: gate::acceptance_rate(&decisions).ok(),
        violations: gate::violation_histogram(&decisions),
    }
}

/// FNV-1a, stable across platforms and releases.
fn fnv1a(text: &str) -> u64 {
    text.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

pub fn image_seed(seed: u64, id: &str) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ fnv1a(id);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Runs candidates, MRF, SSM match and gate on one decoded heatmap.
pub fn gate_heatmap(id: &str, h: &Heatmap, stats: &TrainStats, cfg: &PipelineConfig) -> ImageVerdict {
    let clock = Instant::now();
    let labeled = match label_heatmap(h, stats, cfg.mm_per_px, &cfg.candidates, &cfg.lbp) {
        Ok(m) => m,
        Err(e) => return ImageVerdict::failed(id.to_string(), e),
    };
    let mrf_done = clock.elapsed();

    let params = RansacParams {
        seed: image_seed(cfg.seed, id),
        ..cfg.ransac
    };
    let matched = ssm::ransac_match(&stats.ssm.mean(), &labeled.labeled, &params);
    let ssm_done = clock.elapsed();
    let decision = gate::check_constraints(&labeled.labeled, matched.as_ref(), &cfg.gate);
    let gate_done = clock.elapsed();

    let timings = cfg.record_timings.then(|| StageTimings {
        // candidate extraction and labeling share one call
        candidates_ms: 0.0,
        mrf_ms: mrf_done.as_secs_f64() * 1e3,
        ssm_ms: (ssm_done - mrf_done).as_secs_f64() * 1e3,
        gate_ms: (gate_done - ssm_done).as_secs_f64() * 1e3,
    });
    ImageVerdict {
        id: id.to_string(),
        error: None,
        labeling: Some(labeled.labeling),
        labeled_mm: Some(labeled.labeled.points().to_vec()),
        ssm_match: matched.as_ref().ok().map(MatchSummary::from),
        match_error: matched.as_ref().err().map(|e| e.to_string()),
        decision: Some(decision),
        timings,
    }
}

/// Sorted `.pgm` files of a directory.
pub fn list_heatmaps(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
        })
        .collect();
    paths.sort();
    Ok(paths)
}

/// Gates every heatmap in `cfg.heatmap_dir`. Unreadable images are recorded in
/// their verdict; a missing stats file or empty directory is an error.
pub fn gate_directory(cfg: &PipelineConfig) -> Result<GateRun> {
    cfg.validate()?;
    let stats = TrainStats::load(&cfg.stats_path)?;
    cfg.gate.validate(stats.landmark_count)?;
    let paths = list_heatmaps(&cfg.heatmap_dir)?;
    if paths.is_empty() {
        return Err(PipelineError::EmptyInput(cfg.heatmap_dir.clone()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?;
    let verdicts: Vec<ImageVerdict> = pool.install(|| {
        paths
            .par_iter()
            .map(|path| {
                let id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                let started = Instant::now();
                match Heatmap::load_pgm(path) {
                    Ok(h) => {
                        let decoded = started.elapsed().as_secs_f64() * 1e3;
                        let mut v = gate_heatmap(&id, &h, &stats, cfg);
                        if let Some(t) = v.timings.as_mut() {
                            t.candidates_ms = decoded;
                        }
                        v
                    }
                    Err(e) => ImageVerdict::failed(id, e),
                }
            })
            .collect()
    });
    let summary = summarize(&verdicts);
    Ok(GateRun { verdicts, summary })
}

// ---------------------------------------------------------------------------
// synthetic hand fixture

pub const FIXTURE_LANDMARKS: usize = 19;
pub const FIXTURE_MM_PER_PX: f64 = 0.9;
pub const FIXTURE_WIDTH: usize = 256;
pub const FIXTURE_HEIGHT: usize = 256;
/// Ulnar and radial wrist points, 50 mm apart in the mean shape.
pub const FIXTURE_WRIST_PAIR: (usize, usize) = (0, 1);
/// Wrist points and the three carpal points.
pub const FIXTURE_WRIST_REGION: [usize; 5] = [0, 1, 2, 3, 4];
pub const FIXTURE_DISPLACEMENT_MM: f64 = 30.0;
pub const ANNOTATIONS_FILE: &str = "annotations.txt";
pub const TOPOLOGY_FILE: &str = "topology.txt";
/// Neighbors per landmark in the shipped topology. Spanning trees leave the
/// labeling ambiguous on this hand; eight neighbors pin it down.
pub const FIXTURE_TOPOLOGY_NEIGHBORS: usize = 8;
pub const MANIFEST_FILE: &str = "fixture.json";

/// Mean hand in mm, image axes (y down): wrist, carpals, then thumb, index,
/// middle, ring and little finger from base to tip.
const FIXTURE_MEAN: [(f64, f64); FIXTURE_LANDMARKS] = [
    (100.0, 200.0),
    (150.0, 200.0),
    (115.0, 180.0),
    (128.0, 175.0),
    (140.0, 180.0),
    (88.0, 165.0),
    (60.0, 130.0),
    (105.0, 130.0),
    (98.0, 85.0),
    (94.0, 50.0),
    (125.0, 125.0),
    (124.0, 75.0),
    (123.0, 35.0),
    (143.0, 130.0),
    (148.0, 83.0),
    (152.0, 50.0),
    (160.0, 140.0),
    (170.0, 105.0),
    (176.0, 78.0),
];

const POSE_ROTATION_SD: f64 = 0.05;
const POSE_SHIFT_SD: f64 = 3.0;
const LANDMARK_SD: f64 = 1.0;
const EDGE_MARGIN_PX: f64 = 6.0;
const MIN_SEPARATION_PX: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    None,
    /// One non-exempt wrist-region landmark moved 30 mm.
    Displaced,
    /// A finger landmark drawn on top of another non-exempt landmark.
    Coincident,
    /// A finger landmark left out of the heatmap.
    Missing,
}

impl fmt::Display for Corruption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Corruption::None => "none",
            Corruption::Displaced => "displaced",
            Corruption::Coincident => "coincident",
            Corruption::Missing => "missing",
        })
    }
}

impl FromStr for Corruption {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(Corruption::None),
            "displaced" => Ok(Corruption::Displaced),
            "coincident" => Ok(Corruption::Coincident),
            "missing" => Ok(Corruption::Missing),
            other => Err(format!("unknown corruption `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureImage {
    pub id: String,
    /// Landmarks touched by the corruption: the moved landmark, or
    /// `[target, moved]` for coincident, or the omitted landmark.
    pub affected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub corruption: Corruption,
    pub seed: u64,
    pub landmark_count: usize,
    pub mm_per_px: f64,
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub wrist_pair: (usize, usize),
    pub wrist_region: Vec<usize>,
    pub exempt_pair: (usize, usize),
    pub images: Vec<FixtureImage>,
}

pub fn fixture_mean() -> Vec<Point2> {
    FIXTURE_MEAN.iter().map(|&(x, y)| Point2::new(x, y)).collect()
}

fn in_frame_px(p: &Point2) -> bool {
    let (x, y) = (p.x / FIXTURE_MM_PER_PX, p.y / FIXTURE_MM_PER_PX);
    x >= EDGE_MARGIN_PX
        && y >= EDGE_MARGIN_PX
        && x <= FIXTURE_WIDTH as f64 - 1.0 - EDGE_MARGIN_PX
        && y <= FIXTURE_HEIGHT as f64 - 1.0 - EDGE_MARGIN_PX
}

fn separated_px(p: &Point2, q: &Point2) -> bool {
    let dx = (p.x - q.x).abs() / FIXTURE_MM_PER_PX;
    let dy = (p.y - q.y).abs() / FIXTURE_MM_PER_PX;
    dx.max(dy) >= MIN_SEPARATION_PX
}

fn well_placed(points: &[Point2]) -> bool {
    points.iter().all(in_frame_px)
        && points
            .iter()
            .enumerate()
            .all(|(i, p)| points[i + 1..].iter().all(|q| separated_px(p, q)))
}

/// One hand: the mean under a random rigid motion about its centroid plus
/// independent Gaussian landmark noise. There is no global scale change since
/// hands are wrist-normalized. Redrawn until every landmark is inside
/// the frame and clear of its neighbors.
pub fn fixture_shape<R: Rng + ?Sized>(rng: &mut R) -> Vec<Point2> {
    let mean = fixture_mean();
    let c = geometry::centroid(&mean);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    loop {
        let theta = POSE_ROTATION_SD * unit.sample(rng);
        let shift = (POSE_SHIFT_SD * unit.sample(rng), POSE_SHIFT_SD * unit.sample(rng));
        let (sin, cos) = theta.sin_cos();
        let points: Vec<Point2> = mean
            .iter()
            .map(|p| {
                let (dx, dy) = (p.x - c.x, p.y - c.y);
                Point2::new(
                    c.x + shift.0 + cos * dx - sin * dy + LANDMARK_SD * unit.sample(rng),
                    c.y + shift.1 + sin * dx + cos * dy + LANDMARK_SD * unit.sample(rng),
                )
            })
            .collect();
        if well_placed(&points) {
            return points;
        }
    }
}

const EXEMPT: (usize, usize) = gate::DEFAULT_EXEMPT_PAIR;

fn is_exempt(i: usize) -> bool {
    i == EXEMPT.0 || i == EXEMPT.1
}

/// Applies `corruption` in place; returns the drawn points and the affected indices.
fn corrupt<R: Rng + ?Sized>(points: &mut [Point2], corruption: Corruption, rng: &mut R) -> (Vec<Point2>, Vec<usize>) {
    let fingers = 5..FIXTURE_LANDMARKS;
    match corruption {
        Corruption::None => (points.to_vec(), Vec::new()),
        Corruption::Displaced => {
            let choices: Vec<usize> = FIXTURE_WRIST_REGION.iter().copied().filter(|&i| !is_exempt(i)).collect();
            loop {
                let k = choices[rng.random_range(0..choices.len())];
                let angle = rng.random_range(0.0..std::f64::consts::TAU);
                let moved = Point2::new(
                    points[k].x + FIXTURE_DISPLACEMENT_MM * angle.cos(),
                    points[k].y + FIXTURE_DISPLACEMENT_MM * angle.sin(),
                );
                let clear = points
                    .iter()
                    .enumerate()
                    .all(|(i, q)| i == k || separated_px(&moved, q));
                if in_frame_px(&moved) && clear {
                    points[k] = moved;
                    return (points.to_vec(), vec![k]);
                }
            }
        }
        Corruption::Coincident => {
            let moved = rng.random_range(fingers);
            let others: Vec<usize> = (0..FIXTURE_LANDMARKS).filter(|&i| i != moved && !is_exempt(i)).collect();
            let target = others[rng.random_range(0..others.len())];
            points[moved] = points[target];
            (points.to_vec(), vec![target, moved])
        }
        Corruption::Missing => {
            let k = rng.random_range(fingers);
            let drawn = points
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, p)| *p)
                .collect();
            (drawn, vec![k])
        }
    }
}

/// Writes `n` heatmaps, `annotations.txt` (mm, as drawn), `topology.txt` and `fixture.json` to
/// `out_dir`. Image `k` draws from its own ChaCha stream, so any prefix of a
/// larger fixture with the same seed is identical.
pub fn synth_fixture(n: usize, corruption: Corruption, seed: u64, out_dir: &Path) -> Result<FixtureManifest> {
    if n == 0 {
        return Err(PipelineError::InvalidConfig("fixture needs n >= 1".into()));
    }
    std::fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let rendered: Vec<(String, Vec<Point2>, Vec<usize>, Heatmap)> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut points = fixture_shape(&mut rng);
            let (drawn, affected) = corrupt(&mut points, corruption, &mut rng);
            let px: Vec<Point2> = drawn.iter().map(|p| p.scaled(1.0 / FIXTURE_MM_PER_PX)).collect();
            let h = heatmap::render(&px, FIXTURE_WIDTH, FIXTURE_HEIGHT, DEFAULT_SIGMA)?.heatmap;
            Ok((format!("img_{k:04}"), points, affected, h))
        })
        .collect::<Result<_>>()?;

    let mut ds = Dataset::new(FIXTURE_LANDMARKS, Unit::Millimeters);
    ds.image_size = Some((FIXTURE_WIDTH as u32, FIXTURE_HEIGHT as u32));
    let mut images = Vec::with_capacity(n);
    for (id, points, affected, h) in rendered {
        let path = out_dir.join(format!("{id}.pgm"));
        h.save_pgm(&path)?;
        ds.push(id.clone(), Shape::new(points, Unit::Millimeters)?)?;
        images.push(FixtureImage { id, affected });
    }
    ds.save(out_dir.join(ANNOTATIONS_FILE))?;
    let topology = fixture_topology();
    let path = out_dir.join(TOPOLOGY_FILE);
    std::fs::write(&path, topology.to_text()).map_err(io_err(&path))?;

    let manifest = FixtureManifest {
        corruption,
        seed,
        landmark_count: FIXTURE_LANDMARKS,
        mm_per_px: FIXTURE_MM_PER_PX,
        width: FIXTURE_WIDTH,
        height: FIXTURE_HEIGHT,
        sigma: DEFAULT_SIGMA,
        wrist_pair: FIXTURE_WRIST_PAIR,
        wrist_region: FIXTURE_WRIST_REGION.to_vec(),
        exempt_pair: EXEMPT,
        images,
    };
    let path = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    std::fs::write(&path, text).map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn fixture_topology() -> Topology {
    shapestats::knn_topology(&fixture_mean(), FIXTURE_TOPOLOGY_NEIGHBORS).expect("fixture mean is valid")
}

/// Gate configuration matching the fixture's conventions.
pub fn fixture_gate_config() -> GateConfig {
    GateConfig::new(FIXTURE_WRIST_REGION, FIXTURE_MM_PER_PX)
}
