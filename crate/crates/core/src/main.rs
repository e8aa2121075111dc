use std::error::Error;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use landmark_gate::diffusion::{self, AnalyticGaussianPredictor, NoisePredictor, ReverseVariance, ZeroPredictor};
use landmark_gate::gate::{self, GateConfig, DEFAULT_RADII};
use landmark_gate::geometry::{self, Dataset, NormalizationSpec, Shape, Unit};
use landmark_gate::heatmap::{self, Heatmap, DEFAULT_SIGMA};
use landmark_gate::mrf::LbpParams;
use landmark_gate::pipeline::{self, Corruption, PipelineConfig};
use landmark_gate::shapestats::{FitOptions, Topology, TrainStats, DEFAULT_UNARY_SIGMA};
use landmark_gate::ssm::DEFAULT_VARIANCE_FRACTION;

type Fallible<T> = Result<T, Box<dyn Error>>;

/// Quality gating of landmark heatmaps.
#[derive(Parser)]
#[command(name = "landmark-gate", version)]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Pipeline configuration file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit shape statistics from millimeter or pixel annotations.
    Fit(FitArgs),
    /// Render annotations to 16-bit PGM heatmaps.
    Render(RenderArgs),
    /// Label one heatmap with the MRF.
    Match(MatchArgs),
    /// Gate every heatmap in a directory.
    Gate(GateArgs),
    /// Point-to-point error and outlier counts.
    Eval(EvalArgs),
    /// Draw DDPM samples with a Gaussian oracle or zero noise predictor.
    Sample(SampleArgs),
    /// Write a synthetic hand fixture.
    Fixture(FixtureArgs),
    /// Apply forward diffusion noise to a heatmap.
    Diffuse(DiffuseArgs),
}

fn parse_pair(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected `a,b`")?;
    let a = a.trim().parse().map_err(|e| format!("{e}"))?;
    let b = b.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((a, b))
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    annotations: PathBuf,
    /// Edge list file, or `auto` for the minimum spanning tree of the means.
    #[arg(long, default_value = "auto")]
    topology: String,
    #[arg(long)]
    out: PathBuf,
    /// Wrist landmark pair used to normalize pixel annotations.
    #[arg(long, value_parser = parse_pair, default_value = "0,1")]
    wrist: (usize, usize),
    #[arg(long, default_value_t = DEFAULT_UNARY_SIGMA)]
    unary_sigma: f64,
    #[arg(long, default_value_t = DEFAULT_VARIANCE_FRACTION)]
    variance_fraction: f64,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Grid size `WxH`; defaults to the annotation header's size.
    #[arg(long)]
    size: Option<String>,
    /// Millimeters per pixel, required for millimeter annotations.
    #[arg(long)]
    scale: Option<f64>,
}

#[derive(Args)]
struct LbpArgs {
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    damping: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
}

impl LbpArgs {
    fn apply(&self, base: LbpParams) -> LbpParams {
        LbpParams {
            max_iterations: self.max_iter.unwrap_or(base.max_iterations),
            damping: self.damping.unwrap_or(base.damping),
            tolerance: self.tol.unwrap_or(base.tolerance),
        }
    }
}

#[derive(Args)]
struct MatchArgs {
    #[arg(long)]
    stats: PathBuf,
    #[arg(long)]
    heatmap: PathBuf,
    /// Millimeters per pixel.
    #[arg(long)]
    scale: Option<f64>,
    /// Labeled shape in the annotation format.
    #[arg(long)]
    out: PathBuf,
    /// Diagnostic JSON-lines file; defaults to stdout.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    #[command(flatten)]
    lbp: LbpArgs,
}

#[derive(Args)]
struct GateArgs {
    #[arg(long)]
    stats: Option<PathBuf>,
    #[arg(long)]
    heatmaps: Option<PathBuf>,
    #[arg(long)]
    scale: Option<f64>,
    /// Landmarks checked against the posed mean, e.g. `0,1,2,3,4`.
    #[arg(long, value_delimiter = ',')]
    wrist_region: Option<Vec<usize>>,
    /// Wrist deviation limit in mm.
    #[arg(long)]
    limit: Option<f64>,
    /// Landmark pair allowed to coincide.
    #[arg(long, value_parser = parse_pair)]
    exempt: Option<(usize, usize)>,
    /// JSON-lines report: one verdict per image, then a summary record.
    #[arg(long)]
    out: PathBuf,
    /// Include wall-clock stage timings (makes output run-dependent).
    #[arg(long)]
    timings: bool,
    #[command(flatten)]
    lbp: LbpArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_RADII.to_vec())]
    radii: Vec<f64>,
    /// Millimeters per pixel, required for pixel annotations.
    #[arg(long)]
    scale: Option<f64>,
    /// Report file; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceArg {
    Beta,
    Posterior,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long, default_value_t = diffusion::DEFAULT_TIMESTEPS)]
    timesteps: usize,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_END)]
    beta_end: f64,
    /// Sample dimension; defaults to the oracle's.
    #[arg(long)]
    dim: Option<usize>,
    /// TOML file with `mu = [..]` and `cov = [[..], ..]`.
    #[arg(long)]
    oracle_gaussian: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, value_enum, default_value_t = VarianceArg::Beta)]
    variance: VarianceArg,
    /// One sample per line; defaults to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FixtureArgs {
    #[arg(long, default_value_t = 10)]
    n: usize,
    #[arg(long, default_value = "none")]
    corruption: Corruption,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DiffuseArgs {
    #[arg(long)]
    t: usize,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = diffusion::DEFAULT_TIMESTEPS)]
    timesteps: usize,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_START)]
    beta_start: f64,
    #[arg(long, default_value_t = diffusion::DEFAULT_BETA_END)]
    beta_end: f64,
}

enum Outcome {
    Done,
    Partial,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if cli.jobs > 0 {
        // ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.jobs).build_global();
    }
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Fallible<Outcome> {
    let config = cli.config.as_ref().map(PipelineConfig::load).transpose()?;
    match &cli.command {
        Command::Fit(a) => fit(a),
        Command::Render(a) => render(a),
        Command::Match(a) => match_one(a, config.as_ref()),
        Command::Gate(a) => gate_dir(a, config, cli),
        Command::Eval(a) => eval(a),
        Command::Sample(a) => sample(a, cli.seed),
        Command::Fixture(a) => {
            pipeline::synth_fixture(a.n, a.corruption, cli.seed, &a.out_dir)?;
            Ok(Outcome::Done)
        }
        Command::Diffuse(a) => diffuse(a, cli.seed),
    }
}

fn read_dataset(path: &Path) -> Fallible<Dataset> {
    let file = fs::File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(geometry::read_annotations(std::io::BufReader::new(file), None)?)
}

fn fit(a: &FitArgs) -> Fallible<Outcome> {
    let ds = read_dataset(&a.annotations)?;
    let spec = NormalizationSpec::new(a.wrist.0, a.wrist.1);
    let train = pipeline::prepare_training(&ds, &spec)?;
    let topology = match a.topology.as_str() {
        "auto" => None,
        path => Some(Topology::load(path, train.landmark_count)?),
    };
    let options = FitOptions {
        unary_sigma: a.unary_sigma,
        variance_fraction: a.variance_fraction,
        normalization: spec,
    };
    let stats = landmark_gate::shapestats::fit_stats(&train, topology, &options)?;
    stats.save(&a.out)?;
    Ok(Outcome::Done)
}

fn parse_size(s: &str) -> Fallible<(usize, usize)> {
    let (w, h) = s.split_once('x').ok_or("size must look like `256x256`")?;
    Ok((w.parse()?, h.parse()?))
}

fn render(a: &RenderArgs) -> Fallible<Outcome> {
    let ds = read_dataset(&a.annotations)?;
    let (width, height) = match (&a.size, ds.image_size) {
        (Some(s), _) => parse_size(s)?,
        (None, Some((w, h))) => (w as usize, h as usize),
        (None, None) => return Err("no --size given and the annotation header has none".into()),
    };
    fs::create_dir_all(&a.out_dir)?;
    let mut clipped_any = false;
    for (id, shape) in ds.ids.iter().zip(&ds.shapes) {
        let px = match shape.unit() {
            Unit::Pixels => shape.clone(),
            Unit::Millimeters => {
                let scale = a.scale.ok_or("--scale is required for millimeter annotations")?;
                geometry::mm_to_pixels(shape, scale)?
            }
        };
        let out = heatmap::render(px.points(), width, height, a.sigma)?;
        if !out.clipped.is_empty() {
            clipped_any = true;
            eprintln!("warning: {id}: landmarks {:?} outside the grid", out.clipped);
        }
        out.heatmap.save_pgm(a.out_dir.join(format!("{id}.pgm")))?;
    }
    Ok(if clipped_any { Outcome::Partial } else { Outcome::Done })
}

#[derive(Serialize)]
struct MatchDiagnostic<'a> {
    heatmap: String,
    energy: f64,
    converged: bool,
    iterations: usize,
    assignment: &'a [usize],
}

fn write_json_line(out: &mut dyn Write, value: &impl Serialize) -> Fallible<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

fn match_one(a: &MatchArgs, config: Option<&PipelineConfig>) -> Fallible<Outcome> {
    let stats = TrainStats::load(&a.stats)?;
    let scale = a
        .scale
        .or(config.map(|c| c.mm_per_px))
        .ok_or("--scale is required")?;
    let lbp = a.lbp.apply(config.map(|c| c.lbp).unwrap_or_default());
    let candidates = config.map(|c| c.candidates).unwrap_or_default();
    let h = Heatmap::load_pgm(&a.heatmap)?;
    let out = pipeline::label_heatmap(&h, &stats, scale, &candidates, &lbp)?;

    let id = a
        .heatmap
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "heatmap".into());
    let mut ds = Dataset::new(stats.landmark_count, Unit::Millimeters);
    ds.image_size = Some((h.width() as u32, h.height() as u32));
    ds.push(id.clone(), out.labeled.clone())?;
    ds.save(&a.out)?;

    let diag = MatchDiagnostic {
        heatmap: id,
        energy: out.labeling.energy,
        converged: out.labeling.converged,
        iterations: out.labeling.iterations,
        assignment: &out.labeling.assignment,
    };
    match &a.diagnostics {
        Some(path) => {
            let mut file = fs::File::create(path)?;
            write_json_line(&mut file, &diag)?;
        }
        None => write_json_line(&mut std::io::stdout().lock(), &diag)?,
    }
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct SummaryRecord<'a> {
    summary: &'a pipeline::GateSummary,
}

fn gate_dir(a: &GateArgs, config: Option<PipelineConfig>, cli: &Cli) -> Fallible<Outcome> {
    let mut cfg = match config {
        Some(cfg) => cfg,
        None => {
            let scale = a.scale.ok_or("--scale is required without --config")?;
            let region = a
                .wrist_region
                .clone()
                .ok_or("--wrist-region is required without --config")?;
            PipelineConfig::new(
                a.stats.clone().ok_or("--stats is required without --config")?,
                a.heatmaps.clone().ok_or("--heatmaps is required without --config")?,
                scale,
                GateConfig::new(region, scale),
            )
        }
    };
    if let Some(p) = &a.stats {
        cfg.stats_path = p.clone();
    }
    if let Some(p) = &a.heatmaps {
        cfg.heatmap_dir = p.clone();
    }
    if let Some(s) = a.scale {
        cfg.mm_per_px = s;
    }
    if let Some(r) = &a.wrist_region {
        cfg.gate.wrist_region_indices = r.iter().copied().collect();
    }
    if let Some(l) = a.limit {
        cfg.gate.wrist_distance_limit = l;
    }
    if let Some(p) = a.exempt {
        cfg.gate.coincidence_exempt_pair = p;
    }
    cfg.lbp = a.lbp.apply(cfg.lbp);
    cfg.seed = cli.seed;
    cfg.jobs = cli.jobs;
    cfg.record_timings = a.timings;

    let run = pipeline::gate_directory(&cfg)?;
    let mut out = std::io::BufWriter::new(fs::File::create(&a.out)?);
    for v in &run.verdicts {
        write_json_line(&mut out, v)?;
    }
    write_json_line(&mut out, &SummaryRecord { summary: &run.summary })?;
    out.flush()?;
    Ok(if run.has_failures() { Outcome::Partial } else { Outcome::Done })
}

fn to_mm(ds: &Dataset, scale: Option<f64>) -> Fallible<Vec<(String, Shape)>> {
    ds.ids
        .iter()
        .zip(&ds.shapes)
        .map(|(id, s)| {
            let mm = match s.unit() {
                Unit::Millimeters => s.clone(),
                Unit::Pixels => {
                    let scale = scale.ok_or("--scale is required for pixel annotations")?;
                    geometry::pixels_to_mm(s, scale)?
                }
            };
            Ok((id.clone(), mm))
        })
        .collect()
}

fn eval(a: &EvalArgs) -> Fallible<Outcome> {
    let pred = to_mm(&read_dataset(&a.pred)?, a.scale)?;
    let gt = to_mm(&read_dataset(&a.gt)?, a.scale)?;
    let lookup: std::collections::HashMap<&str, &Shape> = gt.iter().map(|(id, s)| (id.as_str(), s)).collect();
    let mut preds = Vec::with_capacity(pred.len());
    let mut truths = Vec::with_capacity(pred.len());
    for (id, s) in &pred {
        let g = lookup
            .get(id.as_str())
            .ok_or_else(|| format!("no ground truth for `{id}`"))?;
        preds.push(s.clone());
        truths.push((*g).clone());
    }
    let report = gate::evaluate(&preds, &truths, &a.radii)?;
    let text = toml::to_string(&report)?;
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Done)
}

#[derive(Deserialize)]
struct GaussianFile {
    mu: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

fn sample(a: &SampleArgs, seed: u64) -> Fallible<Outcome> {
    let sched = diffusion::make_schedule(a.timesteps, a.beta_start, a.beta_end)?;
    let variance = match a.variance {
        VarianceArg::Beta => ReverseVariance::Beta,
        VarianceArg::Posterior => ReverseVariance::PosteriorBeta,
    };
    let oracle: Option<GaussianFile> = match &a.oracle_gaussian {
        Some(path) => Some(toml::from_str(&fs::read_to_string(path)?)?),
        None => None,
    };
    let (predictor, dim): (Box<dyn NoisePredictor + Sync>, usize) = match (oracle, a.dim) {
        (Some(g), dim) => {
            if dim.is_some_and(|d| d != g.mu.len()) {
                return Err(format!("--dim disagrees with oracle dimension {}", g.mu.len()).into());
            }
            let n = g.mu.len();
            (Box::new(AnalyticGaussianPredictor::new(&g.mu, &g.cov, &sched)?), n)
        }
        (None, Some(d)) => (Box::new(ZeroPredictor), d),
        (None, None) => return Err("--dim is required without --oracle-gaussian".into()),
    };
    let samples = (0..a.count)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            diffusion::sample(predictor.as_ref(), dim, &sched, variance, &mut rng)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut text = String::new();
    for s in &samples {
        let row: Vec<String> = s.iter().map(|v| v.to_string()).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    match &a.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(Outcome::Done)
}

fn diffuse(a: &DiffuseArgs, seed: u64) -> Fallible<Outcome> {
    let sched = diffusion::make_schedule(a.timesteps, a.beta_start, a.beta_end)?;
    let h = Heatmap::load_pgm(&a.input)?;
    let x0 = heatmap::to_model_range(&h)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    let noisy = diffusion::forward_sample(&x0, a.t, &eps, &sched)?;
    let out = heatmap::from_model_range(h.width(), h.height(), &heatmap::clip_to_model_range(&noisy))?;
    out.save_pgm(&a.out)?;
    Ok(Outcome::Done)
}
