//! Gaussian landmark heatmaps, local-maximum candidate extraction, and the
//! 16-bit PGM file format.
//!
//! Pixel `(col, row)` is centered on the continuous coordinate `(x = col, y = row)`.
//! Overlapping peaks combine with `max`, so rendered values stay in `[0, 1]`
//! even when landmarks nearly coincide.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

pub const DEFAULT_SIGMA: f64 = 1.0;
pub const DEFAULT_WINDOW: usize = 3;
pub const DEFAULT_MIN_VALUE: f64 = 0.05;

const PGM_MAXVAL: u32 = 65535;

#[derive(Debug, Error)]
pub enum HeatmapError {
    #[error("heatmap dimensions must be positive, got {0}x{1}")]
    EmptyGrid(usize, usize),
    #[error("sigma must be finite and > 0, got {0}")]
    InvalidSigma(f64),
    #[error("value {value} at index {index} outside {range}")]
    OutOfRange {
        index: usize,
        value: f64,
        range: &'static str,
    },
    #[error("grid has {found} values, expected {expected}")]
    SizeMismatch { expected: usize, found: usize },
    #[error("invalid PGM: {0}")]
    InvalidPgm(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = HeatmapError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HeatmapError::EmptyGrid(width, height));
        }
        Ok(Self {
            width,
            height,
            values: vec![0.0; width * height],
        })
    }

    /// Wraps a row-major grid, checking that every value is finite and in `[0, 1]`.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(HeatmapError::EmptyGrid(width, height));
        }
        if values.len() != width * height {
            return Err(HeatmapError::SizeMismatch {
                expected: width * height,
                found: values.len(),
            });
        }
        check_range(&values, 0.0, 1.0, "[0, 1]")?;
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn contains(&self, p: &Point2) -> bool {
        p.x >= 0.0
            && p.y >= 0.0
            && p.x <= (self.width - 1) as f64
            && p.y <= (self.height - 1) as f64
    }

    /// Writes a binary 16-bit PGM (`P5`, maxval 65535) storing `round(v * 65535)`.
    pub fn write_pgm(&self, mut out: impl Write) -> Result<()> {
        write!(out, "P5\n{} {}\n{}\n", self.width, self.height, PGM_MAXVAL)?;
        let mut bytes = Vec::with_capacity(self.values.len() * 2);
        for &v in &self.values {
            let q = (v * PGM_MAXVAL as f64).round() as u16;
            bytes.extend_from_slice(&q.to_be_bytes());
        }
        out.write_all(&bytes)?;
        Ok(())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_pgm(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_pgm(mut input: impl Read) -> Result<Self> {
        let mut data = Vec::new();
        input.read_to_end(&mut data)?;
        let mut cursor = 0usize;
        let magic = next_token(&data, &mut cursor)?;
        if magic != "P5" {
            return Err(HeatmapError::InvalidPgm(format!("bad magic `{magic}`")));
        }
        let width = parse_usize(&next_token(&data, &mut cursor)?)?;
        let height = parse_usize(&next_token(&data, &mut cursor)?)?;
        let maxval = parse_usize(&next_token(&data, &mut cursor)?)?;
        if maxval == 0 || maxval > 65535 {
            return Err(HeatmapError::InvalidPgm(format!("bad maxval {maxval}")));
        }
        // exactly one whitespace byte separates the header from the raster
        cursor += 1;
        let bytes_per_sample = if maxval > 255 { 2 } else { 1 };
        let expected = width * height * bytes_per_sample;
        let raster = data
            .get(cursor..)
            .filter(|r| r.len() >= expected)
            .ok_or_else(|| HeatmapError::InvalidPgm("truncated raster".into()))?;
        let scale = maxval as f64;
        let values = (0..width * height)
            .map(|i| {
                let raw = if bytes_per_sample == 2 {
                    u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as usize
                } else {
                    raster[i] as usize
                };
                (raw.min(maxval)) as f64 / scale
            })
            .collect();
        Heatmap::from_values(width, height, values)
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_pgm(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn next_token(data: &[u8], cursor: &mut usize) -> Result<String> {
    loop {
        while *cursor < data.len() && data[*cursor].is_ascii_whitespace() {
            *cursor += 1;
        }
        if *cursor < data.len() && data[*cursor] == b'#' {
            while *cursor < data.len() && data[*cursor] != b'\n' {
                *cursor += 1;
            }
            continue;
        }
        break;
    }
    let start = *cursor;
    while *cursor < data.len() && !data[*cursor].is_ascii_whitespace() {
        *cursor += 1;
    }
    if start == *cursor {
        return Err(HeatmapError::InvalidPgm("truncated header".into()));
    }
    Ok(String::from_utf8_lossy(&data[start..*cursor]).into_owned())
}

fn parse_usize(token: &str) -> Result<usize> {
    token
        .parse()
        .map_err(|_| HeatmapError::InvalidPgm(format!("bad header field `{token}`")))
}

fn check_range(values: &[f64], lo: f64, hi: f64, range: &'static str) -> Result<()> {
    match values
        .iter()
        .position(|v| !v.is_finite() || *v < lo || *v > hi)
    {
        Some(index) => Err(HeatmapError::OutOfRange {
            index,
            value: values[index],
            range,
        }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub heatmap: Heatmap,
    /// Landmarks whose centers fall outside the grid. Their Gaussians are still
    /// evaluated, so only the part overlapping the grid is visible.
    pub clipped: Vec<usize>,
}

/// Renders `exp(-d^2 / (2 sigma^2))` peaks at each landmark (pixel units), combined by max.
pub fn render(points: &[Point2], width: usize, height: usize, sigma: f64) -> Result<RenderOutput> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(HeatmapError::InvalidSigma(sigma));
    }
    let mut heatmap = Heatmap::zeros(width, height)?;
    let clipped = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !heatmap.contains(p))
        .map(|(i, _)| i)
        .collect();
    if !points.is_empty() {
        let inv = 1.0 / (2.0 * sigma * sigma);
        for row in 0..height {
            for col in 0..width {
                let pixel = Point2::new(col as f64, row as f64);
                // max_i exp(-d_i^2 k) == exp(-min_i d_i^2 k)
                let nearest = points
                    .iter()
                    .map(|p| p.distance_squared(&pixel))
                    .fold(f64::INFINITY, f64::min);
                heatmap.values[row * width + col] = (-nearest * inv).exp();
            }
        }
    }
    Ok(RenderOutput { heatmap, clipped })
}

/// Affine map `v -> 2v - 1` into the diffusion model's input range.
pub fn to_model_range(h: &Heatmap) -> Result<Vec<f64>> {
    check_range(&h.values, 0.0, 1.0, "[0, 1]")?;
    Ok(h.values.iter().map(|v| 2.0 * v - 1.0).collect())
}

/// Inverse of [`to_model_range`]; input must already lie in `[-1, 1]`.
pub fn from_model_range(width: usize, height: usize, values: &[f64]) -> Result<Heatmap> {
    check_range(values, -1.0, 1.0, "[-1, 1]")?;
    let mapped = values.iter().map(|u| ((u + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
    Heatmap::from_values(width, height, mapped)
}

/// Clamps a raw model sample into `[-1, 1]`; NaN becomes -1.
pub fn clip_to_model_range(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if v.is_nan() { -1.0 } else { v.clamp(-1.0, 1.0) })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub position: Point2,
    pub peak_value: f64,
}

/// Finds up to `count` local maxima of a `(2 window + 1)^2` maximum filter with
/// value `>= min_value`, sorted by value descending.
///
/// Pixels are compared under a total order: higher value first, then earlier
/// row-major index. A pixel is a maximum when it beats every other pixel in its
/// window under that order, so plateaus yield exactly one candidate.
pub fn extract_candidates(
    h: &Heatmap,
    count: usize,
    window: usize,
    min_value: f64,
) -> Vec<Candidate> {
    if count == 0 {
        return Vec::new();
    }
    let window = window.max(1);
    let (w, ht) = (h.width, h.height);
    let mut maxima: Vec<(usize, f64)> = Vec::new();
    for row in 0..ht {
        for col in 0..w {
            let idx = row * w + col;
            let v = h.values[idx];
            if v < min_value {
                continue;
            }
            let r0 = row.saturating_sub(window);
            let r1 = (row + window).min(ht - 1);
            let c0 = col.saturating_sub(window);
            let c1 = (col + window).min(w - 1);
            let is_max = (r0..=r1).all(|r| {
                (c0..=c1).all(|c| {
                    let j = r * w + c;
                    let u = h.values[j];
                    j == idx || v > u || (v == u && idx < j)
                })
            });
            if is_max {
                maxima.push((idx, v));
            }
        }
    }
    maxima.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    maxima.truncate(count);
    maxima
        .into_iter()
        .map(|(idx, v)| Candidate {
            position: Point2::new((idx % w) as f64, (idx / w) as f64),
            peak_value: v,
        })
        .collect()
}
