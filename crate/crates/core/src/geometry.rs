//! Geometry primitives, wrist-width normalization, and the annotation text format.
//!
//! Annotation files look like this:
//!
//! ```text
//! L=3 unit=px
//! img001 0 0 1 0 0 1
//! img002 0.5 0.25 1.5 0 0 1.75
//! ```
//!
//! The header may carry an optional `size=<width>x<height>` token. Records are
//! whitespace separated; the first token is the record id, followed by `2L`
//! decimals (`x0 y0 x1 y1 ...`). Coordinates are written with shortest
//! round-trip formatting so a parse/write/parse cycle is bit-exact.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: expected {expected} landmarks, found {found}")]
    LandmarkCountMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: non-finite coordinate")]
    NonFinite { line: usize },
    #[error("shape needs at least 2 landmarks, got {0}")]
    TooFewLandmarks(usize),
    #[error("non-finite coordinate at landmark {0}")]
    NonFinitePoint(usize),
    #[error("wrist landmarks {0} and {1} coincide")]
    CoincidentWrist(usize, usize),
    #[error("invalid normalization: {0}")]
    InvalidNormalization(String),
    #[error("scale must be finite and > 0, got {0}")]
    InvalidScale(f64),
    #[error("expected unit {expected}, found {found}")]
    UnitMismatch { expected: Unit, found: Unit },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = GeometryError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_squared(&self, other: &Point2) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn scaled(&self, factor: f64) -> Point2 {
        Point2::new(self.x * factor, self.y * factor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    #[serde(rename = "mm")]
    Millimeters,
    #[serde(rename = "px")]
    Pixels,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Millimeters => "mm",
            Unit::Pixels => "px",
        })
    }
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mm" => Ok(Unit::Millimeters),
            "px" => Ok(Unit::Pixels),
            other => Err(format!("unknown unit `{other}`")),
        }
    }
}

/// An ordered landmark configuration. Index `i` is landmark `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Shape {
    points: Vec<Point2>,
    unit: Unit,
}

impl Shape {
    pub fn new(points: Vec<Point2>, unit: Unit) -> Result<Self> {
        if points.len() < 2 {
            return Err(GeometryError::TooFewLandmarks(points.len()));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(GeometryError::NonFinitePoint(i));
        }
        Ok(Self { points, unit })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> Point2 {
        centroid(&self.points)
    }

    /// Flattened `[x0, y0, x1, y1, ...]` vector.
    pub fn to_vector(&self) -> Vec<f64> {
        self.points.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    pub fn from_vector(values: &[f64], unit: Unit) -> Result<Self> {
        let points = values
            .chunks_exact(2)
            .map(|c| Point2::new(c[0], c[1]))
            .collect();
        Shape::new(points, unit)
    }

    pub(crate) fn map_points(&self, unit: Unit, f: impl Fn(&Point2) -> Point2) -> Shape {
        Shape {
            points: self.points.iter().map(f).collect(),
            unit,
        }
    }
}

pub fn centroid(points: &[Point2]) -> Point2 {
    let n = points.len().max(1) as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Point2::new(sx / n, sy / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub wrist_index_a: usize,
    pub wrist_index_b: usize,
    #[serde(default = "default_target_width")]
    pub target_width: f64,
}

fn default_target_width() -> f64 {
    NormalizationSpec::DEFAULT_TARGET_WIDTH
}

impl NormalizationSpec {
    pub const DEFAULT_TARGET_WIDTH: f64 = 50.0;

    pub fn new(wrist_index_a: usize, wrist_index_b: usize) -> Self {
        Self {
            wrist_index_a,
            wrist_index_b,
            target_width: Self::DEFAULT_TARGET_WIDTH,
        }
    }

    pub fn validate(&self, landmark_count: usize) -> Result<()> {
        let (a, b) = (self.wrist_index_a, self.wrist_index_b);
        if a == b {
            return Err(GeometryError::InvalidNormalization(format!(
                "wrist indices must differ, both are {a}"
            )));
        }
        if a >= landmark_count || b >= landmark_count {
            return Err(GeometryError::InvalidNormalization(format!(
                "wrist indices ({a}, {b}) out of range for {landmark_count} landmarks"
            )));
        }
        if !(self.target_width.is_finite() && self.target_width > 0.0) {
            return Err(GeometryError::InvalidNormalization(format!(
                "target width must be > 0, got {}",
                self.target_width
            )));
        }
        Ok(())
    }
}

/// Scales `shape` about the origin so the wrist pair lies `target_width` mm apart.
/// Returns the millimeter shape and the applied scale factor.
pub fn normalize_to_wrist(shape: &Shape, spec: &NormalizationSpec) -> Result<(Shape, f64)> {
    spec.validate(shape.len())?;
    let a = shape.points[spec.wrist_index_a];
    let b = shape.points[spec.wrist_index_b];
    let width = a.distance(&b);
    if width == 0.0 {
        return Err(GeometryError::CoincidentWrist(
            spec.wrist_index_a,
            spec.wrist_index_b,
        ));
    }
    let scale = spec.target_width / width;
    let normalized = shape.map_points(Unit::Millimeters, |p| p.scaled(scale));
    Ok((normalized, scale))
}

pub fn pixels_to_mm(shape: &Shape, mm_per_px: f64) -> Result<Shape> {
    if !(mm_per_px.is_finite() && mm_per_px > 0.0) {
        return Err(GeometryError::InvalidScale(mm_per_px));
    }
    if shape.unit != Unit::Pixels {
        return Err(GeometryError::UnitMismatch {
            expected: Unit::Pixels,
            found: shape.unit,
        });
    }
    Ok(shape.map_points(Unit::Millimeters, |p| p.scaled(mm_per_px)))
}

pub fn mm_to_pixels(shape: &Shape, mm_per_px: f64) -> Result<Shape> {
    if !(mm_per_px.is_finite() && mm_per_px > 0.0) {
        return Err(GeometryError::InvalidScale(mm_per_px));
    }
    if shape.unit != Unit::Millimeters {
        return Err(GeometryError::UnitMismatch {
            expected: Unit::Millimeters,
            found: shape.unit,
        });
    }
    Ok(shape.map_points(Unit::Pixels, |p| p.scaled(1.0 / mm_per_px)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub shapes: Vec<Shape>,
    pub image_size: Option<(u32, u32)>,
    pub landmark_count: usize,
    pub unit: Unit,
}

impl Dataset {
    pub fn new(landmark_count: usize, unit: Unit) -> Self {
        Self {
            ids: Vec::new(),
            shapes: Vec::new(),
            image_size: None,
            landmark_count,
            unit,
        }
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn push(&mut self, id: impl Into<String>, shape: Shape) -> Result<()> {
        if shape.len() != self.landmark_count {
            return Err(GeometryError::LandmarkCountMismatch {
                line: 0,
                expected: self.landmark_count,
                found: shape.len(),
            });
        }
        if shape.unit() != self.unit {
            return Err(GeometryError::UnitMismatch {
                expected: self.unit,
                found: shape.unit(),
            });
        }
        self.ids.push(id.into());
        self.shapes.push(shape);
        Ok(())
    }

    pub fn write_to(&self, mut out: impl Write) -> Result<()> {
        write!(out, "L={} unit={}", self.landmark_count, self.unit)?;
        if let Some((w, h)) = self.image_size {
            write!(out, " size={w}x{h}")?;
        }
        writeln!(out)?;
        for (id, shape) in self.ids.iter().zip(&self.shapes) {
            write!(out, "{id}")?;
            for p in shape.points() {
                write!(out, " {} {}", p.x, p.y)?;
            }
            writeln!(out)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut out = std::io::BufWriter::new(file);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }
}

/// Reads an annotation file, checking every record against `landmark_count`.
pub fn parse_annotations(path: impl AsRef<Path>, landmark_count: usize) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    read_annotations(std::io::BufReader::new(file), Some(landmark_count))
}

/// Reads annotations from any reader. With `expected_count = None` the header's
/// `L=` value is trusted.
pub fn read_annotations(reader: impl BufRead, expected_count: Option<usize>) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let (header_no, header) = loop {
        match lines.next() {
            Some((i, line)) => {
                let line = line?;
                if !line.trim().is_empty() {
                    break (i + 1, line);
                }
            }
            None => {
                return Err(GeometryError::Malformed {
                    line: 1,
                    message: "missing header".into(),
                })
            }
        }
    };
    let (declared, unit, image_size) = parse_header(&header, header_no)?;
    let landmark_count = expected_count.unwrap_or(declared);
    if declared != landmark_count {
        return Err(GeometryError::LandmarkCountMismatch {
            line: header_no,
            expected: landmark_count,
            found: declared,
        });
    }

    let mut dataset = Dataset::new(landmark_count, unit);
    dataset.image_size = image_size;
    for (i, line) in lines {
        let line_no = i + 1;
        let line = line?;
        let mut tokens = line.split_whitespace();
        let Some(id) = tokens.next() else { continue };
        let values = tokens
            .map(|t| {
                t.parse::<f64>().map_err(|_| GeometryError::Malformed {
                    line: line_no,
                    message: format!("invalid number `{t}`"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() % 2 != 0 {
            return Err(GeometryError::Malformed {
                line: line_no,
                message: "odd number of coordinates".into(),
            });
        }
        if values.len() / 2 != landmark_count {
            return Err(GeometryError::LandmarkCountMismatch {
                line: line_no,
                expected: landmark_count,
                found: values.len() / 2,
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { line: line_no });
        }
        let shape = Shape::from_vector(&values, unit).map_err(|e| GeometryError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        dataset.ids.push(id.to_string());
        dataset.shapes.push(shape);
    }
    Ok(dataset)
}

fn parse_header(header: &str, line: usize) -> Result<(usize, Unit, Option<(u32, u32)>)> {
    let malformed = |message: String| GeometryError::Malformed { line, message };
    let mut count = None;
    let mut unit = None;
    let mut size = None;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| malformed(format!("expected key=value, found `{token}`")))?;
        match key {
            "L" => {
                count = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| malformed(format!("invalid landmark count `{value}`")))?,
                )
            }
            "unit" => unit = Some(value.parse::<Unit>().map_err(malformed)?),
            "size" => {
                let (w, h) = value
                    .split_once('x')
                    .ok_or_else(|| malformed(format!("invalid size `{value}`")))?;
                let parse = |s: &str| {
                    s.parse::<u32>()
                        .map_err(|_| malformed(format!("invalid size `{value}`")))
                };
                size = Some((parse(w)?, parse(h)?));
            }
            other => return Err(malformed(format!("unknown header key `{other}`"))),
        }
    }
    let count = count.ok_or_else(|| malformed("header lacks `L=`".into()))?;
    let unit = unit.ok_or_else(|| malformed("header lacks `unit=`".into()))?;
    Ok((count, unit, size))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn px(points: &[(f64, f64)]) -> Shape {
        Shape::new(
            points.iter().map(|&(x, y)| Point2::new(x, y)).collect(),
            Unit::Pixels,
        )
        .unwrap()
    }

    #[test]
    fn parses_single_record() {
        let text = "L=3 unit=px\nrec 0 0 1 0 0 1\n";
        let ds = read_annotations(text.as_bytes(), Some(3)).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.ids, vec!["rec"]);
        assert_eq!(ds.shapes[0].points()[1], Point2::new(1.0, 0.0));
        assert_eq!(ds.unit, Unit::Pixels);
    }

    #[test]
    fn parses_37_landmark_records() {
        let mut text = String::from("L=37 unit=mm size=256x256\n");
        for r in 0..3 {
            text.push_str(&format!("r{r}"));
            for i in 0..37 {
                text.push_str(&format!(" {} {}", i as f64 * 1.5, r as f64 + 0.25));
            }
            text.push('\n');
        }
        let ds = read_annotations(text.as_bytes(), Some(37)).unwrap();
        assert_eq!(ds.landmark_count, 37);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.image_size, Some((256, 256)));
    }

    #[test]
    fn rejects_short_record() {
        let mut text = String::from("L=37 unit=mm\nbad");
        for i in 0..36 {
            text.push_str(&format!(" {i} {i}"));
        }
        let err = read_annotations(text.as_bytes(), Some(37)).unwrap_err();
        assert!(matches!(
            err,
            GeometryError::LandmarkCountMismatch {
                line: 2,
                expected: 37,
                found: 36
            }
        ));
    }

    #[test]
    fn reports_line_of_malformed_number() {
        let text = "L=2 unit=px\na 0 0 1 1\nb 0 zero 1 1\n";
        match read_annotations(text.as_bytes(), Some(2)).unwrap_err() {
            GeometryError::Malformed { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_non_finite() {
        let text = "L=2 unit=px\na 0 NaN 1 1\n";
        assert!(matches!(
            read_annotations(text.as_bytes(), Some(2)).unwrap_err(),
            GeometryError::NonFinite { line: 2 }
        ));
    }

    #[test]
    fn wrist_scale_is_ratio() {
        let shape = px(&[(0.0, 0.0), (100.0, 0.0), (30.0, 40.0)]);
        let spec = NormalizationSpec::new(0, 1);
        let (mm, scale) = normalize_to_wrist(&shape, &spec).unwrap();
        assert_eq!(scale, 0.5);
        assert_eq!(mm.unit(), Unit::Millimeters);
        assert_eq!(mm.points()[2], Point2::new(15.0, 20.0));
    }

    #[test]
    fn wrist_at_target_is_identity() {
        let shape = px(&[(0.0, 0.0), (30.0, 40.0), (7.0, -3.0)]);
        let (mm, scale) = normalize_to_wrist(&shape, &NormalizationSpec::new(0, 1)).unwrap();
        assert_eq!(scale, 1.0);
        assert_eq!(mm.points(), shape.points());
    }

    #[test]
    fn wrist_25_doubles_distances() {
        let shape = px(&[(1.0, 2.0), (26.0, 2.0), (5.0, 9.0)]);
        let (mm, scale) = normalize_to_wrist(&shape, &NormalizationSpec::new(0, 1)).unwrap();
        assert_eq!(scale, 2.0);
        let expected = [(2.0, 4.0), (52.0, 4.0), (10.0, 18.0)];
        for (p, &(x, y)) in mm.points().iter().zip(&expected) {
            assert!((p.x - x).abs() < 1e-12 && (p.y - y).abs() < 1e-12);
        }
        let pts = shape.points();
        let out = mm.points();
        for i in 0..3 {
            for j in (i + 1)..3 {
                let before = pts[i].distance(&pts[j]);
                let after = out[i].distance(&out[j]);
                assert!((after - 2.0 * before).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coincident_wrist_is_error() {
        let shape = px(&[(3.0, 3.0), (3.0, 3.0), (0.0, 1.0)]);
        assert!(matches!(
            normalize_to_wrist(&shape, &NormalizationSpec::new(0, 1)),
            Err(GeometryError::CoincidentWrist(0, 1))
        ));
    }

    #[test]
    fn invalid_spec_rejected() {
        let shape = px(&[(0.0, 0.0), (1.0, 0.0)]);
        assert!(normalize_to_wrist(&shape, &NormalizationSpec::new(1, 1)).is_err());
        assert!(normalize_to_wrist(&shape, &NormalizationSpec::new(0, 2)).is_err());
        let mut spec = NormalizationSpec::new(0, 1);
        spec.target_width = 0.0;
        assert!(normalize_to_wrist(&shape, &spec).is_err());
    }

    #[test]
    fn pixel_conversion() {
        let shape = px(&[(10.0, 20.0), (0.0, 0.0)]);
        let mm = pixels_to_mm(&shape, 0.5).unwrap();
        assert_eq!(mm.points()[0], Point2::new(5.0, 10.0));
        assert_eq!(mm.unit(), Unit::Millimeters);
        assert_eq!(pixels_to_mm(&shape, 1.0).unwrap().points(), shape.points());
        assert!(matches!(
            pixels_to_mm(&shape, 0.0),
            Err(GeometryError::InvalidScale(_))
        ));
        assert!(pixels_to_mm(&shape, -1.0).is_err());
    }

    #[test]
    fn pixel_roundtrip_at_037() {
        let shape = px(&[(12.345, 678.9), (-3.25, 0.001), (1e3, 7.0)]);
        let back = mm_to_pixels(&pixels_to_mm(&shape, 0.37).unwrap(), 0.37).unwrap();
        for (a, b) in back.points().iter().zip(shape.points()) {
            assert!((a.x - b.x).abs() < 1e-9 && (a.y - b.y).abs() < 1e-9);
        }
    }

    fn arb_shape() -> impl Strategy<Value = Shape> {
        prop::collection::vec((-500.0..500.0f64, -500.0..500.0f64), 3..12).prop_filter_map(
            "wrist pair must be separated",
            |pts| {
                let shape = px(&pts);
                (shape.points()[0].distance(&shape.points()[1]) > 1e-3).then_some(shape)
            },
        )
    }

    proptest! {
        #[test]
        fn normalization_idempotent(shape in arb_shape()) {
            let spec = NormalizationSpec::new(0, 1);
            let (once, _) = normalize_to_wrist(&shape, &spec).unwrap();
            let (twice, _) = normalize_to_wrist(&once, &spec).unwrap();
            for (a, b) in once.points().iter().zip(twice.points()) {
                let tol = 1e-12 * a.x.abs().max(a.y.abs()).max(1.0);
                prop_assert!((a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol);
            }
        }

        #[test]
        fn normalization_preserves_distance_ratios(shape in arb_shape()) {
            let (norm, _) = normalize_to_wrist(&shape, &NormalizationSpec::new(0, 1)).unwrap();
            let (p, q) = (shape.points(), norm.points());
            let base_before = p[0].distance(&p[1]);
            let base_after = q[0].distance(&q[1]);
            for i in 0..p.len() {
                for j in (i + 1)..p.len() {
                    let before = p[i].distance(&p[j]) / base_before;
                    let after = q[i].distance(&q[j]) / base_after;
                    prop_assert!((before - after).abs() <= 1e-12 * before.max(1.0));
                }
            }
        }

        #[test]
        fn text_roundtrip_is_bit_exact(
            rows in prop::collection::vec(prop::collection::vec(any::<f64>().prop_filter("finite", |v| v.is_finite()), 6), 1..5)
        ) {
            let mut ds = Dataset::new(3, Unit::Millimeters);
            for (i, row) in rows.iter().enumerate() {
                ds.push(format!("s{i}"), Shape::from_vector(row, Unit::Millimeters).unwrap()).unwrap();
            }
            let mut buf = Vec::new();
            ds.write_to(&mut buf).unwrap();
            let parsed = read_annotations(buf.as_slice(), Some(3)).unwrap();
            let mut buf2 = Vec::new();
            parsed.write_to(&mut buf2).unwrap();
            let reparsed = read_annotations(buf2.as_slice(), Some(3)).unwrap();
            for (a, b) in ds.shapes.iter().zip(&reparsed.shapes) {
                for (p, q) in a.points().iter().zip(b.points()) {
                    prop_assert_eq!(p.x.to_bits(), q.x.to_bits());
                    prop_assert_eq!(p.y.to_bits(), q.y.to_bits());
                }
            }
            prop_assert_eq!(buf, buf2);
        }
    }
}
