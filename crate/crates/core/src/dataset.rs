//! Landmark annotations: the canonical JSONL manifest, a positional
//! DeepFashion-style importer, trainability filtering, model-space
//! preparation and a synthetic garment generator.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::geometry::{clockwise_sort, rasterize, resize_planar, Point};
use crate::image_io::{self, ImageRgb};
use crate::tensor::Tensor;

pub const LANDMARK_COUNT: usize = 8;

/// Storage order of every [`LandmarkSet`].
pub const LANDMARK_NAMES: [&str; LANDMARK_COUNT] = [
    "left collar",
    "right collar",
    "left sleeve",
    "right sleeve",
    "left waistline",
    "right waistline",
    "left hem",
    "right hem",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Visibility {
    Visible,
    Occluded,
    CutOff,
}

impl Visibility {
    /// Code used in the canonical manifest.
    pub fn code(self) -> u8 {
        match self {
            Visibility::Visible => 0,
            Visibility::Occluded => 1,
            Visibility::CutOff => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Visibility::Visible),
            1 => Some(Visibility::Occluded),
            2 => Some(Visibility::CutOff),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClothesType {
    Upper,
    Lower,
    FullBody,
}

impl ClothesType {
    /// DeepFashion category code: 1 upper, 2 lower, 3 full body.
    pub fn from_code(code: u32) -> Option<Self> {
        match code {
            1 => Some(ClothesType::Upper),
            2 => Some(ClothesType::Lower),
            3 => Some(ClothesType::FullBody),
            _ => None,
        }
    }

    pub fn landmark_slots(self) -> usize {
        match self {
            ClothesType::Upper => 6,
            ClothesType::Lower => 4,
            ClothesType::FullBody => 8,
        }
    }
}

/// Serialized as `[x, y, visibility_code]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub visibility: Visibility,
}

impl Landmark {
    pub fn visible(x: f64, y: f64) -> Self {
        Landmark {
            x,
            y,
            visibility: Visibility::Visible,
        }
    }

    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

impl Serialize for Landmark {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        (self.x, self.y, self.visibility.code()).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Landmark {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (x, y, code) = <(f64, f64, u8)>::deserialize(d)?;
        let visibility = Visibility::from_code(code).ok_or_else(|| {
            serde::de::Error::custom(format!("unknown visibility code {code}"))
        })?;
        Ok(Landmark { x, y, visibility })
    }
}

/// Exactly eight landmarks in [`LANDMARK_NAMES`] order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LandmarkSet([Landmark; LANDMARK_COUNT]);

impl LandmarkSet {
    pub fn new(landmarks: [Landmark; LANDMARK_COUNT]) -> Result<Self> {
        if let Some(i) = landmarks
            .iter()
            .position(|l| !(l.x.is_finite() && l.y.is_finite()))
        {
            return Err(Error::NonFinite {
                location: format!("landmark {} ({})", i, LANDMARK_NAMES[i]),
                value: if landmarks[i].x.is_finite() {
                    landmarks[i].y
                } else {
                    landmarks[i].x
                },
            });
        }
        Ok(LandmarkSet(landmarks))
    }

    pub fn from_slice(landmarks: &[Landmark]) -> Result<Self> {
        let arr: [Landmark; LANDMARK_COUNT] =
            landmarks.try_into().map_err(|_| Error::ShapeMismatch {
                op: "LandmarkSet",
                dim: "landmark count",
                expected: LANDMARK_COUNT,
                actual: landmarks.len(),
            })?;
        Self::new(arr)
    }

    /// Visible landmarks from `[x0, y0, x1, y1, ...]`.
    pub fn from_interleaved(values: &[f64]) -> Result<Self> {
        if values.len() != 2 * LANDMARK_COUNT {
            return Err(Error::ShapeMismatch {
                op: "LandmarkSet::from_interleaved",
                dim: "coordinate count",
                expected: 2 * LANDMARK_COUNT,
                actual: values.len(),
            });
        }
        Self::new(std::array::from_fn(|i| {
            Landmark::visible(values[2 * i], values[2 * i + 1])
        }))
    }

    pub fn landmarks(&self) -> &[Landmark; LANDMARK_COUNT] {
        &self.0
    }

    pub fn points(&self) -> [Point; LANDMARK_COUNT] {
        self.0.map(|l| l.point())
    }

    pub fn all_visible(&self) -> bool {
        self.0.iter().all(|l| l.visibility == Visibility::Visible)
    }

    pub fn interleaved(&self) -> [f64; 2 * LANDMARK_COUNT] {
        std::array::from_fn(|i| {
            let l = self.0[i / 2];
            if i % 2 == 0 {
                l.x
            } else {
                l.y
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotatedSample {
    /// Absolute, or relative to the manifest's directory.
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub clothes_type: ClothesType,
    /// Original pixel coordinates; as many as the clothes type has slots.
    pub landmarks: Vec<Landmark>,
}

impl AnnotatedSample {
    pub fn landmark_set(&self) -> Result<LandmarkSet> {
        LandmarkSet::from_slice(&self.landmarks)
    }

    pub fn is_trainable(&self) -> bool {
        self.clothes_type == ClothesType::FullBody
            && self.landmarks.len() == LANDMARK_COUNT
            && self
                .landmarks
                .iter()
                .all(|l| l.visibility == Visibility::Visible)
    }

    pub fn image_path(&self, base_dir: &Path) -> PathBuf {
        base_dir.join(&self.image)
    }
}

/// Ordered samples, persisted as one JSON object per line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Manifest {
    pub samples: Vec<AnnotatedSample>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&serde_json::to_string(s).expect("sample serializes"));
            out.push('\n');
        }
        out
    }

    /// Blank lines are ignored; `origin` only labels errors.
    pub fn parse_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let sample = serde_json::from_str(line).map_err(|e| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                message: e.to_string(),
            })?;
            samples.push(sample);
        }
        Ok(Manifest { samples })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_jsonl(&text, path)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    /// Checks that every referenced image exists.
    pub fn validate_images(&self, base_dir: &Path) -> Result<()> {
        for s in &self.samples {
            let path = s.image_path(base_dir);
            if !path.is_file() {
                return Err(Error::io(
                    path,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "image not found"),
                ));
            }
        }
        Ok(())
    }
}

/// Directory that relative image paths of a manifest file resolve against.
pub fn manifest_dir(manifest_path: &Path) -> PathBuf {
    match manifest_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

/// Maps annotation-file visibility codes onto [`Visibility`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VisibilityCodes {
    pub visible: i64,
    pub occluded: i64,
    pub cutoff: i64,
}

impl Default for VisibilityCodes {
    fn default() -> Self {
        VisibilityCodes {
            visible: 0,
            occluded: 1,
            cutoff: 2,
        }
    }
}

/// Column layout of a positional annotation file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImportLayout {
    /// Lines skipped before the first record (count line, column header).
    pub skip_lines: usize,
    /// A variation/pose column sits between the clothes type and the triplets.
    pub has_variation: bool,
    pub visibility: VisibilityCodes,
    /// Abort on the first malformed record instead of skipping it.
    pub strict: bool,
}

impl ImportLayout {
    /// The landmark benchmark's `list_landmarks.txt`: a count line, a
    /// header line, then `name type variation (vis x y)*`.
    pub fn benchmark_list() -> Self {
        ImportLayout {
            skip_lines: 2,
            has_variation: true,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawRecord {
    pub line: usize,
    pub image: String,
    pub clothes_type: ClothesType,
    pub landmarks: Vec<Landmark>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedAnnotations {
    pub records: Vec<RawRecord>,
    pub rejected: Vec<LineError>,
}

/// Parses positional annotation text. `origin` labels strict-mode errors.
pub fn parse_annotations(
    text: &str,
    layout: &ImportLayout,
    origin: &Path,
) -> Result<ParsedAnnotations> {
    let mut parsed = ParsedAnnotations::default();
    for (i, line) in text.lines().enumerate().skip(layout.skip_lines) {
        if line.trim().is_empty() {
            continue;
        }
        match parse_record(line, layout) {
            Ok((image, clothes_type, landmarks)) => parsed.records.push(RawRecord {
                line: i + 1,
                image,
                clothes_type,
                landmarks,
            }),
            Err(message) if layout.strict => {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    message,
                })
            }
            Err(message) => parsed.rejected.push(LineError {
                line: i + 1,
                message,
            }),
        }
    }
    Ok(parsed)
}

fn parse_record(
    line: &str,
    layout: &ImportLayout,
) -> std::result::Result<(String, ClothesType, Vec<Landmark>), String> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let fixed = if layout.has_variation { 3 } else { 2 };
    if tokens.len() < fixed {
        return Err(format!("expected at least {fixed} fields, found {}", tokens.len()));
    }
    let code: u32 = tokens[1]
        .parse()
        .map_err(|_| format!("bad clothes type {:?}", tokens[1]))?;
    let clothes_type =
        ClothesType::from_code(code).ok_or_else(|| format!("unknown clothes type {code}"))?;
    let values = &tokens[fixed..];
    let slots = clothes_type.landmark_slots();
    if values.len() != 3 * slots {
        return Err(format!(
            "clothes type {code} needs {} landmark values, found {}",
            3 * slots,
            values.len()
        ));
    }
    let codes = &layout.visibility;
    let landmarks = values
        .chunks_exact(3)
        .enumerate()
        .map(|(k, t)| {
            let vis: i64 = t[0]
                .parse()
                .map_err(|_| format!("landmark {k}: bad visibility {:?}", t[0]))?;
            let visibility = if vis == codes.visible {
                Visibility::Visible
            } else if vis == codes.occluded {
                Visibility::Occluded
            } else if vis == codes.cutoff {
                Visibility::CutOff
            } else {
                return Err(format!("landmark {k}: unknown visibility code {vis}"));
            };
            let coord = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("landmark {k}: bad coordinate {s:?}"))
            };
            Ok(Landmark {
                x: coord(t[1])?,
                y: coord(t[2])?,
                visibility,
            })
        })
        .collect::<std::result::Result<Vec<_>, String>>()?;
    Ok((tokens[0].to_string(), clothes_type, landmarks))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ImportReport {
    pub manifest: Manifest,
    pub parsed: usize,
    pub rejected: Vec<LineError>,
}

/// Reads an annotation file, resolves each image name under `images_dir`
/// and reads its dimensions. Records whose image cannot be read are
/// rejected like malformed lines. Image paths are stored absolute.
pub fn import_deepfashion(
    annotations: &Path,
    images_dir: &Path,
    layout: &ImportLayout,
) -> Result<ImportReport> {
    let text = fs::read_to_string(annotations).map_err(|e| Error::io(annotations, e))?;
    let images_dir = fs::canonicalize(images_dir).map_err(|e| Error::io(images_dir, e))?;
    let ParsedAnnotations {
        records,
        mut rejected,
    } = parse_annotations(&text, layout, annotations)?;
    let parsed = records.len();

    let mut samples = Vec::with_capacity(records.len());
    for rec in records {
        let path = images_dir.join(&rec.image);
        match image_io::dimensions(&path) {
            Ok((width, height)) => samples.push(AnnotatedSample {
                image: path.to_string_lossy().into_owned(),
                width,
                height,
                clothes_type: rec.clothes_type,
                landmarks: rec.landmarks,
            }),
            Err(e) if layout.strict => {
                return Err(Error::Parse {
                    path: annotations.to_path_buf(),
                    line: rec.line,
                    message: e.to_string(),
                })
            }
            Err(e) => rejected.push(LineError {
                line: rec.line,
                message: e.to_string(),
            }),
        }
    }
    for r in &rejected {
        warn!("{}: skipped {r}", annotations.display());
    }
    if samples.is_empty() {
        return Err(Error::Empty("annotation import: no valid records"));
    }
    info!(
        "imported {} of {} parsed records ({} rejected)",
        samples.len(),
        parsed,
        rejected.len()
    );
    Ok(ImportReport {
        manifest: Manifest { samples },
        parsed,
        rejected,
    })
}

/// Full-body samples with all eight landmarks visible.
pub fn filter_trainable(manifest: &Manifest) -> Manifest {
    Manifest {
        samples: manifest
            .samples
            .iter()
            .filter(|s| s.is_trainable())
            .cloned()
            .collect(),
    }
}

/// Largest coordinate strictly below `side`.
fn below(side: f64) -> f64 {
    f64::from_bits(side.to_bits() - 1)
}

/// Maps original-pixel landmarks into a `target × target` frame and
/// interleaves them. Returns the vector and how many coordinates were
/// clamped into `[0, target)`.
pub fn scale_landmarks(
    set: &LandmarkSet,
    width: usize,
    height: usize,
    target: usize,
) -> Result<([f64; 2 * LANDMARK_COUNT], usize)> {
    if width == 0 || height == 0 || target == 0 {
        return Err(Error::InvalidArgument {
            op: "scale_landmarks",
            reason: format!("dimensions must be positive, got {width}x{height} -> {target}"),
        });
    }
    let side = target as f64;
    let (w, h) = (width as f64, height as f64);
    let mut clamped = 0;
    let mut out = [0.0; 2 * LANDMARK_COUNT];
    for (i, l) in set.landmarks().iter().enumerate() {
        for (slot, v) in [(2 * i, l.x * side / w), (2 * i + 1, l.y * side / h)] {
            let c = v.clamp(0.0, below(side));
            clamped += usize::from(c != v);
            out[slot] = c;
        }
    }
    Ok((out, clamped))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    /// `[3, target, target]` in `[0, 1]`.
    pub input: Tensor,
    /// `[16]` interleaved model-space coordinates.
    pub target: Tensor,
    pub clamped: usize,
}

/// Decodes, stretches to `target × target` and rescales the landmarks.
pub fn prepare_sample(
    sample: &AnnotatedSample,
    base_dir: &Path,
    target: usize,
) -> Result<PreparedSample> {
    let path = sample.image_path(base_dir);
    let image = image_io::decode(&path)?;
    if (image.width(), image.height()) != (sample.width, sample.height) {
        return Err(Error::InvalidArgument {
            op: "prepare_sample",
            reason: format!(
                "{}: image is {}x{}, manifest says {}x{}",
                path.display(),
                image.width(),
                image.height(),
                sample.width,
                sample.height
            ),
        });
    }
    let set = sample.landmark_set()?;
    let (coords, clamped) = scale_landmarks(&set, sample.width, sample.height, target)?;
    if clamped > 0 {
        warn!("{}: clamped {clamped} landmark coordinates", path.display());
    }
    Ok(PreparedSample {
        input: resize_planar(&image_io::to_tensor(&image), target, target)?,
        target: Tensor::new(&[2 * LANDMARK_COUNT], coords.to_vec())?,
        clamped,
    })
}

pub const SYNTH_WIDTH: usize = 128;
pub const SYNTH_HEIGHT: usize = 192;

/// Template garment in unit coordinates, `LANDMARK_NAMES` order; "left"
/// is the image left.
const TEMPLATE: [(f64, f64); LANDMARK_COUNT] = [
    (0.40, 0.20),
    (0.60, 0.20),
    (0.18, 0.33),
    (0.82, 0.33),
    (0.34, 0.50),
    (0.66, 0.50),
    (0.24, 0.85),
    (0.76, 0.85),
];

/// One synthetic garment picture and its exact landmarks.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSample {
    pub image: ImageRgb,
    pub landmarks: LandmarkSet,
    pub background: [u8; 3],
}

/// Renders one garment: a solid background and a polygon through the
/// jittered template landmarks, filled with two-tone stripes. Every garment
/// channel differs from the background by at least 60 in some channel, so
/// the garment pixels are exactly those differing from the background.
pub fn render_synthetic(rng: &mut impl Rng) -> Result<SyntheticSample> {
    let (w, h) = (SYNTH_WIDTH as f64, SYNTH_HEIGHT as f64);
    let scale = rng.random_range(0.8..1.05);
    let (dx, dy) = (rng.random_range(-0.08..0.08) * w, rng.random_range(-0.06..0.06) * h);
    let landmarks: [Landmark; LANDMARK_COUNT] = std::array::from_fn(|i| {
        let (u, v) = TEMPLATE[i];
        let x = w * (0.5 + scale * (u - 0.5)) + dx + rng.random_range(-0.03..0.03) * w;
        let y = h * (0.5 + scale * (v - 0.5)) + dy + rng.random_range(-0.03..0.03) * h;
        Landmark::visible(x.clamp(1.0, w - 1.0), y.clamp(1.0, h - 1.0))
    });
    let landmarks = LandmarkSet::new(landmarks)?;

    let background: [u8; 3] = std::array::from_fn(|_| rng.random_range(0..=255));
    let mut garment_color = || -> [u8; 3] {
        loop {
            let c: [u8; 3] = std::array::from_fn(|_| rng.random_range(0..=255));
            if c.iter().zip(&background).any(|(a, b)| a.abs_diff(*b) >= 60) {
                return c;
            }
        }
    };
    let (primary, secondary) = (garment_color(), garment_color());
    let period = rng.random_range(4..16usize);
    let diagonal = rng.random_bool(0.5);

    let polygon = clockwise_sort(&landmarks.points())?;
    let mask = rasterize(&polygon, SYNTH_WIDTH, SYNTH_HEIGHT)?;
    let mut image = ImageRgb::filled(SYNTH_WIDTH, SYNTH_HEIGHT, background);
    for row in 0..SYNTH_HEIGHT {
        for col in 0..SYNTH_WIDTH {
            if mask.get(col, row) {
                let band = if diagonal { (row + col) / period } else { row / period };
                image.set_pixel(col, row, if band % 2 == 0 { primary } else { secondary });
            }
        }
    }
    Ok(SyntheticSample {
        image,
        landmarks,
        background,
    })
}

/// Writes `count` synthetic images to `out_dir/images/` and their manifest
/// to `out_dir/manifest.jsonl` (image paths relative to `out_dir`).
pub fn generate_synthetic(count: usize, seed: u64, out_dir: &Path) -> Result<Manifest> {
    if count == 0 {
        return Err(Error::InvalidArgument {
            op: "generate_synthetic",
            reason: "count must be at least 1".into(),
        });
    }
    let images = out_dir.join("images");
    fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let synth = render_synthetic(&mut rng)?;
        let name = format!("images/synth_{i:05}.png");
        image_io::encode_png(&out_dir.join(&name), &synth.image)?;
        samples.push(AnnotatedSample {
            image: name,
            width: SYNTH_WIDTH,
            height: SYNTH_HEIGHT,
            clothes_type: ClothesType::FullBody,
            landmarks: synth.landmarks.landmarks().to_vec(),
        });
    }
    let manifest = Manifest { samples };
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set_from(xy: &[(f64, f64)]) -> LandmarkSet {
        LandmarkSet::from_slice(
            &xy.iter()
                .map(|&(x, y)| Landmark::visible(x, y))
                .collect::<Vec<_>>(),
        )
        .unwrap()
    }

    #[test]
    fn landmark_serializes_as_triplet() {
        let l = Landmark {
            x: 1.5,
            y: 2.0,
            visibility: Visibility::Occluded,
        };
        assert_eq!(serde_json::to_string(&l).unwrap(), "[1.5,2.0,1]");
        let back: Landmark = serde_json::from_str("[1.5,2.0,1]").unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<Landmark>("[1,2,7]").is_err());
    }

    #[test]
    fn full_body_line_imports() {
        let mut line = String::from("img/d.jpg 3");
        for k in 0..8 {
            line.push_str(&format!(" 0 {} {}", 10 + k, 20 + k));
        }
        let parsed = parse_annotations(&line, &ImportLayout::default(), Path::new("a.txt")).unwrap();
        assert!(parsed.rejected.is_empty());
        let rec = &parsed.records[0];
        assert_eq!(rec.image, "img/d.jpg");
        assert_eq!(rec.clothes_type, ClothesType::FullBody);
        assert_eq!(rec.landmarks.len(), 8);
        assert!(rec.landmarks.iter().all(|l| l.visibility == Visibility::Visible));
        assert_eq!((rec.landmarks[7].x, rec.landmarks[7].y), (17.0, 27.0));
    }

    #[test]
    fn upper_body_line_has_six_landmarks() {
        let line = format!("img/u.jpg 1{}", " 0 5 5".repeat(6));
        let parsed = parse_annotations(&line, &ImportLayout::default(), Path::new("a.txt")).unwrap();
        assert_eq!(parsed.records[0].landmarks.len(), 6);
        assert_eq!(parsed.records[0].clothes_type, ClothesType::Upper);
    }

    #[test]
    fn malformed_lines_are_located() {
        let text = format!(
            "img/a.jpg 3{}\nimg/b.jpg 3 0 1 2\nimg/c.jpg 9\nimg/d.jpg 2{}",
            " 0 1 1".repeat(8),
            " 4 1 1".repeat(4)
        );
        let parsed = parse_annotations(&text, &ImportLayout::default(), Path::new("a.txt")).unwrap();
        assert_eq!(parsed.records.len(), 1);
        let lines: Vec<usize> = parsed.rejected.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4]);
        let strict = ImportLayout {
            strict: true,
            ..Default::default()
        };
        let err = parse_annotations(&text, &strict, Path::new("a.txt")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn benchmark_layout_skips_header_and_variation() {
        let text = format!(
            "1\nimage_name clothes_type variation_type ...\nimg/x.jpg 3 2{}",
            " 1 4 4".repeat(8)
        );
        let parsed =
            parse_annotations(&text, &ImportLayout::benchmark_list(), Path::new("a.txt")).unwrap();
        assert_eq!(parsed.records.len(), 1);
        assert_eq!(parsed.records[0].line, 3);
        assert!(parsed.records[0]
            .landmarks
            .iter()
            .all(|l| l.visibility == Visibility::Occluded));
    }

    #[test]
    fn layout_config_defaults() {
        let layout: ImportLayout =
            serde_json::from_str(r#"{"has_variation": true, "visibility": {"visible": 1}}"#).unwrap();
        assert!(layout.has_variation);
        assert_eq!(layout.skip_lines, 0);
        assert_eq!(layout.visibility.visible, 1);
        assert_eq!(layout.visibility.occluded, 1);
        assert!(serde_json::from_str::<ImportLayout>(r#"{"typo": 1}"#).is_err());
    }

    #[test]
    fn scaling_examples() {
        let mut xy = vec![(0.0, 0.0); 8];
        xy[0] = (50.0, 80.0);
        xy[1] = (199.0, 399.0);
        xy[2] = (200.0, 400.0);
        let (v, clamped) = scale_landmarks(&set_from(&xy), 200, 400, 100).unwrap();
        assert_eq!((v[0], v[1]), (25.0, 20.0));
        assert_eq!((v[2], v[3]), (99.5, 99.75));
        assert!(v[4] < 100.0 && v[5] < 100.0);
        assert_eq!(clamped, 2);

        let ident = set_from(&[(3.0, 97.5); 8]);
        let (v, clamped) = scale_landmarks(&ident, 100, 100, 100).unwrap();
        assert_eq!(v, ident.interleaved());
        assert_eq!(clamped, 0);
    }

    #[test]
    fn trainability() {
        let mut s = AnnotatedSample {
            image: "a.png".into(),
            width: 10,
            height: 10,
            clothes_type: ClothesType::FullBody,
            landmarks: vec![Landmark::visible(1.0, 1.0); 8],
        };
        assert!(s.is_trainable());
        s.landmarks[3].visibility = Visibility::Occluded;
        assert!(!s.is_trainable());
    }

    #[test]
    fn synthetic_render_is_seeded() {
        let a = render_synthetic(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = render_synthetic(&mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.landmarks.landmarks().iter().all(|l| l.x >= 1.0
            && l.x <= SYNTH_WIDTH as f64 - 1.0
            && l.y >= 1.0
            && l.y <= SYNTH_HEIGHT as f64 - 1.0));
    }
}
