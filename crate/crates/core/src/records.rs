//! Canonical data model for spatial-claim samples.
//!
//! One [`Sample`] is a single claim "object_1 is R of object_2" about one
//! image, together with the VLM's answer, the two detector outputs and the
//! ground-truth correctness label. Samples travel as JSONL, one object per
//! line:
//!
//! ```text
//! {"sample_id":"s0","image_id":"img0","object_1":"cat","object_2":"dog",
//!  "claimed_relation":"left","vlm_relation":"left","vlm_token_confidence":0.8,
//!  "det1":{"label":"cat","score":0.9,"box":[10,10,50,50]},
//!  "det2":{"label":"dog","score":0.1,"box":null},
//!  "label":true,"image_width":640,"image_height":480}
//! ```
//!
//! Lines of the form `{"_meta": {...}}` are producer headers and are skipped.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// The closed spatial-relation vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Left,
    Right,
    Above,
    Below,
    Near,
}

impl Relation {
    pub const ALL: [Relation; 5] = [
        Relation::Left,
        Relation::Right,
        Relation::Above,
        Relation::Below,
        Relation::Near,
    ];

    pub const DIRECTIONAL: [Relation; 4] = [Relation::Left, Relation::Right, Relation::Above, Relation::Below];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::Left => "left",
            Relation::Right => "right",
            Relation::Above => "above",
            Relation::Below => "below",
            Relation::Near => "near",
        }
    }

    pub fn is_directional(self) -> bool {
        !matches!(self, Relation::Near)
    }

    /// The relation seen from the other object (`near` is symmetric).
    pub fn inverse(self) -> Relation {
        match self {
            Relation::Left => Relation::Right,
            Relation::Right => Relation::Left,
            Relation::Above => Relation::Below,
            Relation::Below => Relation::Above,
            Relation::Near => Relation::Near,
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown relation `{0}`")]
pub struct UnknownRelation(pub String);

impl FromStr for Relation {
    type Err = UnknownRelation;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Relation::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| UnknownRelation(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum BoxError {
    #[error("non-finite box coordinate")]
    NonFinite,
    #[error("negative box coordinate")]
    Negative,
    #[error("degenerate box")]
    Degenerate,
}

/// Axis-aligned box in image pixels, origin top-left, y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, BoxError> {
        let coords = [x_min, y_min, x_max, y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(BoxError::NonFinite);
        }
        if coords.iter().any(|&c| c < 0.0) {
            return Err(BoxError::Negative);
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(BoxError::Degenerate);
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    /// Same box shifted by `(dx, dy)`; fails if the result leaves the
    /// non-negative quadrant.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self, BoxError> {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = BoxError;

    fn try_from(c: [f64; 4]) -> Result<Self, Self::Error> {
        Self::new(c[0], c[1], c[2], c[3])
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

/// One detector output. An absent box means the detector failed for this
/// label (score below the detection threshold or no match).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub label: String,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
}

impl Detection {
    pub fn new(label: impl Into<String>, score: f64, bbox: Option<BoundingBox>) -> Result<Self, RangeError> {
        check_unit("score", score)?;
        Ok(Self {
            label: label.into(),
            score,
            bbox,
        })
    }

    /// Score as seen by downstream features: zero when the box is absent.
    pub fn effective_score(&self) -> f64 {
        if self.bbox.is_some() {
            self.score
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{name} out of range [0,1]")]
pub struct RangeError {
    pub name: &'static str,
}

fn check_unit(name: &'static str, v: f64) -> Result<(), RangeError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(RangeError { name })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlmPrediction {
    pub relation: Relation,
    pub token_confidence: f64,
}

impl VlmPrediction {
    pub fn new(relation: Relation, token_confidence: f64) -> Result<Self, RangeError> {
        check_unit("token_confidence", token_confidence)?;
        Ok(Self {
            relation,
            token_confidence,
        })
    }
}

/// One spatial claim about one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sample_id: String,
    pub image_id: String,
    pub object_1: String,
    pub object_2: String,
    pub claimed_relation: Relation,
    pub prediction: VlmPrediction,
    pub detection_1: Detection,
    pub detection_2: Detection,
    /// Whether the VLM prediction is correct.
    pub label: bool,
    pub image_width: Option<f64>,
    pub image_height: Option<f64>,
}

#[derive(Serialize)]
struct WireSample<'a> {
    sample_id: &'a str,
    image_id: &'a str,
    object_1: &'a str,
    object_2: &'a str,
    claimed_relation: Relation,
    vlm_relation: Relation,
    vlm_token_confidence: f64,
    det1: &'a Detection,
    det2: &'a Detection,
    label: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    image_height: Option<f64>,
}

impl Sample {
    /// Serialize to one JSONL line (no trailing newline).
    pub fn to_json_line(&self) -> String {
        let wire = WireSample {
            sample_id: &self.sample_id,
            image_id: &self.image_id,
            object_1: &self.object_1,
            object_2: &self.object_2,
            claimed_relation: self.claimed_relation,
            vlm_relation: self.prediction.relation,
            vlm_token_confidence: self.prediction.token_confidence,
            det1: &self.detection_1,
            det2: &self.detection_2,
            label: self.label,
            image_width: self.image_width,
            image_height: self.image_height,
        };
        serde_json::to_string(&wire).expect("sample serialization cannot fail")
    }
}

/// A problem with one input line.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: `{field}`: {message}")]
pub struct LineError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{} invalid line(s); first: {}", .0.len(), .0[0])]
    Invalid(Vec<LineError>),
}

impl DatasetError {
    pub fn line_errors(&self) -> &[LineError] {
        match self {
            DatasetError::Invalid(errs) => errs,
            DatasetError::Io { .. } => &[],
        }
    }
}

#[derive(Debug)]
struct FieldError {
    field: String,
    message: String,
}

impl FieldError {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }

    fn missing(field: &str) -> Self {
        Self::new(field, "missing required field")
    }
}

fn get<'a>(obj: &'a Map<String, Value>, field: &str) -> Result<&'a Value, FieldError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(FieldError::missing(field)),
        Some(v) => Ok(v),
    }
}

fn req_str(obj: &Map<String, Value>, field: &str) -> Result<String, FieldError> {
    get(obj, field)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| FieldError::new(field, "expected a string"))
}

fn req_f64(obj: &Map<String, Value>, field: &str) -> Result<f64, FieldError> {
    get(obj, field)?
        .as_f64()
        .ok_or_else(|| FieldError::new(field, "expected a number"))
}

fn req_unit(obj: &Map<String, Value>, field: &str, name: &str) -> Result<f64, FieldError> {
    let v = req_f64(obj, field)?;
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(FieldError::new(field, format!("{name} out of range [0,1]")))
    }
}

fn req_relation(obj: &Map<String, Value>, field: &str) -> Result<Relation, FieldError> {
    let s = get(obj, field)?
        .as_str()
        .ok_or_else(|| FieldError::new(field, "expected a relation string"))?;
    s.parse()
        .map_err(|e: UnknownRelation| FieldError::new(field, e.to_string()))
}

fn opt_dimension(obj: &Map<String, Value>, field: &str) -> Result<Option<f64>, FieldError> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => {
            let d = v.as_f64().ok_or_else(|| FieldError::new(field, "expected a number"))?;
            if d.is_finite() && d > 0.0 {
                Ok(Some(d))
            } else {
                Err(FieldError::new(field, "image dimension must be positive"))
            }
        }
    }
}

fn parse_detection(
    obj: &Map<String, Value>,
    field: &str,
    expected_label: &str,
    object_field: &str,
) -> Result<Detection, FieldError> {
    let det = get(obj, field)?
        .as_object()
        .ok_or_else(|| FieldError::new(field, "expected an object"))?;
    let label = req_str(det, "label").map_err(|e| FieldError::new(format!("{field}.{}", e.field), e.message))?;
    if label != expected_label {
        return Err(FieldError::new(
            format!("{field}.label"),
            format!("detection label `{label}` does not match {object_field} `{expected_label}`"),
        ));
    }
    let score =
        req_unit(det, "score", "score").map_err(|e| FieldError::new(format!("{field}.{}", e.field), e.message))?;
    let box_field = format!("{field}.box");
    let bbox = match det.get("box") {
        None => return Err(FieldError::missing(&box_field)),
        Some(Value::Null) => None,
        Some(Value::Array(coords)) => {
            if coords.len() != 4 {
                return Err(FieldError::new(box_field, "box must have 4 coordinates"));
            }
            let mut c = [0.0; 4];
            for (slot, v) in c.iter_mut().zip(coords) {
                *slot = v
                    .as_f64()
                    .ok_or_else(|| FieldError::new(&box_field, "box coordinates must be numbers"))?;
            }
            Some(BoundingBox::try_from(c).map_err(|e| FieldError::new(&box_field, e.to_string()))?)
        }
        Some(_) => return Err(FieldError::new(box_field, "box must be an array or null")),
    };
    Ok(Detection { label, score, bbox })
}

fn sample_from_object(obj: &Map<String, Value>) -> Result<Sample, FieldError> {
    let sample_id = req_str(obj, "sample_id")?;
    let image_id = req_str(obj, "image_id")?;
    let object_1 = req_str(obj, "object_1")?;
    let object_2 = req_str(obj, "object_2")?;
    let claimed_relation = req_relation(obj, "claimed_relation")?;
    let relation = req_relation(obj, "vlm_relation")?;
    let token_confidence = req_unit(obj, "vlm_token_confidence", "token confidence")?;
    let detection_1 = parse_detection(obj, "det1", &object_1, "object_1")?;
    let detection_2 = parse_detection(obj, "det2", &object_2, "object_2")?;
    let label = get(obj, "label")?
        .as_bool()
        .ok_or_else(|| FieldError::new("label", "expected a boolean"))?;
    let image_width = opt_dimension(obj, "image_width")?;
    let image_height = opt_dimension(obj, "image_height")?;
    Ok(Sample {
        sample_id,
        image_id,
        object_1,
        object_2,
        claimed_relation,
        prediction: VlmPrediction {
            relation,
            token_confidence,
        },
        detection_1,
        detection_2,
        label,
        image_width,
        image_height,
    })
}

/// Parse one JSONL line. `Ok(None)` for blank lines and `_meta` headers.
pub fn parse_line(text: &str, line: usize) -> Result<Option<Sample>, LineError> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    let value: Value = serde_json::from_str(trimmed).map_err(|e| LineError {
        line,
        field: "<line>".into(),
        message: format!("malformed JSON: {e}"),
    })?;
    let obj = value.as_object().ok_or_else(|| LineError {
        line,
        field: "<line>".into(),
        message: "expected a JSON object".into(),
    })?;
    if obj.contains_key("_meta") {
        return Ok(None);
    }
    sample_from_object(obj).map(Some).map_err(|e| LineError {
        line,
        field: e.field,
        message: e.message,
    })
}

/// Parse a JSONL stream, collecting every bad line rather than stopping at the first.
pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Vec<Sample>, DatasetError> {
    let mut samples = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let text = line.map_err(|source| DatasetError::Io {
            path: PathBuf::from("<stream>"),
            source,
        })?;
        match parse_line(&text, line_no) {
            Ok(Some(sample)) => {
                if !seen.insert(sample.sample_id.clone()) {
                    errors.push(LineError {
                        line: line_no,
                        field: "sample_id".into(),
                        message: format!("duplicate sample_id `{}`", sample.sample_id),
                    });
                } else {
                    samples.push(sample);
                }
            }
            Ok(None) => {}
            Err(e) => errors.push(e),
        }
    }
    if errors.is_empty() {
        Ok(samples)
    } else {
        Err(DatasetError::Invalid(errors))
    }
}

pub fn parse_dataset(path: impl AsRef<Path>) -> Result<Vec<Sample>, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_jsonl(BufReader::new(file)).map_err(|e| match e {
        DatasetError::Io { source, .. } => DatasetError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

pub fn write_jsonl<W: Write>(mut writer: W, samples: &[Sample]) -> io::Result<()> {
    for s in samples {
        writer.write_all(s.to_json_line().as_bytes())?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_dataset(path: impl AsRef<Path>, samples: &[Sample]) -> io::Result<()> {
    write_jsonl(BufWriter::new(File::create(path)?), samples)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            validation_fraction: 0.3,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SplitError {
    #[error("split fractions must lie in [0,1] and sum to at most 1 (got {train} + {validation})")]
    InvalidFractions { train: f64, validation: f64 },
    #[error("need at least 3 samples to split, got {0}")]
    TooFewSamples(usize),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn shuffle_key(seed: u64, sample_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample_id.as_bytes());
    let digest = hasher.finalize();
    let mut head = [0u8; 8];
    head.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(head)
}

// floor(n * fraction) with slack for fractions like 0.7 that are not exact in binary
fn portion(n: usize, fraction: f64) -> usize {
    ((n as f64) * fraction + 1e-9).floor() as usize
}

/// Seeded train/validation/test partition.
///
/// Order is determined by a hash of `(seed, sample_id)`, so the partition
/// does not depend on the order of the input lines.
pub fn split_dataset(samples: &[Sample], spec: &SplitSpec) -> Result<DatasetSplit, SplitError> {
    let (train_f, val_f) = (spec.train_fraction, spec.validation_fraction);
    let in_unit = |f: f64| (0.0..=1.0).contains(&f);
    if !in_unit(train_f) || !in_unit(val_f) || train_f + val_f > 1.0 + 1e-12 {
        return Err(SplitError::InvalidFractions {
            train: train_f,
            validation: val_f,
        });
    }
    let n = samples.len();
    if n < 3 {
        return Err(SplitError::TooFewSamples(n));
    }
    let mut keyed: Vec<(u64, &Sample)> = samples
        .iter()
        .map(|s| (shuffle_key(spec.seed, &s.sample_id), s))
        .collect();
    keyed.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.sample_id.cmp(&b.1.sample_id)));

    let n_train = portion(n, train_f);
    let n_val = portion(n, val_f).min(n - n_train);
    let mut ordered = keyed.into_iter().map(|(_, s)| s.clone());
    let train = ordered.by_ref().take(n_train).collect();
    let validation = ordered.by_ref().take(n_val).collect();
    let test = ordered.collect();
    Ok(DatasetSplit {
        train,
        validation,
        test,
    })
}
