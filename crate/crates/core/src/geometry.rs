//! Geometric validation of a spatial claim from two detected boxes.
//!
//! The relation implied by the boxes is read off the displacement of the
//! box centers, `delta = center(b2) - center(b1)`, in the image frame
//! (y grows downward). The axis with the larger displacement decides the
//! relation; `d_primary` is the magnitude along that axis. Agreement between
//! the VLM's relation and the box relation gives
//!
//! ```text
//! raw      = 0.2                                  on mismatch
//!          = 0.5 + 0.5 * min(1, d_primary / 100)  on match
//! alpha_geo = raw * (0.5 + 0.5 * sigmoid(10 * (c_mean - 0.3)))
//! ```
//!
//! where `c_mean` is the mean detection score.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::records::{BoundingBox, Relation, Sample};

/// Score assigned when the claimed relation contradicts the boxes.
pub const MISMATCH_CONFIDENCE: f64 = 0.2;
/// Displacement (pixels) at which the match ramp saturates.
pub const RAMP_PIXELS: f64 = 100.0;
/// Ramp saturation in image-width units for [`Normalization::ImageWidth`].
pub const RAMP_NORMALIZED: f64 = 0.1;
/// Detector score threshold used by producers; below it a box is dropped.
pub const DETECTION_THRESHOLD: f64 = 0.3;
const QUALITY_SLOPE: f64 = 10.0;

pub const FEATURE_NAMES: [&str; 4] = ["alpha_geo", "alpha_sep", "detection_quality", "token_confidence"];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub x: f64,
    pub y: f64,
}

pub fn center(b: &BoundingBox) -> Center {
    Center {
        x: (b.x_min() + b.x_max()) / 2.0,
        y: (b.y_min() + b.y_max()) / 2.0,
    }
}

/// Result of comparing two box centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoOutcome {
    /// `None` when the centers coincide or a detection is missing.
    pub relation: Option<Relation>,
    pub delta_x: f64,
    pub delta_y: f64,
    pub d_primary: f64,
    /// Both detections were present.
    pub valid: bool,
    /// `threshold - distance` for the `near` test; only set when the boxes
    /// themselves were available.
    pub near_margin: Option<f64>,
}

impl GeoOutcome {
    pub fn missing() -> Self {
        Self {
            relation: None,
            delta_x: 0.0,
            delta_y: 0.0,
            d_primary: 0.0,
            valid: false,
            near_margin: None,
        }
    }
}

/// Directional relation of object 1 relative to object 2.
///
/// Ties `|dx| == |dy| > 0` resolve to the horizontal axis. Coincident centers
/// give no relation.
pub fn classify_relation(p1: Center, p2: Center) -> GeoOutcome {
    let dx = p2.x - p1.x;
    let dy = p2.y - p1.y;
    let (relation, d_primary) = if dx == 0.0 && dy == 0.0 {
        (None, 0.0)
    } else if dx.abs() >= dy.abs() {
        (Some(if dx > 0.0 { Relation::Left } else { Relation::Right }), dx.abs())
    } else {
        (Some(if dy > 0.0 { Relation::Above } else { Relation::Below }), dy.abs())
    };
    GeoOutcome {
        relation,
        delta_x: dx,
        delta_y: dy,
        d_primary,
        valid: true,
        near_margin: None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw pixel displacements, ramp saturating at 100 px.
    #[default]
    Pixels,
    /// Displacements divided by the image width, ramp saturating at 0.1.
    /// Falls back to pixels for samples without `image_width`.
    ImageWidth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoConfig {
    /// `near` holds when center distance <= kappa * mean box diagonal.
    pub near_kappa: f64,
    pub normalization: Normalization,
    /// Feed the detection-quality-adjusted alpha_geo into the feature vector.
    pub adjust_for_quality: bool,
}

impl Default for GeoConfig {
    fn default() -> Self {
        Self {
            near_kappa: 1.0,
            normalization: Normalization::Pixels,
            adjust_for_quality: true,
        }
    }
}

/// Compare two boxes: directional relation plus the `near` margin.
pub fn classify_boxes(b1: &BoundingBox, b2: &BoundingBox, near_kappa: f64) -> GeoOutcome {
    let (p1, p2) = (center(b1), center(b2));
    let mut out = classify_relation(p1, p2);
    let threshold = near_kappa * (b1.diagonal() + b2.diagonal()) / 2.0;
    out.near_margin = Some(threshold - out.delta_x.hypot(out.delta_y));
    out
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Detection-quality multiplier, in (0.5, 1) and exactly 0.75 at 0.3.
pub fn quality_multiplier(mean_quality: f64) -> f64 {
    0.5 + 0.5 * sigmoid(QUALITY_SLOPE * (mean_quality - DETECTION_THRESHOLD))
}

/// Match ramp `0.5 + 0.5 * min(1, d / scale)`.
pub fn match_confidence(d_primary: f64, scale: f64) -> f64 {
    0.5 + 0.5 * (d_primary / scale).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("geometric confidence requires both detections")]
pub struct InvalidGeometry;

/// Alignment between the predicted relation and the box geometry, before the
/// detection-quality adjustment. `ramp_scale` is the displacement at which a
/// match saturates (100 for pixel displacements).
pub fn raw_geometric_confidence(
    predicted: Relation,
    geo: &GeoOutcome,
    ramp_scale: f64,
) -> Result<f64, InvalidGeometry> {
    if !geo.valid {
        return Err(InvalidGeometry);
    }
    let matched = match predicted {
        Relation::Near => geo.near_margin.filter(|m| *m >= 0.0),
        directional => geo.relation.filter(|r| *r == directional).map(|_| geo.d_primary),
    };
    Ok(match matched {
        Some(d) => match_confidence(d, ramp_scale),
        None => MISMATCH_CONFIDENCE,
    })
}

/// Quality-adjusted geometric confidence with the pixel ramp.
pub fn geometric_confidence(predicted: Relation, geo: &GeoOutcome, mean_quality: f64) -> Result<f64, InvalidGeometry> {
    Ok(raw_geometric_confidence(predicted, geo, RAMP_PIXELS)? * quality_multiplier(mean_quality))
}

pub fn iou(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    let w = (b1.x_max().min(b2.x_max()) - b1.x_min().max(b2.x_min())).max(0.0);
    let h = (b1.y_max().min(b2.y_max()) - b1.y_min().max(b2.y_min())).max(0.0);
    let inter = w * h;
    let union = b1.area() + b2.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

pub fn separation_confidence(b1: &BoundingBox, b2: &BoundingBox) -> f64 {
    1.0 - iou(b1, b2)
}

/// The four fused signals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub alpha_geo: f64,
    pub alpha_sep: f64,
    pub detection_quality: f64,
    pub token_confidence: f64,
}

impl FeatureVector {
    pub fn to_array(self) -> [f64; 4] {
        [
            self.alpha_geo,
            self.alpha_sep,
            self.detection_quality,
            self.token_confidence,
        ]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self {
            alpha_geo: a[0],
            alpha_sep: a[1],
            detection_quality: a[2],
            token_confidence: a[3],
        }
    }
}

pub fn extract_features(sample: &Sample) -> (FeatureVector, GeoOutcome) {
    extract_features_with(sample, &GeoConfig::default())
}

/// Features for one sample. A missing box zeroes both geometric signals and
/// contributes a zero score to the detection quality; the token confidence
/// always passes through.
pub fn extract_features_with(sample: &Sample, config: &GeoConfig) -> (FeatureVector, GeoOutcome) {
    let d1 = &sample.detection_1;
    let d2 = &sample.detection_2;
    let detection_quality = (d1.effective_score() + d2.effective_score()) / 2.0;
    let token_confidence = sample.prediction.token_confidence;

    let (Some(b1), Some(b2)) = (d1.bbox.as_ref(), d2.bbox.as_ref()) else {
        let features = FeatureVector {
            alpha_geo: 0.0,
            alpha_sep: 0.0,
            detection_quality,
            token_confidence,
        };
        return (features, GeoOutcome::missing());
    };

    let geo = classify_boxes(b1, b2, config.near_kappa);
    let (scaled, ramp) = match (config.normalization, sample.image_width) {
        (Normalization::ImageWidth, Some(width)) => {
            let mut g = geo;
            g.d_primary /= width;
            g.near_margin = g.near_margin.map(|m| m / width);
            (g, RAMP_NORMALIZED)
        }
        _ => (geo, RAMP_PIXELS),
    };
    let raw = raw_geometric_confidence(sample.prediction.relation, &scaled, ramp).expect("both boxes present");
    let alpha_geo = if config.adjust_for_quality {
        raw * quality_multiplier(detection_quality)
    } else {
        raw
    };
    let features = FeatureVector {
        alpha_geo,
        alpha_sep: separation_confidence(b1, b2),
        detection_quality,
        token_confidence,
    };
    (features, geo)
}

/// CSV dump `sample_id,alpha_geo,alpha_sep,detection_quality,token_confidence,label`.
pub fn write_feature_csv<W: Write>(writer: W, samples: &[Sample], features: &[FeatureVector]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "sample_id",
        "alpha_geo",
        "alpha_sep",
        "detection_quality",
        "token_confidence",
        "label",
    ])?;
    for (s, f) in samples.iter().zip(features) {
        w.write_record([
            s.sample_id.clone(),
            f.alpha_geo.to_string(),
            f.alpha_sep.to_string(),
            f.detection_quality.to_string(),
            f.token_confidence.to_string(),
            s.label.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
