//! Seeded synthetic scenes with known ground truth.
//!
//! Each synthetic image holds a few objects with uniformly placed boxes.
//! Every ordered pair `(i, j)` with `i < j` becomes one sample whose true
//! relation comes from the box centers. A simulated detector jitters the
//! true boxes (or fails outright), and a simulated VLM answers with the true
//! relation unless its error model fires, in which case it picks a uniformly
//! random other relation. The VLM errs more often on overlapping objects and
//! on pairs with little displacement, which is what makes the geometric
//! features informative.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{center, classify_relation, iou, DETECTION_THRESHOLD};
use crate::records::{BoundingBox, Detection, Relation, Sample, VlmPrediction};

const OBJECT_NAMES: [&str; 16] = [
    "cat", "dog", "chair", "table", "cup", "laptop", "bottle", "book", "person", "bicycle", "car", "umbrella", "bench",
    "vase", "clock", "plant",
];
const MIN_BOX_SIDE: f64 = 20.0;
const MAX_BOX_SIDE: f64 = 200.0;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid synthetic config: {0}")]
pub struct SynthConfigError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreModel {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VlmErrorModel {
    pub base_rate: f64,
    /// Added when the true boxes overlap with IoU above `overlap_iou`.
    pub overlap_boost: f64,
    pub overlap_iou: f64,
    /// Added when the true dominant-axis displacement is below `close_pixels`.
    pub close_boost: f64,
    pub close_pixels: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenModel {
    pub mean_when_correct: f64,
    pub mean_when_wrong: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub image_width: f64,
    pub image_height: f64,
    pub objects_per_image: usize,
    /// Center jitter of a perfect-score detection, in pixels; scaled up for
    /// lower scores.
    pub detector_noise_sigma: f64,
    pub detection_failure_rate: f64,
    /// Scores of successful detections, clamped to `[detection_threshold, 1]`.
    pub detection_score: ScoreModel,
    pub detection_threshold: f64,
    pub vlm_error: VlmErrorModel,
    pub token_confidence: TokenModel,
    /// Probability that the claimed relation is a false statement.
    pub false_claim_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            image_width: 640.0,
            image_height: 480.0,
            objects_per_image: 3,
            detector_noise_sigma: 5.0,
            detection_failure_rate: 0.1,
            detection_score: ScoreModel {
                mean: 0.65,
                spread: 0.2,
            },
            detection_threshold: DETECTION_THRESHOLD,
            vlm_error: VlmErrorModel {
                base_rate: 0.4,
                overlap_boost: 0.3,
                overlap_iou: 0.3,
                close_boost: 0.25,
                close_pixels: 30.0,
            },
            token_confidence: TokenModel {
                mean_when_correct: 0.6,
                mean_when_wrong: 0.52,
                spread: 0.15,
            },
            false_claim_rate: 0.0,
            seed: 42,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthConfigError> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(SynthConfigError(format!("{name} must lie in [0,1], got {v}")))
            }
        };
        unit("detection_failure_rate", self.detection_failure_rate)?;
        unit("detection_threshold", self.detection_threshold)?;
        unit("detection_score.mean", self.detection_score.mean)?;
        unit("vlm_error.base_rate", self.vlm_error.base_rate)?;
        unit("vlm_error.overlap_boost", self.vlm_error.overlap_boost)?;
        unit("vlm_error.overlap_iou", self.vlm_error.overlap_iou)?;
        unit("vlm_error.close_boost", self.vlm_error.close_boost)?;
        unit(
            "token_confidence.mean_when_correct",
            self.token_confidence.mean_when_correct,
        )?;
        unit(
            "token_confidence.mean_when_wrong",
            self.token_confidence.mean_when_wrong,
        )?;
        unit("false_claim_rate", self.false_claim_rate)?;
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(SynthConfigError(format!("{name} must be a finite value >= 0, got {v}")))
            }
        };
        nonneg("detector_noise_sigma", self.detector_noise_sigma)?;
        nonneg("detection_score.spread", self.detection_score.spread)?;
        nonneg("token_confidence.spread", self.token_confidence.spread)?;
        nonneg("vlm_error.close_pixels", self.vlm_error.close_pixels)?;
        if !(self.image_width >= 2.0 * MAX_BOX_SIDE && self.image_height >= 2.0 * MAX_BOX_SIDE) {
            return Err(SynthConfigError(format!(
                "image must be at least {0}x{0} pixels",
                2.0 * MAX_BOX_SIDE
            )));
        }
        if !(2..=OBJECT_NAMES.len()).contains(&self.objects_per_image) {
            return Err(SynthConfigError(format!(
                "objects_per_image must be between 2 and {}",
                OBJECT_NAMES.len()
            )));
        }
        Ok(())
    }
}

/// Hidden ground truth for one generated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub sample_id: String,
    pub true_relation: Relation,
    pub true_box_1: BoundingBox,
    pub true_box_2: BoundingBox,
    pub true_d_primary: f64,
    pub true_iou: f64,
    pub vlm_error_rate: f64,
    pub claim_is_true: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub samples: Vec<Sample>,
    pub truth: Vec<TruthRecord>,
}

fn clamped_normal<R: Rng>(rng: &mut R, mean: f64, spread: f64, lo: f64, hi: f64) -> f64 {
    let v = Normal::new(mean, spread).expect("validated spread").sample(rng);
    v.clamp(lo, hi)
}

fn other_relation<R: Rng>(rng: &mut R, not: Relation) -> Relation {
    let others: Vec<Relation> = Relation::ALL.into_iter().filter(|r| *r != not).collect();
    others[rng.random_range(0..others.len())]
}

struct SceneObject {
    name: &'static str,
    truth: BoundingBox,
    detection: Detection,
}

fn place_box<R: Rng>(rng: &mut R, cfg: &SynthConfig) -> BoundingBox {
    let w = rng.random_range(MIN_BOX_SIDE..MAX_BOX_SIDE);
    let h = rng.random_range(MIN_BOX_SIDE..MAX_BOX_SIDE);
    let x = rng.random_range(0.0..cfg.image_width - w);
    let y = rng.random_range(0.0..cfg.image_height - h);
    BoundingBox::new(x, y, x + w, y + h).expect("positive size inside the image")
}

/// Shift the box center by Gaussian noise whose spread grows as the
/// detector score drops: `sigma * (1 + 2 * (1 - score))`.
fn jitter<R: Rng>(rng: &mut R, b: &BoundingBox, score: f64, cfg: &SynthConfig) -> BoundingBox {
    let sigma = cfg.detector_noise_sigma * (1.0 + 2.0 * (1.0 - score));
    let noise = Normal::new(0.0, sigma).expect("validated sigma");
    let (dx, dy) = (noise.sample(rng), noise.sample(rng));
    let shift = |lo: f64, hi: f64, d: f64, limit: f64| {
        let a = (lo + d).clamp(0.0, limit - 1.0);
        let b = (hi + d).clamp(a + 1.0, limit);
        (a, b)
    };
    let (x0, x1) = shift(b.x_min(), b.x_max(), dx, cfg.image_width);
    let (y0, y1) = shift(b.y_min(), b.y_max(), dy, cfg.image_height);
    BoundingBox::new(x0, y0, x1, y1).expect("clamped box stays valid")
}

fn detect<R: Rng>(rng: &mut R, name: &'static str, truth: &BoundingBox, cfg: &SynthConfig) -> Detection {
    if rng.random_bool(cfg.detection_failure_rate) {
        // reported below threshold, no box
        let score = rng.random_range(0.0..1.0) * cfg.detection_threshold;
        return Detection {
            label: name.to_string(),
            score,
            bbox: None,
        };
    }
    let s = &cfg.detection_score;
    let score = clamped_normal(rng, s.mean, s.spread, cfg.detection_threshold, 1.0);
    Detection {
        label: name.to_string(),
        score,
        bbox: Some(jitter(rng, truth, score, cfg)),
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthDataset, SynthConfigError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.n_samples);
    let mut truth = Vec::with_capacity(cfg.n_samples);
    let mut image_idx = 0usize;

    while samples.len() < cfg.n_samples {
        let image_id = format!("img{image_idx:05}");
        image_idx += 1;

        let mut names: Vec<&'static str> = OBJECT_NAMES.to_vec();
        let objects: Vec<SceneObject> = (0..cfg.objects_per_image)
            .map(|_| {
                let name = names.swap_remove(rng.random_range(0..names.len()));
                let truth = place_box(&mut rng, cfg);
                let detection = detect(&mut rng, name, &truth, cfg);
                SceneObject { name, truth, detection }
            })
            .collect();

        for i in 0..objects.len() {
            for j in (i + 1)..objects.len() {
                if samples.len() == cfg.n_samples {
                    break;
                }
                let (a, b) = (&objects[i], &objects[j]);
                let geo = classify_relation(center(&a.truth), center(&b.truth));
                // coincident centers have measure zero under uniform placement
                let true_relation = geo.relation.unwrap_or(Relation::Near);
                let true_iou = iou(&a.truth, &b.truth);

                let e = &cfg.vlm_error;
                let mut error_rate = e.base_rate;
                if true_iou > e.overlap_iou {
                    error_rate += e.overlap_boost;
                }
                if geo.d_primary < e.close_pixels {
                    error_rate += e.close_boost;
                }
                let error_rate = error_rate.clamp(0.0, 1.0);
                let predicted = if rng.random_bool(error_rate) {
                    other_relation(&mut rng, true_relation)
                } else {
                    true_relation
                };
                let correct = predicted == true_relation;
                let t = &cfg.token_confidence;
                let mean = if correct {
                    t.mean_when_correct
                } else {
                    t.mean_when_wrong
                };
                let token_confidence = clamped_normal(&mut rng, mean, t.spread, 0.0, 1.0);

                let claim_is_true = !rng.random_bool(cfg.false_claim_rate);
                let claimed_relation = if claim_is_true {
                    true_relation
                } else {
                    other_relation(&mut rng, true_relation)
                };

                let sample_id = format!("s{:06}", samples.len());
                samples.push(Sample {
                    sample_id: sample_id.clone(),
                    image_id: image_id.clone(),
                    object_1: a.name.to_string(),
                    object_2: b.name.to_string(),
                    claimed_relation,
                    prediction: VlmPrediction {
                        relation: predicted,
                        token_confidence,
                    },
                    detection_1: a.detection.clone(),
                    detection_2: b.detection.clone(),
                    label: correct,
                    image_width: Some(cfg.image_width),
                    image_height: Some(cfg.image_height),
                });
                truth.push(TruthRecord {
                    sample_id,
                    true_relation,
                    true_box_1: a.truth,
                    true_box_2: b.truth,
                    true_d_primary: geo.d_primary,
                    true_iou,
                    vlm_error_rate: error_rate,
                    claim_is_true,
                });
            }
        }
    }
    Ok(SynthDataset { samples, truth })
}

pub fn write_truth_jsonl<W: Write>(mut w: W, truth: &[TruthRecord]) -> io::Result<()> {
    for t in truth {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{extract_features, MISMATCH_CONFIDENCE};

    fn noiseless(n: usize) -> SynthConfig {
        SynthConfig {
            n_samples: n,
            detector_noise_sigma: 0.0,
            detection_failure_rate: 0.0,
            vlm_error: VlmErrorModel {
                base_rate: 0.0,
                overlap_boost: 0.0,
                close_boost: 0.0,
                ..SynthConfig::default().vlm_error
            },
            ..SynthConfig::default()
        }
    }

    #[test]
    fn noiseless_oracle() {
        let data = generate(&noiseless(500)).unwrap();
        assert_eq!(data.samples.len(), 500);
        for (s, t) in data.samples.iter().zip(&data.truth) {
            assert!(s.label);
            let (b1, b2) = (s.detection_1.bbox.unwrap(), s.detection_2.bbox.unwrap());
            assert_eq!((b1, b2), (t.true_box_1, t.true_box_2));
            let geo = classify_relation(center(&b1), center(&b2));
            assert_eq!(geo.relation, Some(t.true_relation));
            let (f, _) = extract_features(s);
            // match branch is at least 0.5 * multiplier(>= 0.5)
            assert!(f.alpha_geo > MISMATCH_CONFIDENCE);
        }
    }

    #[test]
    fn always_wrong() {
        let mut cfg = noiseless(300);
        cfg.vlm_error.base_rate = 1.0;
        let data = generate(&cfg).unwrap();
        assert!(data.samples.iter().all(|s| !s.label));
        assert!(data
            .samples
            .iter()
            .zip(&data.truth)
            .all(|(s, t)| s.prediction.relation != t.true_relation));
    }

    #[test]
    fn base_error_rate_is_honored() {
        let mut cfg = noiseless(5000);
        cfg.vlm_error.base_rate = 0.4;
        let data = generate(&cfg).unwrap();
        let acc = data.samples.iter().filter(|s| s.label).count() as f64 / 5000.0;
        assert!((acc - 0.6).abs() <= 0.02, "accuracy {acc}");
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            n_samples: 200,
            ..SynthConfig::default()
        };
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = SynthConfig {
            seed: 43,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap().samples, generate(&other).unwrap().samples);
    }

    #[test]
    fn failure_marginal_within_three_sigma() {
        let cfg = SynthConfig {
            n_samples: 3000,
            detection_failure_rate: 0.2,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        // count each object once: detection_1 of the (0,1) and (0,2) pairs is the same object
        let mut failed = 0usize;
        let mut total = 0usize;
        for chunk in data.samples.chunks(3) {
            for d in [
                &chunk[0].detection_1,
                &chunk[0].detection_2,
                &chunk[chunk.len() - 1].detection_2,
            ] {
                total += 1;
                failed += usize::from(d.bbox.is_none());
            }
        }
        let p = 0.2;
        let sigma = (p * (1.0 - p) / total as f64).sqrt();
        let rate = failed as f64 / total as f64;
        assert!((rate - p).abs() <= 3.0 * sigma, "rate {rate}");
        for s in &data.samples {
            for d in [&s.detection_1, &s.detection_2] {
                match d.bbox {
                    Some(_) => assert!(d.score >= cfg.detection_threshold),
                    None => assert!(d.score < cfg.detection_threshold),
                }
            }
        }
    }

    #[test]
    fn false_claims() {
        let cfg = SynthConfig {
            n_samples: 2000,
            false_claim_rate: 0.3,
            ..SynthConfig::default()
        };
        let data = generate(&cfg).unwrap();
        let false_claims = data.truth.iter().filter(|t| !t.claim_is_true).count() as f64 / 2000.0;
        assert!((false_claims - 0.3).abs() < 0.04);
        for (s, t) in data.samples.iter().zip(&data.truth) {
            assert_eq!(s.claimed_relation == t.true_relation, t.claim_is_true);
        }
    }

    #[test]
    fn invalid_config() {
        let cfg = SynthConfig {
            detection_failure_rate: 1.5,
            ..SynthConfig::default()
        };
        assert!(generate(&cfg).is_err());
        let cfg = SynthConfig {
            objects_per_image: 1,
            ..SynthConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_dataset() {
        let data = generate(&SynthConfig {
            n_samples: 0,
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(data.samples.is_empty());
    }
}
