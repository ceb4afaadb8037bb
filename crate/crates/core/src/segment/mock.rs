use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Instance, Segmenter};
use crate::error::{check_dims, Result};
use crate::image::Image;
use crate::mask::BinaryMask;

/// A ground-truth object visible in the t=0 frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneObject {
    pub id: String,
    pub label: String,
    pub attributes: Vec<String>,
    pub mask: BinaryMask,
}

impl SceneObject {
    /// Phrases that ground to this object: the bare label, `"<attr> <label>"`
    /// and `"<label> with <attr>"` for each attribute tag.
    pub fn phrases(&self) -> Vec<String> {
        let label = self.label.to_lowercase();
        let mut out = vec![label.clone()];
        for attr in &self.attributes {
            let attr = attr.to_lowercase();
            out.push(format!("{attr} {label}"));
            out.push(format!("{label} with {attr}"));
        }
        out
    }

    pub fn grounds(&self, phrase: &str) -> bool {
        let phrase = crate::instruction::normalize(phrase);
        self.phrases().contains(&phrase)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneTruth {
    pub width: usize,
    pub height: usize,
    pub objects: Vec<SceneObject>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfidenceSpec {
    Constant(f64),
    /// Normal draw clipped to `[0, 1]`.
    Gaussian {
        mean: f64,
        std: f64,
    },
}

impl ConfidenceSpec {
    fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            ConfidenceSpec::Constant(c) => c.clamp(0.0, 1.0),
            ConfidenceSpec::Gaussian { mean, std } => {
                if std <= 0.0 {
                    return mean.clamp(0.0, 1.0);
                }
                Normal::new(mean, std)
                    .map(|n| n.sample(rng))
                    .unwrap_or(mean)
                    .clamp(0.0, 1.0)
            }
        }
    }
}

fn always() -> f64 {
    1.0
}

/// `(true_label, query)` rule. `true_label` may be any phrase the object
/// grounds to, so attribute-specific confusions can be expressed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionRule {
    pub true_label: String,
    pub query: String,
    #[serde(default = "always")]
    pub probability: f64,
    pub confidence: ConfidenceSpec,
}

/// Rules are checked in order and the first match wins; when none matches, an
/// object answering its own phrase is detected with `self_match`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionModel {
    #[serde(default = "ConfusionModel::default_self_match")]
    pub self_match: ConfidenceSpec,
    #[serde(default)]
    pub rules: Vec<ConfusionRule>,
}

impl Default for ConfusionModel {
    fn default() -> Self {
        Self {
            self_match: Self::default_self_match(),
            rules: Vec::new(),
        }
    }
}

impl ConfusionModel {
    fn default_self_match() -> ConfidenceSpec {
        ConfidenceSpec::Constant(0.9)
    }

    pub fn rule(mut self, true_label: &str, query: &str, confidence: ConfidenceSpec) -> Self {
        self.rules.push(ConfusionRule {
            true_label: true_label.to_string(),
            query: query.to_string(),
            probability: 1.0,
            confidence,
        });
        self
    }
}

/// 64-bit FNV-1a, used only to derive per-(object, query) RNG streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Answers queries from ground truth through a confusion model. Output is a
/// pure function of `(seed, truth, query)`; the image only supplies dims.
#[derive(Debug, Clone)]
pub struct MockSegmenter {
    truth: SceneTruth,
    model: ConfusionModel,
    seed: u64,
}

impl MockSegmenter {
    pub fn new(truth: SceneTruth, model: ConfusionModel, seed: u64) -> Self {
        Self { truth, model, seed }
    }

    pub fn truth(&self) -> &SceneTruth {
        &self.truth
    }

    fn detect(&self, index: usize, obj: &SceneObject, query: &str) -> Option<f64> {
        let query = crate::instruction::normalize(query);
        let phrases = obj.phrases();
        let rule = self.model.rules.iter().find(|r| {
            crate::instruction::normalize(&r.query) == query
                && phrases.contains(&crate::instruction::normalize(&r.true_label))
        });
        let (probability, spec) = match rule {
            Some(r) => (r.probability, r.confidence),
            None if phrases.contains(&query) => (1.0, self.model.self_match),
            None => return None,
        };
        let key = format!("{}\u{1f}{}\u{1f}{}", index, obj.id, query);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ fnv1a(key.as_bytes()));
        let roll: f64 = rng.random();
        if roll >= probability {
            return None;
        }
        Some(spec.sample(&mut rng))
    }
}

impl Segmenter for MockSegmenter {
    fn name(&self) -> &str {
        "mock"
    }

    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>> {
        check_dims((self.truth.width, self.truth.height), image.dims())?;
        let mut out = Vec::new();
        for (i, obj) in self.truth.objects.iter().enumerate() {
            if let Some(conf) = self.detect(i, obj, concept) {
                out.push(Instance::new(obj.mask.clone(), conf, concept)?);
            }
        }
        Ok(out)
    }
}
