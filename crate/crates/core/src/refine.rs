//! Two-layer target refinement.
//!
//! Layer 1 scores each target hypothesis by how much its safe-set confidence
//! exceeds the strongest distractor hypothesis covering the same pixels
//! (IoU above `eta`). Layer 2 groups all target pixels into connected
//! components and keeps the single component maximizing
//! `(1 + g*) * sigma*`, where `g*` is the best genuineness and `sigma*` the
//! peak safe-set confidence among hypotheses touching it.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{connected_components, iou, BinaryMask, ConnectedComponent, Connectivity};
use crate::segment::Instance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Cross-validation followed by component selection.
    #[default]
    TwoLayer,
    /// Component selection by peak confidence only (genuineness fixed at 0).
    ConfidenceOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefinementConfig {
    pub eta: f64,
    pub connectivity: Connectivity,
    pub mode: RefinementMode,
}

impl Default for RefinementConfig {
    fn default() -> Self {
        Self {
            eta: 0.3,
            connectivity: Connectivity::Eight,
            mode: RefinementMode::TwoLayer,
        }
    }
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::InvalidConfig(format!("eta {} must lie in (0, 1)", self.eta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredInstance {
    pub instance: Instance,
    /// `sigma_safe - max conflicting sigma_dist`; may be negative.
    pub genuineness: f64,
    /// Index into the distractor list of the instance achieving the max.
    pub best_conflict: Option<usize>,
}

pub fn cross_validate(
    targets: &[Instance],
    distractors: &[Instance],
    cfg: &RefinementConfig,
) -> Result<Vec<ScoredInstance>> {
    targets
        .iter()
        .map(|t| {
            let mut best: Option<(usize, f64)> = None;
            for (j, d) in distractors.iter().enumerate() {
                if iou(&t.mask, &d.mask)? > cfg.eta && best.is_none_or(|(_, s)| d.confidence > s) {
                    best = Some((j, d.confidence));
                }
            }
            let penalty = best.map_or(0.0, |(_, s)| s);
            Ok(ScoredInstance {
                instance: t.clone(),
                genuineness: t.confidence - penalty,
                best_conflict: best.map(|(j, _)| j),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentScore {
    pub component: ConnectedComponent,
    pub g_star: f64,
    pub sigma_star: f64,
    pub score: f64,
    /// Indices of scored instances intersecting this component.
    pub contributors: Vec<usize>,
}

/// Higher score, then larger area, then earlier first pixel.
fn rank(a: &ComponentScore, b: &ComponentScore) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(b.component.area.cmp(&a.component.area))
        .then(a.component.min_index.cmp(&b.component.min_index))
}

pub fn score_components(scored: &[ScoredInstance], cfg: &RefinementConfig) -> Result<Vec<ComponentScore>> {
    let Some(first) = scored.first() else {
        return Err(Error::NoTargetFound);
    };
    let (w, h) = first.instance.mask.dims();
    let mut union = BinaryMask::empty(w, h);
    for s in scored {
        union.union_in_place(&s.instance.mask)?;
    }
    if union.is_empty() {
        return Err(Error::NoTargetFound);
    }

    connected_components(&union, cfg.connectivity)
        .into_iter()
        .map(|component| {
            let mut g_star = f64::NEG_INFINITY;
            let mut sigma_star = f64::NEG_INFINITY;
            let mut contributors = Vec::new();
            for (i, s) in scored.iter().enumerate() {
                if s.instance.mask.intersects(&component.mask)? {
                    g_star = g_star.max(s.genuineness);
                    sigma_star = sigma_star.max(s.instance.confidence);
                    contributors.push(i);
                }
            }
            if cfg.mode == RefinementMode::ConfidenceOnly {
                g_star = 0.0;
            }
            Ok(ComponentScore {
                score: (1.0 + g_star) * sigma_star,
                component,
                g_star,
                sigma_star,
                contributors,
            })
        })
        .collect()
}

/// Index of the winning component in `scores`.
pub fn best_component(scores: &[ComponentScore]) -> Option<usize> {
    (0..scores.len()).min_by(|&a, &b| rank(&scores[a], &scores[b]))
}

pub fn select_component(scored: &[ScoredInstance], cfg: &RefinementConfig) -> Result<BinaryMask> {
    let scores = score_components(scored, cfg)?;
    let best = best_component(&scores).ok_or(Error::NoTargetFound)?;
    Ok(scores[best].component.mask.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTrace {
    pub concept: String,
    pub confidence: f64,
    pub genuineness: f64,
    pub best_conflict: Option<ConflictTrace>,
    pub area: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictTrace {
    pub concept: String,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentTrace {
    pub id: usize,
    pub area: usize,
    pub bbox: (usize, usize, usize, usize),
    pub g_star: f64,
    pub sigma_star: f64,
    pub score: f64,
    pub instances: Vec<usize>,
}

/// Serializable record of one refinement decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementTrace {
    pub eta: f64,
    pub mode: RefinementMode,
    pub instances: Vec<InstanceTrace>,
    pub components: Vec<ComponentTrace>,
    pub selected: usize,
}

#[derive(Debug, Clone)]
pub struct Refinement {
    pub mask: BinaryMask,
    pub trace: RefinementTrace,
}

/// Runs both layers on the target hypotheses. Anchor hypotheses are not
/// refined and never pass through here.
pub fn refine_target(targets: &[Instance], distractors: &[Instance], cfg: &RefinementConfig) -> Result<Refinement> {
    cfg.validate()?;
    let scored = match cfg.mode {
        RefinementMode::TwoLayer => cross_validate(targets, distractors, cfg)?,
        RefinementMode::ConfidenceOnly => targets
            .iter()
            .map(|t| ScoredInstance {
                instance: t.clone(),
                genuineness: 0.0,
                best_conflict: None,
            })
            .collect(),
    };
    let scores = score_components(&scored, cfg)?;
    let selected = best_component(&scores).ok_or(Error::NoTargetFound)?;

    let trace = RefinementTrace {
        eta: cfg.eta,
        mode: cfg.mode,
        instances: scored
            .iter()
            .map(|s| InstanceTrace {
                concept: s.instance.concept.clone(),
                confidence: s.instance.confidence,
                genuineness: s.genuineness,
                best_conflict: s.best_conflict.map(|j| ConflictTrace {
                    concept: distractors[j].concept.clone(),
                    confidence: distractors[j].confidence,
                }),
                area: s.instance.mask.count(),
            })
            .collect(),
        components: scores
            .iter()
            .enumerate()
            .map(|(id, c)| ComponentTrace {
                id,
                area: c.component.area,
                bbox: c.component.bbox,
                g_star: c.g_star,
                sigma_star: c.sigma_star,
                score: c.score,
                instances: c.contributors.clone(),
            })
            .collect(),
        selected,
    };
    Ok(Refinement {
        mask: scores[selected].component.mask.clone(),
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: usize = 40;
    const H: usize = 20;

    fn inst(x: usize, conf: f64, concept: &str) -> Instance {
        Instance::new(BinaryMask::rect(W, H, x, 5, 6, 6), conf, concept).unwrap()
    }

    #[test]
    fn imposter_gets_negative_genuineness() {
        let targets = [inst(2, 0.8, "spoon"), inst(20, 0.6, "spoon")];
        let distractors = [inst(20, 0.9, "spatula")];
        let scored = cross_validate(&targets, &distractors, &RefinementConfig::default()).unwrap();
        assert_eq!(scored[0].genuineness, 0.8);
        assert_eq!(scored[0].best_conflict, None);
        assert!((scored[1].genuineness - (-0.3)).abs() < 1e-12);
        assert_eq!(scored[1].best_conflict, Some(0));
    }

    #[test]
    fn strongest_overlapping_distractor_wins() {
        let targets = [inst(10, 0.75, "spoon")];
        let distractors = [inst(10, 0.4, "fork"), inst(11, 0.7, "knife"), inst(30, 0.99, "whisk")];
        let scored = cross_validate(&targets, &distractors, &RefinementConfig::default()).unwrap();
        assert!((scored[0].genuineness - (0.75 - 0.7)).abs() < 1e-12);
        assert_eq!(scored[0].best_conflict, Some(1));
    }

    #[test]
    fn iou_threshold_is_strict() {
        // 6x6 vs shifted by 2: inter 24, union 48 -> IoU exactly 0.5
        let t = [inst(10, 0.8, "spoon")];
        let d = [inst(12, 0.9, "fork")];
        let cfg = RefinementConfig {
            eta: 0.5,
            ..Default::default()
        };
        assert_eq!(cross_validate(&t, &d, &cfg).unwrap()[0].genuineness, 0.8);
    }

    #[test]
    fn component_scores_follow_composite_formula() {
        let targets = [inst(2, 0.8, "spoon"), inst(20, 0.6, "spoon")];
        let distractors = [inst(20, 0.9, "spatula")];
        let cfg = RefinementConfig::default();
        let scored = cross_validate(&targets, &distractors, &cfg).unwrap();
        let scores = score_components(&scored, &cfg).unwrap();
        assert_eq!(scores.len(), 2);
        assert!((scores[0].score - 1.44).abs() < 1e-9);
        assert!((scores[1].score - 0.42).abs() < 1e-9);
        assert_eq!(select_component(&scored, &cfg).unwrap(), targets[0].mask);
    }

    #[test]
    fn singleton_component_is_selected_even_with_low_score() {
        let targets = [inst(5, 0.1, "spoon")];
        let distractors = [inst(5, 1.0, "fork")];
        let r = refine_target(&targets, &distractors, &RefinementConfig::default()).unwrap();
        assert_eq!(r.mask, targets[0].mask);
        assert_eq!(r.trace.components.len(), 1);
    }

    #[test]
    fn ties_prefer_larger_then_earlier() {
        let small = Instance::new(BinaryMask::rect(W, H, 1, 1, 3, 3), 0.5, "s").unwrap();
        let big = Instance::new(BinaryMask::rect(W, H, 20, 1, 4, 4), 0.5, "s").unwrap();
        let cfg = RefinementConfig::default();
        let r = refine_target(&[small.clone(), big.clone()], &[], &cfg).unwrap();
        assert_eq!(r.mask, big.mask);
        let twin = Instance::new(BinaryMask::rect(W, H, 30, 1, 3, 3), 0.5, "s").unwrap();
        let r = refine_target(&[twin, small.clone()], &[], &cfg).unwrap();
        assert_eq!(r.mask, small.mask);
    }

    #[test]
    fn no_targets_is_an_error() {
        let cfg = RefinementConfig::default();
        assert!(matches!(refine_target(&[], &[], &cfg), Err(Error::NoTargetFound)));
        assert!(matches!(select_component(&[], &cfg), Err(Error::NoTargetFound)));
    }

    #[test]
    fn confidence_only_mode_ignores_conflicts() {
        let targets = [inst(2, 0.55, "spoon"), inst(20, 0.6, "spoon")];
        let distractors = [inst(20, 0.9, "spatula")];
        let cfg = RefinementConfig {
            mode: RefinementMode::ConfidenceOnly,
            ..Default::default()
        };
        let r = refine_target(&targets, &distractors, &cfg).unwrap();
        assert_eq!(r.mask, targets[1].mask);
    }

    #[test]
    fn invalid_eta_rejected() {
        for eta in [0.0, 1.0, -0.2, f64::NAN] {
            let cfg = RefinementConfig {
                eta,
                ..Default::default()
            };
            assert!(cfg.validate().is_err());
        }
    }
}
