//! Ground-truth pixel accounting for distilled frames.

use distill_core::{BinaryMask, Image};
use serde::{Deserialize, Serialize};

use crate::scene::{GeneratedScene, Role};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub target: f64,
    pub residual: f64,
    pub anchor: f64,
    /// Largest per-channel difference at which two pixels count as equal.
    pub tolerance: u8,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            target: 0.9,
            residual: 0.05,
            anchor: 0.9,
            tolerance: 24,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillationMetrics {
    /// Worst-frame share of visible target pixels left unchanged.
    pub target_preservation_iou: f64,
    /// Worst-frame ratio of distractor pixels still differing from the
    /// background in the output versus in the raw observation.
    pub distractor_residual_ratio: f64,
    pub anchor_preservation_iou: f64,
    pub robot_exactness: bool,
    pub success: bool,
    pub frames: usize,
}

fn close(a: [u8; 3], b: [u8; 3], tol: u8) -> bool {
    a.iter().zip(&b).all(|(&x, &y)| x.abs_diff(y) <= tol)
}

/// Share of `region` pixels where `output` stays within tolerance of
/// `observed`; `None` for an empty region.
pub fn preservation(region: &BinaryMask, observed: &Image, output: &Image, tol: u8) -> Option<f64> {
    let mut total = 0usize;
    let mut kept = 0usize;
    for (i, &m) in region.bits().iter().enumerate() {
        if m {
            total += 1;
            if close(observed.pixel_at(i), output.pixel_at(i), tol) {
                kept += 1;
            }
        }
    }
    (total > 0).then(|| kept as f64 / total as f64)
}

/// Pixels of `region` whose color differs from the background by more than the tolerance.
pub fn surviving(region: &BinaryMask, image: &Image, background: &Image, tol: u8) -> usize {
    region
        .bits()
        .iter()
        .enumerate()
        .filter(|&(i, &m)| m && !close(image.pixel_at(i), background.pixel_at(i), tol))
        .count()
}

/// Streams frames of one episode into a [`DistillationMetrics`].
#[derive(Debug, Clone)]
pub struct MetricsAccumulator {
    thresholds: Thresholds,
    target: f64,
    anchor: f64,
    residual: f64,
    robot_exact: bool,
    frames: usize,
}

impl MetricsAccumulator {
    pub fn new(thresholds: Thresholds) -> Self {
        Self {
            thresholds,
            target: 1.0,
            anchor: 1.0,
            residual: 0.0,
            robot_exact: true,
            frames: 0,
        }
    }

    pub fn observe(&mut self, scene: &GeneratedScene, t: usize, output: &Image) {
        let tol = self.thresholds.tolerance;
        let observed = &scene.frames[t];
        if let Some(p) = preservation(&scene.role_mask(Role::Target, t), observed, output, tol) {
            self.target = self.target.min(p);
        }
        if let Some(p) = preservation(&scene.role_mask(Role::Anchor, t), observed, output, tol) {
            self.anchor = self.anchor.min(p);
        }
        let distractors = scene.role_mask(Role::Distractor, t);
        let before = surviving(&distractors, observed, &scene.background, tol);
        if before > 0 {
            let after = surviving(&distractors, output, &scene.background, tol);
            self.residual = self.residual.max(after as f64 / before as f64);
        }
        let robot_ok = scene.robot_masks[t]
            .bits()
            .iter()
            .enumerate()
            .all(|(i, &m)| !m || observed.pixel_at(i) == output.pixel_at(i));
        self.robot_exact &= robot_ok;
        self.frames += 1;
    }

    pub fn finish(self) -> DistillationMetrics {
        let th = self.thresholds;
        let success =
            self.target >= th.target && self.residual <= th.residual && self.anchor >= th.anchor && self.robot_exact;
        DistillationMetrics {
            target_preservation_iou: self.target,
            distractor_residual_ratio: self.residual,
            anchor_preservation_iou: self.anchor,
            robot_exactness: self.robot_exact,
            success,
            frames: self.frames,
        }
    }
}
