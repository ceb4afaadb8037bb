//! One episode of one pipeline variant against a generated scene.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use distill_core::distill::CleanScene;
use distill_core::segment::MockSegmenter;
use distill_core::{
    Backends, DiffusionFill, Distiller, EpisodeReport, Image, Inpainter, Instruction, MeanColorFill, PipelineConfig,
    RefinementMode,
};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::metrics::{DistillationMetrics, MetricsAccumulator, Thresholds};
use crate::scene::GeneratedScene;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    /// Target channel resolved by confidence alone.
    NoRefinement,
    /// Harmonic fill swapped for a flat mean color.
    MeanColorFill,
    /// Composite without copying live robot pixels back.
    NoRobotProtection,
    /// Raw observation passed through.
    BaselineIdentity,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Full,
        Variant::NoRefinement,
        Variant::MeanColorFill,
        Variant::NoRobotProtection,
        Variant::BaselineIdentity,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoRefinement => "no_refinement",
            Variant::MeanColorFill => "mean_color_fill",
            Variant::NoRobotProtection => "no_robot_protection",
            Variant::BaselineIdentity => "baseline_identity",
        }
    }

    /// Pipeline settings for this variant, starting from `base`.
    pub fn config(&self, base: &PipelineConfig) -> PipelineConfig {
        let mut cfg = base.clone();
        match self {
            Variant::NoRefinement => cfg.refinement.mode = RefinementMode::ConfidenceOnly,
            Variant::NoRobotProtection => cfg.robot_overwrite = false,
            _ => {}
        }
        cfg
    }

    pub fn inpainter(&self) -> Arc<dyn Inpainter> {
        match self {
            Variant::MeanColorFill => Arc::new(MeanColorFill),
            _ => Arc::new(DiffusionFill::default()),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?}"))
    }
}

#[derive(Debug, Clone, Default)]
pub struct EpisodeOptions {
    pub thresholds: Thresholds,
    /// Keep every distilled frame in the outcome.
    pub keep_frames: bool,
}

#[derive(Debug, Clone)]
pub struct EpisodeOutcome {
    pub variant: Variant,
    pub metrics: DistillationMetrics,
    /// Absent for the identity baseline, which never runs the pipeline.
    pub report: Option<EpisodeReport>,
    pub clean_scene: Option<Arc<CleanScene>>,
    pub outputs: Vec<Image>,
}

/// Mock segmenter answering from the scene's own ground truth.
pub fn scene_segmenter(scene: &GeneratedScene) -> MockSegmenter {
    MockSegmenter::new(scene.truth(), scene.spec.confusion.clone(), scene.spec.seed)
}

pub fn run_episode(
    scene: &GeneratedScene,
    variant: Variant,
    base: &PipelineConfig,
    opts: &EpisodeOptions,
) -> Result<EpisodeOutcome> {
    let backends = Backends::new(Arc::new(scene_segmenter(scene)), variant.inpainter());
    run_episode_with(scene, variant, base, backends, opts)
}

/// Like [`run_episode`] with caller-supplied backends (the variant's own
/// inpainter choice is ignored).
pub fn run_episode_with(
    scene: &GeneratedScene,
    variant: Variant,
    base: &PipelineConfig,
    backends: Backends,
    opts: &EpisodeOptions,
) -> Result<EpisodeOutcome> {
    let mut acc = MetricsAccumulator::new(opts.thresholds);
    let mut outputs = Vec::new();
    let mut keep = |t: usize, img: Image, acc: &mut MetricsAccumulator| {
        acc.observe(scene, t, &img);
        if opts.keep_frames {
            outputs.push(img);
        }
    };

    if variant == Variant::BaselineIdentity {
        for t in 0..scene.frame_count() {
            keep(t, scene.frames[t].clone(), &mut acc);
        }
        return Ok(EpisodeOutcome {
            variant,
            metrics: acc.finish(),
            report: None,
            clean_scene: None,
            outputs,
        });
    }

    let mut distiller = Distiller::new(variant.config(base), backends)?;
    if let Some(lexicon) = &scene.spec.lexicon {
        distiller = distiller.with_lexicon(lexicon.clone());
    }
    let instruction = Instruction::new(scene.spec.instruction.clone())?;
    let episode_id = format!("seed-{}", scene.spec.seed);
    let (mut state, first) =
        distiller.init_episode(&episode_id, &scene.frame_input(0), &instruction, &scene.spec.domain)?;
    keep(0, first, &mut acc);
    for t in 1..scene.frame_count() {
        let out = state.distill_frame(&scene.frame_input(t))?;
        keep(t, out, &mut acc);
    }
    let clean_scene = state.clean_scene().clone();
    Ok(EpisodeOutcome {
        variant,
        metrics: acc.finish(),
        report: Some(state.close()),
        clean_scene: Some(clean_scene),
        outputs,
    })
}
