//! Gate composition, inpainting, and the cached per-episode clean scene.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{FailPolicy, PipelineConfig};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::inpaint::{inpaint, Inpainter};
use crate::instruction::ConceptDecomposition;
use crate::mask::{dilate, BinaryMask, SoftMask};
use crate::refine::{refine_target, RefinementTrace};
use crate::segment::{segment_set, union_channel, Instance, Segmenter};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatingConfig {
    /// Distractor dilation radius.
    pub r_d: usize,
    /// Safe-set dilation radius; must be >= `r_d`.
    pub r_s: usize,
    /// Robot dilation radius for the inpainting mask.
    pub r_e: usize,
    pub binarize_threshold: f64,
}

impl Default for GatingConfig {
    fn default() -> Self {
        Self {
            r_d: 3,
            r_s: 6,
            r_e: 5,
            binarize_threshold: 0.5,
        }
    }
}

impl GatingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r_s < self.r_d {
            return Err(Error::InvalidConfig(format!(
                "safe radius {} is smaller than distractor radius {}",
                self.r_s, self.r_d
            )));
        }
        if !(self.binarize_threshold > 0.0 && self.binarize_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "binarize threshold {} must lie in (0, 1)",
                self.binarize_threshold
            )));
        }
        Ok(())
    }
}

/// `dilate(dist, r_d) \ dilate(safe, r_s)`.
pub fn compose_gate(m_dist: &BinaryMask, m_safe: &BinaryMask, cfg: &GatingConfig) -> Result<BinaryMask> {
    cfg.validate()?;
    dilate(m_dist, cfg.r_d).subtract(&dilate(m_safe, cfg.r_s))
}

/// Soft-mask entry point: binarizes both inputs at the configured threshold
/// before any dilation.
pub fn compose_gate_soft(m_dist: &SoftMask, m_safe: &SoftMask, cfg: &GatingConfig) -> Result<BinaryMask> {
    compose_gate(
        &m_dist.binarize(cfg.binarize_threshold),
        &m_safe.binarize(cfg.binarize_threshold),
        cfg,
    )
}

/// `m_inp ∪ dilate(m_robot, r_e)`.
pub fn compose_inpaint_mask(m_inp: &BinaryMask, m_robot: &BinaryMask, cfg: &GatingConfig) -> Result<BinaryMask> {
    m_inp.union(&dilate(m_robot, cfg.r_e))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub segment_ms: f64,
    pub refine_ms: f64,
    pub gate_ms: f64,
    pub inpaint_ms: f64,
}

impl PhaseTimings {
    pub fn total_ms(&self) -> f64 {
        self.segment_ms + self.refine_ms + self.gate_ms + self.inpaint_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub segmenter: String,
    pub inpainter: String,
    pub fail_open: bool,
    pub warnings: Vec<String>,
    pub timings: PhaseTimings,
}

/// The t=0 observation with distractor and robot regions filled.
#[derive(Debug, Clone)]
pub struct CleanScene {
    pub image: Image,
    /// Final inpainting mask (gate plus dilated robot).
    pub inpaint_mask: BinaryMask,
    /// Gate mask: dilated distractors minus the protected safe region.
    pub gate_mask: BinaryMask,
    pub safe_mask: BinaryMask,
    pub distractor_mask: BinaryMask,
    pub robot_mask: BinaryMask,
    pub refinement: Option<RefinementTrace>,
    pub provenance: Provenance,
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn collect(map: &indexmap::IndexMap<String, Vec<Instance>>, concepts: &[String]) -> Vec<Instance> {
    concepts
        .iter()
        .filter_map(|c| map.get(c))
        .flat_map(|v| v.iter().cloned())
        .collect()
}

/// Runs segmentation, refinement, gating and inpainting once on the t=0
/// frame. `robot_mask` is an externally supplied robot mask (ground truth in
/// simulation); it is merged with whatever the backend returns for the robot
/// concept.
pub fn build_clean_scene(
    o0: &Image,
    robot_mask: Option<&BinaryMask>,
    decomposition: &ConceptDecomposition,
    segmenter: &dyn Segmenter,
    inpainter: &dyn Inpainter,
    cfg: &PipelineConfig,
) -> Result<CleanScene> {
    cfg.validate()?;
    let (w, h) = o0.dims();
    if let Some(r) = robot_mask {
        crate::error::check_dims(o0.dims(), r.dims())?;
    }
    let mut timings = PhaseTimings::default();
    let mut warnings = Vec::new();

    let t = Instant::now();
    let channels = segment_set(segmenter, o0, &decomposition.all_concepts())?;
    timings.segment_ms = ms_since(t);

    let target = channels.get(decomposition.target()).cloned().unwrap_or_default();
    let anchor: Vec<String> = decomposition.anchor().map(str::to_string).into_iter().collect();
    let anchor = collect(&channels, &anchor);
    let robot = collect(&channels, &[decomposition.robot_concept().to_string()]);
    let distractors = collect(&channels, &decomposition.distractors);

    let mut m_robot = union_channel(&robot, w, h)?;
    if let Some(r) = robot_mask {
        m_robot.union_in_place(r)?;
    }

    let t = Instant::now();
    let refinement = match refine_target(&target, &distractors, &cfg.refinement) {
        Ok(r) => r,
        Err(Error::NoTargetFound) if cfg.fail_policy == FailPolicy::Open => {
            timings.refine_ms = ms_since(t);
            let msg = format!(
                "no instance of target {:?}; passing observation through",
                decomposition.target()
            );
            log::warn!("{msg}");
            warnings.push(msg);
            return Ok(CleanScene {
                image: o0.clone(),
                inpaint_mask: BinaryMask::empty(w, h),
                gate_mask: BinaryMask::empty(w, h),
                safe_mask: BinaryMask::empty(w, h),
                distractor_mask: union_channel(&distractors, w, h)?,
                robot_mask: m_robot,
                refinement: None,
                provenance: Provenance {
                    segmenter: segmenter.name().to_string(),
                    inpainter: inpainter.name().to_string(),
                    fail_open: true,
                    warnings,
                    timings,
                },
            });
        }
        Err(e) => return Err(e),
    };
    timings.refine_ms = ms_since(t);

    let t = Instant::now();
    let mut m_safe = refinement.mask.clone();
    m_safe.union_in_place(&union_channel(&anchor, w, h)?)?;
    let m_dist = union_channel(&distractors, w, h)?;
    let m_inp = compose_gate(&m_dist, &m_safe, &cfg.gating)?;
    let m_lama = compose_inpaint_mask(&m_inp, &m_robot, &cfg.gating)?;
    timings.gate_ms = ms_since(t);

    let t = Instant::now();
    let image = inpaint(inpainter, o0, &m_lama)?;
    timings.inpaint_ms = ms_since(t);

    Ok(CleanScene {
        image,
        inpaint_mask: m_lama,
        gate_mask: m_inp,
        safe_mask: m_safe,
        distractor_mask: m_dist,
        robot_mask: m_robot,
        refinement: Some(refinement.trace),
        provenance: Provenance {
            segmenter: segmenter.name().to_string(),
            inpainter: inpainter.name().to_string(),
            fail_open: false,
            warnings,
            timings,
        },
    })
}

/// Single-flight holder for one episode's clean scene. The first caller
/// builds; concurrent and later callers get the same `Arc`.
#[derive(Default)]
pub struct CleanSceneCache {
    slot: Mutex<Option<Arc<CleanScene>>>,
    builds: AtomicU64,
}

impl CleanSceneCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get_or_build(&self, build: impl FnOnce() -> Result<CleanScene>) -> Result<Arc<CleanScene>> {
        let mut slot = self.slot.lock().expect("clean scene lock");
        if let Some(scene) = slot.as_ref() {
            return Ok(scene.clone());
        }
        let scene = Arc::new(build()?);
        self.builds.fetch_add(1, Ordering::SeqCst);
        *slot = Some(scene.clone());
        Ok(scene)
    }

    pub fn get(&self) -> Option<Arc<CleanScene>> {
        self.slot.lock().expect("clean scene lock").clone()
    }

    pub fn builds(&self) -> u64 {
        self.builds.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_subtracts_dilated_safe_region() {
        let dist = BinaryMask::full(10, 10);
        let safe = BinaryMask::rect(10, 10, 4, 4, 2, 2);
        let cfg = GatingConfig {
            r_d: 0,
            r_s: 1,
            ..Default::default()
        };
        let m = compose_gate(&dist, &safe, &cfg).unwrap();
        let expected = BinaryMask::from_fn(10, 10, |x, y| !((3..=6).contains(&x) && (3..=6).contains(&y)));
        assert_eq!(m, expected);
        assert_eq!(m.count(), 100 - 16);
    }

    #[test]
    fn empty_safe_leaves_dilated_distractors() {
        let dist = BinaryMask::rect(20, 20, 5, 5, 2, 2);
        let cfg = GatingConfig::default();
        let m = compose_gate(&dist, &BinaryMask::empty(20, 20), &cfg).unwrap();
        assert_eq!(m, dilate(&dist, cfg.r_d));
    }

    #[test]
    fn subset_with_equal_radii_annihilates() {
        let safe = BinaryMask::rect(20, 20, 3, 3, 8, 8);
        let dist = BinaryMask::rect(20, 20, 5, 5, 3, 3);
        let cfg = GatingConfig {
            r_d: 2,
            r_s: 2,
            ..Default::default()
        };
        assert!(compose_gate(&dist, &safe, &cfg).unwrap().is_empty());
    }

    #[test]
    fn invalid_radii_rejected() {
        let cfg = GatingConfig {
            r_d: 5,
            r_s: 2,
            ..Default::default()
        };
        let m = BinaryMask::empty(4, 4);
        assert!(matches!(compose_gate(&m, &m, &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn inpaint_mask_cases() {
        let cfg = GatingConfig::default();
        let inp = BinaryMask::rect(40, 40, 2, 2, 4, 4);
        let empty = BinaryMask::empty(40, 40);
        assert_eq!(compose_inpaint_mask(&inp, &empty, &cfg).unwrap(), inp);
        let robot = BinaryMask::rect(40, 40, 25, 25, 3, 3);
        let lama = compose_inpaint_mask(&inp, &robot, &cfg).unwrap();
        assert_eq!(lama.count(), inp.count() + dilate(&robot, cfg.r_e).count());
        assert_eq!(
            compose_inpaint_mask(&empty, &robot, &cfg).unwrap(),
            dilate(&robot, cfg.r_e)
        );
    }

    #[test]
    fn soft_gate_binarizes_first() {
        // 0.4 everywhere would dilate into a full mask if dilation ran on
        // soft values; binarized first, the distractor channel is empty.
        let dist = SoftMask::constant(8, 8, 0.4);
        let safe = SoftMask::zeros(8, 8);
        assert!(compose_gate_soft(&dist, &safe, &GatingConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn cache_builds_once() {
        let cache = CleanSceneCache::new();
        let mk = || {
            Ok(CleanScene {
                image: Image::new(1, 1),
                inpaint_mask: BinaryMask::empty(1, 1),
                gate_mask: BinaryMask::empty(1, 1),
                safe_mask: BinaryMask::empty(1, 1),
                distractor_mask: BinaryMask::empty(1, 1),
                robot_mask: BinaryMask::empty(1, 1),
                refinement: None,
                provenance: Provenance {
                    segmenter: "s".into(),
                    inpainter: "i".into(),
                    fail_open: false,
                    warnings: vec![],
                    timings: PhaseTimings::default(),
                },
            })
        };
        let a = cache.get_or_build(mk).unwrap();
        let b = cache.get_or_build(|| panic!("must not rebuild")).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(cache.builds(), 1);
    }
}
