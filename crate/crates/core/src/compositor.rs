//! Episode lifecycle: heavy pipeline once at t=0, then per-frame blending of
//! the live frame with the cached clean scene and robot-pixel overwrite.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;
use crate::distill::{build_clean_scene, CleanScene, CleanSceneCache, PhaseTimings};
use crate::error::{check_dims, Error, Result};
use crate::image::Image;
use crate::inpaint::{CountingInpainter, Inpainter};
use crate::instruction::{decompose, ConceptDecomposition, DistractorLexicon, Instruction, PlacementGrammar};
use crate::mask::{gaussian_blur, BinaryMask, SoftMask};
use crate::par::*;
use crate::segment::{CountingSegmenter, Segmenter};

#[derive(Clone)]
pub struct Backends {
    pub segmenter: Arc<dyn Segmenter>,
    pub inpainter: Arc<dyn Inpainter>,
}

impl Backends {
    pub fn new(segmenter: Arc<dyn Segmenter>, inpainter: Arc<dyn Inpainter>) -> Self {
        Self { segmenter, inpainter }
    }
}

#[derive(Debug, Clone)]
pub struct FrameInput {
    pub observation: Image,
    pub robot_mask: BinaryMask,
    pub timestep: u64,
}

/// `alpha * clean + (1 - alpha) * live` per channel, rounded half up, then
/// live pixels copied back wherever `robot_mask` is set.
pub fn composite(clean: &Image, live: &Image, alpha: &SoftMask, robot_mask: Option<&BinaryMask>) -> Result<Image> {
    check_dims(clean.dims(), live.dims())?;
    check_dims(clean.dims(), alpha.dims())?;
    if let Some(r) = robot_mask {
        check_dims(clean.dims(), r.dims())?;
    }
    let w = clean.width();
    let mut out = Image::new(clean.width(), clean.height());
    if w == 0 {
        return Ok(out);
    }
    let (c, l, a) = (clean.as_raw(), live.as_raw(), alpha.values());
    out.as_raw_mut().par_chunks_mut(w * 3).enumerate().for_each(|(y, row)| {
        for x in 0..w {
            let p = y * w + x;
            let i = p * 3;
            if robot_mask.is_some_and(|r| r.get_index(p)) {
                row[x * 3..x * 3 + 3].copy_from_slice(&l[i..i + 3]);
                continue;
            }
            let av = a[p];
            for ch in 0..3 {
                let v = av * c[i + ch] as f64 + (1.0 - av) * l[i + ch] as f64;
                row[x * 3 + ch] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
            }
        }
    });
    Ok(out)
}

#[derive(Debug, Default)]
struct CallCounters {
    segment: Arc<AtomicU64>,
    inpaint: Arc<AtomicU64>,
}

#[derive(Default)]
struct EpisodeSlot {
    cache: CleanSceneCache,
    counters: CallCounters,
    initialized: std::sync::atomic::AtomicBool,
}

/// Owns configuration and backends, and tracks which episodes have been
/// initialized so the t=0 work happens exactly once per episode id.
pub struct Distiller {
    config: PipelineConfig,
    grammar: PlacementGrammar,
    lexicon: DistractorLexicon,
    backends: Backends,
    episodes: Mutex<HashMap<String, Arc<EpisodeSlot>>>,
}

impl Distiller {
    pub fn new(config: PipelineConfig, backends: Backends) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            grammar: PlacementGrammar::default(),
            lexicon: DistractorLexicon::bundled(),
            backends,
            episodes: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_lexicon(mut self, lexicon: DistractorLexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn with_grammar(mut self, grammar: PlacementGrammar) -> Self {
        self.grammar = grammar;
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn decompose(&self, instruction: &Instruction, domain: &str) -> Result<ConceptDecomposition> {
        decompose(instruction, &self.grammar, &self.lexicon, domain)
    }

    fn slot(&self, episode_id: &str) -> Arc<EpisodeSlot> {
        self.episodes
            .lock()
            .expect("episode table lock")
            .entry(episode_id.to_string())
            .or_default()
            .clone()
    }

    /// Builds (once) and returns the clean scene for an episode. Repeated and
    /// concurrent calls share one result and issue no further backend calls.
    pub fn build_clean_scene(
        &self,
        episode_id: &str,
        o0: &Image,
        robot_mask: Option<&BinaryMask>,
        decomposition: &ConceptDecomposition,
    ) -> Result<Arc<CleanScene>> {
        let slot = self.slot(episode_id);
        slot.cache.get_or_build(|| {
            let seg = CountingSegmenter::with_counter(self.backends.segmenter.clone(), slot.counters.segment.clone());
            let inp = CountingInpainter::with_counter(self.backends.inpainter.clone(), slot.counters.inpaint.clone());
            build_clean_scene(o0, robot_mask, decomposition, &seg, &inp, &self.config)
        })
    }

    /// Runs the full t=0 pipeline and returns the episode state together with
    /// the distilled first observation.
    pub fn init_episode(
        &self,
        episode_id: &str,
        frame0: &FrameInput,
        instruction: &Instruction,
        domain: &str,
    ) -> Result<(EpisodeState, Image)> {
        let slot = self.slot(episode_id);
        if slot.initialized.swap(true, Ordering::SeqCst) {
            return Err(Error::EpisodeAlreadyInitialized(episode_id.to_string()));
        }
        check_dims(frame0.observation.dims(), frame0.robot_mask.dims())?;
        let start = Instant::now();
        let decomposition = self.decompose(instruction, domain)?;
        let scene = self.build_clean_scene(
            episode_id,
            &frame0.observation,
            Some(&frame0.robot_mask),
            &decomposition,
        )?;

        let t = Instant::now();
        let alpha = gaussian_blur(&scene.gate_mask, self.config.blur_sigma);
        let blur_ms = t.elapsed().as_secs_f64() * 1e3;

        let mut state = EpisodeState {
            id: episode_id.to_string(),
            decomposition,
            frozen_safe_mask: scene.safe_mask.clone(),
            clean_scene: scene,
            alpha,
            robot_overwrite: self.config.robot_overwrite,
            last_timestep: frame0.timestep,
            frames: 0,
            segment_calls: slot.counters.segment.clone(),
            inpaint_calls: slot.counters.inpaint.clone(),
            calls_at_init: (0, 0),
            init_ms: 0.0,
            blur_ms,
            frame_ms: Vec::new(),
        };
        let first = state.render(&frame0.observation, &frame0.robot_mask)?;
        state.init_ms = start.elapsed().as_secs_f64() * 1e3;
        state.calls_at_init = (state.segment_calls(), state.inpaint_calls());
        Ok((state, first))
    }
}

/// Per-episode state after initialization. Owned by one frame stream.
pub struct EpisodeState {
    id: String,
    decomposition: ConceptDecomposition,
    clean_scene: Arc<CleanScene>,
    alpha: SoftMask,
    frozen_safe_mask: BinaryMask,
    robot_overwrite: bool,
    last_timestep: u64,
    frames: u64,
    segment_calls: Arc<AtomicU64>,
    inpaint_calls: Arc<AtomicU64>,
    calls_at_init: (u64, u64),
    init_ms: f64,
    blur_ms: f64,
    frame_ms: Vec<f64>,
}

impl EpisodeState {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn decomposition(&self) -> &ConceptDecomposition {
        &self.decomposition
    }

    pub fn clean_scene(&self) -> &Arc<CleanScene> {
        &self.clean_scene
    }

    pub fn alpha(&self) -> &SoftMask {
        &self.alpha
    }

    pub fn frozen_safe_mask(&self) -> &BinaryMask {
        &self.frozen_safe_mask
    }

    pub fn segment_calls(&self) -> u64 {
        self.segment_calls.load(Ordering::SeqCst)
    }

    pub fn inpaint_calls(&self) -> u64 {
        self.inpaint_calls.load(Ordering::SeqCst)
    }

    fn render(&self, live: &Image, robot_mask: &BinaryMask) -> Result<Image> {
        composite(
            &self.clean_scene.image,
            live,
            &self.alpha,
            self.robot_overwrite.then_some(robot_mask),
        )
    }

    /// Distills one frame with `timestep > 0`. No backend is called.
    pub fn distill_frame(&mut self, frame: &FrameInput) -> Result<Image> {
        if frame.timestep <= self.last_timestep {
            return Err(Error::FrameOutOfOrder {
                last: self.last_timestep,
                got: frame.timestep,
            });
        }
        check_dims(self.clean_scene.image.dims(), frame.observation.dims())?;
        let t = Instant::now();
        let out = self.render(&frame.observation, &frame.robot_mask)?;
        self.frame_ms.push(t.elapsed().as_secs_f64() * 1e3);
        self.last_timestep = frame.timestep;
        self.frames += 1;
        Ok(out)
    }

    pub fn close(self) -> EpisodeReport {
        let (seg_init, inp_init) = self.calls_at_init;
        let seg_now = self.segment_calls.load(Ordering::SeqCst);
        let inp_now = self.inpaint_calls.load(Ordering::SeqCst);
        let provenance = &self.clean_scene.provenance;
        EpisodeReport {
            episode_id: self.id,
            frames: self.frames,
            segmentation_calls_init: seg_init,
            segmentation_calls_after_init: seg_now - seg_init,
            inpaint_calls_init: inp_init,
            inpaint_calls_after_init: inp_now - inp_init,
            fail_open: provenance.fail_open,
            warnings: provenance.warnings.clone(),
            timings: TimingReport::new(self.init_ms, provenance.timings.clone(), self.blur_ms, self.frame_ms),
            execution: crate::par::MODE.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub init_ms: f64,
    pub phases: PhaseTimings,
    pub blur_ms: f64,
    pub frame_ms: Vec<f64>,
    pub frame_ms_p50: Option<f64>,
}

impl TimingReport {
    fn new(init_ms: f64, phases: PhaseTimings, blur_ms: f64, frame_ms: Vec<f64>) -> Self {
        let frame_ms_p50 = percentile(&frame_ms, 50.0);
        Self {
            init_ms,
            phases,
            blur_ms,
            frame_ms,
            frame_ms_p50,
        }
    }
}

/// Nearest-rank percentile; `None` for an empty sample.
pub fn percentile(samples: &[f64], p: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub episode_id: String,
    /// Frames distilled after t=0.
    pub frames: u64,
    pub segmentation_calls_init: u64,
    pub segmentation_calls_after_init: u64,
    pub inpaint_calls_init: u64,
    pub inpaint_calls_after_init: u64,
    pub fail_open: bool,
    pub warnings: Vec<String>,
    pub timings: TimingReport,
    pub execution: String,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(w: usize, h: usize, rgb: [u8; 3]) -> Image {
        Image::filled(w, h, rgb)
    }

    #[test]
    fn alpha_zero_returns_live() {
        let live = img(5, 4, [12, 200, 7]);
        let out = composite(&img(5, 4, [0, 0, 0]), &live, &SoftMask::zeros(5, 4), None).unwrap();
        assert_eq!(out, live);
    }

    #[test]
    fn alpha_one_returns_clean() {
        let clean = img(5, 4, [99, 3, 250]);
        let out = composite(
            &clean,
            &img(5, 4, [1, 2, 3]),
            &SoftMask::constant(5, 4, 1.0),
            Some(&BinaryMask::empty(5, 4)),
        )
        .unwrap();
        assert_eq!(out, clean);
    }

    #[test]
    fn robot_pixels_come_from_live_frame() {
        let clean = img(6, 6, [0, 0, 0]);
        let live = img(6, 6, [200, 100, 50]);
        let robot = BinaryMask::rect(6, 6, 1, 1, 2, 3);
        let out = composite(&clean, &live, &SoftMask::constant(6, 6, 1.0), Some(&robot)).unwrap();
        for y in 0..6 {
            for x in 0..6 {
                let expected = if robot.get(x, y) {
                    live.pixel(x, y)
                } else {
                    clean.pixel(x, y)
                };
                assert_eq!(out.pixel(x, y), expected);
            }
        }
    }

    #[test]
    fn blend_rounds_half_up() {
        let out = composite(
            &img(1, 1, [11, 0, 255]),
            &img(1, 1, [10, 1, 0]),
            &SoftMask::constant(1, 1, 0.5),
            None,
        )
        .unwrap();
        assert_eq!(out.pixel(0, 0), [11, 1, 128]);
    }

    #[test]
    fn percentile_nearest_rank() {
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(percentile(&[3.0, 1.0, 2.0], 50.0), Some(2.0));
        assert_eq!(percentile(&[4.0, 1.0, 3.0, 2.0], 50.0), Some(2.0));
    }
}
