//! Frame sources: scene bundles and plain frame directories.

use std::path::Path;
use std::sync::Arc;

use anyhow::Context;
use distill_core::segment::{MockSegmenter, SceneTruth};
use distill_core::{DistractorLexicon, FrameInput};
use distill_harness::bundle::is_bundle;
use distill_harness::{read_bundle, read_frame_dir, SceneSpec};

use crate::config::RunConfig;
use crate::exit::usage;

pub struct Input {
    pub frames: Vec<FrameInput>,
    /// Present for bundles only.
    pub spec: Option<SceneSpec>,
    pub truth: Option<SceneTruth>,
}

impl Input {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        if !path.is_dir() {
            return Err(usage(format!("{} is not a directory", path.display())).into());
        }
        let input = if is_bundle(path) {
            let bundle = read_bundle(path).with_context(|| format!("reading bundle {}", path.display()))?;
            Input {
                frames: bundle.frame_inputs(),
                truth: Some(bundle.truth()),
                spec: Some(bundle.spec),
            }
        } else {
            Input {
                frames: read_frame_dir(path)?,
                spec: None,
                truth: None,
            }
        };
        if input.frames.is_empty() {
            return Err(usage(format!("{} holds no frames", path.display())).into());
        }
        Ok(input)
    }

    pub fn instruction(&self, cfg: &RunConfig) -> anyhow::Result<String> {
        cfg.instruction
            .clone()
            .or_else(|| self.spec.as_ref().map(|s| s.instruction.clone()))
            .ok_or_else(|| usage("no --instruction given and the input is not a bundle").into())
    }

    pub fn domain(&self, cfg: &RunConfig) -> String {
        cfg.domain
            .clone()
            .or_else(|| self.spec.as_ref().map(|s| s.domain.clone()))
            .unwrap_or_else(|| distill_harness::taxonomy::DOMAIN.to_string())
    }

    /// `--lexicon` first, then the bundle's own, then the bundled default.
    pub fn lexicon(&self, cfg: &RunConfig) -> anyhow::Result<DistractorLexicon> {
        if let Some(path) = &cfg.lexicon {
            return Ok(DistractorLexicon::load(path)?);
        }
        Ok(self
            .spec
            .as_ref()
            .and_then(|s| s.lexicon.clone())
            .unwrap_or_else(DistractorLexicon::bundled))
    }

    pub fn mock_segmenter(&self, cfg: &RunConfig) -> anyhow::Result<Arc<MockSegmenter>> {
        match (&self.spec, &self.truth) {
            (Some(spec), Some(truth)) => Ok(Arc::new(MockSegmenter::new(
                truth.clone(),
                spec.confusion.clone(),
                cfg.seed.unwrap_or(spec.seed),
            ))),
            _ => Err(usage("the mock segmenter needs a scene bundle with ground truth").into()),
        }
    }
}
