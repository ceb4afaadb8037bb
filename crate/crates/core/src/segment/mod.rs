//! Text-prompted instance segmentation behind one trait, with a
//! ground-truth mock, a JSON-lines wire client, and a fixture replayer.

mod fixture;
mod mock;
pub mod wire;

pub use fixture::{write_fixture, FixtureRecord, FixtureSegmenter};
pub use mock::{ConfidenceSpec, ConfusionModel, ConfusionRule, MockSegmenter, SceneObject, SceneTruth};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use indexmap::IndexMap;

use crate::error::{check_dims, Error, Result};
use crate::image::Image;
use crate::mask::BinaryMask;
use crate::par::*;

/// One segmentation hypothesis for a queried concept.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub mask: BinaryMask,
    pub confidence: f64,
    pub concept: String,
}

impl Instance {
    pub fn new(mask: BinaryMask, confidence: f64, concept: impl Into<String>) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Protocol(format!("confidence {confidence} outside [0, 1]")));
        }
        Ok(Self {
            mask,
            confidence,
            concept: concept.into(),
        })
    }
}

pub trait Segmenter: Send + Sync {
    fn name(&self) -> &str;

    /// Raw backend call. Callers normally go through [`segment`], which
    /// validates dimensions and drops empty instances.
    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>>;
}

impl<T: Segmenter + ?Sized> Segmenter for Arc<T> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>> {
        (**self).segment_raw(image, concept)
    }
}

pub fn segment(backend: &dyn Segmenter, image: &Image, concept: &str) -> Result<Vec<Instance>> {
    if image.is_empty() {
        return Err(Error::InvalidConfig("cannot segment an empty image".into()));
    }
    if concept.trim().is_empty() {
        return Err(Error::InvalidConfig("cannot segment an empty concept".into()));
    }
    let raw = backend.segment_raw(image, concept)?;
    let mut out = Vec::with_capacity(raw.len());
    for inst in raw {
        check_dims(image.dims(), inst.mask.dims())?;
        if inst.mask.is_empty() {
            log::warn!(
                "{}: dropping zero-area instance for {concept:?} (confidence {})",
                backend.name(),
                inst.confidence
            );
            continue;
        }
        out.push(inst);
    }
    Ok(out)
}

/// Queries every concept independently (in parallel when enabled). The
/// result preserves query order. Failures are collected per concept.
pub fn segment_set(
    backend: &dyn Segmenter,
    image: &Image,
    concepts: &[String],
) -> Result<IndexMap<String, Vec<Instance>>> {
    let results: Vec<(String, Result<Vec<Instance>>)> = concepts
        .par_iter()
        .map(|c| (c.clone(), segment(backend, image, c)))
        .collect();

    let mut map = IndexMap::with_capacity(results.len());
    let mut failures = Vec::new();
    for (concept, res) in results {
        match res {
            Ok(instances) => {
                map.insert(concept, instances);
            }
            Err(e) => failures.push((concept, e)),
        }
    }
    if !failures.is_empty() {
        return Err(Error::Segmentation(failures));
    }
    Ok(map)
}

/// Pixelwise union of instance masks on a `width x height` canvas.
pub fn union_channel(instances: &[Instance], width: usize, height: usize) -> Result<BinaryMask> {
    let mut out = BinaryMask::empty(width, height);
    for inst in instances {
        out.union_in_place(&inst.mask)?;
    }
    Ok(out)
}

/// Counts calls into a wrapped backend.
pub struct CountingSegmenter<S> {
    inner: S,
    calls: Arc<AtomicU64>,
}

impl<S: Segmenter> CountingSegmenter<S> {
    pub fn new(inner: S) -> Self {
        Self::with_counter(inner, Arc::new(AtomicU64::new(0)))
    }

    pub fn with_counter(inner: S, calls: Arc<AtomicU64>) -> Self {
        Self { inner, calls }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn counter(&self) -> Arc<AtomicU64> {
        self.calls.clone()
    }
}

impl<S: Segmenter> Segmenter for CountingSegmenter<S> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.segment_raw(image, concept)
    }
}
