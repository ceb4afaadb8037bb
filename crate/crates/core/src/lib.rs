//! Instruction-gated distractor removal for robot camera observations.
//!
//! An instruction such as `"put spoon on towel"` is split into concepts that
//! must stay visible (target, anchor, robot) and a lexicon of clutter
//! concepts. On the first frame of an episode every concept is segmented,
//! the target channel is refined to a single genuine component, clutter
//! pixels outside a protective buffer around the safe set are inpainted, and
//! the result is cached. Later frames are a cheap alpha blend of the live
//! image with that clean scene, with robot pixels copied through untouched.

pub mod compositor;
pub mod config;
pub mod distill;
pub mod error;
pub mod image;
pub mod inpaint;
pub mod instruction;
pub mod mask;
pub mod par;
pub mod refine;
pub mod segment;

pub use compositor::{composite, Backends, Distiller, EpisodeReport, EpisodeState, FrameInput};
pub use config::{FailPolicy, PipelineConfig};
pub use distill::{build_clean_scene, compose_gate, compose_gate_soft, compose_inpaint_mask, CleanScene, GatingConfig};
pub use error::{Error, Result};
pub use image::Image;
pub use inpaint::{inpaint, DiffusionFill, Inpainter, MeanColorFill};
pub use instruction::{
    decompose, parse_instruction, ConceptDecomposition, DistractorLexicon, Instruction, PlacementGrammar,
};
pub use mask::{BinaryMask, Connectivity, RleMask, SoftMask};
pub use refine::{refine_target, RefinementConfig, RefinementMode};
pub use segment::{Instance, Segmenter};
