//! Synthetic cluttered tabletop scenes with exact ground truth, plus the
//! episode, sweep and latency runners used to evaluate the distillation
//! pipeline against them.
//!
//! Success here is a pixel-accounting proxy: the target and anchor must stay
//! unchanged, distractor pixels must be restored to the background, and
//! robot pixels must match the live frame exactly.

pub mod bundle;
pub mod episode;
pub mod error;
pub mod latency;
pub mod metrics;
pub mod scene;
pub mod sweep;
pub mod taxonomy;

pub use bundle::{read_bundle, read_frame_dir, write_bundle, Bundle};
pub use episode::{run_episode, run_episode_with, EpisodeOptions, EpisodeOutcome, Variant};
pub use error::{HarnessError, Result};
pub use latency::{run_latency_bench, HardwareInfo, LatencyReport};
pub use metrics::{DistillationMetrics, Thresholds};
pub use scene::{generate_scene, GeneratedScene, Role, SceneSpec};
pub use sweep::{run_sweep, SweepReport, SweepSpec};
pub use taxonomy::{
    confusion_fixture, default_confusion, sample_scene, worked_example, DistractorTaxonomy, SceneLayout, TaxonomyKind,
};
