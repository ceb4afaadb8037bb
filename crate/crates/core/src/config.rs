use serde::{Deserialize, Serialize};

use crate::distill::GatingConfig;
use crate::error::{Error, Result};
use crate::refine::RefinementConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailPolicy {
    /// Pass the raw observation through when no target is found.
    #[default]
    Open,
    /// Surface `NoTargetFound` to the caller.
    Closed,
}

/// Everything the per-episode pipeline needs besides backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub gating: GatingConfig,
    pub refinement: RefinementConfig,
    /// Gaussian sigma (pixels) for the compositing alpha.
    pub blur_sigma: f64,
    pub fail_policy: FailPolicy,
    /// Copy live robot pixels over the composite as the final step.
    pub robot_overwrite: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            gating: GatingConfig::default(),
            refinement: RefinementConfig::default(),
            blur_sigma: 2.0,
            fail_policy: FailPolicy::Open,
            robot_overwrite: true,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.gating.validate()?;
        self.refinement.validate()?;
        if !(self.blur_sigma >= 0.0 && self.blur_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "blur sigma {} must be finite and >= 0",
                self.blur_sigma
            )));
        }
        Ok(())
    }
}
