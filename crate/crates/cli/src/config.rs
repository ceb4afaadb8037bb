//! Run configuration: defaults, then a config file, then `DISTILL_*`
//! environment variables, then flags. The merged result is validated once.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use distill_core::{FailPolicy, PipelineConfig};
use distill_harness::Thresholds;
use serde::{Deserialize, Serialize};

use crate::exit::usage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SegBackend {
    /// Ground truth plus the scene's confusion model (bundles only).
    #[default]
    Mock,
    /// Wire protocol v1 client.
    Wire,
    /// Replay of a recorded fixture.
    Fixture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum InpaintBackend {
    Mean,
    #[default]
    Diffusion,
    Wire,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendConfig {
    pub segmenter: SegBackend,
    pub inpainter: InpaintBackend,
    pub seg_endpoint: Option<String>,
    /// Falls back to `seg_endpoint` when unset.
    pub inpaint_endpoint: Option<String>,
    pub fixture: Option<PathBuf>,
    pub timeout_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            segmenter: SegBackend::Mock,
            inpainter: InpaintBackend::Diffusion,
            seg_endpoint: None,
            inpaint_endpoint: None,
            fixture: None,
            timeout_ms: 30_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub thresholds: Thresholds,
    pub instruction: Option<String>,
    pub domain: Option<String>,
    pub lexicon: Option<PathBuf>,
    pub backends: BackendConfig,
    /// Overrides the scene seed for the mock segmenter.
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
}

impl RunConfig {
    pub fn load_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?,
            _ => toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?,
        };
        Ok(parsed)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.pipeline.validate()?;
        let t = &self.thresholds;
        for (name, v) in [("target", t.target), ("residual", t.residual), ("anchor", t.anchor)] {
            if !(0.0..=1.0).contains(&v) {
                bail!(usage(format!("threshold {name} = {v} must lie in [0, 1]")));
            }
        }
        let b = &self.backends;
        if b.segmenter == SegBackend::Wire && b.seg_endpoint.is_none() {
            bail!(usage("--seg-backend wire needs --seg-endpoint"));
        }
        if b.inpainter == InpaintBackend::Wire && b.inpaint_endpoint.is_none() && b.seg_endpoint.is_none() {
            bail!(usage("--inpaint-backend wire needs --inpaint-endpoint"));
        }
        if b.segmenter == SegBackend::Fixture && b.fixture.is_none() {
            bail!(usage("--seg-backend fixture needs --fixture"));
        }
        if b.timeout_ms == 0 {
            bail!(usage("backend timeout must be positive"));
        }
        if self.jobs == Some(0) {
            bail!(usage("--jobs must be at least 1"));
        }
        Ok(())
    }
}

/// Pipeline tuning flags. Every flag can also come from the matching
/// `DISTILL_*` variable.
#[derive(Debug, Clone, Default, Args)]
pub struct TuningArgs {
    /// Config file (TOML, or JSON by extension) applied before env and flags.
    #[arg(long, env = "DISTILL_CONFIG")]
    pub config: Option<PathBuf>,
    /// IoU above which a distractor hypothesis conflicts with a target one.
    #[arg(long, env = "DISTILL_ETA")]
    pub eta: Option<f64>,
    /// Distractor dilation radius.
    #[arg(long, env = "DISTILL_RD")]
    pub rd: Option<usize>,
    /// Safe-set dilation radius.
    #[arg(long, env = "DISTILL_RS")]
    pub rs: Option<usize>,
    /// Robot dilation radius for the inpainting mask.
    #[arg(long, env = "DISTILL_RE")]
    pub re: Option<usize>,
    #[arg(long, env = "DISTILL_BLUR_SIGMA")]
    pub blur_sigma: Option<f64>,
    /// Pass frames through unchanged when the target is not found (default).
    #[arg(long, conflicts_with = "fail_closed")]
    pub fail_open: bool,
    /// Exit with code 4 when the target is not found.
    #[arg(long)]
    pub fail_closed: bool,
    #[arg(long, env = "DISTILL_SEED")]
    pub seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "DISTILL_JOBS")]
    pub jobs: Option<usize>,
}

/// Tuning plus instruction and backend flags, for commands that run the
/// pipeline on an input.
#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// Placement instruction, e.g. "put spoon on towel". Defaults to the
    /// bundle's own.
    #[arg(long, env = "DISTILL_INSTRUCTION")]
    pub instruction: Option<String>,
    /// Distractor lexicon JSON replacing the bundled one.
    #[arg(long, env = "DISTILL_LEXICON")]
    pub lexicon: Option<PathBuf>,
    #[arg(long, env = "DISTILL_DOMAIN")]
    pub domain: Option<String>,
    #[arg(long, value_enum, env = "DISTILL_SEG_BACKEND")]
    pub seg_backend: Option<SegBackend>,
    #[arg(long, value_enum, env = "DISTILL_INPAINT_BACKEND")]
    pub inpaint_backend: Option<InpaintBackend>,
    /// `tcp:HOST:PORT` or `cmd:<command line>`.
    #[arg(long, env = "DISTILL_SEG_ENDPOINT")]
    pub seg_endpoint: Option<String>,
    /// Defaults to the segmentation endpoint.
    #[arg(long, env = "DISTILL_INPAINT_ENDPOINT")]
    pub inpaint_endpoint: Option<String>,
    /// Recorded fixture for `--seg-backend fixture`.
    #[arg(long, env = "DISTILL_FIXTURE")]
    pub fixture: Option<PathBuf>,
    #[arg(long, env = "DISTILL_BACKEND_TIMEOUT_MS")]
    pub backend_timeout_ms: Option<u64>,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

fn fail_policy_from_env() -> anyhow::Result<Option<FailPolicy>> {
    match std::env::var("DISTILL_FAIL_POLICY") {
        Ok(v) => match v.trim() {
            "open" => Ok(Some(FailPolicy::Open)),
            "closed" => Ok(Some(FailPolicy::Closed)),
            other => Err(usage(format!("DISTILL_FAIL_POLICY={other:?}: expected open or closed")).into()),
        },
        Err(_) => Ok(None),
    }
}

fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
    if let Some(v) = src {
        *dst = v.clone();
    }
}

fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
    if src.is_some() {
        dst.clone_from(src);
    }
}

impl TuningArgs {
    /// Layers file, env and flags over `base` and validates the result.
    /// Clap resolves env against flags, so flags win over env.
    pub fn resolve_over(&self, base: RunConfig) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load_file(path)?,
            None => base,
        };
        if let Some(p) = fail_policy_from_env()? {
            cfg.pipeline.fail_policy = p;
        }
        self.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        self.resolve_over(RunConfig::default())
    }

    fn apply(&self, cfg: &mut RunConfig) {
        set(&mut cfg.pipeline.refinement.eta, &self.eta);
        set(&mut cfg.pipeline.gating.r_d, &self.rd);
        set(&mut cfg.pipeline.gating.r_s, &self.rs);
        set(&mut cfg.pipeline.gating.r_e, &self.re);
        set(&mut cfg.pipeline.blur_sigma, &self.blur_sigma);
        set_opt(&mut cfg.seed, &self.seed);
        set_opt(&mut cfg.jobs, &self.jobs);
        if self.fail_open {
            cfg.pipeline.fail_policy = FailPolicy::Open;
        }
        if self.fail_closed {
            cfg.pipeline.fail_policy = FailPolicy::Closed;
        }
    }
}

impl RunArgs {
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.tuning.config {
            Some(path) => RunConfig::load_file(path)?,
            None => RunConfig::default(),
        };
        set_opt(&mut cfg.instruction, &self.instruction);
        set_opt(&mut cfg.lexicon, &self.lexicon);
        set_opt(&mut cfg.domain, &self.domain);
        set(&mut cfg.backends.segmenter, &self.seg_backend);
        set(&mut cfg.backends.inpainter, &self.inpaint_backend);
        set_opt(&mut cfg.backends.seg_endpoint, &self.seg_endpoint);
        set_opt(&mut cfg.backends.inpaint_endpoint, &self.inpaint_endpoint);
        set_opt(&mut cfg.backends.fixture, &self.fixture);
        set(&mut cfg.backends.timeout_ms, &self.backend_timeout_ms);
        let tuning = TuningArgs {
            config: None,
            ..self.tuning.clone()
        };
        tuning.resolve_over(cfg)
    }
}
