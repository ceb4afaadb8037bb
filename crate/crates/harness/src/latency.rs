//! Wall-clock split between the one-off episode init and per-frame compositing.

use std::time::Instant;

use distill_core::compositor::percentile;
use distill_core::distill::PhaseTimings;
use distill_core::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::episode::{run_episode, EpisodeOptions, Variant};
use crate::error::{HarnessError, Result};
use crate::scene::GeneratedScene;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareInfo {
    pub cpu_model: String,
    pub logical_cpus: usize,
    pub execution: String,
    pub os: String,
    pub arch: String,
}

impl HardwareInfo {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo")
            .ok()
            .and_then(|s| {
                s.lines()
                    .find(|l| l.starts_with("model name"))
                    .and_then(|l| l.split_once(':'))
                    .map(|(_, v)| v.trim().to_string())
            })
            .unwrap_or_else(|| "unknown".into());
        Self {
            cpu_model,
            logical_cpus: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            execution: distill_core::par::MODE.into(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
        }
    }

    pub fn describe(&self) -> String {
        format!(
            "{} ({} logical CPUs, {}/{}, {} core)",
            self.cpu_model, self.logical_cpus, self.os, self.arch, self.execution
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub width: usize,
    pub height: usize,
    pub repeats: usize,
    pub inpainter: String,
    /// Median init time over repeats.
    pub init_ms: f64,
    pub init_ms_samples: Vec<f64>,
    pub frame_ms_p50: f64,
    pub frame_ms_p95: f64,
    pub frame_samples: usize,
    /// `init_ms / frame_ms_p50`.
    pub ratio: f64,
    /// Phase split of the median-init repeat.
    pub phases: PhaseTimings,
    /// No backend call happened after init in any repeat.
    pub backends_quiet_after_init: bool,
    /// Wall clock around each whole episode, for cross-checking the report.
    pub episode_wall_ms: Vec<f64>,
    pub hardware: HardwareInfo,
}

/// Runs the full variant `repeats` times on `scene` after one untimed warm-up.
pub fn run_latency_bench(scene: &GeneratedScene, config: &PipelineConfig, repeats: usize) -> Result<LatencyReport> {
    if repeats == 0 {
        return Err(HarnessError::InvalidSweep(
            "latency bench needs at least one repeat".into(),
        ));
    }
    if scene.frame_count() < 2 {
        return Err(HarnessError::InvalidScene(
            "latency bench needs frames after t=0".into(),
        ));
    }
    let opts = EpisodeOptions::default();
    run_episode(scene, Variant::Full, config, &opts)?;

    let mut inits = Vec::with_capacity(repeats);
    let mut frames = Vec::new();
    let mut walls = Vec::with_capacity(repeats);
    let mut quiet = true;
    let mut inpainter = String::new();
    for _ in 0..repeats {
        let start = Instant::now();
        let out = run_episode(scene, Variant::Full, config, &opts)?;
        walls.push(start.elapsed().as_secs_f64() * 1e3);
        let report = out.report.expect("full variant always reports");
        quiet &= report.segmentation_calls_after_init == 0 && report.inpaint_calls_after_init == 0;
        if let Some(cs) = &out.clean_scene {
            inpainter = cs.provenance.inpainter.clone();
        }
        frames.extend_from_slice(&report.timings.frame_ms);
        inits.push((report.timings.init_ms, report.timings.phases));
    }
    let mut sorted: Vec<usize> = (0..inits.len()).collect();
    sorted.sort_by(|&a, &b| inits[a].0.total_cmp(&inits[b].0));
    let median = sorted[(sorted.len() - 1) / 2];
    let init_ms = inits[median].0;
    let p50 = percentile(&frames, 50.0).unwrap_or(0.0);
    Ok(LatencyReport {
        width: scene.spec.width,
        height: scene.spec.height,
        repeats,
        inpainter,
        init_ms,
        init_ms_samples: inits.iter().map(|i| i.0).collect(),
        frame_ms_p50: p50,
        frame_ms_p95: percentile(&frames, 95.0).unwrap_or(0.0),
        frame_samples: frames.len(),
        ratio: if p50 > 0.0 { init_ms / p50 } else { f64::INFINITY },
        phases: inits[median].1.clone(),
        backends_quiet_after_init: quiet,
        episode_wall_ms: walls,
        hardware: HardwareInfo::detect(),
    })
}
