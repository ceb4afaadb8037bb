use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::Args;
use distill_core::distill::CleanScene;
use distill_core::{ConceptDecomposition, Distiller, EpisodeReport, Instruction, PipelineConfig};
use distill_harness::bundle::{write_atomic, write_frame};
use serde::Serialize;

use crate::backends;
use crate::config::{RunArgs, RunConfig};
use crate::input::Input;

#[derive(Debug, Args)]
pub struct DistillArgs {
    /// Scene bundle, or a directory of NNNN.png frames with
    /// NNNN.robot.rle.json robot masks.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Serialize)]
struct RunReport<'a> {
    instruction: &'a str,
    domain: &'a str,
    decomposition: &'a ConceptDecomposition,
    config: &'a PipelineConfig,
    report: &'a EpisodeReport,
}

pub fn write_json(path: &Path, value: &impl Serialize) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Clean image, both masks, provenance and refinement trace under `dir`.
pub fn write_clean_scene(dir: &Path, scene: &CleanScene) -> anyhow::Result<()> {
    write_atomic(&dir.join("clean.png"), &scene.image.encode_png()?)?;
    write_atomic(
        &dir.join("m_inp.rle.json"),
        scene.gate_mask.to_rle().to_json().as_bytes(),
    )?;
    write_atomic(
        &dir.join("m_lama.rle.json"),
        scene.inpaint_mask.to_rle().to_json().as_bytes(),
    )?;
    write_json(&dir.join("provenance.json"), &scene.provenance)?;
    write_json(&dir.join("trace.json"), &scene.refinement)?;
    Ok(())
}

pub fn episode_id(input: &Input) -> String {
    input
        .spec
        .as_ref()
        .map(|s| format!("seed-{}", s.seed))
        .unwrap_or_else(|| "episode".to_string())
}

pub fn distiller(cfg: &RunConfig, input: &Input) -> anyhow::Result<Distiller> {
    let backends = backends::build(cfg, input)?;
    Ok(Distiller::new(cfg.pipeline.clone(), backends)?.with_lexicon(input.lexicon(cfg)?))
}

pub fn run(args: &DistillArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = Input::load(&args.input)?;
    let text = input.instruction(cfg)?;
    let instruction = Instruction::new(text.clone())?;
    let domain = input.domain(cfg);
    let distiller = distiller(cfg, &input)?;

    let frames_dir = args.out.join("frames");
    let (mut state, first) = distiller.init_episode(&episode_id(&input), &input.frames[0], &instruction, &domain)?;
    write_frame(&frames_dir, input.frames[0].timestep, &first)?;
    for frame in &input.frames[1..] {
        let out = state.distill_frame(frame)?;
        write_frame(&frames_dir, frame.timestep, &out)?;
    }
    write_clean_scene(&args.out.join("clean"), state.clean_scene())?;
    let decomposition = state.decomposition().clone();
    let report = state.close();
    write_json(
        &args.out.join("report.json"),
        &RunReport {
            instruction: &text,
            domain: &domain,
            decomposition: &decomposition,
            config: &cfg.pipeline,
            report: &report,
        },
    )?;
    if report.fail_open {
        log::warn!("target not found; frames passed through unchanged");
    }
    println!(
        "distilled {} frames into {} (init {:.1} ms, {} segment calls, {} inpaint calls)",
        input.frames.len(),
        args.out.display(),
        report.timings.init_ms,
        report.segmentation_calls_init,
        report.inpaint_calls_init,
    );
    Ok(())
}
