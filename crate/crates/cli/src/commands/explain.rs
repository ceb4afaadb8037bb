use std::path::PathBuf;

use clap::Args;
use distill_core::refine::RefinementTrace;
use distill_core::{BinaryMask, ConceptDecomposition, Image, Instruction};
use distill_harness::bundle::write_atomic;
use serde::Serialize;

use super::distill::{distiller, episode_id, write_json};
use crate::config::RunArgs;
use crate::config::RunConfig;
use crate::exit::usage;
use crate::input::Input;

#[derive(Debug, Args)]
pub struct ExplainArgs {
    /// Scene bundle or frame directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Index of the frame to explain, counted from the first.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Output directory for trace.json and overlay.png.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Serialize)]
struct Explanation<'a> {
    instruction: &'a str,
    decomposition: &'a ConceptDecomposition,
    fail_open: bool,
    refinement: Option<&'a RefinementTrace>,
}

const GATE: [u8; 3] = [255, 0, 0];
const SAFE: [u8; 3] = [0, 255, 0];
const CHOSEN: [u8; 3] = [0, 255, 0];
const REJECTED: [u8; 3] = [255, 0, 255];

fn tint(img: &mut Image, mask: &BinaryMask, rgb: [u8; 3]) {
    for (x, y) in mask.iter_set() {
        let p = img.pixel(x, y);
        let mix = |a: u8, b: u8| ((a as u16 + b as u16) / 2) as u8;
        img.set_pixel(x, y, [mix(p[0], rgb[0]), mix(p[1], rgb[1]), mix(p[2], rgb[2])]);
    }
}

fn outline(img: &mut Image, (x0, y0, x1, y1): (usize, usize, usize, usize), rgb: [u8; 3]) {
    let (w, h) = img.dims();
    let (x1, y1) = (x1.min(w - 1), y1.min(h - 1));
    for x in x0..=x1 {
        img.set_pixel(x, y0, rgb);
        img.set_pixel(x, y1, rgb);
    }
    for y in y0..=y1 {
        img.set_pixel(x0, y, rgb);
        img.set_pixel(x1, y, rgb);
    }
}

/// Fixed-width component table; the selected row is starred.
pub fn component_table(trace: &RefinementTrace) -> String {
    let mut s = format!(
        "{:>4} {:>1} {:>7} {:>8} {:>8} {:>8}  instances\n",
        "id", "", "area", "g*", "sigma*", "score"
    );
    for c in &trace.components {
        let mark = if c.id == trace.selected { "*" } else { "" };
        let members: Vec<String> = c
            .instances
            .iter()
            .map(|&i| format!("{}@{:.2}", trace.instances[i].concept, trace.instances[i].confidence))
            .collect();
        s.push_str(&format!(
            "{:>4} {:>1} {:>7} {:>8.3} {:>8.3} {:>8.3}  {}\n",
            c.id,
            mark,
            c.area,
            c.g_star,
            c.sigma_star,
            c.score,
            members.join(" ")
        ));
    }
    s
}

pub fn run(args: &ExplainArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = Input::load(&args.input)?;
    let frame = input.frames.get(args.frame).ok_or_else(|| {
        usage(format!(
            "frame {} out of range ({} frames)",
            args.frame,
            input.frames.len()
        ))
    })?;
    let text = input.instruction(cfg)?;
    let distiller = distiller(cfg, &input)?;
    let decomposition = distiller.decompose(&Instruction::new(text.clone())?, &input.domain(cfg))?;
    let scene = distiller.build_clean_scene(
        &episode_id(&input),
        &frame.observation,
        Some(&frame.robot_mask),
        &decomposition,
    )?;

    let mut overlay = frame.observation.clone();
    tint(&mut overlay, &scene.gate_mask, GATE);
    tint(&mut overlay, &scene.safe_mask, SAFE);
    if let Some(trace) = &scene.refinement {
        for c in &trace.components {
            outline(
                &mut overlay,
                c.bbox,
                if c.id == trace.selected { CHOSEN } else { REJECTED },
            );
        }
    }
    write_atomic(&args.out.join("overlay.png"), &overlay.encode_png()?)?;
    write_json(
        &args.out.join("trace.json"),
        &Explanation {
            instruction: &text,
            decomposition: &decomposition,
            fail_open: scene.provenance.fail_open,
            refinement: scene.refinement.as_ref(),
        },
    )?;

    println!("instruction: {text}");
    println!("target: {}", decomposition.target());
    match &scene.refinement {
        Some(trace) => print!("{}", component_table(trace)),
        None => println!("no target instance found; nothing selected"),
    }
    Ok(())
}
