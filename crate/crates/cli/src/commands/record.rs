use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;
use distill_core::segment::wire::{LoopbackTransport, WireClient, WireServer};
use distill_core::segment::write_fixture;
use distill_core::Instruction;
use distill_harness::bundle::write_atomic;
use sha2::{Digest, Sha256};

use crate::backends::{self, local_inpainter};
use crate::config::{InpaintBackend, RunArgs, RunConfig, SegBackend};
use crate::exit::usage;
use crate::input::Input;

#[derive(Debug, Args)]
pub struct RecordArgs {
    /// Scene bundle or frame directory.
    #[arg(long)]
    pub input: PathBuf,
    /// Index of the frame to record, counted from the first.
    #[arg(long, default_value_t = 0)]
    pub frame: usize,
    /// Comma-separated concepts to query. Defaults to every concept of the
    /// instruction; an empty list records an empty fixture.
    #[arg(long)]
    pub concepts: Option<String>,
    /// Fixture file (.jsonl) to write.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub run: RunArgs,
}

fn client(cfg: &RunConfig, input: &Input) -> anyhow::Result<WireClient> {
    match cfg.backends.segmenter {
        // the mock answers through an in-process server so the recorded
        // lines are real protocol traffic
        SegBackend::Mock => {
            let inpainter = local_inpainter(cfg.backends.inpainter)
                .or_else(|| local_inpainter(InpaintBackend::Diffusion))
                .expect("local inpainter");
            let server = Arc::new(WireServer::new(input.mock_segmenter(cfg)?, inpainter));
            Ok(WireClient::new("mock", Box::new(LoopbackTransport::new(server))))
        }
        SegBackend::Wire => Ok(backends::seg_endpoint(cfg)?.client("wire", backends::timeout(cfg))?),
        SegBackend::Fixture => Err(usage("cannot record from a fixture; use --seg-backend mock or wire").into()),
    }
}

pub fn run(args: &RecordArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let input = Input::load(&args.input)?;
    let frame = input.frames.get(args.frame).ok_or_else(|| {
        usage(format!(
            "frame {} out of range ({} frames)",
            args.frame,
            input.frames.len()
        ))
    })?;
    let concepts: Vec<String> = match &args.concepts {
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|c| !c.is_empty())
            .map(str::to_string)
            .collect(),
        None => {
            let lexicon = input.lexicon(cfg)?;
            let instruction = Instruction::new(input.instruction(cfg)?)?;
            distill_core::decompose(&instruction, &Default::default(), &lexicon, &input.domain(cfg))?.all_concepts()
        }
    };

    let client = client(cfg, &input)?.recording();
    let mut failed = 0;
    for concept in &concepts {
        // failures land in the recording as error envelopes
        if let Err(e) = client.segment_exchange(&frame.observation, concept) {
            log::warn!("{concept}: {e}");
            failed += 1;
        }
    }
    let records = client.take_recording();
    let mut bytes = Vec::new();
    write_fixture(&records, &mut bytes)?;
    write_atomic(&args.out, &bytes)?;
    println!(
        "recorded {} exchanges ({} failed) to {}",
        records.len(),
        failed,
        args.out.display()
    );
    println!("sha256 {}", hex::encode(Sha256::digest(&bytes)));
    Ok(())
}
