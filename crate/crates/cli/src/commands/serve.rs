use std::io::{BufReader, BufWriter};
use std::net::TcpListener;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Args;
use distill_core::segment::wire::WireServer;
use distill_core::segment::FixtureSegmenter;
use distill_core::Segmenter;

use crate::backends::local_inpainter;
use crate::config::{RunArgs, RunConfig, SegBackend};
use crate::exit::usage;
use crate::input::Input;

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Scene bundle whose ground truth backs the mock segmenter.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Accept TCP connections on this address instead of serving stdio.
    #[arg(long)]
    pub listen: Option<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

fn server(args: &ServeArgs, cfg: &RunConfig) -> anyhow::Result<WireServer> {
    let segmenter: Arc<dyn Segmenter> = match cfg.backends.segmenter {
        SegBackend::Mock => {
            let path = args
                .input
                .as_ref()
                .ok_or_else(|| usage("serving the mock needs --input"))?;
            Input::load(path)?.mock_segmenter(cfg)?
        }
        SegBackend::Fixture => {
            let path = cfg
                .backends
                .fixture
                .as_ref()
                .ok_or_else(|| usage("no --fixture given"))?;
            Arc::new(FixtureSegmenter::load(path)?)
        }
        SegBackend::Wire => return Err(usage("serve cannot proxy another wire backend").into()),
    };
    let inpainter = local_inpainter(cfg.backends.inpainter)
        .ok_or_else(|| usage("serve needs a local inpainter (mean or diffusion)"))?;
    Ok(WireServer::new(segmenter, inpainter))
}

pub fn run(args: &ServeArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let server = Arc::new(server(args, cfg)?);
    let Some(addr) = &args.listen else {
        let stdin = std::io::stdin();
        let stdout = std::io::stdout();
        server.serve(stdin.lock(), BufWriter::new(stdout.lock()))?;
        return Ok(());
    };
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    eprintln!("listening on {}", listener.local_addr()?);
    for stream in listener.incoming() {
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                log::warn!("accept failed: {e}");
                continue;
            }
        };
        let server = server.clone();
        std::thread::spawn(move || {
            let peer = stream.peer_addr().map(|a| a.to_string()).unwrap_or_default();
            let result = stream
                .try_clone()
                .map_err(distill_core::Error::from)
                .and_then(|w| server.serve(BufReader::new(stream), w));
            if let Err(e) = result {
                log::warn!("connection {peer}: {e}");
            }
        });
    }
    Ok(())
}
