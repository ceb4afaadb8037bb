//! Backend construction from the resolved run config.

use std::process::Command;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use distill_core::segment::wire::{LineTransport, StdioTransport, TcpTransport, WireClient};
use distill_core::segment::FixtureSegmenter;
use distill_core::{Backends, DiffusionFill, Inpainter, MeanColorFill, Segmenter};

use crate::config::{InpaintBackend, RunConfig, SegBackend};
use crate::exit::{usage, CliError};
use crate::input::Input;

/// Where a wire backend lives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    /// Program and arguments, split on whitespace.
    Command(Vec<String>),
}

impl FromStr for Endpoint {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if let Some(addr) = s.strip_prefix("tcp:") {
            if addr
                .rsplit_once(':')
                .is_none_or(|(h, p)| h.is_empty() || p.parse::<u16>().is_err())
            {
                return Err(usage(format!("endpoint {s:?}: expected tcp:HOST:PORT")));
            }
            return Ok(Endpoint::Tcp(addr.to_string()));
        }
        if let Some(cmd) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err(usage(format!("endpoint {s:?}: empty command")));
            }
            return Ok(Endpoint::Command(argv));
        }
        Err(usage(format!(
            "endpoint {s:?}: expected tcp:HOST:PORT or cmd:<command>"
        )))
    }
}

impl Endpoint {
    pub fn connect(&self, timeout: Duration) -> distill_core::Result<Box<dyn LineTransport>> {
        Ok(match self {
            Endpoint::Tcp(addr) => Box::new(TcpTransport::connect(addr, timeout)?),
            Endpoint::Command(argv) => {
                let mut cmd = Command::new(&argv[0]);
                cmd.args(&argv[1..]);
                Box::new(StdioTransport::spawn(cmd, timeout)?)
            }
        })
    }

    pub fn client(&self, name: &str, timeout: Duration) -> distill_core::Result<WireClient> {
        Ok(WireClient::new(name, self.connect(timeout)?))
    }
}

pub fn timeout(cfg: &RunConfig) -> Duration {
    Duration::from_millis(cfg.backends.timeout_ms)
}

pub fn seg_endpoint(cfg: &RunConfig) -> anyhow::Result<Endpoint> {
    let text = cfg
        .backends
        .seg_endpoint
        .as_deref()
        .ok_or_else(|| usage("no --seg-endpoint given"))?;
    Ok(text.parse()?)
}

pub fn segmenter(cfg: &RunConfig, input: &Input) -> anyhow::Result<Arc<dyn Segmenter>> {
    Ok(match cfg.backends.segmenter {
        SegBackend::Mock => input.mock_segmenter(cfg)?,
        SegBackend::Fixture => {
            let path = cfg
                .backends
                .fixture
                .as_ref()
                .ok_or_else(|| usage("no --fixture given"))?;
            Arc::new(FixtureSegmenter::load(path).map_err(|e| usage(format!("{}: {e}", path.display())))?)
        }
        SegBackend::Wire => Arc::new(seg_endpoint(cfg)?.client("wire", timeout(cfg))?),
    })
}

pub fn local_inpainter(kind: InpaintBackend) -> Option<Arc<dyn Inpainter>> {
    match kind {
        InpaintBackend::Mean => Some(Arc::new(MeanColorFill)),
        InpaintBackend::Diffusion => Some(Arc::new(DiffusionFill::default())),
        InpaintBackend::Wire => None,
    }
}

pub fn inpainter(cfg: &RunConfig) -> anyhow::Result<Arc<dyn Inpainter>> {
    if let Some(local) = local_inpainter(cfg.backends.inpainter) {
        return Ok(local);
    }
    let text = cfg
        .backends
        .inpaint_endpoint
        .as_deref()
        .or(cfg.backends.seg_endpoint.as_deref())
        .ok_or_else(|| usage("no --inpaint-endpoint given"))?;
    let endpoint: Endpoint = text.parse()?;
    Ok(Arc::new(endpoint.client("wire", timeout(cfg))?))
}

pub fn build(cfg: &RunConfig, input: &Input) -> anyhow::Result<Backends> {
    Ok(Backends::new(segmenter(cfg, input)?, inpainter(cfg)?))
}
