//! Version-1 JSON-lines protocol shared by remote segmentation and
//! inpainting backends.
//!
//! ```text
//! -> {"v":1,"op":"segment","id":"..","image_png_b64":"..","concept":".."}
//! <- {"v":1,"id":"..","instances":[{"rle":{"size":[H,W],"counts":[..]},"confidence":0.9}]}
//! -> {"v":1,"op":"inpaint","id":"..","image_png_b64":"..","mask_rle":{..}}
//! <- {"v":1,"id":"..","image_png_b64":".."}
//! <- {"v":1,"id":"..","error":".."}
//! ```

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FixtureRecord, Instance, Segmenter};
use crate::error::{check_dims, Error, Result};
use crate::image::Image;
use crate::inpaint::Inpainter;
use crate::mask::{BinaryMask, RleMask};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentRequest {
    pub v: u32,
    pub op: String,
    pub id: String,
    pub image_png_b64: String,
    pub concept: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintRequest {
    pub v: u32,
    pub op: String,
    pub id: String,
    pub image_png_b64: String,
    pub mask_rle: RleMask,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireInstance {
    pub rle: RleMask,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentResponse {
    pub v: u32,
    pub id: String,
    pub instances: Vec<WireInstance>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InpaintResponse {
    pub v: u32,
    pub id: String,
    pub image_png_b64: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub v: u32,
    pub id: String,
    pub error: String,
}

/// Any response line, before validation.
#[derive(Debug, Deserialize)]
struct Envelope {
    v: u32,
    id: String,
    #[serde(default)]
    instances: Option<Vec<WireInstance>>,
    #[serde(default)]
    image_png_b64: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

fn parse_envelope(line: &str, expected_id: &str) -> Result<Envelope> {
    let env: Envelope = serde_json::from_str(line).map_err(|e| Error::Protocol(format!("malformed response: {e}")))?;
    if env.v != PROTOCOL_VERSION {
        return Err(Error::Protocol(format!("unsupported protocol version {}", env.v)));
    }
    if env.id != expected_id {
        return Err(Error::Protocol(format!(
            "response id {:?} does not match request id {expected_id:?}",
            env.id
        )));
    }
    if let Some(err) = env.error {
        return Err(Error::Backend(err));
    }
    Ok(env)
}

/// Validates a segment response line against its request and decodes it.
/// Masks whose size differs from the image are rejected, never cropped.
pub fn parse_segment_response(
    line: &str,
    expected_id: &str,
    dims: (usize, usize),
    concept: &str,
) -> Result<Vec<Instance>> {
    let env = parse_envelope(line, expected_id)?;
    let instances = env
        .instances
        .ok_or_else(|| Error::Protocol("segment response without instances".into()))?;
    instances
        .into_iter()
        .map(|wi| {
            let mask = wi.rle.decode()?;
            check_dims(dims, mask.dims()).map_err(|e| Error::Protocol(e.to_string()))?;
            Instance::new(mask, wi.confidence, concept)
        })
        .collect()
}

pub fn parse_inpaint_response(line: &str, expected_id: &str, dims: (usize, usize)) -> Result<Image> {
    let env = parse_envelope(line, expected_id)?;
    let b64 = env
        .image_png_b64
        .ok_or_else(|| Error::Protocol("inpaint response without image".into()))?;
    let img = Image::from_png_base64(&b64)?;
    check_dims(dims, img.dims()).map_err(|e| Error::Protocol(e.to_string()))?;
    Ok(img)
}

/// Deterministic request id derived from the request content, so recordings
/// are independent of call order.
fn request_id(op: &str, image_hash: &str, extra: &str) -> String {
    let mut h = Sha256::new();
    h.update(op.as_bytes());
    h.update([0]);
    h.update(image_hash.as_bytes());
    h.update([0]);
    h.update(extra.as_bytes());
    format!("{op}-{}", &hex::encode(h.finalize())[..16])
}

pub trait LineTransport: Send {
    fn send_line(&mut self, line: &str) -> Result<()>;
    fn recv_line(&mut self) -> Result<String>;
}

/// Spawns a backend process and talks to it over stdin/stdout.
pub struct StdioTransport {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
    timeout: Duration,
}

impl StdioTransport {
    pub fn spawn(mut command: Command, timeout: Duration) -> Result<Self> {
        let mut child = command
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::BackendUnavailable(format!("spawn failed: {e}")))?;
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines: rx,
            timeout,
        })
    }
}

impl Drop for StdioTransport {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

impl LineTransport for StdioTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.stdin, "{line}")
            .and_then(|_| self.stdin.flush())
            .map_err(|e| Error::BackendUnavailable(format!("write failed: {e}")))
    }

    fn recv_line(&mut self) -> Result<String> {
        match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => Ok(line),
            Ok(Err(e)) => Err(Error::BackendUnavailable(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Err(Error::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => Err(Error::BackendUnavailable("backend closed its output".into())),
        }
    }
}

pub struct TcpTransport {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
    timeout: Duration,
}

impl TcpTransport {
    pub fn connect(addr: &str, timeout: Duration) -> Result<Self> {
        let stream = TcpStream::connect(addr).map_err(|e| Error::BackendUnavailable(format!("connect {addr}: {e}")))?;
        stream.set_read_timeout(Some(timeout))?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
            timeout,
        })
    }
}

impl LineTransport for TcpTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        writeln!(self.writer, "{line}")
            .and_then(|_| self.writer.flush())
            .map_err(|e| Error::BackendUnavailable(format!("write failed: {e}")))
    }

    fn recv_line(&mut self) -> Result<String> {
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(Error::BackendUnavailable("connection closed".into())),
            Ok(_) => Ok(line.trim_end_matches(['\r', '\n']).to_string()),
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {
                Err(Error::Timeout(self.timeout))
            }
            Err(e) => Err(Error::BackendUnavailable(format!("read failed: {e}"))),
        }
    }
}

/// In-process transport that hands each line straight to a [`WireServer`].
pub struct LoopbackTransport {
    server: Arc<WireServer>,
    pending: Option<String>,
}

impl LoopbackTransport {
    pub fn new(server: Arc<WireServer>) -> Self {
        Self { server, pending: None }
    }
}

impl LineTransport for LoopbackTransport {
    fn send_line(&mut self, line: &str) -> Result<()> {
        self.pending = Some(self.server.handle_line(line));
        Ok(())
    }

    fn recv_line(&mut self) -> Result<String> {
        self.pending
            .take()
            .ok_or_else(|| Error::BackendUnavailable("no response pending".into()))
    }
}

/// Protocol client. One request in flight per connection; concurrent callers
/// are serialized on the transport lock.
pub struct WireClient {
    name: String,
    transport: Mutex<Box<dyn LineTransport>>,
    recording: Option<Mutex<Vec<FixtureRecord>>>,
}

impl WireClient {
    pub fn new(name: impl Into<String>, transport: Box<dyn LineTransport>) -> Self {
        Self {
            name: name.into(),
            transport: Mutex::new(transport),
            recording: None,
        }
    }

    /// Keeps a verbatim copy of every exchange for fixture replay.
    pub fn recording(mut self) -> Self {
        self.recording = Some(Mutex::new(Vec::new()));
        self
    }

    pub fn take_recording(&self) -> Vec<FixtureRecord> {
        self.recording
            .as_ref()
            .map(|r| std::mem::take(&mut *r.lock().expect("recording lock")))
            .unwrap_or_default()
    }

    /// Sends one raw line and returns the raw response line.
    pub fn exchange(&self, line: &str) -> Result<String> {
        let mut t = self.transport.lock().expect("transport lock");
        t.send_line(line)?;
        t.recv_line()
    }

    fn record(&self, op: &str, concept: Option<&str>, image_hash: &str, request: &str, response: &str) {
        if let Some(rec) = &self.recording {
            rec.lock().expect("recording lock").push(FixtureRecord {
                op: op.to_string(),
                concept: concept.map(str::to_string),
                image_sha256: image_hash.to_string(),
                request: request.to_string(),
                response: response.to_string(),
            });
        }
    }

    /// Issues a segment request and returns `(id, raw response)`; transport
    /// failures are recorded as error envelopes.
    pub fn segment_exchange(&self, image: &Image, concept: &str) -> Result<(String, String)> {
        let hash = image.content_hash();
        let id = request_id("segment", &hash, concept);
        let req = SegmentRequest {
            v: PROTOCOL_VERSION,
            op: "segment".into(),
            id: id.clone(),
            image_png_b64: image.to_png_base64()?,
            concept: concept.to_string(),
        };
        let line = serde_json::to_string(&req)?;
        match self.exchange(&line) {
            Ok(resp) => {
                self.record("segment", Some(concept), &hash, &line, &resp);
                Ok((id, resp))
            }
            Err(e) => {
                let env = serde_json::to_string(&ErrorResponse {
                    v: PROTOCOL_VERSION,
                    id: id.clone(),
                    error: e.to_string(),
                })?;
                self.record("segment", Some(concept), &hash, &line, &env);
                Err(e)
            }
        }
    }
}

impl Segmenter for WireClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>> {
        let (id, resp) = self.segment_exchange(image, concept)?;
        parse_segment_response(&resp, &id, image.dims(), concept)
    }
}

impl Inpainter for WireClient {
    fn name(&self) -> &str {
        &self.name
    }

    fn inpaint_raw(&self, image: &Image, mask: &BinaryMask) -> Result<Image> {
        let hash = image.content_hash();
        let rle = mask.to_rle();
        let id = request_id("inpaint", &hash, &rle.to_json());
        let req = InpaintRequest {
            v: PROTOCOL_VERSION,
            op: "inpaint".into(),
            id: id.clone(),
            image_png_b64: image.to_png_base64()?,
            mask_rle: rle,
        };
        let line = serde_json::to_string(&req)?;
        let resp = self.exchange(&line)?;
        self.record("inpaint", None, &hash, &line, &resp);
        parse_inpaint_response(&resp, &id, image.dims())
    }
}

/// Server side of the protocol over arbitrary segmentation/inpainting
/// backends. Every request line yields exactly one response line.
pub struct WireServer {
    segmenter: Arc<dyn Segmenter>,
    inpainter: Arc<dyn Inpainter>,
}

impl WireServer {
    pub fn new(segmenter: Arc<dyn Segmenter>, inpainter: Arc<dyn Inpainter>) -> Self {
        Self { segmenter, inpainter }
    }

    pub fn handle_line(&self, line: &str) -> String {
        let value: serde_json::Value = match serde_json::from_str(line) {
            Ok(v) => v,
            Err(e) => return error_line("", format!("malformed request: {e}")),
        };
        let id = value.get("id").and_then(|v| v.as_str()).unwrap_or_default().to_string();
        if value.get("v").and_then(|v| v.as_u64()) != Some(PROTOCOL_VERSION as u64) {
            return error_line(&id, "unsupported protocol version".into());
        }
        let result = match value.get("op").and_then(|v| v.as_str()) {
            Some("segment") => self.handle_segment(value),
            Some("inpaint") => self.handle_inpaint(value),
            _ => Err(Error::Protocol("unsupported op".into())),
        };
        match result {
            Ok(line) => line,
            Err(Error::Protocol(msg)) => error_line(&id, msg),
            Err(e) => error_line(&id, e.to_string()),
        }
    }

    fn handle_segment(&self, value: serde_json::Value) -> Result<String> {
        let req: SegmentRequest =
            serde_json::from_value(value).map_err(|e| Error::Protocol(format!("malformed request: {e}")))?;
        let image = Image::from_png_base64(&req.image_png_b64)?;
        let instances = super::segment(self.segmenter.as_ref(), &image, &req.concept)?;
        let resp = SegmentResponse {
            v: PROTOCOL_VERSION,
            id: req.id,
            instances: instances
                .into_iter()
                .map(|i| WireInstance {
                    rle: i.mask.to_rle(),
                    confidence: i.confidence.clamp(0.0, 1.0),
                })
                .collect(),
        };
        Ok(serde_json::to_string(&resp)?)
    }

    fn handle_inpaint(&self, value: serde_json::Value) -> Result<String> {
        let req: InpaintRequest =
            serde_json::from_value(value).map_err(|e| Error::Protocol(format!("malformed request: {e}")))?;
        let image = Image::from_png_base64(&req.image_png_b64)?;
        let mask = req.mask_rle.decode()?;
        let out = crate::inpaint::inpaint(self.inpainter.as_ref(), &image, &mask)?;
        Ok(serde_json::to_string(&InpaintResponse {
            v: PROTOCOL_VERSION,
            id: req.id,
            image_png_b64: out.to_png_base64()?,
        })?)
    }

    /// Serves until the reader hits EOF.
    pub fn serve(&self, reader: impl BufRead, mut writer: impl Write) -> Result<()> {
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            writeln!(writer, "{}", self.handle_line(&line))?;
            writer.flush()?;
        }
        Ok(())
    }
}

fn error_line(id: &str, error: String) -> String {
    serde_json::to_string(&ErrorResponse {
        v: PROTOCOL_VERSION,
        id: id.to_string(),
        error,
    })
    .expect("error envelope serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inpaint::MeanColorFill;
    use crate::segment::{ConfidenceSpec, ConfusionModel, MockSegmenter, SceneObject, SceneTruth};

    fn server() -> Arc<WireServer> {
        let truth = SceneTruth {
            width: 16,
            height: 12,
            objects: vec![SceneObject {
                id: "o0".into(),
                label: "spoon".into(),
                attributes: vec![],
                mask: BinaryMask::rect(16, 12, 2, 2, 4, 3),
            }],
        };
        let model = ConfusionModel::default().rule("spoon", "spoon", ConfidenceSpec::Constant(0.8));
        Arc::new(WireServer::new(
            Arc::new(MockSegmenter::new(truth, model, 0)),
            Arc::new(MeanColorFill),
        ))
    }

    #[test]
    fn loopback_segment_round_trip() {
        let client = WireClient::new("wire", Box::new(LoopbackTransport::new(server())));
        let out = client.segment_raw(&Image::new(16, 12), "spoon").unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].confidence, 0.8);
        assert_eq!(out[0].mask, BinaryMask::rect(16, 12, 2, 2, 4, 3));
    }

    #[test]
    fn loopback_inpaint_round_trip() {
        let client = WireClient::new("wire", Box::new(LoopbackTransport::new(server())));
        let img = Image::filled(16, 12, [10, 20, 30]);
        let mut marked = img.clone();
        marked.set_pixel(3, 3, [255, 255, 255]);
        let mask = BinaryMask::rect(16, 12, 3, 3, 1, 1);
        assert_eq!(client.inpaint_raw(&marked, &mask).unwrap(), img);
    }

    #[test]
    fn server_rejects_unknown_op_and_garbage() {
        let s = server();
        let resp: serde_json::Value =
            serde_json::from_str(&s.handle_line(r#"{"v":1,"op":"dance","id":"x1"}"#)).unwrap();
        assert_eq!(resp["id"], "x1");
        assert_eq!(resp["error"], "unsupported op");
        let resp: serde_json::Value = serde_json::from_str(&s.handle_line("not json")).unwrap();
        assert!(resp["error"].as_str().unwrap().starts_with("malformed request"));
    }

    #[test]
    fn client_rejects_id_mismatch_and_wrong_dims() {
        let ok = r#"{"v":1,"id":"a","instances":[]}"#;
        assert!(parse_segment_response(ok, "a", (2, 2), "c").unwrap().is_empty());
        assert!(matches!(
            parse_segment_response(ok, "b", (2, 2), "c"),
            Err(Error::Protocol(_))
        ));
        let wrong = format!(
            r#"{{"v":1,"id":"a","instances":[{{"rle":{},"confidence":0.5}}]}}"#,
            BinaryMask::full(3, 2).to_rle().to_json()
        );
        assert!(matches!(
            parse_segment_response(&wrong, "a", (2, 2), "c"),
            Err(Error::Protocol(_))
        ));
        let err = r#"{"v":1,"id":"a","error":"gpu on fire"}"#;
        assert!(matches!(
            parse_segment_response(err, "a", (2, 2), "c"),
            Err(Error::Backend(_))
        ));
        let bad_conf = format!(
            r#"{{"v":1,"id":"a","instances":[{{"rle":{},"confidence":1.5}}]}}"#,
            BinaryMask::full(2, 2).to_rle().to_json()
        );
        assert!(parse_segment_response(&bad_conf, "a", (2, 2), "c").is_err());
    }

    #[test]
    fn request_ids_are_content_derived() {
        assert_eq!(request_id("segment", "h", "spoon"), request_id("segment", "h", "spoon"));
        assert_ne!(request_id("segment", "h", "spoon"), request_id("segment", "h", "fork"));
    }
}
