use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::wire::parse_segment_response;
use super::{Instance, Segmenter};
use crate::error::{Error, Result};
use crate::image::Image;

/// One recorded request/response exchange, both lines kept verbatim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub op: String,
    pub concept: Option<String>,
    pub image_sha256: String,
    pub request: String,
    pub response: String,
}

impl FixtureRecord {
    fn request_id(&self) -> Result<String> {
        let v: serde_json::Value = serde_json::from_str(&self.request)?;
        v.get("id")
            .and_then(|id| id.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Protocol("recorded request has no id".into()))
    }
}

pub fn write_fixture(records: &[FixtureRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        writeln!(out, "{}", serde_json::to_string(r)?)?;
    }
    Ok(())
}

/// Replays recorded segment responses keyed by `(image hash, concept)`.
#[derive(Debug, Clone, Default)]
pub struct FixtureSegmenter {
    records: Vec<FixtureRecord>,
}

impl FixtureSegmenter {
    pub fn new(records: Vec<FixtureRecord>) -> Self {
        Self { records }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read(BufReader::new(std::fs::File::open(path)?))
    }

    pub fn read(reader: impl BufRead) -> Result<Self> {
        let mut records = Vec::new();
        for line in reader.lines() {
            let line = line?;
            if !line.trim().is_empty() {
                records.push(serde_json::from_str(&line)?);
            }
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[FixtureRecord] {
        &self.records
    }

    fn find(&self, image_hash: &str, concept: &str) -> Option<&FixtureRecord> {
        self.records
            .iter()
            .find(|r| r.op == "segment" && r.concept.as_deref() == Some(concept) && r.image_sha256 == image_hash)
    }

    /// The recorded response line, byte for byte.
    pub fn raw_response(&self, image: &Image, concept: &str) -> Option<&str> {
        self.find(&image.content_hash(), concept).map(|r| r.response.as_str())
    }
}

impl Segmenter for FixtureSegmenter {
    fn name(&self) -> &str {
        "fixture"
    }

    fn segment_raw(&self, image: &Image, concept: &str) -> Result<Vec<Instance>> {
        let rec = self
            .find(&image.content_hash(), concept)
            .ok_or_else(|| Error::FixtureMiss(concept.to_string()))?;
        parse_segment_response(&rec.response, &rec.request_id()?, image.dims(), concept)
    }
}
