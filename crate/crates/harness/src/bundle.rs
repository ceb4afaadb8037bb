//! On-disk scene bundles and plain frame directories.
//!
//! Bundle layout:
//!
//! ```text
//! scene.json              SceneSpec
//! background.png          canvas without objects or robot
//! frames/NNNN.png         observations
//! gt/<id>_NNNN.rle.json   visible mask per object per frame
//! gt/robot_NNNN.rle.json  robot mask per frame
//! ```
//!
//! A frame directory holds `NNNN.png` with a `NNNN.robot.rle.json` sidecar each.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use distill_core::segment::{SceneObject, SceneTruth};
use distill_core::{BinaryMask, FrameInput, Image, RleMask};

use crate::error::{HarnessError, Result};
use crate::scene::{GeneratedScene, SceneSpec, ROBOT_ID};

/// Writes `bytes` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn frame_name(t: usize) -> String {
    format!("{t:04}")
}

pub fn write_bundle(dir: &Path, scene: &GeneratedScene) -> Result<()> {
    fs::create_dir_all(dir.join("frames"))?;
    fs::create_dir_all(dir.join("gt"))?;
    write_atomic(
        &dir.join("scene.json"),
        serde_json::to_string_pretty(&scene.spec)?.as_bytes(),
    )?;
    write_atomic(&dir.join("background.png"), &scene.background.encode_png()?)?;
    for t in 0..scene.frame_count() {
        let n = frame_name(t);
        write_atomic(
            &dir.join("frames").join(format!("{n}.png")),
            &scene.frames[t].encode_png()?,
        )?;
        for (i, o) in scene.spec.objects.iter().enumerate() {
            let rle = scene.visible(i, t).to_rle();
            write_atomic(
                &dir.join("gt").join(format!("{}_{n}.rle.json", o.id)),
                rle.to_json().as_bytes(),
            )?;
        }
        let rle = scene.robot_masks[t].to_rle();
        write_atomic(
            &dir.join("gt").join(format!("{ROBOT_ID}_{n}.rle.json")),
            rle.to_json().as_bytes(),
        )?;
    }
    Ok(())
}

/// A bundle read back from disk.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub spec: SceneSpec,
    pub background: Option<Image>,
    pub frames: Vec<Image>,
    pub robot_masks: Vec<BinaryMask>,
    /// Visible mask per frame, keyed by object id.
    pub object_masks: BTreeMap<String, Vec<BinaryMask>>,
}

fn invalid(path: &Path, reason: impl Into<String>) -> HarnessError {
    HarnessError::InvalidBundle {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

fn read_rle(path: &Path, dims: (usize, usize)) -> Result<BinaryMask> {
    let text = fs::read_to_string(path).map_err(|e| invalid(path, e.to_string()))?;
    let mask = RleMask::from_json(&text)?.decode()?;
    if mask.dims() != dims {
        return Err(invalid(
            path,
            format!("mask is {:?}, frames are {:?}", mask.dims(), dims),
        ));
    }
    Ok(mask)
}

pub fn is_bundle(dir: &Path) -> bool {
    dir.join("scene.json").is_file()
}

pub fn read_bundle(dir: &Path) -> Result<Bundle> {
    let spec_path = dir.join("scene.json");
    let text = fs::read_to_string(&spec_path).map_err(|e| invalid(&spec_path, e.to_string()))?;
    let spec: SceneSpec = serde_json::from_str(&text)?;
    let dims = (spec.width, spec.height);
    let mut frames = Vec::with_capacity(spec.frames);
    let mut robot_masks = Vec::with_capacity(spec.frames);
    let mut object_masks: BTreeMap<String, Vec<BinaryMask>> = BTreeMap::new();
    for t in 0..spec.frames {
        let n = frame_name(t);
        let fp = dir.join("frames").join(format!("{n}.png"));
        let frame = Image::load_png(&fp).map_err(|e| invalid(&fp, e.to_string()))?;
        if frame.dims() != dims {
            return Err(invalid(
                &fp,
                format!("frame is {:?}, scene is {:?}", frame.dims(), dims),
            ));
        }
        frames.push(frame);
        robot_masks.push(read_rle(
            &dir.join("gt").join(format!("{ROBOT_ID}_{n}.rle.json")),
            dims,
        )?);
        for o in &spec.objects {
            let m = read_rle(&dir.join("gt").join(format!("{}_{n}.rle.json", o.id)), dims)?;
            object_masks.entry(o.id.clone()).or_default().push(m);
        }
    }
    let bg_path = dir.join("background.png");
    let background = if bg_path.is_file() {
        Some(Image::load_png(&bg_path)?)
    } else {
        None
    };
    Ok(Bundle {
        spec,
        background,
        frames,
        robot_masks,
        object_masks,
    })
}

impl Bundle {
    /// Ground truth on the first frame, as the mock segmenter expects it.
    pub fn truth(&self) -> SceneTruth {
        let mut objects: Vec<SceneObject> = self
            .spec
            .objects
            .iter()
            .map(|o| SceneObject {
                id: o.id.clone(),
                label: o.label.clone(),
                attributes: o.attributes.clone(),
                mask: self.object_masks[&o.id][0].clone(),
            })
            .collect();
        if let Some(robot) = self.robot_masks.first() {
            objects.push(SceneObject {
                id: ROBOT_ID.into(),
                label: distill_core::instruction::ROBOT_CONCEPT.into(),
                attributes: Vec::new(),
                mask: robot.clone(),
            });
        }
        SceneTruth {
            width: self.spec.width,
            height: self.spec.height,
            objects,
        }
    }

    pub fn frame_inputs(&self) -> Vec<FrameInput> {
        self.frames
            .iter()
            .zip(&self.robot_masks)
            .enumerate()
            .map(|(t, (f, r))| FrameInput {
                observation: f.clone(),
                robot_mask: r.clone(),
                timestep: t as u64,
            })
            .collect()
    }
}

/// Reads `NNNN.png` frames with `NNNN.robot.rle.json` sidecars, ordered by
/// frame number. The number becomes the timestep.
pub fn read_frame_dir(dir: &Path) -> Result<Vec<FrameInput>> {
    let mut numbered: Vec<(u64, PathBuf)> = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| invalid(dir, e.to_string()))? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        let Some(n) = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok())
        else {
            continue;
        };
        numbered.push((n, path));
    }
    numbered.sort();
    let mut out = Vec::with_capacity(numbered.len());
    for (n, path) in numbered {
        let observation = Image::load_png(&path).map_err(|e| invalid(&path, e.to_string()))?;
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let sidecar = dir.join(format!("{stem}.robot.rle.json"));
        let robot_mask = read_rle(&sidecar, observation.dims())?;
        out.push(FrameInput {
            observation,
            robot_mask,
            timestep: n,
        });
    }
    Ok(out)
}

pub fn write_frame(dir: &Path, t: u64, image: &Image) -> Result<PathBuf> {
    let path = dir.join(format!("{t:04}.png"));
    write_atomic(&path, &image.encode_png()?)?;
    Ok(path)
}
