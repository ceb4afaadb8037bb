//! Scene description and deterministic rasterization.

use distill_core::instruction::DistractorLexicon;
use distill_core::segment::{ConfusionModel, SceneObject, SceneTruth};
use distill_core::{BinaryMask, FrameInput, Image};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, Result};
use crate::taxonomy::DistractorTaxonomy;

pub type Rgb = [u8; 3];

pub const ROBOT_ID: &str = "robot";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Background {
    Solid {
        color: Rgb,
    },
    /// Linear ramp from `start` to `end` along `angle_deg`, plus per-pixel
    /// noise in `[-noise, noise]`.
    Gradient {
        start: Rgb,
        end: Rgb,
        angle_deg: f64,
        noise: u8,
    },
    Noise {
        base: Rgb,
        amplitude: u8,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Rect {
        width: f64,
        height: f64,
    },
    Ellipse {
        rx: f64,
        ry: f64,
    },
    /// Straight handle ending in an elliptical head, laid along the local x axis.
    Utensil {
        length: f64,
        handle_width: f64,
        head_rx: f64,
        head_ry: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Body,
    Handle,
}

impl Shape {
    /// Radius of a disc centred on the pose that contains the shape at any rotation.
    pub fn bounding_radius(&self) -> f64 {
        match *self {
            Shape::Rect { width, height } => (width / 2.0).hypot(height / 2.0),
            Shape::Ellipse { rx, ry } => rx.max(ry),
            Shape::Utensil {
                length,
                handle_width,
                head_rx,
                head_ry,
            } => {
                let half = length / 2.0;
                half.hypot(handle_width / 2.0)
                    .max((half - head_rx).abs().hypot(head_ry))
                    .max(half)
            }
        }
    }

    fn part_at(&self, lx: f64, ly: f64) -> Option<Part> {
        match *self {
            Shape::Rect { width, height } => {
                (lx.abs() <= width / 2.0 && ly.abs() <= height / 2.0).then_some(Part::Body)
            }
            Shape::Ellipse { rx, ry } => ((lx / rx).powi(2) + (ly / ry).powi(2) <= 1.0).then_some(Part::Body),
            Shape::Utensil {
                length,
                handle_width,
                head_rx,
                head_ry,
            } => {
                let half = length / 2.0;
                let cx = half - head_rx;
                if ((lx - cx) / head_rx).powi(2) + (ly / head_ry).powi(2) <= 1.0 {
                    Some(Part::Body)
                } else if lx >= -half && lx <= cx && ly.abs() <= handle_width / 2.0 {
                    Some(Part::Handle)
                } else {
                    None
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Target,
    Anchor,
    Distractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub label: String,
    #[serde(default)]
    pub attributes: Vec<String>,
    pub role: Role,
    pub shape: Shape,
    pub color: Rgb,
    /// Handle color for utensils; defaults to `color`.
    #[serde(default)]
    pub accent: Option<Rgb>,
    pub pose: Pose,
}

impl ObjectSpec {
    fn local(&self, px: f64, py: f64) -> (f64, f64) {
        let (s, c) = self.pose.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (px - self.pose.x, py - self.pose.y);
        (dx * c + dy * s, -dx * s + dy * c)
    }

    fn color_at(&self, px: f64, py: f64) -> Option<Rgb> {
        let (lx, ly) = self.local(px, py);
        self.shape.part_at(lx, ly).map(|part| match part {
            Part::Body => self.color,
            Part::Handle => self.accent.unwrap_or(self.color),
        })
    }

    /// Pixel-centre rasterization of the object on a `width × height` canvas.
    pub fn footprint(&self, width: usize, height: usize) -> BinaryMask {
        let r = self.shape.bounding_radius() + 1.0;
        let (x0, x1) = clamp_span(self.pose.x - r, self.pose.x + r, width);
        let (y0, y1) = clamp_span(self.pose.y - r, self.pose.y + r, height);
        let mut mask = BinaryMask::empty(width, height);
        for y in y0..y1 {
            for x in x0..x1 {
                if self.color_at(x as f64 + 0.5, y as f64 + 0.5).is_some() {
                    mask.set(x, y, true);
                }
            }
        }
        mask
    }

    pub fn within_canvas(&self, width: usize, height: usize) -> bool {
        let r = self.shape.bounding_radius();
        self.pose.x - r >= 0.0
            && self.pose.y - r >= 0.0
            && self.pose.x + r <= width as f64
            && self.pose.y + r <= height as f64
    }
}

fn clamp_span(lo: f64, hi: f64, len: usize) -> (usize, usize) {
    let lo = lo.floor().max(0.0) as usize;
    let hi = (hi.ceil().max(0.0) as usize).min(len);
    (lo.min(len), hi)
}

/// Two-link planar arm with a round gripper. Angles are in degrees, measured
/// from +x towards +y (image down); the second joint angle is relative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub base: [f64; 2],
    pub upper_length: f64,
    pub fore_length: f64,
    pub thickness: f64,
    pub gripper_radius: f64,
    pub color: Rgb,
    pub joint_color: Rgb,
    /// `[shoulder, elbow]` keyframes spread evenly over the episode.
    pub keyframes: Vec<[f64; 2]>,
}

impl RobotSpec {
    pub fn joints_at(&self, t: usize, frames: usize) -> [f64; 2] {
        let k = self.keyframes.len();
        match k {
            0 => [0.0, 0.0],
            1 => self.keyframes[0],
            _ => {
                let u = if frames <= 1 {
                    0.0
                } else {
                    t as f64 / (frames - 1) as f64 * (k - 1) as f64
                };
                let i = (u.floor() as usize).min(k - 2);
                let f = u - i as f64;
                let (a, b) = (self.keyframes[i], self.keyframes[i + 1]);
                [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f]
            }
        }
    }

    fn links(&self, t: usize, frames: usize) -> ([f64; 2], [f64; 2], [f64; 2]) {
        let [shoulder, elbow] = self.joints_at(t, frames);
        let a1 = shoulder.to_radians();
        let a2 = (shoulder + elbow).to_radians();
        let b = self.base;
        let j = [b[0] + self.upper_length * a1.cos(), b[1] + self.upper_length * a1.sin()];
        let e = [j[0] + self.fore_length * a2.cos(), j[1] + self.fore_length * a2.sin()];
        (b, j, e)
    }

    /// Robot rasterization at frame `t`: pixel colors for covered pixels.
    fn paint(&self, t: usize, frames: usize, width: usize, height: usize) -> Vec<Option<Rgb>> {
        let (b, j, e) = self.links(t, frames);
        let half = self.thickness / 2.0;
        let mut out = vec![None; width * height];
        for y in 0..height {
            for x in 0..width {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                if dist(p, e) <= self.gripper_radius || dist(p, j) <= half + 1.5 {
                    out[y * width + x] = Some(self.joint_color);
                } else if seg_dist(p, b, j) <= half || seg_dist(p, j, e) <= half {
                    out[y * width + x] = Some(self.color);
                }
            }
        }
        out
    }
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

fn seg_dist(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    dist(p, [a[0] + t * dx, a[1] + t * dy])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub background: Background,
    pub objects: Vec<ObjectSpec>,
    pub robot: RobotSpec,
    pub instruction: String,
    pub domain: String,
    /// Lexicon override; the bundled lexicon is used when absent.
    #[serde(default)]
    pub lexicon: Option<DistractorLexicon>,
    #[serde(default)]
    pub confusion: ConfusionModel,
    #[serde(default)]
    pub taxonomy: Option<DistractorTaxonomy>,
}

impl SceneSpec {
    pub fn objects_with_role(&self, role: Role) -> impl Iterator<Item = (usize, &ObjectSpec)> {
        self.objects.iter().enumerate().filter(move |(_, o)| o.role == role)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(HarnessError::InvalidScene("empty canvas".into()));
        }
        if self.frames == 0 {
            return Err(HarnessError::InvalidScene("scene needs at least one frame".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for o in &self.objects {
            if o.id == ROBOT_ID || !ids.insert(o.id.as_str()) {
                return Err(HarnessError::InvalidScene(format!(
                    "duplicate or reserved object id {:?}",
                    o.id
                )));
            }
            if !o.within_canvas(self.width, self.height) {
                return Err(HarnessError::InvalidScene(format!("object {} leaves the canvas", o.id)));
            }
        }
        Ok(())
    }
}

/// 64-bit mixer used for seed derivation and background noise.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn noise(seed: u64, index: usize, channel: usize, amplitude: u8) -> i32 {
    if amplitude == 0 {
        return 0;
    }
    let h = splitmix64(seed ^ splitmix64((index * 3 + channel) as u64));
    let span = 2 * amplitude as u64 + 1;
    (h % span) as i32 - amplitude as i32
}

pub fn render_background(bg: &Background, width: usize, height: usize, seed: u64) -> Image {
    let mut img = Image::new(width, height);
    let noise_seed = splitmix64(seed ^ 0x006e_6f69_7365);
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let (base, amp) = match bg {
                Background::Solid { color } => (color.map(f64::from), 0),
                Background::Noise { base, amplitude } => (base.map(f64::from), *amplitude),
                Background::Gradient {
                    start,
                    end,
                    angle_deg,
                    noise,
                } => {
                    let (s, c) = angle_deg.to_radians().sin_cos();
                    let extent = (c.abs() * width as f64 + s.abs() * height as f64) / 2.0;
                    let proj = (x as f64 + 0.5 - width as f64 / 2.0) * c + (y as f64 + 0.5 - height as f64 / 2.0) * s;
                    let u = if extent > 0.0 { (proj / extent + 1.0) / 2.0 } else { 0.5 };
                    let mut rgb = [0.0; 3];
                    for ch in 0..3 {
                        rgb[ch] = start[ch] as f64 + (end[ch] as f64 - start[ch] as f64) * u;
                    }
                    (rgb, *noise)
                }
            };
            let mut px = [0u8; 3];
            for ch in 0..3 {
                let v = base[ch].round() as i32 + noise(noise_seed, i, ch, amp);
                px[ch] = v.clamp(0, 255) as u8;
            }
            img.set_pixel(x, y, px);
        }
    }
    img
}

/// Rendered episode: frames plus exact ground truth.
#[derive(Debug, Clone)]
pub struct GeneratedScene {
    pub spec: SceneSpec,
    /// Canvas with no objects and no robot.
    pub background: Image,
    pub frames: Vec<Image>,
    pub robot_masks: Vec<BinaryMask>,
    /// Full (unoccluded) footprint per object, static over the episode.
    pub footprints: Vec<BinaryMask>,
}

pub fn generate_scene(spec: &SceneSpec) -> Result<GeneratedScene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let background = render_background(&spec.background, w, h, spec.seed);
    let footprints: Vec<BinaryMask> = spec.objects.iter().map(|o| o.footprint(w, h)).collect();
    for i in 0..footprints.len() {
        for j in i + 1..footprints.len() {
            if footprints[i].intersects(&footprints[j])? {
                return Err(HarnessError::InvalidScene(format!(
                    "objects {} and {} overlap",
                    spec.objects[i].id, spec.objects[j].id
                )));
            }
        }
    }

    let mut still = background.clone();
    for (o, fp) in spec.objects.iter().zip(&footprints) {
        for (x, y) in fp.iter_set() {
            if let Some(c) = o.color_at(x as f64 + 0.5, y as f64 + 0.5) {
                still.set_pixel(x, y, c);
            }
        }
    }

    let mut frames = Vec::with_capacity(spec.frames);
    let mut robot_masks = Vec::with_capacity(spec.frames);
    for t in 0..spec.frames {
        let paint = spec.robot.paint(t, spec.frames, w, h);
        let mut frame = still.clone();
        let mut mask = BinaryMask::empty(w, h);
        for (i, c) in paint.iter().enumerate() {
            if let Some(c) = c {
                frame.set_pixel(i % w, i / w, *c);
                mask.set(i % w, i / w, true);
            }
        }
        frames.push(frame);
        robot_masks.push(mask);
    }

    Ok(GeneratedScene {
        spec: spec.clone(),
        background,
        frames,
        robot_masks,
        footprints,
    })
}

impl GeneratedScene {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    /// Object pixels not covered by the robot at frame `t`.
    pub fn visible(&self, object: usize, t: usize) -> BinaryMask {
        self.footprints[object]
            .subtract(&self.robot_masks[t])
            .expect("scene masks share canvas dims")
    }

    pub fn role_mask(&self, role: Role, t: usize) -> BinaryMask {
        let mut m = BinaryMask::empty(self.spec.width, self.spec.height);
        for (i, _) in self.spec.objects_with_role(role) {
            m.union_in_place(&self.visible(i, t)).expect("same dims");
        }
        m
    }

    /// Ground truth as seen by a segmenter on the first frame, robot included.
    pub fn truth(&self) -> SceneTruth {
        let mut objects: Vec<SceneObject> = self
            .spec
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| SceneObject {
                id: o.id.clone(),
                label: o.label.clone(),
                attributes: o.attributes.clone(),
                mask: self.visible(i, 0),
            })
            .collect();
        objects.push(SceneObject {
            id: ROBOT_ID.into(),
            label: distill_core::instruction::ROBOT_CONCEPT.into(),
            attributes: Vec::new(),
            mask: self.robot_masks[0].clone(),
        });
        SceneTruth {
            width: self.spec.width,
            height: self.spec.height,
            objects,
        }
    }

    pub fn frame_input(&self, t: usize) -> FrameInput {
        FrameInput {
            observation: self.frames[t].clone(),
            robot_mask: self.robot_masks[t].clone(),
            timestep: t as u64,
        }
    }

    /// Digest over every frame, used to check that variants saw the same stream.
    pub fn stream_hash(&self) -> String {
        let mut h = Sha256::new();
        for f in &self.frames {
            h.update(f.content_hash().as_bytes());
        }
        hex::encode(h.finalize())
    }
}
