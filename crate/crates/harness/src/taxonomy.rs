//! Distractor taxonomies, default confusion regimes, and seeded scene layout.

use std::fmt;
use std::str::FromStr;

use distill_core::segment::{ConfidenceSpec, ConfusionModel, ConfusionRule};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::scene::{Background, ObjectSpec, Pose, Rgb, RobotSpec, Role, SceneSpec, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaxonomyKind {
    /// Same affordance category as the target (kitchen utensils).
    Semantic,
    /// Labels unrelated to the target.
    Random,
    /// Same label as the target with a different attribute tag.
    Attribute,
}

impl TaxonomyKind {
    pub const ALL: [TaxonomyKind; 3] = [TaxonomyKind::Semantic, TaxonomyKind::Random, TaxonomyKind::Attribute];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaxonomyKind::Semantic => "semantic",
            TaxonomyKind::Random => "random",
            TaxonomyKind::Attribute => "attribute",
        }
    }

    /// Instruction used for scenes of this kind.
    pub fn instruction(&self) -> &'static str {
        match self {
            TaxonomyKind::Attribute => "put spoon with green handle on towel",
            _ => "put spoon on towel",
        }
    }

    pub fn label_pool(&self) -> &'static [&'static str] {
        match self {
            TaxonomyKind::Semantic => SEMANTIC_POOL,
            TaxonomyKind::Random => RANDOM_POOL,
            TaxonomyKind::Attribute => &[TARGET_LABEL],
        }
    }
}

impl fmt::Display for TaxonomyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaxonomyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown taxonomy {s:?} (expected semantic, random or attribute)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistractorTaxonomy {
    pub kind: TaxonomyKind,
    pub count: usize,
}

pub const TARGET_LABEL: &str = "spoon";
pub const TARGET_ATTRIBUTE: &str = "green handle";
pub const ANCHOR_LABEL: &str = "towel";
pub const DOMAIN: &str = "tabletop";

pub const SEMANTIC_POOL: &[&str] = &["spatula", "fork", "knife", "ladle", "whisk", "tongs"];
pub const RANDOM_POOL: &[&str] = &["banana", "mug", "tennis ball", "cube", "can", "apple", "bowl", "marker"];
pub const CONFLICTING_ATTRIBUTES: &[&str] = &[
    "red handle",
    "blue handle",
    "yellow handle",
    "black handle",
    "white handle",
    "purple handle",
];

/// Every color has a channel at most 20 or at least 240, so it sits at least
/// 37 levels (L∞) away from any default background pixel.
pub const PALETTE: &[(&str, Rgb)] = &[
    ("red", [235, 20, 20]),
    ("green", [20, 200, 40]),
    ("blue", [20, 60, 240]),
    ("yellow", [245, 215, 10]),
    ("orange", [245, 120, 10]),
    ("purple", [140, 20, 240]),
    ("cyan", [10, 210, 240]),
    ("magenta", [240, 20, 190]),
    ("black", [15, 15, 15]),
    ("white", [245, 245, 245]),
    ("brown", [120, 60, 10]),
];

pub fn palette_color(name: &str) -> Option<Rgb> {
    PALETTE.iter().find(|(n, _)| *n == name).map(|(_, c)| *c)
}

fn handle_color(attribute: &str) -> Option<Rgb> {
    attribute.strip_suffix(" handle").and_then(palette_color)
}

pub fn shape_for(label: &str, rng: &mut impl Rng) -> Shape {
    let length = rng.random_range(20.0..23.0);
    let utensil = |head_rx: f64, head_ry: f64, handle_width: f64| Shape::Utensil {
        length,
        handle_width,
        head_rx,
        head_ry,
    };
    match label {
        "spoon" => utensil(5.0, 3.5, 4.0),
        "spatula" => utensil(6.0, 4.0, 4.0),
        "fork" => utensil(5.0, 3.0, 3.5),
        "knife" => utensil(7.0, 2.5, 4.0),
        "ladle" => utensil(5.0, 5.0, 3.5),
        "whisk" => utensil(6.0, 4.5, 3.5),
        "tongs" => utensil(8.0, 3.0, 4.0),
        "banana" => Shape::Ellipse { rx: 11.0, ry: 4.0 },
        "tennis ball" => Shape::Ellipse { rx: 7.0, ry: 7.0 },
        "apple" => Shape::Ellipse { rx: 8.0, ry: 7.5 },
        "bowl" => Shape::Ellipse { rx: 11.0, ry: 7.0 },
        "mug" => Shape::Rect {
            width: 14.0,
            height: 16.0,
        },
        "cube" => Shape::Rect {
            width: 14.0,
            height: 14.0,
        },
        "can" => Shape::Rect {
            width: 10.0,
            height: 18.0,
        },
        "marker" => Shape::Rect {
            width: 20.0,
            height: 4.0,
        },
        "towel" => Shape::Rect {
            width: 19.0,
            height: 13.0,
        },
        _ => Shape::Rect {
            width: 12.0,
            height: 12.0,
        },
    }
}

/// Default confusion regime for a taxonomy.
///
/// Semantic: every utensil answers the target query half the time at σ≈0.6
/// and its own query at σ≈0.9, while the genuine spoon answers "spoon" at
/// σ≈0.8 and is weakly picked up as "ladle". Attribute: conflicting spoons
/// occasionally answer the full attribute phrase at low confidence; every
/// spoon answers the bare label.
pub fn default_confusion(kind: TaxonomyKind) -> ConfusionModel {
    let gauss = |mean, std| ConfidenceSpec::Gaussian { mean, std };
    let mut model = ConfusionModel {
        self_match: gauss(0.9, 0.03),
        rules: Vec::new(),
    }
    .rule("robot", "robot", ConfidenceSpec::Constant(0.95))
    .rule(ANCHOR_LABEL, ANCHOR_LABEL, gauss(0.95, 0.02));
    match kind {
        TaxonomyKind::Semantic => {
            model =
                model
                    .rule(TARGET_LABEL, TARGET_LABEL, gauss(0.8, 0.05))
                    .rule(TARGET_LABEL, "ladle", gauss(0.5, 0.08));
            for label in SEMANTIC_POOL {
                model.rules.push(ConfusionRule {
                    true_label: (*label).into(),
                    query: TARGET_LABEL.into(),
                    probability: 0.5,
                    confidence: gauss(0.6, 0.08),
                });
            }
        }
        TaxonomyKind::Random => {
            model = model.rule(TARGET_LABEL, TARGET_LABEL, gauss(0.8, 0.05));
        }
        TaxonomyKind::Attribute => {
            let query = format!("{TARGET_LABEL} with {TARGET_ATTRIBUTE}");
            model = model.rule(&query, &query, gauss(0.85, 0.05));
            for attr in CONFLICTING_ATTRIBUTES {
                model.rules.push(ConfusionRule {
                    true_label: format!("{TARGET_LABEL} with {attr}"),
                    query: query.clone(),
                    probability: 0.3,
                    confidence: gauss(0.45, 0.08),
                });
            }
            model = model.rule(TARGET_LABEL, TARGET_LABEL, gauss(0.9, 0.03));
        }
    }
    model
}

/// Grid used for collision-aware placement: objects sit in distinct cells,
/// jittered but always at least `margin` pixels inside their cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneLayout {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub origin: [usize; 2],
    pub cell: usize,
    pub cols: usize,
    pub rows: usize,
    pub margin: f64,
    pub max_radius: f64,
}

impl Default for SceneLayout {
    fn default() -> Self {
        Self {
            width: 256,
            height: 256,
            frames: 10,
            origin: [8, 48],
            cell: 40,
            cols: 6,
            rows: 5,
            margin: 5.0,
            max_radius: 12.0,
        }
    }
}

impl SceneLayout {
    pub fn capacity(&self) -> usize {
        self.cols * self.rows
    }

    fn validate(&self) -> Result<()> {
        let fits = self.origin[0] + self.cols * self.cell <= self.width
            && self.origin[1] + self.rows * self.cell <= self.height;
        if !fits {
            return Err(HarnessError::InvalidScene("grid does not fit the canvas".into()));
        }
        if (self.cell as f64) < 2.0 * (self.max_radius + self.margin) {
            return Err(HarnessError::InvalidScene(format!(
                "cell {} too small for radius {} plus margin {}",
                self.cell, self.max_radius, self.margin
            )));
        }
        if self.frames == 0 {
            return Err(HarnessError::InvalidScene("scene needs at least one frame".into()));
        }
        Ok(())
    }
}

fn default_robot(rng: &mut impl Rng) -> RobotSpec {
    // parked along the top edge at t=0, then sweeps down across the grid
    let mut keyframes = vec![
        [0.0, 175.0],
        [25.0, 80.0],
        [45.0, 30.0],
        [60.0, -20.0],
        [35.0, -40.0],
        [15.0, 20.0],
    ];
    for k in keyframes.iter_mut().skip(1) {
        k[0] += rng.random_range(-8.0..8.0);
        k[1] += rng.random_range(-8.0..8.0);
    }
    RobotSpec {
        base: [-10.0, 20.0],
        upper_length: 150.0,
        fore_length: 140.0,
        thickness: 10.0,
        gripper_radius: 6.0,
        color: [40, 40, 48],
        joint_color: [70, 70, 80],
        keyframes,
    }
}

fn default_background(rng: &mut impl Rng) -> Background {
    let start: Rgb = std::array::from_fn(|_| rng.random_range(75..=125));
    let end: Rgb = std::array::from_fn(|_| rng.random_range(150..=200));
    Background::Gradient {
        start,
        end,
        angle_deg: rng.random_range(0.0..360.0),
        noise: 3,
    }
}

fn object_id(label: &str, k: usize) -> String {
    format!("{}_{k}", label.replace(' ', "_"))
}

/// Samples a scene of the given taxonomy. Deterministic in `seed`.
pub fn sample_scene(taxonomy: DistractorTaxonomy, seed: u64, layout: &SceneLayout) -> Result<SceneSpec> {
    layout.validate()?;
    let requested = taxonomy.count + 2;
    if requested > layout.capacity() {
        return Err(HarnessError::PlacementInfeasible {
            requested,
            capacity: layout.capacity(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let background = default_background(&mut rng);
    let robot = default_robot(&mut rng);

    let mut cells: Vec<usize> = (0..layout.capacity()).collect();
    cells.shuffle(&mut rng);

    let colors: Vec<Rgb> = PALETTE.iter().map(|(_, c)| *c).collect();
    let white = palette_color("white").expect("palette has white");
    let mut objects = Vec::with_capacity(requested);
    let mut place = |rng: &mut ChaCha8Rng,
                     cell: usize,
                     id: String,
                     label: &str,
                     attributes: Vec<String>,
                     role: Role,
                     color: Rgb,
                     accent: Option<Rgb>|
     -> Result<()> {
        let shape = shape_for(label, rng);
        let r = shape.bounding_radius();
        if r > layout.max_radius {
            return Err(HarnessError::InvalidScene(format!(
                "{label} radius {r:.1} exceeds cell budget"
            )));
        }
        let slack = layout.cell as f64 / 2.0 - r - layout.margin;
        let (col, row) = (cell % layout.cols, cell / layout.cols);
        let cx = layout.origin[0] as f64 + (col as f64 + 0.5) * layout.cell as f64;
        let cy = layout.origin[1] as f64 + (row as f64 + 0.5) * layout.cell as f64;
        let jitter = |rng: &mut ChaCha8Rng| {
            if slack > 0.0 {
                rng.random_range(-slack..=slack)
            } else {
                0.0
            }
        };
        let pose = Pose {
            x: cx + jitter(rng),
            y: cy + jitter(rng),
            angle_deg: rng.random_range(0.0..180.0),
        };
        objects.push(ObjectSpec {
            id,
            label: label.into(),
            attributes,
            role,
            shape,
            color,
            accent,
            pose,
        });
        Ok(())
    };

    let green = palette_color("green").expect("palette has green");
    place(
        &mut rng,
        cells[0],
        object_id(TARGET_LABEL, 0),
        TARGET_LABEL,
        vec![TARGET_ATTRIBUTE.into()],
        Role::Target,
        white,
        Some(green),
    )?;
    let towel = *colors.choose(&mut rng).expect("palette not empty");
    place(
        &mut rng,
        cells[1],
        object_id(ANCHOR_LABEL, 0),
        ANCHOR_LABEL,
        vec![],
        Role::Anchor,
        towel,
        None,
    )?;

    for k in 0..taxonomy.count {
        let cell = cells[k + 2];
        match taxonomy.kind {
            TaxonomyKind::Attribute => {
                let attr = *CONFLICTING_ATTRIBUTES.choose(&mut rng).expect("attributes");
                place(
                    &mut rng,
                    cell,
                    object_id(TARGET_LABEL, k + 1),
                    TARGET_LABEL,
                    vec![attr.into()],
                    Role::Distractor,
                    white,
                    handle_color(attr),
                )?;
            }
            kind => {
                let label = *kind.label_pool().choose(&mut rng).expect("label pool");
                let color = *colors.choose(&mut rng).expect("palette");
                place(
                    &mut rng,
                    cell,
                    object_id(label, k),
                    label,
                    vec![],
                    Role::Distractor,
                    color,
                    None,
                )?;
            }
        }
    }

    Ok(SceneSpec {
        seed,
        width: layout.width,
        height: layout.height,
        frames: layout.frames,
        background,
        objects,
        robot,
        instruction: taxonomy.kind.instruction().into(),
        domain: DOMAIN.into(),
        lexicon: None,
        confusion: default_confusion(taxonomy.kind),
        taxonomy: Some(taxonomy),
    })
}

/// Spoon/spatula scene where the target is detected with less confidence
/// than the impostor, so a confidence-only selector picks the spatula.
pub fn confusion_fixture(seed: u64) -> Result<SceneSpec> {
    let mut spec = sample_scene(
        DistractorTaxonomy {
            kind: TaxonomyKind::Semantic,
            count: 0,
        },
        seed,
        &SceneLayout::default(),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let target = &spec.objects[0];
    let layout = SceneLayout::default();
    // place the spatula in a cell away from target and anchor
    let occupied: Vec<(usize, usize)> = spec
        .objects
        .iter()
        .map(|o| {
            (
                ((o.pose.x - layout.origin[0] as f64) / layout.cell as f64) as usize,
                ((o.pose.y - layout.origin[1] as f64) / layout.cell as f64) as usize,
            )
        })
        .collect();
    let free = (0..layout.capacity())
        .map(|c| (c % layout.cols, c / layout.cols))
        .find(|c| !occupied.contains(c))
        .expect("grid has room");
    let shape = shape_for("spatula", &mut rng);
    let spatula = ObjectSpec {
        id: "spatula_0".into(),
        label: "spatula".into(),
        attributes: vec![],
        role: Role::Distractor,
        shape,
        color: palette_color("orange").expect("orange"),
        accent: None,
        pose: Pose {
            x: layout.origin[0] as f64 + (free.0 as f64 + 0.5) * layout.cell as f64,
            y: layout.origin[1] as f64 + (free.1 as f64 + 0.5) * layout.cell as f64,
            angle_deg: target.pose.angle_deg,
        },
    };
    spec.objects.push(spatula);
    spec.taxonomy = Some(DistractorTaxonomy {
        kind: TaxonomyKind::Semantic,
        count: 1,
    });
    spec.confusion = ConfusionModel {
        self_match: ConfidenceSpec::Constant(0.9),
        rules: Vec::new(),
    }
    .rule("robot", "robot", ConfidenceSpec::Constant(0.95))
    .rule(ANCHOR_LABEL, ANCHOR_LABEL, ConfidenceSpec::Constant(0.95))
    .rule(TARGET_LABEL, TARGET_LABEL, ConfidenceSpec::Constant(0.55))
    .rule(TARGET_LABEL, "ladle", ConfidenceSpec::Constant(0.5))
    .rule("spatula", TARGET_LABEL, ConfidenceSpec::Constant(0.6))
    .rule("spatula", "spatula", ConfidenceSpec::Constant(0.9));
    Ok(spec)
}

/// Same layout as [`confusion_fixture`] with the textbook numbers: the
/// spatula answers "spoon" at 0.6 but itself at 0.9, the real spoon answers
/// at 0.8 and nothing else claims it.
pub fn worked_example(seed: u64) -> Result<SceneSpec> {
    let mut spec = confusion_fixture(seed)?;
    spec.confusion = ConfusionModel {
        self_match: ConfidenceSpec::Constant(0.9),
        rules: Vec::new(),
    }
    .rule("robot", "robot", ConfidenceSpec::Constant(0.95))
    .rule(ANCHOR_LABEL, ANCHOR_LABEL, ConfidenceSpec::Constant(0.95))
    .rule(TARGET_LABEL, TARGET_LABEL, ConfidenceSpec::Constant(0.8))
    .rule("spatula", TARGET_LABEL, ConfidenceSpec::Constant(0.6))
    .rule("spatula", "spatula", ConfidenceSpec::Constant(0.9));
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_contrasts_with_default_background_range() {
        for (name, c) in PALETTE {
            let far = c.iter().any(|&v| v <= 20 || v >= 240);
            assert!(far, "{name} lacks an extreme channel");
        }
    }

    #[test]
    fn taxonomy_names_round_trip() {
        for k in TaxonomyKind::ALL {
            assert_eq!(k.as_str().parse::<TaxonomyKind>().unwrap(), k);
        }
        assert!("clutter".parse::<TaxonomyKind>().is_err());
    }

    #[test]
    fn every_default_shape_fits_the_cell_budget() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let layout = SceneLayout::default();
        for _ in 0..200 {
            for label in SEMANTIC_POOL
                .iter()
                .chain(RANDOM_POOL)
                .chain(&[TARGET_LABEL, ANCHOR_LABEL])
            {
                let r = shape_for(label, &mut rng).bounding_radius();
                assert!(r <= layout.max_radius, "{label}: {r}");
            }
        }
    }

    #[test]
    fn over_capacity_is_infeasible() {
        let layout = SceneLayout::default();
        let err = sample_scene(
            DistractorTaxonomy {
                kind: TaxonomyKind::Random,
                count: layout.capacity() - 1,
            },
            0,
            &layout,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            HarnessError::PlacementInfeasible {
                requested: 31,
                capacity: 30
            }
        ));
    }

    #[test]
    fn attribute_distractors_are_spoons_with_other_handles() {
        let spec = sample_scene(
            DistractorTaxonomy {
                kind: TaxonomyKind::Attribute,
                count: 4,
            },
            3,
            &SceneLayout::default(),
        )
        .unwrap();
        for (_, o) in spec.objects_with_role(Role::Distractor) {
            assert_eq!(o.label, TARGET_LABEL);
            assert_ne!(o.attributes, vec![TARGET_ATTRIBUTE.to_string()]);
        }
    }
}
