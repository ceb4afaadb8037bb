use std::path::PathBuf;

use clap::{Args, ValueEnum};
use distill_harness::{
    confusion_fixture, generate_scene, sample_scene, worked_example, write_bundle, DistractorTaxonomy, SceneLayout,
    TaxonomyKind,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Scene sampled from a distractor taxonomy.
    Sampled,
    /// Spoon next to a spatula that answers "spoon" with a weak target.
    Confusion,
    /// Spoon at 0.8 against a spatula imposter at 0.6.
    WorkedExample,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value_t = Preset::Sampled)]
    pub preset: Preset,
    #[arg(long, default_value_t = TaxonomyKind::Semantic)]
    pub taxonomy: TaxonomyKind,
    /// Number of distractors (sampled preset).
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Bundle directory to write.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &GenerateArgs) -> anyhow::Result<()> {
    let spec = match args.preset {
        Preset::Sampled => sample_scene(
            DistractorTaxonomy {
                kind: args.taxonomy,
                count: args.count,
            },
            args.seed,
            &SceneLayout::default(),
        )?,
        Preset::Confusion => confusion_fixture(args.seed)?,
        Preset::WorkedExample => worked_example(args.seed)?,
    };
    let scene = generate_scene(&spec)?;
    write_bundle(&args.out, &scene)?;
    println!(
        "wrote {} frames, {} objects to {} (\"{}\")",
        scene.frame_count(),
        spec.objects.len(),
        args.out.display(),
        spec.instruction
    );
    Ok(())
}
