use std::path::PathBuf;

use clap::{Args, Subcommand};
use distill_harness::{
    generate_scene, run_latency_bench, run_sweep, sample_scene, DistractorTaxonomy, SceneLayout, SweepSpec,
    TaxonomyKind, Variant,
};

use super::distill::write_json;
use crate::config::{RunConfig, TuningArgs};
use crate::exit::{check_failed, usage};
use distill_harness::bundle::write_atomic;

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Seed-matched ablation sweep over distractor counts.
    Sweep(SweepArgs),
    /// Init versus per-frame latency on one scene.
    Latency(LatencyArgs),
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Sweep spec JSON; flags below override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub taxonomy: Option<TaxonomyKind>,
    /// Comma-separated distractor counts [default: 0,2,6,12,18].
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    /// Comma-separated seeds, or a half-open range such as `0..10`.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Episodes per (count, seed).
    #[arg(long)]
    pub episodes: Option<usize>,
    /// Comma-separated variants.
    #[arg(long, value_delimiter = ',')]
    pub variants: Option<Vec<Variant>>,
    /// Fill the timing columns of the CSV.
    #[arg(long)]
    pub timings: bool,
    /// Exit 1 when the variant ordering does not hold.
    #[arg(long)]
    pub check: bool,
    /// Output directory for sweep.csv and sweep.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long, default_value_t = TaxonomyKind::Semantic)]
    pub taxonomy: TaxonomyKind,
    #[arg(long, default_value_t = 6)]
    pub count: usize,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    /// Output directory for latency.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub tuning: TuningArgs,
}

pub fn parse_seeds(text: &str) -> anyhow::Result<Vec<u64>> {
    let bad = || {
        usage(format!(
            "seeds {text:?}: expected a list like 0,1,2 or a range like 0..10"
        ))
    };
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..b).collect());
    }
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse().map_err(|_| bad().into()))
        .collect()
}

impl SweepArgs {
    /// Spec file, then flags, then the tuning layers for the pipeline part.
    pub fn resolve(&self) -> anyhow::Result<(SweepSpec, RunConfig)> {
        let mut spec = match &self.spec {
            Some(path) => {
                let text = std::fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => SweepSpec::default(),
        };
        if let Some(t) = self.taxonomy {
            spec.taxonomy = t;
        }
        if let Some(c) = &self.counts {
            spec.counts = c.clone();
        }
        if let Some(s) = &self.seeds {
            spec.seeds = parse_seeds(s)?;
        }
        if let Some(e) = self.episodes {
            spec.episodes_per_seed = e;
        }
        if let Some(v) = &self.variants {
            spec.variants = v.clone();
        }
        spec.record_timings |= self.timings;
        let base = RunConfig {
            pipeline: spec.pipeline.clone(),
            thresholds: spec.thresholds,
            ..Default::default()
        };
        let cfg = self.tuning.resolve_over(base)?;
        spec.pipeline = cfg.pipeline.clone();
        spec.thresholds = cfg.thresholds;
        spec.validate()?;
        Ok((spec, cfg))
    }
}

pub fn run_sweep_cmd(args: &SweepArgs, spec: &SweepSpec) -> anyhow::Result<()> {
    let report = run_sweep(spec)?;
    write_atomic(&args.out.join("sweep.csv"), report.csv_string()?.as_bytes())?;
    write_json(&args.out.join("sweep.json"), &report)?;
    println!("taxonomy: {}  success rate by variant", report.taxonomy);
    print!("{}", report.summary_table());
    if args.check {
        let violations = report.ordering_violations();
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("ordering violated: {v}");
            }
            return Err(check_failed(format!("{} ordering violation(s)", violations.len())).into());
        }
        println!("check: variant ordering holds");
    }
    Ok(())
}

pub fn run_latency_cmd(args: &LatencyArgs, cfg: &RunConfig) -> anyhow::Result<()> {
    let taxonomy = DistractorTaxonomy {
        kind: args.taxonomy,
        count: args.count,
    };
    let scene = generate_scene(&sample_scene(taxonomy, cfg.seed.unwrap_or(0), &SceneLayout::default())?)?;
    let report = run_latency_bench(&scene, &cfg.pipeline, args.repeats)?;
    write_json(&args.out.join("latency.json"), &report)?;
    println!(
        "{}x{} {} distractors, {} repeats, inpainter {}",
        report.width, report.height, args.count, report.repeats, report.inpainter
    );
    println!(
        "init {:.2} ms (segment {:.2}, refine {:.2}, gate {:.2}, inpaint {:.2})",
        report.init_ms,
        report.phases.segment_ms,
        report.phases.refine_ms,
        report.phases.gate_ms,
        report.phases.inpaint_ms
    );
    println!(
        "frame p50 {:.3} ms, p95 {:.3} ms over {} frames; init/frame {:.1}",
        report.frame_ms_p50, report.frame_ms_p95, report.frame_samples, report.ratio
    );
    println!("backends quiet after init: {}", report.backends_quiet_after_init);
    println!("hardware: {}", report.hardware.describe());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_lists_and_ranges() {
        assert_eq!(parse_seeds("0..3").unwrap(), [0, 1, 2]);
        assert_eq!(parse_seeds("4, 9").unwrap(), [4, 9]);
        assert!(parse_seeds("").unwrap().is_empty());
        assert!(parse_seeds("a..b").is_err());
        assert!(parse_seeds("1,x").is_err());
    }
}
