//! Seed-matched ablation sweeps over distractor counts.

use std::collections::BTreeMap;
use std::io::Write;

use distill_core::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::episode::{run_episode, EpisodeOptions, Variant};
use crate::error::{HarnessError, Result};
use crate::metrics::Thresholds;
use crate::scene::{generate_scene, splitmix64};
use crate::taxonomy::{sample_scene, DistractorTaxonomy, SceneLayout, TaxonomyKind};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const DEFAULT_COUNTS: [usize; 5] = [0, 2, 6, 12, 18];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub taxonomy: TaxonomyKind,
    pub counts: Vec<usize>,
    pub seeds: Vec<u64>,
    pub episodes_per_seed: usize,
    pub variants: Vec<Variant>,
    pub layout: SceneLayout,
    pub thresholds: Thresholds,
    pub pipeline: PipelineConfig,
    /// Fill the timing columns. Off by default so reports are reproducible.
    pub record_timings: bool,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            taxonomy: TaxonomyKind::Semantic,
            counts: DEFAULT_COUNTS.to_vec(),
            seeds: (0..10).collect(),
            episodes_per_seed: 20,
            variants: Variant::ALL.to_vec(),
            layout: SceneLayout::default(),
            thresholds: Thresholds::default(),
            pipeline: PipelineConfig::default(),
            record_timings: false,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(HarnessError::InvalidSweep(format!("no {what} given")));
        if self.counts.is_empty() {
            return empty("distractor counts");
        }
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        if self.variants.is_empty() {
            return empty("variants");
        }
        if self.episodes_per_seed == 0 {
            return empty("episodes per seed");
        }
        self.pipeline.validate()?;
        Ok(())
    }

    /// Scene seed for one episode; shared by every variant.
    pub fn episode_seed(&self, count: usize, seed: u64, episode: usize) -> u64 {
        splitmix64(splitmix64(seed) ^ splitmix64(((count as u64) << 32) | episode as u64))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub taxonomy: TaxonomyKind,
    pub count: usize,
    pub seed: u64,
    pub episode: usize,
    pub success: bool,
    pub target_iou: f64,
    pub residual: f64,
    pub init_ms: Option<f64>,
    pub frame_ms_p50: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub count: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_target_iou: f64,
    pub mean_residual: f64,
    pub fail_open_episodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeStream {
    pub count: usize,
    pub seed: u64,
    pub episode: usize,
    pub scene_seed: u64,
    /// Digest of the frames every variant consumed.
    pub stream_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub taxonomy: TaxonomyKind,
    pub thresholds: Thresholds,
    pub rows: Vec<SweepRow>,
    pub aggregate: Vec<AggregateRow>,
    pub streams: Vec<EpisodeStream>,
}

struct EpisodeJob {
    count: usize,
    seed: u64,
    episode: usize,
}

fn run_job(spec: &SweepSpec, job: &EpisodeJob) -> Result<(EpisodeStream, Vec<(SweepRow, bool)>)> {
    let scene_seed = spec.episode_seed(job.count, job.seed, job.episode);
    let taxonomy = DistractorTaxonomy {
        kind: spec.taxonomy,
        count: job.count,
    };
    let scene = generate_scene(&sample_scene(taxonomy, scene_seed, &spec.layout)?)?;
    log::debug!(
        "episode count={} seed={} #{} scene_seed={scene_seed}",
        job.count,
        job.seed,
        job.episode
    );
    let opts = EpisodeOptions {
        thresholds: spec.thresholds,
        keep_frames: false,
    };
    let mut rows = Vec::with_capacity(spec.variants.len());
    for &variant in &spec.variants {
        let out = run_episode(&scene, variant, &spec.pipeline, &opts)?;
        let timing = |f: &dyn Fn(&distill_core::EpisodeReport) -> Option<f64>| {
            if spec.record_timings {
                out.report.as_ref().and_then(f)
            } else {
                None
            }
        };
        let row = SweepRow {
            variant,
            taxonomy: spec.taxonomy,
            count: job.count,
            seed: job.seed,
            episode: job.episode,
            success: out.metrics.success,
            target_iou: out.metrics.target_preservation_iou,
            residual: out.metrics.distractor_residual_ratio,
            init_ms: timing(&|r| Some(r.timings.init_ms)),
            frame_ms_p50: timing(&|r| r.timings.frame_ms_p50),
        };
        let fail_open = out.report.as_ref().is_some_and(|r| r.fail_open);
        rows.push((row, fail_open));
    }
    let stream = EpisodeStream {
        count: job.count,
        seed: job.seed,
        episode: job.episode,
        scene_seed,
        stream_sha256: scene.stream_hash(),
    };
    Ok((stream, rows))
}

/// Runs every variant on the same scene for each (count, seed, episode).
/// Episodes may run in parallel; row order is fixed by the spec.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepReport> {
    spec.validate()?;
    let mut jobs = Vec::new();
    for &count in &spec.counts {
        for &seed in &spec.seeds {
            for episode in 0..spec.episodes_per_seed {
                jobs.push(EpisodeJob { count, seed, episode });
            }
        }
    }

    #[cfg(feature = "parallel")]
    let results: Vec<_> = jobs.par_iter().map(|j| run_job(spec, j)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<_> = jobs.iter().map(|j| run_job(spec, j)).collect();

    let mut rows = Vec::new();
    let mut streams = Vec::new();
    let mut fail_open: BTreeMap<(Variant, usize), usize> = BTreeMap::new();
    for r in results {
        let (stream, episode_rows) = r?;
        streams.push(stream);
        for (row, fo) in episode_rows {
            *fail_open.entry((row.variant, row.count)).or_default() += fo as usize;
            rows.push(row);
        }
    }
    let aggregate = aggregate(&rows, &spec.variants, &spec.counts, &fail_open);
    Ok(SweepReport {
        taxonomy: spec.taxonomy,
        thresholds: spec.thresholds,
        rows,
        aggregate,
        streams,
    })
}

fn aggregate(
    rows: &[SweepRow],
    variants: &[Variant],
    counts: &[usize],
    fail_open: &BTreeMap<(Variant, usize), usize>,
) -> Vec<AggregateRow> {
    let mut out = Vec::new();
    for &count in counts {
        for &variant in variants {
            let sel: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.count == count)
                .collect();
            let n = sel.len();
            if n == 0 {
                continue;
            }
            let mean = |f: &dyn Fn(&SweepRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n as f64;
            out.push(AggregateRow {
                variant,
                count,
                episodes: n,
                success_rate: mean(&|r| r.success as u8 as f64),
                mean_target_iou: mean(&|r| r.target_iou),
                mean_residual: mean(&|r| r.residual),
                fail_open_episodes: fail_open.get(&(variant, count)).copied().unwrap_or(0),
            });
        }
    }
    out
}

impl SweepReport {
    pub fn success_rate(&self, variant: Variant, count: usize) -> Option<f64> {
        self.aggregate
            .iter()
            .find(|a| a.variant == variant && a.count == count)
            .map(|a| a.success_rate)
    }

    /// Violations of the expected ablation ordering, one message each.
    /// Variants missing from the sweep are skipped.
    pub fn ordering_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let counts: Vec<usize> = {
            let mut c: Vec<usize> = self.aggregate.iter().map(|a| a.count).collect();
            c.dedup();
            c
        };
        let pairs = [
            (Variant::Full, Variant::NoRefinement),
            (Variant::NoRefinement, Variant::MeanColorFill),
            (Variant::Full, Variant::NoRobotProtection),
        ];
        for count in counts {
            let rate = |v| self.success_rate(v, count);
            let mut check = |hi: Variant, lo: Variant| {
                if let (Some(a), Some(b)) = (rate(hi), rate(lo)) {
                    if a < b {
                        out.push(format!("count {count}: {hi} {a:.3} < {lo} {b:.3}"));
                    }
                }
            };
            for (hi, lo) in pairs {
                check(hi, lo);
            }
            for v in Variant::ALL {
                if v != Variant::BaselineIdentity {
                    check(v, Variant::BaselineIdentity);
                }
            }
        }
        out
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "variant",
            "taxonomy",
            "count",
            "seed",
            "episode",
            "success",
            "target_iou",
            "residual",
            "init_ms",
            "frame_ms_p50",
        ])?;
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.3}")).unwrap_or_default();
        for r in &self.rows {
            w.write_record([
                r.variant.to_string(),
                r.taxonomy.to_string(),
                r.count.to_string(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.success.to_string(),
                format!("{:.6}", r.target_iou),
                format!("{:.6}", r.residual),
                opt(r.init_ms),
                opt(r.frame_ms_p50),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    /// Fixed-width success table, one row per count.
    pub fn summary_table(&self) -> String {
        let mut variants: Vec<Variant> = self.aggregate.iter().map(|a| a.variant).collect();
        variants.sort();
        variants.dedup();
        let mut counts: Vec<usize> = self.aggregate.iter().map(|a| a.count).collect();
        counts.sort();
        counts.dedup();
        let mut s = format!("{:>6}", "count");
        for v in &variants {
            s.push_str(&format!(" {:>20}", v.as_str()));
        }
        s.push('\n');
        for c in counts {
            s.push_str(&format!("{c:>6}"));
            for &v in &variants {
                match self.success_rate(v, c) {
                    Some(r) => s.push_str(&format!(" {:>20.3}", r)),
                    None => s.push_str(&format!(" {:>20}", "-")),
                }
            }
            s.push('\n');
        }
        s
    }
}
