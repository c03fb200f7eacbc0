//! Parameter counts and single-threaded latency of cascade stages.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cascade::{Cascade, CascadeError, InvocationStats};
use crate::nn::NetworkSpec;
use crate::preprocess::Frame;

/// Published parameter count of ResNet-50, used only as a reference point.
pub const RESNET50_PARAMS: u64 = 25_557_032;

pub const MIN_FRAMES: usize = 100;
pub const MIN_WARMUP: usize = 3;
pub const MIN_REPETITIONS: usize = 30;

pub const BANNER: &str = "Absolute CPU latencies of this implementation. The cascade is compared with running every stage on every frame; no detector baseline is measured.";

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("stream has {0} frames, at least {MIN_FRAMES} are needed")]
    TooFewFrames(usize),
    #[error(
        "need at least {MIN_WARMUP} warm-up runs and {MIN_REPETITIONS} repetitions, got {warmup} and {repetitions}"
    )]
    TooFewRuns { warmup: usize, repetitions: usize },
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub name: String,
    pub params: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamsReport {
    pub models: Vec<ModelParams>,
    pub total: u64,
    pub resnet50_reference: u64,
    /// `resnet50_reference / total`, two decimals.
    pub ratio: f64,
}

pub fn bench_params(models: &[(&str, &NetworkSpec)]) -> ParamsReport {
    let models: Vec<ModelParams> = models
        .iter()
        .map(|(name, spec)| ModelParams {
            name: name.to_string(),
            params: spec.count_params().total as u64,
        })
        .collect();
    let total = models.iter().map(|m| m.params).sum();
    ParamsReport {
        ratio: round2(RESNET50_PARAMS as f64 / total as f64),
        models,
        total,
        resnet50_reference: RESNET50_PARAMS,
    }
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

/// Milliseconds per frame over repeated passes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    /// Nearest-rank 95th percentile.
    pub p95_ms: f64,
}

impl LatencyStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let rank = ((0.95 * n as f64).ceil() as usize).clamp(1, n);
        Self {
            mean_ms: v.iter().sum::<f64>() / n as f64,
            median_ms: crate::evalkit::median(&v).unwrap_or(f64::NAN),
            p95_ms: v[rank - 1],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub warmup: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            warmup: MIN_WARMUP,
            repetitions: MIN_REPETITIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineInfo {
    pub os: String,
    pub arch: String,
    pub logical_cpus: usize,
    pub cpu_model: Option<String>,
}

impl MachineInfo {
    pub fn detect() -> Self {
        let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|text| {
            text.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split_once(':'))
                .map(|(_, v)| v.trim().to_string())
        });
        Self {
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            cpu_model,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageLatency {
    pub stage: usize,
    pub projection: String,
    pub latency: LatencyStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub banner: String,
    pub machine: MachineInfo,
    pub parallel: bool,
    pub frames: usize,
    pub warmup: usize,
    pub repetitions: usize,
    /// Each stage run alone on every frame.
    pub stages: Vec<StageLatency>,
    /// The cascade with short-circuiting.
    pub end_to_end: LatencyStats,
    /// Sum of per-stage times in each repetition: every stage on every frame.
    pub eager: LatencyStats,
    /// Forward passes per stage in one cascade pass over the stream.
    pub invocations: InvocationStats,
    pub stage1_positive_rate: f64,
    /// Stage medians weighted by the share of frames reaching each stage.
    pub predicted_end_to_end_ms: f64,
    /// Median end-to-end over median eager.
    pub cascade_vs_eager_ratio: f64,
    /// Per repetition: stage times then end-to-end, ms per frame.
    #[serde(skip)]
    pub raw: Vec<Vec<f64>>,
}

impl LatencyReport {
    pub fn raw_csv(&self) -> String {
        let mut out = String::from("repetition");
        for s in &self.stages {
            out.push_str(&format!(",stage{}_ms", s.stage));
        }
        out.push_str(",end_to_end_ms\n");
        for (i, row) in self.raw.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Times every stage alone and the cascade end to end, sequentially on the
/// calling thread.
pub fn bench_latency(cascade: &Cascade, frames: &[Frame], config: &BenchConfig) -> Result<LatencyReport, BenchError> {
    if frames.len() < MIN_FRAMES {
        return Err(BenchError::TooFewFrames(frames.len()));
    }
    if config.warmup < MIN_WARMUP || config.repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRuns {
            warmup: config.warmup,
            repetitions: config.repetitions,
        });
    }
    let n = frames.len() as f64;
    let stages = cascade.stages();

    let stage_pass = |j: usize| -> Result<f64, CascadeError> {
        let t = Instant::now();
        for f in frames {
            stages[j]
                .score_frame(f)
                .map_err(|source| CascadeError::Stage { stage: j + 1, source })?;
        }
        Ok(t.elapsed().as_secs_f64() * 1e3 / n)
    };
    let cascade_pass = || -> Result<(f64, InvocationStats), CascadeError> {
        let mut stats = InvocationStats::new(stages.len());
        let t = Instant::now();
        for f in frames {
            let p = cascade.classify_image(f)?;
            for c in &mut stats.per_stage[..p.stage_reached] {
                *c += 1;
            }
        }
        Ok((t.elapsed().as_secs_f64() * 1e3 / n, stats))
    };

    for _ in 0..config.warmup {
        for j in 0..stages.len() {
            stage_pass(j)?;
        }
        cascade_pass()?;
    }
    let mut raw = Vec::with_capacity(config.repetitions);
    let mut invocations = InvocationStats::new(stages.len());
    for _ in 0..config.repetitions {
        let mut row = (0..stages.len()).map(stage_pass).collect::<Result<Vec<_>, _>>()?;
        let (e2e, stats) = cascade_pass()?;
        invocations = stats;
        row.push(e2e);
        raw.push(row);
    }

    let column = |k: usize| raw.iter().map(|r| r[k]).collect::<Vec<_>>();
    let stage_stats: Vec<StageLatency> = (0..stages.len())
        .map(|j| StageLatency {
            stage: j + 1,
            projection: stages[j].projection.to_string(),
            latency: LatencyStats::from_samples(&column(j)),
        })
        .collect();
    let end_to_end = LatencyStats::from_samples(&column(stages.len()));
    let eager_samples: Vec<f64> = raw.iter().map(|r| r[..stages.len()].iter().sum()).collect();
    let eager = LatencyStats::from_samples(&eager_samples);
    let predicted = stage_stats
        .iter()
        .zip(&invocations.per_stage)
        .map(|(s, &count)| s.latency.median_ms * count as f64 / n)
        .sum();
    Ok(LatencyReport {
        banner: BANNER.into(),
        machine: MachineInfo::detect(),
        parallel: false,
        frames: frames.len(),
        warmup: config.warmup,
        repetitions: config.repetitions,
        stage1_positive_rate: invocations.per_stage.get(1).map_or(0.0, |&c| c as f64 / n),
        cascade_vs_eager_ratio: end_to_end.median_ms / eager.median_ms,
        stages: stage_stats,
        end_to_end,
        eager,
        invocations,
        predicted_end_to_end_ms: predicted,
        raw,
    })
}
