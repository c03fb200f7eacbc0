//! Verification cascade: a primary classifier whose positives are re-checked
//! by later stages on shrinking channel sets. A negative at any stage is final.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Dims, Network, NnError, Tensor};
use crate::preprocess::{self, ChannelProjection, Frame, PreprocessError};
use crate::temporal::{self, PredictionTrack, TemporalError};

pub const DEFAULT_THRESHOLD: f64 = 0.9;

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("cascade has no stages")]
    NoStages,
    #[error("stage {stage} threshold {value} is outside (0, 1)")]
    Threshold { stage: usize, value: f64 },
    #[error("stage {stage} projection {projection} yields {projected} channels but its model expects {expected}")]
    ChannelMismatch {
        stage: usize,
        projection: ChannelProjection,
        projected: usize,
        expected: usize,
    },
    #[error("stage {stage} uses {found} channels, more than the {previous} of the stage before it")]
    ChannelsGrow {
        stage: usize,
        previous: usize,
        found: usize,
    },
    #[error("frame sequence is empty")]
    EmptySequence,
    #[error("frame at position {position} has index {found}, expected {expected}")]
    NonContiguous { position: usize, expected: u64, found: u64 },
    #[error("stage {stage}: {source}")]
    Stage { stage: usize, source: StageFailure },
    #[error(transparent)]
    Temporal(#[from] TemporalError),
}

#[derive(Debug, Error)]
pub enum StageFailure {
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Model(#[from] NnError),
}

/// Anything that maps a normalized input tensor to a positive-class score.
pub trait StageModel: Send + Sync {
    fn input_dims(&self) -> Dims;
    fn score(&self, input: &Tensor) -> Result<f64, NnError>;
}

impl StageModel for Network {
    fn input_dims(&self) -> Dims {
        self.spec().input_dims()
    }

    fn score(&self, input: &Tensor) -> Result<f64, NnError> {
        self.forward(input)
    }
}

/// Wraps a model and counts forward passes across threads.
pub struct CountingModel<M> {
    inner: M,
    calls: AtomicU64,
}

impl<M: StageModel> CountingModel<M> {
    pub fn new(inner: M) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }
}

impl<M: StageModel> StageModel for CountingModel<M> {
    fn input_dims(&self) -> Dims {
        self.inner.input_dims()
    }

    fn score(&self, input: &Tensor) -> Result<f64, NnError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.inner.score(input)
    }
}

impl<M: StageModel + ?Sized> StageModel for Arc<M> {
    fn input_dims(&self) -> Dims {
        (**self).input_dims()
    }

    fn score(&self, input: &Tensor) -> Result<f64, NnError> {
        (**self).score(input)
    }
}

#[derive(Clone)]
pub struct CascadeStage {
    pub projection: ChannelProjection,
    pub model: Arc<dyn StageModel>,
    pub threshold: f64,
}

impl fmt::Debug for CascadeStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CascadeStage")
            .field("projection", &self.projection)
            .field("input_dims", &self.model.input_dims())
            .field("threshold", &self.threshold)
            .finish()
    }
}

impl CascadeStage {
    pub fn new(projection: ChannelProjection, model: Arc<dyn StageModel>, threshold: f64) -> Self {
        Self {
            projection,
            model,
            threshold,
        }
    }

    pub fn channels(&self) -> usize {
        self.projection.output_channels()
    }

    /// Projects the original frame, resizes it to the model input when the
    /// sizes differ, and scores it.
    pub fn score_frame(&self, frame: &Frame) -> Result<f64, StageFailure> {
        let dims = self.model.input_dims();
        let projected = preprocess::project(frame, self.projection)?;
        let sized = if projected.width() == dims.width && projected.height() == dims.height {
            projected
        } else {
            preprocess::resize_to(&projected, dims.width, dims.height)?
        };
        Ok(self.model.score(&preprocess::to_tensor(&sized))?)
    }
}

fn stage_error(stage: usize) -> impl Fn(StageFailure) -> CascadeError {
    move |source| CascadeError::Stage { stage, source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    /// Score of the last stage that ran.
    pub score: f64,
    pub positive: bool,
    /// Number of stages that ran, 1-based.
    pub stage_reached: usize,
    pub stage_scores: Vec<f64>,
}

/// Forward passes per stage.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct InvocationStats {
    pub per_stage: Vec<u64>,
}

impl InvocationStats {
    pub fn new(stages: usize) -> Self {
        Self {
            per_stage: vec![0; stages],
        }
    }

    pub fn merge(mut self, other: &Self) -> Self {
        if self.per_stage.len() < other.per_stage.len() {
            self.per_stage.resize(other.per_stage.len(), 0);
        }
        for (a, b) in self.per_stage.iter_mut().zip(&other.per_stage) {
            *a += b;
        }
        self
    }

    pub fn total(&self) -> u64 {
        self.per_stage.iter().sum()
    }

    fn record(&mut self, prediction: &Prediction) {
        for count in &mut self.per_stage[..prediction.stage_reached] {
            *count += 1;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cascade {
    stages: Vec<CascadeStage>,
}

impl Cascade {
    pub fn new(stages: Vec<CascadeStage>) -> Result<Self, CascadeError> {
        if stages.is_empty() {
            return Err(CascadeError::NoStages);
        }
        for (i, s) in stages.iter().enumerate() {
            let stage = i + 1;
            if !(s.threshold > 0.0 && s.threshold < 1.0) {
                return Err(CascadeError::Threshold {
                    stage,
                    value: s.threshold,
                });
            }
            let expected = s.model.input_dims().channels;
            if expected != s.channels() {
                return Err(CascadeError::ChannelMismatch {
                    stage,
                    projection: s.projection,
                    projected: s.channels(),
                    expected,
                });
            }
            if i > 0 && s.channels() > stages[i - 1].channels() {
                return Err(CascadeError::ChannelsGrow {
                    stage,
                    previous: stages[i - 1].channels(),
                    found: s.channels(),
                });
            }
        }
        Ok(Self { stages })
    }

    /// RGB model C verified by grayscale model L, both at 0.9.
    pub fn two_stage(model_c: Arc<dyn StageModel>, model_l: Arc<dyn StageModel>) -> Result<Self, CascadeError> {
        Self::new(vec![
            CascadeStage::new(ChannelProjection::IdentityRgb, model_c, DEFAULT_THRESHOLD),
            CascadeStage::new(ChannelProjection::Grayscale, model_l, DEFAULT_THRESHOLD),
        ])
    }

    pub fn stages(&self) -> &[CascadeStage] {
        &self.stages
    }

    pub fn with_thresholds(&self, thresholds: &[f64]) -> Result<Self, CascadeError> {
        let stages = self
            .stages
            .iter()
            .zip(thresholds)
            .map(|(s, &t)| CascadeStage::new(s.projection, s.model.clone(), t))
            .collect();
        Self::new(stages)
    }

    /// Runs stages in order and stops at the first score below its threshold.
    pub fn classify_image(&self, frame: &Frame) -> Result<Prediction, CascadeError> {
        let mut stage_scores = Vec::with_capacity(self.stages.len());
        for (i, stage) in self.stages.iter().enumerate() {
            let score = stage.score_frame(frame).map_err(stage_error(i + 1))?;
            stage_scores.push(score);
            if score < stage.threshold {
                return Ok(Prediction {
                    score,
                    positive: false,
                    stage_reached: i + 1,
                    stage_scores,
                });
            }
        }
        Ok(Prediction {
            score: *stage_scores.last().expect("at least one stage"),
            positive: true,
            stage_reached: self.stages.len(),
            stage_scores,
        })
    }

    /// Image mode over many frames, in parallel. Output order follows input.
    pub fn classify_images(&self, frames: &[Frame]) -> Result<(Vec<Prediction>, InvocationStats), CascadeError> {
        let predictions = frames
            .par_iter()
            .map(|f| self.classify_image(f))
            .collect::<Result<Vec<_>, _>>()?;
        let stats = predictions
            .par_iter()
            .fold(
                || InvocationStats::new(self.stages.len()),
                |mut s, p| {
                    s.record(p);
                    s
                },
            )
            .reduce(|| InvocationStats::new(self.stages.len()), |a, b| a.merge(&b));
        Ok((predictions, stats))
    }

    fn score_stage_at(&self, stage: usize, frames: &[Frame], at: &[usize]) -> Result<Vec<f64>, CascadeError> {
        let s = &self.stages[stage];
        at.par_iter()
            .map(|&i| s.score_frame(&frames[i]).map_err(stage_error(stage + 1)))
            .collect()
    }

    /// Video mode. Every stage yields a full-length track; fusion is a
    /// majority vote on the first track followed by neighbor validation
    /// against each later track in order.
    pub fn classify_sequence(
        &self,
        frames: &[Frame],
        fps: f64,
        config: &VideoConfig,
    ) -> Result<SequenceResult, CascadeError> {
        let first = frames.first().ok_or(CascadeError::EmptySequence)?;
        for (position, f) in frames.iter().enumerate() {
            let expected = first.index + position as u64;
            if f.index != expected {
                return Err(CascadeError::NonContiguous {
                    position,
                    expected,
                    found: f.index,
                });
            }
        }
        let n = frames.len();
        let all: Vec<usize> = (0..n).collect();
        let mut tracks = Vec::with_capacity(self.stages.len());
        let mut evaluated = Vec::with_capacity(self.stages.len());
        let mut stats = InvocationStats::new(self.stages.len());
        let mut fused: Option<PredictionTrack> = None;

        for (j, stage) in self.stages.iter().enumerate() {
            let at: Vec<usize> = match (&fused, config.lazy) {
                (Some(f), true) => neighbor_union(f.labels(), config.radius),
                _ => all.clone(),
            };
            let scored = self.score_stage_at(j, frames, &at)?;
            stats.per_stage[j] = at.len() as u64;
            let mut scores = vec![0.0; n];
            let mut mask = vec![false; n];
            for (&i, &s) in at.iter().zip(&scored) {
                scores[i] = s;
                mask[i] = true;
            }
            let labels = scores
                .iter()
                .zip(&mask)
                .map(|(&s, &m)| m && s >= stage.threshold)
                .collect();
            let track = PredictionTrack::new(labels, scores, fps)?;
            fused = Some(match fused {
                None => temporal::majority_vote(&track, config.window)?,
                Some(prev) => temporal::neighbor_validate(&prev, &track, config.radius)?,
            });
            tracks.push(track);
            evaluated.push(mask);
        }
        Ok(SequenceResult {
            tracks,
            evaluated,
            fused: fused.expect("at least one stage"),
            stats,
        })
    }
}

/// Sorted indices within `radius` of any positive label.
pub fn neighbor_union(labels: &[bool], radius: usize) -> Vec<usize> {
    let n = labels.len();
    let mut out = Vec::new();
    let mut next = 0;
    for (i, _) in labels.iter().enumerate().filter(|(_, &l)| l) {
        let lo = i.saturating_sub(radius).max(next);
        let hi = i.saturating_add(radius).min(n - 1);
        out.extend(lo..=hi);
        next = hi + 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VideoConfig {
    pub window: usize,
    pub radius: usize,
    /// Evaluate a later stage only where the running fused track can still
    /// be confirmed by it. Results equal eager evaluation.
    pub lazy: bool,
}

impl Default for VideoConfig {
    fn default() -> Self {
        Self {
            window: 3,
            radius: 1,
            lazy: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SequenceResult {
    /// One track per stage. In lazy mode, frames a stage never saw carry
    /// score 0 and a negative label.
    pub tracks: Vec<PredictionTrack>,
    pub evaluated: Vec<Vec<bool>>,
    pub fused: PredictionTrack,
    pub stats: InvocationStats,
}
