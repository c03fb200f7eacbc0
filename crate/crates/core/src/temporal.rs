//! Per-frame track smoothing and C/L fusion for video.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TemporalError {
    #[error("track is empty")]
    EmptyTrack,
    #[error("majority window must be odd and positive, got {0}")]
    Window(usize),
    #[error("tracks differ in length: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("fps must be finite and positive, got {0}")]
    Fps(f64),
    #[error("{labels} labels but {scores} scores")]
    Misaligned { labels: usize, scores: usize },
}

/// Per-frame labels with their scores, sampled at `fps` frames per second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTrack {
    labels: Vec<bool>,
    scores: Vec<f64>,
    fps: f64,
}

impl PredictionTrack {
    pub fn new(labels: Vec<bool>, scores: Vec<f64>, fps: f64) -> Result<Self, TemporalError> {
        if labels.len() != scores.len() {
            return Err(TemporalError::Misaligned {
                labels: labels.len(),
                scores: scores.len(),
            });
        }
        if !(fps.is_finite() && fps > 0.0) {
            return Err(TemporalError::Fps(fps));
        }
        Ok(Self { labels, scores, fps })
    }

    /// Scores set to 1.0 for positives and 0.0 for negatives.
    pub fn from_labels(labels: Vec<bool>, fps: f64) -> Result<Self, TemporalError> {
        let scores = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
        Self::new(labels, scores, fps)
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i)
    }
}

fn prefix_counts(labels: &[bool]) -> Vec<usize> {
    let mut out = Vec::with_capacity(labels.len() + 1);
    out.push(0);
    let mut acc = 0;
    for &l in labels {
        acc += usize::from(l);
        out.push(acc);
    }
    out
}

/// Centered majority vote. Frame `i` is positive when at least
/// `min(ceil(window / 2), m)` of the `m` frames in its window (truncated at
/// the track ends) are positive. A truncated window of one frame passes its
/// label through.
pub fn majority_labels(labels: &[bool], window: usize) -> Result<Vec<bool>, TemporalError> {
    if window == 0 || window % 2 == 0 {
        return Err(TemporalError::Window(window));
    }
    if labels.is_empty() {
        return Err(TemporalError::EmptyTrack);
    }
    let n = labels.len();
    let half = window / 2;
    let need_full = window.div_ceil(2);
    let pre = prefix_counts(labels);
    Ok((0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let m = hi - lo + 1;
            pre[hi + 1] - pre[lo] >= need_full.min(m)
        })
        .collect())
}

/// Frame `i` is positive when `c[i]` is positive and any `l[j]` with
/// `|i - j| <= radius` (clipped to the track) is positive.
pub fn validate_labels(c: &[bool], l: &[bool], radius: usize) -> Result<Vec<bool>, TemporalError> {
    if c.len() != l.len() {
        return Err(TemporalError::LengthMismatch {
            left: c.len(),
            right: l.len(),
        });
    }
    if c.is_empty() {
        return Err(TemporalError::EmptyTrack);
    }
    let n = c.len();
    let pre = prefix_counts(l);
    Ok((0..n)
        .map(|i| {
            if !c[i] {
                return false;
            }
            let lo = i.saturating_sub(radius);
            let hi = i.saturating_add(radius).min(n - 1);
            pre[hi + 1] > pre[lo]
        })
        .collect())
}

/// Smooths a track. Scores are carried over unchanged.
pub fn majority_vote(track: &PredictionTrack, window: usize) -> Result<PredictionTrack, TemporalError> {
    Ok(PredictionTrack {
        labels: majority_labels(&track.labels, window)?,
        scores: track.scores.clone(),
        fps: track.fps,
    })
}

/// Validates `track_c` positives against `track_l`. Scores come from `track_c`.
pub fn neighbor_validate(
    track_c: &PredictionTrack,
    track_l: &PredictionTrack,
    radius: usize,
) -> Result<PredictionTrack, TemporalError> {
    Ok(PredictionTrack {
        labels: validate_labels(&track_c.labels, &track_l.labels, radius)?,
        scores: track_c.scores.clone(),
        fps: track_c.fps,
    })
}

/// Majority vote on C, then validation against L.
pub fn pipeline_video(
    track_c: &PredictionTrack,
    track_l: &PredictionTrack,
    window: usize,
    radius: usize,
) -> Result<PredictionTrack, TemporalError> {
    neighbor_validate(&majority_vote(track_c, window)?, track_l, radius)
}

/// Generalization to any number of stage tracks: majority vote on the first,
/// then each later track validates the running result.
pub fn pipeline_stages(
    tracks: &[PredictionTrack],
    window: usize,
    radius: usize,
) -> Result<PredictionTrack, TemporalError> {
    let (first, rest) = tracks.split_first().ok_or(TemporalError::EmptyTrack)?;
    rest.iter().try_fold(majority_vote(first, window)?, |acc, t| {
        neighbor_validate(&acc, t, radius)
    })
}

/// A detected time span in seconds, `[start_s, end_s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub start_s: f64,
    pub end_s: f64,
}

/// Maximal runs of positive frames. Frame `i` starts at `i / fps`; a run
/// ends at `(last + 1) / fps`.
pub fn track_to_events(track: &PredictionTrack) -> Vec<Event> {
    let mut events = Vec::new();
    let mut start = None;
    for (i, &l) in track.labels.iter().chain(std::iter::once(&false)).enumerate() {
        match (l, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                events.push(Event {
                    start_s: s as f64 / track.fps,
                    end_s: i as f64 / track.fps,
                });
                start = None;
            }
            _ => {}
        }
    }
    events
}

pub const TRACK_CSV_HEADER: &str = "frame_index,score_C,label_C,score_L,label_L,final_label";

/// Debug dump of aligned tracks, labels as 0/1.
pub fn track_csv(
    track_c: &PredictionTrack,
    track_l: &PredictionTrack,
    fused: &PredictionTrack,
) -> Result<String, TemporalError> {
    for other in [track_l.len(), fused.len()] {
        if other != track_c.len() {
            return Err(TemporalError::LengthMismatch {
                left: track_c.len(),
                right: other,
            });
        }
    }
    let mut out = String::from(TRACK_CSV_HEADER);
    out.push('\n');
    for i in 0..track_c.len() {
        out.push_str(&format!(
            "{i},{},{},{},{},{}\n",
            track_c.scores[i],
            u8::from(track_c.labels[i]),
            track_l.scores[i],
            u8::from(track_l.labels[i]),
            u8::from(fused.labels[i]),
        ));
    }
    Ok(out)
}
