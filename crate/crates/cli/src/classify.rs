use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use colorcascade::cascade::{InvocationStats, SequenceResult, VideoConfig};
use colorcascade::temporal::{track_csv, track_to_events, Event, PredictionTrack};
use serde::Serialize;

use crate::models::{load_cascade, load_frames, write_file, write_json, StageInfo};
use crate::ClassifyArgs;

#[derive(Serialize)]
struct ImageFrame<'a> {
    index: usize,
    path: &'a Path,
    score: f64,
    positive: bool,
    stage_reached: usize,
    stage_scores: &'a [f64],
}

#[derive(Serialize)]
struct VideoFrame<'a> {
    index: usize,
    path: &'a Path,
    time_s: f64,
    stage_scores: Vec<f64>,
    stage_labels: Vec<bool>,
    evaluated: Vec<bool>,
    positive: bool,
}

#[derive(Serialize)]
struct Report<'a, F: Serialize> {
    command: &'static str,
    mode: &'a str,
    cascade: &'a [StageInfo],
    frames_manifest: &'a Path,
    fps: Option<f64>,
    stride: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    video: Option<VideoConfig>,
    frames: Vec<F>,
    #[serde(skip_serializing_if = "Option::is_none")]
    events: Option<Vec<Event>>,
    invocations: InvocationStats,
}

pub fn run(args: &ClassifyArgs) -> Result<()> {
    let loaded = load_cascade(&args.cascade)?;
    let input = load_frames(&args.frames)?;
    let fps = input.manifest.fps_effective();

    if args.mode == "image" {
        let (preds, stats) = loaded.cascade.classify_images(&input.frames)?;
        let frames = preds
            .iter()
            .zip(&input.paths)
            .enumerate()
            .map(|(index, (p, path))| ImageFrame {
                index,
                path,
                score: p.score,
                positive: p.positive,
                stage_reached: p.stage_reached,
                stage_scores: &p.stage_scores,
            })
            .collect();
        let report = Report {
            command: "classify",
            mode: "image",
            cascade: &loaded.stages,
            frames_manifest: &args.frames,
            fps,
            stride: input.manifest.stride,
            video: None,
            frames,
            events: None,
            invocations: stats,
        };
        return write_json(&args.report, &report);
    }

    let fps = fps.with_context(|| format!("video mode needs an fps= line in {}", args.frames.display()))?;
    let config = VideoConfig {
        window: args.window,
        radius: args.radius,
        lazy: args.lazy,
    };
    let result = loaded.cascade.classify_sequence(&input.frames, fps, &config)?;
    let events = track_to_events(&result.fused);
    let frames = video_frames(&result, &input.paths, fps);
    let report = Report {
        command: "classify",
        mode: "video",
        cascade: &loaded.stages,
        frames_manifest: &args.frames,
        fps: Some(fps),
        stride: input.manifest.stride,
        video: Some(config),
        frames,
        events: Some(events),
        invocations: result.stats.clone(),
    };
    write_json(&args.report, &report)?;

    let csv_path = args.track_csv.clone().unwrap_or_else(|| {
        let mut p = args.report.as_os_str().to_owned();
        p.push(".tracks.csv");
        PathBuf::from(p)
    });
    write_file(&csv_path, tracks_csv(&result.tracks, &result.fused)?.as_bytes())
}

fn video_frames<'a>(result: &SequenceResult, paths: &'a [PathBuf], fps: f64) -> Vec<VideoFrame<'a>> {
    paths
        .iter()
        .enumerate()
        .map(|(i, path)| VideoFrame {
            index: i,
            path,
            time_s: i as f64 / fps,
            stage_scores: result.tracks.iter().map(|t| t.scores()[i]).collect(),
            stage_labels: result.tracks.iter().map(|t| t.labels()[i]).collect(),
            evaluated: result.evaluated.iter().map(|e| e[i]).collect(),
            positive: result.fused.labels()[i],
        })
        .collect()
}

/// The two-stage layout for C then L cascades, one score/label column pair
/// per stage otherwise.
fn tracks_csv(tracks: &[PredictionTrack], fused: &PredictionTrack) -> Result<String> {
    if let [c, l] = tracks {
        return Ok(track_csv(c, l, fused)?);
    }
    let mut out = String::from("frame_index");
    for s in 1..=tracks.len() {
        out.push_str(&format!(",score_stage{s},label_stage{s}"));
    }
    out.push_str(",final_label\n");
    for i in 0..fused.len() {
        out.push_str(&i.to_string());
        for t in tracks {
            out.push_str(&format!(",{},{}", t.scores()[i], u8::from(t.labels()[i])));
        }
        out.push_str(&format!(",{}\n", u8::from(fused.labels()[i])));
    }
    Ok(out)
}
