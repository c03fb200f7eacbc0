use std::fs::File;
use std::path::Path;

use anyhow::{bail, Context, Result};
use colorcascade::evalkit::{evaluate_corpus, read_truth_csv, VideoInput};
use colorcascade::temporal::Event;
use serde::Deserialize;

use crate::models::write_json;
use crate::EvaluateArgs;

/// Either a classify report or a bare list of events.
#[derive(Deserialize)]
#[serde(untagged)]
enum EventsFile {
    Report { events: Vec<Event> },
    Bare(Vec<Event>),
}

fn read_events(path: &Path) -> Result<Vec<Event>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading events {}", path.display()))?;
    let parsed: EventsFile = serde_json::from_str(&text).with_context(|| {
        format!(
            "{} holds neither an event list nor a report with `events`",
            path.display()
        )
    })?;
    Ok(match parsed {
        EventsFile::Report { events } | EventsFile::Bare(events) => events,
    })
}

pub fn run(args: &EvaluateArgs) -> Result<()> {
    if args.events.len() != args.truth.len() {
        bail!(
            "{} --events files but {} --truth files; they pair up in order",
            args.events.len(),
            args.truth.len()
        );
    }
    let mut videos = Vec::new();
    for (events_path, truth_path) in args.events.iter().zip(&args.truth) {
        let file = File::open(truth_path).with_context(|| format!("reading truth {}", truth_path.display()))?;
        let truth = read_truth_csv(file).with_context(|| format!("truth CSV {}", truth_path.display()))?;
        let name = events_path.file_stem().map_or_else(
            || events_path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        videos.push(VideoInput {
            name,
            events: read_events(events_path)?,
            truth,
        });
    }
    let report = evaluate_corpus(&videos, args.tolerance)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}
