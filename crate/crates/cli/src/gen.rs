use std::path::PathBuf;

use anyhow::{bail, Result};
use colorcascade::evalkit::write_truth_csv;
use colorcascade::io::{encode_pnm, FrameManifest};
use colorcascade::synthcorpus::{gen_class_images, gen_sequence, parse_timeline, SceneClass};
use serde::Serialize;

use crate::models::{write_file, write_json};
use crate::GenArgs;

#[derive(Serialize)]
struct GenMetadata<'a> {
    command: &'static str,
    args: &'a GenArgs,
    frames: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    frame_classes: Vec<SceneClass>,
}

pub fn run(args: &GenArgs) -> Result<()> {
    match (&args.timeline, args.per_class) {
        (Some(timeline), None) => video(args, timeline),
        (None, Some(n)) => dataset(args, n),
        _ => bail!("pass exactly one of --timeline or --per-class"),
    }
}

fn video(args: &GenArgs, timeline: &str) -> Result<()> {
    let segments = parse_timeline(timeline)?;
    let seq = gen_sequence(&segments, args.fps, args.seed, args.size)?;
    let dir = args.out.join("frames");
    let mut paths = Vec::with_capacity(seq.frames.len());
    for (i, frame) in seq.frames.iter().enumerate() {
        let path = dir.join(format!("{i:05}.ppm"));
        write_file(&path, &encode_pnm(frame)?)?;
        paths.push(path);
    }
    let manifest = FrameManifest {
        fps: Some(args.fps),
        stride: 1,
        paths,
    };
    write_file(&args.out.join("frames.txt"), manifest.to_text(&args.out).as_bytes())?;
    write_file(&args.out.join("truth.csv"), write_truth_csv(&seq.truth).as_bytes())?;
    write_json(
        &args.out.join("gen.json"),
        &GenMetadata {
            command: "gen",
            args,
            frames: seq.frames.len(),
            frame_classes: seq.classes,
        },
    )?;
    println!(
        "{} frames, {} truth intervals in {}",
        seq.frames.len(),
        seq.truth.len(),
        args.out.display()
    );
    Ok(())
}

fn dataset(args: &GenArgs, per_class: usize) -> Result<()> {
    let classes = args
        .classes
        .iter()
        .map(|c| Ok(c.parse::<SceneClass>()?))
        .collect::<Result<Vec<_>>>()?;
    if classes.is_empty() {
        bail!("--classes is empty");
    }
    let mut total = 0;
    for class in &classes {
        let sub: PathBuf = args.out.join(if class.is_positive() { "pos" } else { "neg" });
        for (i, img) in gen_class_images(*class, args.seed, 0..per_class, args.size)?
            .iter()
            .enumerate()
        {
            let name = format!("{}_{i:05}.ppm", class.name());
            write_file(&sub.join(name), &encode_pnm(&img.frame)?)?;
            total += 1;
        }
    }
    write_json(
        &args.out.join("gen.json"),
        &GenMetadata {
            command: "gen",
            args,
            frames: total,
            frame_classes: Vec::new(),
        },
    )?;
    println!("{total} images of {} classes in {}", classes.len(), args.out.display());
    Ok(())
}
