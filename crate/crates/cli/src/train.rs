use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use colorcascade::io::{read_pnm, spec_sidecar};
use colorcascade::nn::{save_weights, train, EpochRecord, Sample, TrainConfig};
use colorcascade::preprocess::{project, resize_antialiased, to_tensor, ChannelProjection, Frame};
use serde::Serialize;

use crate::models::{build_arch, parse_projection, write_file, write_json};
use crate::TrainArgs;

const IMAGE_EXTENSIONS: [&str; 3] = ["ppm", "pgm", "pnm"];

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    args: &'a TrainArgs,
    projection: ChannelProjection,
    positives: usize,
    negatives: usize,
    params: usize,
    best_epoch: usize,
    best: &'a EpochRecord,
    history: &'a [EpochRecord],
    weights: &'a Path,
    spec: PathBuf,
}

/// Sorted image files of one class directory; an empty or missing directory
/// is an error naming it.
fn class_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).with_context(|| format!("reading class directory {}", dir.display()))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.with_context(|| format!("listing {}", dir.display()))?.path();
        let is_image = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)));
        if path.is_file() && is_image {
            files.push(path);
        }
    }
    if files.is_empty() {
        bail!("class directory {} contains no PPM/PGM images", dir.display());
    }
    files.sort();
    Ok(files)
}

fn load_sample(path: &Path, projection: ChannelProjection, side: usize, positive: bool) -> Result<Sample> {
    let frame = read_pnm(path)?;
    let projected: Frame = project(&frame, projection).with_context(|| format!("projecting {}", path.display()))?;
    let resized = resize_antialiased(&projected, side)?;
    Ok(Sample::new(to_tensor(&resized), positive))
}

pub fn run(args: &TrainArgs) -> Result<()> {
    if args.epochs == 0 {
        bail!("--epochs must be at least 1");
    }
    let projection = parse_projection(&args.class_channels)?;
    let pos = class_files(&args.data_dir.join("pos"))?;
    let neg = class_files(&args.data_dir.join("neg"))?;
    let mut samples = Vec::with_capacity(pos.len() + neg.len());
    for p in &pos {
        samples.push(load_sample(p, projection, args.size, true)?);
    }
    for p in &neg {
        samples.push(load_sample(p, projection, args.size, false)?);
    }

    let spec = build_arch(&args.arch, projection.output_channels(), args.size)?;
    let config = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        learning_rate: args.learning_rate,
        momentum: args.momentum,
        val_fraction: args.val_fraction,
        seed: args.seed,
    };
    let outcome = train(&spec, &samples, &config)?;

    write_file(&args.out, &save_weights(&outcome.bundle))?;
    let spec_path = spec_sidecar(&args.out);
    write_json(&spec_path, &spec)?;

    let summary = TrainSummary {
        command: "train",
        args,
        projection,
        positives: pos.len(),
        negatives: neg.len(),
        params: spec.count_params().total,
        best_epoch: outcome.best_epoch,
        best: outcome.best_record(),
        history: &outcome.history,
        weights: &args.out,
        spec: spec_path,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
