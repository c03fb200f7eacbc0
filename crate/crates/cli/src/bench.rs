use anyhow::{bail, Result};
use colorcascade::bench::{bench_latency, bench_params, BenchConfig, LatencyReport, ParamsReport};
use colorcascade::preprocess::Frame;
use colorcascade::synthcorpus::{gen_image, recipe_seed, SceneClass, SceneRecipe};
use serde::Serialize;

use crate::models::{build_arch, load_cascade, load_frames, write_file, write_json};
use crate::{BenchArgs, ParamsArgs};

#[derive(Serialize)]
struct BenchReport<'a> {
    command: &'static str,
    args: &'a BenchArgs,
    params: ParamsReport,
    latency: LatencyReport,
}

/// Frame `i` is an explosion when `floor((i + 1) * rate)` steps past
/// `floor(i * rate)`, which spreads positives evenly through the stream.
fn synthetic_stream(count: usize, rate: f64, seed: u64, size: usize) -> Result<Vec<Frame>> {
    if !(0.0..=1.0).contains(&rate) {
        bail!("--positive-rate {rate} is outside [0, 1]");
    }
    (0..count)
        .map(|i| {
            let positive = ((i + 1) as f64 * rate).floor() > (i as f64 * rate).floor();
            let class = if positive {
                SceneClass::Explosion
            } else {
                SceneClass::PlainNegative
            };
            let recipe = SceneRecipe::new(class, recipe_seed(seed, class, i), size);
            Ok(gen_image(&recipe)?.with_index(i as u64))
        })
        .collect()
}

pub fn run(args: &BenchArgs) -> Result<()> {
    let loaded = load_cascade(&args.cascade)?;
    let frames = match &args.frames {
        Some(path) => load_frames(path)?.frames,
        None => synthetic_stream(args.count, args.positive_rate, args.seed, args.size)?,
    };
    let named: Vec<(String, &colorcascade::nn::NetworkSpec)> = loaded
        .stages
        .iter()
        .zip(&loaded.specs)
        .enumerate()
        .map(|(i, (s, spec))| (format!("stage{} {}", i + 1, s.projection), spec))
        .collect();
    let named_refs: Vec<(&str, &colorcascade::nn::NetworkSpec)> = named.iter().map(|(n, s)| (n.as_str(), *s)).collect();
    let latency = bench_latency(
        &loaded.cascade,
        &frames,
        &BenchConfig {
            warmup: args.warmup,
            repetitions: args.repetitions,
        },
    )?;
    if let Some(path) = &args.raw_csv {
        write_file(path, latency.raw_csv().as_bytes())?;
    }
    let report = BenchReport {
        command: "bench",
        args,
        params: bench_params(&named_refs),
        latency,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(out) = &args.out {
        write_json(out, &report)?;
    }
    Ok(())
}

pub fn params(args: &ParamsArgs) -> Result<()> {
    let c = build_arch(&args.arch, 3, args.size)?;
    let l = build_arch(&args.arch, 1, args.size)?;
    let report = bench_params(&[("C", &c), ("L", &l)]);
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
