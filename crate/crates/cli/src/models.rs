//! Loading cascades, frames and architectures from disk.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use colorcascade::cascade::{Cascade, CascadeStage};
use colorcascade::io::{load_cascade_manifest, read_pnm, FrameManifest, StageEntry};
use colorcascade::nn::{build_paper_model, load_weights, BlockArch, Network, NetworkSpec};
use colorcascade::preprocess::{ChannelProjection, Frame};
use serde::Serialize;

use crate::errors::Mismatch;

pub fn parse_projection(name: &str) -> Result<ChannelProjection> {
    let canonical = match name.to_ascii_lowercase().as_str() {
        "rgb" | "color" => "identity_rgb".to_string(),
        "gray" | "grey" | "l" => "grayscale".to_string(),
        other => other.to_string(),
    };
    Ok(canonical.parse()?)
}

pub fn build_arch(arch: &str, channels: usize, side: usize) -> Result<NetworkSpec> {
    Ok(match arch {
        "desk" => BlockArch::desk().build(channels, side)?,
        "full" => build_paper_model(channels, side)?,
        other => bail!("unknown architecture `{other}`, expected desk or full"),
    })
}

pub fn read_spec(path: &Path) -> Result<NetworkSpec> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading network spec {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing network spec {}", path.display()))
}

pub fn load_network(spec_path: &Path, weights: &Path) -> Result<Network> {
    let spec = read_spec(spec_path)?;
    let bytes = std::fs::read(weights).with_context(|| format!("reading weights {}", weights.display()))?;
    let bundle = load_weights(&bytes, &spec).with_context(|| format!("loading weights {}", weights.display()))?;
    Ok(Network::from_bundle(spec, &bundle)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct StageInfo {
    pub projection: ChannelProjection,
    pub weights: PathBuf,
    pub threshold: f64,
}

pub struct LoadedCascade {
    pub cascade: Cascade,
    pub stages: Vec<StageInfo>,
    pub specs: Vec<NetworkSpec>,
}

pub fn load_cascade(manifest: &Path) -> Result<LoadedCascade> {
    let entries = load_cascade_manifest(manifest)?;
    let mut stages = Vec::new();
    let mut infos = Vec::new();
    let mut specs = Vec::new();
    for (
        i,
        StageEntry {
            projection,
            weights,
            spec,
            threshold,
        },
    ) in entries.into_iter().enumerate()
    {
        let net = load_network(&spec, &weights).with_context(|| format!("cascade stage {}", i + 1))?;
        let dims = net.spec().input_dims();
        if dims.width != dims.height {
            return Err(Mismatch(format!("stage {} model input {dims} is not square", i + 1)).into());
        }
        specs.push(net.spec().clone());
        infos.push(StageInfo {
            projection,
            weights,
            threshold,
        });
        stages.push(CascadeStage::new(projection, Arc::new(net), threshold));
    }
    let cascade = Cascade::new(stages).with_context(|| format!("cascade manifest {}", manifest.display()))?;
    Ok(LoadedCascade {
        cascade,
        stages: infos,
        specs,
    })
}

pub struct LoadedFrames {
    pub manifest: FrameManifest,
    pub paths: Vec<PathBuf>,
    pub frames: Vec<Frame>,
}

/// Reads every sampled frame; all must share one size.
pub fn load_frames(manifest_path: &Path) -> Result<LoadedFrames> {
    let manifest = FrameManifest::load(manifest_path)?;
    let paths: Vec<PathBuf> = manifest.sampled().cloned().collect();
    if paths.is_empty() {
        bail!("frame manifest {} lists no frames", manifest_path.display());
    }
    let mut frames = Vec::with_capacity(paths.len());
    for (i, p) in paths.iter().enumerate() {
        let frame = read_pnm(p)?.with_index(i as u64);
        if let Some(first) = frames.first() {
            let first: &Frame = first;
            if (frame.width(), frame.height(), frame.channels()) != (first.width(), first.height(), first.channels()) {
                return Err(Mismatch(format!(
                    "frame {} is {}x{}x{}, the first frame is {}x{}x{}",
                    p.display(),
                    frame.width(),
                    frame.height(),
                    frame.channels(),
                    first.width(),
                    first.height(),
                    first.channels()
                ))
                .into());
            }
        }
        frames.push(frame);
    }
    Ok(LoadedFrames {
        manifest,
        paths,
        frames,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
