//! File formats: binary PPM/PGM frames, frame manifests and cascade manifests.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::preprocess::{ChannelProjection, Frame, PreprocessError};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("not a binary PPM/PGM: {0}")]
    Pnm(String),
    #[error(transparent)]
    Frame(#[from] PreprocessError),
    #[error("{path} line {line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn pnm_err(msg: impl Into<String>) -> IoError {
    IoError::Pnm(msg.into())
}

/// Parses P6 (RGB) or P5 (gray) with maxval 255.
pub fn decode_pnm(bytes: &[u8]) -> Result<Frame, IoError> {
    let mut pos = 0;
    let mut token = |bytes: &[u8]| -> Result<String, IoError> {
        loop {
            match bytes.get(pos) {
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(_) => break,
                None => return Err(pnm_err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(bytes)?;
    let channels = match magic.as_str() {
        "P6" => 3,
        "P5" => 1,
        other => return Err(pnm_err(format!("magic `{other}`"))),
    };
    let mut number =
        |what: &str| -> Result<usize, IoError> { token(bytes)?.parse().map_err(|_| pnm_err(format!("bad {what}"))) };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(pnm_err(format!("maxval {maxval}, only 255 is supported")));
    }
    // exactly one whitespace byte separates the header from the raster
    let raster = bytes.get(pos + 1..).ok_or_else(|| pnm_err("missing raster"))?;
    let expected = width * height * channels;
    if raster.len() != expected {
        return Err(pnm_err(format!(
            "raster has {} bytes, expected {expected}",
            raster.len()
        )));
    }
    Ok(Frame::new(width, height, channels, raster.to_vec())?)
}

/// P6 for three channels, P5 for one. Two-channel frames have no PNM form.
pub fn encode_pnm(frame: &Frame) -> Result<Vec<u8>, IoError> {
    let magic = match frame.channels() {
        3 => "P6",
        1 => "P5",
        c => return Err(pnm_err(format!("{c}-channel frames cannot be written"))),
    };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend_from_slice(frame.data());
    Ok(out)
}

pub fn read_pnm(path: &Path) -> Result<Frame, IoError> {
    let bytes = std::fs::read(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    decode_pnm(&bytes).map_err(|e| match e {
        IoError::Pnm(m) => IoError::Pnm(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_pnm(path: &Path, frame: &Frame) -> Result<(), IoError> {
    std::fs::write(path, encode_pnm(frame)?).map_err(|source| IoError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })
}

/// Ordered frame paths with timing.
///
/// ```text
/// fps=10
/// stride=2        # optional, default 1
/// frames/000.ppm  # paths are relative to the manifest
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct FrameManifest {
    pub fps: Option<f64>,
    pub stride: usize,
    pub paths: Vec<PathBuf>,
}

impl FrameManifest {
    /// Frames per second after sampling every `stride`-th frame.
    pub fn fps_effective(&self) -> Option<f64> {
        self.fps.map(|f| f / self.stride as f64)
    }

    /// Paths that survive the stride.
    pub fn sampled(&self) -> impl Iterator<Item = &PathBuf> {
        self.paths.iter().step_by(self.stride)
    }

    pub fn parse(text: &str, base: &Path, origin: &Path) -> Result<Self, IoError> {
        let err = |line: usize, message: String| IoError::Manifest {
            path: origin.to_path_buf(),
            line,
            message,
        };
        let mut out = Self {
            fps: None,
            stride: 1,
            paths: Vec::new(),
        };
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            if let Some(v) = line.strip_prefix("fps=") {
                let fps: f64 = v.trim().parse().map_err(|_| err(i + 1, format!("bad fps `{v}`")))?;
                if !(fps.is_finite() && fps > 0.0) {
                    return Err(err(i + 1, format!("fps must be positive, got {fps}")));
                }
                out.fps = Some(fps);
            } else if let Some(v) = line.strip_prefix("stride=") {
                let stride: usize = v.trim().parse().map_err(|_| err(i + 1, format!("bad stride `{v}`")))?;
                if stride == 0 {
                    return Err(err(i + 1, "stride must be at least 1".into()));
                }
                out.stride = stride;
            } else {
                out.paths.push(base.join(line));
            }
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&read_text(path)?, base, path)
    }

    pub fn to_text(&self, relative_to: &Path) -> String {
        let mut out = String::new();
        if let Some(fps) = self.fps {
            out.push_str(&format!("fps={fps}\n"));
        }
        if self.stride != 1 {
            out.push_str(&format!("stride={}\n", self.stride));
        }
        for p in &self.paths {
            let shown = p.strip_prefix(relative_to).unwrap_or(p);
            out.push_str(&format!("{}\n", shown.display()));
        }
        out
    }
}

fn strip_comment(raw: &str) -> &str {
    raw.split_once('#').map_or(raw, |(a, _)| a).trim()
}

/// One cascade stage as written in a manifest line:
/// `projection=<kind> weights=<path> threshold=<real> [spec=<path>]`.
/// `spec` defaults to the weights path with `.spec.json` appended.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEntry {
    pub projection: ChannelProjection,
    pub weights: PathBuf,
    pub spec: PathBuf,
    pub threshold: f64,
}

pub fn spec_sidecar(weights: &Path) -> PathBuf {
    let mut s = weights.as_os_str().to_owned();
    s.push(".spec.json");
    PathBuf::from(s)
}

pub fn parse_cascade_manifest(text: &str, base: &Path, origin: &Path) -> Result<Vec<StageEntry>, IoError> {
    let err = |line: usize, message: String| IoError::Manifest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut stages = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw);
        if line.is_empty() {
            continue;
        }
        let (mut projection, mut weights, mut threshold, mut spec) = (None, None, None, None);
        for field in line.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| err(i + 1, format!("`{field}` is not key=value")))?;
            match key {
                "projection" => {
                    projection = Some(value.parse().map_err(|e: PreprocessError| err(i + 1, e.to_string()))?)
                }
                "weights" => weights = Some(base.join(value)),
                "spec" => spec = Some(base.join(value)),
                "threshold" => {
                    threshold = Some(
                        value
                            .parse::<f64>()
                            .map_err(|_| err(i + 1, format!("bad threshold `{value}`")))?,
                    )
                }
                other => return Err(err(i + 1, format!("unknown key `{other}`"))),
            }
        }
        let missing = |what: &str| err(i + 1, format!("missing {what}="));
        let weights: PathBuf = weights.ok_or_else(|| missing("weights"))?;
        stages.push(StageEntry {
            projection: projection.ok_or_else(|| missing("projection"))?,
            spec: spec.unwrap_or_else(|| spec_sidecar(&weights)),
            weights,
            threshold: threshold.ok_or_else(|| missing("threshold"))?,
        });
    }
    if stages.is_empty() {
        return Err(err(0, "no stages".into()));
    }
    Ok(stages)
}

pub fn load_cascade_manifest(path: &Path) -> Result<Vec<StageEntry>, IoError> {
    let base = path.parent().unwrap_or(Path::new("."));
    parse_cascade_manifest(&read_text(path)?, base, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_comments_and_gray() {
        let mut bytes = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[7, 9]);
        let f = decode_pnm(&bytes).unwrap();
        assert_eq!(
            (f.width(), f.height(), f.channels(), f.data()),
            (2, 1, 1, &[7u8, 9][..])
        );
    }

    #[test]
    fn malformed_pnm_rejected() {
        assert!(decode_pnm(b"P3\n1 1\n255\n1 2 3").is_err());
        assert!(decode_pnm(b"P6\n1 1\n65535\n").is_err());
        assert!(decode_pnm(b"P6\n2 2\n255\n\x00\x00\x00").is_err());
        assert!(decode_pnm(b"P6\n2").is_err());
        let two = Frame::filled(1, 1, &[1, 2]).unwrap();
        assert!(encode_pnm(&two).is_err());
    }

    #[test]
    fn frame_manifest() {
        let text = "# clip\nfps=10\nstride=2\na.ppm\nb.ppm  # second\n\nc.ppm\n";
        let m = FrameManifest::parse(text, Path::new("/d"), Path::new("/d/m.txt")).unwrap();
        assert_eq!(m.fps_effective(), Some(5.0));
        assert_eq!(
            m.sampled().cloned().collect::<Vec<_>>(),
            vec![PathBuf::from("/d/a.ppm"), PathBuf::from("/d/c.ppm")]
        );
        assert_eq!(
            FrameManifest::parse(&m.to_text(Path::new("/d")), Path::new("/d"), Path::new("x")).unwrap(),
            m
        );
        let bad = FrameManifest::parse("fps=0\n", Path::new("."), Path::new("m.txt")).unwrap_err();
        assert!(matches!(bad, IoError::Manifest { line: 1, .. }));
        assert!(FrameManifest::parse("stride=0\n", Path::new("."), Path::new("m")).is_err());
    }

    #[test]
    fn cascade_manifest() {
        let text = "# model C then model L\nprojection=identity_rgb weights=c.cgw threshold=0.9\nprojection=grayscale weights=l.cgw threshold=0.9 spec=l.json\n";
        let stages = parse_cascade_manifest(text, Path::new("m"), Path::new("m/cascade.txt")).unwrap();
        assert_eq!(stages.len(), 2);
        assert_eq!(stages[0].spec, PathBuf::from("m/c.cgw.spec.json"));
        assert_eq!(stages[1].spec, PathBuf::from("m/l.json"));
        assert_eq!(stages[1].projection, ChannelProjection::Grayscale);
        for bad in [
            "projection=hsv weights=a threshold=0.9",
            "projection=grayscale threshold=0.9",
            "projection=grayscale weights=a threshold=x",
            "projection=grayscale weights=a threshold=0.9 color=1",
            "",
        ] {
            assert!(
                parse_cascade_manifest(bad, Path::new("."), Path::new("m")).is_err(),
                "{bad}"
            );
        }
    }

    proptest! {
        #[test]
        fn pnm_round_trip_is_bit_exact(w in 1usize..20, h in 1usize..20, gray in any::<bool>(), seed in any::<u64>()) {
            let c = if gray { 1 } else { 3 };
            let data: Vec<u8> = (0..w * h * c).map(|i| (seed.rotate_left(i as u32 % 64) as u8) ^ i as u8).collect();
            let f = Frame::new(w, h, c, data).unwrap();
            let bytes = encode_pnm(&f).unwrap();
            let back = decode_pnm(&bytes).unwrap();
            prop_assert_eq!(encode_pnm(&back).unwrap(), bytes);
            prop_assert_eq!(back, f);
        }
    }
}
