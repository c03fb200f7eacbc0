//! Frame preparation: anti-aliased resize, channel projections and
//! conversion to network input.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Dims, Tensor};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PreprocessError {
    #[error("frame has zero width or height")]
    Empty,
    #[error("frame of {width}x{height}x{channels} needs {expected} bytes, got {len}")]
    DataLength {
        width: usize,
        height: usize,
        channels: usize,
        expected: usize,
        len: usize,
    },
    #[error("frames carry 1, 2 or 3 channels, got {0}")]
    Channels(usize),
    #[error("projection {projection} needs a 3-channel frame, got {channels}")]
    ProjectionInput {
        projection: ChannelProjection,
        channels: usize,
    },
    #[error("unknown projection `{0}`")]
    UnknownProjection(String),
}

/// An 8-bit raster, row-major with interleaved channels. Three channels are
/// RGB, one is luminance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
    /// Ordinal of the frame within its sequence.
    pub index: u64,
}

impl Frame {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, PreprocessError> {
        if width == 0 || height == 0 {
            return Err(PreprocessError::Empty);
        }
        if !(1..=3).contains(&channels) {
            return Err(PreprocessError::Channels(channels));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(PreprocessError::DataLength {
                width,
                height,
                channels,
                expected,
                len: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            index: 0,
        })
    }

    pub fn filled(width: usize, height: usize, pixel: &[u8]) -> Result<Self, PreprocessError> {
        let data = pixel
            .iter()
            .copied()
            .cycle()
            .take(width * height * pixel.len())
            .collect();
        Self::new(width, height, pixel.len(), data)
    }

    pub fn with_index(mut self, index: u64) -> Self {
        self.index = index;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let at = (y * self.width + x) * self.channels;
        &self.data[at..at + self.channels]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelProjection {
    IdentityRgb,
    Grayscale,
    PairRg,
    PairGb,
    PairBr,
    SingleR,
    SingleG,
    SingleB,
}

impl ChannelProjection {
    pub const ALL: [Self; 8] = [
        Self::IdentityRgb,
        Self::Grayscale,
        Self::PairRg,
        Self::PairGb,
        Self::PairBr,
        Self::SingleR,
        Self::SingleG,
        Self::SingleB,
    ];

    pub fn output_channels(self) -> usize {
        match self {
            Self::IdentityRgb => 3,
            Self::PairRg | Self::PairGb | Self::PairBr => 2,
            Self::Grayscale | Self::SingleR | Self::SingleG | Self::SingleB => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::IdentityRgb => "identity_rgb",
            Self::Grayscale => "grayscale",
            Self::PairRg => "pair_rg",
            Self::PairGb => "pair_gb",
            Self::PairBr => "pair_br",
            Self::SingleR => "single_r",
            Self::SingleG => "single_g",
            Self::SingleB => "single_b",
        }
    }

    /// Source channel indices copied by pair and single projections.
    fn copied_channels(self) -> &'static [usize] {
        match self {
            Self::IdentityRgb => &[0, 1, 2],
            Self::PairRg => &[0, 1],
            Self::PairGb => &[1, 2],
            Self::PairBr => &[2, 0],
            Self::SingleR => &[0],
            Self::SingleG => &[1],
            Self::SingleB => &[2],
            Self::Grayscale => &[],
        }
    }
}

impl fmt::Display for ChannelProjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ChannelProjection {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| PreprocessError::UnknownProjection(s.to_string()))
    }
}

/// BT.601 luma, `round(0.299 R + 0.587 G + 0.114 B)` with halves rounded up,
/// in exact integer arithmetic.
pub fn luma(r: u8, g: u8, b: u8) -> u8 {
    ((299 * u32::from(r) + 587 * u32::from(g) + 114 * u32::from(b) + 500) / 1000) as u8
}

pub fn project(frame: &Frame, projection: ChannelProjection) -> Result<Frame, PreprocessError> {
    if frame.channels != 3 {
        return Err(PreprocessError::ProjectionInput {
            projection,
            channels: frame.channels,
        });
    }
    let data: Vec<u8> = match projection {
        ChannelProjection::IdentityRgb => frame.data.clone(),
        ChannelProjection::Grayscale => frame.data.chunks_exact(3).map(|px| luma(px[0], px[1], px[2])).collect(),
        other => {
            let picks = other.copied_channels();
            frame
                .data
                .chunks_exact(3)
                .flat_map(|px| picks.iter().map(move |&c| px[c]))
                .collect()
        }
    };
    Ok(Frame {
        width: frame.width,
        height: frame.height,
        channels: projection.output_channels(),
        data,
        index: frame.index,
    })
}

/// Integer resampling taps along one axis. Weights for an output sample sum
/// to `denom`.
struct AxisTaps {
    taps: Vec<Vec<(usize, u64)>>,
    denom: u64,
}

impl AxisTaps {
    fn new(src: usize, dst: usize) -> Self {
        if src >= dst {
            // Box filter. In units of 1/dst source pixels, output o spans
            // [o*src, (o+1)*src) and source pixel i spans [i*dst, (i+1)*dst).
            let (s, d) = (src as u64, dst as u64);
            let taps = (0..d)
                .map(|o| {
                    let (lo, hi) = (o * s, (o + 1) * s);
                    (lo / d..=((hi - 1) / d).min(s - 1))
                        .filter_map(|i| {
                            let overlap = hi.min((i + 1) * d).saturating_sub(lo.max(i * d));
                            (overlap > 0).then_some((i as usize, overlap))
                        })
                        .collect()
                })
                .collect();
            Self { taps, denom: s }
        } else {
            // Nearest neighbour on the pixel-centre grid.
            let taps = (0..dst).map(|o| vec![(((2 * o + 1) * src) / (2 * dst), 1)]).collect();
            Self { taps, denom: 1 }
        }
    }
}

/// Resizes to `target_side` square. Downscaling averages each output pixel
/// over its exact source footprint; upscaling repeats the nearest source
/// pixel. Results round half up.
pub fn resize_antialiased(frame: &Frame, target_side: usize) -> Result<Frame, PreprocessError> {
    resize_to(frame, target_side, target_side)
}

pub fn resize_to(frame: &Frame, width: usize, height: usize) -> Result<Frame, PreprocessError> {
    if width == 0 || height == 0 || frame.width == 0 || frame.height == 0 {
        return Err(PreprocessError::Empty);
    }
    if width == frame.width && height == frame.height {
        return Ok(frame.clone());
    }
    let xs = AxisTaps::new(frame.width, width);
    let ys = AxisTaps::new(frame.height, height);
    let c = frame.channels;
    let den = xs.denom * ys.denom;
    let mut data = Vec::with_capacity(width * height * c);
    let mut acc = vec![0u64; c];
    for ytaps in &ys.taps {
        for xtaps in &xs.taps {
            acc.iter_mut().for_each(|a| *a = 0);
            for &(sy, wy) in ytaps {
                let row = sy * frame.width;
                for &(sx, wx) in xtaps {
                    let wgt = wy * wx;
                    let at = (row + sx) * c;
                    for (a, &v) in acc.iter_mut().zip(&frame.data[at..at + c]) {
                        *a += wgt * u64::from(v);
                    }
                }
            }
            data.extend(acc.iter().map(|&num| ((2 * num + den) / (2 * den)) as u8));
        }
    }
    Ok(Frame {
        width,
        height,
        channels: c,
        data,
        index: frame.index,
    })
}

/// Scales bytes to `[0, 1]`, dims `(height, width, channels)`.
pub fn to_tensor(frame: &Frame) -> Tensor {
    Tensor::new(
        Dims::new(frame.height, frame.width, frame.channels),
        frame.data.iter().map(|&v| f64::from(v) / 255.0).collect(),
    )
    .expect("frame data length matches its dims")
}
