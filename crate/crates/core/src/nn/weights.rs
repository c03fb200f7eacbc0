//! Persisted parameters and the `CGW1` weight file.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CGW1" | spec checksum: [u8; 8] | block*
//! block = layer_index: u32 | block_kind: u8 | element_count: u64 | f32 * element_count
//! ```
//!
//! Blocks appear in layer order. Conv layers carry kernel then bias, dense
//! layers weights then bias, batchnorm layers gamma, beta, moving mean and
//! moving variance.

use serde::Serialize;

use super::{LayerSpec, NetworkSpec, NnError};

pub const MAGIC: &[u8; 4] = b"CGW1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[repr(u8)]
pub enum BlockKind {
    ConvKernel = 0,
    ConvBias = 1,
    DenseWeights = 2,
    DenseBias = 3,
    BnGamma = 4,
    BnBeta = 5,
    BnMovingMean = 6,
    BnMovingVar = 7,
}

impl BlockKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        use BlockKind::*;
        Some(match v {
            0 => ConvKernel,
            1 => ConvBias,
            2 => DenseWeights,
            3 => DenseBias,
            4 => BnGamma,
            5 => BnBeta,
            6 => BnMovingMean,
            7 => BnMovingVar,
            _ => return None,
        })
    }

    /// Whether gradient descent updates this block.
    pub fn is_trainable(self) -> bool {
        !matches!(self, Self::BnMovingMean | Self::BnMovingVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub layer_index: u32,
    pub kind: BlockKind,
    pub values: Vec<f32>,
}

/// Expected `(layer_index, kind, element_count)` for every block of `spec`.
pub fn block_layout(spec: &NetworkSpec) -> Vec<(u32, BlockKind, usize)> {
    let mut out = Vec::new();
    for (i, layer) in spec.layers().iter().enumerate() {
        let input = spec.dims_at(i);
        let idx = i as u32;
        match *layer {
            LayerSpec::Conv2d { filters, kernel, .. } => {
                out.push((idx, BlockKind::ConvKernel, kernel * kernel * input.channels * filters));
                out.push((idx, BlockKind::ConvBias, filters));
            }
            LayerSpec::Dense { units, .. } => {
                out.push((idx, BlockKind::DenseWeights, input.len() * units));
                out.push((idx, BlockKind::DenseBias, units));
            }
            LayerSpec::BatchNorm => {
                let c = input.channels;
                out.push((idx, BlockKind::BnGamma, c));
                out.push((idx, BlockKind::BnBeta, c));
                out.push((idx, BlockKind::BnMovingMean, c));
                out.push((idx, BlockKind::BnMovingVar, c));
            }
            LayerSpec::MaxPool2 | LayerSpec::Dropout { .. } | LayerSpec::Flatten => {}
        }
    }
    out
}

/// Trained parameters for one [`NetworkSpec`], tagged with its checksum.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBundle {
    spec_hash: [u8; 8],
    blocks: Vec<ParamBlock>,
}

impl WeightBundle {
    pub fn new(spec: &NetworkSpec, blocks: Vec<ParamBlock>) -> Result<Self, NnError> {
        let bundle = Self {
            spec_hash: spec.checksum(),
            blocks,
        };
        bundle.check_against(spec)?;
        Ok(bundle)
    }

    pub fn spec_hash(&self) -> [u8; 8] {
        self.spec_hash
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.values.len()).sum()
    }

    /// Verifies block shapes, the checksum and moving-variance positivity.
    /// Shape errors name the first offending layer.
    pub fn check_against(&self, spec: &NetworkSpec) -> Result<(), NnError> {
        let layout = block_layout(spec);
        for (i, &(layer, kind, count)) in layout.iter().enumerate() {
            let Some(block) = self.blocks.get(i) else {
                return Err(NnError::LayerMismatch {
                    layer: layer as usize,
                    detail: format!("missing {kind:?} block"),
                });
            };
            if block.layer_index != layer || block.kind != kind || block.values.len() != count {
                return Err(NnError::LayerMismatch {
                    layer: layer as usize,
                    detail: format!(
                        "expected {kind:?} with {count} values, found {:?} for layer {} with {}",
                        block.kind,
                        block.layer_index,
                        block.values.len()
                    ),
                });
            }
        }
        if let Some(extra) = self.blocks.get(layout.len()) {
            return Err(NnError::LayerMismatch {
                layer: extra.layer_index as usize,
                detail: "unexpected extra block".into(),
            });
        }
        for block in &self.blocks {
            if block.values.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFiniteWeights {
                    layer: block.layer_index as usize,
                });
            }
            if block.kind == BlockKind::BnMovingVar && block.values.iter().any(|&v| v <= 0.0) {
                return Err(NnError::NonPositiveVariance {
                    layer: block.layer_index as usize,
                });
            }
        }
        if self.spec_hash != spec.checksum() {
            return Err(NnError::SpecHashMismatch);
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let payload: usize = self.blocks.iter().map(|b| 13 + 4 * b.values.len()).sum();
        let mut out = Vec::with_capacity(12 + payload);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.spec_hash);
        for block in &self.blocks {
            out.extend_from_slice(&block.layer_index.to_le_bytes());
            out.push(block.kind as u8);
            out.extend_from_slice(&(block.values.len() as u64).to_le_bytes());
            for v in &block.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    /// Parses a weight file and checks it against `spec`.
    pub fn from_bytes(bytes: &[u8], spec: &NetworkSpec) -> Result<Self, NnError> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(NnError::BadMagic);
        }
        let mut spec_hash = [0u8; 8];
        spec_hash.copy_from_slice(bytes.get(4..12).ok_or(NnError::TruncatedHeader)?);
        let mut pos = 12;
        let mut blocks = Vec::new();

        for (layer, kind, count) in block_layout(spec) {
            let layer_usize = layer as usize;
            let header = bytes
                .get(pos..pos + 13)
                .ok_or(NnError::TruncatedBlock { layer: layer_usize })?;
            let found_layer = u32::from_le_bytes(header[..4].try_into().unwrap());
            let found_kind = BlockKind::from_u8(header[4]);
            let found_count = u64::from_le_bytes(header[5..13].try_into().unwrap());
            if found_layer != layer || found_kind != Some(kind) || found_count != count as u64 {
                return Err(NnError::LayerMismatch {
                    layer: layer_usize,
                    detail: format!(
                        "expected {kind:?} with {count} values, found kind byte {} for layer {found_layer} with {found_count}",
                        header[4]
                    ),
                });
            }
            pos += 13;
            let raw = bytes
                .get(pos..pos + 4 * count)
                .ok_or(NnError::TruncatedBlock { layer: layer_usize })?;
            pos += 4 * count;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blocks.push(ParamBlock {
                layer_index: layer,
                kind,
                values,
            });
        }
        if pos != bytes.len() {
            return Err(NnError::TrailingBytes {
                count: bytes.len() - pos,
            });
        }

        let bundle = Self { spec_hash, blocks };
        bundle.check_against(spec)?;
        Ok(bundle)
    }
}

pub fn save_weights(bundle: &WeightBundle) -> Vec<u8> {
    bundle.to_bytes()
}

pub fn load_weights(bytes: &[u8], spec: &NetworkSpec) -> Result<WeightBundle, NnError> {
    WeightBundle::from_bytes(bytes, spec)
}
