use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dims, NnError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerSpec {
    /// Stride-1 convolution with SAME zero padding.
    #[serde(rename = "conv2d")]
    Conv2d {
        filters: usize,
        kernel: usize,
        activation: Activation,
    },
    /// 2x2 max pooling, stride 2, floor division of odd sides.
    #[serde(rename = "maxpool2")]
    MaxPool2,
    #[serde(rename = "batchnorm")]
    BatchNorm,
    #[serde(rename = "dropout")]
    Dropout { rate: f64 },
    #[serde(rename = "flatten")]
    Flatten,
    #[serde(rename = "dense")]
    Dense { units: usize, activation: Activation },
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize) -> Self {
        Self::Conv2d {
            filters,
            kernel,
            activation: Activation::Relu,
        }
    }

    pub fn dense(units: usize) -> Self {
        Self::Dense {
            units,
            activation: Activation::Relu,
        }
    }

    pub fn sigmoid_output() -> Self {
        Self::Dense {
            units: 1,
            activation: Activation::Sigmoid,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Conv2d { .. } => "conv2d",
            Self::MaxPool2 => "maxpool2",
            Self::BatchNorm => "batchnorm",
            Self::Dropout { .. } => "dropout",
            Self::Flatten => "flatten",
            Self::Dense { .. } => "dense",
        }
    }

    /// Output dims for the given input dims, or a reason the layer cannot
    /// accept them.
    pub fn output_dims(&self, input: Dims) -> Result<Dims, String> {
        match *self {
            Self::Conv2d { filters, kernel, .. } => {
                if filters == 0 {
                    return Err("conv2d needs at least one filter".into());
                }
                if kernel == 0 || kernel % 2 == 0 {
                    return Err(format!("conv2d kernel must be positive and odd, got {kernel}"));
                }
                Ok(Dims::new(input.height, input.width, filters))
            }
            Self::MaxPool2 => {
                let (h, w) = (input.height / 2, input.width / 2);
                if h == 0 || w == 0 {
                    return Err(format!("maxpool2 cannot shrink {input}"));
                }
                Ok(Dims::new(h, w, input.channels))
            }
            Self::BatchNorm => Ok(input),
            Self::Dropout { rate } => {
                if !(0.0..1.0).contains(&rate) {
                    return Err(format!("dropout rate {rate} outside [0, 1)"));
                }
                Ok(input)
            }
            Self::Flatten => Ok(Dims::flat(input.len())),
            Self::Dense { units, .. } => {
                if units == 0 {
                    return Err("dense needs at least one unit".into());
                }
                Ok(Dims::flat(units))
            }
        }
    }

    /// Parameter count given the layer's input dims. Batchnorm counts gamma,
    /// beta and both moving statistics.
    pub fn param_count(&self, input: Dims) -> usize {
        match *self {
            Self::Conv2d { filters, kernel, .. } => (kernel * kernel * input.channels + 1) * filters,
            Self::BatchNorm => 4 * input.channels,
            Self::Dense { units, .. } => (input.len() + 1) * units,
            Self::MaxPool2 | Self::Dropout { .. } | Self::Flatten => 0,
        }
    }
}

/// A validated feed-forward architecture ending in a single sigmoid unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetworkSpec", into = "RawNetworkSpec")]
pub struct NetworkSpec {
    input_dims: Dims,
    layers: Vec<LayerSpec>,
    chain: Vec<Dims>,
}

#[derive(Serialize, Deserialize)]
struct RawNetworkSpec {
    input_dims: Dims,
    layers: Vec<LayerSpec>,
}

impl TryFrom<RawNetworkSpec> for NetworkSpec {
    type Error = NnError;

    fn try_from(raw: RawNetworkSpec) -> Result<Self, Self::Error> {
        NetworkSpec::new(raw.input_dims, raw.layers)
    }
}

impl From<NetworkSpec> for RawNetworkSpec {
    fn from(spec: NetworkSpec) -> Self {
        RawNetworkSpec {
            input_dims: spec.input_dims,
            layers: spec.layers,
        }
    }
}

impl NetworkSpec {
    pub fn new(input_dims: Dims, layers: Vec<LayerSpec>) -> Result<Self, NnError> {
        let invalid = |layer: usize, reason: String| NnError::InvalidSpec { layer, reason };
        if input_dims.is_empty() {
            return Err(invalid(0, format!("empty input dims {input_dims}")));
        }
        let Some(flatten_at) = layers.iter().position(|l| matches!(l, LayerSpec::Flatten)) else {
            return Err(invalid(layers.len(), "network has no flatten layer".into()));
        };
        if let Some(second) = layers[flatten_at + 1..]
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten))
        {
            return Err(invalid(flatten_at + 1 + second, "second flatten layer".into()));
        }

        let last = layers.len() - 1;
        let mut chain = Vec::with_capacity(layers.len() + 1);
        chain.push(input_dims);
        let mut dims = input_dims;
        for (i, layer) in layers.iter().enumerate() {
            match layer {
                LayerSpec::Dense { .. } if i < flatten_at => {
                    return Err(invalid(i, "dense layer before flatten".into()));
                }
                LayerSpec::Conv2d { .. } | LayerSpec::MaxPool2 | LayerSpec::BatchNorm if i > flatten_at => {
                    return Err(invalid(i, format!("{} after flatten", layer.name())));
                }
                LayerSpec::Conv2d {
                    activation: Activation::Sigmoid,
                    ..
                } => return Err(invalid(i, "sigmoid is reserved for the output unit".into())),
                LayerSpec::Dense {
                    activation: Activation::Sigmoid,
                    ..
                } if i != last => return Err(invalid(i, "sigmoid is reserved for the output unit".into())),
                _ => {}
            }
            dims = layer.output_dims(dims).map_err(|reason| invalid(i, reason))?;
            chain.push(dims);
        }
        match layers[last] {
            LayerSpec::Dense {
                units: 1,
                activation: Activation::Sigmoid,
            } => {}
            _ => return Err(invalid(last, "final layer must be a single sigmoid dense unit".into())),
        }

        Ok(Self {
            input_dims,
            layers,
            chain,
        })
    }

    pub fn input_dims(&self) -> Dims {
        self.input_dims
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input dims of layer `i`; index `layers().len()` is the network output.
    pub fn dims_at(&self, i: usize) -> Dims {
        self.chain[i]
    }

    pub fn dims_chain(&self) -> &[Dims] {
        &self.chain
    }

    /// Width of the vector produced by the flatten layer.
    pub fn flatten_width(&self) -> usize {
        let at = self
            .layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Flatten))
            .expect("validated spec has a flatten layer");
        self.chain[at + 1].channels
    }

    pub fn count_params(&self) -> ParamCount {
        count_layer_params(self.input_dims, &self.layers)
    }

    /// First eight bytes of a SHA-256 over a canonical binary encoding.
    pub fn checksum(&self) -> [u8; 8] {
        let mut h = Sha256::new();
        h.update(b"CGSPEC1");
        for d in [self.input_dims.height, self.input_dims.width, self.input_dims.channels] {
            h.update((d as u64).to_le_bytes());
        }
        for layer in &self.layers {
            match *layer {
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    activation,
                } => {
                    h.update([0u8, activation_code(activation)]);
                    h.update((filters as u64).to_le_bytes());
                    h.update((kernel as u64).to_le_bytes());
                }
                LayerSpec::MaxPool2 => h.update([1u8]),
                LayerSpec::BatchNorm => h.update([2u8]),
                LayerSpec::Dropout { rate } => {
                    h.update([3u8]);
                    h.update(rate.to_le_bytes());
                }
                LayerSpec::Flatten => h.update([4u8]),
                LayerSpec::Dense { units, activation } => {
                    h.update([5u8, activation_code(activation)]);
                    h.update((units as u64).to_le_bytes());
                }
            }
        }
        let digest = h.finalize();
        let mut out = [0u8; 8];
        out.copy_from_slice(&digest[..8]);
        out
    }
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::None => 2,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub total: usize,
    pub per_layer: Vec<usize>,
}

/// Counts parameters for a layer list without validating it as a network.
pub fn count_layer_params(input: Dims, layers: &[LayerSpec]) -> ParamCount {
    let mut dims = input;
    let mut per_layer = Vec::with_capacity(layers.len());
    for layer in layers {
        per_layer.push(layer.param_count(dims));
        dims = layer.output_dims(dims).unwrap_or(dims);
    }
    ParamCount {
        total: per_layer.iter().sum(),
        per_layer,
    }
}

/// Block widths for the five conv/pool/batchnorm groups and the dense head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockArch {
    pub conv_filters: [usize; 5],
    pub conv_kernels: [usize; 5],
    pub dense_units: [usize; 2],
    pub dropout: f64,
}

impl Default for BlockArch {
    fn default() -> Self {
        Self {
            conv_filters: [32, 64, 128, 256, 64],
            conv_kernels: [5, 3, 3, 3, 3],
            dense_units: [128, 64],
            dropout: 0.2,
        }
    }
}

impl BlockArch {
    /// Same block structure at a quarter of the widths, for training on a
    /// laptop CPU in minutes.
    pub fn desk() -> Self {
        Self {
            conv_filters: [8, 16, 32, 32, 16],
            conv_kernels: [5, 3, 3, 3, 3],
            dense_units: [32, 16],
            dropout: 0.2,
        }
    }

    pub fn build(&self, channels: usize, input_side: usize) -> Result<NetworkSpec, NnError> {
        if input_side < 32 {
            return Err(NnError::InvalidSpec {
                layer: 0,
                reason: format!("input side {input_side} is below 32, five 2x pools need at least 32"),
            });
        }
        if channels != 1 && channels != 3 {
            return Err(NnError::InvalidSpec {
                layer: 0,
                reason: format!("first conv takes 1 or 3 channels, got {channels}"),
            });
        }
        let mut layers = Vec::with_capacity(21);
        for (&filters, &kernel) in self.conv_filters.iter().zip(&self.conv_kernels) {
            layers.push(LayerSpec::conv(filters, kernel));
            layers.push(LayerSpec::MaxPool2);
            layers.push(LayerSpec::BatchNorm);
        }
        layers.push(LayerSpec::Dropout { rate: self.dropout });
        layers.push(LayerSpec::Flatten);
        layers.push(LayerSpec::dense(self.dense_units[0]));
        layers.push(LayerSpec::Dropout { rate: self.dropout });
        layers.push(LayerSpec::dense(self.dense_units[1]));
        layers.push(LayerSpec::sigmoid_output());
        NetworkSpec::new(Dims::new(input_side, input_side, channels), layers)
    }
}

/// The five-block classifier with a 128/64/1 dense head. `channels` is 3 for
/// the color model and 1 for the luminance model.
pub fn build_paper_model(channels: usize, input_side: usize) -> Result<NetworkSpec, NnError> {
    BlockArch::default().build(channels, input_side)
}
