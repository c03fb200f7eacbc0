use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::weights::{block_layout, ParamBlock, WeightBundle};
use super::{Activation, Dims, LayerSpec, NetworkSpec, NnError, Tensor};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Working-precision parameters of one layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    None,
    /// Kernel laid out `[ky][kx][c_in][c_out]`.
    Conv {
        kernel: Vec<f64>,
        bias: Vec<f64>,
    },
    /// Weights laid out `[in][out]`.
    Dense {
        weights: Vec<f64>,
        bias: Vec<f64>,
    },
    BatchNorm {
        gamma: Vec<f64>,
        beta: Vec<f64>,
        mean: Vec<f64>,
        var: Vec<f64>,
    },
}

impl LayerParams {
    /// Trainable vectors in a fixed order; moving statistics are excluded.
    pub fn trainable(&self) -> Vec<&Vec<f64>> {
        match self {
            Self::None => vec![],
            Self::Conv { kernel, bias } => vec![kernel, bias],
            Self::Dense { weights, bias } => vec![weights, bias],
            Self::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    pub fn trainable_mut(&mut self) -> Vec<&mut Vec<f64>> {
        match self {
            Self::None => vec![],
            Self::Conv { kernel, bias } => vec![kernel, bias],
            Self::Dense { weights, bias } => vec![weights, bias],
            Self::BatchNorm { gamma, beta, .. } => vec![gamma, beta],
        }
    }

    fn zeros_like(&self) -> Self {
        let z = |v: &Vec<f64>| vec![0.0; v.len()];
        match self {
            Self::None => Self::None,
            Self::Conv { kernel, bias } => Self::Conv {
                kernel: z(kernel),
                bias: z(bias),
            },
            Self::Dense { weights, bias } => Self::Dense {
                weights: z(weights),
                bias: z(bias),
            },
            Self::BatchNorm { gamma, beta, .. } => Self::BatchNorm {
                gamma: z(gamma),
                beta: z(beta),
                mean: vec![],
                var: vec![],
            },
        }
    }
}

/// Gradients of the batch-mean loss, shaped like the network parameters.
/// Batchnorm entries carry gamma and beta only.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerParams>,
}

impl Gradients {
    pub fn flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.trainable().into_iter().flatten().copied().collect::<Vec<_>>())
            .collect()
    }
}

/// Forward behaviour of batchnorm and dropout.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Moving statistics, dropout is identity. Deterministic.
    Infer,
    /// Batch statistics; dropout active when an RNG is supplied.
    Train,
}

/// A network spec with working parameters, ready for inference or training.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    params: Vec<LayerParams>,
}

impl Network {
    /// He-style uniform initialization, limit `sqrt(6 / fan_in)`, zero biases.
    /// Values are rounded to f32 so a fresh network survives the weight file
    /// unchanged.
    pub fn init(spec: NetworkSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut uniform = |n: usize, fan_in: usize| -> Vec<f64> {
            let limit = (6.0 / fan_in as f64).sqrt();
            (0..n).map(|_| f64::from(rng.gen_range(-limit..limit) as f32)).collect()
        };
        let params = spec
            .layers()
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let input = spec.dims_at(i);
                match *layer {
                    LayerSpec::Conv2d { filters, kernel, .. } => {
                        let fan_in = kernel * kernel * input.channels;
                        LayerParams::Conv {
                            kernel: uniform(fan_in * filters, fan_in),
                            bias: vec![0.0; filters],
                        }
                    }
                    LayerSpec::Dense { units, .. } => LayerParams::Dense {
                        weights: uniform(input.len() * units, input.len()),
                        bias: vec![0.0; units],
                    },
                    LayerSpec::BatchNorm => {
                        let c = input.channels;
                        LayerParams::BatchNorm {
                            gamma: vec![1.0; c],
                            beta: vec![0.0; c],
                            mean: vec![0.0; c],
                            var: vec![1.0; c],
                        }
                    }
                    _ => LayerParams::None,
                }
            })
            .collect();
        Self { spec, params }
    }

    /// Every parameter set to zero, moving variance one.
    pub fn zeroed(spec: NetworkSpec) -> Self {
        let mut net = Self::init(spec, 0);
        for p in &mut net.params {
            for v in p.trainable_mut() {
                v.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        net
    }

    pub fn from_bundle(spec: NetworkSpec, bundle: &WeightBundle) -> Result<Self, NnError> {
        bundle.check_against(&spec)?;
        let mut blocks = bundle.blocks().iter();
        let mut next = || -> Vec<f64> {
            blocks
                .next()
                .expect("checked layout")
                .values
                .iter()
                .map(|&v| f64::from(v))
                .collect()
        };
        let params = spec
            .layers()
            .iter()
            .map(|layer| match layer {
                LayerSpec::Conv2d { .. } => LayerParams::Conv {
                    kernel: next(),
                    bias: next(),
                },
                LayerSpec::Dense { .. } => LayerParams::Dense {
                    weights: next(),
                    bias: next(),
                },
                LayerSpec::BatchNorm => LayerParams::BatchNorm {
                    gamma: next(),
                    beta: next(),
                    mean: next(),
                    var: next(),
                },
                _ => LayerParams::None,
            })
            .collect();
        Ok(Self { spec, params })
    }

    /// Whether every parameter survives conversion to f32.
    pub fn fits_f32(&self) -> bool {
        let limit = f64::from(f32::MAX);
        self.params.iter().all(|p| match p {
            LayerParams::None => true,
            LayerParams::Conv { kernel: a, bias: b } | LayerParams::Dense { weights: a, bias: b } => {
                a.iter().chain(b).all(|v| v.abs() <= limit)
            }
            LayerParams::BatchNorm { gamma, beta, mean, var } => gamma
                .iter()
                .chain(beta)
                .chain(mean)
                .chain(var)
                .all(|v| v.abs() <= limit),
        })
    }

    /// Snapshot to single precision. Fails when a parameter does not fit.
    pub fn to_bundle(&self) -> Result<WeightBundle, NnError> {
        let f32s = |v: &Vec<f64>| v.iter().map(|&x| x as f32).collect::<Vec<f32>>();
        let mut values = Vec::new();
        for p in &self.params {
            match p {
                LayerParams::None => {}
                LayerParams::Conv { kernel, bias } => {
                    values.push(f32s(kernel));
                    values.push(f32s(bias));
                }
                LayerParams::Dense { weights, bias } => {
                    values.push(f32s(weights));
                    values.push(f32s(bias));
                }
                LayerParams::BatchNorm { gamma, beta, mean, var } => {
                    values.push(f32s(gamma));
                    values.push(f32s(beta));
                    values.push(f32s(mean));
                    values.push(var.iter().map(|&x| (x as f32).max(f32::MIN_POSITIVE)).collect());
                }
            }
        }
        let blocks = block_layout(&self.spec)
            .into_iter()
            .zip(values)
            .map(|((layer_index, kind, _), values)| ParamBlock {
                layer_index,
                kind,
                values,
            })
            .collect();
        WeightBundle::new(&self.spec, blocks)
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[LayerParams] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [LayerParams] {
        &mut self.params
    }

    /// Total trainable scalar count (moving statistics excluded).
    pub fn trainable_count(&self) -> usize {
        self.params.iter().flat_map(|p| p.trainable()).map(|v| v.len()).sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NnError> {
        if input.dims() != self.spec.input_dims() {
            return Err(NnError::InputDims {
                expected: self.spec.input_dims(),
                found: input.dims(),
            });
        }
        Ok(())
    }

    /// Inference score in `[0, 1]`.
    pub fn forward(&self, input: &Tensor) -> Result<f64, NnError> {
        let trace = self.forward_trace(input)?;
        Ok(sigmoid(trace.last().expect("non-empty trace").data()[0]))
    }

    /// Score with an explicit mode. Train mode normalizes with the statistics
    /// of this single sample and leaves dropout off.
    pub fn forward_mode(&self, input: &Tensor, mode: Mode) -> Result<f64, NnError> {
        match mode {
            Mode::Infer => self.forward(input),
            Mode::Train => {
                self.check_input(input)?;
                let pass = self.train_forward(&[input], None)?;
                Ok(sigmoid(pass.logits[0]))
            }
        }
    }

    /// Inference activations after every layer. The last entry holds the
    /// output logit (before the sigmoid).
    pub fn forward_trace(&self, input: &Tensor) -> Result<Vec<Tensor>, NnError> {
        self.check_input(input)?;
        let mut out = Vec::with_capacity(self.spec.layers().len());
        let mut current = input.data().to_vec();
        for (i, (layer, params)) in self.spec.layers().iter().zip(&self.params).enumerate() {
            let in_dims = self.spec.dims_at(i);
            let out_dims = self.spec.dims_at(i + 1);
            current = match (layer, params) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel: k,
                        activation,
                    },
                    LayerParams::Conv { kernel, bias },
                ) => {
                    let mut o = vec![0.0; out_dims.len()];
                    conv_forward(&current, in_dims, kernel, bias, *k, *filters, &mut o);
                    apply_activation(&mut o, *activation);
                    o
                }
                (LayerSpec::MaxPool2, _) => maxpool_forward(&current, in_dims, None),
                (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, beta, mean, var }) => {
                    let c = in_dims.channels;
                    let scale: Vec<f64> = (0..c).map(|j| gamma[j] / (var[j] + BN_EPSILON).sqrt()).collect();
                    current
                        .chunks_exact(c)
                        .flat_map(|px| {
                            (0..c)
                                .map(|j| (px[j] - mean[j]) * scale[j] + beta[j])
                                .collect::<Vec<_>>()
                        })
                        .collect()
                }
                (LayerSpec::Dropout { .. }, _) | (LayerSpec::Flatten, _) => current,
                (LayerSpec::Dense { units, activation }, LayerParams::Dense { weights, bias }) => {
                    let mut o = bias.clone();
                    dense_forward(&current, weights, *units, &mut o);
                    if *activation != Activation::Sigmoid {
                        apply_activation(&mut o, *activation);
                    }
                    o
                }
                _ => unreachable!("parameters follow the network spec"),
            };
            if current.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
            out.push(Tensor::new(out_dims, current.clone()).expect("chained dims"));
        }
        Ok(out)
    }

    /// Training-mode forward over a batch. Dropout runs only when `rng` is
    /// given.
    pub(crate) fn train_forward(
        &self,
        batch: &[&Tensor],
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<BatchPass, NnError> {
        for t in batch {
            self.check_input(t)?;
        }
        let n = batch.len();
        let layers = self.spec.layers();
        let mut acts: Vec<Vec<Vec<f64>>> = Vec::with_capacity(layers.len() + 1);
        let mut caches = Vec::with_capacity(layers.len());
        acts.push(batch.iter().map(|t| t.data().to_vec()).collect());

        for (i, (layer, params)) in layers.iter().zip(&self.params).enumerate() {
            let in_dims = self.spec.dims_at(i);
            let out_dims = self.spec.dims_at(i + 1);
            let input = &acts[i];
            let (output, cache): (Vec<Vec<f64>>, LayerCache) = match (layer, params) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel: k,
                        activation,
                    },
                    LayerParams::Conv { kernel, bias },
                ) => {
                    let out = input
                        .iter()
                        .map(|x| {
                            let mut o = vec![0.0; out_dims.len()];
                            conv_forward(x, in_dims, kernel, bias, *k, *filters, &mut o);
                            apply_activation(&mut o, *activation);
                            o
                        })
                        .collect();
                    (out, LayerCache::None)
                }
                (LayerSpec::MaxPool2, _) => {
                    let mut argmax = Vec::with_capacity(n);
                    let out = input
                        .iter()
                        .map(|x| {
                            let mut idx = Vec::new();
                            let o = maxpool_forward(x, in_dims, Some(&mut idx));
                            argmax.push(idx);
                            o
                        })
                        .collect();
                    (out, LayerCache::Pool { argmax })
                }
                (LayerSpec::BatchNorm, LayerParams::BatchNorm { gamma, beta, .. }) => {
                    let (out, cache) = batchnorm_train_forward(input, in_dims.channels, gamma, beta);
                    (out, cache)
                }
                (LayerSpec::Dropout { rate }, _) => match rng.as_deref_mut() {
                    Some(r) if *rate > 0.0 => {
                        let keep = 1.0 - rate;
                        let mut masks = Vec::with_capacity(n);
                        let out = input
                            .iter()
                            .map(|x| {
                                let mask: Vec<f64> = (0..x.len())
                                    .map(|_| if r.gen::<f64>() < *rate { 0.0 } else { 1.0 / keep })
                                    .collect();
                                let o = x.iter().zip(&mask).map(|(a, m)| a * m).collect();
                                masks.push(mask);
                                o
                            })
                            .collect();
                        (out, LayerCache::Dropout { masks })
                    }
                    _ => (input.clone(), LayerCache::None),
                },
                (LayerSpec::Flatten, _) => (input.clone(), LayerCache::None),
                (LayerSpec::Dense { units, activation }, LayerParams::Dense { weights, bias }) => {
                    let out = input
                        .iter()
                        .map(|x| {
                            let mut o = bias.clone();
                            dense_forward(x, weights, *units, &mut o);
                            if *activation != Activation::Sigmoid {
                                apply_activation(&mut o, *activation);
                            }
                            o
                        })
                        .collect();
                    (out, LayerCache::None)
                }
                _ => unreachable!("parameters follow the network spec"),
            };
            if output.iter().flatten().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: i });
            }
            acts.push(output);
            caches.push(cache);
        }
        let logits = acts.last().expect("layers").iter().map(|o| o[0]).collect();
        Ok(BatchPass { acts, caches, logits })
    }

    /// Mean binary cross-entropy over the batch, in training mode without
    /// dropout.
    pub fn batch_loss(&self, batch: &[&Tensor], labels: &[f64]) -> Result<f64, NnError> {
        let pass = self.train_forward(batch, None)?;
        Ok(mean_bce(&pass.logits, labels))
    }

    /// Batch-mean BCE loss and its gradient with respect to every trainable
    /// parameter, training-mode batchnorm, dropout off.
    pub fn loss_and_gradients(&self, batch: &[&Tensor], labels: &[f64]) -> Result<(f64, Gradients), NnError> {
        let pass = self.train_forward(batch, None)?;
        let loss = mean_bce(&pass.logits, labels);
        Ok((loss, self.backward(&pass, labels)))
    }

    pub(crate) fn backward(&self, pass: &BatchPass, labels: &[f64]) -> Gradients {
        let n = labels.len();
        let layers = self.spec.layers();
        let mut grads: Vec<LayerParams> = self.params.iter().map(LayerParams::zeros_like).collect();
        // d(loss)/d(logit) for the mean BCE
        let mut delta: Vec<Vec<f64>> = pass
            .logits
            .iter()
            .zip(labels)
            .map(|(&z, &y)| vec![(sigmoid(z) - y) / n as f64])
            .collect();

        for i in (0..layers.len()).rev() {
            let in_dims = self.spec.dims_at(i);
            let input = &pass.acts[i];
            let output = &pass.acts[i + 1];
            let need_input_grad = i > 0;
            delta = match (&layers[i], &self.params[i], &mut grads[i], &pass.caches[i]) {
                (
                    LayerSpec::Conv2d {
                        filters,
                        kernel: k,
                        activation,
                    },
                    LayerParams::Conv { kernel, .. },
                    LayerParams::Conv { kernel: dk, bias: db },
                    _,
                ) => {
                    let mut next = Vec::with_capacity(n);
                    for s in 0..n {
                        let mut dpre = delta[s].clone();
                        activation_backward(&mut dpre, &output[s], *activation);
                        let mut dinp = if need_input_grad {
                            vec![0.0; in_dims.len()]
                        } else {
                            Vec::new()
                        };
                        conv_backward(
                            &input[s],
                            in_dims,
                            kernel,
                            *k,
                            *filters,
                            &dpre,
                            dk,
                            db,
                            need_input_grad.then_some(dinp.as_mut_slice()),
                        );
                        next.push(dinp);
                    }
                    next
                }
                (LayerSpec::MaxPool2, _, _, LayerCache::Pool { argmax }) => delta
                    .iter()
                    .zip(argmax)
                    .map(|(d, idx)| {
                        let mut g = vec![0.0; in_dims.len()];
                        for (&src, &v) in idx.iter().zip(d) {
                            g[src as usize] += v;
                        }
                        g
                    })
                    .collect(),
                (
                    LayerSpec::BatchNorm,
                    LayerParams::BatchNorm { gamma, .. },
                    LayerParams::BatchNorm {
                        gamma: dgamma,
                        beta: dbeta,
                        ..
                    },
                    LayerCache::BatchNorm { xhat, inv_std, .. },
                ) => batchnorm_backward(&delta, xhat, inv_std, gamma, in_dims.channels, dgamma, dbeta),
                (LayerSpec::Dropout { .. }, _, _, LayerCache::Dropout { masks }) => delta
                    .iter()
                    .zip(masks)
                    .map(|(d, m)| d.iter().zip(m).map(|(a, b)| a * b).collect())
                    .collect(),
                (LayerSpec::Dropout { .. }, ..) | (LayerSpec::Flatten, ..) => delta,
                (
                    LayerSpec::Dense { units, activation },
                    LayerParams::Dense { weights, .. },
                    LayerParams::Dense { weights: dw, bias: db },
                    _,
                ) => {
                    let mut next = Vec::with_capacity(n);
                    for s in 0..n {
                        let mut dz = delta[s].clone();
                        if *activation != Activation::Sigmoid {
                            activation_backward(&mut dz, &output[s], *activation);
                        }
                        next.push(dense_backward(&input[s], weights, *units, &dz, dw, db));
                    }
                    next
                }
                _ => unreachable!("caches follow the network spec"),
            };
        }
        Gradients { layers: grads }
    }

    /// Folds batch statistics from a training pass into the moving averages.
    pub(crate) fn update_moving_stats(&mut self, pass: &BatchPass) {
        for (p, cache) in self.params.iter_mut().zip(&pass.caches) {
            if let (
                LayerParams::BatchNorm { mean, var, .. },
                LayerCache::BatchNorm {
                    batch_mean, batch_var, ..
                },
            ) = (p, cache)
            {
                for j in 0..mean.len() {
                    mean[j] = BN_MOMENTUM * mean[j] + (1.0 - BN_MOMENTUM) * batch_mean[j];
                    var[j] = BN_MOMENTUM * var[j] + (1.0 - BN_MOMENTUM) * batch_var[j];
                }
            }
        }
    }
}

pub(crate) struct BatchPass {
    acts: Vec<Vec<Vec<f64>>>,
    caches: Vec<LayerCache>,
    pub(crate) logits: Vec<f64>,
}

enum LayerCache {
    None,
    Pool {
        argmax: Vec<Vec<u32>>,
    },
    BatchNorm {
        xhat: Vec<Vec<f64>>,
        inv_std: Vec<f64>,
        batch_mean: Vec<f64>,
        batch_var: Vec<f64>,
    },
    Dropout {
        masks: Vec<Vec<f64>>,
    },
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(logit)` against `label`, in the
/// overflow-free softplus form.
pub fn bce_from_logit(logit: f64, label: f64) -> f64 {
    logit.max(0.0) - logit * label + (-logit.abs()).exp().ln_1p()
}

pub(crate) fn mean_bce(logits: &[f64], labels: &[f64]) -> f64 {
    logits
        .iter()
        .zip(labels)
        .map(|(&z, &y)| bce_from_logit(z, y))
        .sum::<f64>()
        / logits.len() as f64
}

fn apply_activation(values: &mut [f64], activation: Activation) {
    match activation {
        Activation::Relu => values.iter_mut().for_each(|v| *v = v.max(0.0)),
        Activation::Sigmoid => values.iter_mut().for_each(|v| *v = sigmoid(*v)),
        Activation::None => {}
    }
}

fn activation_backward(grad: &mut [f64], output: &[f64], activation: Activation) {
    match activation {
        Activation::Relu => grad.iter_mut().zip(output).for_each(|(g, &o)| {
            if o <= 0.0 {
                *g = 0.0
            }
        }),
        Activation::Sigmoid => grad.iter_mut().zip(output).for_each(|(g, &o)| *g *= o * (1.0 - o)),
        Activation::None => {}
    }
}

fn conv_forward(input: &[f64], dims: Dims, kernel: &[f64], bias: &[f64], k: usize, c_out: usize, out: &mut [f64]) {
    let (h, w, c_in) = (dims.height, dims.width, dims.channels);
    let pad = k / 2;
    for y in 0..h {
        for x in 0..w {
            let o = &mut out[(y * w + x) * c_out..][..c_out];
            o.copy_from_slice(bias);
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < w) else {
                        continue;
                    };
                    let px = &input[(iy * w + ix) * c_in..][..c_in];
                    let wbase = (ky * k + kx) * c_in * c_out;
                    for (ci, &v) in px.iter().enumerate() {
                        if v == 0.0 {
                            continue;
                        }
                        let row = &kernel[wbase + ci * c_out..][..c_out];
                        for (acc, &wv) in o.iter_mut().zip(row) {
                            *acc += v * wv;
                        }
                    }
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    input: &[f64],
    dims: Dims,
    kernel: &[f64],
    k: usize,
    c_out: usize,
    dpre: &[f64],
    dkernel: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let (h, w, c_in) = (dims.height, dims.width, dims.channels);
    let pad = k / 2;
    for y in 0..h {
        for x in 0..w {
            let d = &dpre[(y * w + x) * c_out..][..c_out];
            if d.iter().all(|&v| v == 0.0) {
                continue;
            }
            for (b, &g) in dbias.iter_mut().zip(d) {
                *b += g;
            }
            for ky in 0..k {
                let Some(iy) = (y + ky).checked_sub(pad).filter(|&v| v < h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = (x + kx).checked_sub(pad).filter(|&v| v < w) else {
                        continue;
                    };
                    let at = (iy * w + ix) * c_in;
                    let wbase = (ky * k + kx) * c_in * c_out;
                    for ci in 0..c_in {
                        let off = wbase + ci * c_out;
                        let v = input[at + ci];
                        if v != 0.0 {
                            for (gk, &g) in dkernel[off..off + c_out].iter_mut().zip(d) {
                                *gk += v * g;
                            }
                        }
                        if let Some(di) = dinput.as_deref_mut() {
                            let row = &kernel[off..off + c_out];
                            di[at + ci] += row.iter().zip(d).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
            }
        }
    }
}

fn maxpool_forward(input: &[f64], dims: Dims, mut argmax: Option<&mut Vec<u32>>) -> Vec<f64> {
    let (h, w, c) = (dims.height, dims.width, dims.channels);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(oh * ow * c);
    if let Some(a) = argmax.as_deref_mut() {
        a.reserve(oh * ow * c);
    }
    for y in 0..oh {
        for x in 0..ow {
            for ch in 0..c {
                let mut best = f64::NEG_INFINITY;
                let mut best_at = 0;
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let at = ((2 * y + dy) * w + 2 * x + dx) * c + ch;
                    if input[at] > best {
                        best = input[at];
                        best_at = at;
                    }
                }
                out.push(best);
                if let Some(a) = argmax.as_deref_mut() {
                    a.push(best_at as u32);
                }
            }
        }
    }
    out
}

fn batchnorm_train_forward(input: &[Vec<f64>], c: usize, gamma: &[f64], beta: &[f64]) -> (Vec<Vec<f64>>, LayerCache) {
    let count = (input.len() * input[0].len() / c) as f64;
    let mut mean = vec![0.0; c];
    for x in input {
        for px in x.chunks_exact(c) {
            for j in 0..c {
                mean[j] += px[j];
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c];
    for x in input {
        for px in x.chunks_exact(c) {
            for j in 0..c {
                let d = px[j] - mean[j];
                var[j] += d * d;
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPSILON).sqrt()).collect();

    let mut xhat = Vec::with_capacity(input.len());
    let mut out = Vec::with_capacity(input.len());
    for x in input {
        let mut xh = Vec::with_capacity(x.len());
        let mut o = Vec::with_capacity(x.len());
        for px in x.chunks_exact(c) {
            for j in 0..c {
                let v = (px[j] - mean[j]) * inv_std[j];
                xh.push(v);
                o.push(gamma[j] * v + beta[j]);
            }
        }
        xhat.push(xh);
        out.push(o);
    }
    (
        out,
        LayerCache::BatchNorm {
            xhat,
            inv_std,
            batch_mean: mean,
            batch_var: var,
        },
    )
}

fn batchnorm_backward(
    delta: &[Vec<f64>],
    xhat: &[Vec<f64>],
    inv_std: &[f64],
    gamma: &[f64],
    c: usize,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<Vec<f64>> {
    let count = (delta.len() * delta[0].len() / c) as f64;
    let mut sum_dy = vec![0.0; c];
    let mut sum_dy_xhat = vec![0.0; c];
    for (d, xh) in delta.iter().zip(xhat) {
        for (dp, xp) in d.chunks_exact(c).zip(xh.chunks_exact(c)) {
            for j in 0..c {
                sum_dy[j] += dp[j];
                sum_dy_xhat[j] += dp[j] * xp[j];
            }
        }
    }
    for j in 0..c {
        dgamma[j] += sum_dy_xhat[j];
        dbeta[j] += sum_dy[j];
    }
    delta
        .iter()
        .zip(xhat)
        .map(|(d, xh)| {
            let mut g = Vec::with_capacity(d.len());
            for (dp, xp) in d.chunks_exact(c).zip(xh.chunks_exact(c)) {
                for j in 0..c {
                    let scale = gamma[j] * inv_std[j] / count;
                    g.push(scale * (count * dp[j] - sum_dy[j] - xp[j] * sum_dy_xhat[j]));
                }
            }
            g
        })
        .collect()
}

fn dense_forward(input: &[f64], weights: &[f64], units: usize, out: &mut [f64]) {
    for (i, &v) in input.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let row = &weights[i * units..][..units];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += v * wv;
        }
    }
}

fn dense_backward(
    input: &[f64],
    weights: &[f64],
    units: usize,
    dz: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
) -> Vec<f64> {
    for (b, &g) in dbias.iter_mut().zip(dz) {
        *b += g;
    }
    let mut dinput = Vec::with_capacity(input.len());
    for (i, &v) in input.iter().enumerate() {
        let off = i * units;
        if v != 0.0 {
            for (gw, &g) in dweights[off..off + units].iter_mut().zip(dz) {
                *gw += v * g;
            }
        }
        dinput.push(weights[off..off + units].iter().zip(dz).map(|(a, b)| a * b).sum());
    }
    dinput
}
