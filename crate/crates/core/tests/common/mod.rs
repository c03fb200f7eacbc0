//! Oracles and fixtures shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use colorcascade::cascade::StageModel;
use colorcascade::nn::*;
use colorcascade::preprocess::Frame;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    let side = rng.gen_range(4..=10);
    let channels = rng.gen_range(1..=3);
    let mut layers = Vec::new();
    let mut s = side;
    for _ in 0..rng.gen_range(1..=2) {
        layers.push(LayerSpec::Conv2d {
            filters: rng.gen_range(1..=4),
            kernel: [1, 3, 5][rng.gen_range(0..3)],
            activation: if rng.gen_bool(0.8) {
                Activation::Relu
            } else {
                Activation::None
            },
        });
        if s >= 2 && rng.gen_bool(0.7) {
            layers.push(LayerSpec::MaxPool2);
            s /= 2;
        }
        if rng.gen_bool(0.7) {
            layers.push(LayerSpec::BatchNorm);
        }
    }
    layers.push(LayerSpec::Dropout { rate: 0.2 });
    layers.push(LayerSpec::Flatten);
    for _ in 0..rng.gen_range(0..=2) {
        layers.push(LayerSpec::dense(rng.gen_range(1..=6)));
    }
    layers.push(LayerSpec::sigmoid_output());
    NetworkSpec::new(Dims::new(side, side, channels), layers).unwrap()
}

pub fn randomized_network(spec: NetworkSpec, rng: &mut ChaCha8Rng) -> Network {
    let mut net = Network::init(spec, rng.gen());
    for p in net.params_mut() {
        match p {
            LayerParams::BatchNorm { gamma, beta, mean, var } => {
                gamma.iter_mut().for_each(|v| *v = rng.gen_range(0.5..1.5));
                beta.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
                mean.iter_mut().for_each(|v| *v = rng.gen_range(-0.3..0.3));
                var.iter_mut().for_each(|v| *v = rng.gen_range(0.5..2.0));
            }
            other => {
                for v in other.trainable_mut() {
                    v.iter_mut().for_each(|x| *x += rng.gen_range(-0.1..0.1));
                }
            }
        }
    }
    Network::from_bundle(net.spec().clone(), &net.to_bundle().unwrap()).unwrap()
}

pub fn random_input(dims: Dims, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(dims, (0..dims.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

/// A small network containing every layer kind, at most 5k parameters.
pub fn all_kinds_spec(rng: &mut ChaCha8Rng) -> NetworkSpec {
    loop {
        let side = rng.gen_range(6..=10);
        let channels = rng.gen_range(1..=3);
        let layers = vec![
            LayerSpec::conv(rng.gen_range(2..=4), [3, 5][rng.gen_range(0..2)]),
            LayerSpec::MaxPool2,
            LayerSpec::BatchNorm,
            LayerSpec::conv(rng.gen_range(2..=5), 3),
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Flatten,
            LayerSpec::dense(rng.gen_range(3..=8)),
            LayerSpec::Dropout { rate: 0.1 },
            LayerSpec::sigmoid_output(),
        ];
        let spec = NetworkSpec::new(Dims::new(side, side, channels), layers).unwrap();
        if spec.count_params().total <= 5000 {
            return spec;
        }
    }
}

/// Majority vote straight from its definition: count the positives among
/// frames within `window / 2` of `i`; a lone frame keeps its label, otherwise
/// at least `ceil(window / 2)` positives are needed, or all of them when the
/// window holds fewer frames than that.
pub fn majority_oracle(labels: &[bool], window: usize) -> Vec<bool> {
    let half = window / 2;
    let need = window.div_ceil(2);
    (0..labels.len())
        .map(|i| {
            let members: Vec<bool> = (0..labels.len())
                .filter(|&j| j.abs_diff(i) <= half)
                .map(|j| labels[j])
                .collect();
            if members.len() == 1 {
                return labels[i];
            }
            let votes = members.iter().filter(|&&l| l).count();
            votes >= need.min(members.len())
        })
        .collect()
}

pub fn validate_oracle(c: &[bool], l: &[bool], radius: usize) -> Vec<bool> {
    (0..c.len())
        .map(|i| c[i] && (0..l.len()).any(|j| j.abs_diff(i) <= radius && l[j]))
        .collect()
}

pub fn bits(pattern: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| (pattern >> i) & 1 == 1).collect()
}

#[derive(Debug, Default)]
pub struct ExhaustiveTally {
    pub cases: u64,
    pub mismatches: u64,
    pub first_mismatch: Option<String>,
}

/// Compares majority vote, validation and their composition with the
/// oracles for every C and L pattern up to `max_len` frames.
pub fn exhaustive_temporal(max_len: usize, windows: &[usize], radii: &[usize]) -> ExhaustiveTally {
    use colorcascade::temporal::{majority_labels, pipeline_video, validate_labels, PredictionTrack};
    let mut tally = ExhaustiveTally::default();
    let miss = |tally: &mut ExhaustiveTally, what: String| {
        tally.mismatches += 1;
        tally.first_mismatch.get_or_insert(what);
    };
    for n in 1..=max_len {
        let patterns = 1u32 << n;
        for pc in 0..patterns {
            let c = bits(pc, n);
            for &w in windows {
                tally.cases += 1;
                if majority_labels(&c, w).unwrap() != majority_oracle(&c, w) {
                    miss(&mut tally, format!("majority {c:?} w={w}"));
                }
            }
            let tc = PredictionTrack::from_labels(c.clone(), 1.0).unwrap();
            for pl in 0..patterns {
                let l = bits(pl, n);
                let tl = PredictionTrack::from_labels(l.clone(), 1.0).unwrap();
                for &r in radii {
                    tally.cases += 1;
                    if validate_labels(&c, &l, r).unwrap() != validate_oracle(&c, &l, r) {
                        miss(&mut tally, format!("validate {c:?} {l:?} r={r}"));
                    }
                    for &w in windows {
                        tally.cases += 1;
                        let got = pipeline_video(&tc, &tl, w, r).unwrap();
                        if got.labels() != validate_oracle(&majority_oracle(&c, w), &l, r) {
                            miss(&mut tally, format!("pipeline {c:?} {l:?} w={w} r={r}"));
                        }
                    }
                }
            }
        }
    }
    tally
}

/// Scores 1x1 frames by their pixel value, which encodes the frame index.
pub struct IndexedScores {
    pub channels: usize,
    pub scores: Arc<Vec<f64>>,
}

impl StageModel for IndexedScores {
    fn input_dims(&self) -> Dims {
        Dims::new(1, 1, self.channels)
    }

    fn score(&self, input: &Tensor) -> Result<f64, NnError> {
        let index = (input.data()[0] * 255.0).round() as usize;
        Ok(self.scores[index])
    }
}

/// Gray 1x1 frames whose value is their position, so any projection keeps it.
pub fn indexed_frames(n: usize) -> Vec<Frame> {
    assert!(n <= 256);
    (0..n)
        .map(|i| Frame::filled(1, 1, &[i as u8; 3]).unwrap().with_index(i as u64))
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
