//! Reference nested-loop forward pass and property tests for the engine.

use colorcascade::nn::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

mod common;
use common::{random_input, random_spec, randomized_network};

/// Straight-line forward pass reading parameters from the weight bundle
/// blocks. Returns the sigmoid score.
fn naive_forward(spec: &NetworkSpec, bundle: &WeightBundle, input: &Tensor) -> f64 {
    let blocks = bundle.blocks();
    let mut b = 0;
    let mut h = spec.input_dims().height;
    let mut w = spec.input_dims().width;
    let mut c = spec.input_dims().channels;
    // a[y][x][ch]
    let mut a: Vec<Vec<Vec<f64>>> = (0..h)
        .map(|y| (0..w).map(|x| (0..c).map(|ch| input.at(y, x, ch)).collect()).collect())
        .collect();
    let mut flat: Option<Vec<f64>> = None;
    let mut logit = f64::NAN;

    for layer in spec.layers() {
        match *layer {
            LayerSpec::Conv2d {
                filters,
                kernel,
                activation,
            } => {
                let wk = &blocks[b].values;
                let bias = &blocks[b + 1].values;
                b += 2;
                let r = (kernel / 2) as isize;
                let weight = |ky: usize, kx: usize, ci: usize, co: usize| {
                    f64::from(wk[((ky * kernel + kx) * c + ci) * filters + co])
                };
                let mut out = vec![vec![vec![0.0; filters]; w]; h];
                for y in 0..h {
                    for x in 0..w {
                        for co in 0..filters {
                            let mut s = f64::from(bias[co]);
                            for dy in -r..=r {
                                for dx in -r..=r {
                                    let (iy, ix) = (y as isize + dy, x as isize + dx);
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    for ci in 0..c {
                                        s += a[iy as usize][ix as usize][ci]
                                            * weight((dy + r) as usize, (dx + r) as usize, ci, co);
                                    }
                                }
                            }
                            out[y][x][co] = act(s, activation);
                        }
                    }
                }
                a = out;
                c = filters;
            }
            LayerSpec::MaxPool2 => {
                let (oh, ow) = (h / 2, w / 2);
                let mut out = vec![vec![vec![0.0; c]; ow]; oh];
                for y in 0..oh {
                    for x in 0..ow {
                        for ch in 0..c {
                            out[y][x][ch] = [
                                a[2 * y][2 * x][ch],
                                a[2 * y][2 * x + 1][ch],
                                a[2 * y + 1][2 * x][ch],
                                a[2 * y + 1][2 * x + 1][ch],
                            ]
                            .into_iter()
                            .fold(f64::NEG_INFINITY, f64::max);
                        }
                    }
                }
                a = out;
                h = oh;
                w = ow;
            }
            LayerSpec::BatchNorm => {
                let g = &blocks[b].values;
                let be = &blocks[b + 1].values;
                let m = &blocks[b + 2].values;
                let v = &blocks[b + 3].values;
                b += 4;
                for row in a.iter_mut() {
                    for px in row.iter_mut() {
                        for ch in 0..c {
                            px[ch] = f64::from(g[ch]) * (px[ch] - f64::from(m[ch])) / (f64::from(v[ch]) + 1e-5).sqrt()
                                + f64::from(be[ch]);
                        }
                    }
                }
            }
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Flatten => {
                flat = Some(a.iter().flatten().flatten().copied().collect());
            }
            LayerSpec::Dense { units, activation } => {
                let wd = &blocks[b].values;
                let bias = &blocks[b + 1].values;
                b += 2;
                let x = flat.take().expect("dense after flatten");
                let mut out = vec![0.0; units];
                for j in 0..units {
                    let mut s = f64::from(bias[j]);
                    for (i, xi) in x.iter().enumerate() {
                        s += xi * f64::from(wd[i * units + j]);
                    }
                    out[j] = if activation == Activation::Sigmoid {
                        logit = s;
                        s
                    } else {
                        act(s, activation)
                    };
                }
                flat = Some(out);
            }
        }
    }
    1.0 / (1.0 + (-logit).exp())
}

fn act(v: f64, a: Activation) -> f64 {
    match a {
        Activation::Relu => v.max(0.0),
        Activation::None => v,
        Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_nested_loop_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = randomized_network(random_spec(&mut rng), &mut rng);
        let x = random_input(net.spec().input_dims(), &mut rng);
        let fast = net.forward(&x).unwrap();
        let slow = naive_forward(net.spec(), &net.to_bundle().unwrap(), &x);
        prop_assert!((fast - slow).abs() <= 1e-6 * slow.abs().max(1e-12), "{fast} vs {slow}");
    }

    #[test]
    fn trace_dims_follow_static_chain(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = randomized_network(random_spec(&mut rng), &mut rng);
        let x = random_input(net.spec().input_dims(), &mut rng);
        let dims: Vec<Dims> = net.forward_trace(&x).unwrap().iter().map(|t| t.dims()).collect();
        prop_assert_eq!(&dims[..], &net.spec().dims_chain()[1..]);
    }

    #[test]
    fn param_count_is_additive_and_weight_independent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = random_spec(&mut rng);
        let count = spec.count_params();
        prop_assert_eq!(count.total, count.per_layer.iter().sum::<usize>());
        let a = randomized_network(spec.clone(), &mut rng).to_bundle().unwrap();
        let b = Network::zeroed(spec).to_bundle().unwrap();
        prop_assert_eq!(a.param_count(), count.total);
        prop_assert_eq!(b.param_count(), count.total);
    }

    #[test]
    fn pooling_floor_chain(side in 32usize..400) {
        let spec = build_paper_model(1, side).unwrap();
        let expected = side / 2 / 2 / 2 / 2 / 2;
        prop_assert_eq!(spec.flatten_width(), expected * expected * 64);
    }
}

fn two_block_spec() -> NetworkSpec {
    NetworkSpec::new(
        Dims::new(8, 8, 2),
        vec![
            LayerSpec::conv(3, 3),
            LayerSpec::MaxPool2,
            LayerSpec::BatchNorm,
            LayerSpec::conv(4, 3),
            LayerSpec::MaxPool2,
            LayerSpec::BatchNorm,
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Flatten,
            LayerSpec::dense(6),
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::sigmoid_output(),
        ],
    )
    .unwrap()
}

#[test]
fn two_block_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..4 {
        let net = randomized_network(two_block_spec(), &mut rng);
        let xs: Vec<Tensor> = (0..3).map(|_| random_input(Dims::new(8, 8, 2), &mut rng)).collect();
        let batch: Vec<&Tensor> = xs.iter().collect();
        let check = gradient_check(&net, &batch, &[1.0, 0.0, 1.0], 1e-5).unwrap();
        assert!(check.max_rel_error < 1e-4, "{check:?}");
        assert_eq!(check.params_checked, net.trainable_count());
    }
}

#[test]
fn halving_epsilon_keeps_error_second_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let net = randomized_network(two_block_spec(), &mut rng);
    let x = random_input(Dims::new(8, 8, 2), &mut rng);
    let coarse = gradient_check(&net, &[&x], &[1.0], 2e-4).unwrap();
    let fine = gradient_check(&net, &[&x], &[1.0], 1e-4).unwrap();
    assert!(
        fine.max_rel_error <= 4.0 * coarse.max_rel_error,
        "{coarse:?} -> {fine:?}"
    );
}

#[test]
fn epsilon_outside_range_rejected() {
    let net = Network::init(two_block_spec(), 1);
    let x = Tensor::zeros(Dims::new(8, 8, 2));
    assert!(gradient_check(&net, &[&x], &[1.0], 1e-2).is_err());
}

#[test]
fn full_model_counts() {
    let c = build_paper_model(3, 300).unwrap().count_params();
    let conv: usize = [0, 3, 6, 9, 12].iter().map(|&i| c.per_layer[i]).sum();
    assert_eq!(conv, 2432 + 18496 + 73856 + 295168 + 147520);
    assert_eq!(conv, 537_472);
    assert_eq!(c.per_layer[17], (5184 + 1) * 128);
    assert_eq!(c.per_layer[17], 663_680);
}
