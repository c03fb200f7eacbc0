use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::network::{bce_from_logit, mean_bce, sigmoid, LayerParams};
use super::{Network, NetworkSpec, NnError, Tensor, WeightBundle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Classical momentum; zero gives plain SGD.
    pub momentum: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 400,
            batch_size: 16,
            learning_rate: 0.01,
            momentum: 0.0,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NnError> {
        let bad = |what: &str| Err(NnError::InvalidConfig(what.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be a finite non-negative number");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Tensor,
    pub positive: bool,
}

impl Sample {
    pub fn new(input: Tensor, positive: bool) -> Self {
        Self { input, positive }
    }

    fn target(&self) -> f64 {
        if self.positive {
            1.0
        } else {
            0.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Snapshot from the epoch with the lowest validation loss.
    pub bundle: WeightBundle,
    /// `bundle` loaded back, so evaluation sees exactly what gets saved.
    pub network: Network,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history[self.best_epoch - 1]
    }
}

/// Stratified split: each class contributes `round(n_class * fraction)`
/// samples to validation, chosen by a seeded shuffle.
pub fn stratified_split(samples: &[Sample], fraction: f64, seed: u64) -> (Vec<Sample>, Vec<Sample>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_5917);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..samples.len()).filter(|&i| samples[i].positive == class).collect();
        idx.shuffle(&mut rng);
        let n_val = (idx.len() as f64 * fraction).round() as usize;
        let (v, t) = idx.split_at(n_val);
        val.extend(v.iter().map(|&i| samples[i].clone()));
        train.extend(t.iter().map(|&i| samples[i].clone()));
    }
    (train, val)
}

/// Splits `dataset` by `config.val_fraction` and trains.
pub fn train(spec: &NetworkSpec, dataset: &[Sample], config: &TrainConfig) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    check_classes(dataset)?;
    let (train_set, val_set) = stratified_split(dataset, config.val_fraction, config.seed);
    train_with_validation(spec, &train_set, &val_set, config, |_| {})
}

fn check_classes(samples: &[Sample]) -> Result<(), NnError> {
    if samples.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let positives = samples.iter().filter(|s| s.positive).count();
    if positives == 0 || positives == samples.len() {
        return Err(NnError::SingleClass);
    }
    Ok(())
}

/// Mini-batch SGD on binary cross-entropy, keeping the weights of the epoch
/// with the lowest validation loss. `on_epoch` sees every record as it is
/// produced.
pub fn train_with_validation(
    spec: &NetworkSpec,
    train_set: &[Sample],
    val_set: &[Sample],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, NnError> {
    config.validate()?;
    check_classes(train_set)?;
    if val_set.is_empty() {
        return Err(NnError::EmptyDataset);
    }

    let mut net = Network::init(spec.clone(), config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9E37_79B9_7F4A_7C15));
    let mut velocity: Vec<LayerParams> = net.params().to_vec();
    for p in &mut velocity {
        for v in p.trainable_mut() {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, usize, Network)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Tensor> = chunk.iter().map(|&i| &train_set[i].input).collect();
            let labels: Vec<f64> = chunk.iter().map(|&i| train_set[i].target()).collect();
            let pass = net
                .train_forward(&batch, Some(&mut rng))
                .map_err(|e| diverged(e, epoch))?;
            let loss = mean_bce(&pass.logits, &labels);
            if !loss.is_finite() {
                return Err(NnError::Diverged { epoch });
            }
            loss_sum += loss * chunk.len() as f64;
            let grads = net.backward(&pass, &labels);
            net.update_moving_stats(&pass);
            sgd_step(&mut net, &grads.layers, &mut velocity, config);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        if !net.fits_f32() {
            return Err(NnError::Diverged { epoch });
        }

        let (val_loss, val_accuracy) = evaluate(&net, val_set).map_err(|e| diverged(e, epoch))?;
        if !val_loss.is_finite() {
            return Err(NnError::Diverged { epoch });
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
        };
        on_epoch(&record);
        history.push(record);
        if best.as_ref().map_or(true, |(l, _, _)| val_loss < *l) {
            best = Some((val_loss, epoch, net.clone()));
        }
    }

    let (_, best_epoch, best_net) = best.expect("at least one epoch");
    let bundle = best_net.to_bundle()?;
    let network = Network::from_bundle(spec.clone(), &bundle)?;
    Ok(TrainOutcome {
        bundle,
        network,
        history,
        best_epoch,
    })
}

fn diverged(err: NnError, epoch: usize) -> NnError {
    match err {
        NnError::NonFinite { .. } => NnError::Diverged { epoch },
        other => other,
    }
}

fn sgd_step(net: &mut Network, grads: &[LayerParams], velocity: &mut [LayerParams], config: &TrainConfig) {
    let lr = config.learning_rate;
    let mu = config.momentum;
    for ((p, g), v) in net.params_mut().iter_mut().zip(grads).zip(velocity.iter_mut()) {
        for ((pv, gv), vv) in p.trainable_mut().into_iter().zip(g.trainable()).zip(v.trainable_mut()) {
            for ((w, &dw), vel) in pv.iter_mut().zip(gv).zip(vv.iter_mut()) {
                if mu == 0.0 {
                    *w -= lr * dw;
                } else {
                    *vel = mu * *vel - lr * dw;
                    *w += *vel;
                }
            }
        }
    }
}

/// Mean inference-mode BCE and accuracy at a 0.5 cut.
pub fn evaluate(net: &Network, samples: &[Sample]) -> Result<(f64, f64), NnError> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for s in samples {
        let trace = net.forward_trace(&s.input)?;
        let logit = trace.last().expect("trace").data()[0];
        loss += bce_from_logit(logit, s.target());
        if (sigmoid(logit) >= 0.5) == s.positive {
            correct += 1;
        }
    }
    let n = samples.len() as f64;
    Ok((loss / n, correct as f64 / n))
}
