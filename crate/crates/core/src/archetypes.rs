//! Failure-mode protocol on synthetic scenes.
//!
//! Model C (RGB) trains on explosions against plain backgrounds and gray
//! structures; it never sees warm light sources. Model L (grayscale) trains
//! on explosions against plain backgrounds and light sources; it never sees
//! gray structures. Both are then scored on a held-out pool of every class,
//! alone and as the C then L cascade.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::cascade::{Cascade, CascadeError, CascadeStage, DEFAULT_THRESHOLD};
use crate::nn::{train_with_validation, BlockArch, EpochRecord, NnError, Sample, TrainConfig, TrainOutcome};
use crate::preprocess::{project, to_tensor, ChannelProjection, PreprocessError};
use crate::synthcorpus::{gen_class_images, LabeledImage, SceneClass, SynthError};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolConfig {
    pub size: usize,
    /// Training images per negative class; positives match the negatives in
    /// total.
    pub negatives_per_class: usize,
    pub val_fraction: f64,
    pub eval_per_class: usize,
    pub train: TrainConfig,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            size: 64,
            negatives_per_class: 60,
            val_fraction: 0.2,
            eval_per_class: 100,
            train: TrainConfig {
                epochs: 30,
                batch_size: 16,
                learning_rate: 0.01,
                momentum: 0.9,
                val_fraction: 0.2,
                seed: 7,
            },
            seed: 2024,
        }
    }
}

/// Indices at or above this offset are evaluation images, below it training
/// images, so the two pools never share a recipe.
const EVAL_OFFSET: usize = 1 << 30;

#[derive(Debug, Clone, Serialize)]
pub struct ModelRates {
    /// Share of each class scored positive.
    pub positive_rate: BTreeMap<SceneClass, f64>,
    /// Positive share over every negative class together.
    pub pooled_fp_rate: f64,
    pub false_positives: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolReport {
    pub config: ProtocolConfig,
    pub eval_images: usize,
    pub model_c: ModelRates,
    pub model_l: ModelRates,
    pub cascade: ModelRates,
    pub c_best_epoch: usize,
    pub l_best_epoch: usize,
    pub c_history: Vec<EpochRecord>,
    pub l_history: Vec<EpochRecord>,
}

pub struct ProtocolRun {
    pub model_c: TrainOutcome,
    pub model_l: TrainOutcome,
    pub cascade: Cascade,
    pub report: ProtocolReport,
}

fn samples(images: &[LabeledImage], projection: ChannelProjection) -> Result<Vec<Sample>, PreprocessError> {
    images
        .iter()
        .map(|img| {
            Ok(Sample::new(
                to_tensor(&project(&img.frame, projection)?),
                img.positive(),
            ))
        })
        .collect()
}

/// Train and validation samples for one model. Positives are drawn from
/// their own index range so C and L see different explosion images.
fn training_split(
    config: &ProtocolConfig,
    negatives: [SceneClass; 2],
    positive_range: std::ops::Range<usize>,
    projection: ChannelProjection,
) -> Result<(Vec<Sample>, Vec<Sample>), ProtocolError> {
    let n = config.negatives_per_class;
    let n_val = (n as f64 * config.val_fraction).round() as usize;
    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut add = |images: Vec<LabeledImage>, n_val: usize| -> Result<(), ProtocolError> {
        let s = samples(&images, projection)?;
        val.extend_from_slice(&s[..n_val]);
        train.extend_from_slice(&s[n_val..]);
        Ok(())
    };
    for class in negatives {
        add(gen_class_images(class, config.seed, 0..n, config.size)?, n_val)?;
    }
    let positives = gen_class_images(SceneClass::Explosion, config.seed, positive_range, config.size)?;
    add(positives, 2 * n_val)?;
    Ok((train, val))
}

fn rates(positive: &[bool], classes: &[SceneClass]) -> ModelRates {
    let mut per: BTreeMap<SceneClass, (usize, usize)> = BTreeMap::new();
    for (&p, &c) in positive.iter().zip(classes) {
        let e = per.entry(c).or_default();
        e.0 += usize::from(p);
        e.1 += 1;
    }
    let (mut fp, mut neg) = (0, 0);
    for (&c, &(hits, total)) in &per {
        if !c.is_positive() {
            fp += hits;
            neg += total;
        }
    }
    ModelRates {
        positive_rate: per.iter().map(|(&c, &(h, t))| (c, h as f64 / t as f64)).collect(),
        pooled_fp_rate: fp as f64 / neg.max(1) as f64,
        false_positives: fp,
    }
}

/// Held-out evaluation pool with `per_class` images of every class.
pub fn eval_pool(seed: u64, per_class: usize, size: usize) -> Result<Vec<LabeledImage>, SynthError> {
    let mut out = Vec::new();
    for class in SceneClass::ALL {
        out.extend(gen_class_images(
            class,
            seed,
            EVAL_OFFSET..EVAL_OFFSET + per_class,
            size,
        )?);
    }
    Ok(out)
}

pub fn run_protocol(
    config: &ProtocolConfig,
    mut on_epoch: impl FnMut(char, &EpochRecord),
) -> Result<ProtocolRun, ProtocolError> {
    let arch = BlockArch::desk();
    let n = config.negatives_per_class;

    let (c_train, c_val) = training_split(
        config,
        [SceneClass::PlainNegative, SceneClass::StructureConfuser],
        0..2 * n,
        ChannelProjection::IdentityRgb,
    )?;
    let spec_c = arch.build(3, config.size)?;
    let model_c = train_with_validation(&spec_c, &c_train, &c_val, &config.train, |r| on_epoch('C', r))?;

    let (l_train, l_val) = training_split(
        config,
        [SceneClass::PlainNegative, SceneClass::LightSourceConfuser],
        2 * n..4 * n,
        ChannelProjection::Grayscale,
    )?;
    let spec_l = arch.build(1, config.size)?;
    let model_l = train_with_validation(&spec_l, &l_train, &l_val, &config.train, |r| on_epoch('L', r))?;

    let net_c = Arc::new(model_c.network.clone());
    let net_l = Arc::new(model_l.network.clone());
    let cascade = Cascade::two_stage(net_c.clone(), net_l.clone())?;
    let c_only = Cascade::new(vec![CascadeStage::new(
        ChannelProjection::IdentityRgb,
        net_c,
        DEFAULT_THRESHOLD,
    )])?;
    let l_only = Cascade::new(vec![CascadeStage::new(
        ChannelProjection::Grayscale,
        net_l,
        DEFAULT_THRESHOLD,
    )])?;

    let pool = eval_pool(config.seed, config.eval_per_class, config.size)?;
    let frames: Vec<_> = pool.iter().map(|i| i.frame.clone()).collect();
    let classes: Vec<SceneClass> = pool.iter().map(|i| i.recipe.class).collect();
    let labels = |c: &Cascade| -> Result<Vec<bool>, CascadeError> {
        Ok(c.classify_images(&frames)?.0.iter().map(|p| p.positive).collect())
    };
    let report = ProtocolReport {
        config: config.clone(),
        eval_images: pool.len(),
        model_c: rates(&labels(&c_only)?, &classes),
        model_l: rates(&labels(&l_only)?, &classes),
        cascade: rates(&labels(&cascade)?, &classes),
        c_best_epoch: model_c.best_epoch,
        l_best_epoch: model_l.best_epoch,
        c_history: model_c.history.clone(),
        l_history: model_l.history.clone(),
    };
    Ok(ProtocolRun {
        model_c,
        model_l,
        cascade,
        report,
    })
}
