use colorcascade::cascade::{CascadeError, StageFailure};
use colorcascade::nn::NnError;
use colorcascade::preprocess::PreprocessError;
use thiserror::Error;

pub const INPUT: u8 = 2;
pub const NUMERIC: u8 = 3;
pub const MISMATCH: u8 = 4;

/// Models, manifests or frames that disagree about shape or channels.
#[derive(Debug, Error)]
#[error("{0}")]
pub struct Mismatch(pub String);

/// Walks the error chain for the first cause with a known category. Anything
/// unrecognized is an input error.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<Mismatch>() {
            return MISMATCH;
        }
        if let Some(e) = cause.downcast_ref::<NnError>() {
            return nn_code(e);
        }
        if let Some(e) = cause.downcast_ref::<CascadeError>() {
            match e {
                CascadeError::ChannelMismatch { .. } | CascadeError::ChannelsGrow { .. } => return MISMATCH,
                CascadeError::Stage { source, .. } => return stage_code(source),
                _ => {}
            }
        }
        if let Some(PreprocessError::ProjectionInput { .. }) = cause.downcast_ref::<PreprocessError>() {
            return MISMATCH;
        }
    }
    INPUT
}

fn nn_code(e: &NnError) -> u8 {
    match e {
        NnError::Diverged { .. } | NnError::NonFinite { .. } => NUMERIC,
        NnError::InputDims { .. } | NnError::LayerMismatch { .. } | NnError::SpecHashMismatch => MISMATCH,
        _ => INPUT,
    }
}

fn stage_code(e: &StageFailure) -> u8 {
    match e {
        StageFailure::Model(e) => nn_code(e),
        StageFailure::Preprocess(PreprocessError::ProjectionInput { .. }) => MISMATCH,
        StageFailure::Preprocess(_) => INPUT,
    }
}
