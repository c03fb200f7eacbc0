//! Verification-cascade image and video classification with a from-scratch
//! CPU network engine, temporal fusion, interval evaluation, synthetic data
//! and benchmarking.

pub mod archetypes;
pub mod bench;
pub mod cascade;
pub mod evalkit;
pub mod io;
pub mod nn;
pub mod preprocess;
pub mod synthcorpus;
pub mod temporal;
