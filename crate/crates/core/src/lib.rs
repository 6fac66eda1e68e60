//! Desk-scale machine unlearning laboratory.
//!
//! A small feed-forward classifier is trained on a synthetic corpus of
//! speech-like utterances (keyword and speaker labels), then asked to forget
//! a subset of its training data. The crate provides the unlearning methods
//! (gradient ascent, random labelling, saliency-masked random labelling,
//! SCRUB, bad teaching, SuperLoss re-weighting, retraining from scratch)
//! and the evaluation harness: subset accuracies, a loss-threshold
//! membership-inference attack and table-shaped reports.

pub mod error;
pub mod nnkit;

pub use error::{Error, Result};
pub mod speechgen;
pub mod unlearn;
pub mod evalkit;
pub mod config;
pub mod bench;
pub mod cli;
