//! Antenna response consistency (ARC) self-supervised learning for WiFi CSI.
//!
//! Different Tx-Rx antenna pairs record the same action at the same time, so
//! their views make natural positive pairs for self-supervised pretraining.
//! This crate provides the pieces to test that idea end to end on synthetic
//! data:
//!
//! - [`csi`]: tensor model, labeled datasets, binary container, splits
//! - [`synth`]: multipath CSI generator with class-specific motion
//! - [`preprocess`]: amplitude, conjugate multiplication, angles, views
//! - [`nn`]: small differentiable encoders/decoders and their optimizer
//! - [`ssl`]: MoCo/MAE pretraining with and without ARC view pairing
//! - [`probe`]: frozen-feature linear and two-layer probes, metrics, reports

pub mod csi;
pub mod nn;
pub mod preprocess;
pub mod probe;
pub mod rng;
pub mod ssl;
pub mod synth;

pub use csi::{CsiTensor, DataError, Dataset, Dims, LabeledSample};
pub use nn::{EncoderState, Model};
pub use preprocess::{FeatureMode, ViewKind, ViewTensor};
pub use probe::{ProbeKind, RunReport};
pub use synth::SceneConfig;
