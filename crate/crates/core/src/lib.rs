//! Time-localized cluster explanations for 1D convolutional networks.
//!
//! A network's hidden activations at a few tapped layers are resampled to a
//! common time axis, normalized, concatenated and clustered with k-means. Each
//! timestep of an input record then receives a cluster id (a segmentation of
//! the input) and an entropy-based uncertainty taken from its soft assignment.
//!
//! The crate is organized as:
//!
//! - [`signal`]: ECG records, file IO, a synthetic generator, R-peak detection
//!   and wave delineation.
//! - [`net`]: a small 1D-CNN inference engine with activation taps, Grad-CAM
//!   and the `TLXW` weights bundle format.
//! - [`cluster`]: k-means++ / Lloyd, soft assignments and entropy.
//! - [`explain`]: activation collation and the explanation pipeline.
//! - [`forest`]: random forests used as surrogate classifiers.
//! - [`analytics`]: proportions, correlations, keypoint frequencies, metrics,
//!   cross-validation, uncertainty-by-phase, ablations and age trends.
//! - [`study`]: the seeded synthetic end-to-end benchmark.
//!
//! Data-parallel loops go through [`par`], which uses rayon when the
//! `parallel` feature is enabled (the default) and plain iterators otherwise.

pub mod analytics;
pub mod cluster;
mod codec;
pub mod error;
pub mod explain;
pub mod forest;
pub mod matrix;
pub mod net;
pub mod par;
pub mod signal;
pub mod study;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
