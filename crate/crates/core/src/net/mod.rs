//! 1D-CNN inference with activation taps, input gradients and Grad-CAM.

mod backward;
mod bundle;
mod engine;
mod gradcam;
mod reference;

pub use bundle::{Head, Layer, Meta, Shape, Tensor, WeightsBundle};
pub use engine::{forward, Activation, ForwardOutput, Network};
pub use gradcam::{contrast_transform, gradcam, ChannelMerge, ContrastConfig, TemperatureOrientation, LOG_FLOOR};
pub use reference::{random_bundle, ReferenceArch};
