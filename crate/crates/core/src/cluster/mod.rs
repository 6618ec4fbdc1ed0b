//! k-means with k-means++ seeding, soft assignments and entropy.

mod kmeans;
mod model;

pub use kmeans::{kmeans_fit, KMeansConfig, Temperature};
pub use model::{entropy, soft_assign, Assignment, ExplainerModel, FitMeta};
