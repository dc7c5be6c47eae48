//! Multi-scale geometric autoencoder.
//!
//! An MLP autoencoder whose encoder is trained to preserve approximate
//! geodesic distances of the data (global term) and whose decoder is pushed
//! towards a local isometry or conformal map through its Jacobian (local
//! term). The crate also carries the geodesic-graph pipeline, synthetic
//! manifolds, and the embedding-quality metrics used to judge the result.

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod geodesic;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod trainer;

pub use datasets::PointCloud;
pub use error::{Error, Result};
pub use geodesic::{DistanceMatrix, KnnGraph};
pub use losses::{GlobalMode, LocalMode, LossWeights, Schedule};
pub use metrics::MetricsReport;
pub use model::{Activation, MlpModel, ShapeSpec};
pub use trainer::{TrainConfig, TrainReport};
