//! Shared fixtures for the benchmarks.

use mae_core::datasets::{swiss_roll, Hole};
use mae_core::trainer::within_batch_pairs;
use mae_core::{Activation, DistanceMatrix, MlpModel, ShapeSpec};
use ndarray::Array2;

/// Centered Swiss Roll points with the default holes.
pub fn swiss_roll_points(n: usize) -> Array2<f64> {
    let mut cloud = swiss_roll(n, &Hole::default_pair(), 1).expect("swiss roll");
    cloud.center();
    cloud.points
}

/// The default 3-64-64-2 model, scaled to `points`.
pub fn default_model(points: &Array2<f64>) -> MlpModel {
    let spec = ShapeSpec::symmetric(3, 2, &[64, 64], Activation::Tanh);
    MlpModel::init(&spec, 1)
        .expect("model")
        .with_scale(mae_core::model::data_scale(points.view()))
        .expect("scale")
}

/// Target distances for every within-batch pair of the first `n` rows.
pub fn batch_targets(d: &DistanceMatrix, n: usize) -> Array2<f64> {
    let pairs = within_batch_pairs(n);
    Array2::from_shape_fn((pairs.len(), 1), |(p, _)| d.get(pairs[p].0, pairs[p].1))
}
