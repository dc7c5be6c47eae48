//! Minibatch training with warm-up and decay of the global weight.

use std::collections::HashMap;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Pairs, Tape};
use crate::error::{Error, Result};
use crate::geodesic::{all_pairs_shortest_paths, build_knn_graph, DistanceMatrix};
use crate::losses::{self, on_tape, LocalMode, LossComponents, LossWeights, Schedule};
use crate::model::{MlpModel, ShapeSpec};
use crate::optim::Adam;

/// A step whose total loss exceeds this aborts training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub schedule: Schedule,
    pub seed: u64,
    pub k_neighbors: usize,
    /// Write a checkpoint every this many epochs; 0 disables.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    /// Every offending field with a reason.
    pub fn problems(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        if self.epochs < 1 {
            out.push(("epochs", "must be at least 1".to_string()));
        }
        if self.batch_size < 2 {
            out.push(("batch_size", "must be at least 2".to_string()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            out.push(("learning_rate", "must be positive".to_string()));
        }
        for name in self.weights.invalid_fields() {
            out.push((name, "must be finite and non-negative".to_string()));
        }
        if !(self.schedule.decay_rate.is_finite() && self.schedule.decay_rate >= 0.0) {
            out.push(("decay_rate", "must be finite and non-negative".to_string()));
        }
        if self.k_neighbors < 1 {
            out.push(("k_neighbors", "must be at least 1".to_string()));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some((name, reason)) => Err(Error::Parameter { name, reason }),
            None => Ok(()),
        }
    }
}

/// Per-epoch means over minibatches. `global` and `local` are unweighted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub global: f64,
    pub local: f64,
    pub total: f64,
    pub lambda_global_eff: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub wall_time_secs: f64,
}

impl TrainReport {
    pub fn totals(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.total).collect()
    }
}

/// Geodesic distances on the kNN graph of `points`; refuses disconnected graphs.
pub fn precompute_distances(points: ArrayView2<f64>, k: usize) -> Result<DistanceMatrix> {
    let graph = build_knn_graph(points, k)?;
    let components = graph.component_count();
    if components > 1 {
        return Err(Error::Disconnected { components });
    }
    Ok(all_pairs_shortest_paths(&graph))
}

/// The four configurations compared in an ablation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    FullIso,
    FullCon,
    GlobalOnly,
    LocalOnly,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::FullIso => "full-iso",
            Variant::FullCon => "full-con",
            Variant::GlobalOnly => "global-only",
            Variant::LocalOnly => "local-only",
        }
    }
}

/// Full isometric, full conformal, global-only (`lambda_local = 0`) and
/// local-only (`lambda_global = 0`). Everything else is copied from `base`.
pub fn ablation_configs(base: &TrainConfig) -> Vec<(Variant, TrainConfig)> {
    let with = |f: &dyn Fn(&mut TrainConfig)| {
        let mut c = base.clone();
        f(&mut c);
        c
    };
    vec![
        (Variant::FullIso, with(&|c| c.weights.local_mode = LocalMode::Isometric)),
        (Variant::FullCon, with(&|c| c.weights.local_mode = LocalMode::Conformal)),
        (Variant::GlobalOnly, with(&|c| c.weights.lambda_local = 0.0)),
        (Variant::LocalOnly, with(&|c| c.weights.lambda_global = 0.0)),
    ]
}

/// Every `(i, j)` with `i < j < n`, in row-major order.
pub fn within_batch_pairs(n: usize) -> Pairs {
    let mut v = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            v.push((i, j));
        }
    }
    v.into()
}

/// Shuffled index batches; a trailing batch of one is folded into the previous one.
fn batches(order: &[usize], batch_size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(batch_size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let n = out.len();
        let start = (n - 1) * batch_size;
        out[n - 1] = &order[start..];
    }
    out
}

/// Loss value and parameter gradients for one minibatch.
#[derive(Clone, Debug)]
pub struct BatchGradients {
    /// Unweighted components; `local` is 0 when the local term is off.
    pub components: LossComponents,
    pub total: f64,
    /// In [`MlpModel::params`] order; empty when `total` is non-finite or
    /// above [`DIVERGENCE_THRESHOLD`].
    pub grads: Vec<Array2<f64>>,
}

/// Evaluates `recon + lambda_global * global + lambda_local * local` on
/// the batch `x` and differentiates it. `dm` holds the reference distance
/// of each entry of `pairs` as a `P x 1` column. The local term is built
/// only when `lambda_local > 0` and a local mode is selected.
pub fn batch_gradients(
    model: &MlpModel,
    x: Array2<f64>,
    dm: &Array2<f64>,
    pairs: Pairs,
    weights: &LossWeights,
    lambda_global: f64,
    lambda_local: f64,
) -> Result<BatchGradients> {
    if x.nrows() < 2 {
        return Err(Error::Degenerate("a batch needs at least two points".into()));
    }
    if dm.dim() != (pairs.len(), 1) {
        return Err(crate::error::shape_err(
            "reference distances",
            format!("({}, 1)", pairs.len()),
            format!("{:?}", dm.dim()),
        ));
    }
    if x.ncols() != model.ambient_dim() {
        return Err(crate::error::shape_err("batch", model.ambient_dim(), x.ncols()));
    }
    let local_on = lambda_local > 0.0 && weights.local_mode != LocalMode::None;
    let mut tape = if local_on {
        Tape::with_higher_order()
    } else {
        Tape::new()
    };
    let vars = model.register(&mut tape);
    let xv = tape.constant(x);
    let z = model.encode_on(&mut tape, &vars, xv);
    let x_hat = model.decode_on(&mut tape, &vars, z);

    let recon = on_tape::recon(&mut tape, xv, x_hat);
    let de = on_tape::pair_distances(&mut tape, z, pairs);
    let global = on_tape::global(&mut tape, weights.global_mode, dm, de);

    let mut total = recon;
    if lambda_global != 0.0 {
        let g = tape.scale(global, lambda_global);
        total = tape.add(total, g);
    }
    let mut local_value = 0.0;
    if local_on {
        let rows = tape.batch_jacobian_rows(x_hat, z)?;
        let h = on_tape::pullback_entries(&mut tape, &rows);
        if let Some(local) = on_tape::local(&mut tape, weights.local_mode, &h, weights.lambda_diag) {
            local_value = tape.scalar(local);
            let l = tape.scale(local, lambda_local);
            total = tape.add(total, l);
        }
    }
    let total_value = tape.scalar(total);
    let components = LossComponents {
        recon: tape.scalar(recon),
        global: tape.scalar(global),
        local: local_value,
    };
    if !total_value.is_finite() || total_value > DIVERGENCE_THRESHOLD {
        return Ok(BatchGradients {
            components,
            total: total_value,
            grads: Vec::new(),
        });
    }
    let grads = tape.gradients(total, &vars.all())?;
    Ok(BatchGradients {
        components,
        total: total_value,
        grads,
    })
}

/// Trains `model` in place. `on_epoch` sees every completed epoch; on
/// divergence the model is rolled back to the end of the last completed
/// epoch and [`Error::Diverged`] is returned.
pub fn fit<F>(
    model: &mut MlpModel,
    points: ArrayView2<f64>,
    distances: &DistanceMatrix,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochRecord, &MlpModel) -> Result<()>,
{
    config.validate()?;
    let n = points.nrows();
    if distances.n() != n {
        return Err(crate::error::shape_err("distance matrix", n, distances.n()));
    }
    if !distances.is_connected() {
        return Err(Error::Degenerate("distance matrix has unreachable pairs".into()));
    }
    if points.ncols() != model.ambient_dim() {
        return Err(crate::error::shape_err(
            "training points",
            model.ambient_dim(),
            points.ncols(),
        ));
    }
    if n < 2 {
        return Err(Error::Degenerate("training needs at least two points".into()));
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = Adam::new(config.learning_rate);
    let mut order: Vec<usize> = (0..n).collect();
    let mut pair_cache: HashMap<usize, Pairs> = HashMap::new();
    let mut report = TrainReport::default();
    let mut snapshot = model.clone();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (lambda_global, lambda_local) = losses::effective_weights(&config.weights, &config.schedule, epoch);
        let mut sums = LossComponents::default();
        let mut n_batches = 0usize;
        for batch in batches(&order, config.batch_size) {
            let pairs = pair_cache
                .entry(batch.len())
                .or_insert_with(|| within_batch_pairs(batch.len()))
                .clone();
            let x = points.select(Axis(0), batch);
            let dm = Array2::from_shape_fn((pairs.len(), 1), |(p, _)| {
                let (i, j) = pairs[p];
                distances.get(batch[i], batch[j])
            });
            let step = batch_gradients(model, x, &dm, pairs, &config.weights, lambda_global, lambda_local)?;
            if step.grads.is_empty() {
                *model = snapshot;
                return Err(Error::Diverged {
                    epoch,
                    reason: format!(
                        "total loss {} (recon {}, global {}, local {})",
                        step.total, step.components.recon, step.components.global, step.components.local
                    ),
                });
            }
            adam.step(model.params_mut(), &step.grads);
            sums.recon += step.components.recon;
            sums.global += step.components.global;
            sums.local += step.components.local;
            n_batches += 1;
        }
        let nb = n_batches as f64;
        let mean = LossComponents {
            recon: sums.recon / nb,
            global: sums.global / nb,
            local: sums.local / nb,
        };
        let total = losses::total_loss(&mean, &config.weights, epoch, &config.schedule)?;
        let record = EpochRecord {
            epoch,
            recon: mean.recon,
            global: mean.global,
            local: mean.local,
            total,
            lambda_global_eff: lambda_global,
        };
        report.epochs.push(record);
        if model.params().iter().any(|p| p.iter().any(|v| !v.is_finite())) {
            *model = snapshot;
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite parameters".into(),
            });
        }
        snapshot.clone_from(model);
        on_epoch(&record, model)?;
    }
    report.wall_time_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Initializes a model from `spec` with `config.seed` and trains it.
pub fn train(
    points: ArrayView2<f64>,
    distances: &DistanceMatrix,
    spec: &ShapeSpec,
    config: &TrainConfig,
) -> Result<(MlpModel, TrainReport)> {
    let mut model = MlpModel::init(spec, config.seed)?.with_scale(crate::model::data_scale(points))?;
    let report = fit(&mut model, points, distances, config, |_, _| Ok(()))?;
    Ok((model, report))
}
