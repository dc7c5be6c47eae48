//! Embedding quality: reconstruction error, kNN recall and `KL_sigma`.
//!
//! Data-side distances are the approximate geodesics; latent-side distances
//! are Euclidean. Neighbor sets are ordered by `(distance, index)`.

use ndarray::{Array2, ArrayView2};
use serde::ser::{Serialize, SerializeMap, Serializer};

use crate::error::{shape_err, Error, Result};
use crate::geodesic::DistanceMatrix;
use crate::losses::recon_loss;
use crate::model::MlpModel;

pub const DEFAULT_K_EVAL: usize = 10;
pub const DEFAULT_SIGMAS: [f64; 3] = [0.01, 0.1, 1.0];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub recon_mse: f64,
    pub knn_recall: f64,
    /// `(sigma, KL_sigma)` in the order requested.
    pub kl: Vec<(f64, f64)>,
    pub k_eval: usize,
}

impl MetricsReport {
    pub fn kl_at(&self, sigma: f64) -> Option<f64> {
        self.kl.iter().find(|(s, _)| *s == sigma).map(|(_, v)| *v)
    }
}

/// JSON key for a given length scale, e.g. `kl_0.01` or `kl_1`.
pub fn kl_key(sigma: f64) -> String {
    format!("kl_{sigma}")
}

impl Serialize for MetricsReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(3 + self.kl.len()))?;
        map.serialize_entry("recon_mse", &self.recon_mse)?;
        map.serialize_entry("knn_recall", &self.knn_recall)?;
        for (sigma, v) in &self.kl {
            map.serialize_entry(&kl_key(*sigma), v)?;
        }
        map.serialize_entry("k_eval", &self.k_eval)?;
        map.end()
    }
}

/// Indices of the `k` nearest entries of row `i`, self excluded.
fn nearest(d: ArrayView2<f64>, i: usize, k: usize) -> Vec<usize> {
    let row = d.row(i);
    let mut idx: Vec<usize> = (0..d.ncols()).filter(|&j| j != i).collect();
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

/// Mean fraction of each point's `k` data-space neighbors that are also
/// among its `k` latent neighbors.
pub fn knn_recall(d_data: &DistanceMatrix, latent: ArrayView2<f64>, k: usize) -> Result<f64> {
    let n = d_data.n();
    if latent.nrows() != n {
        return Err(shape_err("knn_recall latent rows", n, latent.nrows()));
    }
    if k == 0 || k >= n {
        return Err(Error::Parameter {
            name: "k_eval",
            reason: format!("need 1 <= k < N, got k = {k} with N = {n}"),
        });
    }
    let d_latent = DistanceMatrix::euclidean(latent);
    let mut hits = 0usize;
    for i in 0..n {
        let a = nearest(d_data.as_array().view(), i, k);
        let mut b = nearest(d_latent.as_array().view(), i, k);
        b.sort_unstable();
        hits += a.iter().filter(|j| b.binary_search(j).is_ok()).count();
    }
    Ok(hits as f64 / (n * k) as f64)
}

fn density(d: ArrayView2<f64>, sigma: f64) -> Result<Vec<f64>> {
    let max = d.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0 && max.is_finite()) {
        return Err(Error::Degenerate(format!("maximum pairwise distance is {max}")));
    }
    let raw: Vec<f64> = d
        .rows()
        .into_iter()
        .map(|row| row.iter().map(|&v| (-(v / max).powi(2) / sigma).exp()).sum())
        .collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|p| p / total).collect())
}

/// `D_KL(p_X || p_Z)` between normalized Gaussian-kernel densities at
/// length scale `sigma`. Each space's distances are divided by its own
/// maximum; the self term `j = i` is part of each density sum.
pub fn kl_sigma(d_data: ArrayView2<f64>, d_latent: ArrayView2<f64>, sigma: f64) -> Result<f64> {
    if d_data.dim() != d_latent.dim() {
        return Err(shape_err(
            "kl_sigma",
            format!("{:?}", d_data.dim()),
            format!("{:?}", d_latent.dim()),
        ));
    }
    if d_data.nrows() < 2 {
        return Err(Error::Degenerate("kl_sigma needs at least two points".into()));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Parameter {
            name: "sigma",
            reason: format!("must be positive, got {sigma}"),
        });
    }
    let p = density(d_data, sigma)?;
    let q = density(d_latent, sigma)?;
    Ok(p.iter()
        .zip(&q)
        .map(|(&p, &q)| if p == 0.0 { 0.0 } else { p * (p / q).ln() })
        .sum())
}

/// Encodes and decodes every point and computes all metrics.
pub fn evaluate(
    model: &MlpModel,
    points: ArrayView2<f64>,
    d_data: &DistanceMatrix,
    k_eval: usize,
    sigmas: &[f64],
) -> Result<MetricsReport> {
    let (report, _) = evaluate_with_latent(model, points, d_data, k_eval, sigmas)?;
    Ok(report)
}

/// [`evaluate`], also returning the latent codes.
pub fn evaluate_with_latent(
    model: &MlpModel,
    points: ArrayView2<f64>,
    d_data: &DistanceMatrix,
    k_eval: usize,
    sigmas: &[f64],
) -> Result<(MetricsReport, Array2<f64>)> {
    let latent = model.encode_batch(points)?;
    let recon = model.decode_batch(latent.view())?;
    let recon_mse = recon_loss(points, recon.view())?;
    let knn = knn_recall(d_data, latent.view(), k_eval)?;
    let d_latent = DistanceMatrix::euclidean(latent.view());
    let kl = sigmas
        .iter()
        .map(|&s| Ok((s, kl_sigma(d_data.as_array().view(), d_latent.as_array().view(), s)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        MetricsReport {
            recon_mse,
            knn_recall: knn,
            kl,
            k_eval,
        },
        latent,
    ))
}
