//! Reconstruction, global distance-preservation, and local Jacobian losses,
//! plus the warm-up / decay schedule that combines them.
//!
//! Every batch loss is a mean over its batch (or pair set), so weights do
//! not depend on batch size. The plain functions here evaluate losses on
//! arrays; [`on_tape`] builds the same quantities as differentiable nodes.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Geodesic distances below this are clamped in the relative loss.
pub const REL_DENOM_CLAMP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GlobalMode {
    Absolute,
    Relative,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LocalMode {
    Isometric,
    Conformal,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_global: f64,
    pub lambda_local: f64,
    pub lambda_diag: f64,
    pub global_mode: GlobalMode,
    pub local_mode: LocalMode,
}

impl LossWeights {
    /// Plain reconstruction objective.
    pub fn vanilla() -> Self {
        Self {
            lambda_global: 0.0,
            lambda_local: 0.0,
            lambda_diag: 0.0,
            global_mode: GlobalMode::Relative,
            local_mode: LocalMode::None,
        }
    }

    /// Names of the weights that are negative or non-finite.
    pub fn invalid_fields(&self) -> Vec<&'static str> {
        [
            ("lambda_global", self.lambda_global),
            ("lambda_local", self.lambda_local),
            ("lambda_diag", self.lambda_diag),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v >= 0.0))
        .map(|(n, _)| n)
        .collect()
    }

    pub fn validate(&self) -> Result<()> {
        match self.invalid_fields().first() {
            Some(&name) => Err(Error::Parameter {
                name,
                reason: "must be finite and non-negative".into(),
            }),
            None => Ok(()),
        }
    }

    /// Whether a local term can contribute at all.
    pub fn local_enabled(&self) -> bool {
        self.local_mode != LocalMode::None && self.lambda_local > 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    /// Epochs during which the local loss is switched off.
    pub warmup_epochs: usize,
    /// `lambda_global` is multiplied by `exp(-decay_rate * epoch)`.
    pub decay_rate: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Self {
            warmup_epochs: 120,
            decay_rate: 0.0,
        }
    }
}

impl Schedule {
    pub fn local_active(&self, epoch: usize) -> bool {
        epoch >= self.warmup_epochs
    }
}

pub fn effective_lambda_global(schedule: &Schedule, base: f64, epoch: usize) -> f64 {
    base * (-schedule.decay_rate * epoch as f64).exp()
}

/// Mean over rows of the squared Euclidean reconstruction error.
pub fn recon_loss(x: ArrayView2<f64>, x_hat: ArrayView2<f64>) -> Result<f64> {
    if x.dim() != x_hat.dim() {
        return Err(shape_err(
            "recon_loss",
            format!("{:?}", x.dim()),
            format!("{:?}", x_hat.dim()),
        ));
    }
    if x.nrows() == 0 {
        return Err(Error::Degenerate("recon_loss on an empty batch".into()));
    }
    let total: f64 = x.iter().zip(x_hat.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(total / x.nrows() as f64)
}

fn check_pairs(context: &'static str, dm: &[f64], de: &[f64]) -> Result<()> {
    if dm.len() != de.len() {
        return Err(shape_err(context, dm.len(), de.len()));
    }
    if dm.is_empty() {
        return Err(Error::Degenerate(format!("{context} needs at least one pair")));
    }
    Ok(())
}

/// `mean (dM - dE)^2` over the given pairs.
pub fn global_loss_abs(dm: &[f64], de: &[f64]) -> Result<f64> {
    check_pairs("global_loss_abs", dm, de)?;
    let s: f64 = dm.iter().zip(de).map(|(m, e)| (m - e) * (m - e)).sum();
    Ok(s / dm.len() as f64)
}

/// `mean ((dM - dE) / dM)^2`, with `dM` clamped below at [`REL_DENOM_CLAMP`].
pub fn global_loss_rel(dm: &[f64], de: &[f64]) -> Result<f64> {
    check_pairs("global_loss_rel", dm, de)?;
    let s: f64 = dm
        .iter()
        .zip(de)
        .map(|(m, e)| {
            let r = (m - e) / m.max(REL_DENOM_CLAMP);
            r * r
        })
        .sum();
    Ok(s / dm.len() as f64)
}

pub fn global_loss(mode: GlobalMode, dm: &[f64], de: &[f64]) -> Result<f64> {
    match mode {
        GlobalMode::Absolute => global_loss_abs(dm, de),
        GlobalMode::Relative => global_loss_rel(dm, de),
    }
}

fn check_square_batch(context: &'static str, h: &[Array2<f64>]) -> Result<usize> {
    let l = h.first().map_or(0, |m| m.nrows());
    for m in h {
        if m.dim() != (l, l) {
            return Err(shape_err(context, format!("{l}x{l}"), format!("{:?}", m.dim())));
        }
    }
    Ok(l)
}

/// Mean over the batch of `||H - I||_F^2`.
pub fn local_iso_loss(h_batch: &[Array2<f64>]) -> Result<f64> {
    let l = check_square_batch("local_iso_loss", h_batch)?;
    if h_batch.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = h_batch
        .iter()
        .map(|h| {
            let mut acc = 0.0;
            for j in 0..l {
                for k in 0..l {
                    let d = h[[j, k]] - if j == k { 1.0 } else { 0.0 };
                    acc += d * d;
                }
            }
            acc
        })
        .sum();
    Ok(s / h_batch.len() as f64)
}

/// Mean over the batch of `sum_{j!=k} H_jk^2 + lambda_diag * sum_{j!=k} (H_jj - H_kk)^2`.
pub fn local_con_loss(h_batch: &[Array2<f64>], lambda_diag: f64) -> Result<f64> {
    let l = check_square_batch("local_con_loss", h_batch)?;
    if h_batch.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = h_batch
        .iter()
        .map(|h| {
            let (mut off, mut diag) = (0.0, 0.0);
            for j in 0..l {
                for k in 0..l {
                    if j != k {
                        off += h[[j, k]] * h[[j, k]];
                        let d = h[[j, j]] - h[[k, k]];
                        diag += d * d;
                    }
                }
            }
            off + lambda_diag * diag
        })
        .sum();
    Ok(s / h_batch.len() as f64)
}

pub fn local_loss(mode: LocalMode, h_batch: &[Array2<f64>], lambda_diag: f64) -> Result<f64> {
    match mode {
        LocalMode::Isometric => local_iso_loss(h_batch),
        LocalMode::Conformal => local_con_loss(h_batch, lambda_diag),
        LocalMode::None => Ok(0.0),
    }
}

/// Unweighted loss values for one evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub recon: f64,
    pub global: f64,
    pub local: f64,
}

/// The coefficients actually applied at `epoch`.
pub fn effective_weights(weights: &LossWeights, schedule: &Schedule, epoch: usize) -> (f64, f64) {
    let lg = effective_lambda_global(schedule, weights.lambda_global, epoch);
    let ll = if schedule.local_active(epoch) && weights.local_mode != LocalMode::None {
        weights.lambda_local
    } else {
        0.0
    };
    (lg, ll)
}

/// `recon + lambda_global_eff * global + lambda_local_eff * local`, where
/// the local coefficient is zero during warm-up.
pub fn total_loss(c: &LossComponents, weights: &LossWeights, epoch: usize, schedule: &Schedule) -> Result<f64> {
    for (name, v) in [("recon", c.recon), ("global", c.global), ("local", c.local)] {
        if !v.is_finite() {
            return Err(Error::NumericOverflow(format!("{name} loss")));
        }
    }
    let (lg, ll) = effective_weights(weights, schedule, epoch);
    let mut total = c.recon;
    if lg != 0.0 {
        total += lg * c.global;
    }
    if ll != 0.0 {
        total += ll * c.local;
    }
    Ok(total)
}

/// Differentiable versions of the losses.
pub mod on_tape {
    use ndarray::Array2;

    use super::{GlobalMode, LocalMode, REL_DENOM_CLAMP};
    use crate::autodiff::{Pairs, Tape, Var};

    /// Keeps `sqrt` differentiable when two latents coincide.
    const DIST_EPS: f64 = 1e-24;

    pub fn recon(tape: &mut Tape, x: Var, x_hat: Var) -> Var {
        let rows = tape.shape(x).0;
        let d = tape.sub(x, x_hat);
        let sq = tape.square(d);
        let s = tape.sum(sq);
        tape.scale(s, 1.0 / rows as f64)
    }

    /// Euclidean distances between latent rows for each pair, `P x 1`.
    pub fn pair_distances(tape: &mut Tape, z: Var, pairs: Pairs) -> Var {
        let diff = tape.pair_diff(z, pairs);
        let sq = tape.square(diff);
        let s = tape.sum_cols(sq);
        let s = tape.add_scalar(s, DIST_EPS);
        tape.sqrt(s)
    }

    /// `dm` holds the reference distances for the same pairs, `P x 1`.
    pub fn global(tape: &mut Tape, mode: GlobalMode, dm: &Array2<f64>, de: Var) -> Var {
        let p = dm.nrows();
        let dmv = tape.constant(dm.clone());
        let diff = tape.sub(dmv, de);
        let r = match mode {
            GlobalMode::Absolute => diff,
            GlobalMode::Relative => {
                let inv = tape.constant(dm.mapv(|m| 1.0 / m.max(REL_DENOM_CLAMP)));
                tape.mul(diff, inv)
            }
        };
        let sq = tape.square(r);
        let s = tape.sum(sq);
        tape.scale(s, 1.0 / p as f64)
    }

    /// Entries of `H = J^T J` per sample, from Jacobian rows as returned by
    /// [`Tape::batch_jacobian_rows`]. `h[j][k]` is `B x 1`.
    pub fn pullback_entries(tape: &mut Tape, jac_rows: &[Var]) -> Vec<Vec<Var>> {
        let l = tape.shape(jac_rows[0]).1;
        let selectors: Vec<Var> = (0..l)
            .map(|j| {
                let mut e = Array2::zeros((l, 1));
                e[[j, 0]] = 1.0;
                tape.constant(e)
            })
            .collect();
        // columns[i][j] = d out_i / d z_j for every sample
        let columns: Vec<Vec<Var>> = jac_rows
            .iter()
            .map(|&g| selectors.iter().map(|&e| tape.matmul(g, e)).collect())
            .collect();
        let mut h = vec![vec![None; l]; l];
        for j in 0..l {
            for k in j..l {
                let mut acc: Option<Var> = None;
                for col in &columns {
                    let p = tape.mul(col[j], col[k]);
                    acc = Some(match acc {
                        Some(a) => tape.add(a, p),
                        None => p,
                    });
                }
                h[j][k] = acc;
                h[k][j] = acc;
            }
        }
        h.into_iter()
            .map(|row| row.into_iter().map(|v| v.expect("filled")).collect())
            .collect()
    }

    fn batch_mean(tape: &mut Tape, terms: Vec<Var>) -> Var {
        let b = tape.shape(terms[0]).0;
        let mut acc = terms[0];
        for &t in &terms[1..] {
            acc = tape.add(acc, t);
        }
        let s = tape.sum(acc);
        tape.scale(s, 1.0 / b as f64)
    }

    pub fn local_iso(tape: &mut Tape, h: &[Vec<Var>]) -> Var {
        let l = h.len();
        let mut terms = Vec::with_capacity(l * l);
        for (j, row) in h.iter().enumerate() {
            for (k, &hjk) in row.iter().enumerate() {
                let d = if j == k { tape.add_scalar(hjk, -1.0) } else { hjk };
                terms.push(tape.square(d));
            }
        }
        batch_mean(tape, terms)
    }

    pub fn local_con(tape: &mut Tape, h: &[Vec<Var>], lambda_diag: f64) -> Var {
        let l = h.len();
        let mut terms = Vec::new();
        for j in 0..l {
            for k in 0..l {
                if j == k {
                    continue;
                }
                terms.push(tape.square(h[j][k]));
                if lambda_diag != 0.0 {
                    let d = tape.sub(h[j][j], h[k][k]);
                    let sq = tape.square(d);
                    terms.push(tape.scale(sq, lambda_diag));
                }
            }
        }
        if terms.is_empty() {
            // one latent dimension: every 1x1 H is conformal
            return tape.constant(Array2::zeros((1, 1)));
        }
        batch_mean(tape, terms)
    }

    pub fn local(tape: &mut Tape, mode: LocalMode, h: &[Vec<Var>], lambda_diag: f64) -> Option<Var> {
        match mode {
            LocalMode::Isometric => Some(local_iso(tape, h)),
            LocalMode::Conformal => Some(local_con(tape, h, lambda_diag)),
            LocalMode::None => None,
        }
    }
}
