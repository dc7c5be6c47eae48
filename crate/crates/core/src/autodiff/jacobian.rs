use ndarray::Array2;

use super::tape::{Tape, Var};
use crate::error::{shape_err, Error, Result};

/// Dense Jacobian; entry `(i, j)` is `d output_i / d input_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct Jacobian {
    matrix: Array2<f64>,
}

impl Jacobian {
    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> Array2<f64> {
        self.matrix
    }

    /// `J^T J`, filled symmetrically so the result is exactly symmetric.
    pub fn gram(&self) -> Array2<f64> {
        gram(&self.matrix)
    }
}

pub(crate) fn gram(j: &Array2<f64>) -> Array2<f64> {
    let c = j.ncols();
    let mut h = Array2::zeros((c, c));
    for a in 0..c {
        for b in a..c {
            let v: f64 = j.column(a).iter().zip(j.column(b)).map(|(x, y)| x * y).sum();
            h[[a, b]] = v;
            h[[b, a]] = v;
        }
    }
    h
}

impl Tape {
    /// Jacobian of `output` with respect to `input`, both flattened row-major.
    /// One reverse pass per output entry.
    pub fn jacobian(&mut self, output: Var, input: Var) -> Result<Jacobian> {
        let (or, oc) = self.shape(output);
        let n_in = {
            let (r, c) = self.shape(input);
            r * c
        };
        let n_out = or * oc;
        let mut matrix = Array2::zeros((n_out, n_in));
        let mut cot = Array2::zeros((or, oc));
        for k in 0..n_out {
            cot[[k / oc, k % oc]] = 1.0;
            let g = self.vjp_values(output, &cot, &[input])?;
            cot[[k / oc, k % oc]] = 0.0;
            if let Some(g) = &g[0] {
                for (dst, src) in matrix.row_mut(k).iter_mut().zip(g.iter()) {
                    *dst = *src;
                }
            }
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericOverflow("jacobian".into()));
        }
        Ok(Jacobian { matrix })
    }

    /// Per-row Jacobians of a row-wise map, recorded on the tape.
    ///
    /// `output` is `B x out` and `input` is `B x in`, where row `b` of the
    /// output depends only on row `b` of the input. Returns `out` variables,
    /// each `B x in`; row `b` of the `i`-th one is row `i` of the Jacobian at
    /// sample `b`. The results can be differentiated again.
    pub fn batch_jacobian_rows(&mut self, output: Var, input: Var) -> Result<Vec<Var>> {
        if !self.supports_higher_order() {
            return Err(Error::Capability("batch_jacobian_rows"));
        }
        let (b, out) = self.shape(output);
        if self.shape(input).0 != b {
            return Err(shape_err("batch_jacobian_rows", b, self.shape(input).0));
        }
        let mut rows = Vec::with_capacity(out);
        for i in 0..out {
            let mut cot = Array2::zeros((b, out));
            cot.column_mut(i).fill(1.0);
            let c = self.constant(cot);
            let g = self.grad_graph(output, c, &[input])?[0];
            let g = match g {
                Some(g) => g,
                None => self.constant(Array2::zeros(self.shape(input))),
            };
            rows.push(g);
        }
        Ok(rows)
    }
}

/// Builds the Jacobian of `output` w.r.t. the `1 x in` row `input` on the
/// tape, hands its rows to `loss`, and returns the gradient of that scalar
/// loss with respect to `wrt`.
pub fn jacobian_with_grad<F>(tape: &mut Tape, output: Var, input: Var, wrt: &[Var], loss: F) -> Result<Vec<Array2<f64>>>
where
    F: FnOnce(&mut Tape, &[Var]) -> Var,
{
    if !tape.supports_higher_order() {
        return Err(Error::Capability("jacobian_with_grad"));
    }
    let rows = tape.batch_jacobian_rows(output, input)?;
    let l = loss(tape, &rows);
    if !tape.scalar(l).is_finite() {
        return Err(Error::NumericOverflow("loss on jacobian".into()));
    }
    tape.gradients(l, wrt)
}
