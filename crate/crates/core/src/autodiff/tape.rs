//! Reverse-mode tape over dense `f64` matrices.
//!
//! Every value on the tape is a 2-D array; scalars are `1x1`. The backward
//! pass emits its vector-Jacobian products as ordinary tape operations, so a
//! gradient can itself be differentiated. This is what lets a loss defined on
//! a Jacobian be trained with first-order methods.

use std::sync::Arc;

use ndarray::{Array2, Axis, Zip};

use crate::error::{shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Row pairs for [`Tape::pair_diff`]: row `p` of the result is `a[i] - a[j]`.
pub type Pairs = Arc<[(usize, usize)]>;

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param,
    Const,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    AddRow(Var, Var),
    SumRows(Var),
    BroadcastRows(Var, usize),
    SumCols(Var),
    BroadcastCols(Var, usize),
    SumAll(Var),
    Fill(Var, usize, usize),
    Tanh(Var),
    Sqrt(Var),
    PairDiff(Var, Pairs),
    PairScatter(Var, Pairs, usize),
}

impl Op {
    fn parents(&self) -> [Option<Var>; 2] {
        use Op::*;
        match *self {
            Input | Param | Const => [None, None],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) | AddRow(a, b) => [Some(a), Some(b)],
            Transpose(a)
            | Scale(a, _)
            | AddScalar(a, _)
            | SumRows(a)
            | BroadcastRows(a, _)
            | SumCols(a)
            | BroadcastCols(a, _)
            | SumAll(a)
            | Fill(a, _, _)
            | Tanh(a)
            | Sqrt(a)
            | PairDiff(a, _)
            | PairScatter(a, _, _) => [Some(a), None],
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input | Op::Param | Op::Const)
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    value: Array2<f64>,
}

/// Gradients keyed by the leaf they belong to.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    entries: Vec<(Var, Array2<f64>)>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Array2<f64>> {
        self.entries.iter().find(|(v, _)| *v == var).map(|(_, g)| g)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Var, &Array2<f64>)> {
        self.entries.iter().map(|(v, g)| (*v, g))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// A single-owner computation record.
///
/// Nodes are stored in creation order, so every node's inputs precede it.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    inputs: Vec<Var>,
    params: Vec<Var>,
    higher_order: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape whose backward passes may be recorded and differentiated again.
    pub fn with_higher_order() -> Self {
        Self {
            higher_order: true,
            ..Self::default()
        }
    }

    pub fn supports_higher_order(&self) -> bool {
        self.higher_order
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &Array2<f64> {
        &self.nodes[var.0].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        let v = self.value(var);
        debug_assert_eq!(v.dim(), (1, 1));
        v[[0, 0]]
    }

    pub fn shape(&self, var: Var) -> (usize, usize) {
        self.nodes[var.0].value.dim()
    }

    pub fn inputs(&self) -> &[Var] {
        &self.inputs
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    fn push(&mut self, op: Op, value: Array2<f64>) -> Var {
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    /// Registers an input leaf. Inputs are replaced by [`Tape::forward`].
    pub fn input(&mut self, value: Array2<f64>) -> Var {
        let v = self.push(Op::Input, value);
        self.inputs.push(v);
        v
    }

    /// Registers a trainable parameter leaf.
    pub fn param(&mut self, value: Array2<f64>) -> Var {
        let v = self.push(Op::Param, value);
        self.params.push(v);
        v
    }

    pub fn constant(&mut self, value: Array2<f64>) -> Var {
        self.push(Op::Const, value)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    fn record(&mut self, op: Op) -> Var {
        let value = self.evaluate(&op);
        self.push(op, value)
    }

    fn evaluate(&self, op: &Op) -> Array2<f64> {
        let val = |v: Var| &self.nodes[v.0].value;
        match op {
            Op::Input | Op::Param | Op::Const => unreachable!("leaves carry their own value"),
            Op::MatMul(a, b) => val(*a).dot(val(*b)),
            Op::Transpose(a) => val(*a).t().as_standard_layout().into_owned(),
            Op::Add(a, b) => val(*a) + val(*b),
            Op::Sub(a, b) => val(*a) - val(*b),
            Op::Mul(a, b) => val(*a) * val(*b),
            Op::Div(a, b) => val(*a) / val(*b),
            Op::Scale(a, c) => val(*a) * *c,
            Op::AddScalar(a, c) => val(*a) + *c,
            Op::AddRow(a, r) => val(*a) + val(*r),
            Op::SumRows(a) => val(*a).sum_axis(Axis(0)).insert_axis(Axis(0)),
            Op::BroadcastRows(r, m) => {
                let r = val(*r);
                r.broadcast((*m, r.ncols())).unwrap().to_owned()
            }
            Op::SumCols(a) => val(*a).sum_axis(Axis(1)).insert_axis(Axis(1)),
            Op::BroadcastCols(c, n) => {
                let c = val(*c);
                c.broadcast((c.nrows(), *n)).unwrap().to_owned()
            }
            Op::SumAll(a) => Array2::from_elem((1, 1), val(*a).sum()),
            Op::Fill(s, m, n) => Array2::from_elem((*m, *n), val(*s)[[0, 0]]),
            Op::Tanh(a) => val(*a).mapv(f64::tanh),
            Op::Sqrt(a) => val(*a).mapv(f64::sqrt),
            Op::PairDiff(a, pairs) => {
                let a = val(*a);
                let mut out = Array2::zeros((pairs.len(), a.ncols()));
                for (mut row, &(i, j)) in out.rows_mut().into_iter().zip(pairs.iter()) {
                    Zip::from(&mut row)
                        .and(a.row(i))
                        .and(a.row(j))
                        .for_each(|o, &x, &y| *o = x - y);
                }
                out
            }
            Op::PairScatter(g, pairs, m) => {
                let g = val(*g);
                let mut out = Array2::zeros((*m, g.ncols()));
                for (row, &(i, j)) in g.rows().into_iter().zip(pairs.iter()) {
                    out.row_mut(i).scaled_add(1.0, &row);
                    out.row_mut(j).scaled_add(-1.0, &row);
                }
                out
            }
        }
    }

    fn check_same(&self, context: &'static str, a: Var, b: Var) {
        let (sa, sb) = (self.shape(a), self.shape(b));
        assert_eq!(sa, sb, "{context}: operand shapes differ");
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a).1, self.shape(b).0, "matmul: inner dimensions differ");
        self.record(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        self.record(Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.check_same("add", a, b);
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.check_same("sub", a, b);
        self.record(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.check_same("mul", a, b);
        self.record(Op::Mul(a, b))
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.check_same("div", a, b);
        self.record(Op::Div(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.record(Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.record(Op::AddScalar(a, c))
    }

    /// Adds the `1 x n` row `r` to every row of `a`.
    pub fn add_row(&mut self, a: Var, r: Var) -> Var {
        let cols = self.shape(a).1;
        assert_eq!(self.shape(r), (1, cols), "add_row: bias shape");
        self.record(Op::AddRow(a, r))
    }

    /// Column sums, `m x n -> 1 x n`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        self.record(Op::SumRows(a))
    }

    pub fn broadcast_rows(&mut self, r: Var, m: usize) -> Var {
        assert_eq!(self.shape(r).0, 1);
        self.record(Op::BroadcastRows(r, m))
    }

    /// Row sums, `m x n -> m x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        self.record(Op::SumCols(a))
    }

    pub fn broadcast_cols(&mut self, c: Var, n: usize) -> Var {
        assert_eq!(self.shape(c).1, 1);
        self.record(Op::BroadcastCols(c, n))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.record(Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let (m, n) = self.shape(a);
        let s = self.sum(a);
        self.scale(s, 1.0 / (m * n) as f64)
    }

    pub fn fill(&mut self, s: Var, m: usize, n: usize) -> Var {
        assert_eq!(self.shape(s), (1, 1));
        self.record(Op::Fill(s, m, n))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.record(Op::Tanh(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.record(Op::Sqrt(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.record(Op::Mul(a, a))
    }

    pub fn pair_diff(&mut self, a: Var, pairs: Pairs) -> Var {
        let m = self.shape(a).0;
        assert!(
            pairs.iter().all(|&(i, j)| i < m && j < m),
            "pair_diff: index out of range"
        );
        self.record(Op::PairDiff(a, pairs))
    }

    pub fn pair_scatter(&mut self, g: Var, pairs: Pairs, m: usize) -> Var {
        assert_eq!(self.shape(g).0, pairs.len());
        assert!(
            pairs.iter().all(|&(i, j)| i < m && j < m),
            "pair_scatter: index out of range"
        );
        self.record(Op::PairScatter(g, pairs, m))
    }

    /// Replaces the registered input leaves and recomputes every node.
    pub fn forward(&mut self, inputs: &[Array2<f64>]) -> Result<()> {
        if inputs.len() != self.inputs.len() {
            return Err(shape_err("forward inputs", self.inputs.len(), inputs.len()));
        }
        for (&var, value) in self.inputs.iter().zip(inputs) {
            let have = self.nodes[var.0].value.dim();
            if have != value.dim() {
                return Err(shape_err(
                    "forward input",
                    format!("{have:?}"),
                    format!("{:?}", value.dim()),
                ));
            }
        }
        for (var, value) in self.inputs.clone().into_iter().zip(inputs) {
            self.nodes[var.0].value = value.clone();
        }
        self.replay();
        Ok(())
    }

    /// Overwrites a leaf value without replaying.
    pub fn set_leaf(&mut self, var: Var, value: Array2<f64>) {
        let node = &mut self.nodes[var.0];
        assert!(node.op.is_leaf(), "set_leaf on an interior node");
        assert_eq!(node.value.dim(), value.dim(), "set_leaf: shape");
        node.value = value;
    }

    /// Recomputes every interior node in order from the current leaf values.
    pub fn replay(&mut self) {
        for i in 0..self.nodes.len() {
            if !self.nodes[i].op.is_leaf() {
                let op = self.nodes[i].op.clone();
                self.nodes[i].value = self.evaluate(&op);
            }
        }
    }

    /// Records the vector-Jacobian product of `output` with `cotangent`
    /// against each of `wrt` as new tape nodes. Entries are `None` for
    /// variables that `output` does not depend on.
    ///
    /// Only nodes on a path from some `wrt` to `output` are visited, so the
    /// gradient stops at `wrt` even if those variables have ancestors.
    pub fn grad_graph(&mut self, output: Var, cotangent: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if !self.higher_order {
            return Err(Error::Capability("a recorded (differentiable) backward pass"));
        }
        self.grad_graph_unchecked(output, cotangent, wrt)
    }

    fn grad_graph_unchecked(&mut self, output: Var, cotangent: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>> {
        if self.shape(cotangent) != self.shape(output) {
            return Err(shape_err(
                "cotangent",
                format!("{:?}", self.shape(output)),
                format!("{:?}", self.shape(cotangent)),
            ));
        }
        let end = output.0 + 1;
        let mut relevant = vec![false; end];
        for &w in wrt {
            if w.0 < end {
                relevant[w.0] = true;
            }
        }
        let start = wrt.iter().map(|w| w.0).min().unwrap_or(end);
        for i in start..end {
            if !relevant[i] {
                relevant[i] = self.nodes[i].op.parents().iter().flatten().any(|p| relevant[p.0]);
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        grads[output.0] = Some(cotangent);
        for i in (start..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !relevant[i] {
                continue;
            }
            let op = self.nodes[i].op.clone();
            if op.is_leaf() {
                continue;
            }
            for (parent, contribution) in self.vjp(&op, Var(i), g) {
                if !relevant[parent.0] {
                    continue;
                }
                grads[parent.0] = Some(match grads[parent.0] {
                    Some(prev) => self.record(Op::Add(prev, contribution)),
                    None => contribution,
                });
            }
        }
        Ok(wrt.iter().map(|w| grads.get(w.0).copied().flatten()).collect())
    }

    /// Emits `(parent, g * d(out)/d(parent))` for each parent of `op`.
    fn vjp(&mut self, op: &Op, out: Var, g: Var) -> Vec<(Var, Var)> {
        let mut result = Vec::with_capacity(2);
        match op {
            Op::Input | Op::Param | Op::Const => {}
            Op::MatMul(a, b) => {
                let bt = self.record(Op::Transpose(*b));
                let ga = self.record(Op::MatMul(g, bt));
                let at = self.record(Op::Transpose(*a));
                let gb = self.record(Op::MatMul(at, g));
                result.push((*a, ga));
                result.push((*b, gb));
            }
            Op::Transpose(a) => {
                let ga = self.record(Op::Transpose(g));
                result.push((*a, ga));
            }
            Op::Add(a, b) => {
                result.push((*a, g));
                result.push((*b, g));
            }
            Op::Sub(a, b) => {
                result.push((*a, g));
                let gb = self.record(Op::Scale(g, -1.0));
                result.push((*b, gb));
            }
            Op::Mul(a, b) => {
                let ga = self.record(Op::Mul(g, *b));
                result.push((*a, ga));
                let gb = if a == b { ga } else { self.record(Op::Mul(g, *a)) };
                result.push((*b, gb));
            }
            Op::Div(a, b) => {
                let ga = self.record(Op::Div(g, *b));
                let t = self.record(Op::Mul(ga, out));
                let gb = self.record(Op::Scale(t, -1.0));
                result.push((*a, ga));
                result.push((*b, gb));
            }
            Op::Scale(a, c) => {
                let ga = self.record(Op::Scale(g, *c));
                result.push((*a, ga));
            }
            Op::AddScalar(a, _) => result.push((*a, g)),
            Op::AddRow(a, r) => {
                result.push((*a, g));
                let gr = self.record(Op::SumRows(g));
                result.push((*r, gr));
            }
            Op::SumRows(a) => {
                let m = self.shape(*a).0;
                let ga = self.record(Op::BroadcastRows(g, m));
                result.push((*a, ga));
            }
            Op::BroadcastRows(r, _) => {
                let gr = self.record(Op::SumRows(g));
                result.push((*r, gr));
            }
            Op::SumCols(a) => {
                let n = self.shape(*a).1;
                let ga = self.record(Op::BroadcastCols(g, n));
                result.push((*a, ga));
            }
            Op::BroadcastCols(c, _) => {
                let gc = self.record(Op::SumCols(g));
                result.push((*c, gc));
            }
            Op::SumAll(a) => {
                let (m, n) = self.shape(*a);
                let ga = self.record(Op::Fill(g, m, n));
                result.push((*a, ga));
            }
            Op::Fill(s, _, _) => {
                let gs = self.record(Op::SumAll(g));
                result.push((*s, gs));
            }
            Op::Tanh(a) => {
                // d tanh = 1 - tanh^2, expressed on the output node
                let y2 = self.record(Op::Mul(out, out));
                let neg = self.record(Op::Scale(y2, -1.0));
                let d = self.record(Op::AddScalar(neg, 1.0));
                let ga = self.record(Op::Mul(g, d));
                result.push((*a, ga));
            }
            Op::Sqrt(a) => {
                let half = self.record(Op::Scale(g, 0.5));
                let ga = self.record(Op::Div(half, out));
                result.push((*a, ga));
            }
            Op::PairDiff(a, pairs) => {
                let m = self.shape(*a).0;
                let ga = self.record(Op::PairScatter(g, pairs.clone(), m));
                result.push((*a, ga));
            }
            Op::PairScatter(a, pairs, _) => {
                let ga = self.record(Op::PairDiff(g, pairs.clone()));
                result.push((*a, ga));
            }
        }
        result
    }

    /// Values of `d output / d wrt` contracted with `cotangent`. Nodes
    /// created by the pass are discarded afterwards, so this works on any
    /// tape.
    pub fn vjp_values(
        &mut self,
        output: Var,
        cotangent: &Array2<f64>,
        wrt: &[Var],
    ) -> Result<Vec<Option<Array2<f64>>>> {
        let mark = self.nodes.len();
        let c = self.constant(cotangent.clone());
        let grads = self.grad_graph_unchecked(output, c, wrt);
        let result = grads.map(|gs| {
            gs.into_iter()
                .map(|g| g.map(|v| self.nodes[v.0].value.clone()))
                .collect()
        });
        self.nodes.truncate(mark);
        result
    }

    /// Gradient of a scalar `output` with respect to `wrt`; unreachable
    /// variables get a zero array of their own shape.
    pub fn gradients(&mut self, output: Var, wrt: &[Var]) -> Result<Vec<Array2<f64>>> {
        if self.shape(output) != (1, 1) {
            return Err(shape_err(
                "gradients output",
                "1x1",
                format!("{:?}", self.shape(output)),
            ));
        }
        let one = Array2::from_elem((1, 1), 1.0);
        let grads = self.vjp_values(output, &one, wrt)?;
        Ok(grads
            .into_iter()
            .zip(wrt)
            .map(|(g, w)| g.unwrap_or_else(|| Array2::zeros(self.shape(*w))))
            .collect())
    }

    /// Reverse pass from `output` against every registered leaf.
    pub fn backward(&mut self, output: Var, cotangent: &Array2<f64>) -> Result<Gradients> {
        let leaves: Vec<Var> = self.inputs.iter().chain(&self.params).copied().collect();
        let grads = self.vjp_values(output, cotangent, &leaves)?;
        Ok(Gradients {
            entries: leaves
                .into_iter()
                .zip(grads)
                .filter_map(|(v, g)| g.map(|g| (v, g)))
                .collect(),
        })
    }
}
