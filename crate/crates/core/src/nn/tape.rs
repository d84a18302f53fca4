//! Reverse-mode gradient tape over dense `f64` matrices.
//!
//! Values are computed eagerly as nodes are pushed. [`Tape::grad`] walks the
//! tape backwards and expresses every vector-Jacobian product with ordinary
//! tape operations, so a gradient is itself a differentiable node. The
//! gradient penalty relies on this: it differentiates the input-gradient
//! norm of a critic with respect to the critic's weights.
//!
//! Shapes are always two-dimensional; scalars are 1×1, row vectors 1×n and
//! per-row quantities B×1.

use ndarray::{concatenate, s, Array2, Axis, Zip};

use crate::error::{Error, Result};

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    /// r×c plus a 1×c row, broadcast down the rows.
    AddRow(Var, Var),
    /// 1×c → rows×c.
    BroadcastRows(Var),
    /// r×1 → r×cols.
    BroadcastCols(Var),
    /// 1×1 → rows×cols.
    BroadcastScalar(Var),
    /// r×c → 1×c (column sums).
    SumRows(Var),
    /// r×c → r×1 (row sums).
    SumCols(Var),
    SumAll(Var),
    LeakyRelu(Var, f64),
    Exp(Var),
    Log(Var),
    Sqrt(Var),
    /// 1/x, with 1/0 defined as 0.
    SafeRecip(Var),
    Abs(Var),
    /// Value clamp with an identity gradient; only used to absorb rounding.
    ClampValue(Var),
    Concat(Vec<Var>),
    SliceCols(Var, usize),
    /// Places a r×w block at column `start` of an r×total zero matrix.
    EmbedCols(Var, usize),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Operation record for one scalar computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn leaky(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that gradients can be taken with respect to.
    pub fn var(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push_raw(value, Op::Leaf, false)
    }

    pub fn scalar_constant(&mut self, value: f64) -> Var {
        self.constant(Array2::from_elem((1, 1), value))
    }

    /// Stop-gradient: a constant copy of `v`'s current value.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v).clone();
        self.constant(value)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push_raw(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_raw(value, op, requires_grad)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dim()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (_, ac) = self.shape(a);
        let (br, _) = self.shape(b);
        assert_eq!(ac, br, "matmul inner dimension mismatch");
        let value = self.value(a).dot(self.value(b));
        self.push(value, Op::MatMul(a, b), &[a, b])
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).t().to_owned();
        self.push(value, Op::Transpose(a), &[a])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "add shape mismatch");
        let value = self.value(a) + self.value(b);
        self.push(value, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "sub shape mismatch");
        let value = self.value(a) - self.value(b);
        self.push(value, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        assert_eq!(self.shape(a), self.shape(b), "mul shape mismatch");
        let value = self.value(a) * self.value(b);
        self.push(value, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) * k;
        self.push(value, Op::Scale(a, k), &[a])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a) + k;
        self.push(value, Op::AddScalar(a), &[a])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (_, c) = self.shape(a);
        assert_eq!(self.shape(row), (1, c), "add_row expects a 1×c row");
        let value = self.value(a) + self.value(row);
        self.push(value, Op::AddRow(a, row), &[a, row])
    }

    pub fn broadcast_rows(&mut self, row: Var, rows: usize) -> Var {
        let (r, c) = self.shape(row);
        assert_eq!(r, 1, "broadcast_rows expects a 1×c row");
        let value = self
            .value(row)
            .broadcast((rows, c))
            .expect("broadcast")
            .to_owned();
        self.push(value, Op::BroadcastRows(row), &[row])
    }

    pub fn broadcast_cols(&mut self, col: Var, cols: usize) -> Var {
        let (r, c) = self.shape(col);
        assert_eq!(c, 1, "broadcast_cols expects an r×1 column");
        let value = self
            .value(col)
            .broadcast((r, cols))
            .expect("broadcast")
            .to_owned();
        self.push(value, Op::BroadcastCols(col), &[col])
    }

    pub fn broadcast_scalar(&mut self, s: Var, rows: usize, cols: usize) -> Var {
        assert_eq!(self.shape(s), (1, 1), "broadcast_scalar expects 1×1");
        let value = Array2::from_elem((rows, cols), self.value(s)[[0, 0]]);
        self.push(value, Op::BroadcastScalar(s), &[s])
    }

    pub fn sum_rows(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.push(value, Op::SumRows(a), &[a])
    }

    pub fn sum_cols(&mut self, a: Var) -> Var {
        let value = self.value(a).sum_axis(Axis(1)).insert_axis(Axis(1));
        self.push(value, Op::SumCols(a), &[a])
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Array2::from_elem((1, 1), self.value(a).sum());
        self.push(value, Op::SumAll(a), &[a])
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).len();
        assert!(n > 0, "mean of an empty tensor");
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n as f64)
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let value = self.value(a).mapv(|x| leaky(x, slope));
        self.push(value, Op::LeakyRelu(a, slope), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::ln);
        self.push(value, Op::Log(a), &[a])
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::sqrt);
        self.push(value, Op::Sqrt(a), &[a])
    }

    pub fn safe_recip(&mut self, a: Var) -> Var {
        let value = self
            .value(a)
            .mapv(|x| if x == 0.0 { 0.0 } else { 1.0 / x });
        self.push(value, Op::SafeRecip(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let value = self.value(a).mapv(f64::abs);
        self.push(value, Op::Abs(a), &[a])
    }

    pub fn clamp_value(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let value = self.value(a).mapv(|x| x.clamp(lo, hi));
        self.push(value, Op::ClampValue(a), &[a])
    }

    /// Column-wise concatenation; all parts share the row count.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat of nothing");
        let views: Vec<_> = parts.iter().map(|v| self.value(*v).view()).collect();
        let value = concatenate(Axis(1), &views).expect("concat row mismatch");
        self.push(value, Op::Concat(parts.to_vec()), parts)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, width: usize) -> Var {
        let value = self
            .value(a)
            .slice(s![.., start..start + width])
            .to_owned();
        self.push(value, Op::SliceCols(a, start), &[a])
    }

    pub fn embed_cols(&mut self, a: Var, start: usize, total: usize) -> Var {
        let (r, w) = self.shape(a);
        assert!(start + w <= total, "embed out of range");
        let mut value = Array2::zeros((r, total));
        value
            .slice_mut(s![.., start..start + w])
            .assign(self.value(a));
        self.push(value, Op::EmbedCols(a, start), &[a])
    }

    /// Row-wise log-softmax with max subtraction. The shift is a constant, so
    /// gradients are those of the unshifted expression.
    pub fn log_softmax_rows(&mut self, logits: Var) -> Var {
        let (_, c) = self.shape(logits);
        let maxes = self
            .value(logits)
            .map_axis(Axis(1), |row| row.fold(f64::NEG_INFINITY, |m, &x| m.max(x)))
            .insert_axis(Axis(1));
        let m = self.constant(maxes);
        let mb = self.broadcast_cols(m, c);
        let shifted = self.sub(logits, mb);
        let e = self.exp(shifted);
        let z = self.sum_cols(e);
        let lse = self.log(z);
        let lse_b = self.broadcast_cols(lse, c);
        self.sub(shifted, lse_b)
    }

    /// Euclidean norm of each row, r×1. Zero rows have zero norm and a zero
    /// subgradient.
    pub fn row_norms(&mut self, a: Var) -> Var {
        let sq = self.mul(a, a);
        let ss = self.sum_cols(sq);
        self.sqrt(ss)
    }

    /// Gradients of the scalar `y` with respect to each of `wrt`.
    ///
    /// The returned nodes live on this tape and are differentiable in turn.
    /// Inputs `y` does not depend on get a zero constant.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Var>> {
        if y.0 >= self.nodes.len() {
            return Err(Error::Usage(format!(
                "node {} is not on this tape (len {})",
                y.0,
                self.nodes.len()
            )));
        }
        if self.shape(y) != (1, 1) {
            return Err(Error::Usage(format!(
                "gradient target must be a scalar, got shape {:?}",
                self.shape(y)
            )));
        }
        if let Some(bad) = wrt.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(Error::Usage(format!("node {} is not on this tape", bad.0)));
        }

        // Nodes up to y that depend on something in wrt.
        let mut relevant = vec![false; y.0 + 1];
        for v in wrt {
            if v.0 <= y.0 {
                relevant[v.0] = true;
            }
        }
        for i in 0..=y.0 {
            if relevant[i] {
                continue;
            }
            relevant[i] = self.inputs(i).iter().any(|v| relevant[v.0]);
        }

        let mut adjoint: Vec<Option<Var>> = vec![None; y.0 + 1];
        if relevant[y.0] {
            adjoint[y.0] = Some(self.scalar_constant(1.0));
        }
        for i in (0..=y.0).rev() {
            let Some(g) = adjoint[i] else { continue };
            let op = self.nodes[i].op.clone();
            for (input, contribution) in self.vjp(Var(i), &op, g, &relevant) {
                adjoint[input.0] = Some(match adjoint[input.0] {
                    None => contribution,
                    Some(prev) => self.add(prev, contribution),
                });
            }
        }

        Ok(wrt
            .iter()
            .map(|v| match adjoint.get(v.0).copied().flatten() {
                Some(g) => g,
                None => {
                    let zeros = Array2::zeros(self.shape(*v));
                    self.constant(zeros)
                }
            })
            .collect())
    }

    fn inputs(&self, i: usize) -> Vec<Var> {
        match &self.nodes[i].op {
            Op::Leaf => vec![],
            Op::MatMul(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::AddRow(a, b) => vec![*a, *b],
            Op::Transpose(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::BroadcastRows(a)
            | Op::BroadcastCols(a)
            | Op::BroadcastScalar(a)
            | Op::SumRows(a)
            | Op::SumCols(a)
            | Op::SumAll(a)
            | Op::LeakyRelu(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sqrt(a)
            | Op::SafeRecip(a)
            | Op::Abs(a)
            | Op::ClampValue(a)
            | Op::SliceCols(a, _)
            | Op::EmbedCols(a, _) => vec![*a],
            Op::Concat(parts) => parts.clone(),
        }
    }

    /// Contributions of upstream gradient `g` at node `out` to its relevant inputs.
    fn vjp(&mut self, out: Var, op: &Op, g: Var, relevant: &[bool]) -> Vec<(Var, Var)> {
        let want = |v: &Var| relevant[v.0];
        let mut res = Vec::new();
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if want(&a) {
                    let bt = self.transpose(b);
                    res.push((a, self.matmul(g, bt)));
                }
                if want(&b) {
                    let at = self.transpose(a);
                    res.push((b, self.matmul(at, g)));
                }
            }
            Op::Transpose(a) => {
                if want(&a) {
                    res.push((a, self.transpose(g)));
                }
            }
            Op::Add(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, g));
                }
            }
            Op::Sub(a, b) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&b) {
                    res.push((b, self.neg(g)));
                }
            }
            Op::Mul(a, b) => {
                if want(&a) {
                    res.push((a, self.mul(g, b)));
                }
                if want(&b) {
                    res.push((b, self.mul(g, a)));
                }
            }
            Op::Scale(a, k) => {
                if want(&a) {
                    res.push((a, self.scale(g, k)));
                }
            }
            Op::AddScalar(a) | Op::ClampValue(a) => {
                if want(&a) {
                    res.push((a, g));
                }
            }
            Op::AddRow(a, row) => {
                if want(&a) {
                    res.push((a, g));
                }
                if want(&row) {
                    res.push((row, self.sum_rows(g)));
                }
            }
            Op::BroadcastRows(a) => {
                if want(&a) {
                    res.push((a, self.sum_rows(g)));
                }
            }
            Op::BroadcastCols(a) => {
                if want(&a) {
                    res.push((a, self.sum_cols(g)));
                }
            }
            Op::BroadcastScalar(a) => {
                if want(&a) {
                    res.push((a, self.sum_all(g)));
                }
            }
            Op::SumRows(a) => {
                if want(&a) {
                    let (r, _) = self.shape(a);
                    res.push((a, self.broadcast_rows(g, r)));
                }
            }
            Op::SumCols(a) => {
                if want(&a) {
                    let (_, c) = self.shape(a);
                    res.push((a, self.broadcast_cols(g, c)));
                }
            }
            Op::SumAll(a) => {
                if want(&a) {
                    let (r, c) = self.shape(a);
                    res.push((a, self.broadcast_scalar(g, r, c)));
                }
            }
            Op::LeakyRelu(a, slope) => {
                if want(&a) {
                    // Piecewise-constant slope mask; its own derivative is zero a.e.
                    let mask = self
                        .value(a)
                        .mapv(|x| if x > 0.0 { 1.0 } else { slope });
                    let m = self.constant(mask);
                    res.push((a, self.mul(g, m)));
                }
            }
            Op::Exp(a) => {
                if want(&a) {
                    res.push((a, self.mul(g, out)));
                }
            }
            Op::Log(a) => {
                if want(&a) {
                    let r = self.safe_recip(a);
                    res.push((a, self.mul(g, r)));
                }
            }
            Op::Sqrt(a) => {
                if want(&a) {
                    let r = self.safe_recip(out);
                    let half = self.scale(r, 0.5);
                    res.push((a, self.mul(g, half)));
                }
            }
            Op::SafeRecip(a) => {
                if want(&a) {
                    let r2 = self.mul(out, out);
                    let gr2 = self.mul(g, r2);
                    res.push((a, self.neg(gr2)));
                }
            }
            Op::Abs(a) => {
                if want(&a) {
                    let sign = self.value(a).mapv(|x| {
                        if x > 0.0 {
                            1.0
                        } else if x < 0.0 {
                            -1.0
                        } else {
                            0.0
                        }
                    });
                    let sv = self.constant(sign);
                    res.push((a, self.mul(g, sv)));
                }
            }
            Op::Concat(ref parts) => {
                let mut offset = 0;
                for p in parts {
                    let (_, w) = self.shape(*p);
                    if want(p) {
                        res.push((*p, self.slice_cols(g, offset, w)));
                    }
                    offset += w;
                }
            }
            Op::SliceCols(a, start) => {
                if want(&a) {
                    let (_, total) = self.shape(a);
                    res.push((a, self.embed_cols(g, start, total)));
                }
            }
            Op::EmbedCols(a, start) => {
                if want(&a) {
                    let (_, w) = self.shape(a);
                    res.push((a, self.slice_cols(g, start, w)));
                }
            }
        }
        res
    }
}

/// True when every entry is finite.
pub fn all_finite(t: &Tensor) -> bool {
    let mut ok = true;
    Zip::from(t).for_each(|x| ok &= x.is_finite());
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn linear_gradient_is_input() {
        let mut tape = Tape::new();
        let w = tape.var(array![[0.3, -1.2, 2.0]]);
        let x = tape.constant(array![[1.5], [-2.0], [0.25]]);
        let y = tape.matmul(w, x);
        let g = tape.grad(y, &[w]).unwrap();
        assert_eq!(tape.value(g[0]), &array![[1.5, -2.0, 0.25]]);
    }

    #[test]
    fn sum_of_squares_gradient_is_twice_params() {
        let mut tape = Tape::new();
        let p = tape.var(array![[1.0, -2.0], [0.5, 3.0]]);
        let sq = tape.mul(p, p);
        let y = tape.sum_all(sq);
        let g = tape.grad(y, &[p]).unwrap();
        assert_eq!(tape.value(g[0]), &(array![[1.0, -2.0], [0.5, 3.0]] * 2.0));
    }

    #[test]
    fn second_order_through_grad() {
        // y = sum(x^3); dy/dx = 3x^2; d(sum(dy/dx))/dx = 6x.
        let mut tape = Tape::new();
        let x = tape.var(array![[1.0, -2.0, 0.5]]);
        let x2 = tape.mul(x, x);
        let x3 = tape.mul(x2, x);
        let y = tape.sum_all(x3);
        let g = tape.grad(y, &[x]).unwrap()[0];
        assert_eq!(tape.value(g), &array![[3.0, 12.0, 0.75]]);
        let s = tape.sum_all(g);
        let gg = tape.grad(s, &[x]).unwrap()[0];
        assert_eq!(tape.value(gg), &array![[6.0, -12.0, 3.0]]);
    }

    #[test]
    fn grad_of_unrelated_input_is_zero() {
        let mut tape = Tape::new();
        let a = tape.var(array![[1.0, 2.0]]);
        let b = tape.var(array![[3.0]]);
        let y = tape.sum_all(a);
        let g = tape.grad(y, &[b]).unwrap();
        assert_eq!(tape.value(g[0]), &array![[0.0]]);
    }

    #[test]
    fn grad_rejects_non_scalar_and_foreign_nodes() {
        let mut tape = Tape::new();
        let a = tape.var(array![[1.0, 2.0]]);
        assert!(matches!(tape.grad(a, &[a]), Err(Error::Usage(_))));
        assert!(matches!(tape.grad(Var(99), &[a]), Err(Error::Usage(_))));
    }

    #[test]
    fn log_softmax_is_stable() {
        let mut tape = Tape::new();
        let l = tape.constant(array![[1000.0, 0.0], [2.0, 1.0]]);
        let ls = tape.log_softmax_rows(l);
        let v = tape.value(ls);
        assert!(v.iter().all(|x| x.is_finite()));
        assert!((v[[0, 0]]).abs() < 1e-300);
        assert!((v[[0, 1]] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn sqrt_of_zero_has_zero_subgradient() {
        let mut tape = Tape::new();
        let x = tape.var(array![[0.0, 0.0]]);
        let n = tape.row_norms(x);
        let y = tape.sum_all(n);
        let g = tape.grad(y, &[x]).unwrap();
        assert_eq!(tape.value(g[0]), &array![[0.0, 0.0]]);
    }
}
