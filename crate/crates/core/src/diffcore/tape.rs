use crate::error::{Error, Result};

use super::tensor::Tensor;

/// Inputs to `log` are clamped to at least this value.
pub const LOG_FLOOR: f64 = 1e-12;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise operations reachable through [`Tape::elementwise`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Log,
    Square,
    Exp,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Relu(Var),
    Sigmoid(Var),
    Log(Var),
    Square(Var),
    Exp(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    Mean(Var),
    SumRows(Var),
    ConcatCols(Var, Var),
    Transpose(Var),
    GradReverse(Var, f64),
    RowOuter(Var, Var),
    SelectRows(Var, Vec<usize>),
    PickPerRow(Var, Vec<usize>),
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient; only leaves that require grad carry one.
    grad: Option<Tensor>,
}

/// Linear record of a forward computation. Each operation appends one node
/// whose operands are earlier nodes, so the node order is a topological order
/// and `backward` is a single reverse sweep.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
    }
}

/// Whether `b` can be combined with `a` pointwise: same shape, or a single row
/// broadcast over the rows of `a`.
fn broadcast_ok(a: (usize, usize), b: (usize, usize)) -> bool {
    a == b || (b.0 == 1 && b.1 == a.1)
}

fn zip_broadcast(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = a.clone();
    let cols = a.cols();
    let bcast = b.rows() == 1 && a.rows() != 1;
    for (idx, o) in out.data_mut().iter_mut().enumerate() {
        let bv = if bcast {
            b.data()[idx % cols]
        } else {
            b.data()[idx]
        };
        *o = f(*o, bv);
    }
    out
}

/// Reduces a gradient shaped like `a` back to the shape of a possibly
/// broadcast operand.
fn unbroadcast(g: Tensor, target: (usize, usize)) -> Tensor {
    if g.shape() == target {
        g
    } else {
        g.sum_over_rows()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let grad = match (&op, requires_grad) {
            (Op::Leaf, true) => Some(Tensor::zeros(value.rows(), value.cols())),
            _ => None,
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            if let Some(g) = node.grad.as_mut() {
                g.data_mut().iter_mut().for_each(|x| *x = 0.0);
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        check_finite("matmul", &value)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if !broadcast_ok(sa, sb) {
            return Err(Error::Shape {
                op: name,
                left: sa,
                right: sb,
            });
        }
        let value = zip_broadcast(self.value(a), self.value(b), f);
        check_finite(name, &value)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, op, rg))
    }

    /// `a + b`; `b` may be a `1 x cols` row broadcast over the rows of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    fn unary(&mut self, name: &'static str, a: Var, value: Tensor, op: Op) -> Result<Var> {
        check_finite(name, &value)?;
        let rg = self.needs(&[a]);
        Ok(self.push(value, op, rg))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x.max(0.0));
        self.unary("relu", a, value, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| {
            if x >= 0.0 {
                1.0 / (1.0 + (-x).exp())
            } else {
                let e = x.exp();
                e / (1.0 + e)
            }
        });
        self.unary("sigmoid", a, value, Op::Sigmoid(a))
    }

    /// Natural log of `max(x, LOG_FLOOR)`.
    pub fn log(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        if let Some(bad) = input.data().iter().find(|x| x.is_nan()) {
            return Err(Error::Domain {
                op: "log",
                detail: format!("input {bad}"),
            });
        }
        let value = input.map(|x| x.max(LOG_FLOOR).ln());
        self.unary("log", a, value, Op::Log(a))
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(|x| x * x);
        self.unary("square", a, value, Op::Square(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).map(f64::exp);
        self.unary("exp", a, value, Op::Exp(a))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x * factor);
        self.unary("scale", a, value, Op::Scale(a, factor))
    }

    pub fn add_scalar(&mut self, a: Var, shift: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x + shift);
        self.unary("add_scalar", a, value, Op::AddScalar(a))
    }

    /// Clamps into `[lo, hi]`; gradient is zero where clamping was active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let value = self.value(a).map(|x| x.clamp(lo, hi));
        self.unary("clamp", a, value, Op::Clamp(a, lo, hi))
    }

    /// Row-wise softmax with row-max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        if input.is_empty() {
            return Err(Error::EmptyReduction { op: "softmax_rows" });
        }
        let mut value = input.clone();
        for r in 0..value.rows() {
            let row = value.row_mut(r);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total += *x;
            }
            for x in row.iter_mut() {
                *x /= total;
            }
        }
        self.unary("softmax_rows", a, value, Op::SoftmaxRows(a))
    }

    /// Mean of all entries as a `1 x 1` tensor.
    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        if input.is_empty() {
            return Err(Error::EmptyReduction { op: "mean" });
        }
        let value = Tensor::scalar(input.data().iter().sum::<f64>() / input.len() as f64);
        self.unary("mean", a, value, Op::Mean(a))
    }

    /// Sum of each row, giving an `m x 1` column.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let input = self.value(a);
        if input.cols() == 0 {
            return Err(Error::EmptyReduction { op: "sum_rows" });
        }
        let value = Tensor::column_vector(input.row_iter().map(|r| r.iter().sum()).collect());
        self.unary("sum_rows", a, value, Op::SumRows(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rows() != tb.rows() {
            return Err(Error::Shape {
                op: "concat_cols",
                left: ta.shape(),
                right: tb.shape(),
            });
        }
        let mut data = Vec::with_capacity(ta.len() + tb.len());
        for r in 0..ta.rows() {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let value = Tensor::new(ta.rows(), ta.cols() + tb.cols(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, Op::ConcatCols(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let value = self.value(a).transpose();
        self.unary("transpose", a, value, Op::Transpose(a))
    }

    /// Identity forward; backward multiplies upstream gradients by `-coeff`.
    pub fn grad_reverse(&mut self, a: Var, coeff: f64) -> Result<Var> {
        if !(coeff >= 0.0 && coeff.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gradient reversal coefficient must be finite and >= 0, got {coeff}"
            )));
        }
        let value = self.value(a).clone();
        self.unary("grad_reverse", a, value, Op::GradReverse(a, coeff))
    }

    /// Row `i` of the result is the flattened outer product `f_i (x) p_i`,
    /// `f`-index major.
    pub fn row_outer(&mut self, f: Var, p: Var) -> Result<Var> {
        let (tf, tp) = (self.value(f), self.value(p));
        if tf.rows() != tp.rows() {
            return Err(Error::Shape {
                op: "row_outer",
                left: tf.shape(),
                right: tp.shape(),
            });
        }
        let (df, dp) = (tf.cols(), tp.cols());
        let mut data = Vec::with_capacity(tf.rows() * df * dp);
        for r in 0..tf.rows() {
            for &fa in tf.row(r) {
                data.extend(tp.row(r).iter().map(|&pb| fa * pb));
            }
        }
        let value = Tensor::new(tf.rows(), df * dp, data)?;
        check_finite("row_outer", &value)?;
        let rg = self.needs(&[f, p]);
        Ok(self.push(value, Op::RowOuter(f, p), rg))
    }

    /// Gathers rows (repeats allowed); backward scatter-adds.
    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let value = self.value(a).select_rows(indices)?;
        self.unary(
            "select_rows",
            a,
            value,
            Op::SelectRows(a, indices.to_vec()),
        )
    }

    /// `out[i] = a[i, cols[i]]` as an `m x 1` column.
    pub fn pick_per_row(&mut self, a: Var, cols: &[usize]) -> Result<Var> {
        let input = self.value(a);
        if cols.len() != input.rows() {
            return Err(Error::Shape {
                op: "pick_per_row",
                left: input.shape(),
                right: (cols.len(), 1),
            });
        }
        let mut out = Vec::with_capacity(cols.len());
        for (r, &c) in cols.iter().enumerate() {
            if c >= input.cols() {
                return Err(Error::LabelOutOfRange {
                    row: r,
                    label: c,
                    classes: input.cols(),
                });
            }
            out.push(input.get(r, c));
        }
        let value = Tensor::column_vector(out);
        self.unary(
            "pick_per_row",
            a,
            value,
            Op::PickPerRow(a, cols.to_vec()),
        )
    }

    /// Dispatches a pointwise op by tag. Unary ops take one argument, binary
    /// ops two.
    pub fn elementwise(&mut self, op: Elementwise, args: &[Var]) -> Result<Var> {
        let arity = match op {
            Elementwise::Add | Elementwise::Sub | Elementwise::Mul => 2,
            _ => 1,
        };
        if args.len() != arity {
            return Err(Error::InvalidArgument(format!(
                "{op:?} takes {arity} argument(s), got {}",
                args.len()
            )));
        }
        match op {
            Elementwise::Add => self.add(args[0], args[1]),
            Elementwise::Sub => self.sub(args[0], args[1]),
            Elementwise::Mul => self.mul(args[0], args[1]),
            Elementwise::Relu => self.relu(args[0]),
            Elementwise::Sigmoid => self.sigmoid(args[0]),
            Elementwise::Log => self.log(args[0]),
            Elementwise::Square => self.square(args[0]),
            Elementwise::Exp => self.exp(args[0]),
        }
    }

    /// Accumulates `d loss / d leaf` into every trainable leaf reachable from
    /// `loss`. Calling it again without [`Tape::zero_grads`] adds on top.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != (1, 1) {
            return Err(Error::Rank {
                op: "backward",
                shape,
            });
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        let mut adjoint: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adjoint[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoint[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[idx].op {
                check_finite("backward", &g)?;
                if let Some(acc) = self.nodes[idx].grad.as_mut() {
                    acc.add_assign(&g)?;
                }
                continue;
            }
            self.propagate(idx, g, &mut adjoint)?;
        }
        Ok(())
    }

    fn send(&self, adjoint: &mut [Option<Tensor>], v: Var, g: Tensor) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match adjoint[v.0].as_mut() {
            Some(acc) => acc.add_assign(&g)?,
            None => adjoint[v.0] = Some(g),
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: Tensor, adjoint: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[idx];
        let out = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.send(adjoint, *a, g.matmul(&vb.transpose())?)?;
                }
                if self.requires_grad(*b) {
                    self.send(adjoint, *b, va.transpose().matmul(&g)?)?;
                }
            }
            Op::Add(a, b) => {
                let sb = self.shape(*b);
                self.send(adjoint, *b, unbroadcast(g.clone(), sb))?;
                self.send(adjoint, *a, g)?;
            }
            Op::Sub(a, b) => {
                let sb = self.shape(*b);
                self.send(adjoint, *b, unbroadcast(g.map(|x| -x), sb))?;
                self.send(adjoint, *a, g)?;
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.requires_grad(*a) {
                    self.send(adjoint, *a, zip_broadcast(&g, vb, |x, y| x * y))?;
                }
                if self.requires_grad(*b) {
                    let gb = pointwise(&g, va, |g, x| g * x);
                    self.send(adjoint, *b, unbroadcast(gb, vb.shape()))?;
                }
            }
            Op::Relu(a) => {
                let va = self.value(*a);
                let ga = pointwise(&g, va, |g, x| if x > 0.0 { g } else { 0.0 });
                self.send(adjoint, *a, ga)?;
            }
            Op::Sigmoid(a) => {
                let ga = pointwise(&g, out, |g, y| g * y * (1.0 - y));
                self.send(adjoint, *a, ga)?;
            }
            Op::Log(a) => {
                let va = self.value(*a);
                let ga = pointwise(&g, va, |g, x| if x >= LOG_FLOOR { g / x } else { 0.0 });
                self.send(adjoint, *a, ga)?;
            }
            Op::Square(a) => {
                let va = self.value(*a);
                self.send(adjoint, *a, pointwise(&g, va, |g, x| 2.0 * x * g))?;
            }
            Op::Exp(a) => {
                self.send(adjoint, *a, pointwise(&g, out, |g, y| g * y))?;
            }
            Op::Scale(a, factor) => {
                let f = *factor;
                self.send(adjoint, *a, g.map(|x| x * f))?;
            }
            Op::AddScalar(a) => self.send(adjoint, *a, g)?,
            Op::Clamp(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                let va = self.value(*a);
                let ga = pointwise(&g, va, |g, x| if x >= lo && x <= hi { g } else { 0.0 });
                self.send(adjoint, *a, ga)?;
            }
            Op::SoftmaxRows(a) => {
                let mut ga = g.clone();
                for r in 0..out.rows() {
                    let y = out.row(r);
                    let gr = g.row(r);
                    let dot: f64 = y.iter().zip(gr).map(|(y, g)| y * g).sum();
                    for (o, (y, g)) in ga.row_mut(r).iter_mut().zip(y.iter().zip(gr)) {
                        *o = y * (g - dot);
                    }
                }
                self.send(adjoint, *a, ga)?;
            }
            Op::Mean(a) => {
                let (r, c) = self.shape(*a);
                let share = g.data()[0] / (r * c) as f64;
                self.send(adjoint, *a, Tensor::filled(r, c, share))?;
            }
            Op::SumRows(a) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for i in 0..r {
                    let gi = g.data()[i];
                    ga.row_mut(i).iter_mut().for_each(|x| *x = gi);
                }
                self.send(adjoint, *a, ga)?;
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(*a).1;
                let cb = self.shape(*b).1;
                let mut ga = Vec::with_capacity(g.rows() * ca);
                let mut gb = Vec::with_capacity(g.rows() * cb);
                for row in g.row_iter() {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.send(adjoint, *a, Tensor::new(g.rows(), ca, ga)?)?;
                self.send(adjoint, *b, Tensor::new(g.rows(), cb, gb)?)?;
            }
            Op::Transpose(a) => self.send(adjoint, *a, g.transpose())?,
            Op::GradReverse(a, coeff) => {
                let c = *coeff;
                self.send(adjoint, *a, g.map(|x| -c * x))?;
            }
            Op::RowOuter(f, p) => {
                let (vf, vp) = (self.value(*f), self.value(*p));
                let (df, dp) = (vf.cols(), vp.cols());
                let mut gf = Tensor::zeros(vf.rows(), df);
                let mut gp = Tensor::zeros(vp.rows(), dp);
                for r in 0..vf.rows() {
                    let gr = g.row(r);
                    let (fr, pr) = (vf.row(r), vp.row(r));
                    for a in 0..df {
                        let block = &gr[a * dp..(a + 1) * dp];
                        let mut acc = 0.0;
                        for b in 0..dp {
                            acc += block[b] * pr[b];
                            gp.row_mut(r)[b] += block[b] * fr[a];
                        }
                        gf.row_mut(r)[a] = acc;
                    }
                }
                self.send(adjoint, *f, gf)?;
                self.send(adjoint, *p, gp)?;
            }
            Op::SelectRows(a, indices) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (k, &i) in indices.iter().enumerate() {
                    for (o, v) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                        *o += v;
                    }
                }
                self.send(adjoint, *a, ga)?;
            }
            Op::PickPerRow(a, cols) => {
                let (r, c) = self.shape(*a);
                let mut ga = Tensor::zeros(r, c);
                for (i, &col) in cols.iter().enumerate() {
                    ga.set(i, col, g.data()[i]);
                }
                self.send(adjoint, *a, ga)?;
            }
        }
        Ok(())
    }
}

fn pointwise(g: &Tensor, x: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let mut out = g.clone();
    for (o, &xv) in out.data_mut().iter_mut().zip(x.data()) {
        *o = f(*o, xv);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_examples() {
        let mut tape = Tape::new();
        let eye = tape.constant(Tensor::identity(2));
        let col = tape.constant(t(&[&[3.0], &[4.0]]));
        let y = tape.matmul(eye, col).unwrap();
        assert_eq!(tape.value(y).data(), &[3.0, 4.0]);

        let a = tape.constant(t(&[&[1.0, 2.0]]));
        let y = tape.matmul(a, col).unwrap();
        assert_eq!(tape.value(y).data(), &[11.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        let err = tape.matmul(a, b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("matmul"), "{err}");
    }

    #[test]
    fn pointwise_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(vec![-1.0, 0.0, 2.0]));
        let r = tape.relu(x).unwrap();
        assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);

        let z = tape.constant(Tensor::scalar(0.0));
        let s = tape.sigmoid(z).unwrap();
        assert_eq!(tape.value(s).data(), &[0.5]);

        let w = tape.param(Tensor::scalar(3.0));
        let sq = tape.square(w).unwrap();
        tape.backward(sq).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[6.0]);
    }

    #[test]
    fn log_clamps_and_rejects_nan() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(vec![0.0, -3.0]));
        let l = tape.log(x).unwrap();
        let expected = LOG_FLOOR.ln();
        assert_eq!(tape.value(l).data(), &[expected, expected]);

        let bad = tape.constant(Tensor::scalar(f64::NAN));
        assert!(matches!(tape.log(bad), Err(Error::Domain { .. })));
    }

    #[test]
    fn softmax_examples() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::row_vector(vec![0.0, 0.0, 0.0]));
        let s = tape.softmax_rows(x).unwrap();
        for &v in tape.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let x = tape.constant(Tensor::row_vector(vec![1000.0, 0.0]));
        let s = tape.softmax_rows(x).unwrap();
        let v = tape.value(s).data();
        assert_eq!(v[0], 1.0);
        assert!(v[1] >= 0.0 && v[1] < 1e-300);
    }

    #[test]
    fn mean_and_shapes() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::row_vector(vec![2.0, 4.0]));
        let m = tape.mean(x).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0]);
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[0.5, 0.5]);

        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 2));
        let c = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.shape(c), (2, 5));

        let empty = tape.constant(Tensor::zeros(0, 3));
        assert!(matches!(
            tape.mean(empty),
            Err(Error::EmptyReduction { .. })
        ));
    }

    #[test]
    fn backward_accumulates() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vector(vec![1.0, 2.0]));
        let sq = tape.square(w).unwrap();
        let loss = tape.mean(sq).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[1.0, 2.0]);
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap().data(), &[2.0, 4.0]);
        tape.zero_grads();
        assert_eq!(tape.grad(w).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::row_vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(w), Err(Error::Rank { .. })));
    }

    #[test]
    fn grad_reverse_semantics() {
        for (coeff, expected) in [(1.0, -1.0), (0.0, 0.0), (2.5, -2.5)] {
            let mut tape = Tape::new();
            let x = tape.param(Tensor::row_vector(vec![1.0, 2.0]));
            let r = tape.grad_reverse(x, coeff).unwrap();
            assert_eq!(tape.value(r).data(), &[1.0, 2.0]);
            let s = tape.sum_rows(r).unwrap();
            tape.backward(s).unwrap();
            for &g in tape.grad(x).unwrap().data() {
                assert_eq!(g, expected);
            }
        }
    }

    #[test]
    fn row_broadcast_bias() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(3, 2));
        let b = tape.param(Tensor::row_vector(vec![1.0, -1.0]));
        let y = tape.add(x, b).unwrap();
        assert_eq!(tape.value(y).row(2), &[1.0, -1.0]);
        let m = tape.mean(y).unwrap();
        tape.backward(m).unwrap();
        assert_eq!(tape.grad(b).unwrap().data(), &[0.5, 0.5]);
    }
}
