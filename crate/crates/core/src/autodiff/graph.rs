use super::tensor::{gemm_nn, gemm_nt, gemm_tn, lit, Scalar, Tensor};
use super::AutodiffError;

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// The primitive operation kinds exposed through [`Graph::apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpKind {
    MatMul,
    Add,
    ElementwiseMul,
    /// Concatenation along columns.
    Concat,
    Tanh,
    Sigmoid,
    Relu,
    /// Row-wise softmax.
    Softmax,
    Sum,
    Mean,
    Square,
}

#[derive(Clone, Debug)]
enum Op<F> {
    Input,
    Param(usize),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, F),
    Concat(Vec<Var>, Axis),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    Reshape(Var),
    Gather(Var, Vec<Option<usize>>),
    PairwiseAdd(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    LogClamped(Var, F),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

struct Node<F> {
    op: Op<F>,
    // `None` for parameter leaves, which read through to the borrowed slice.
    value: Option<Tensor<F>>,
}

/// Append-only record of a forward computation.
///
/// Parameters are borrowed, not copied; every other node owns its value.
/// Nodes are pushed after their operands, so index order is a topological
/// order and [`Graph::backward`] is a single reverse sweep.
pub struct Graph<'p, F: Scalar = f32> {
    params: &'p [Tensor<F>],
    nodes: Vec<Node<F>>,
}

fn mismatch<F: Scalar>(op: &'static str, a: &Tensor<F>, b: &Tensor<F>) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn require2<F: Scalar>(op: &'static str, t: &Tensor<F>) -> Result<(usize, usize), AutodiffError> {
    t.dims2().ok_or_else(|| AutodiffError::ShapeMismatch {
        op,
        left: t.shape().to_vec(),
        right: vec![],
    })
}

impl<'p, F: Scalar> Graph<'p, F> {
    pub fn new(params: &'p [Tensor<F>]) -> Self {
        Self {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<F> {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (Op::Param(i), _) => &self.params[*i],
            (_, Some(t)) => t,
            (_, None) => unreachable!("non-parameter node without value"),
        }
    }

    fn push(&mut self, op: Op<F>, value: Tensor<F>) -> Var {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        Var(self.nodes.len() - 1)
    }

    /// Records a constant.
    pub fn input(&mut self, t: Tensor<F>) -> Var {
        self.push(Op::Input, t)
    }

    /// Records a read of learnable parameter `index`.
    pub fn param(&mut self, index: usize) -> Var {
        assert!(index < self.params.len(), "parameter {index} out of range");
        self.nodes.push(Node {
            op: Op::Param(index),
            value: None,
        });
        Var(self.nodes.len() - 1)
    }

    /// Dispatches one of the primitive kinds. Unary kinds use the first
    /// operand; `Concat` joins all operands along columns.
    pub fn apply(&mut self, kind: OpKind, operands: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::ElementwiseMul => 2,
            OpKind::Concat => operands.len().max(1),
            _ => 1,
        };
        if operands.len() != arity {
            return Err(AutodiffError::Arity {
                op: kind,
                expected: arity,
                got: operands.len(),
            });
        }
        match kind {
            OpKind::MatMul => self.matmul(operands[0], operands[1]),
            OpKind::Add => self.add(operands[0], operands[1]),
            OpKind::ElementwiseMul => self.mul(operands[0], operands[1]),
            OpKind::Concat => self.concat(operands, Axis::Cols),
            OpKind::Tanh => Ok(self.tanh(operands[0])),
            OpKind::Sigmoid => Ok(self.sigmoid(operands[0])),
            OpKind::Relu => Ok(self.relu(operands[0])),
            OpKind::Softmax => self.softmax(operands[0]),
            OpKind::Sum => Ok(self.sum(operands[0])),
            OpKind::Mean => Ok(self.mean(operands[0])),
            OpKind::Square => Ok(self.square(operands[0])),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = require2("matmul", ta)?;
        let (k2, n) = require2("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let mut out = vec![F::zero(); m * n];
        gemm_nn(ta.data(), tb.data(), &mut out, m, k, n);
        let t = Tensor::matrix(m, n, out)?;
        Ok(self.push(Op::MatMul(a, b), t))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<(), AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta, tb));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("add", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(Op::Add(a, b), t))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("sub", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(Op::Sub(a, b), t))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.same_shape("elementwise_mul", a, b)?;
        let t = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul(a, b), t))
    }

    /// `m (r×c) + row (1×c)` broadcast over rows.
    pub fn add_row(&mut self, m: Var, row: Var) -> Result<Var, AutodiffError> {
        let (tm, tr) = (self.value(m), self.value(row));
        let (_, c) = require2("add_row", tm)?;
        if tr.dims2() != Some((1, c)) {
            return Err(mismatch("add_row", tm, tr));
        }
        let mut t = tm.clone();
        for chunk in t.data_mut().chunks_mut(c) {
            for (x, &b) in chunk.iter_mut().zip(tr.data()) {
                *x = *x + b;
            }
        }
        Ok(self.push(Op::AddRow(m, row), t))
    }

    pub fn scale(&mut self, a: Var, factor: F) -> Var {
        let t = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), t)
    }

    pub fn concat(&mut self, parts: &[Var], axis: Axis) -> Result<Var, AutodiffError> {
        let first = *parts.first().ok_or(AutodiffError::EmptyConcat)?;
        let (r0, c0) = require2("concat", self.value(first))?;
        let mut dims = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = require2("concat", self.value(p))?;
            let ok = match axis {
                Axis::Rows => c == c0,
                Axis::Cols => r == r0,
            };
            if !ok {
                return Err(mismatch("concat", self.value(first), self.value(p)));
            }
            dims.push((r, c));
        }
        let t = match axis {
            Axis::Rows => {
                let rows = dims.iter().map(|d| d.0).sum();
                let mut data = Vec::with_capacity(rows * c0);
                for &p in parts {
                    data.extend_from_slice(self.value(p).data());
                }
                Tensor::matrix(rows, c0, data)?
            }
            Axis::Cols => {
                let cols: usize = dims.iter().map(|d| d.1).sum();
                let mut data = Vec::with_capacity(r0 * cols);
                for r in 0..r0 {
                    for &p in parts {
                        data.extend_from_slice(self.value(p).row_slice(r));
                    }
                }
                Tensor::matrix(r0, cols, data)?
            }
        };
        Ok(self.push(Op::Concat(parts.to_vec(), axis), t))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        let (r, c) = require2("slice_rows", ta)?;
        if start >= end || end > r {
            return Err(AutodiffError::Slice {
                shape: ta.shape().to_vec(),
                start,
                end,
            });
        }
        let t = Tensor::matrix(end - start, c, ta.data()[start * c..end * c].to_vec())?;
        Ok(self.push(Op::SliceRows(a, start), t))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        let (r, c) = require2("slice_cols", ta)?;
        if start >= end || end > c {
            return Err(AutodiffError::Slice {
                shape: ta.shape().to_vec(),
                start,
                end,
            });
        }
        let mut data = Vec::with_capacity(r * (end - start));
        for row in 0..r {
            data.extend_from_slice(&ta.row_slice(row)[start..end]);
        }
        let t = Tensor::matrix(r, end - start, data)?;
        Ok(self.push(Op::SliceCols(a, start), t))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var, AutodiffError> {
        let t = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(Op::Reshape(a), t))
    }

    /// Selects rows of `table` by index; `None` yields a zero row.
    pub fn gather_rows(
        &mut self,
        table: Var,
        indices: &[Option<usize>],
    ) -> Result<Var, AutodiffError> {
        let tt = self.value(table);
        let (r, c) = require2("gather_rows", tt)?;
        if indices.is_empty() {
            return Err(AutodiffError::InvalidShape(vec![0, c]));
        }
        let mut data = Vec::with_capacity(indices.len() * c);
        for idx in indices {
            match *idx {
                Some(i) if i < r => data.extend_from_slice(tt.row_slice(i)),
                Some(i) => {
                    return Err(AutodiffError::Slice {
                        shape: tt.shape().to_vec(),
                        start: i,
                        end: i + 1,
                    })
                }
                None => data.extend(std::iter::repeat_n(F::zero(), c)),
            }
        }
        let t = Tensor::matrix(indices.len(), c, data)?;
        Ok(self.push(Op::Gather(table, indices.to_vec()), t))
    }

    /// For `a (m×d)` and `b (n×d)`, the `(m·n)×d` matrix whose row `i·n + j`
    /// is `a_i + b_j`.
    pub fn pairwise_add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, d) = require2("pairwise_add", ta)?;
        let (n, d2) = require2("pairwise_add", tb)?;
        if d != d2 {
            return Err(mismatch("pairwise_add", ta, tb));
        }
        let mut data = Vec::with_capacity(m * n * d);
        for i in 0..m {
            let ra = ta.row_slice(i);
            for j in 0..n {
                data.extend(ra.iter().zip(tb.row_slice(j)).map(|(&x, &y)| x + y));
            }
        }
        let t = Tensor::matrix(m * n, d, data)?;
        Ok(self.push(Op::PairwiseAdd(a, b), t))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.tanh());
        self.push(Op::Tanh(a), t)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let t = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), t)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x.max(F::zero()));
        self.push(Op::Relu(a), t)
    }

    /// Softmax over each row.
    pub fn softmax(&mut self, a: Var) -> Result<Var, AutodiffError> {
        let ta = self.value(a);
        let (_, c) = ta.dims2().ok_or(AutodiffError::EmptySoftmax)?;
        let mut t = ta.clone();
        for row in t.data_mut().chunks_mut(c) {
            let max = row.iter().copied().fold(F::neg_infinity(), F::max);
            let mut total = F::zero();
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                total = total + *x;
            }
            for x in row.iter_mut() {
                *x = *x / total;
            }
        }
        Ok(self.push(Op::Softmax(a), t))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let t = Tensor::scalar(self.value(a).sum_all());
        self.push(Op::Sum(a), t)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ta = self.value(a);
        let n = F::from_usize(ta.len()).expect("len");
        let t = Tensor::scalar(ta.sum_all() / n);
        self.push(Op::Mean(a), t)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let t = self.value(a).map(|x| x * x);
        self.push(Op::Square(a), t)
    }

    /// `ln(max(x, floor))`; the gradient is zero where the clamp is active.
    pub fn log_clamped(&mut self, a: Var, floor: F) -> Var {
        let t = self.value(a).map(|x| x.max(floor).ln());
        self.push(Op::LogClamped(a, floor), t)
    }

    /// Gradient of the scalar `loss` with respect to every parameter of the
    /// borrowed slice, in slice order. Parameters the loss does not reach get
    /// zeros. Contributions from multiple uses of a node add up.
    pub fn backward(&self, loss: Var) -> Result<Vec<Tensor<F>>, AutodiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !lv.is_finite() {
            return Err(AutodiffError::NonFinite("loss"));
        }
        let mut grads: Vec<Option<Tensor<F>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(lv.shape(), F::one()));
        let mut param_grads: Vec<Tensor<F>> =
            self.params.iter().map(|p| Tensor::zeros(p.shape())).collect();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let out = self.value(Var(idx));
            match &node.op {
                Op::Input => {}
                Op::Param(i) => param_grads[*i].add_assign(&g),
                Op::MatMul(a, b) => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    let (m, k) = ta.dims2().unwrap();
                    let (_, n) = tb.dims2().unwrap();
                    let mut ga = vec![F::zero(); m * k];
                    gemm_nt(g.data(), tb.data(), &mut ga, m, n, k);
                    let mut gb = vec![F::zero(); k * n];
                    gemm_tn(ta.data(), g.data(), &mut gb, m, k, n);
                    accumulate(&mut grads, *a, Tensor::matrix(m, k, ga)?);
                    accumulate(&mut grads, *b, Tensor::matrix(k, n, gb)?);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone());
                    accumulate(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |d, y| d * y);
                    let gb = g.zip_map(self.value(*a), |d, x| d * x);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::AddRow(m, row) => {
                    let c = g.cols();
                    let mut gr = vec![F::zero(); c];
                    for chunk in g.data().chunks(c) {
                        for (acc, &x) in gr.iter_mut().zip(chunk) {
                            *acc = *acc + x;
                        }
                    }
                    accumulate(&mut grads, *row, Tensor::row(gr));
                    accumulate(&mut grads, *m, g);
                }
                Op::Scale(a, f) => {
                    let f = *f;
                    accumulate(&mut grads, *a, g.map(|x| x * f));
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (r, c) = self.value(p).dims2().unwrap();
                        let piece = match axis {
                            Axis::Rows => {
                                let gc = g.cols();
                                Tensor::matrix(r, c, g.data()[offset * gc..(offset + r) * gc].to_vec())?
                            }
                            Axis::Cols => Tensor::from_fn(r, c, |i, j| g.at(i, offset + j)),
                        };
                        offset += match axis {
                            Axis::Rows => r,
                            Axis::Cols => c,
                        };
                        accumulate(&mut grads, p, piece);
                    }
                }
                Op::SliceRows(a, start) => {
                    let src = self.value(*a);
                    let mut full = Tensor::zeros(src.shape());
                    let c = src.cols();
                    full.data_mut()[start * c..start * c + g.len()].copy_from_slice(g.data());
                    accumulate(&mut grads, *a, full);
                }
                Op::SliceCols(a, start) => {
                    let src = self.value(*a);
                    let mut full = Tensor::zeros(src.shape());
                    let (c, w) = (src.cols(), g.cols());
                    for r in 0..g.rows() {
                        full.data_mut()[r * c + start..r * c + start + w]
                            .copy_from_slice(g.row_slice(r));
                    }
                    accumulate(&mut grads, *a, full);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    accumulate(&mut grads, *a, g.reshaped(shape)?);
                }
                Op::Gather(table, indices) => {
                    let src = self.value(*table);
                    let c = src.cols();
                    let mut full = Tensor::zeros(src.shape());
                    for (row, idx) in indices.iter().enumerate() {
                        if let Some(i) = *idx {
                            let dst = &mut full.data_mut()[i * c..(i + 1) * c];
                            for (d, &x) in dst.iter_mut().zip(g.row_slice(row)) {
                                *d = *d + x;
                            }
                        }
                    }
                    accumulate(&mut grads, *table, full);
                }
                Op::PairwiseAdd(a, b) => {
                    let (m, d) = self.value(*a).dims2().unwrap();
                    let n = self.value(*b).rows();
                    let mut ga = vec![F::zero(); m * d];
                    let mut gb = vec![F::zero(); n * d];
                    for i in 0..m {
                        for j in 0..n {
                            let gr = g.row_slice(i * n + j);
                            for k in 0..d {
                                ga[i * d + k] = ga[i * d + k] + gr[k];
                                gb[j * d + k] = gb[j * d + k] + gr[k];
                            }
                        }
                    }
                    accumulate(&mut grads, *a, Tensor::matrix(m, d, ga)?);
                    accumulate(&mut grads, *b, Tensor::matrix(n, d, gb)?);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(out, |d, y| d * (F::one() - y * y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(out, |d, y| d * y * (F::one() - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |d, x| if x > F::zero() { d } else { F::zero() });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Softmax(a) => {
                    let c = out.cols();
                    let mut ga = g.clone();
                    for (gr, yr) in ga.data_mut().chunks_mut(c).zip(out.data().chunks(c)) {
                        let dot: F = gr.iter().zip(yr).map(|(&d, &y)| d * y).sum();
                        for (d, &y) in gr.iter_mut().zip(yr) {
                            *d = y * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Sum(a) => {
                    let d = g.data()[0];
                    accumulate(&mut grads, *a, Tensor::full(self.value(*a).shape(), d));
                }
                Op::Mean(a) => {
                    let src = self.value(*a);
                    let d = g.data()[0] / F::from_usize(src.len()).unwrap();
                    accumulate(&mut grads, *a, Tensor::full(src.shape(), d));
                }
                Op::Square(a) => {
                    let two = lit::<F>(2.0);
                    let ga = g.zip_map(self.value(*a), |d, x| two * x * d);
                    accumulate(&mut grads, *a, ga);
                }
                Op::LogClamped(a, floor) => {
                    let floor = *floor;
                    let ga = g.zip_map(self.value(*a), |d, x| if x > floor { d / x } else { F::zero() });
                    accumulate(&mut grads, *a, ga);
                }
            }
        }
        Ok(param_grads)
    }
}

fn accumulate<F: Scalar>(grads: &mut [Option<Tensor<F>>], v: Var, g: Tensor<F>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub(crate) fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}
