use super::gemm::gemm;
use super::params::{Gradients, ParamId, ParamStore};
use super::Tensor;
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// An operation whose forward pass is computed outside the graph and whose
/// vector-Jacobian product is supplied by the implementor.
pub trait CustomOp {
    fn name(&self) -> &'static str;

    /// Gradients for each input (`None` when the input gets no gradient).
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &Tensor,
    ) -> Result<Vec<Option<Tensor>>>;
}

enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Exp(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Gather(Var, Vec<usize>),
    LogSoftmaxRows(Var),
    SoftmaxRows(Var),
    LogSumExpRows(Var),
    Sum(Var),
    Mean(Var),
    RowSums(Var),
    MaxPool(Vec<Var>),
    L2NormRows(Var),
    CosineRows(Var, Var),
    Reshape(Var),
    Custom(Vec<Var>, Box<dyn CustomOp>),
}

struct Node {
    // `None` only for parameters, which are read from the store.
    value: Option<Tensor>,
    op: Op,
}

/// Define-by-run computation graph over a borrowed parameter store.
///
/// Nodes are appended in creation order, which is a topological order, so the
/// backward pass is a single reverse sweep.
pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn check_finite(op: &str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op.to_string()))
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor {
        shape: t.shape.clone(),
        data: t.data.iter().map(|&v| f(v)).collect(),
    }
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor {
        shape: a.shape.clone(),
        data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
    }
}

fn row_norms(t: &Tensor) -> Vec<f64> {
    let (r, _) = t.as_matrix();
    (0..r)
        .map(|i| t.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

/// Shape of a per-row reduction: vectors reduce to a scalar.
fn reduced_shape(t: &Tensor) -> Vec<usize> {
    match t.shape.len() {
        0 | 1 => Vec::new(),
        _ => t.shape[..t.shape.len() - 1].to_vec(),
    }
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Graph {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.params.get(*id),
            (None, _) => unreachable!("only parameter nodes borrow their value"),
        }
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    fn push(&mut self, name: &str, value: Tensor, op: Op) -> Result<Var> {
        check_finite(name, &value)?;
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        Var(self.nodes.len() - 1)
    }

    /// Parameter by name; panics on unknown names, which are programming errors.
    pub fn param_named(&mut self, name: &str) -> Var {
        let id = self
            .params
            .id(name)
            .unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(id)
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::shape(op, format!("expected a matrix, got {s:?}")));
        }
        Ok((s[0], s[1]))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    /// `a: [m, k]` times `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::shape("matmul", format!("[{m},{k}] x [{k2},{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), false, &mut out, 0.0);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `a: [m, k]` times the transpose of `b: [n, k]`.
    pub fn matmul_t(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul_t", a)?;
        let (n, k2) = self.matrix_dims("matmul_t", b)?;
        if k != k2 {
            return Err(Error::shape("matmul_t", format!("[{m},{k}] x [{n},{k2}]^T")));
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.value(a).data(), false, self.value(b).data(), true, &mut out, 0.0);
        self.push("matmul_t", Tensor::new(vec![m, n], out)?, Op::MatMulT(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = zip(self.value(a), self.value(b), |x, y| x + y);
        self.push("add", out, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = zip(self.value(a), self.value(b), |x, y| x - y);
        self.push("sub", out, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = zip(self.value(a), self.value(b), |x, y| x * y);
        self.push("mul", out, Op::Mul(a, b))
    }

    /// Adds the vector `b: [n]` to every row of `a: [m, n]`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, n) = self.matrix_dims("add_row", a)?;
        if self.shape(b) != [n] {
            return Err(Error::shape(
                "add_row",
                format!("{:?} + row {:?}", self.shape(a), self.shape(b)),
            ));
        }
        let mut out = self.value(a).clone();
        let bias = self.value(b).data();
        for row in out.data.chunks_mut(n) {
            for (o, b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        self.push("add_row", out, Op::AddRow(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x * c);
        self.push("scale", out, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let out = map(self.value(a), |x| x + c);
        self.push("add_scalar", out, Op::AddScalar(a))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), |x| x.max(0.0));
        self.push("relu", out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), f64::tanh);
        self.push("tanh", out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), sigmoid);
        self.push("sigmoid", out, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let out = map(self.value(a), f64::exp);
        self.push("exp", out, Op::Exp(a))
    }

    /// Concatenate matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::shape("concat_cols", "no inputs"));
        }
        let mut rows = None;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.matrix_dims("concat_cols", p)?;
            if *rows.get_or_insert(r) != r {
                return Err(Error::shape("concat_cols", "row counts differ"));
            }
            widths.push(c);
        }
        let rows = rows.unwrap();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push(
            "concat_cols",
            Tensor::new(vec![rows, total], out)?,
            Op::ConcatCols(parts.to_vec()),
        )
    }

    /// Stack matrices with equal column counts.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let mut cols = None;
        let mut rows = 0;
        for &p in parts {
            let (r, c) = self.matrix_dims("concat_rows", p)?;
            if *cols.get_or_insert(c) != c {
                return Err(Error::shape("concat_rows", "column counts differ"));
            }
            rows += r;
        }
        let cols = cols.ok_or_else(|| Error::shape("concat_rows", "no inputs"))?;
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.value(p).data());
        }
        self.push(
            "concat_rows",
            Tensor::new(vec![rows, cols], out)?,
            Op::ConcatRows(parts.to_vec()),
        )
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (rows, cols) = self.matrix_dims("slice_cols", a)?;
        if start >= end || end > cols {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {cols}")));
        }
        let src = self.value(a).data();
        let mut out = Vec::with_capacity(rows * (end - start));
        for r in 0..rows {
            out.extend_from_slice(&src[r * cols + start..r * cols + end]);
        }
        self.push(
            "slice_cols",
            Tensor::new(vec![rows, end - start], out)?,
            Op::SliceCols(a, start),
        )
    }

    /// Flat gather: `out[i] = a.data[index[i]]`, reshaped to `shape`.
    pub fn gather(&mut self, a: Var, index: Vec<usize>, shape: Vec<usize>) -> Result<Var> {
        let src = self.value(a).data();
        if let Some(&bad) = index.iter().find(|&&i| i >= src.len()) {
            return Err(Error::shape(
                "gather",
                format!("index {bad} out of {} elements", src.len()),
            ));
        }
        let out: Vec<f64> = index.iter().map(|&i| src[i]).collect();
        let out = Tensor::new(shape, out)?;
        self.push("gather", out, Op::Gather(a, index))
    }

    /// Rows of a matrix (repeats allowed).
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let (r, c) = self.matrix_dims("gather_rows", a)?;
        if let Some(&bad) = rows.iter().find(|&&i| i >= r) {
            return Err(Error::shape("gather_rows", format!("row {bad} of {r}")));
        }
        let index = rows
            .iter()
            .flat_map(|&row| (row * c..(row + 1) * c).collect::<Vec<_>>())
            .collect();
        self.gather(a, index, vec![rows.len(), c])
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(a).clone().reshaped(shape)?;
        self.push("reshape", out, Op::Reshape(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.as_matrix();
        let mut out = x.data.clone();
        for row in 0..r {
            let s = &mut out[row * c..(row + 1) * c];
            let lse = super::logsumexp(s);
            s.iter_mut().for_each(|v| *v -= lse);
        }
        let out = Tensor {
            shape: x.shape.clone(),
            data: out,
        };
        self.push("log_softmax", out, Op::LogSoftmaxRows(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.as_matrix();
        let mut out = x.data.clone();
        for row in 0..r {
            let s = &mut out[row * c..(row + 1) * c];
            let lse = super::logsumexp(s);
            s.iter_mut().for_each(|v| *v = (*v - lse).exp());
        }
        let out = Tensor {
            shape: x.shape.clone(),
            data: out,
        };
        self.push("softmax", out, Op::SoftmaxRows(a))
    }

    /// Row-wise log-sum-exp: `[m, n] -> [m]`, `[n] -> []`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, _) = x.as_matrix();
        let out: Vec<f64> = (0..r).map(|i| super::logsumexp(x.row(i))).collect();
        let out = Tensor::new(reduced_shape(x), out)?;
        self.push("logsumexp", out, Op::LogSumExpRows(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data.iter().sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = x.data.iter().sum::<f64>() / x.len() as f64;
        self.push("mean", Tensor::scalar(s), Op::Mean(a))
    }

    /// Row-wise sum: `[m, n] -> [m]`, `[n] -> []`.
    pub fn row_sums(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, _) = x.as_matrix();
        let out: Vec<f64> = (0..r).map(|i| x.row(i).iter().sum()).collect();
        let out = Tensor::new(reduced_shape(x), out)?;
        self.push("row_sums", out, Op::RowSums(a))
    }

    /// Element-wise maximum over a sequence of equally shaped tensors
    /// (max-pooling over the sequence axis). Ties go to the earliest element.
    pub fn max_pool(&mut self, seq: &[Var]) -> Result<Var> {
        let first = *seq
            .first()
            .ok_or_else(|| Error::shape("max_pool", "empty sequence"))?;
        for &v in &seq[1..] {
            self.same_shape("max_pool", first, v)?;
        }
        let mut out = self.value(first).clone();
        for &v in &seq[1..] {
            for (o, &x) in out.data.iter_mut().zip(self.value(v).data()) {
                if x > *o {
                    *o = x;
                }
            }
        }
        self.push("max_pool", out, Op::MaxPool(seq.to_vec()))
    }

    /// Scale every row to unit L2 norm. A zero row is an error.
    pub fn l2_normalize_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let (r, c) = x.as_matrix();
        let norms = row_norms(x);
        if norms.iter().any(|&n| n == 0.0) {
            return Err(Error::ZeroNorm("l2_normalize_rows"));
        }
        let mut out = x.clone();
        for (i, n) in norms.iter().enumerate().take(r) {
            out.data[i * c..(i + 1) * c].iter_mut().for_each(|v| *v /= n);
        }
        self.push("l2_normalize", out, Op::L2NormRows(a))
    }

    /// Row-wise cosine similarity of two equally shaped matrices.
    pub fn cosine_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine_rows", a, b)?;
        let (x, y) = (self.value(a), self.value(b));
        let (r, _) = x.as_matrix();
        let (nx, ny) = (row_norms(x), row_norms(y));
        if nx.iter().chain(&ny).any(|&n| n == 0.0) {
            return Err(Error::ZeroNorm("cosine_rows"));
        }
        let out: Vec<f64> = (0..r)
            .map(|i| super::dot(x.row(i), y.row(i)) / (nx[i] * ny[i]))
            .collect();
        let out = Tensor::new(reduced_shape(x), out)?;
        self.push("cosine_rows", out, Op::CosineRows(a, b))
    }

    /// Attach an externally computed value with a custom backward rule.
    pub fn custom(
        &mut self,
        inputs: &[Var],
        output: Tensor,
        op: Box<dyn CustomOp>,
    ) -> Result<Var> {
        let name = op.name();
        self.push(name, output, Op::Custom(inputs.to_vec(), op))
    }

    /// Gradients of a scalar loss with respect to every registered parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        Ok(self.backward_wrt(loss, &[])?.0)
    }

    /// Like [`Graph::backward`], additionally returning gradients for the
    /// listed nodes (which may be constants).
    pub fn backward_wrt(&self, loss: Var, wrt: &[Var]) -> Result<(Gradients, Vec<Tensor>)> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize_with(loss.0 + 1, || None);
        grads[loss.0] = Some(Tensor::filled(lv.shape(), 1.0));
        let mut out = Gradients::zeros_like(self.params);
        let mut keep: Vec<Option<Tensor>> = vec![None; wrt.len()];

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            for (slot, w) in keep.iter_mut().zip(wrt) {
                if w.0 == i {
                    *slot = Some(g.clone());
                }
            }
            self.propagate(Var(i), &g, &mut grads, &mut out)?;
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("gradient".into()));
        }
        let keep = keep
            .into_iter()
            .zip(wrt)
            .map(|(k, &w)| k.unwrap_or_else(|| Tensor::zeros(self.shape(w))))
            .collect();
        Ok((out, keep))
    }

    fn propagate(
        &self,
        node: Var,
        g: &Tensor,
        grads: &mut [Option<Tensor>],
        params: &mut Gradients,
    ) -> Result<()> {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => {
                for (e, x) in existing.data.iter_mut().zip(&t.data) {
                    *e += x;
                }
            }
            slot @ None => *slot = Some(t),
        };
        let y = self.value(node);
        match &self.nodes[node.0].op {
            Op::Leaf => {}
            Op::Param(id) => params.accumulate(*id, g),
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape[0], av.shape[1]);
                let n = bv.shape[1];
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, &g.data, false, &bv.data, true, &mut ga, 0.0);
                let mut gb = vec![0.0; k * n];
                gemm(k, m, n, &av.data, true, &g.data, false, &mut gb, 0.0);
                acc(*a, Tensor::new(vec![m, k], ga)?);
                acc(*b, Tensor::new(vec![k, n], gb)?);
            }
            Op::MatMulT(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k) = (av.shape[0], av.shape[1]);
                let n = bv.shape[0];
                let mut ga = vec![0.0; m * k];
                gemm(m, n, k, &g.data, false, &bv.data, false, &mut ga, 0.0);
                let mut gb = vec![0.0; n * k];
                gemm(n, m, k, &g.data, true, &av.data, false, &mut gb, 0.0);
                acc(*a, Tensor::new(vec![m, k], ga)?);
                acc(*b, Tensor::new(vec![n, k], gb)?);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, map(g, |v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                acc(*a, zip(g, bv, |x, y| x * y));
                acc(*b, zip(g, av, |x, y| x * y));
            }
            Op::AddRow(a, b) => {
                let n = self.value(*b).len();
                let mut gb = vec![0.0; n];
                for row in g.data.chunks(n) {
                    for (s, v) in gb.iter_mut().zip(row) {
                        *s += v;
                    }
                }
                acc(*a, g.clone());
                acc(*b, Tensor::vector(gb));
            }
            Op::Scale(a, c) => acc(*a, map(g, |v| v * c)),
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => {
                let x = self.value(*a);
                acc(*a, zip(g, x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::Tanh(a) => acc(*a, zip(g, y, |gv, yv| gv * (1.0 - yv * yv))),
            Op::Sigmoid(a) => acc(*a, zip(g, y, |gv, yv| gv * yv * (1.0 - yv))),
            Op::Exp(a) => acc(*a, zip(g, y, |gv, yv| gv * yv)),
            Op::ConcatCols(parts) => {
                let rows = y.shape[0];
                let total = y.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).shape[1];
                    let mut gp = Vec::with_capacity(rows * w);
                    for r in 0..rows {
                        gp.extend_from_slice(&g.data[r * total + offset..r * total + offset + w]);
                    }
                    acc(p, Tensor::new(vec![rows, w], gp)?);
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let shape = self.value(p).shape.clone();
                    let len = self.value(p).len();
                    acc(p, Tensor::new(shape, g.data[offset..offset + len].to_vec())?);
                    offset += len;
                }
            }
            Op::SliceCols(a, start) => {
                let x = self.value(*a);
                let (rows, cols) = (x.shape[0], x.shape[1]);
                let w = y.shape[1];
                let mut ga = vec![0.0; rows * cols];
                for r in 0..rows {
                    ga[r * cols + start..r * cols + start + w]
                        .copy_from_slice(&g.data[r * w..(r + 1) * w]);
                }
                acc(*a, Tensor::new(vec![rows, cols], ga)?);
            }
            Op::Gather(a, index) => {
                let mut ga = Tensor::zeros(self.value(*a).shape());
                for (&i, &v) in index.iter().zip(&g.data) {
                    ga.data[i] += v;
                }
                acc(*a, ga);
            }
            Op::LogSoftmaxRows(a) => {
                let (r, c) = y.as_matrix();
                let mut ga = g.data.clone();
                for row in 0..r {
                    let gs: f64 = g.data[row * c..(row + 1) * c].iter().sum();
                    for j in row * c..(row + 1) * c {
                        ga[j] -= y.data[j].exp() * gs;
                    }
                }
                acc(*a, Tensor { shape: y.shape.clone(), data: ga });
            }
            Op::SoftmaxRows(a) => {
                let (r, c) = y.as_matrix();
                let mut ga = vec![0.0; y.len()];
                for row in 0..r {
                    let span = row * c..(row + 1) * c;
                    let inner = super::dot(&g.data[span.clone()], &y.data[span.clone()]);
                    for j in span {
                        ga[j] = y.data[j] * (g.data[j] - inner);
                    }
                }
                acc(*a, Tensor { shape: y.shape.clone(), data: ga });
            }
            Op::LogSumExpRows(a) => {
                let x = self.value(*a);
                let (r, c) = x.as_matrix();
                let mut ga = vec![0.0; x.len()];
                for row in 0..r {
                    for j in row * c..(row + 1) * c {
                        ga[j] = g.data[row] * (x.data[j] - y.data[row]).exp();
                    }
                }
                acc(*a, Tensor { shape: x.shape.clone(), data: ga });
            }
            Op::Sum(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.shape(), g.data[0]));
            }
            Op::Mean(a) => {
                let x = self.value(*a);
                acc(*a, Tensor::filled(x.shape(), g.data[0] / x.len() as f64));
            }
            Op::RowSums(a) => {
                let x = self.value(*a);
                let (r, c) = x.as_matrix();
                let mut ga = vec![0.0; x.len()];
                for row in 0..r {
                    ga[row * c..(row + 1) * c].iter_mut().for_each(|v| *v = g.data[row]);
                }
                acc(*a, Tensor { shape: x.shape.clone(), data: ga });
            }
            Op::MaxPool(seq) => {
                // Recompute the winning element per position (first on ties).
                let mut winner = vec![0usize; y.len()];
                let mut best = self.value(seq[0]).data.clone();
                for (s, &v) in seq.iter().enumerate().skip(1) {
                    for (j, &x) in self.value(v).data.iter().enumerate() {
                        if x > best[j] {
                            best[j] = x;
                            winner[j] = s;
                        }
                    }
                }
                for (s, &v) in seq.iter().enumerate() {
                    let mut gv = Tensor::zeros(y.shape());
                    let mut any = false;
                    for j in 0..y.len() {
                        if winner[j] == s {
                            gv.data[j] = g.data[j];
                            any = true;
                        }
                    }
                    if any {
                        acc(v, gv);
                    }
                }
            }
            Op::L2NormRows(a) => {
                let x = self.value(*a);
                let (r, c) = x.as_matrix();
                let norms = row_norms(x);
                let mut ga = vec![0.0; x.len()];
                for row in 0..r {
                    let span = row * c..(row + 1) * c;
                    let inner = super::dot(&y.data[span.clone()], &g.data[span.clone()]);
                    for j in span {
                        ga[j] = (g.data[j] - y.data[j] * inner) / norms[row];
                    }
                }
                acc(*a, Tensor { shape: x.shape.clone(), data: ga });
            }
            Op::CosineRows(a, b) => {
                let (xa, xb) = (self.value(*a), self.value(*b));
                let (r, c) = xa.as_matrix();
                let (na, nb) = (row_norms(xa), row_norms(xb));
                let mut ga = vec![0.0; xa.len()];
                let mut gb = vec![0.0; xb.len()];
                for row in 0..r {
                    let cos = y.data[row];
                    let gr = g.data[row];
                    for j in row * c..(row + 1) * c {
                        ga[j] = gr * (xb.data[j] / (na[row] * nb[row]) - cos * xa.data[j] / (na[row] * na[row]));
                        gb[j] = gr * (xa.data[j] / (na[row] * nb[row]) - cos * xb.data[j] / (nb[row] * nb[row]));
                    }
                }
                acc(*a, Tensor { shape: xa.shape.clone(), data: ga });
                acc(*b, Tensor { shape: xb.shape.clone(), data: gb });
            }
            Op::Reshape(a) => {
                let shape = self.value(*a).shape.clone();
                acc(*a, g.clone().reshaped(shape)?);
            }
            Op::Custom(inputs, op) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
                let gs = op.backward(&vals, y, g)?;
                for (&v, gi) in inputs.iter().zip(gs) {
                    if let Some(gi) = gi {
                        if gi.shape() != self.value(v).shape() {
                            return Err(Error::shape(op.name(), "custom gradient shape"));
                        }
                        acc(v, gi);
                    }
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> ParamStore {
        ParamStore::new()
    }

    #[test]
    fn relu_softmax_cosine_examples() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let r = g.relu(x).unwrap();
        assert_eq!(g.value(r).data(), &[0.0, 0.0, 2.0]);

        let z = g.constant(Tensor::vector(vec![0.0, 0.0]));
        let sm = g.softmax_rows(z).unwrap();
        assert_eq!(g.value(sm).data(), &[0.5, 0.5]);

        let v = g.constant(Tensor::matrix(1, 3, vec![0.2, -3.0, 1.5]).unwrap());
        let c = g.cosine_rows(v, v).unwrap();
        assert!((g.value(c).item().unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut s = store();
        let id = s.add("x", Tensor::vector(vec![1.0, 2.0])).unwrap();
        let unused = s.add("unused", Tensor::vector(vec![5.0])).unwrap();
        let mut g = Graph::new(&s);
        let x = g.param(id);
        let sq = g.mul(x, x).unwrap();
        let loss = g.sum(sq).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(id).data(), &[2.0, 4.0]);
        assert_eq!(grads.get(unused).data(), &[0.0]);
    }

    #[test]
    fn shared_parameter_accumulates() {
        let mut s = store();
        let id = s.add("x", Tensor::vector(vec![3.0])).unwrap();
        let mut g = Graph::new(&s);
        let a = g.param(id);
        let b = g.param(id);
        let p = g.mul(a, b).unwrap();
        let loss = g.sum(p).unwrap();
        assert_eq!(g.backward(loss).unwrap().get(id).data(), &[6.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let s = store();
        let mut g = Graph::new(&s);
        let x = g.constant(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(g.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn shape_mismatch_and_non_finite_are_errors() {
        let s = store();
        let mut g = Graph::new(&s);
        let a = g.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = g.constant(Tensor::vector(vec![1.0]));
        assert!(matches!(g.add(a, b), Err(Error::Shape { .. })));
        let big = g.constant(Tensor::vector(vec![1000.0]));
        assert!(matches!(g.exp(big), Err(Error::NonFinite(_))));
        let zero = g.constant(Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap());
        assert!(matches!(g.l2_normalize_rows(zero), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn logsumexp_op_tolerates_negative_infinity_inputs() {
        let s = store();
        let mut g = Graph::new(&s);
        let v = g.constant(Tensor::vector(vec![f64::NEG_INFINITY, 3.0]));
        let l = g.logsumexp_rows(v).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 3.0);
    }
}
