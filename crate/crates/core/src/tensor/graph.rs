use std::collections::HashMap;

use super::{Rng, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

/// Named learnable parameters. Networks hold [`ParamId`]s into a store.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.iter().map(Tensor::len).sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(Tensor::is_finite)
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MatMul(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Relu(Var),
    Exp(Var),
    Log(Var),
    Square(Var),
    Sum(Var),
    RowSum(Var),
    ColSum(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    LogSumExpRows(Var),
    LogSoftmaxRows(Var),
    StopGrad,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Scale(..) => "scale",
            Op::AddScalar(..) => "add_scalar",
            Op::MatMul(..) => "matmul",
            Op::Sigmoid(_) => "sigmoid",
            Op::Tanh(_) => "tanh",
            Op::Softplus(_) => "softplus",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Square(_) => "square",
            Op::Sum(_) => "sum",
            Op::RowSum(_) => "row_sum",
            Op::ColSum(_) => "col_sum",
            Op::ConcatCols(_) => "concat_cols",
            Op::ConcatRows(_) => "concat_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::LogSumExpRows(_) => "logsumexp_rows",
            Op::LogSoftmaxRows(_) => "log_softmax_rows",
            Op::StopGrad => "stop_grad",
        }
    }

    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::StopGrad => vec![],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Sigmoid(a)
            | Op::Tanh(a)
            | Op::Softplus(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Square(a)
            | Op::Sum(a)
            | Op::RowSum(a)
            | Op::ColSum(a)
            | Op::SliceCols(a, _)
            | Op::SliceRows(a, _)
            | Op::LogSumExpRows(a)
            | Op::LogSoftmaxRows(a) => vec![*a],
            Op::ConcatCols(v) | Op::ConcatRows(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    param: Option<ParamId>,
}

/// Reverse-mode tape. Nodes are appended in evaluation order, so the
/// node list is already a topological order.
///
/// The first non-finite value produced by any operation is recorded as a
/// fault; [`Graph::check`] and [`Graph::backward`] report it.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    fault: Option<Error>,
}

/// Gaussian parameters living on a graph.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub std: Var,
}

fn broadcast_dims(a: &Tensor, b: &Tensor, op: &'static str) -> Result<(usize, usize)> {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    let r = if ra == rb || rb == 1 {
        ra
    } else if ra == 1 {
        rb
    } else {
        return Err(Error::shape(op, format!("rows {ra} vs {rb}")));
    };
    let c = if ca == cb || cb == 1 {
        ca
    } else if ca == 1 {
        cb
    } else {
        return Err(Error::shape(op, format!("cols {ca} vs {cb}")));
    };
    Ok((r, c))
}

fn broadcast_apply(
    a: &Tensor,
    b: &Tensor,
    r: usize,
    c: usize,
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    let (ra, ca, rb, cb) = (a.rows(), a.cols(), b.rows(), b.cols());
    let (ad, bd) = (a.data(), b.data());
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        let ia = if ra == 1 { 0 } else { i * ca };
        let ib = if rb == 1 { 0 } else { i * cb };
        for j in 0..c {
            let x = ad[ia + if ca == 1 { 0 } else { j }];
            let y = bd[ib + if cb == 1 { 0 } else { j }];
            out.push(f(x, y));
        }
    }
    Tensor {
        shape: vec![r, c],
        data: out,
    }
}

/// Sum a full-size gradient down to the (possibly broadcast) operand shape.
fn reduce_to(grad: &[f64], r: usize, c: usize, target: &Tensor) -> Tensor {
    let (rt, ct) = (target.rows(), target.cols());
    if rt == r && ct == c {
        return Tensor {
            shape: target.shape.clone(),
            data: grad.to_vec(),
        };
    }
    let mut out = vec![0.0; rt * ct];
    for i in 0..r {
        let oi = if rt == 1 { 0 } else { i };
        for j in 0..c {
            let oj = if ct == 1 { 0 } else { j };
            out[oi * ct + oj] += grad[i * c + j];
        }
    }
    Tensor {
        shape: target.shape.clone(),
        data: out,
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], r: usize, k: usize, n: usize) {
    for i in 0..r {
        let o = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (ov, bv) in o.iter_mut().zip(brow) {
                *ov += av * bv;
            }
        }
    }
}

fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Error if any operation so far produced a non-finite value.
    pub fn check(&self) -> Result<()> {
        match &self.fault {
            None => Ok(()),
            Some(Error::NonFinite { op, node }) => Err(Error::NonFinite { op, node: *node }),
            Some(e) => Err(Error::invalid(e.to_string())),
        }
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        let idx = self.nodes.len();
        if self.fault.is_none() && !value.is_finite() {
            self.fault = Some(Error::NonFinite {
                op: op.name(),
                node: idx,
            });
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            param: None,
        });
        Var(idx)
    }

    /// A leaf that receives gradients.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Bind a stored parameter; repeated calls return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Leaf, true);
        self.nodes[v.0].param = Some(id);
        self.params.insert(id, v);
        v
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn binary(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let name = op.name();
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (r, c) = broadcast_dims(va, vb, name).unwrap_or_else(|e| panic!("{e}"));
        let out = broadcast_apply(va, vb, r, c, f);
        let rg = self.rg(&[a, b]);
        self.push(out, op, rg)
    }

    fn unary(&mut self, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let out = self.nodes[a.0].value.map(f);
        let out = if out.shape.len() < 2 {
            let (r, c) = (out.rows(), out.cols());
            Tensor {
                shape: vec![r, c],
                data: out.data,
            }
        } else {
            out
        };
        let rg = self.rg(&[a]);
        self.push(out, op, rg)
    }

    // Elementwise arithmetic broadcasts `1×c`, `r×1` and `1×1` operands.
    // Shape errors here are programming errors and panic.

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Mul(a, b), |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.binary(a, b, Op::Div(a, b), |x, y| x / y)
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::Scale(a, k), |x| k * x)
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + k)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.neg(a);
        self.add_scalar(n, 1.0)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, Op::Tanh(a), f64::tanh)
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, Op::Softplus(a), softplus)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, Op::Log(a), f64::ln)
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        let (r, k, k2, n) = (va.rows(), va.cols(), vb.rows(), vb.cols());
        assert_eq!(k, k2, "matmul: inner dims {k} vs {k2}");
        let mut out = vec![0.0; r * n];
        matmul_into(va.data(), vb.data(), &mut out, r, k, n);
        let rg = self.rg(&[a, b]);
        self.push(
            Tensor {
                shape: vec![r, n],
                data: out,
            },
            Op::MatMul(a, b),
            rg,
        )
    }

    /// `x W + b` with a `1×n` bias row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul(x, w);
        self.add(xw, b)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![1, 1],
                data: vec![s],
            },
            Op::Sum(a),
            rg,
        )
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].value.len() as f64;
        let s = self.sum(a);
        self.scale(s, 1.0 / n)
    }

    /// `r×c -> r×1`
    pub fn row_sum(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        let data = (0..r)
            .map(|i| v.data[i * c..(i + 1) * c].iter().sum())
            .collect();
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![r, 1],
                data,
            },
            Op::RowSum(a),
            rg,
        )
    }

    /// `r×c -> 1×c`
    pub fn col_sum(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        let mut data = vec![0.0; c];
        for i in 0..r {
            for (o, x) in data.iter_mut().zip(&v.data[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![1, c],
                data,
            },
            Op::ColSum(a),
            rg,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: no inputs");
        let r = self.nodes[parts[0].0].value.rows();
        let widths: Vec<usize> = parts
            .iter()
            .map(|p| {
                let v = &self.nodes[p.0].value;
                assert_eq!(v.rows(), r, "concat_cols: row mismatch");
                v.cols()
            })
            .collect();
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for i in 0..r {
            for (p, &w) in parts.iter().zip(&widths) {
                data.extend_from_slice(&self.nodes[p.0].value.data[i * w..(i + 1) * w]);
            }
        }
        let rg = self.rg(parts);
        self.push(
            Tensor {
                shape: vec![r, total],
                data,
            },
            Op::ConcatCols(parts.to_vec()),
            rg,
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: no inputs");
        let c = self.nodes[parts[0].0].value.cols();
        let mut data = Vec::new();
        let mut r = 0;
        for p in parts {
            let v = &self.nodes[p.0].value;
            assert_eq!(v.cols(), c, "concat_rows: col mismatch");
            r += v.rows();
            data.extend_from_slice(&v.data);
        }
        let rg = self.rg(parts);
        self.push(
            Tensor {
                shape: vec![r, c],
                data,
            },
            Op::ConcatRows(parts.to_vec()),
            rg,
        )
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        assert!(start + len <= c, "slice_cols: {start}+{len} > {c}");
        let mut data = Vec::with_capacity(r * len);
        for i in 0..r {
            data.extend_from_slice(&v.data[i * c + start..i * c + start + len]);
        }
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![r, len],
                data,
            },
            Op::SliceCols(a, start),
            rg,
        )
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        assert!(start + len <= r, "slice_rows: {start}+{len} > {r}");
        let data = v.data[start * c..(start + len) * c].to_vec();
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![len, c],
                data,
            },
            Op::SliceRows(a, start),
            rg,
        )
    }

    /// Numerically stable `log Σ_j exp(a_ij)` per row: `r×c -> r×1`.
    pub fn logsumexp_rows(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        let data = (0..r)
            .map(|i| logsumexp(&v.data[i * c..(i + 1) * c]))
            .collect();
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![r, 1],
                data,
            },
            Op::LogSumExpRows(a),
            rg,
        )
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let v = &self.nodes[a.0].value;
        let (r, c) = (v.rows(), v.cols());
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &v.data[i * c..(i + 1) * c];
            let l = logsumexp(row);
            data.extend(row.iter().map(|x| x - l));
        }
        let rg = self.rg(&[a]);
        self.push(
            Tensor {
                shape: vec![r, c],
                data,
            },
            Op::LogSoftmaxRows(a),
            rg,
        )
    }

    /// Same value, no gradient flows back through it.
    pub fn stop_grad(&mut self, a: Var) -> Var {
        let v = self.nodes[a.0].value.clone();
        self.push(v, Op::StopGrad, false)
    }

    /// Gradients of a scalar `loss` with respect to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        self.check()?;
        let lv = &self.nodes[loss.0].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape.clone()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Tensor>> = vec![None; n];
        grads[loss.0] = Some(Tensor {
            shape: lv.shape.clone(),
            data: vec![1.0],
        });

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            for p in node.op.parents() {
                if p.0 >= idx {
                    return Err(Error::GraphCycle {
                        node: idx,
                        parent: p.0,
                    });
                }
            }
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }

        let mut params = HashMap::new();
        for (&pid, &var) in &self.params {
            if var.0 < n {
                if let Some(g) = &grads[var.0] {
                    params.insert(pid, g.clone());
                }
            }
        }
        Ok(Gradients { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, g: Tensor) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(acc) => {
                for (a, b) in acc.data.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(g),
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let out = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        let (r, c) = (out.rows(), out.cols());
        let like = |v: Var, data: Vec<f64>| Tensor {
            shape: self.nodes[v.0].value.shape.clone(),
            data,
        };
        match &node.op {
            Op::Leaf | Op::StopGrad => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, reduce_to(&g.data, r, c, val(*a)));
                self.accumulate(grads, *b, reduce_to(&g.data, r, c, val(*b)));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, reduce_to(&g.data, r, c, val(*a)));
                let neg: Vec<f64> = g.data.iter().map(|x| -x).collect();
                self.accumulate(grads, *b, reduce_to(&neg, r, c, val(*b)));
            }
            Op::Mul(a, b) | Op::Div(a, b) => {
                let is_div = matches!(node.op, Op::Div(..));
                let (va, vb) = (val(*a), val(*b));
                if self.nodes[a.0].requires_grad {
                    let f = if is_div {
                        broadcast_apply(va, vb, r, c, |_, y| 1.0 / y)
                    } else {
                        broadcast_apply(va, vb, r, c, |_, y| y)
                    };
                    let ga: Vec<f64> = g.data.iter().zip(&f.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, reduce_to(&ga, r, c, va));
                }
                if self.nodes[b.0].requires_grad {
                    let f = if is_div {
                        broadcast_apply(va, vb, r, c, |x, y| -x / (y * y))
                    } else {
                        broadcast_apply(va, vb, r, c, |x, _| x)
                    };
                    let gb: Vec<f64> = g.data.iter().zip(&f.data).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, reduce_to(&gb, r, c, vb));
                }
            }
            Op::Scale(a, k) => {
                let d = g.data.iter().map(|x| k * x).collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::AddScalar(a) => self.accumulate(grads, *a, like(*a, g.data.clone())),
            Op::MatMul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.nodes[a.0].requires_grad {
                    // dA = dC Bᵀ
                    let mut da = vec![0.0; m * k];
                    for i in 0..m {
                        let grow = &g.data[i * n..(i + 1) * n];
                        for p in 0..k {
                            let brow = &vb.data[p * n..(p + 1) * n];
                            da[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
                        }
                    }
                    self.accumulate(grads, *a, like(*a, da));
                }
                if self.nodes[b.0].requires_grad {
                    // dB = Aᵀ dC
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g.data[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = va.data[i * k + p];
                            if av == 0.0 {
                                continue;
                            }
                            for (o, x) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * x;
                            }
                        }
                    }
                    self.accumulate(grads, *b, like(*b, db));
                }
            }
            Op::Sigmoid(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&out.data)
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Tanh(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&out.data)
                    .map(|(g, y)| g * (1.0 - y * y))
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Softplus(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&val(*a).data)
                    .map(|(g, x)| g * sigmoid(*x))
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Relu(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&val(*a).data)
                    .map(|(g, x)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Exp(a) => {
                let d = g.data.iter().zip(&out.data).map(|(g, y)| g * y).collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Log(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&val(*a).data)
                    .map(|(g, x)| g / x)
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Square(a) => {
                let d = g
                    .data
                    .iter()
                    .zip(&val(*a).data)
                    .map(|(g, x)| 2.0 * g * x)
                    .collect();
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::Sum(a) => {
                let n = val(*a).len();
                self.accumulate(grads, *a, like(*a, vec![g.data[0]; n]));
            }
            Op::RowSum(a) => {
                let va = val(*a);
                let (ra, ca) = (va.rows(), va.cols());
                let mut d = Vec::with_capacity(ra * ca);
                for i in 0..ra {
                    d.extend(std::iter::repeat_n(g.data[i], ca));
                }
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::ColSum(a) => {
                let va = val(*a);
                let ra = va.rows();
                let mut d = Vec::with_capacity(ra * g.data.len());
                for _ in 0..ra {
                    d.extend_from_slice(&g.data);
                }
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let w = val(*p).cols();
                    if self.nodes[p.0].requires_grad {
                        let mut d = Vec::with_capacity(r * w);
                        for i in 0..r {
                            d.extend_from_slice(&g.data[i * c + offset..i * c + offset + w]);
                        }
                        self.accumulate(grads, *p, like(*p, d));
                    }
                    offset += w;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let n = val(*p).len();
                    if self.nodes[p.0].requires_grad {
                        self.accumulate(grads, *p, like(*p, g.data[offset..offset + n].to_vec()));
                    }
                    offset += n;
                }
            }
            Op::SliceCols(a, start) => {
                let va = val(*a);
                let ca = va.cols();
                let mut d = vec![0.0; va.len()];
                for i in 0..r {
                    d[i * ca + start..i * ca + start + c]
                        .copy_from_slice(&g.data[i * c..(i + 1) * c]);
                }
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::SliceRows(a, start) => {
                let va = val(*a);
                let ca = va.cols();
                let mut d = vec![0.0; va.len()];
                d[start * ca..start * ca + g.len()].copy_from_slice(&g.data);
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::LogSumExpRows(a) => {
                let va = val(*a);
                let ca = va.cols();
                let mut d = Vec::with_capacity(va.len());
                for i in 0..va.rows() {
                    let l = out.data[i];
                    d.extend(
                        va.data[i * ca..(i + 1) * ca]
                            .iter()
                            .map(|x| g.data[i] * (x - l).exp()),
                    );
                }
                self.accumulate(grads, *a, like(*a, d));
            }
            Op::LogSoftmaxRows(a) => {
                let mut d = Vec::with_capacity(out.len());
                for i in 0..r {
                    let grow = &g.data[i * c..(i + 1) * c];
                    let gs: f64 = grow.iter().sum();
                    let yrow = &out.data[i * c..(i + 1) * c];
                    d.extend(grow.iter().zip(yrow).map(|(gv, y)| gv - y.exp() * gs));
                }
                self.accumulate(grads, *a, like(*a, d));
            }
        }
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    params: HashMap<ParamId, Tensor>,
}

impl Gradients {
    /// Gradient for any node, `None` if it does not depend on the loss
    /// or does not require gradients.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn param(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(&id)
    }

    pub fn params(&self) -> &HashMap<ParamId, Tensor> {
        &self.params
    }

    /// Parameter gradients aligned with `store`, zeros where no gradient reached.
    pub fn dense(&self, store: &ParamStore) -> Vec<Tensor> {
        store
            .ids()
            .map(|id| {
                self.params
                    .get(&id)
                    .cloned()
                    .unwrap_or_else(|| Tensor::zeros(store.get(id).shape()))
            })
            .collect()
    }
}

/// `mean + std ∘ ε` with `ε ~ N(0, I)` drawn as a constant.
pub fn gaussian_reparam(g: &mut Graph, params: GaussianVars, rng: &mut Rng) -> Result<Var> {
    let std = g.value(params.std);
    if let Some(&bad) = std.data().iter().find(|s| !(**s > 0.0)) {
        return Err(Error::NonPositiveStd(bad));
    }
    let shape = std.shape().to_vec();
    let eps = rng.normal_tensor(&shape);
    let eps = g.constant(eps);
    let noise = g.mul(params.std, eps);
    Ok(g.add(params.mean, noise))
}
