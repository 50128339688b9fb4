//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every value on the tape is a matrix (rank-0 and rank-1 tensors are promoted to one row).
//! Parameters enter through [`Tape::param`], which snapshots the current value from a
//! [`ParamSet`]; [`Tape::backward`] returns [`Grads`] keyed by parameter name, to be
//! accumulated into whichever parameter sets own those names.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{Grads, ParamSet, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(String),
    Affine(Var, Var, Var),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Tanh(Var),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Exp(Var),
    Log(Var),
    Softplus(Var),
    Abs(Var),
    Square(Var),
    LogSoftmax(Var),
    Concat(Var, Var),
    Gather(Var, Vec<usize>),
    SumCols(Var),
    Sum(Var),
    Mean(Var),
    MeanAbs(Var),
    MeanSquare(Var),
    Clamp(Var, f64, f64),
    Min(Var, Var),
}

struct Node {
    value: Tensor,
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
}

/// Single-owner record of one forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<String, Var>,
    consumed: bool,
}

fn bcast_dims(op: &'static str, a: (usize, usize), b: (usize, usize)) -> Result<(usize, usize)> {
    let dim = |x: usize, y: usize| {
        if x == y || y == 1 {
            Some(x)
        } else if x == 1 {
            Some(y)
        } else {
            None
        }
    };
    match (dim(a.0, b.0), dim(a.1, b.1)) {
        (Some(r), Some(c)) => Ok((r, c)),
        _ => Err(Error::Shape {
            op,
            expected: vec![a.0, a.1],
            got: vec![b.0, b.1],
        }),
    }
}

#[inline]
fn bidx(r: usize, c: usize, rows: usize, cols: usize) -> usize {
    let r = if rows == 1 { 0 } else { r };
    let c = if cols == 1 { 0 } else { c };
    r * cols + c
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

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// First element of a value; intended for scalar outputs.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>, op: Op, rg: bool) -> Result<Var> {
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite(name.to_string()));
        }
        let value = Tensor::matrix(rows, cols, data)?;
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            requires_grad: rg,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn rg(&self, vs: &[Var]) -> bool {
        vs.iter().any(|v| self.node(*v).requires_grad)
    }

    /// Records a constant input.
    pub fn input(&mut self, t: &Tensor) -> Result<Var> {
        let (r, c) = t.dims2()?;
        self.push("input", r, c, t.data().to_vec(), Op::Leaf, false)
    }

    /// Records a constant built from raw data.
    pub fn constant(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() {
            return Err(Error::Shape {
                op: "constant",
                expected: vec![rows, cols],
                got: vec![data.len()],
            });
        }
        self.push("constant", rows, cols, data, Op::Leaf, false)
    }

    /// Records a parameter. Repeated requests for the same name return the same handle.
    pub fn param(&mut self, params: &ParamSet, name: &str) -> Result<Var> {
        if let Some(v) = self.params.get(name) {
            return Ok(*v);
        }
        let t = params.get(name)?;
        let (r, c) = t.dims2()?;
        let v = self.push(name, r, c, t.data().to_vec(), Op::Param(name.to_string()), true)?;
        self.params.insert(name.to_string(), v);
        Ok(v)
    }

    /// Copies a value into a fresh constant leaf, cutting gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let (r, c) = self.dims(v);
        let data = self.node(v).value.data().to_vec();
        self.push("detach", r, c, data, Op::Leaf, false)
    }

    /// `x @ w + b` with `x: n x in`, `w: in x out`, `b: 1 x out`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(x);
        let (wk, m) = self.dims(w);
        if wk != k {
            return Err(Error::Shape {
                op: "affine",
                expected: vec![n, wk],
                got: vec![n, k],
            });
        }
        if self.dims(b) != (1, m) {
            let (br, bc) = self.dims(b);
            return Err(Error::Shape {
                op: "affine.bias",
                expected: vec![1, m],
                got: vec![br, bc],
            });
        }
        let xd = self.node(x).value.data();
        let wd = self.node(w).value.data();
        let bd = self.node(b).value.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            let o = &mut out[i * m..(i + 1) * m];
            o.copy_from_slice(bd);
            for kk in 0..k {
                let xv = xd[i * k + kk];
                if xv == 0.0 {
                    continue;
                }
                let wr = &wd[kk * m..(kk + 1) * m];
                for (oj, wj) in o.iter_mut().zip(wr) {
                    *oj += xv * wj;
                }
            }
        }
        let rg = self.rg(&[x, w, b]);
        self.push("affine", n, m, out, Op::Affine(x, w, b), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.dims(a);
        let (bk, m) = self.dims(b);
        if bk != k {
            return Err(Error::Shape {
                op: "matmul",
                expected: vec![k, m],
                got: vec![bk, m],
            });
        }
        let ad = self.node(a).value.data();
        let bd = self.node(b).value.data();
        let mut out = vec![0.0; n * m];
        for i in 0..n {
            for kk in 0..k {
                let av = ad[i * k + kk];
                let br = &bd[kk * m..(kk + 1) * m];
                for (oj, bj) in out[i * m..(i + 1) * m].iter_mut().zip(br) {
                    *oj += av * bj;
                }
            }
        }
        let rg = self.rg(&[a, b]);
        self.push("matmul", n, m, out, Op::MatMul(a, b), rg)
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        let (r, c) = bcast_dims(name, (ra, ca), (rb, cb))?;
        let ad = self.node(a).value.data();
        let bd = self.node(b).value.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for j in 0..c {
                out.push(f(ad[bidx(i, j, ra, ca)], bd[bidx(i, j, rb, cb)]));
            }
        }
        let rg = self.rg(&[a, b]);
        self.push(name, r, c, out, op, rg)
    }

    /// Elementwise sum with row/column broadcasting.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a, b), |x, y| x * y)
    }

    /// Elementwise minimum of two same-shape values.
    pub fn min(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.dims(a) != self.dims(b) {
            let (ra, ca) = self.dims(a);
            let (rb, cb) = self.dims(b);
            return Err(Error::Shape {
                op: "min",
                expected: vec![ra, ca],
                got: vec![rb, cb],
            });
        }
        self.binary("min", a, b, Op::Min(a, b), f64::min)
    }

    fn unary(&mut self, name: &'static str, a: Var, op: Op, f: impl Fn(f64) -> f64) -> Result<Var> {
        let (r, c) = self.dims(a);
        let out = self.node(a).value.data().iter().map(|&x| f(x)).collect();
        let rg = self.rg(&[a]);
        self.push(name, r, c, out, op, rg)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("scale", a, Op::Scale(a, s), |x| x * s)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        self.unary("add_scalar", a, Op::AddScalar(a), |x| x + s)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, Op::Tanh(a), f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary("relu", a, Op::Relu(a), |x| x.max(0.0))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Result<Var> {
        self.unary("leaky_relu", a, Op::LeakyRelu(a, slope), |x| if x > 0.0 { x } else { slope * x })
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, Op::Exp(a), f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary("log", a, Op::Log(a), f64::ln)
    }

    /// `ln(1 + e^x)`, evaluated stably.
    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, Op::Softplus(a), softplus)
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, Op::Abs(a), f64::abs)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.unary("square", a, Op::Square(a), |x| x * x)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi {
            return Err(Error::Precondition(format!("clamp bounds {lo} > {hi}")));
        }
        self.unary("clamp", a, Op::Clamp(a, lo, hi), |x| x.clamp(lo, hi))
    }

    /// Row-wise log-softmax.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        let ad = self.node(a).value.data();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            let row = &ad[i * c..(i + 1) * c];
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
            out.extend(row.iter().map(|x| x - lse));
        }
        let rg = self.rg(&[a]);
        self.push("log_softmax", r, c, out, Op::LogSoftmax(a), rg)
    }

    /// Column-wise concatenation of two matrices with equal row counts.
    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.dims(a);
        let (rb, cb) = self.dims(b);
        if ra != rb {
            return Err(Error::Shape {
                op: "concat",
                expected: vec![ra, cb],
                got: vec![rb, cb],
            });
        }
        let ad = self.node(a).value.data();
        let bd = self.node(b).value.data();
        let mut out = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            out.extend_from_slice(&ad[i * ca..(i + 1) * ca]);
            out.extend_from_slice(&bd[i * cb..(i + 1) * cb]);
        }
        let rg = self.rg(&[a, b]);
        self.push("concat", ra, ca + cb, out, Op::Concat(a, b), rg)
    }

    /// Picks `a[i, idx[i]]` for every row, giving an `n x 1` column.
    pub fn gather(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let (r, c) = self.dims(a);
        if idx.len() != r {
            return Err(Error::Shape {
                op: "gather",
                expected: vec![r],
                got: vec![idx.len()],
            });
        }
        if let Some(bad) = idx.iter().find(|&&j| j >= c) {
            return Err(Error::Precondition(format!("gather index {bad} out of range {c}")));
        }
        let ad = self.node(a).value.data();
        let out = idx.iter().enumerate().map(|(i, &j)| ad[i * c + j]).collect();
        let rg = self.rg(&[a]);
        self.push("gather", r, 1, out, Op::Gather(a, idx.to_vec()), rg)
    }

    /// Row sums, giving an `n x 1` column.
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.dims(a);
        let ad = self.node(a).value.data();
        let out = (0..r).map(|i| ad[i * c..(i + 1) * c].iter().sum()).collect();
        let rg = self.rg(&[a]);
        self.push("sum_cols", r, 1, out, Op::SumCols(a), rg)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.node(a).value.data().iter().sum();
        let rg = self.rg(&[a]);
        self.push("sum", 1, 1, vec![s], Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let d = self.node(a).value.data();
        let s = d.iter().sum::<f64>() / d.len() as f64;
        let rg = self.rg(&[a]);
        self.push("mean", 1, 1, vec![s], Op::Mean(a), rg)
    }

    /// Mean absolute value (L1 reduction normalized by element count).
    pub fn mean_abs(&mut self, a: Var) -> Result<Var> {
        let d = self.node(a).value.data();
        let s = d.iter().map(|x| x.abs()).sum::<f64>() / d.len() as f64;
        let rg = self.rg(&[a]);
        self.push("mean_abs", 1, 1, vec![s], Op::MeanAbs(a), rg)
    }

    /// Mean square (L2 reduction normalized by element count).
    pub fn mean_square(&mut self, a: Var) -> Result<Var> {
        let d = self.node(a).value.data();
        let s = d.iter().map(|x| x * x).sum::<f64>() / d.len() as f64;
        let rg = self.rg(&[a]);
        self.push("mean_square", 1, 1, vec![s], Op::MeanSquare(a), rg)
    }

    /// Back-propagates from a scalar output. A tape supports exactly one backward pass.
    pub fn backward(&mut self, out: Var) -> Result<Grads> {
        if self.consumed {
            return Err(Error::StaleTape);
        }
        let (r, c) = self.dims(out);
        if r * c != 1 {
            return Err(Error::NotScalar(vec![r, c]));
        }
        self.consumed = true;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out.0 + 1];
        grads[out.0] = Some(vec![1.0]);
        let mut result = Grads::default();

        for i in (0..=out.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let (rows, cols) = (node.rows, node.cols);
            let y = node.value.data();
            // Small helper to add into a parent's gradient slot.
            macro_rules! acc {
                ($v:expr, $delta:expr) => {{
                    let v: Var = $v;
                    if self.nodes[v.0].requires_grad {
                        let len = self.nodes[v.0].value.numel();
                        let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                        let d: Vec<f64> = $delta;
                        for (s, x) in slot.iter_mut().zip(d) {
                            *s += x;
                        }
                    }
                }};
            }
            match &node.op {
                Op::Leaf => {}
                Op::Param(name) => {
                    let e = result.by_name.entry(name.clone()).or_insert_with(|| vec![0.0; g.len()]);
                    for (s, x) in e.iter_mut().zip(&g) {
                        *s += x;
                    }
                }
                Op::Affine(x, w, b) => {
                    let (n, k) = self.dims(*x);
                    let m = cols;
                    let xd = self.nodes[x.0].value.data();
                    let wd = self.nodes[w.0].value.data();
                    if self.nodes[w.0].requires_grad {
                        let mut dw = vec![0.0; k * m];
                        for r in 0..n {
                            let gr = &g[r * m..(r + 1) * m];
                            for kk in 0..k {
                                let xv = xd[r * k + kk];
                                if xv == 0.0 {
                                    continue;
                                }
                                for (d, gv) in dw[kk * m..(kk + 1) * m].iter_mut().zip(gr) {
                                    *d += xv * gv;
                                }
                            }
                        }
                        acc!(*w, dw);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![0.0; m];
                        for r in 0..n {
                            for (d, gv) in db.iter_mut().zip(&g[r * m..(r + 1) * m]) {
                                *d += gv;
                            }
                        }
                        acc!(*b, db);
                    }
                    if self.nodes[x.0].requires_grad {
                        let mut dx = vec![0.0; n * k];
                        for r in 0..n {
                            let gr = &g[r * m..(r + 1) * m];
                            for kk in 0..k {
                                let wr = &wd[kk * m..(kk + 1) * m];
                                dx[r * k + kk] = gr.iter().zip(wr).map(|(a, b)| a * b).sum();
                            }
                        }
                        acc!(*x, dx);
                    }
                }
                Op::MatMul(a, b) => {
                    let (n, k) = self.dims(*a);
                    let m = cols;
                    let ad = self.nodes[a.0].value.data();
                    let bd = self.nodes[b.0].value.data();
                    if self.nodes[a.0].requires_grad {
                        let mut da = vec![0.0; n * k];
                        for r in 0..n {
                            for kk in 0..k {
                                da[r * k + kk] = (0..m).map(|j| g[r * m + j] * bd[kk * m + j]).sum();
                            }
                        }
                        acc!(*a, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![0.0; k * m];
                        for r in 0..n {
                            for kk in 0..k {
                                let av = ad[r * k + kk];
                                for j in 0..m {
                                    db[kk * m + j] += av * g[r * m + j];
                                }
                            }
                        }
                        acc!(*b, db);
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    let is_mul = matches!(node.op, Op::Mul(..));
                    let (ra, ca) = self.dims(*a);
                    let (rb, cb) = self.dims(*b);
                    let ad = self.nodes[a.0].value.data();
                    let bd = self.nodes[b.0].value.data();
                    if self.nodes[a.0].requires_grad {
                        let mut da = vec![0.0; ra * ca];
                        for r in 0..rows {
                            for c in 0..cols {
                                let gv = g[r * cols + c];
                                let f = if is_mul { bd[bidx(r, c, rb, cb)] } else { 1.0 };
                                da[bidx(r, c, ra, ca)] += gv * f;
                            }
                        }
                        acc!(*a, da);
                    }
                    if self.nodes[b.0].requires_grad {
                        let mut db = vec![0.0; rb * cb];
                        for r in 0..rows {
                            for c in 0..cols {
                                let gv = g[r * cols + c];
                                let f = if is_mul { ad[bidx(r, c, ra, ca)] } else { sign };
                                db[bidx(r, c, rb, cb)] += gv * f;
                            }
                        }
                        acc!(*b, db);
                    }
                }
                Op::Min(a, b) => {
                    let ad = self.nodes[a.0].value.data();
                    let bd = self.nodes[b.0].value.data();
                    let pick_a: Vec<bool> = ad.iter().zip(bd).map(|(x, y)| x <= y).collect();
                    acc!(*a, g.iter().zip(&pick_a).map(|(gv, &p)| if p { *gv } else { 0.0 }).collect());
                    acc!(*b, g.iter().zip(&pick_a).map(|(gv, &p)| if p { 0.0 } else { *gv }).collect());
                }
                Op::Scale(a, s) => acc!(*a, g.iter().map(|x| x * s).collect()),
                Op::AddScalar(a) => acc!(*a, g.clone()),
                Op::Tanh(a) => acc!(*a, g.iter().zip(y).map(|(gv, t)| gv * (1.0 - t * t)).collect()),
                Op::Relu(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 }).collect())
                }
                Op::LeakyRelu(a, slope) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| if *xv > 0.0 { *gv } else { gv * slope }).collect())
                }
                Op::Sigmoid(a) => acc!(*a, g.iter().zip(y).map(|(gv, s)| gv * s * (1.0 - s)).collect()),
                Op::Exp(a) => acc!(*a, g.iter().zip(y).map(|(gv, e)| gv * e).collect()),
                Op::Log(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| gv / xv).collect())
                }
                Op::Softplus(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| gv * sigmoid(*xv)).collect())
                }
                Op::Abs(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| gv * if *xv > 0.0 { 1.0 } else if *xv < 0.0 { -1.0 } else { 0.0 }).collect())
                }
                Op::Square(a) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| 2.0 * gv * xv).collect())
                }
                Op::Clamp(a, lo, hi) => {
                    let x = self.nodes[a.0].value.data();
                    acc!(*a, g.iter().zip(x).map(|(gv, xv)| if *xv >= *lo && *xv <= *hi { *gv } else { 0.0 }).collect())
                }
                Op::LogSoftmax(a) => {
                    let mut da = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let gr = &g[r * cols..(r + 1) * cols];
                        let gs: f64 = gr.iter().sum();
                        for c in 0..cols {
                            da[r * cols + c] = gr[c] - y[r * cols + c].exp() * gs;
                        }
                    }
                    acc!(*a, da)
                }
                Op::Concat(a, b) => {
                    let (_, ca) = self.dims(*a);
                    let cb = cols - ca;
                    let mut da = Vec::with_capacity(rows * ca);
                    let mut db = Vec::with_capacity(rows * cb);
                    for r in 0..rows {
                        da.extend_from_slice(&g[r * cols..r * cols + ca]);
                        db.extend_from_slice(&g[r * cols + ca..(r + 1) * cols]);
                    }
                    acc!(*a, da);
                    acc!(*b, db);
                }
                Op::Gather(a, idx) => {
                    let (ra, ca) = self.dims(*a);
                    let mut da = vec![0.0; ra * ca];
                    for (r, &j) in idx.iter().enumerate() {
                        da[r * ca + j] = g[r];
                    }
                    acc!(*a, da)
                }
                Op::SumCols(a) => {
                    let (ra, ca) = self.dims(*a);
                    let mut da = Vec::with_capacity(ra * ca);
                    for gv in g.iter().take(ra) {
                        da.extend(std::iter::repeat_n(*gv, ca));
                    }
                    acc!(*a, da)
                }
                Op::Sum(a) => {
                    let n = self.nodes[a.0].value.numel();
                    acc!(*a, vec![g[0]; n])
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.numel();
                    acc!(*a, vec![g[0] / n as f64; n])
                }
                Op::MeanAbs(a) => {
                    let x = self.nodes[a.0].value.data();
                    let n = x.len() as f64;
                    acc!(*a, x.iter().map(|xv| g[0] / n * if *xv > 0.0 { 1.0 } else if *xv < 0.0 { -1.0 } else { 0.0 }).collect())
                }
                Op::MeanSquare(a) => {
                    let x = self.nodes[a.0].value.data();
                    let n = x.len() as f64;
                    acc!(*a, x.iter().map(|xv| 2.0 * g[0] * xv / n).collect())
                }
            }
        }
        for g in result.by_name.values() {
            if g.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("backward".into()));
            }
        }
        Ok(result)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_param(v: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.insert("x", Tensor::scalar(v)).unwrap();
        p
    }

    #[test]
    fn square_value_and_grad() {
        let p = scalar_param(3.0);
        let mut t = Tape::new();
        let x = t.param(&p, "x").unwrap();
        let y = t.mul(x, x).unwrap();
        assert_eq!(t.scalar(y), 9.0);
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("x").unwrap(), &[6.0]);
    }

    #[test]
    fn constant_output_has_zero_grad() {
        let p = scalar_param(3.0);
        let mut t = Tape::new();
        let x = t.param(&p, "x").unwrap();
        let z = t.scale(x, 0.0).unwrap();
        let c = t.add_scalar(z, 5.0).unwrap();
        let g = t.backward(c).unwrap();
        assert_eq!(g.get("x").unwrap(), &[0.0]);
    }

    #[test]
    fn second_backward_is_stale() {
        let p = scalar_param(1.0);
        let mut t = Tape::new();
        let x = t.param(&p, "x").unwrap();
        let y = t.square(x).unwrap();
        t.backward(y).unwrap();
        assert!(matches!(t.backward(y), Err(Error::StaleTape)));
    }

    #[test]
    fn non_scalar_backward_rejected() {
        let mut p = ParamSet::new();
        p.insert("v", Tensor::row(&[1.0, 2.0])).unwrap();
        let mut t = Tape::new();
        let v = t.param(&p, "v").unwrap();
        assert!(matches!(t.backward(v), Err(Error::NotScalar(_))));
    }

    #[test]
    fn log_of_zero_is_non_finite() {
        let mut t = Tape::new();
        let z = t.constant(1, 1, vec![0.0]).unwrap();
        assert!(matches!(t.log(z), Err(Error::NonFinite(_))));
    }

    #[test]
    fn affine_identity() {
        let mut p = ParamSet::new();
        p.insert("w", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        p.insert("b", Tensor::row(&[0.0, 0.0])).unwrap();
        let mut t = Tape::new();
        let x = t.input(&Tensor::row(&[1.0, 2.0])).unwrap();
        let w = t.param(&p, "w").unwrap();
        let b = t.param(&p, "b").unwrap();
        let y = t.affine(x, w, b).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn broadcast_add_reduces_grad() {
        let mut p = ParamSet::new();
        p.insert("b", Tensor::row(&[0.5, -0.5])).unwrap();
        let mut t = Tape::new();
        let x = t.constant(3, 2, vec![1.0; 6]).unwrap();
        let b = t.param(&p, "b").unwrap();
        let y = t.add(x, b).unwrap();
        let s = t.sum(y).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get("b").unwrap(), &[3.0, 3.0]);
    }

    #[test]
    fn shared_param_grads_accumulate() {
        let p = scalar_param(2.0);
        let mut t = Tape::new();
        let a = t.param(&p, "x").unwrap();
        let b = t.param(&p, "x").unwrap();
        assert_eq!(a, b);
        let y = t.add(a, b).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get("x").unwrap(), &[2.0]);
    }

    #[test]
    fn min_routes_grad_to_smaller() {
        let mut p = ParamSet::new();
        p.insert("a", Tensor::row(&[1.0, 5.0])).unwrap();
        p.insert("b", Tensor::row(&[2.0, 3.0])).unwrap();
        let mut t = Tape::new();
        let a = t.param(&p, "a").unwrap();
        let b = t.param(&p, "b").unwrap();
        let m = t.min(a, b).unwrap();
        let s = t.sum(m).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get("a").unwrap(), &[1.0, 0.0]);
        assert_eq!(g.get("b").unwrap(), &[0.0, 1.0]);
    }
}
