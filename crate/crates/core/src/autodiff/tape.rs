//! Wengert tape for reverse-mode differentiation.
//!
//! Every forward primitive records a node holding its output value and the
//! indices of its inputs; `backward` replays the tape in exact reverse order
//! and accumulates vector-Jacobian products into per-node gradient buffers.
//! Shapes must match exactly — there is no implicit broadcasting — and every
//! output is checked for non-finite entries at creation time.

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Concat(Vec<Var>),
    HCat(Var, Var),
    StackRows(Vec<Var>),
    Slice(Var, usize, usize),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    /// Column-wise max over rows; saves the winning row per column.
    MaxPoolRows(Var, Vec<usize>),
    Maximum(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    Ln(Var),
    Cos(Var),
    Sin(Var),
    Softmax(Var),
    SoftmaxRows(Var),
    L2Norm(Var),
    Dot(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Neg(Var),
    SmoothL1(Var, Var),
    WrapAngle(Var),
    StopGrad,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// The recording tape. One tape per training step, confined to one thread.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
    touches: Vec<u32>,
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient buffer of a node; zeros until `backward` deposits into it.
    pub fn grad(&self, v: Var) -> &[f64] {
        &self.grads[v.0]
    }

    /// Number of times `backward` has deposited a gradient into this node.
    pub fn touch_count(&self, v: Var) -> u32 {
        self.touches[v.0]
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool, opname: &'static str) -> Result<Var> {
        if !value.data.iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite { op: opname });
        }
        let n = value.numel();
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(vec![0.0; n]);
        self.touches.push(0);
        Ok(Var(self.nodes.len() - 1))
    }

    fn req(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Leaf that participates in gradient computation.
    pub fn leaf(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, true, "leaf")
    }

    /// Leaf excluded from gradient computation.
    pub fn constant(&mut self, t: Tensor) -> Result<Var> {
        self.push(t, Op::Leaf, false, "constant")
    }

    pub fn scalar_const(&mut self, v: f64) -> Result<Var> {
        self.constant(Tensor::scalar(v))
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.nodes[a.0].value.shape != self.nodes[b.0].value.shape {
            return Err(Error::Shape {
                op,
                detail: format!(
                    "{:?} vs {:?}",
                    self.nodes[a.0].value.shape, self.nodes[b.0].value.shape
                ),
            });
        }
        Ok(())
    }

    fn zip_ew(&mut self, a: Var, b: Var, op: Op, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Var> {
        self.same_shape(a, b, name)?;
        let data: Vec<f64> = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| f(x, y))
            .collect();
        let t = Tensor { shape: self.nodes[a.0].value.shape.clone(), data };
        let rg = self.req(a) || self.req(b);
        self.push(t, op, rg, name)
    }

    fn map_ew(&mut self, a: Var, op: Op, name: &'static str, f: impl Fn(f64) -> f64) -> Result<Var> {
        let data: Vec<f64> = self.nodes[a.0].value.data.iter().map(|&x| f(x)).collect();
        let t = Tensor { shape: self.nodes[a.0].value.shape.clone(), data };
        let rg = self.req(a);
        self.push(t, op, rg, name)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_ew(a, b, Op::Add(a, b), "add", |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_ew(a, b, Op::Sub(a, b), "sub", |x, y| x - y)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_ew(a, b, Op::Mul(a, b), "mul", |x, y| x * y)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_ew(a, b, Op::Div(a, b), "div", |x, y| x / y)
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip_ew(a, b, Op::Maximum(a, b), "maximum", f64::max)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.nodes[a.0].value.dims2()?;
        let (k2, n) = self.nodes[b.0].value.dims2()?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                detail: format!("[{},{}] x [{},{}]", m, k, k2, n),
            });
        }
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let aip = av[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bv[p * n..(p + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += aip * brow[j];
                }
            }
        }
        let rg = self.req(a) || self.req(b);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::MatMul(a, b), rg, "matmul")
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.nodes[a.0].value.dims2()?;
        let av = &self.nodes[a.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = av[i * n + j];
            }
        }
        let rg = self.req(a);
        self.push(Tensor { shape: vec![n, m], data: out }, Op::Transpose(a), rg, "transpose")
    }

    /// Flat concatenation into a 1-D vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape { op: "concat", detail: "no inputs".into() });
        }
        let mut data = Vec::new();
        let mut rg = false;
        for &p in parts {
            data.extend_from_slice(&self.nodes[p.0].value.data);
            rg |= self.req(p);
        }
        self.push(Tensor::vector(data), Op::Concat(parts.to_vec()), rg, "concat")
    }

    /// Concatenate two 2-D tensors along columns: [n,p] + [n,q] -> [n,p+q].
    pub fn hcat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, p) = self.nodes[a.0].value.dims2()?;
        let (m2, q) = self.nodes[b.0].value.dims2()?;
        if m != m2 {
            return Err(Error::Shape { op: "hcat", detail: format!("{} vs {} rows", m, m2) });
        }
        let av = &self.nodes[a.0].value.data;
        let bv = &self.nodes[b.0].value.data;
        let mut data = Vec::with_capacity(m * (p + q));
        for r in 0..m {
            data.extend_from_slice(&av[r * p..(r + 1) * p]);
            data.extend_from_slice(&bv[r * q..(r + 1) * q]);
        }
        let rg = self.req(a) || self.req(b);
        self.push(Tensor { shape: vec![m, p + q], data }, Op::HCat(a, b), rg, "hcat")
    }

    /// Stack equally sized 1-D vectors as the rows of a matrix.
    pub fn stack_rows(&mut self, rows: &[Var]) -> Result<Var> {
        if rows.is_empty() {
            return Err(Error::Shape { op: "stack_rows", detail: "no inputs".into() });
        }
        let d = self.nodes[rows[0].0].value.numel();
        let mut data = Vec::with_capacity(rows.len() * d);
        let mut rg = false;
        for &r in rows {
            if self.nodes[r.0].value.numel() != d {
                return Err(Error::Shape {
                    op: "stack_rows",
                    detail: format!("row lengths {} vs {}", d, self.nodes[r.0].value.numel()),
                });
            }
            data.extend_from_slice(&self.nodes[r.0].value.data);
            rg |= self.req(r);
        }
        let t = Tensor { shape: vec![rows.len(), d], data };
        self.push(t, Op::StackRows(rows.to_vec()), rg, "stack_rows")
    }

    /// Contiguous slice of the flattened data, returned as a 1-D vector.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.nodes[a.0].value.numel();
        if start + len > n {
            return Err(Error::Shape {
                op: "slice",
                detail: format!("[{}, {}) out of {}", start, start + len, n),
            });
        }
        let data = self.nodes[a.0].value.data[start..start + len].to_vec();
        let rg = self.req(a);
        self.push(Tensor::vector(data), Op::Slice(a, start, len), rg, "slice")
    }

    /// Row `i` of a 2-D tensor as a 1-D vector.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (m, n) = self.nodes[a.0].value.dims2()?;
        if i >= m {
            return Err(Error::Shape { op: "row", detail: format!("row {} of {}", i, m) });
        }
        self.slice(a, i * n, n)
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[a.0].value.numel() {
            return Err(Error::Shape {
                op: "reshape",
                detail: format!("{:?} -> {:?}", self.nodes[a.0].value.shape, shape),
            });
        }
        let t = Tensor { shape, data: self.nodes[a.0].value.data.clone() };
        let rg = self.req(a);
        self.push(t, Op::Reshape(a), rg, "reshape")
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.data.iter().sum();
        let rg = self.req(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg, "sum")
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let n = self.nodes[a.0].value.numel();
        if n == 0 {
            return Err(Error::Shape { op: "mean", detail: "empty tensor".into() });
        }
        let s: f64 = self.nodes[a.0].value.data.iter().sum::<f64>() / n as f64;
        let rg = self.req(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg, "mean")
    }

    /// Column-wise max over the rows of a 2-D tensor.
    pub fn max_pool_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.nodes[a.0].value.dims2()?;
        if m == 0 {
            return Err(Error::Shape { op: "max_pool_rows", detail: "no rows".into() });
        }
        let av = &self.nodes[a.0].value.data;
        let mut out = vec![f64::NEG_INFINITY; n];
        let mut arg = vec![0usize; n];
        for i in 0..m {
            for j in 0..n {
                let v = av[i * n + j];
                if v > out[j] {
                    out[j] = v;
                    arg[j] = i;
                }
            }
        }
        let rg = self.req(a);
        self.push(Tensor::vector(out), Op::MaxPoolRows(a, arg), rg, "max_pool_rows")
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Relu(a), "relu", |x| x.max(0.0))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Tanh(a), "tanh", f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Sigmoid(a), "sigmoid", |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Ln(a), "ln", f64::ln)
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Cos(a), "cos", f64::cos)
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Sin(a), "sin", f64::sin)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map_ew(a, Op::Scale(a, c), "scale", |x| c * x)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        self.map_ew(a, Op::AddScalar(a), "add_scalar", |x| x + c)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::Neg(a), "neg", |x| -x)
    }

    /// Wrap angles into (-pi, pi]. Gradient passes through unchanged.
    pub fn wrap_angle(&mut self, a: Var) -> Result<Var> {
        self.map_ew(a, Op::WrapAngle(a), "wrap_angle", wrap_angle)
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = &self.nodes[a.0].value.data;
        if v.is_empty() {
            return Err(Error::Shape { op: "softmax", detail: "empty input".into() });
        }
        let out = softmax_slice(v);
        let rg = self.req(a);
        self.push(Tensor { shape: self.nodes[a.0].value.shape.clone(), data: out }, Op::Softmax(a), rg, "softmax")
    }

    /// Row-wise softmax of a 2-D tensor.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.nodes[a.0].value.dims2()?;
        let av = &self.nodes[a.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            out[i * n..(i + 1) * n].copy_from_slice(&softmax_slice(&av[i * n..(i + 1) * n]));
        }
        let rg = self.req(a);
        self.push(Tensor { shape: vec![m, n], data: out }, Op::SoftmaxRows(a), rg, "softmax_rows")
    }

    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let s: f64 = self.nodes[a.0].value.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rg = self.req(a);
        self.push(Tensor::scalar(s), Op::L2Norm(a), rg, "l2_norm")
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "dot")?;
        let s: f64 = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| x * y)
            .sum();
        let rg = self.req(a) || self.req(b);
        self.push(Tensor::scalar(s), Op::Dot(a, b), rg, "dot")
    }

    /// Elementwise smooth-L1 between `a` and `b`, summed to a scalar.
    /// Quadratic inside unit error, linear outside.
    pub fn smooth_l1_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b, "smooth_l1")?;
        let s: f64 = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(&x, &y)| {
                let d = (x - y).abs();
                if d < 1.0 {
                    0.5 * d * d
                } else {
                    d - 0.5
                }
            })
            .sum();
        let rg = self.req(a) || self.req(b);
        self.push(Tensor::scalar(s), Op::SmoothL1(a, b), rg, "smooth_l1")
    }

    /// Copy of `a`'s value with the gradient path severed.
    pub fn stop_grad(&mut self, a: Var) -> Result<Var> {
        let t = self.nodes[a.0].value.clone();
        self.push(t, Op::StopGrad, false, "stop_grad")
    }

    fn deposit(&mut self, target: Var, contrib: &[f64]) {
        if !self.nodes[target.0].requires_grad {
            return;
        }
        let g = &mut self.grads[target.0];
        debug_assert_eq!(g.len(), contrib.len());
        for (gi, &c) in g.iter_mut().zip(contrib) {
            *gi += c;
        }
        self.touches[target.0] += 1;
    }

    /// Reverse sweep from a scalar loss. Gradients accumulate across calls;
    /// the caller zeroes parameter gradients between optimizer steps.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::EmptyTape);
        }
        let lt = &self.nodes[loss.0].value;
        if !lt.is_scalar() {
            return Err(Error::NonScalarLoss(lt.shape.clone()));
        }
        self.grads[loss.0][0] += 1.0;
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let g = self.grads[i].clone();
            if g.iter().all(|&x| x == 0.0) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf | Op::StopGrad => {}
                Op::Add(a, b) => {
                    self.deposit(a, &g);
                    self.deposit(b, &g);
                }
                Op::Sub(a, b) => {
                    self.deposit(a, &g);
                    let neg: Vec<f64> = g.iter().map(|x| -x).collect();
                    self.deposit(b, &neg);
                }
                Op::Mul(a, b) => {
                    let da: Vec<f64> =
                        g.iter().zip(&self.nodes[b.0].value.data).map(|(&gi, &bv)| gi * bv).collect();
                    let db: Vec<f64> =
                        g.iter().zip(&self.nodes[a.0].value.data).map(|(&gi, &av)| gi * av).collect();
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
                Op::Div(a, b) => {
                    let bv = &self.nodes[b.0].value.data;
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = g.iter().zip(bv).map(|(&gi, &y)| gi / y).collect();
                    let db: Vec<f64> = g
                        .iter()
                        .zip(av.iter().zip(bv))
                        .map(|(&gi, (&x, &y))| -gi * x / (y * y))
                        .collect();
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
                Op::MatMul(a, b) => {
                    let (m, k) = self.nodes[a.0].value.dims2().unwrap();
                    let n = self.nodes[b.0].value.shape[1];
                    if self.nodes[a.0].requires_grad {
                        // dA = G B^T
                        let bv = &self.nodes[b.0].value.data;
                        let mut da = vec![0.0; m * k];
                        for r in 0..m {
                            for p in 0..k {
                                let mut acc = 0.0;
                                for j in 0..n {
                                    acc += g[r * n + j] * bv[p * n + j];
                                }
                                da[r * k + p] = acc;
                            }
                        }
                        self.deposit(a, &da);
                    }
                    if self.nodes[b.0].requires_grad {
                        // dB = A^T G
                        let av = &self.nodes[a.0].value.data;
                        let mut db = vec![0.0; k * n];
                        for r in 0..m {
                            for p in 0..k {
                                let arp = av[r * k + p];
                                if arp == 0.0 {
                                    continue;
                                }
                                let grow = &g[r * n..(r + 1) * n];
                                let drow = &mut db[p * n..(p + 1) * n];
                                for j in 0..n {
                                    drow[j] += arp * grow[j];
                                }
                            }
                        }
                        self.deposit(b, &db);
                    }
                }
                Op::Transpose(a) => {
                    let (n, m) = self.nodes[i].value.dims2().unwrap();
                    let mut da = vec![0.0; m * n];
                    for r in 0..n {
                        for c in 0..m {
                            da[c * n + r] = g[r * m + c];
                        }
                    }
                    self.deposit(a, &da);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.numel();
                        let chunk = g[off..off + len].to_vec();
                        self.deposit(p, &chunk);
                        off += len;
                    }
                }
                Op::HCat(a, b) => {
                    let p = self.nodes[a.0].value.shape[1];
                    let q = self.nodes[b.0].value.shape[1];
                    let m = self.nodes[a.0].value.shape[0];
                    let mut da = vec![0.0; m * p];
                    let mut db = vec![0.0; m * q];
                    for r in 0..m {
                        da[r * p..(r + 1) * p].copy_from_slice(&g[r * (p + q)..r * (p + q) + p]);
                        db[r * q..(r + 1) * q].copy_from_slice(&g[r * (p + q) + p..(r + 1) * (p + q)]);
                    }
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
                Op::StackRows(rows) => {
                    let d = self.nodes[rows[0].0].value.numel();
                    for (r, part) in rows.into_iter().enumerate() {
                        let chunk = g[r * d..(r + 1) * d].to_vec();
                        self.deposit(part, &chunk);
                    }
                }
                Op::Slice(a, start, len) => {
                    let mut da = vec![0.0; self.nodes[a.0].value.numel()];
                    da[start..start + len].copy_from_slice(&g);
                    self.deposit(a, &da);
                }
                Op::Reshape(a) => {
                    self.deposit(a, &g);
                }
                Op::Sum(a) => {
                    let da = vec![g[0]; self.nodes[a.0].value.numel()];
                    self.deposit(a, &da);
                }
                Op::Mean(a) => {
                    let n = self.nodes[a.0].value.numel();
                    let da = vec![g[0] / n as f64; n];
                    self.deposit(a, &da);
                }
                Op::MaxPoolRows(a, arg) => {
                    let n = arg.len();
                    let mut da = vec![0.0; self.nodes[a.0].value.numel()];
                    for j in 0..n {
                        da[arg[j] * n + j] += g[j];
                    }
                    self.deposit(a, &da);
                }
                Op::Maximum(a, b) => {
                    let av = &self.nodes[a.0].value.data;
                    let bv = &self.nodes[b.0].value.data;
                    let mut da = vec![0.0; av.len()];
                    let mut db = vec![0.0; bv.len()];
                    for j in 0..av.len() {
                        // ties go to the first argument
                        if av[j] >= bv[j] {
                            da[j] = g[j];
                        } else {
                            db[j] = g[j];
                        }
                    }
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
                Op::Relu(a) => {
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = g
                        .iter()
                        .zip(av)
                        .map(|(&gi, &x)| if x > 0.0 { gi } else { 0.0 })
                        .collect();
                    self.deposit(a, &da);
                }
                Op::Tanh(a) => {
                    let yv = &self.nodes[i].value.data;
                    let da: Vec<f64> = g.iter().zip(yv).map(|(&gi, &y)| gi * (1.0 - y * y)).collect();
                    self.deposit(a, &da);
                }
                Op::Sigmoid(a) => {
                    let yv = &self.nodes[i].value.data;
                    let da: Vec<f64> = g.iter().zip(yv).map(|(&gi, &y)| gi * y * (1.0 - y)).collect();
                    self.deposit(a, &da);
                }
                Op::Ln(a) => {
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = g.iter().zip(av).map(|(&gi, &x)| gi / x).collect();
                    self.deposit(a, &da);
                }
                Op::Cos(a) => {
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = g.iter().zip(av).map(|(&gi, &x)| -gi * x.sin()).collect();
                    self.deposit(a, &da);
                }
                Op::Sin(a) => {
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = g.iter().zip(av).map(|(&gi, &x)| gi * x.cos()).collect();
                    self.deposit(a, &da);
                }
                Op::Softmax(a) => {
                    let yv = &self.nodes[i].value.data;
                    let inner: f64 = g.iter().zip(yv).map(|(&gi, &y)| gi * y).sum();
                    let da: Vec<f64> = g.iter().zip(yv).map(|(&gi, &y)| y * (gi - inner)).collect();
                    self.deposit(a, &da);
                }
                Op::SoftmaxRows(a) => {
                    let (m, n) = self.nodes[i].value.dims2().unwrap();
                    let yv = &self.nodes[i].value.data;
                    let mut da = vec![0.0; m * n];
                    for r in 0..m {
                        let yr = &yv[r * n..(r + 1) * n];
                        let gr = &g[r * n..(r + 1) * n];
                        let inner: f64 = gr.iter().zip(yr).map(|(&gi, &y)| gi * y).sum();
                        for j in 0..n {
                            da[r * n + j] = yr[j] * (gr[j] - inner);
                        }
                    }
                    self.deposit(a, &da);
                }
                Op::L2Norm(a) => {
                    let norm = self.nodes[i].value.item();
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = if norm > 0.0 {
                        av.iter().map(|&x| g[0] * x / norm).collect()
                    } else {
                        vec![0.0; av.len()]
                    };
                    self.deposit(a, &da);
                }
                Op::Dot(a, b) => {
                    let bv = &self.nodes[b.0].value.data;
                    let av = &self.nodes[a.0].value.data;
                    let da: Vec<f64> = bv.iter().map(|&y| g[0] * y).collect();
                    let db: Vec<f64> = av.iter().map(|&x| g[0] * x).collect();
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
                Op::Scale(a, c) => {
                    let da: Vec<f64> = g.iter().map(|&gi| gi * c).collect();
                    self.deposit(a, &da);
                }
                Op::AddScalar(a) | Op::WrapAngle(a) => {
                    self.deposit(a, &g);
                }
                Op::Neg(a) => {
                    let da: Vec<f64> = g.iter().map(|&gi| -gi).collect();
                    self.deposit(a, &da);
                }
                Op::SmoothL1(a, b) => {
                    let av = &self.nodes[a.0].value.data;
                    let bv = &self.nodes[b.0].value.data;
                    let da: Vec<f64> = av
                        .iter()
                        .zip(bv)
                        .map(|(&x, &y)| g[0] * (x - y).clamp(-1.0, 1.0))
                        .collect();
                    let db: Vec<f64> = da.iter().map(|&x| -x).collect();
                    self.deposit(a, &da);
                    self.deposit(b, &db);
                }
            }
        }
        Ok(())
    }
}

/// Numerically stable softmax of a slice.
pub fn softmax_slice(v: &[f64]) -> Vec<f64> {
    let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = v.iter().map(|&x| (x - mx).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    if a > -PI && a <= PI {
        return a;
    }
    let mut x = (a + PI).rem_euclid(2.0 * PI);
    if x == 0.0 {
        x = 2.0 * PI;
    }
    x - PI
}
