//! Reverse-mode differentiation over dense `f64` matrices.
//!
//! Ops evaluate eagerly as they are recorded; [`Tape::backward`] walks the
//! record in reverse and accumulates adjoints. The op set is exactly what
//! MLP encoders/decoders and the training losses need - nothing more.

use std::sync::Arc;

use crate::cramer_wold::PhiKernel;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::params::ParamStore;

/// Numeric guards: `ln` arguments are floored and `exp` inputs capped so the
/// losses stay finite under extreme intermediate values.
pub const LN_FLOOR: f64 = 1e-12;
pub const EXP_CAP: f64 = 30.0;

/// Handle to a recorded value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    MulElem(Var, Var),
    Affine(Var, f64, f64),
    Relu(Var),
    Tanh(Var),
    Softplus(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    BlockLogSoftmax(Var, Arc<Vec<(usize, usize)>>),
    ColsExcept(Var, usize, usize),
    ColsRange(Var, usize, usize),
    SumAll(Var),
    DiagSum(Var),
    DotConst(Var, Arc<Matrix>),
    /// `out[i][j] = log N(z_j | mu_i, diag(var_i))`, all inputs n x d.
    PairGaussLogPdf {
        mu: Var,
        var: Var,
        z: Var,
    },
    /// Closed-form Cramer-Wold distance between two point sets.
    CwDist {
        x: Var,
        y: Var,
        kappa: f64,
        kernel: PhiKernel,
    },
}

struct Node {
    op: Op,
    value: Matrix,
    requires_grad: bool,
    /// Offset into the parameter store for bound leaves.
    binding: Option<(usize, usize)>,
}

/// Gradients from one backward pass.
pub struct Gradients {
    store_grad: Vec<f64>,
    by_var: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient aligned with the [`ParamStore`] layout.
    pub fn store_grad(&self) -> &[f64] {
        &self.store_grad
    }

    pub fn into_store_grad(self) -> Vec<f64> {
        self.store_grad
    }

    /// Adjoint of an individual var (input leaves included), if it
    /// participated in the graph.
    pub fn wrt(&self, v: Var) -> Option<&Matrix> {
        self.by_var[v.0].as_ref()
    }
}

/// Recorded operation list with eagerly evaluated value buffers.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, op: Op, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
            binding: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Non-differentiable leaf (data, targets, noise draws).
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    /// Differentiable leaf not bound to a parameter store.
    pub fn input(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Differentiable leaf bound to a named store slice; its adjoint lands
    /// in the flat store gradient.
    pub fn param(&mut self, store: &ParamStore, name: &str) -> Result<Var> {
        let info = store.info(name)?;
        let value = store.matrix(name)?;
        let v = self.push(Op::Leaf, value, true);
        self.nodes[v.0].binding = Some((info.offset, info.len()));
        Ok(v)
    }

    /// Affine map `x * w + b` with `b` broadcast across rows.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xr, xc) = self.value(x).dim();
        let (wr, wc) = self.value(w).dim();
        let (br, bc) = self.value(b).dim();
        if xc != wr || br != 1 || bc != wc {
            return Err(Error::ShapeMismatch(format!(
                "dense: x {xr}x{xc}, w {wr}x{wc}, b {br}x{bc}"
            )));
        }
        let prod = self.matmul(x, w);
        Ok(self.add_row(prod, b))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::MatMul(a, b), value, rg)
    }

    /// `a + row`, row broadcast over all rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (n, m) = self.value(a).dim();
        assert_eq!(self.value(row).dim(), (1, m), "add_row shape");
        let mut value = self.value(a).clone();
        for i in 0..n {
            let r = self.value(row).row(0).to_vec();
            for (o, b) in value.row_mut(i).iter_mut().zip(&r) {
                *o += b;
            }
        }
        let rg = self.needs(a) || self.needs(row);
        self.push(Op::AddRow(a, row), value, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).add(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Add(a, b), value, rg)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).sub(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::Sub(a, b), value, rg)
    }

    pub fn mul_elem(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).mul_elem(self.value(b));
        let rg = self.needs(a) || self.needs(b);
        self.push(Op::MulElem(a, b), value, rg)
    }

    /// Elementwise `x * scale + shift`.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(a).map(|x| x * scale + shift);
        let rg = self.needs(a);
        self.push(Op::Affine(a, scale, shift), value, rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(relu_scalar);
        let rg = self.needs(a);
        self.push(Op::Relu(a), value, rg)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        let rg = self.needs(a);
        self.push(Op::Tanh(a), value, rg)
    }

    /// `ln(1 + e^x)`, numerically stable; strictly positive.
    pub fn softplus(&mut self, a: Var) -> Var {
        let value = self.value(a).map(softplus);
        let rg = self.needs(a);
        self.push(Op::Softplus(a), value, rg)
    }

    /// `exp(min(x, EXP_CAP))`.
    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(exp_capped);
        let rg = self.needs(a);
        self.push(Op::Exp(a), value, rg)
    }

    /// `ln(max(x, LN_FLOOR))`.
    pub fn ln(&mut self, a: Var) -> Var {
        let value = self.value(a).map(ln_floored);
        let rg = self.needs(a);
        self.push(Op::Ln(a), value, rg)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::sqrt);
        let rg = self.needs(a);
        self.push(Op::Sqrt(a), value, rg)
    }

    /// Log-softmax applied independently to each `[start, end)` block of
    /// every row. Blocks must exactly cover the width.
    pub fn block_log_softmax(&mut self, a: Var, blocks: &Arc<Vec<(usize, usize)>>) -> Result<Var> {
        let (_, m) = self.value(a).dim();
        let covered: usize = blocks.iter().map(|&(s, e)| e - s).sum();
        let contiguous =
            blocks.windows(2).all(|w| w[0].1 == w[1].0) && blocks.first().map(|b| b.0) == Some(0);
        if covered != m || !contiguous {
            return Err(Error::ShapeMismatch(format!(
                "block boundaries cover {covered} of width {m}"
            )));
        }
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            for &(s, e) in blocks.iter() {
                log_softmax_in_place(&mut row[s..e]);
            }
        }
        let rg = self.needs(a);
        Ok(self.push(Op::BlockLogSoftmax(a, Arc::clone(blocks)), value, rg))
    }

    /// The contiguous column range `[start, end)` of `a`.
    pub fn cols_range(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (n, m) = self.value(a).dim();
        assert!(start < end && end <= m, "cols_range bounds");
        let mut value = Matrix::zeros(n, end - start);
        for i in 0..n {
            value
                .row_mut(i)
                .copy_from_slice(&self.value(a).row(i)[start..end]);
        }
        let rg = self.needs(a);
        self.push(Op::ColsRange(a, start, end), value, rg)
    }

    /// All columns of `a` except `[start, end)`.
    pub fn cols_except(&mut self, a: Var, start: usize, end: usize) -> Var {
        let (n, m) = self.value(a).dim();
        assert!(start <= end && end <= m, "cols_except range");
        let mut value = Matrix::zeros(n, m - (end - start));
        for i in 0..n {
            let src = self.value(a).row(i);
            let dst = value.row_mut(i);
            dst[..start].copy_from_slice(&src[..start]);
            dst[start..].copy_from_slice(&src[end..]);
        }
        let rg = self.needs(a);
        self.push(Op::ColsExcept(a, start, end), value, rg)
    }

    /// Sum of all entries, as a 1x1 matrix.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        let rg = self.needs(a);
        self.push(Op::SumAll(a), value, rg)
    }

    /// Trace of a square matrix, as a 1x1 matrix.
    pub fn diag_sum(&mut self, a: Var) -> Var {
        let (n, m) = self.value(a).dim();
        assert_eq!(n, m, "diag_sum needs a square matrix");
        let mut s = 0.0;
        for i in 0..n {
            s += self.value(a)[(i, i)];
        }
        let rg = self.needs(a);
        self.push(Op::DiagSum(a), Matrix::scalar(s), rg)
    }

    /// `sum(a .* w)` with constant weights, as a 1x1 matrix.
    pub fn dot_const(&mut self, a: Var, w: Matrix) -> Var {
        assert_eq!(self.value(a).dim(), w.dim(), "dot_const shape");
        let s = self
            .value(a)
            .data()
            .iter()
            .zip(w.data())
            .map(|(x, y)| x * y)
            .sum();
        let rg = self.needs(a);
        self.push(Op::DotConst(a, Arc::new(w)), Matrix::scalar(s), rg)
    }

    /// Pairwise diagonal-Gaussian log-densities: `out[i][j] = log N(z_j |
    /// mu_i, diag(var_i))`. All inputs are n x d; output is n x n.
    pub fn pair_gauss_logpdf(&mut self, mu: Var, var: Var, z: Var) -> Var {
        let (n, d) = self.value(mu).dim();
        assert_eq!(self.value(var).dim(), (n, d), "pair_gauss var shape");
        assert_eq!(self.value(z).dim(), (n, d), "pair_gauss z shape");
        let value = pair_gauss_forward(self.value(mu), self.value(var), self.value(z));
        let rg = self.needs(mu) || self.needs(var) || self.needs(z);
        self.push(Op::PairGaussLogPdf { mu, var, z }, value, rg)
    }

    /// Closed-form Cramer-Wold distance between row sets `x` and `y`
    /// (shared width), as a 1x1 matrix. Differentiable in both inputs.
    pub fn cw_distance(&mut self, x: Var, y: Var, kappa: f64, kernel: PhiKernel) -> Result<Var> {
        let (_, xc) = self.value(x).dim();
        let (_, yc) = self.value(y).dim();
        if xc != yc {
            return Err(Error::ShapeMismatch(format!(
                "cw_distance widths {xc} vs {yc}"
            )));
        }
        if kappa <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "kappa must be > 0, got {kappa}"
            )));
        }
        let value = crate::cramer_wold::cw_value_plain(self.value(x), self.value(y), kappa, kernel);
        let rg = self.needs(x) || self.needs(y);
        Ok(self.push(
            Op::CwDist {
                x,
                y,
                kappa,
                kernel,
            },
            Matrix::scalar(value),
            rg,
        ))
    }

    /// Gradient of a recorded 1x1 scalar with respect to every leaf.
    ///
    /// `store_len` sizes the flat gradient for store-bound leaves.
    pub fn backward(&self, output: Var, store_len: usize) -> Result<Gradients> {
        if self.value(output).dim() != (1, 1) {
            return Err(Error::ShapeMismatch(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).dim()
            )));
        }
        let mut adj: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=output.0).rev() {
            if !self.nodes[idx].requires_grad {
                continue;
            }
            let g = match adj[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.accumulate(idx, &g, &mut adj);
            adj[idx] = Some(g);
        }

        let mut store_grad = vec![0.0; store_len];
        for (idx, node) in self.nodes.iter().enumerate() {
            if let Some((offset, len)) = node.binding {
                if let Some(g) = &adj[idx] {
                    assert!(offset + len <= store_len, "binding outside store");
                    for (dst, src) in store_grad[offset..offset + len].iter_mut().zip(g.data()) {
                        *dst += src;
                    }
                }
            }
        }
        Ok(Gradients {
            store_grad,
            by_var: adj,
        })
    }

    fn accumulate(&self, idx: usize, g: &Matrix, adj: &mut [Option<Matrix>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.matmul_nt(self.value(*b)), self.value(*a).dim());
                }
                if self.needs(*b) {
                    add_into(adj, b.0, self.value(*a).matmul_tn(g), self.value(*b).dim());
                }
            }
            Op::AddRow(a, row) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.clone(), self.value(*a).dim());
                }
                if self.needs(*row) {
                    let mut sums = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (s, v) in sums.row_mut(0).iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    add_into(adj, row.0, sums, self.value(*row).dim());
                }
            }
            Op::Add(a, b) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.clone(), self.value(*a).dim());
                }
                if self.needs(*b) {
                    add_into(adj, b.0, g.clone(), self.value(*b).dim());
                }
            }
            Op::Sub(a, b) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.clone(), self.value(*a).dim());
                }
                if self.needs(*b) {
                    add_into(adj, b.0, g.scale(-1.0), self.value(*b).dim());
                }
            }
            Op::MulElem(a, b) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.mul_elem(self.value(*b)), self.value(*a).dim());
                }
                if self.needs(*b) {
                    add_into(adj, b.0, g.mul_elem(self.value(*a)), self.value(*b).dim());
                }
            }
            Op::Affine(a, scale, _) => {
                if self.needs(*a) {
                    add_into(adj, a.0, g.scale(*scale), self.value(*a).dim());
                }
            }
            Op::Relu(a) => {
                if self.needs(*a) {
                    let da = zip_map(g, self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::Tanh(a) => {
                if self.needs(*a) {
                    let da = zip_map(g, &node.value, |g, t| g * (1.0 - t * t));
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::Softplus(a) => {
                if self.needs(*a) {
                    let da = zip_map(g, self.value(*a), |g, x| g * sigmoid(x));
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::Exp(a) => {
                if self.needs(*a) {
                    let da = zip_map2(g, self.value(*a), &node.value, |g, x, e| {
                        if x < EXP_CAP {
                            g * e
                        } else {
                            0.0
                        }
                    });
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::Ln(a) => {
                if self.needs(*a) {
                    let da = zip_map(
                        g,
                        self.value(*a),
                        |g, x| {
                            if x > LN_FLOOR {
                                g / x
                            } else {
                                0.0
                            }
                        },
                    );
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::Sqrt(a) => {
                if self.needs(*a) {
                    let da = zip_map(
                        g,
                        &node.value,
                        |g, s| if s > 0.0 { g / (2.0 * s) } else { 0.0 },
                    );
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::BlockLogSoftmax(a, blocks) => {
                if self.needs(*a) {
                    let mut da = Matrix::zeros(g.rows(), g.cols());
                    for i in 0..g.rows() {
                        let grow = g.row(i);
                        let orow = node.value.row(i);
                        let drow = da.row_mut(i);
                        for &(s, e) in blocks.iter() {
                            let gsum: f64 = grow[s..e].iter().sum();
                            for k in s..e {
                                drow[k] = grow[k] - orow[k].exp() * gsum;
                            }
                        }
                    }
                    add_into(adj, a.0, da, self.value(*a).dim());
                }
            }
            Op::ColsExcept(a, start, end) => {
                if self.needs(*a) {
                    let (n, m) = self.value(*a).dim();
                    let mut da = Matrix::zeros(n, m);
                    for i in 0..n {
                        let grow = g.row(i);
                        let drow = da.row_mut(i);
                        drow[..*start].copy_from_slice(&grow[..*start]);
                        drow[*end..].copy_from_slice(&grow[*start..]);
                    }
                    add_into(adj, a.0, da, (n, m));
                }
            }
            Op::ColsRange(a, start, end) => {
                if self.needs(*a) {
                    let (n, m) = self.value(*a).dim();
                    let mut da = Matrix::zeros(n, m);
                    for i in 0..n {
                        da.row_mut(i)[*start..*end].copy_from_slice(g.row(i));
                    }
                    add_into(adj, a.0, da, (n, m));
                }
            }
            Op::SumAll(a) => {
                if self.needs(*a) {
                    let (n, m) = self.value(*a).dim();
                    let s = g.item();
                    add_into(adj, a.0, Matrix::from_vec(n, m, vec![s; n * m]), (n, m));
                }
            }
            Op::DiagSum(a) => {
                if self.needs(*a) {
                    let (n, m) = self.value(*a).dim();
                    let mut da = Matrix::zeros(n, m);
                    let s = g.item();
                    for i in 0..n {
                        da[(i, i)] = s;
                    }
                    add_into(adj, a.0, da, (n, m));
                }
            }
            Op::DotConst(a, w) => {
                if self.needs(*a) {
                    add_into(adj, a.0, w.scale(g.item()), self.value(*a).dim());
                }
            }
            Op::PairGaussLogPdf { mu, var, z } => {
                let (dmu, dvar, dz) = pair_gauss_backward(
                    g,
                    self.value(*mu),
                    self.value(*var),
                    self.value(*z),
                    self.needs(*mu),
                    self.needs(*var),
                    self.needs(*z),
                );
                if let Some(dmu) = dmu {
                    add_into(adj, mu.0, dmu, self.value(*mu).dim());
                }
                if let Some(dvar) = dvar {
                    add_into(adj, var.0, dvar, self.value(*var).dim());
                }
                if let Some(dz) = dz {
                    add_into(adj, z.0, dz, self.value(*z).dim());
                }
            }
            Op::CwDist {
                x,
                y,
                kappa,
                kernel,
            } => {
                let (dx, dy) = crate::cramer_wold::cw_grad_plain(
                    self.value(*x),
                    self.value(*y),
                    *kappa,
                    *kernel,
                    self.needs(*x),
                    self.needs(*y),
                );
                let s = g.item();
                if let Some(dx) = dx {
                    add_into(adj, x.0, dx.scale(s), self.value(*x).dim());
                }
                if let Some(dy) = dy {
                    add_into(adj, y.0, dy.scale(s), self.value(*y).dim());
                }
            }
        }
    }

    /// Recompute every non-leaf value from the recorded leaves.
    ///
    /// Used to assert that replaying the forward pass reproduces recorded
    /// values bit-identically.
    pub fn replay_forward(&self) -> Vec<Matrix> {
        let mut vals: Vec<Matrix> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match &node.op {
                Op::Leaf => node.value.clone(),
                Op::MatMul(a, b) => vals[a.0].matmul(&vals[b.0]),
                Op::AddRow(a, row) => {
                    let mut m = vals[a.0].clone();
                    for i in 0..m.rows() {
                        let r = vals[row.0].row(0).to_vec();
                        for (o, b) in m.row_mut(i).iter_mut().zip(&r) {
                            *o += b;
                        }
                    }
                    m
                }
                Op::Add(a, b) => vals[a.0].add(&vals[b.0]),
                Op::Sub(a, b) => vals[a.0].sub(&vals[b.0]),
                Op::MulElem(a, b) => vals[a.0].mul_elem(&vals[b.0]),
                Op::Affine(a, s, c) => vals[a.0].map(|x| x * s + c),
                Op::Relu(a) => vals[a.0].map(relu_scalar),
                Op::Tanh(a) => vals[a.0].map(f64::tanh),
                Op::Softplus(a) => vals[a.0].map(softplus),
                Op::Exp(a) => vals[a.0].map(exp_capped),
                Op::Ln(a) => vals[a.0].map(ln_floored),
                Op::Sqrt(a) => vals[a.0].map(f64::sqrt),
                Op::BlockLogSoftmax(a, blocks) => {
                    let mut m = vals[a.0].clone();
                    for i in 0..m.rows() {
                        let row = m.row_mut(i);
                        for &(s, e) in blocks.iter() {
                            log_softmax_in_place(&mut row[s..e]);
                        }
                    }
                    m
                }
                Op::ColsExcept(a, start, end) => {
                    let src = &vals[a.0];
                    let (n, m) = src.dim();
                    let mut out = Matrix::zeros(n, m - (end - start));
                    for i in 0..n {
                        let s = src.row(i);
                        let d = out.row_mut(i);
                        d[..*start].copy_from_slice(&s[..*start]);
                        d[*start..].copy_from_slice(&s[*end..]);
                    }
                    out
                }
                Op::ColsRange(a, start, end) => {
                    let src = &vals[a.0];
                    let n = src.rows();
                    let mut out = Matrix::zeros(n, end - start);
                    for i in 0..n {
                        out.row_mut(i).copy_from_slice(&src.row(i)[*start..*end]);
                    }
                    out
                }
                Op::SumAll(a) => Matrix::scalar(vals[a.0].sum()),
                Op::DiagSum(a) => {
                    let mut s = 0.0;
                    for i in 0..vals[a.0].rows() {
                        s += vals[a.0][(i, i)];
                    }
                    Matrix::scalar(s)
                }
                Op::DotConst(a, w) => Matrix::scalar(
                    vals[a.0]
                        .data()
                        .iter()
                        .zip(w.data())
                        .map(|(x, y)| x * y)
                        .sum(),
                ),
                Op::PairGaussLogPdf { mu, var, z } => {
                    pair_gauss_forward(&vals[mu.0], &vals[var.0], &vals[z.0])
                }
                Op::CwDist {
                    x,
                    y,
                    kappa,
                    kernel,
                } => Matrix::scalar(crate::cramer_wold::cw_value_plain(
                    &vals[x.0], &vals[y.0], *kappa, *kernel,
                )),
            };
            vals.push(v);
        }
        vals
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn add_into(adj: &mut [Option<Matrix>], idx: usize, delta: Matrix, dim: (usize, usize)) {
    debug_assert_eq!(delta.dim(), dim);
    match &mut adj[idx] {
        Some(existing) => {
            for (o, d) in existing.data_mut().iter_mut().zip(delta.data()) {
                *o += d;
            }
        }
        slot @ None => *slot = Some(delta),
    }
}

fn zip_map(g: &Matrix, x: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(
        g.rows(),
        g.cols(),
        g.data()
            .iter()
            .zip(x.data())
            .map(|(&g, &x)| f(g, x))
            .collect(),
    )
}

fn zip_map2(g: &Matrix, x: &Matrix, y: &Matrix, f: impl Fn(f64, f64, f64) -> f64) -> Matrix {
    Matrix::from_vec(
        g.rows(),
        g.cols(),
        g.data()
            .iter()
            .zip(x.data())
            .zip(y.data())
            .map(|((&g, &x), &y)| f(g, x, y))
            .collect(),
    )
}

// The scalar guards are written with explicit comparisons instead of
// f64::max / f64::min: those would swallow NaN and hide numerical
// corruption from the non-finite-loss abort.

fn relu_scalar(x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        x
    }
}

fn exp_capped(x: f64) -> f64 {
    if x > EXP_CAP {
        EXP_CAP.exp()
    } else {
        x.exp()
    }
}

fn ln_floored(x: f64) -> f64 {
    if x < LN_FLOOR {
        LN_FLOOR.ln()
    } else {
        x.ln()
    }
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
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

fn log_softmax_in_place(v: &mut [f64]) {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + v.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    for x in v.iter_mut() {
        *x -= lse;
    }
}

fn pair_gauss_forward(mu: &Matrix, var: &Matrix, z: &Matrix) -> Matrix {
    let (n, d) = mu.dim();
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    let mut out = Matrix::zeros(n, n);
    // log-det part depends only on i
    let mut logdet = vec![0.0; n];
    for (i, ld) in logdet.iter_mut().enumerate() {
        *ld = var.row(i).iter().map(|&v| v.ln()).sum::<f64>();
    }
    for i in 0..n {
        let mu_i = mu.row(i);
        let var_i = var.row(i);
        for j in 0..n {
            let z_j = z.row(j);
            let mut maha = 0.0;
            for k in 0..d {
                let diff = z_j[k] - mu_i[k];
                maha += diff * diff / var_i[k];
            }
            out[(i, j)] = -0.5 * (d as f64 * ln2pi + logdet[i] + maha);
        }
    }
    out
}

#[allow(clippy::type_complexity)]
fn pair_gauss_backward(
    g: &Matrix,
    mu: &Matrix,
    var: &Matrix,
    z: &Matrix,
    need_mu: bool,
    need_var: bool,
    need_z: bool,
) -> (Option<Matrix>, Option<Matrix>, Option<Matrix>) {
    let (n, d) = mu.dim();
    let mut dmu = need_mu.then(|| Matrix::zeros(n, d));
    let mut dvar = need_var.then(|| Matrix::zeros(n, d));
    let mut dz = need_z.then(|| Matrix::zeros(n, d));
    for i in 0..n {
        let mu_i = mu.row(i);
        let var_i = var.row(i);
        for j in 0..n {
            let gij = g[(i, j)];
            if gij == 0.0 {
                continue;
            }
            let z_j = z.row(j);
            for k in 0..d {
                let diff = z_j[k] - mu_i[k];
                let inv = 1.0 / var_i[k];
                if let Some(dmu) = &mut dmu {
                    dmu[(i, k)] += gij * diff * inv;
                }
                if let Some(dvar) = &mut dvar {
                    dvar[(i, k)] += gij * (-0.5) * (inv - diff * diff * inv * inv);
                }
                if let Some(dz) = &mut dz {
                    dz[(j, k)] += gij * (-diff * inv);
                }
            }
        }
    }
    (dmu, dvar, dz)
}
