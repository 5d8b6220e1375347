//! Tensor-level reverse-mode automatic differentiation.
//!
//! Every primitive appends one node to a [`GradTape`]. Parents always have a
//! lower index than their children, so a reverse sweep over the node list is a
//! reverse topological order.

use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a tape.
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
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    MulConst(Var, Vec<f64>),
    Scale(Var, f64),
    ScaleBy(Var, Var),
    Relu(Var),
    Tanh(Var),
    Sigmoid(Var),
    SumAll(Var),
    SumRows(Var),
    GatherRows(Var, Vec<usize>),
    SelectCols(Var, Vec<usize>),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    Scatter(Var, Vec<usize>),
    BceWithLogits(Var, f64),
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
}

/// Records primitives and replays them backwards.
#[derive(Debug, Default)]
pub struct GradTape {
    nodes: Vec<Node>,
    params: Vec<Var>,
    first_nonfinite: Option<usize>,
}

/// Adjoints produced by [`GradTape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`, zero if `v` did not influence the root.
    pub fn wrt(&self, v: Var) -> Tensor {
        let (r, c) = self.shapes[v.0];
        match &self.grads[v.0] {
            Some(g) => Tensor::matrix(r, c, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&[r, c]),
        }
    }
}

fn acc(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
}

impl GradTape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        let idx = self.nodes.len();
        if self.first_nonfinite.is_none() && value.iter().any(|v| !v.is_finite()) {
            self.first_nonfinite = Some(idx);
        }
        self.nodes.push(Node { rows, cols, value, op });
        Var(idx)
    }

    /// Records a constant. Gradients flow into it but nobody reads them.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.rows(), t.cols(), t.values().to_vec(), Op::Leaf)
    }

    /// Records a trainable leaf and registers it in the parameter list.
    pub fn param(&mut self, t: &Tensor) -> Var {
        let v = self.constant(t);
        self.params.push(v);
        v
    }

    pub fn params(&self) -> &[Var] {
        &self.params
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("node shape")
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    /// Errors if any recorded value so far is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        match self.first_nonfinite {
            Some(i) => Err(Error::Numerical(format!("non-finite value at tape node {i}"))),
            None => Ok(()),
        }
    }

    fn same_shape(&self, a: Var, b: Var, what: &str) -> Result<(usize, usize)> {
        let sa = self.shape(a);
        let sb = self.shape(b);
        if sa != sb {
            return Err(Error::InvalidShape(format!("{what}: {sa:?} vs {sb:?}")));
        }
        Ok(sa)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.shape(a);
        let (k2, n) = self.shape(b);
        if k != k2 {
            return Err(Error::InvalidShape(format!("matmul: {m}x{k} by {k2}x{n}")));
        }
        let out = matmul(self.value(a), self.value(b), m, k, n);
        Ok(self.push(m, n, out, Op::MatMul(a, b)))
    }

    /// `a + b` with a `1 x c` row `b` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.shape(a);
        if self.shape(b) != (1, c) {
            return Err(Error::InvalidShape(format!("add_row: {r}x{c} plus {:?}", self.shape(b))));
        }
        let bv = self.value(b);
        let out: Vec<f64> = self.value(a).iter().enumerate().map(|(i, x)| x + bv[i % c]).collect();
        Ok(self.push(r, c, out, Op::AddRow(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x + y).collect();
        Ok(self.push(r, c, out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "sub")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x - y).collect();
        Ok(self.push(r, c, out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (r, c) = self.same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(x, y)| x * y).collect();
        Ok(self.push(r, c, out, Op::Mul(a, b)))
    }

    /// Elementwise product with a constant mask of the same size.
    pub fn mul_const(&mut self, a: Var, mask: Vec<f64>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if mask.len() != r * c {
            return Err(Error::InvalidShape("mul_const: mask length".into()));
        }
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.push(r, c, out, Op::MulConst(a, mask)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(r, c, out, Op::Scale(a, s))
    }

    /// Multiplies every entry of `a` by the `1 x 1` value `s`.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::InvalidShape("scale_by: scale must be 1x1".into()));
        }
        let (r, c) = self.shape(a);
        let sv = self.scalar(s);
        let out = self.value(a).iter().map(|x| x * sv).collect();
        Ok(self.push(r, c, out, Op::ScaleBy(a, s)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| if x > 0.0 { x } else { 0.0 }).collect();
        self.push(r, c, out, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(r, c, out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let out = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(r, c, out, Op::Sigmoid(a))
    }

    /// Sum of all entries as a `1 x 1` value, accumulated in row-major order.
    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(1, 1, vec![s], Op::SumAll(a))
    }

    /// Column sums (`r x c` into `1 x c`), rows accumulated top to bottom.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let (r, c) = self.shape(a);
        let v = self.value(a);
        let mut out = vec![0.0; c];
        for i in 0..r {
            for (o, x) in out.iter_mut().zip(&v[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        self.push(1, c, out, Op::SumRows(a))
    }

    pub fn gather_rows(&mut self, a: Var, index: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = index.iter().find(|&&i| i >= r) {
            return Err(Error::InvalidShape(format!("gather_rows: row {bad} of {r}")));
        }
        let v = self.value(a);
        let mut out = Vec::with_capacity(index.len() * c);
        for &i in &index {
            out.extend_from_slice(&v[i * c..(i + 1) * c]);
        }
        Ok(self.push(index.len(), c, out, Op::GatherRows(a, index)))
    }

    pub fn select_cols(&mut self, a: Var, cols: Vec<usize>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if let Some(&bad) = cols.iter().find(|&&j| j >= c) {
            return Err(Error::InvalidShape(format!("select_cols: column {bad} of {c}")));
        }
        let v = self.value(a);
        let k = cols.len();
        let mut out = Vec::with_capacity(r * k);
        for i in 0..r {
            for &j in &cols {
                out.push(v[i * c + j]);
            }
        }
        Ok(self.push(r, k, out, Op::SelectCols(a, cols)))
    }

    pub fn concat_cols(&mut self, parts: Vec<Var>) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidShape("concat_cols: no parts".into()));
        };
        let r = self.shape(first).0;
        if parts.iter().any(|&p| self.shape(p).0 != r) {
            return Err(Error::InvalidShape("concat_cols: row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Vec::with_capacity(r * total);
        for i in 0..r {
            for &p in &parts {
                let c = self.shape(p).1;
                out.extend_from_slice(&self.value(p)[i * c..(i + 1) * c]);
            }
        }
        Ok(self.push(r, total, out, Op::ConcatCols(parts)))
    }

    pub fn concat_rows(&mut self, parts: Vec<Var>) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::InvalidShape("concat_rows: no parts".into()));
        };
        let c = self.shape(first).1;
        if parts.iter().any(|&p| self.shape(p).1 != c) {
            return Err(Error::InvalidShape("concat_rows: column counts differ".into()));
        }
        let mut out = Vec::new();
        let mut r = 0;
        for &p in &parts {
            r += self.shape(p).0;
            out.extend_from_slice(self.value(p));
        }
        Ok(self.push(r, c, out, Op::ConcatRows(parts)))
    }

    /// Scatters the entries of `a` (row-major) into a zero `rows x cols`
    /// matrix at flat positions `pos`, accumulating duplicates.
    pub fn scatter(&mut self, a: Var, pos: Vec<usize>, rows: usize, cols: usize) -> Result<Var> {
        if self.value(a).len() != pos.len() {
            return Err(Error::InvalidShape("scatter: position count".into()));
        }
        if pos.iter().any(|&p| p >= rows * cols) {
            return Err(Error::InvalidShape("scatter: position out of range".into()));
        }
        let mut out = vec![0.0; rows * cols];
        for (x, &p) in self.value(a).iter().zip(&pos) {
            out[p] += x;
        }
        Ok(self.push(rows, cols, out, Op::Scatter(a, pos)))
    }

    /// Numerically stable binary cross-entropy of a `1 x 1` logit.
    pub fn bce_with_logits(&mut self, z: Var, label: f64) -> Result<Var> {
        if self.shape(z) != (1, 1) {
            return Err(Error::InvalidShape("bce_with_logits: logit must be 1x1".into()));
        }
        let loss = bce_logit(self.scalar(z), label);
        Ok(self.push(1, 1, vec![loss], Op::BceWithLogits(z, label)))
    }

    /// Reverse sweep from a `1 x 1` root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.shape(root) != (1, 1) {
            return Err(Error::InvalidShape("backward: root must be 1x1".into()));
        }
        self.check_finite()?;
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.shape(*a);
                    let nn = node.cols;
                    let ga = matmul_nt(&g, self.value(*b), m, nn, k);
                    let gb = matmul_tn(self.value(*a), &g, m, k, nn);
                    acc(&mut grads[a.0], m * k, |buf| add_into(buf, &ga));
                    acc(&mut grads[b.0], k * nn, |buf| add_into(buf, &gb));
                }
                Op::AddRow(a, b) => {
                    let c = node.cols;
                    acc(&mut grads[a.0], g.len(), |buf| add_into(buf, &g));
                    acc(&mut grads[b.0], c, |buf| {
                        for (i, x) in g.iter().enumerate() {
                            buf[i % c] += x;
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(&mut grads[a.0], g.len(), |buf| add_into(buf, &g));
                    acc(&mut grads[b.0], g.len(), |buf| add_into(buf, &g));
                }
                Op::Sub(a, b) => {
                    acc(&mut grads[a.0], g.len(), |buf| add_into(buf, &g));
                    acc(&mut grads[b.0], g.len(), |buf| {
                        for (o, x) in buf.iter_mut().zip(&g) {
                            *o -= x;
                        }
                    });
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a);
                    let bv = self.value(*b);
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for ((o, x), y) in buf.iter_mut().zip(&g).zip(bv) {
                            *o += x * y;
                        }
                    });
                    acc(&mut grads[b.0], g.len(), |buf| {
                        for ((o, x), y) in buf.iter_mut().zip(&g).zip(av) {
                            *o += x * y;
                        }
                    });
                }
                Op::MulConst(a, mask) => {
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for ((o, x), m) in buf.iter_mut().zip(&g).zip(mask) {
                            *o += x * m;
                        }
                    });
                }
                Op::Scale(a, s) => {
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for (o, x) in buf.iter_mut().zip(&g) {
                            *o += s * x;
                        }
                    });
                }
                Op::ScaleBy(a, s) => {
                    let sv = self.scalar(*s);
                    let av = self.value(*a);
                    let gs: f64 = g.iter().zip(av).map(|(x, y)| x * y).sum();
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for (o, x) in buf.iter_mut().zip(&g) {
                            *o += sv * x;
                        }
                    });
                    acc(&mut grads[s.0], 1, |buf| buf[0] += gs);
                }
                Op::Relu(a) => {
                    let y = &node.value;
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for ((o, x), yv) in buf.iter_mut().zip(&g).zip(y) {
                            if *yv > 0.0 {
                                *o += x;
                            }
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for ((o, x), yv) in buf.iter_mut().zip(&g).zip(y) {
                            *o += x * (1.0 - yv * yv);
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(&mut grads[a.0], g.len(), |buf| {
                        for ((o, x), yv) in buf.iter_mut().zip(&g).zip(y) {
                            *o += x * yv * (1.0 - yv);
                        }
                    });
                }
                Op::SumAll(a) => {
                    let l = len_of(*a);
                    acc(&mut grads[a.0], l, |buf| {
                        for o in buf.iter_mut() {
                            *o += g[0];
                        }
                    });
                }
                Op::SumRows(a) => {
                    let l = len_of(*a);
                    let c = node.cols;
                    acc(&mut grads[a.0], l, |buf| {
                        for (i, o) in buf.iter_mut().enumerate() {
                            *o += g[i % c];
                        }
                    });
                }
                Op::GatherRows(a, index) => {
                    let l = len_of(*a);
                    let c = node.cols;
                    acc(&mut grads[a.0], l, |buf| {
                        for (k, &r) in index.iter().enumerate() {
                            for j in 0..c {
                                buf[r * c + j] += g[k * c + j];
                            }
                        }
                    });
                }
                Op::SelectCols(a, cols) => {
                    let (r, c) = self.shape(*a);
                    let k = cols.len();
                    acc(&mut grads[a.0], r * c, |buf| {
                        for i in 0..r {
                            for (q, &j) in cols.iter().enumerate() {
                                buf[i * c + j] += g[i * k + q];
                            }
                        }
                    });
                }
                Op::ConcatCols(parts) => {
                    let total = node.cols;
                    let mut offset = 0;
                    for p in parts {
                        let (r, c) = self.shape(*p);
                        acc(&mut grads[p.0], r * c, |buf| {
                            for i in 0..r {
                                for j in 0..c {
                                    buf[i * c + j] += g[i * total + offset + j];
                                }
                            }
                        });
                        offset += c;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let l = len_of(*p);
                        acc(&mut grads[p.0], l, |buf| add_into(buf, &g[offset..offset + l]));
                        offset += l;
                    }
                }
                Op::Scatter(a, pos) => {
                    let l = len_of(*a);
                    acc(&mut grads[a.0], l, |buf| {
                        for (o, &p) in buf.iter_mut().zip(pos) {
                            *o += g[p];
                        }
                    });
                }
                Op::BceWithLogits(z, label) => {
                    let zv = self.scalar(*z);
                    let d = sigmoid(zv) - label;
                    acc(&mut grads[z.0], 1, |buf| buf[0] += g[0] * d);
                }
            }
            grads[i] = Some(g);
        }
        let shapes = self.nodes.iter().map(|n| (n.rows, n.cols)).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn add_into(buf: &mut [f64], g: &[f64]) {
    for (o, x) in buf.iter_mut().zip(g) {
        *o += x;
    }
}

/// Logistic function, saturating cleanly at both ends.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `max(z,0) - z*y + ln(1 + e^{-|z|})`.
pub fn bce_logit(z: f64, y: f64) -> f64 {
    z.max(0.0) - z * y + (-z.abs()).exp().ln_1p()
}

/// Evaluates `objective` on a fresh tape with `params` registered as leaves
/// and returns the scalar value with one gradient per parameter, each shaped
/// like its parameter.
pub fn value_and_grad<F>(params: &[Tensor], objective: F) -> Result<(f64, Vec<Tensor>)>
where
    F: FnOnce(&mut GradTape, &[Var]) -> Result<Var>,
{
    let mut tape = GradTape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p)).collect();
    let root = objective(&mut tape, &vars)?;
    tape.check_finite()?;
    let value = tape.scalar(root);
    let grads = tape.backward(root)?;
    let out = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| {
            let g = grads.wrt(v).into_values();
            Tensor::new(p.shape().to_vec(), g).expect("param gradient shape")
        })
        .collect();
    Ok((value, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(params: &[Tensor], f: impl Fn(&mut GradTape, &[Var]) -> Result<Var> + Copy) {
        let (_, grads) = value_and_grad(params, f).unwrap();
        let h = 1e-6;
        for (pi, p) in params.iter().enumerate() {
            for k in 0..p.len() {
                let eval = |delta: f64| {
                    let mut ps = params.to_vec();
                    ps[pi].values_mut()[k] += delta;
                    value_and_grad(&ps, f).unwrap().0
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let analytic = grads[pi].values()[k];
                let denom = analytic.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    (analytic - numeric).abs() / denom < 1e-4,
                    "param {pi}[{k}]: analytic {analytic} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn square_has_analytic_gradient() {
        let (v, g) = value_and_grad(&[Tensor::scalar(3.0)], |t, p| {
            let sq = t.mul(p[0], p[0])?;
            Ok(t.sum_all(sq))
        })
        .unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(g[0].values(), &[6.0]);
    }

    #[test]
    fn sigmoid_sum_matches_finite_differences() {
        let x = Tensor::column(vec![-1.5, 0.3, 0.8, 2.0]);
        let w = Tensor::scalar(0.7);
        fd_check(&[w], |t, p| {
            let xc = t.constant(&x);
            let wx = t.matmul(xc, p[0])?;
            let s = t.sigmoid(wx);
            Ok(t.sum_all(s))
        });
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let params = [Tensor::scalar(1.0), Tensor::row(vec![1.0, 2.0])];
        let (v, g) = value_and_grad(&params, |t, _| Ok(t.constant(&Tensor::scalar(5.0)))).unwrap();
        assert_eq!(v, 5.0);
        assert!(g.iter().all(|t| t.values().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn every_primitive_passes_finite_differences() {
        let a = Tensor::matrix(3, 2, vec![0.3, -0.2, 0.5, 0.9, -0.4, 0.1]).unwrap();
        let b = Tensor::matrix(2, 2, vec![0.7, -0.3, 0.2, 0.6]).unwrap();
        let bias = Tensor::row(vec![0.1, -0.05]);
        let s = Tensor::scalar(1.3);
        fd_check(&[a, b, bias, s], |t, p| {
            let ab = t.matmul(p[0], p[1])?;
            let ab = t.add_row(ab, p[2])?;
            let th = t.tanh(ab);
            let sg = t.sigmoid(ab);
            let m = t.mul(th, sg)?;
            let d = t.sub(m, ab)?;
            let sc = t.scale_by(d, p[3])?;
            let g = t.gather_rows(sc, vec![2, 0, 2])?;
            let cols = t.select_cols(g, vec![1, 0, 1])?;
            let rows = t.sum_rows(cols);
            let cat = t.concat_cols(vec![rows, rows])?;
            let scat = t.scatter(cat, vec![0, 3, 3, 1, 2, 0], 2, 2)?;
            let stacked = t.concat_rows(vec![scat, p[1]])?;
            let masked = t.mul_const(stacked, vec![1.0, 2.0, 0.5, 1.0, 1.0, 0.0, 3.0, 1.0])?;
            let r = t.relu(masked);
            let tot = t.sum_all(r);
            let tot = t.add(tot, p[3])?;
            let tot = t.scale(tot, 0.25);
            t.bce_with_logits(tot, 1.0)
        });
    }

    #[test]
    fn non_finite_values_surface_as_numerical_error() {
        let r = value_and_grad(&[Tensor::scalar(f64::INFINITY)], |t, p| Ok(t.sum_all(p[0])));
        assert!(matches!(r, Err(Error::Numerical(_))));
    }

    #[test]
    fn stable_bce() {
        assert!((bce_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-15);
        let big = bce_logit(50.0, 1.0);
        assert!(big.is_finite() && big < 1e-20);
        assert!(bce_logit(-800.0, 1.0).is_finite());
        assert_eq!(sigmoid(1e6), 1.0);
        assert_eq!(sigmoid(-1e6), 0.0);
    }
}
