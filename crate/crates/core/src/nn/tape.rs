//! Reverse-mode automatic differentiation over a flat operation tape.
//!
//! A tape is built per forward evaluation; `backward` replays it in reverse
//! and accumulates gradients for every parameter node into a
//! [`ParamGrads`] buffer.

use super::params::{ParamGrads, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, shifted_softplus, sigmoid, Tensor};

pub type VarId = usize;

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(usize),
    MatMul(VarId, VarId),
    /// matrix + broadcast row vector
    AddRow(VarId, VarId),
    Add(VarId, VarId),
    /// elementwise product, equal shapes
    Mul(VarId, VarId),
    /// (n x c) scaled per-row by an (n x 1) column
    MulCol(VarId, VarId),
    Scale(VarId, f64),
    AddConst(VarId),
    Ssp(VarId),
    SoftmaxRows(VarId),
    LogSoftmaxRows(VarId),
    MeanRows(VarId),
    SumRows(VarId),
    SumAll(VarId),
    ConcatCols(VarId, VarId),
    RepeatRow(VarId),
    GatherRows(VarId, Vec<usize>),
    Reshape(VarId),
    /// out[i] = sum_j filters[i*n + j] ∘ values[j]
    PairAggregate { filters: VarId, values: VarId, n: usize },
    SelectEntry(VarId, usize, usize),
    /// ln(max(x, eps)) elementwise
    LnEps(VarId, f64),
}

struct Node {
    op: Op,
    value: Tensor,
}

pub struct Tape<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
}

impl<'a> Tape<'a> {
    pub fn new(store: &'a ParamStore) -> Tape<'a> {
        Tape {
            store,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> VarId {
        self.nodes.push(Node { op, value });
        self.nodes.len() - 1
    }

    pub fn value(&self, id: VarId) -> &Tensor {
        &self.nodes[id].value
    }

    pub fn input(&mut self, tensor: Tensor) -> VarId {
        self.push(Op::Input, tensor)
    }

    pub fn param(&mut self, slot: usize) -> VarId {
        let value = self.store.get(slot).clone();
        self.push(Op::Param(slot), value)
    }

    pub fn param_named(&mut self, name: &str) -> VarId {
        self.param(self.store.slot(name))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> VarId {
        let value = matmul(self.value(a), self.value(b));
        self.push(Op::MatMul(a, b), value)
    }

    pub fn add_row(&mut self, a: VarId, row: VarId) -> VarId {
        let (m, r) = (self.value(a), self.value(row));
        debug_assert_eq!(r.rows, 1);
        debug_assert_eq!(m.cols, r.cols);
        let mut value = m.clone();
        for i in 0..value.rows {
            for (v, b) in value.row_mut(i).iter_mut().zip(&r.data) {
                *v += b;
            }
        }
        self.push(Op::AddRow(a, row), value)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> VarId {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        self.push(Op::Add(a, b), value)
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> VarId {
        let (ta, tb) = (self.value(a), self.value(b));
        debug_assert_eq!((ta.rows, ta.cols), (tb.rows, tb.cols));
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let value = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(Op::Mul(a, b), value)
    }

    pub fn mul_col(&mut self, a: VarId, col: VarId) -> VarId {
        let (m, c) = (self.value(a), self.value(col));
        debug_assert_eq!(c.cols, 1);
        debug_assert_eq!(m.rows, c.rows);
        let mut value = m.clone();
        for i in 0..value.rows {
            let s = c.data[i];
            for v in value.row_mut(i) {
                *v *= s;
            }
        }
        self.push(Op::MulCol(a, col), value)
    }

    pub fn scale(&mut self, a: VarId, factor: f64) -> VarId {
        let data = self.value(a).data.iter().map(|v| v * factor).collect();
        let value = Tensor::from_vec(self.value(a).rows, self.value(a).cols, data);
        self.push(Op::Scale(a, factor), value)
    }

    pub fn add_const(&mut self, a: VarId, c: f64) -> VarId {
        let data = self.value(a).data.iter().map(|v| v + c).collect();
        let value = Tensor::from_vec(self.value(a).rows, self.value(a).cols, data);
        self.push(Op::AddConst(a), value)
    }

    pub fn ssp(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let data = t.data.iter().map(|&v| shifted_softplus(v)).collect();
        let value = Tensor::from_vec(t.rows, t.cols, data);
        self.push(Op::Ssp(a), value)
    }

    pub fn softmax_rows(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let mut value = t.clone();
        for i in 0..value.rows {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            for v in row.iter_mut() {
                *v /= sum;
            }
        }
        self.push(Op::SoftmaxRows(a), value)
    }

    pub fn log_softmax_rows(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let mut value = t.clone();
        for i in 0..value.rows {
            let row = value.row_mut(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
            for v in row.iter_mut() {
                *v -= log_sum;
            }
        }
        self.push(Op::LogSoftmaxRows(a), value)
    }

    pub fn mean_rows(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let mut value = Tensor::zeros(1, t.cols);
        for i in 0..t.rows {
            for (v, x) in value.data.iter_mut().zip(t.row(i)) {
                *v += x;
            }
        }
        for v in &mut value.data {
            *v /= t.rows as f64;
        }
        self.push(Op::MeanRows(a), value)
    }

    pub fn sum_rows(&mut self, a: VarId) -> VarId {
        let t = self.value(a);
        let mut value = Tensor::zeros(1, t.cols);
        for i in 0..t.rows {
            for (v, x) in value.data.iter_mut().zip(t.row(i)) {
                *v += x;
            }
        }
        self.push(Op::SumRows(a), value)
    }

    pub fn sum_all(&mut self, a: VarId) -> VarId {
        let value = Tensor::scalar(self.value(a).data.iter().sum());
        self.push(Op::SumAll(a), value)
    }

    pub fn concat_cols(&mut self, a: VarId, b: VarId) -> VarId {
        let (ta, tb) = (self.value(a), self.value(b));
        debug_assert_eq!(ta.rows, tb.rows);
        let mut value = Tensor::zeros(ta.rows, ta.cols + tb.cols);
        for i in 0..ta.rows {
            let row = value.row_mut(i);
            row[..ta.cols].copy_from_slice(ta.row(i));
            row[ta.cols..].copy_from_slice(tb.row(i));
        }
        self.push(Op::ConcatCols(a, b), value)
    }

    pub fn repeat_row(&mut self, a: VarId, n: usize) -> VarId {
        let t = self.value(a);
        debug_assert_eq!(t.rows, 1);
        let mut value = Tensor::zeros(n, t.cols);
        for i in 0..n {
            value.row_mut(i).copy_from_slice(&t.data);
        }
        self.push(Op::RepeatRow(a), value)
    }

    pub fn gather_rows(&mut self, a: VarId, indices: &[usize]) -> VarId {
        let t = self.value(a);
        let mut value = Tensor::zeros(indices.len(), t.cols);
        for (k, &idx) in indices.iter().enumerate() {
            value.row_mut(k).copy_from_slice(t.row(idx));
        }
        self.push(Op::GatherRows(a, indices.to_vec()), value)
    }

    pub fn reshape(&mut self, a: VarId, rows: usize, cols: usize) -> VarId {
        let t = self.value(a);
        debug_assert_eq!(t.rows * t.cols, rows * cols);
        let value = Tensor::from_vec(rows, cols, t.data.clone());
        self.push(Op::Reshape(a), value)
    }

    pub fn pair_aggregate(&mut self, filters: VarId, values: VarId) -> VarId {
        let (f, v) = (self.value(filters), self.value(values));
        let n = v.rows;
        debug_assert_eq!(f.rows, n * n);
        debug_assert_eq!(f.cols, v.cols);
        let mut out = Tensor::zeros(n, v.cols);
        for i in 0..n {
            for j in 0..n {
                let f_row = f.row(i * n + j);
                let v_row = v.row(j);
                for ((o, &fv), &vv) in out.row_mut(i).iter_mut().zip(f_row).zip(v_row) {
                    *o += fv * vv;
                }
            }
        }
        self.push(Op::PairAggregate { filters, values, n }, out)
    }

    pub fn select_entry(&mut self, a: VarId, r: usize, c: usize) -> VarId {
        let value = Tensor::scalar(self.value(a).at(r, c));
        self.push(Op::SelectEntry(a, r, c), value)
    }

    pub fn ln_eps(&mut self, a: VarId, eps: f64) -> VarId {
        let t = self.value(a);
        let data = t.data.iter().map(|&v| v.max(eps).ln()).collect();
        let value = Tensor::from_vec(t.rows, t.cols, data);
        self.push(Op::LnEps(a, eps), value)
    }

    /// Dense layer y = x @ w + b with optional bias.
    pub fn dense(&mut self, x: VarId, w: VarId, b: Option<VarId>) -> VarId {
        let h = self.matmul(x, w);
        match b {
            Some(bias) => self.add_row(h, bias),
            None => h,
        }
    }

    /// Runs reverse-mode accumulation from a scalar output. `seed` scales the
    /// whole gradient (use the loss weight of this tape's contribution).
    pub fn backward(&self, output: VarId, seed: f64, grads: &mut ParamGrads) {
        debug_assert_eq!(self.nodes[output].value.data.len(), 1);
        let mut adj: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[output] = Some(Tensor::scalar(seed));

        for id in (0..=output).rev() {
            let grad = match adj[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Input => {}
                Op::Param(slot) => grads.accumulate(*slot, &grad),
                Op::MatMul(a, b) => {
                    let ga = matmul_nt(&grad, self.value(*b));
                    let gb = matmul_tn(self.value(*a), &grad);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::AddRow(a, row) => {
                    let mut grow = Tensor::zeros(1, grad.cols);
                    for i in 0..grad.rows {
                        for (g, x) in grow.data.iter_mut().zip(grad.row(i)) {
                            *g += x;
                        }
                    }
                    accumulate(&mut adj, *a, grad);
                    accumulate(&mut adj, *row, grow);
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, grad.clone());
                    accumulate(&mut adj, *b, grad);
                }
                Op::Mul(a, b) => {
                    let ga = elementwise(&grad, self.value(*b), |g, v| g * v);
                    let gb = elementwise(&grad, self.value(*a), |g, v| g * v);
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::MulCol(a, col) => {
                    let c = self.value(*col);
                    let ta = self.value(*a);
                    let mut ga = grad.clone();
                    let mut gc = Tensor::zeros(c.rows, 1);
                    for i in 0..ga.rows {
                        let s = c.data[i];
                        let mut acc = 0.0;
                        for (g, x) in ga.row_mut(i).iter_mut().zip(ta.row(i)) {
                            acc += *g * x;
                            *g *= s;
                        }
                        gc.data[i] = acc;
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *col, gc);
                }
                Op::Scale(a, s) => {
                    let ga = elementwise(&grad, &grad, |g, _| g * s);
                    accumulate(&mut adj, *a, ga);
                }
                Op::AddConst(a) => accumulate(&mut adj, *a, grad),
                Op::Ssp(a) => {
                    let ga = elementwise(&grad, self.value(*a), |g, x| g * sigmoid(*x));
                    accumulate(&mut adj, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let mut ga = grad.clone();
                    for i in 0..ga.rows {
                        let dot: f64 = ga.row(i).iter().zip(y.row(i)).map(|(g, p)| g * p).sum();
                        for (g, p) in ga.row_mut(i).iter_mut().zip(y.row(i)) {
                            *g = (*g - dot) * p;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::LogSoftmaxRows(a) => {
                    let y = &self.nodes[id].value;
                    let mut ga = grad.clone();
                    for i in 0..ga.rows {
                        let sum: f64 = ga.row(i).iter().sum();
                        for (g, ls) in ga.row_mut(i).iter_mut().zip(y.row(i)) {
                            *g -= ls.exp() * sum;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::MeanRows(a) => {
                    let n = self.value(*a).rows;
                    let mut ga = Tensor::zeros(n, grad.cols);
                    for i in 0..n {
                        for (g, x) in ga.row_mut(i).iter_mut().zip(&grad.data) {
                            *g = x / n as f64;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SumRows(a) => {
                    let n = self.value(*a).rows;
                    let mut ga = Tensor::zeros(n, grad.cols);
                    for i in 0..n {
                        ga.row_mut(i).copy_from_slice(&grad.data);
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::SumAll(a) => {
                    let t = self.value(*a);
                    let g = grad.item();
                    let ga = Tensor::from_vec(t.rows, t.cols, vec![g; t.data.len()]);
                    accumulate(&mut adj, *a, ga);
                }
                Op::ConcatCols(a, b) => {
                    let (ca, cb) = (self.value(*a).cols, self.value(*b).cols);
                    let mut ga = Tensor::zeros(grad.rows, ca);
                    let mut gb = Tensor::zeros(grad.rows, cb);
                    for i in 0..grad.rows {
                        let row = grad.row(i);
                        ga.row_mut(i).copy_from_slice(&row[..ca]);
                        gb.row_mut(i).copy_from_slice(&row[ca..]);
                    }
                    accumulate(&mut adj, *a, ga);
                    accumulate(&mut adj, *b, gb);
                }
                Op::RepeatRow(a) => {
                    let mut ga = Tensor::zeros(1, grad.cols);
                    for i in 0..grad.rows {
                        for (g, x) in ga.data.iter_mut().zip(grad.row(i)) {
                            *g += x;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    let t = self.value(*a);
                    let mut ga = Tensor::zeros(t.rows, t.cols);
                    for (k, &idx) in indices.iter().enumerate() {
                        for (g, x) in ga.row_mut(idx).iter_mut().zip(grad.row(k)) {
                            *g += x;
                        }
                    }
                    accumulate(&mut adj, *a, ga);
                }
                Op::Reshape(a) => {
                    let t = self.value(*a);
                    let ga = Tensor::from_vec(t.rows, t.cols, grad.data.clone());
                    accumulate(&mut adj, *a, ga);
                }
                Op::PairAggregate { filters, values, n } => {
                    let f = self.value(*filters);
                    let v = self.value(*values);
                    let cols = v.cols;
                    let mut gf = Tensor::zeros(f.rows, cols);
                    let mut gv = Tensor::zeros(v.rows, cols);
                    for i in 0..*n {
                        let g_row = grad.row(i);
                        for j in 0..*n {
                            let pair = i * n + j;
                            {
                                let gf_row = gf.row_mut(pair);
                                for ((g, &gi), &vv) in gf_row.iter_mut().zip(g_row).zip(v.row(j)) {
                                    *g = gi * vv;
                                }
                            }
                            let gv_row = gv.row_mut(j);
                            for ((g, &gi), &fv) in gv_row.iter_mut().zip(g_row).zip(f.row(pair)) {
                                *g += gi * fv;
                            }
                        }
                    }
                    accumulate(&mut adj, *filters, gf);
                    accumulate(&mut adj, *values, gv);
                }
                Op::SelectEntry(a, r, c) => {
                    let t = self.value(*a);
                    let mut ga = Tensor::zeros(t.rows, t.cols);
                    *ga.at_mut(*r, *c) = grad.item();
                    accumulate(&mut adj, *a, ga);
                }
                Op::LnEps(a, eps) => {
                    let ga = elementwise(&grad, self.value(*a), |g, x| {
                        if *x > *eps {
                            g / x
                        } else {
                            0.0
                        }
                    });
                    accumulate(&mut adj, *a, ga);
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: VarId, grad: Tensor) {
    match &mut adj[id] {
        Some(existing) => existing.add_assign(&grad),
        slot @ None => *slot = Some(grad),
    }
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, &f64) -> f64) -> Tensor {
    debug_assert_eq!(a.data.len(), b.data.len());
    let data = a.data.iter().zip(&b.data).map(|(x, y)| f(*x, y)).collect();
    Tensor::from_vec(a.rows, a.cols, data)
}
