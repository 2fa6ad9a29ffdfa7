use alloc::vec;
use alloc::vec::Vec;

use super::ops::{bce_unchecked, log_softmax_unchecked, sigmoid, softmax_unchecked};
use super::params::{GradStore, ParamStore};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug, Clone)]
enum Op {
    Const,
    Param { slot: usize, entry: usize },
    MatVec(Var, Var),
    VecMat(Var, Var),
    Row(Var, usize),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    Tanh(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Softmax(Var),
    LogSoftmax(Var),
    Pick(Var, usize),
    Sum(Var),
    Mean(Var),
    Concat(Vec<Var>),
    Dot(Var, Var),
    ScaleBy(Var, Var),
    AddN(Vec<Var>),
    Bce(Var, f64),
    Clamp(Var, f64, f64),
    Min(Var, Var),
    StraightThrough(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Vec<f64>,
    rows: usize,
    cols: usize,
    op: Op,
}

/// Parameter store bound onto a graph: one leaf per entry, in store order.
#[derive(Debug, Clone)]
pub struct Bound {
    slot: usize,
    vars: Vec<Var>,
}

impl Bound {
    pub fn slot(&self) -> usize {
        self.slot
    }

    /// Leaf for the `index`-th entry of the bound store.
    pub fn var(&self, index: usize) -> Var {
        self.vars[index]
    }
}

/// Gradients of a scalar with respect to every bound store.
#[derive(Debug, Clone)]
pub struct Gradients {
    stores: Vec<GradStore>,
}

impl Gradients {
    pub fn get(&self, bound: &Bound) -> &GradStore {
        &self.stores[bound.slot]
    }

    pub fn take(mut self, bound: &Bound) -> GradStore {
        self.stores.swap_remove(bound.slot)
    }
}

/// A forward-computation tape.
///
/// Nodes can only refer to earlier nodes, so the tape is acyclic by
/// construction and its insertion order is a topological order. Shape
/// mismatches inside the fixed op vocabulary are programming errors and
/// panic; user-facing inputs are validated by the model layer before they
/// reach the tape.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    slots: Vec<GradStore>,
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

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op) -> Var {
        debug_assert_eq!(value.len(), rows * cols);
        self.nodes.push(Node { value, rows, cols, op });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let n = self.node(v);
        assert_eq!(n.value.len(), 1, "not a scalar node");
        n.value[0]
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    /// Bind every entry of `params` as a differentiable leaf. Rank-1 tensors
    /// become column vectors, rank-2 tensors matrices, higher ranks are
    /// flattened to a column.
    pub fn bind(&mut self, params: &ParamStore) -> Bound {
        let slot = self.slots.len();
        self.slots.push(GradStore::zeros_like(params));
        let vars = params
            .entries()
            .enumerate()
            .map(|(entry, (_, t))| {
                let (rows, cols) = match t.shape.as_slice() {
                    [r, c] => (*r, *c),
                    _ => (t.len(), 1),
                };
                self.push(t.values.clone(), rows, cols, Op::Param { slot, entry })
            })
            .collect();
        Bound { slot, vars }
    }

    pub fn constant(&mut self, values: Vec<f64>) -> Var {
        let n = values.len();
        self.push(values, n, 1, Op::Const)
    }

    pub fn matrix_const(&mut self, values: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(values.len(), rows * cols, "matrix constant shape mismatch");
        self.push(values, rows, cols, Op::Const)
    }

    pub fn scalar_const(&mut self, value: f64) -> Var {
        self.push(vec![value], 1, 1, Op::Const)
    }

    /// Matrix (r x c) times column vector (c) -> (r).
    pub fn matvec(&mut self, m: Var, x: Var) -> Var {
        let (r, c) = self.dims(m);
        let xv = self.value(x);
        assert_eq!(xv.len(), c, "matvec dimension mismatch");
        let mv = self.value(m);
        let out = (0..r).map(|i| dot(&mv[i * c..(i + 1) * c], xv)).collect();
        self.push(out, r, 1, Op::MatVec(m, x))
    }

    /// Row vector (r) times matrix (r x c) -> (c); the one-hot embedding path.
    pub fn vecmat(&mut self, x: Var, m: Var) -> Var {
        let (r, c) = self.dims(m);
        let xv = self.value(x);
        assert_eq!(xv.len(), r, "vecmat dimension mismatch");
        let mv = self.value(m);
        let mut out = vec![0.0; c];
        for i in 0..r {
            let w = xv[i];
            for (o, &e) in out.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                *o += w * e;
            }
        }
        self.push(out, c, 1, Op::VecMat(x, m))
    }

    /// Row `index` of a matrix, as a column vector (embedding lookup).
    pub fn row(&mut self, m: Var, index: usize) -> Var {
        let (r, c) = self.dims(m);
        assert!(index < r, "row index out of range");
        let out = self.value(m)[index * c..(index + 1) * c].to_vec();
        self.push(out, c, 1, Op::Row(m, index))
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (na, nb) = (self.node(a), self.node(b));
        assert_eq!(na.value.len(), nb.value.len(), "elementwise shape mismatch");
        let out = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let (r, c) = (na.rows, na.cols);
        self.push(out, r, c, op)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let out = n.value.iter().map(|&x| f(x)).collect();
        let (r, c) = (n.rows, n.cols);
        self.push(out, r, c, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn min(&mut self, a: Var, b: Var) -> Var {
        self.zip_with(a, b, f64::min, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        self.map(a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn offset(&mut self, a: Var, shift: f64) -> Var {
        self.map(a, |x| x + shift, Op::Offset(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, libm::tanh, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, libm::exp, Op::Exp(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        self.map(a, |x| x.max(lo).min(hi), Op::Clamp(a, lo, hi))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let out = softmax_unchecked(&n.value);
        let len = out.len();
        self.push(out, len, 1, Op::Softmax(a))
    }

    pub fn log_softmax(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let out = log_softmax_unchecked(&n.value);
        let len = out.len();
        self.push(out, len, 1, Op::LogSoftmax(a))
    }

    pub fn pick(&mut self, a: Var, index: usize) -> Var {
        let v = self.value(a)[index];
        self.push(vec![v], 1, 1, Op::Pick(a, index))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).iter().sum();
        self.push(vec![v], 1, 1, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let vals = self.value(a);
        let v = vals.iter().sum::<f64>() / vals.len() as f64;
        self.push(vec![v], 1, 1, Op::Mean(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let out: Vec<f64> = parts.iter().flat_map(|&p| self.value(p).iter().copied()).collect();
        let len = out.len();
        self.push(out, len, 1, Op::Concat(parts.to_vec()))
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.len(), y.len(), "dot shape mismatch");
        let v = dot(x, y);
        self.push(vec![v], 1, 1, Op::Dot(a, b))
    }

    /// Vector times a scalar node.
    pub fn scale_by(&mut self, a: Var, s: Var) -> Var {
        let k = self.scalar(s);
        let n = self.node(a);
        let out = n.value.iter().map(|&x| x * k).collect();
        let (r, c) = (n.rows, n.cols);
        self.push(out, r, c, Op::ScaleBy(a, s))
    }

    pub fn add_n(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "add_n of nothing");
        let first = self.node(parts[0]);
        let (r, c) = (first.rows, first.cols);
        let mut out = first.value.clone();
        for &p in &parts[1..] {
            let v = self.value(p);
            assert_eq!(v.len(), out.len(), "add_n shape mismatch");
            out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
        }
        self.push(out, r, c, Op::AddN(parts.to_vec()))
    }

    /// Forward value `forward`, gradient passed to `a` unchanged.
    pub fn straight_through(&mut self, a: Var, forward: Vec<f64>) -> Var {
        let n = self.node(a);
        assert_eq!(n.value.len(), forward.len(), "straight-through shape mismatch");
        let (r, c) = (n.rows, n.cols);
        self.push(forward, r, c, Op::StraightThrough(a))
    }

    /// Stable binary cross-entropy of a scalar logit against a 0/1 label.
    pub fn bce(&mut self, score: Var, label: f64) -> Var {
        let v = bce_unchecked(self.scalar(score), label);
        self.push(vec![v], 1, 1, Op::Bce(score, label))
    }

    /// Reverse pass from a scalar node.
    ///
    /// Every bound store gets a gradient slot; entries that did not take
    /// part in the computation keep a zero gradient.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if loss.0 >= self.nodes.len() {
            return Err(Error::Structural("terminal node does not belong to this graph".into()));
        }
        if self.nodes[loss.0].value.len() != 1 {
            return Err(Error::Structural("backward needs a scalar terminal".into()));
        }
        let mut stores = self.slots.clone();
        stores.iter_mut().for_each(GradStore::zero);
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
                let len = self.nodes[v.0].value.len();
                let slot = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
                f(slot);
            };
            match &node.op {
                Op::Const => {}
                Op::Param { slot, entry } => {
                    let t = stores[*slot].entry_mut(*entry);
                    t.values.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                Op::MatVec(m, x) => {
                    let (r, c) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
                    let mv = &self.nodes[m.0].value;
                    let xv = &self.nodes[x.0].value;
                    acc(*m, &mut |dm| {
                        for i in 0..r {
                            let gi = g[i];
                            if gi != 0.0 {
                                for (d, &xj) in dm[i * c..(i + 1) * c].iter_mut().zip(xv) {
                                    *d += gi * xj;
                                }
                            }
                        }
                    });
                    acc(*x, &mut |dx| {
                        for i in 0..r {
                            let gi = g[i];
                            for (d, &mij) in dx.iter_mut().zip(&mv[i * c..(i + 1) * c]) {
                                *d += gi * mij;
                            }
                        }
                    });
                }
                Op::VecMat(x, m) => {
                    let (r, c) = (self.nodes[m.0].rows, self.nodes[m.0].cols);
                    let mv = &self.nodes[m.0].value;
                    let xv = &self.nodes[x.0].value;
                    acc(*x, &mut |dx| {
                        for (i, d) in dx.iter_mut().enumerate().take(r) {
                            *d += dot(&mv[i * c..(i + 1) * c], &g);
                        }
                    });
                    acc(*m, &mut |dm| {
                        for i in 0..r {
                            let xi = xv[i];
                            for (d, &gj) in dm[i * c..(i + 1) * c].iter_mut().zip(&g) {
                                *d += xi * gj;
                            }
                        }
                    });
                }
                Op::Row(m, k) => {
                    let c = self.nodes[m.0].cols;
                    acc(*m, &mut |dm| {
                        dm[k * c..(k + 1) * c].iter_mut().zip(&g).for_each(|(d, x)| *d += x);
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |d| add_into(d, &g));
                    acc(*b, &mut |d| add_into(d, &g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |d| add_into(d, &g));
                    acc(*b, &mut |d| d.iter_mut().zip(&g).for_each(|(d, x)| *d -= x));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * bv[k];
                        }
                    });
                    acc(*b, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * av[k];
                        }
                    });
                }
                Op::Min(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            if av[k] <= bv[k] {
                                d[k] += g[k];
                            }
                        }
                    });
                    acc(*b, &mut |d| {
                        for k in 0..d.len() {
                            if av[k] > bv[k] {
                                d[k] += g[k];
                            }
                        }
                    });
                }
                Op::Scale(a, f) => acc(*a, &mut |d| d.iter_mut().zip(&g).for_each(|(d, x)| *d += f * x)),
                Op::Offset(a) | Op::StraightThrough(a) => acc(*a, &mut |d| add_into(d, &g)),
                Op::Tanh(a) => {
                    let y = &node.value;
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Relu(a) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            if x[k] > 0.0 {
                                d[k] += g[k];
                            }
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = &node.value;
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = &node.value;
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * y[k];
                        }
                    });
                }
                Op::Clamp(a, lo, hi) => {
                    let x = &self.nodes[a.0].value;
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            if x[k] >= *lo && x[k] <= *hi {
                                d[k] += g[k];
                            }
                        }
                    });
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let gy = dot(&g, y);
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += y[k] * (g[k] - gy);
                        }
                    });
                }
                Op::LogSoftmax(a) => {
                    let y = &node.value;
                    let gs: f64 = g.iter().sum();
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] - libm::exp(y[k]) * gs;
                        }
                    });
                }
                Op::Pick(a, k) => acc(*a, &mut |d| d[*k] += g[0]),
                Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|d| *d += g[0])),
                Op::Mean(a) => {
                    acc(*a, &mut |d| {
                        let s = g[0] / d.len() as f64;
                        d.iter_mut().for_each(|d| *d += s)
                    });
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        acc(*p, &mut |d| add_into(d, &g[off..off + len]));
                        off += len;
                    }
                }
                Op::Dot(a, b) => {
                    let (av, bv) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
                    acc(*a, &mut |d| d.iter_mut().zip(bv).for_each(|(d, x)| *d += g[0] * x));
                    acc(*b, &mut |d| d.iter_mut().zip(av).for_each(|(d, x)| *d += g[0] * x));
                }
                Op::ScaleBy(a, s) => {
                    let av = &self.nodes[a.0].value;
                    let k = self.nodes[s.0].value[0];
                    acc(*a, &mut |d| d.iter_mut().zip(&g).for_each(|(d, x)| *d += k * x));
                    acc(*s, &mut |d| d[0] += dot(&g, av));
                }
                Op::AddN(parts) => {
                    for p in parts {
                        acc(*p, &mut |d| add_into(d, &g));
                    }
                }
                Op::Bce(s, label) => {
                    let x = self.nodes[s.0].value[0];
                    acc(*s, &mut |d| d[0] += g[0] * (sigmoid(x) - label));
                }
            }
        }
        Ok(Gradients { stores })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_into(d: &mut [f64], g: &[f64]) {
    d.iter_mut().zip(g).for_each(|(d, x)| *d += x);
}
