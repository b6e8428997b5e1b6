use rand::Rng;

use super::{ParamId, ParamStore};

/// A value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    /// Column `j` of a matrix parameter, i.e. the product with a one-hot vector.
    Column(ParamId, usize),
    /// Vector parameter times a constant scalar.
    ScaleParam(ParamId, f64),
    MatVec(ParamId, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Tanh(Var),
    Sigmoid(Var),
    Dot(Var, Var),
    Scale(Var, f64),
    Mse(Var, Vec<f64>),
    Bce(Var, f64),
    Hinge(Var, f64),
    /// Elementwise product with a fixed mask.
    Mask(Var, Vec<f64>),
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    off: usize,
    len: usize,
}

/// Clamp for probabilities inside the cross-entropy.
const PROB_EPS: f64 = 1e-12;

/// Append-only record of a forward computation. Values and adjoints live in
/// flat arenas; [`Tape::clear`] keeps their capacity.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    vals: Vec<f64>,
    grads: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.nodes.clear();
        self.vals.clear();
        self.grads.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.vals[n.off..n.off + n.len]
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let x = self.value(v);
        assert_eq!(x.len(), 1, "not a scalar");
        x[0]
    }

    /// Adjoint of `v` after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> &[f64] {
        let n = &self.nodes[v.0];
        &self.grads[n.off..n.off + n.len]
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].len
    }

    /// Parameters read by the recorded graph, sorted.
    pub fn params_used(&self) -> Vec<ParamId> {
        let mut ids: Vec<ParamId> = self
            .nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Param(p) | Op::Column(p, _) | Op::ScaleParam(p, _) | Op::MatVec(p, _) => Some(p),
                _ => None,
            })
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    fn push(&mut self, op: Op, vals: impl IntoIterator<Item = f64>) -> Var {
        let off = self.vals.len();
        self.vals.extend(vals);
        self.finish(op, off)
    }

    /// Records `op` for the values appended since `off`.
    fn finish(&mut self, op: Op, off: usize) -> Var {
        let len = self.vals.len() - off;
        self.nodes.push(Node { op, off, len });
        Var(self.nodes.len() - 1)
    }

    fn same_dim(&self, a: Var, b: Var) {
        assert_eq!(self.dim(a), self.dim(b), "shape mismatch");
    }

    pub fn input(&mut self, x: &[f64]) -> Var {
        self.push(Op::Input, x.iter().copied())
    }

    pub fn param(&mut self, ps: &ParamStore, p: ParamId) -> Var {
        let off = self.vals.len();
        self.vals.extend_from_slice(ps.value(p));
        self.finish(Op::Param(p), off)
    }

    pub fn column(&mut self, ps: &ParamStore, w: ParamId, j: usize) -> Var {
        let p = ps.get(w);
        assert!(j < p.cols, "column out of range");
        let off = self.vals.len();
        self.vals.extend((0..p.rows).map(|i| p.value[i * p.cols + j]));
        self.finish(Op::Column(w, j), off)
    }

    pub fn scale_param(&mut self, ps: &ParamStore, w: ParamId, s: f64) -> Var {
        let off = self.vals.len();
        self.vals.extend(ps.value(w).iter().map(|x| x * s));
        self.finish(Op::ScaleParam(w, s), off)
    }

    pub fn matvec(&mut self, ps: &ParamStore, w: ParamId, x: Var) -> Var {
        let p = ps.get(w);
        assert_eq!(p.cols, self.dim(x), "shape mismatch in matvec");
        let xo = self.nodes[x.0].off;
        let off = self.vals.len();
        self.vals.reserve(p.rows);
        for row in p.value.chunks_exact(p.cols) {
            let xv = &self.vals[xo..xo + p.cols];
            let s = dot(row, xv);
            self.vals.push(s);
        }
        self.finish(Op::MatVec(w, x), off)
    }

    /// `W x + b`.
    pub fn affine(&mut self, ps: &ParamStore, w: ParamId, b: ParamId, x: Var) -> Var {
        let wx = self.matvec(ps, w, x);
        let bv = self.param(ps, b);
        self.add(wx, bv)
    }

    fn zip(&mut self, op: Op, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Var {
        self.same_dim(a, b);
        let (ao, bo, n) = (self.nodes[a.0].off, self.nodes[b.0].off, self.nodes[a.0].len);
        let off = self.vals.len();
        for k in 0..n {
            let v = f(self.vals[ao + k], self.vals[bo + k]);
            self.vals.push(v);
        }
        self.finish(op, off)
    }

    fn map(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let (ao, n) = (self.nodes[a.0].off, self.nodes[a.0].len);
        let off = self.vals.len();
        for k in 0..n {
            let v = f(self.vals[ao + k]);
            self.vals.push(v);
        }
        self.finish(op, off)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Add(a, b), a, b, |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Sub(a, b), a, b, |x, y| x - y)
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Var {
        self.zip(Op::Hadamard(a, b), a, b, |x, y| x * y)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let off = self.vals.len();
        for p in parts {
            let r = self.nodes[p.0].off..self.nodes[p.0].off + self.nodes[p.0].len;
            self.vals.extend_from_within(r);
        }
        self.finish(Op::Concat(parts.to_vec()), off)
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        assert!(start + len <= self.dim(a), "slice out of range");
        let o = self.nodes[a.0].off + start;
        let off = self.vals.len();
        self.vals.extend_from_within(o..o + len);
        self.finish(Op::Slice(a, start), off)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(Op::Tanh(a), a, f64::tanh)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(Op::Sigmoid(a), a, sigmoid)
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        self.same_dim(a, b);
        let s = dot(self.value(a), self.value(b));
        self.push(Op::Dot(a, b), [s])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(Op::Scale(a, s), a, |x| x * s)
    }

    /// Mean squared difference to a constant target.
    pub fn mse(&mut self, pred: Var, target: &[f64]) -> Var {
        assert_eq!(self.dim(pred), target.len(), "shape mismatch in mse");
        let n = target.len() as f64;
        let s: f64 = self.value(pred).iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n;
        self.push(Op::Mse(pred, target.to_vec()), [s])
    }

    /// Binary cross-entropy of a probability against a 0/1 label.
    pub fn bce(&mut self, prob: Var, label: f64) -> Var {
        let p = self.scalar(prob).clamp(PROB_EPS, 1.0 - PROB_EPS);
        let l = -(label * p.ln() + (1.0 - label) * (1.0 - p).ln());
        self.push(Op::Bce(prob, label), [l])
    }

    /// `max(0, margin - x)` for a scalar `x`.
    pub fn hinge(&mut self, x: Var, margin: f64) -> Var {
        let v = (margin - self.scalar(x)).max(0.0);
        self.push(Op::Hinge(x, margin), [v])
    }

    /// Inverted dropout: zeroes each entry with probability `rate` and
    /// scales survivors by 1/(1-rate). Rate 0 returns `a` unchanged.
    pub fn dropout<R: Rng>(&mut self, a: Var, rate: f64, rng: &mut R) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must lie in [0, 1)");
        if rate == 0.0 {
            return a;
        }
        let keep = 1.0 / (1.0 - rate);
        let mask: Vec<f64> = (0..self.dim(a)).map(|_| if rng.gen_bool(rate) { 0.0 } else { keep }).collect();
        let vals: Vec<f64> = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        self.push(Op::Mask(a, mask), vals)
    }

    /// Reverse pass from a scalar `loss`, adding parameter gradients into
    /// `ps`. Adjoints of tape values are readable with [`Tape::grad`].
    pub fn backward(&mut self, loss: Var, ps: &mut ParamStore) {
        assert_eq!(self.dim(loss), 1, "backward needs a scalar loss");
        self.grads.clear();
        self.grads.resize(self.vals.len(), 0.0);
        self.grads[self.nodes[loss.0].off] = 1.0;
        for i in (0..=loss.0).rev() {
            let Node { op, off, len } = &self.nodes[i];
            let (off, len) = (*off, *len);
            let (lower, upper) = self.grads.split_at_mut(off);
            let g = &upper[..len];
            if g.iter().all(|x| *x == 0.0) {
                continue;
            }
            let vals = &self.vals;
            let out = &vals[off..off + len];
            let nodes = &self.nodes;
            let rg = |v: &Var| {
                let n = &nodes[v.0];
                n.off..n.off + n.len
            };
            match op {
                Op::Input => {}
                Op::Param(p) => {
                    for (a, b) in ps.get_mut(*p).grad.iter_mut().zip(g) {
                        *a += b;
                    }
                }
                Op::Column(w, j) => {
                    let p = ps.get_mut(*w);
                    let cols = p.cols;
                    for (r, b) in g.iter().enumerate() {
                        p.grad[r * cols + j] += b;
                    }
                }
                Op::ScaleParam(w, s) => {
                    for (a, b) in ps.get_mut(*w).grad.iter_mut().zip(g) {
                        *a += b * s;
                    }
                }
                Op::MatVec(w, x) => {
                    let rx = rg(x);
                    let xv = &vals[rx.clone()];
                    let p = ps.get_mut(*w);
                    let cols = p.cols;
                    let gx = &mut lower[rx];
                    let rows = p.value.chunks_exact(cols).zip(p.grad.chunks_exact_mut(cols));
                    for (gr, (row, grow)) in g.iter().zip(rows) {
                        if *gr == 0.0 {
                            continue;
                        }
                        for (gw, x) in grow.iter_mut().zip(xv) {
                            *gw += gr * x;
                        }
                        for (gxc, w) in gx.iter_mut().zip(row) {
                            *gxc += gr * w;
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(lower, rg(a), g, |_, g| g);
                    acc(lower, rg(b), g, |_, g| g);
                }
                Op::Sub(a, b) => {
                    acc(lower, rg(a), g, |_, g| g);
                    acc(lower, rg(b), g, |_, g| -g);
                }
                Op::Hadamard(a, b) => {
                    let (ra, rb) = (rg(a), rg(b));
                    let bv = &vals[rb.clone()];
                    let av = &vals[ra.clone()];
                    acc(lower, ra, g, |k, g| g * bv[k]);
                    acc(lower, rb, g, |k, g| g * av[k]);
                }
                Op::Concat(parts) => {
                    let mut k = 0;
                    for p in parts {
                        let r = rg(p);
                        let n = r.len();
                        acc(lower, r, &g[k..k + n], |_, g| g);
                        k += n;
                    }
                }
                Op::Slice(a, start) => {
                    let r = rg(a);
                    let s = r.start + start;
                    acc(lower, s..s + len, g, |_, g| g);
                }
                Op::Tanh(a) => acc(lower, rg(a), g, |k, g| g * (1.0 - out[k] * out[k])),
                Op::Sigmoid(a) => acc(lower, rg(a), g, |k, g| g * out[k] * (1.0 - out[k])),
                Op::Dot(a, b) => {
                    let (ra, rb) = (rg(a), rg(b));
                    let g0 = g[0];
                    let av = &vals[ra.clone()];
                    let bv = &vals[rb.clone()];
                    for k in 0..av.len() {
                        lower[ra.start + k] += bv[k] * g0;
                        lower[rb.start + k] += av[k] * g0;
                    }
                }
                Op::Scale(a, s) => acc(lower, rg(a), g, |_, g| g * s),
                Op::Mse(p, t) => {
                    let r = rg(p);
                    let pv = &vals[r.clone()];
                    let n = t.len() as f64;
                    let g0 = g[0];
                    for (k, (p, t)) in pv.iter().zip(t).enumerate() {
                        lower[r.start + k] += 2.0 * (p - t) / n * g0;
                    }
                }
                Op::Bce(p, y) => {
                    let r = rg(p);
                    let pr = vals[r.start].clamp(PROB_EPS, 1.0 - PROB_EPS);
                    let d = -y / pr + (1.0 - y) / (1.0 - pr);
                    let g0 = g[0];
                    acc(lower, r, &[d * g0], |_, g| g);
                }
                Op::Hinge(x, m) => {
                    let r = rg(x);
                    if m - vals[r.start] > 0.0 {
                        let g0 = g[0];
                        acc(lower, r, &[-g0], |_, g| g);
                    }
                }
                Op::Mask(a, mask) => acc(lower, rg(a), g, |k, g| g * mask[k]),
            }
        }
    }
}

fn acc(grads: &mut [f64], r: std::ops::Range<usize>, g: &[f64], f: impl Fn(usize, f64) -> f64) {
    for (k, (dst, gk)) in grads[r].iter_mut().zip(g).enumerate() {
        *dst += f(k, *gk);
    }
}

/// Dot product with four independent accumulators, so the loop is not
/// bound by the latency of a single running sum.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
