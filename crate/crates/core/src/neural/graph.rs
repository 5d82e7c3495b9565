use std::collections::BTreeMap;

use super::{ParamId, ParamStore, Tensor};
use crate::error::{Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(ParamId),
    Lookup(ParamId, usize),
    MatVec { w: ParamId, x: Var },
    Affine { w: ParamId, b: ParamId, x: Var },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Tanh(Var),
    Sigmoid(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    Sum(Var),
    AddN(Vec<Var>),
    Pick(Var, usize),
    Hinge { good: Var, bad: Var },
    SoftmaxCe(Var, usize),
    LstmCell {
        wx: ParamId,
        wh: ParamId,
        b: ParamId,
        x: Var,
        h: Var,
        c: Var,
    },
}

#[derive(Clone, Debug)]
struct Node {
    value: Vec<f64>,
    op: Op,
    /// Saved forward quantities some ops need for their backward rule.
    aux: Vec<f64>,
}

/// The tape: nodes in creation order over a borrowed parameter store.
pub struct Graph<'p> {
    store: &'p ParamStore,
    nodes: Vec<Node>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn matvec_into(w: &Tensor, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = w.row(r);
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// dW += g ⊗ x and dx += Wᵀ g.
fn matvec_backward(w: &Tensor, x: &[f64], g: &[f64], dw: &mut [f64], dx: &mut [f64]) {
    let cols = w.cols;
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = w.row(r);
        let drow = &mut dw[r * cols..(r + 1) * cols];
        for c in 0..cols {
            drow[c] += gr * x[c];
            dx[c] += gr * row[c];
        }
    }
}

impl<'p> Graph<'p> {
    pub fn new(store: &'p ParamStore) -> Self {
        Graph {
            store,
            nodes: Vec::new(),
        }
    }

    pub fn store(&self) -> &'p ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dim(&self, v: Var) -> usize {
        self.nodes[v.0].value.len()
    }

    fn push(&mut self, value: Vec<f64>, op: Op) -> Var {
        self.push_aux(value, op, Vec::new())
    }

    fn push_aux(&mut self, value: Vec<f64>, op: Op, aux: Vec<f64>) -> Var {
        self.nodes.push(Node { value, op, aux });
        Var(self.nodes.len() - 1)
    }

    fn check(&self, cond: bool, what: &str) -> Result<()> {
        if cond {
            Ok(())
        } else {
            Err(Error::contract(format!("shape mismatch in {what}")))
        }
    }

    /// A constant; gradients still flow into it and can be read back.
    pub fn input(&mut self, value: Vec<f64>) -> Var {
        self.push(value, Op::Input)
    }

    pub fn zeros(&mut self, len: usize) -> Var {
        self.input(vec![0.0; len])
    }

    /// The whole parameter, flattened.
    pub fn param(&mut self, id: ParamId) -> Var {
        let value = self.store.get(id).data.clone();
        self.push(value, Op::Param(id))
    }

    pub fn lookup(&mut self, id: ParamId, row: usize) -> Result<Var> {
        let t = self.store.get(id);
        self.check(row < t.rows, "lookup")?;
        let value = t.row(row).to_vec();
        Ok(self.push(value, Op::Lookup(id, row)))
    }

    pub fn matvec(&mut self, w: ParamId, x: Var) -> Result<Var> {
        let wt = self.store.get(w);
        self.check(wt.cols == self.dim(x), "matvec")?;
        let mut out = vec![0.0; wt.rows];
        matvec_into(wt, self.value(x), &mut out);
        Ok(self.push(out, Op::MatVec { w, x }))
    }

    /// W x + b.
    pub fn affine(&mut self, w: ParamId, x: Var, b: ParamId) -> Result<Var> {
        let wt = self.store.get(w);
        let bt = self.store.get(b);
        self.check(wt.cols == self.dim(x) && bt.len() == wt.rows, "affine")?;
        let mut out = bt.data.clone();
        matvec_into(wt, self.value(x), &mut out);
        Ok(self.push(out, Op::Affine { w, b, x }))
    }

    fn zip(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        self.check(self.dim(a) == self.dim(b), what)?;
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| f(*x, *y))
            .collect();
        Ok(self.push(value, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * k).collect();
        self.push(value, Op::Scale(a, k))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(value, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|&x| sigmoid(x)).collect();
        self.push(value, Op::Sigmoid(a))
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        self.check(!parts.is_empty(), "concat")?;
        let mut value = Vec::with_capacity(parts.iter().map(|p| self.dim(*p)).sum());
        for p in parts {
            value.extend_from_slice(self.value(*p));
        }
        Ok(self.push(value, Op::Concat(parts.to_vec())))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        self.check(start + len <= self.dim(a), "slice")?;
        let value = self.value(a)[start..start + len].to_vec();
        Ok(self.push(value, Op::Slice(a, start)))
    }

    /// Sum of all entries, as a scalar.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![s], Op::Sum(a))
    }

    /// Elementwise sum of equally sized nodes.
    pub fn add_n(&mut self, parts: &[Var]) -> Result<Var> {
        self.check(!parts.is_empty(), "add_n")?;
        let d = self.dim(parts[0]);
        self.check(parts.iter().all(|p| self.dim(*p) == d), "add_n")?;
        let mut value = vec![0.0; d];
        for p in parts {
            for (o, x) in value.iter_mut().zip(self.value(*p)) {
                *o += x;
            }
        }
        Ok(self.push(value, Op::AddN(parts.to_vec())))
    }

    pub fn pick(&mut self, a: Var, i: usize) -> Result<Var> {
        self.check(i < self.dim(a), "pick")?;
        let x = self.value(a)[i];
        Ok(self.push(vec![x], Op::Pick(a, i)))
    }

    /// max(0, margin - good + bad) over two scalars.
    pub fn hinge(&mut self, good: Var, bad: Var, margin: f64) -> Result<Var> {
        self.check(self.dim(good) == 1 && self.dim(bad) == 1, "hinge")?;
        let x = (margin - self.value(good)[0] + self.value(bad)[0]).max(0.0);
        Ok(self.push(vec![x], Op::Hinge { good, bad }))
    }

    /// Negative log-likelihood of `target` under softmax(scores).
    pub fn softmax_ce(&mut self, scores: Var, target: usize) -> Result<Var> {
        self.check(target < self.dim(scores), "softmax_ce")?;
        let s = self.value(scores);
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = s.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        let loss = z.ln() + max - s[target];
        let probs = exps.into_iter().map(|e| e / z).collect();
        Ok(self.push_aux(vec![loss], Op::SoftmaxCe(scores, target), probs))
    }

    /// One LSTM step. The result holds the new hidden state followed by the
    /// new cell state. Gate rows are ordered input, forget, candidate, output.
    pub fn lstm_cell(&mut self, wx: ParamId, wh: ParamId, b: ParamId, x: Var, h: Var, c: Var) -> Result<Var> {
        let (wxt, wht, bt) = (self.store.get(wx), self.store.get(wh), self.store.get(b));
        let hidden = wht.cols;
        self.check(
            wxt.rows == 4 * hidden
                && wht.rows == 4 * hidden
                && bt.len() == 4 * hidden
                && wxt.cols == self.dim(x)
                && self.dim(h) == hidden
                && self.dim(c) == hidden,
            "lstm_cell",
        )?;
        let mut z = bt.data.clone();
        matvec_into(wxt, self.value(x), &mut z);
        matvec_into(wht, self.value(h), &mut z);
        let mut aux = vec![0.0; 5 * hidden];
        let mut value = vec![0.0; 2 * hidden];
        let c_prev = self.value(c);
        for k in 0..hidden {
            let i = sigmoid(z[k]);
            let f = sigmoid(z[hidden + k]);
            let g = z[2 * hidden + k].tanh();
            let o = sigmoid(z[3 * hidden + k]);
            let c_new = f * c_prev[k] + i * g;
            let tc = c_new.tanh();
            value[k] = o * tc;
            value[hidden + k] = c_new;
            aux[k] = i;
            aux[hidden + k] = f;
            aux[2 * hidden + k] = g;
            aux[3 * hidden + k] = o;
            aux[4 * hidden + k] = tc;
        }
        Ok(self.push_aux(value, Op::LstmCell { wx, wh, b, x, h, c }, aux))
    }

    /// Reverse pass from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.dim(loss) != 1 {
            return Err(Error::contract("backward needs a scalar loss"));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Vec<f64>> = vec![Vec::new(); n];
        grads[loss.0] = vec![1.0];
        let mut pg = ParamGrads::new(self.store);

        for i in (0..n).rev() {
            if grads[i].is_empty() {
                continue;
            }
            let node = &self.nodes[i];
            if matches!(node.op, Op::Input) {
                continue;
            }
            let g = std::mem::take(&mut grads[i]);
            self.backward_node(node, &g, &mut grads, &mut pg);
            grads[i] = g;
        }
        Ok(Gradients { nodes: grads, params: pg })
    }

    fn backward_node(&self, node: &Node, g: &[f64], grads: &mut [Vec<f64>], pg: &mut ParamGrads) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Input => {}
            Op::Param(id) => add_into(pg.dense(*id), g),
            Op::Lookup(id, row) => add_into(pg.row(*id, *row), g),
            Op::MatVec { w, x } => {
                let wt = self.store.get(*w);
                let xv = &nodes[x.0].value;
                let dw = pg.dense(*w);
                let dx = acc(grads, nodes, *x);
                matvec_backward(wt, xv, g, dw, dx);
            }
            Op::Affine { w, b, x } => {
                add_into(pg.dense(*b), g);
                let wt = self.store.get(*w);
                let xv = &nodes[x.0].value;
                let dw = pg.dense(*w);
                let dx = acc(grads, nodes, *x);
                matvec_backward(wt, xv, g, dw, dx);
            }
            Op::Add(a, b) => {
                add_into(acc(grads, nodes, *a), g);
                add_into(acc(grads, nodes, *b), g);
            }
            Op::Sub(a, b) => {
                add_into(acc(grads, nodes, *a), g);
                for (d, x) in acc(grads, nodes, *b).iter_mut().zip(g) {
                    *d -= x;
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&nodes[a.0].value, &nodes[b.0].value);
                for (k, d) in acc(grads, nodes, *a).iter_mut().enumerate() {
                    *d += g[k] * bv[k];
                }
                for (k, d) in acc(grads, nodes, *b).iter_mut().enumerate() {
                    *d += g[k] * av[k];
                }
            }
            Op::Scale(a, s) => {
                for (d, x) in acc(grads, nodes, *a).iter_mut().zip(g) {
                    *d += s * x;
                }
            }
            Op::Tanh(a) => {
                for ((d, x), y) in acc(grads, nodes, *a).iter_mut().zip(g).zip(&node.value) {
                    *d += x * (1.0 - y * y);
                }
            }
            Op::Sigmoid(a) => {
                for ((d, x), y) in acc(grads, nodes, *a).iter_mut().zip(g).zip(&node.value) {
                    *d += x * y * (1.0 - y);
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    add_into(acc(grads, nodes, *p), &g[off..off + len]);
                    off += len;
                }
            }
            Op::Slice(a, start) => {
                let d = acc(grads, nodes, *a);
                add_into(&mut d[*start..*start + g.len()], g);
            }
            Op::Sum(a) => {
                for d in acc(grads, nodes, *a).iter_mut() {
                    *d += g[0];
                }
            }
            Op::AddN(parts) => {
                for p in parts {
                    add_into(acc(grads, nodes, *p), g);
                }
            }
            Op::Pick(a, i) => acc(grads, nodes, *a)[*i] += g[0],
            Op::Hinge { good, bad, .. } => {
                if node.value[0] > 0.0 {
                    acc(grads, nodes, *good)[0] -= g[0];
                    acc(grads, nodes, *bad)[0] += g[0];
                }
            }
            Op::SoftmaxCe(s, target) => {
                let d = acc(grads, nodes, *s);
                for (k, p) in node.aux.iter().enumerate() {
                    d[k] += g[0] * (p - if k == *target { 1.0 } else { 0.0 });
                }
            }
            Op::LstmCell { wx, wh, b, x, h, c } => {
                let hidden = node.value.len() / 2;
                let aux = &node.aux;
                let c_prev = &nodes[c.0].value;
                let mut dz = vec![0.0; 4 * hidden];
                let mut dc_prev = vec![0.0; hidden];
                for k in 0..hidden {
                    let (i, f, gg, o, tc) = (
                        aux[k],
                        aux[hidden + k],
                        aux[2 * hidden + k],
                        aux[3 * hidden + k],
                        aux[4 * hidden + k],
                    );
                    let dh = g[k];
                    let dc = g[hidden + k] + dh * o * (1.0 - tc * tc);
                    dz[k] = dc * gg * i * (1.0 - i);
                    dz[hidden + k] = dc * c_prev[k] * f * (1.0 - f);
                    dz[2 * hidden + k] = dc * i * (1.0 - gg * gg);
                    dz[3 * hidden + k] = dh * tc * o * (1.0 - o);
                    dc_prev[k] = dc * f;
                }
                add_into(acc(grads, nodes, *c), &dc_prev);
                add_into(pg.dense(*b), &dz);
                let xv = &nodes[x.0].value;
                matvec_backward(self.store.get(*wx), xv, &dz, pg.dense(*wx), acc(grads, nodes, *x));
                let hv = &nodes[h.0].value;
                matvec_backward(self.store.get(*wh), hv, &dz, pg.dense(*wh), acc(grads, nodes, *h));
            }
        }
    }
}

fn acc<'a>(grads: &'a mut [Vec<f64>], nodes: &[Node], v: Var) -> &'a mut [f64] {
    let slot = &mut grads[v.0];
    if slot.is_empty() {
        *slot = vec![0.0; nodes[v.0].value.len()];
    }
    slot
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Parameter gradients: dense buffers, plus per-row buffers for lookups.
#[derive(Clone, Debug, Default)]
pub struct ParamGrads {
    shapes: Vec<(usize, usize)>,
    dense: Vec<Vec<f64>>,
    rows: Vec<BTreeMap<usize, Vec<f64>>>,
}

impl ParamGrads {
    pub fn new(store: &ParamStore) -> Self {
        let shapes: Vec<_> = store.iter().map(|p| (p.value.rows, p.value.cols)).collect();
        ParamGrads {
            dense: vec![Vec::new(); shapes.len()],
            rows: vec![BTreeMap::new(); shapes.len()],
            shapes,
        }
    }

    fn dense(&mut self, id: ParamId) -> &mut [f64] {
        let slot = &mut self.dense[id.0];
        if slot.is_empty() {
            let (r, c) = self.shapes[id.0];
            *slot = vec![0.0; r * c];
        }
        slot
    }

    fn row(&mut self, id: ParamId, row: usize) -> &mut [f64] {
        let cols = self.shapes[id.0].1;
        self.rows[id.0].entry(row).or_insert_with(|| vec![0.0; cols])
    }

    /// Dense gradient, if the parameter was used as a whole.
    pub fn dense_grad(&self, id: ParamId) -> Option<&[f64]> {
        let d = &self.dense[id.0];
        (!d.is_empty()).then_some(d.as_slice())
    }

    pub fn row_grads(&self, id: ParamId) -> &BTreeMap<usize, Vec<f64>> {
        &self.rows[id.0]
    }

    /// Full gradient of one parameter, combining both kinds.
    pub fn full(&self, id: ParamId) -> Vec<f64> {
        let (r, c) = self.shapes[id.0];
        let mut out = self.dense_grad(id).map_or_else(|| vec![0.0; r * c], <[f64]>::to_vec);
        for (row, g) in &self.rows[id.0] {
            add_into(&mut out[row * c..(row + 1) * c], g);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }
}

pub struct Gradients {
    nodes: Vec<Vec<f64>>,
    pub params: ParamGrads,
}

impl Gradients {
    /// Gradient with respect to a node (zeros when it did not affect the loss).
    pub fn wrt(&self, v: Var, dim: usize) -> Vec<f64> {
        match self.nodes.get(v.0) {
            Some(g) if !g.is_empty() => g.clone(),
            _ => vec![0.0; dim],
        }
    }
}
