use rand::Rng;

use super::{Graph, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LstmParams {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, name: &str, input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let gates = 4 * hidden_size;
        let wx = Tensor::glorot(gates, input_size, input_size, gates, rng);
        let wh = Tensor::glorot(gates, hidden_size, hidden_size, gates, rng);
        let mut b = Tensor::zeros(gates, 1);
        for v in &mut b.data[hidden_size..2 * hidden_size] {
            *v = 1.0;
        }
        LstmParams {
            wx: store.add(&format!("{name}.wx"), wx),
            wh: store.add(&format!("{name}.wh"), wh),
            b: store.add(&format!("{name}.b"), b),
            input_size,
            hidden_size,
        }
    }

    pub fn step(&self, g: &mut Graph, x: Var, h: Var, c: Var) -> Result<(Var, Var)> {
        let cell = g.lstm_cell(self.wx, self.wh, self.b, x, h, c)?;
        let h = g.slice(cell, 0, self.hidden_size)?;
        let c = g.slice(cell, self.hidden_size, self.hidden_size)?;
        Ok((h, c))
    }

    /// Hidden states after each input, starting from zero state.
    pub fn run<'a>(&self, g: &mut Graph, xs: impl IntoIterator<Item = &'a Var>) -> Result<Vec<Var>> {
        let mut h = g.zeros(self.hidden_size);
        let mut c = g.zeros(self.hidden_size);
        let mut out = Vec::new();
        for &x in xs {
            (h, c) = self.step(g, x, h, c)?;
            out.push(h);
        }
        if out.is_empty() {
            return Err(Error::Empty("lstm input sequence".into()));
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BiLstm {
    pub fwd: LstmParams,
    pub bwd: LstmParams,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input_size: usize,
        fwd_hidden: usize,
        bwd_hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        BiLstm {
            fwd: LstmParams::new(store, &format!("{name}.fwd"), input_size, fwd_hidden, rng),
            bwd: LstmParams::new(store, &format!("{name}.bwd"), input_size, bwd_hidden, rng),
        }
    }

    pub fn output_size(&self) -> usize {
        self.fwd.hidden_size + self.bwd.hidden_size
    }

    /// Per position: forward state at i concatenated with backward state at i.
    pub fn run(&self, g: &mut Graph, xs: &[Var]) -> Result<Vec<Var>> {
        let f = self.fwd.run(g, xs)?;
        let mut b = self.bwd.run(g, xs.iter().rev())?;
        b.reverse();
        f.iter().zip(&b).map(|(&f, &b)| g.concat(&[f, b])).collect()
    }

    /// Final forward state concatenated with final backward state.
    pub fn final_states(&self, g: &mut Graph, xs: &[Var]) -> Result<Var> {
        let f = self.fwd.run(g, xs)?;
        let b = self.bwd.run(g, xs.iter().rev())?;
        g.concat(&[*f.last().unwrap(), *b.last().unwrap()])
    }
}

/// BiLSTM layers, each reading the previous layer's outputs.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackedBiLstm {
    pub layers: Vec<BiLstm>,
}

impl StackedBiLstm {
    pub fn new(store: &mut ParamStore, name: &str, input_size: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> Self {
        let mut out = Vec::with_capacity(layers);
        let mut size = input_size;
        for l in 0..layers {
            out.push(BiLstm::new(store, &format!("{name}.{l}"), size, hidden, hidden, rng));
            size = 2 * hidden;
        }
        StackedBiLstm { layers: out }
    }

    pub fn run(&self, g: &mut Graph, xs: &[Var]) -> Result<Vec<Var>> {
        let mut cur = xs.to_vec();
        for layer in &self.layers {
            cur = layer.run(g, &cur)?;
        }
        Ok(cur)
    }
}

/// One tanh hidden layer followed by a linear output layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, output: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            w1: store.add(&format!("{name}.w1"), Tensor::glorot(hidden, input, input, hidden, rng)),
            b1: store.add(&format!("{name}.b1"), Tensor::zeros(hidden, 1)),
            w2: store.add(&format!("{name}.w2"), Tensor::glorot(output, hidden, hidden, output, rng)),
            b2: store.add(&format!("{name}.b2"), Tensor::zeros(output, 1)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.affine(self.w1, x, self.b1)?;
        let h = g.tanh(h);
        g.affine(self.w2, h, self.b2)
    }
}
