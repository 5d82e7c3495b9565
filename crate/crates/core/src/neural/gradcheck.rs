//! Central finite-difference checks of the analytic gradients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Graph, LstmParams, Mlp, ParamStore, Tensor, Var};
use crate::error::Result;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor, so gradients that are zero up to rounding compare as
/// absolute differences.
pub const FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

impl CheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// Spread-out entry indices, at most `max` of them.
fn sample(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        (0..len).collect()
    } else {
        (0..max).map(|k| k * len / max).collect()
    }
}

/// Compares backward() with finite differences for every input entry and up
/// to `max_per_param` entries of each parameter.
pub fn check<F>(name: &str, store: &mut ParamStore, inputs: &[Vec<f64>], max_per_param: usize, f: F) -> Result<CheckResult>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let eval = |store: &ParamStore, inputs: &[Vec<f64>]| -> Result<f64> {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(g.value(loss)[0])
    };

    let (input_grads, param_grads) = {
        let mut g = Graph::new(store);
        let vars: Vec<Var> = inputs.iter().map(|x| g.input(x.clone())).collect();
        let loss = f(&mut g, &vars)?;
        let grads = g.backward(loss)?;
        let ig: Vec<Vec<f64>> = vars
            .iter()
            .zip(inputs)
            .map(|(v, x)| grads.wrt(*v, x.len()))
            .collect();
        let pg: Vec<Vec<f64>> = store.ids().map(|id| grads.params.full(id)).collect();
        (ig, pg)
    };

    let mut worst: f64 = 0.0;
    let mut checked = 0;
    let mut work = inputs.to_vec();
    for (i, x) in inputs.iter().enumerate() {
        for k in 0..x.len() {
            work[i][k] = x[k] + STEP;
            let up = eval(store, &work)?;
            work[i][k] = x[k] - STEP;
            let down = eval(store, &work)?;
            work[i][k] = x[k];
            worst = worst.max(relative_error(input_grads[i][k], (up - down) / (2.0 * STEP)));
            checked += 1;
        }
    }
    for id in store.ids().collect::<Vec<_>>() {
        for k in sample(store.get(id).len(), max_per_param) {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + STEP;
            let up = eval(store, inputs)?;
            store.get_mut(id).data[k] = orig - STEP;
            let down = eval(store, inputs)?;
            store.get_mut(id).data[k] = orig;
            worst = worst.max(relative_error(param_grads[id.0][k], (up - down) / (2.0 * STEP)));
            checked += 1;
        }
    }
    Ok(CheckResult {
        name: name.to_owned(),
        checked,
        max_rel_error: worst,
    })
}

fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn random_tensor(rng: &mut impl Rng, rows: usize, cols: usize) -> Tensor {
    Tensor::from_vec(rows, cols, random_vec(rng, rows * cols)).unwrap()
}

/// A fixed linear read-out turning a vector into a scalar loss with
/// non-uniform gradients.
fn readout(g: &mut Graph, v: Var) -> Result<Var> {
    let d = g.dim(v);
    let w = g.input((0..d).map(|k| 0.3 + 0.17 * k as f64).collect());
    let m = g.mul(v, w)?;
    Ok(g.sum(m))
}

/// Checks every differentiable operation of the engine.
pub fn op_suite(seed: u64) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut run = |name: &str,
                   store: &mut ParamStore,
                   inputs: Vec<Vec<f64>>,
                   f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>|
     -> Result<()> {
        out.push(check(name, store, &inputs, 64, f)?);
        Ok(())
    };

    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&mut rng, 3, 4));
    let b = store.add("b", random_tensor(&mut rng, 3, 1));
    let table = store.add_table("table", random_tensor(&mut rng, 5, 3));
    let x4 = random_vec(&mut rng, 4);
    let a3 = random_vec(&mut rng, 3);
    let b3 = random_vec(&mut rng, 3);

    run("param", &mut store, vec![], &|g, _| {
        let p = g.param(b);
        readout(g, p)
    })?;
    run("lookup", &mut store, vec![], &|g, _| {
        let r = g.lookup(table, 2)?;
        let s = g.lookup(table, 2)?;
        let t = g.add(r, s)?;
        readout(g, t)
    })?;
    run("matvec", &mut store, vec![x4.clone()], &|g, v| {
        let y = g.matvec(w, v[0])?;
        readout(g, y)
    })?;
    run("affine", &mut store, vec![x4.clone()], &|g, v| {
        let y = g.affine(w, v[0], b)?;
        readout(g, y)
    })?;
    run("add", &mut store, vec![a3.clone(), b3.clone()], &|g, v| {
        let y = g.add(v[0], v[1])?;
        readout(g, y)
    })?;
    run("sub", &mut store, vec![a3.clone(), b3.clone()], &|g, v| {
        let y = g.sub(v[0], v[1])?;
        readout(g, y)
    })?;
    run("mul", &mut store, vec![a3.clone(), b3.clone()], &|g, v| {
        let y = g.mul(v[0], v[1])?;
        readout(g, y)
    })?;
    run("scale", &mut store, vec![a3.clone()], &|g, v| {
        let y = g.scale(v[0], -2.5);
        readout(g, y)
    })?;
    run("tanh", &mut store, vec![a3.clone()], &|g, v| {
        let y = g.tanh(v[0]);
        readout(g, y)
    })?;
    run("sigmoid", &mut store, vec![a3.clone()], &|g, v| {
        let y = g.sigmoid(v[0]);
        readout(g, y)
    })?;
    run("concat", &mut store, vec![a3.clone(), x4.clone()], &|g, v| {
        let y = g.concat(&[v[0], v[1]])?;
        readout(g, y)
    })?;
    run("slice", &mut store, vec![x4.clone()], &|g, v| {
        let y = g.slice(v[0], 1, 2)?;
        readout(g, y)
    })?;
    run("sum", &mut store, vec![a3.clone()], &|g, v| {
        let y = g.tanh(v[0]);
        Ok(g.sum(y))
    })?;
    run("add_n", &mut store, vec![a3.clone(), b3.clone()], &|g, v| {
        let y = g.add_n(&[v[0], v[1], v[0]])?;
        readout(g, y)
    })?;
    run("pick", &mut store, vec![a3.clone()], &|g, v| {
        let y = g.tanh(v[0]);
        g.pick(y, 1)
    })?;
    // inputs keep the hinge well inside its active region
    run("hinge", &mut store, vec![vec![0.2], vec![0.4]], &|g, v| {
        let a = g.tanh(v[0]);
        g.hinge(a, v[1], 1.0)
    })?;
    run("softmax_ce", &mut store, vec![x4.clone()], &|g, v| g.softmax_ce(v[0], 2))?;

    let mut lstm_store = ParamStore::new();
    let lstm = LstmParams::new(&mut lstm_store, "lstm", 3, 2, &mut rng);
    for id in lstm_store.ids().collect::<Vec<_>>() {
        for x in &mut lstm_store.get_mut(id).data {
            *x += rng.gen_range(-0.3..0.3);
        }
    }
    let seq: Vec<Vec<f64>> = (0..3).map(|_| random_vec(&mut rng, 3)).collect();
    run("lstm_cell", &mut lstm_store, vec![seq[0].clone(), vec![0.3, -0.2], vec![0.5, 0.1]], &|g, v| {
        let y = g.lstm_cell(lstm.wx, lstm.wh, lstm.b, v[0], v[1], v[2])?;
        readout(g, y)
    })?;
    run("lstm_3_steps", &mut lstm_store, seq.clone(), &|g, v| {
        let hs = lstm.run(g, v)?;
        let all = g.concat(&hs)?;
        readout(g, all)
    })?;

    let mut mlp_store = ParamStore::new();
    let mlp = Mlp::new(&mut mlp_store, "mlp", 4, 3, 5, &mut rng);
    run("mlp_softmax_ce", &mut mlp_store, vec![x4], &|g, v| {
        let s = mlp.forward(g, v[0])?;
        g.softmax_ce(s, 3)
    })?;
    Ok(out)
}
