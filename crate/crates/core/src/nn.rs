//! Layers shared by the grammar, posterior and grounding networks.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// Xavier/Glorot uniform initialisation.
pub fn xavier(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize, fan_out: usize) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches length")
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        bias: bool,
    ) -> Result<Self> {
        let w = store.add(format!("{name}.w"), xavier(rng, &[fan_in, fan_out], fan_in, fan_out))?;
        let b = if bias {
            Some(store.add(format!("{name}.b"), Tensor::zeros(&[fan_out]))?)
        } else {
            None
        };
        Ok(Linear { w, b })
    }

    /// `x: [rows, fan_in] -> [rows, fan_out]`.
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let w = g.param(self.w);
        let y = g.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => Ok(y),
        }
    }
}

/// Linear input layer, two ReLU layers, linear output layer.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub input: Linear,
    pub hidden: [Linear; 2],
    pub output: Linear,
}

impl Mlp {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        fan_in: usize,
        hidden: usize,
        fan_out: usize,
    ) -> Result<Self> {
        Ok(Mlp {
            input: Linear::register(store, rng, &format!("{name}.in"), fan_in, hidden, true)?,
            hidden: [
                Linear::register(store, rng, &format!("{name}.h1"), hidden, hidden, true)?,
                Linear::register(store, rng, &format!("{name}.h2"), hidden, hidden, true)?,
            ],
            output: Linear::register(store, rng, &format!("{name}.out"), hidden, fan_out, true)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = self.input.forward(g, x)?;
        for layer in &self.hidden {
            let a = layer.forward(g, h)?;
            h = g.relu(a)?;
        }
        self.output.forward(g, h)
    }
}

/// Single-layer LSTM cell with gates packed as `[input, forget, cell, output]`.
#[derive(Clone, Debug)]
pub struct Lstm {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl Lstm {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        let g4 = 4 * hidden;
        Ok(Lstm {
            wx: store.add(format!("{name}.wx"), xavier(rng, &[input, g4], input, g4))?,
            wh: store.add(format!("{name}.wh"), xavier(rng, &[hidden, g4], hidden, g4))?,
            b: store.add(format!("{name}.b"), Tensor::zeros(&[g4]))?,
            hidden,
        })
    }

    /// One step over `x: [rows, input]`. `prev` may have more rows than `x`;
    /// only its first `rows` rows are used. `None` is the zero state.
    pub fn step(&self, g: &mut Graph, x: Var, prev: Option<LstmState>) -> Result<LstmState> {
        let rows = g.shape(x)[0];
        let h = self.hidden;
        let wx = g.param(self.wx);
        let mut gates = g.matmul(x, wx)?;
        let prev = match prev {
            Some(p) if g.shape(p.h)[0] != rows => Some(LstmState {
                h: take_rows(g, p.h, 0, rows)?,
                c: take_rows(g, p.c, 0, rows)?,
            }),
            other => other,
        };
        if let Some(p) = prev {
            let wh = g.param(self.wh);
            let rec = g.matmul(p.h, wh)?;
            gates = g.add(gates, rec)?;
        }
        let b = g.param(self.b);
        let gates = g.add_row(gates, b)?;
        let i = g.slice_cols(gates, 0, h)?;
        let i = g.sigmoid(i)?;
        let f = g.slice_cols(gates, h, 2 * h)?;
        let f = g.sigmoid(f)?;
        let cand = g.slice_cols(gates, 2 * h, 3 * h)?;
        let cand = g.tanh(cand)?;
        let o = g.slice_cols(gates, 3 * h, 4 * h)?;
        let o = g.sigmoid(o)?;
        let mut c = g.mul(i, cand)?;
        if let Some(p) = prev {
            let keep = g.mul(f, p.c)?;
            c = g.add(c, keep)?;
        }
        let tc = g.tanh(c)?;
        let h = g.mul(o, tc)?;
        Ok(LstmState { h, c })
    }
}

/// Rows `start..start + count` of a matrix.
pub fn take_rows(g: &mut Graph, x: Var, start: usize, count: usize) -> Result<Var> {
    let rows: Vec<usize> = (start..start + count).collect();
    g.gather_rows(x, &rows)
}

/// Embedding lookup: `[len(ids), dim]`.
pub fn embed(g: &mut Graph, table: ParamId, ids: &[usize]) -> Result<Var> {
    let t = g.param(table);
    g.gather_rows(t, ids)
}
