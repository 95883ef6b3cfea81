//! Amortised Gaussian posterior over the latent grammar vector.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{embed, Linear, Lstm};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

/// biLSTM over word embeddings, max-pooled, with linear mean and
/// log-variance heads.
#[derive(Clone, Debug)]
pub struct PosteriorParams {
    pub embed: ParamId,
    pub forward: Lstm,
    pub backward: Lstm,
    pub mu: Linear,
    pub logvar: Linear,
}

impl PosteriorParams {
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        embed: ParamId,
        word_dim: usize,
        hidden: usize,
        z_dim: usize,
    ) -> Result<Self> {
        Ok(PosteriorParams {
            embed,
            forward: Lstm::register(store, rng, "posterior.lstm_fwd", word_dim, hidden)?,
            backward: Lstm::register(store, rng, "posterior.lstm_bwd", word_dim, hidden)?,
            mu: Linear::register(store, rng, "posterior.mu", 2 * hidden, z_dim, true)?,
            logvar: Linear::register(store, rng, "posterior.logvar", 2 * hidden, z_dim, true)?,
        })
    }
}

pub(crate) fn check_batch(tokens: &[&[usize]]) -> Result<usize> {
    let n = tokens.first().map(|t| t.len()).unwrap_or(0);
    if tokens.is_empty() || tokens.iter().any(|t| t.len() != n) {
        return Err(Error::Invalid("batch must be non-empty with equal lengths".into()));
    }
    if n < 2 {
        return Err(Error::Invalid(format!("sentence length {n} is below 2")));
    }
    Ok(n)
}

/// `(mu, logvar)`, each `[batch, z]`, for a batch of equal-length sentences.
pub fn encode_posterior(g: &mut Graph, p: &PosteriorParams, tokens: &[&[usize]]) -> Result<(Var, Var)> {
    let n = check_batch(tokens)?;
    let inputs = (0..n)
        .map(|t| {
            let ids: Vec<usize> = tokens.iter().map(|s| s[t]).collect();
            embed(g, p.embed, &ids)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut fwd = Vec::with_capacity(n);
    let mut state = None;
    for &x in &inputs {
        let s = p.forward.step(g, x, state)?;
        fwd.push(s.h);
        state = Some(s);
    }
    let mut bwd = vec![None; n];
    let mut state = None;
    for t in (0..n).rev() {
        let s = p.backward.step(g, inputs[t], state)?;
        bwd[t] = Some(s.h);
        state = Some(s);
    }
    let states = fwd
        .iter()
        .zip(bwd)
        .map(|(&f, b)| g.concat_cols(&[f, b.expect("filled above")]))
        .collect::<Result<Vec<_>>>()?;
    let pooled = g.max_pool(&states)?;
    let mu = p.mu.forward(g, pooled)?;
    let logvar = p.logvar.forward(g, pooled)?;
    Ok((mu, logvar))
}

/// Standard normal noise of shape `[rows, dim]`.
pub fn draw_noise(rng: &mut ChaCha8Rng, rows: usize, dim: usize) -> Tensor {
    let data = (0..rows * dim).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::new(vec![rows, dim], data).expect("shape matches length")
}

/// Reparameterised sample `mu + exp(logvar / 2) ∘ eps`.
pub fn sample_z(g: &mut Graph, mu: Var, logvar: Var, eps: Tensor) -> Result<Var> {
    let half = g.scale(logvar, 0.5)?;
    let sd = g.exp(half)?;
    let eps = g.constant(eps);
    let noise = g.mul(sd, eps)?;
    g.add(mu, noise)
}

/// Per-row KL divergence from the standard normal prior: `[batch]`.
pub fn kl_divergence(g: &mut Graph, mu: Var, logvar: Var) -> Result<Var> {
    let mu2 = g.mul(mu, mu)?;
    let var = g.exp(logvar)?;
    let a = g.add(mu2, var)?;
    let b = g.sub(a, logvar)?;
    let c = g.add_scalar(b, -1.0)?;
    let per = g.row_sums(c)?;
    g.scale(per, 0.5)
}

/// Closed-form KL for a single diagonal Gaussian against the standard normal.
pub fn kl_closed_form(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - lv - 1.0)
        .sum::<f64>()
}
