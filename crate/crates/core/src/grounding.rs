//! Scene and span encoders and the contrastive matching objective.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::eligible_spans;
use crate::nn::{embed, Linear, Lstm, LstmState};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeStrategy {
    /// Average the hinge over every non-matching pair in the batch.
    InBatchAll,
    /// One randomly chosen non-matching pair per positive.
    SingleSampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchConfig {
    pub epsilon: f64,
    pub negative_strategy: NegativeStrategy,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            epsilon: 0.5,
            negative_strategy: NegativeStrategy::InBatchAll,
            alpha1: 1.0,
            alpha2: 1.0,
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !(self.alpha1 >= 0.0) || !(self.alpha2 >= 0.0) {
            return Err(Error::Invalid("margin must be positive and loss weights non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GroundingParams {
    pub embed: ParamId,
    pub forward: Lstm,
    pub backward: Lstm,
    pub project: Linear,
    pub scene_hidden: Linear,
    pub scene_out: Linear,
}

impl GroundingParams {
    #[allow(clippy::too_many_arguments)]
    pub fn register(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        embed: ParamId,
        word_dim: usize,
        hidden: usize,
        sem_dim: usize,
        scene_dim: usize,
        scene_hidden: usize,
    ) -> Result<Self> {
        Ok(GroundingParams {
            embed,
            forward: Lstm::register(store, rng, "grounding.lstm_fwd", word_dim, hidden)?,
            backward: Lstm::register(store, rng, "grounding.lstm_bwd", word_dim, hidden)?,
            project: Linear::register(store, rng, "grounding.project", 2 * hidden, sem_dim, true)?,
            scene_hidden: Linear::register(store, rng, "grounding.scene_hidden", scene_dim, scene_hidden, true)?,
            scene_out: Linear::register(store, rng, "grounding.scene_out", scene_hidden, sem_dim, true)?,
        })
    }
}

/// `f_m`: one hidden ReLU layer then L2 normalisation. `v: [B, scene_dim]`.
pub fn encode_scene(g: &mut Graph, p: &GroundingParams, v: Var) -> Result<Var> {
    let h = p.scene_hidden.forward(g, v)?;
    let h = g.relu(h)?;
    let m = p.scene_out.forward(g, h)?;
    g.l2_normalize_rows(m)
}

/// Unit-norm encodings of every eligible span and of each whole caption.
#[derive(Clone, Copy, Debug)]
pub struct SpanEncodings {
    /// `[E·B, sem]`, row `e·B + b` with `e` in eligible-span order; `None`
    /// when spans were not requested or there are none.
    pub spans: Option<Var>,
    /// `[B, sem]`
    pub caption: Var,
    pub n_spans: usize,
    pub batch: usize,
}

/// Encode all spans of a batch of equal-length sentences.
///
/// Each span is read by its own biLSTM pass, independent of the words around
/// it. Spans sharing a start share the forward prefix, and spans sharing an
/// end share the backward prefix, so one sweep per direction over the batch
/// yields every span: after step `t` the forward row `(i, b)` has read words
/// `i..=i+t`, and the backward row keyed by end `r` has read `r-t..=r`.
pub fn encode_spans(g: &mut Graph, p: &GroundingParams, tokens: &[&[usize]], with_spans: bool) -> Result<SpanEncodings> {
    let n = crate::inference::posterior::check_batch(tokens)?;
    let bsz = tokens.len();
    let widths: Vec<usize> = if with_spans { (2..=n).collect() } else { vec![n] };
    let max_w = *widths.last().unwrap();

    let mut fwd: Vec<LstmState> = Vec::with_capacity(max_w);
    let mut bwd: Vec<LstmState> = Vec::with_capacity(max_w);
    let mut state_f = None;
    let mut state_b = None;
    for t in 0..max_w {
        let rows = n - t;
        // Forward: row (i, b) reads word i + t.
        let ids_f: Vec<usize> = (0..rows).flat_map(|i| tokens.iter().map(move |s| s[i + t])).collect();
        let x = embed(g, p.embed, &ids_f)?;
        let sf = p.forward.step(g, x, state_f)?;
        // Backward: row keyed by end r = i + t reads word r - t = i, where the
        // previous step's row for the same end sits B rows further down.
        let ids_b: Vec<usize> = (0..rows).flat_map(|i| tokens.iter().map(move |s| s[i])).collect();
        let x = embed(g, p.embed, &ids_b)?;
        let prev_b = match state_b {
            Some(LstmState { h, c }) => {
                let keep: Vec<usize> = (bsz..(rows + 1) * bsz).collect();
                Some(LstmState {
                    h: g.gather_rows(h, &keep)?,
                    c: g.gather_rows(c, &keep)?,
                })
            }
            None => None,
        };
        let sb = p.backward.step(g, x, prev_b)?;
        fwd.push(sf);
        bwd.push(sb);
        state_f = Some(sf);
        state_b = Some(sb);
    }

    // Width w = t + 1: forward row (i, b) and backward row (i, b) at step t
    // both cover words i..i+w.
    let mut blocks = Vec::with_capacity(widths.len());
    for &w in &widths {
        let (f, b) = (fwd[w - 1].h, bwd[w - 1].h);
        blocks.push(g.concat_cols(&[f, b])?);
    }
    let stacked = if blocks.len() == 1 { blocks[0] } else { g.concat_rows(&blocks)? };
    let proj = p.project.forward(g, stacked)?;
    let enc = g.l2_normalize_rows(proj)?;

    let n_spans = eligible_spans(n).len();
    let total_rows = g.shape(enc)[0];
    let caption = crate::nn::take_rows(g, enc, total_rows - bsz, bsz)?;
    let spans = if with_spans && n_spans > 0 {
        Some(crate::nn::take_rows(g, enc, 0, n_spans * bsz)?)
    } else {
        None
    };
    Ok(SpanEncodings {
        spans,
        caption,
        n_spans,
        batch: bsz,
    })
}

/// Negative-pair weights `[K·B, B]` for row `(k, b)` against batch item `b'`.
/// Diagonal entries are zero.
pub fn negative_weights(
    k: usize,
    batch: usize,
    strategy: NegativeStrategy,
    rng: &mut ChaCha8Rng,
) -> Result<Tensor> {
    if batch < 2 {
        return Err(Error::Invalid("contrastive loss needs at least two pairs in a batch".into()));
    }
    let mut w = vec![0.0; k * batch * batch];
    for row in 0..k * batch {
        let b = row % batch;
        let out = &mut w[row * batch..(row + 1) * batch];
        match strategy {
            NegativeStrategy::InBatchAll => {
                let share = 1.0 / (batch - 1) as f64;
                for (j, o) in out.iter_mut().enumerate() {
                    if j != b {
                        *o = share;
                    }
                }
            }
            NegativeStrategy::SingleSampled => {
                let mut j = rng.random_range(0..batch - 1);
                if j >= b {
                    j += 1;
                }
                out[j] = 1.0;
            }
        }
    }
    Tensor::new(vec![k * batch, batch], w)
}

/// Weighted contrastive hinge.
///
/// `enc: [K·B, sem]` holds unit encodings of span `k` of caption `b` at row
/// `k·B + b`; `scenes: [B, sem]` unit scene encodings. Each row contributes
/// `Σ_b' w[b'] ([cos(c_k,b', m_b) − cos(c_k,b, m_b) + ε]₊ + [cos(c_k,b, m_b') − cos(c_k,b, m_b) + ε]₊)`,
/// scaled by `row_weights` (span marginals) when given.
pub fn contrastive_loss(
    g: &mut Graph,
    enc: Var,
    scenes: Var,
    row_weights: Option<Var>,
    negatives: &Tensor,
    epsilon: f64,
) -> Result<Var> {
    let rows = g.shape(enc)[0];
    let batch = g.shape(scenes)[0];
    if rows % batch != 0 || negatives.shape() != [rows, batch] {
        return Err(Error::shape("contrastive_loss", format!("{rows} rows for batch {batch}")));
    }
    let sims = g.matmul_t(enc, scenes)?;
    let mut diag = Vec::with_capacity(rows * batch);
    let mut swapped = Vec::with_capacity(rows * batch);
    for row in 0..rows {
        let (k, b) = (row / batch, row % batch);
        for j in 0..batch {
            diag.push(row * batch + b);
            swapped.push((k * batch + j) * batch + b);
        }
    }
    let d = g.gather(sims, diag, vec![rows, batch])?;
    let t = g.gather(sims, swapped, vec![rows, batch])?;
    let neg_caption = g.sub(t, d)?;
    let neg_caption = g.add_scalar(neg_caption, epsilon)?;
    let neg_caption = g.relu(neg_caption)?;
    let neg_scene = g.sub(sims, d)?;
    let neg_scene = g.add_scalar(neg_scene, epsilon)?;
    let neg_scene = g.relu(neg_scene)?;
    let hinge = g.add(neg_caption, neg_scene)?;
    let w = g.constant(negatives.clone());
    let hinge = g.mul(hinge, w)?;
    let per_row = g.row_sums(hinge)?;
    let weighted = match row_weights {
        Some(m) => g.mul(per_row, m)?,
        None => per_row,
    };
    g.sum(weighted)
}

/// The single-negative hinge on plain vectors.
pub fn hinge(c: &[f64], m: &[f64], c_neg: &[f64], m_neg: &[f64], epsilon: f64) -> f64 {
    use crate::tensor::cosine;
    let pos = cosine(c, m);
    (cosine(c_neg, m) - pos + epsilon).max(0.0) + (cosine(c, m_neg) - pos + epsilon).max(0.0)
}
