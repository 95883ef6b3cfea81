//! The joint model: compound PCFG, posterior encoder and grounding networks
//! over one parameter store.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grammar::{rule_vars, GrammarDims, GrammarParams, GrammarSpec, RuleTable, RuleVars};
use crate::grounding::{
    contrastive_loss, encode_scene, encode_spans, negative_weights, GroundingParams, MatchConfig,
};
use crate::inference::{
    best_parse, eligible_spans, encode_posterior, inside_outside_op, kl_divergence, sample_z, BestParse,
    PosteriorParams,
};
use crate::nn::xavier;
use crate::rng::{stream_rng, Stream};
use crate::tensor::{cosine, Graph, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_nonterminals: usize,
    pub n_preterminals: usize,
    pub grammar: GrammarDims,
    pub word_dim: usize,
    pub encoder_hidden: usize,
    pub span_hidden: usize,
    pub sem_dim: usize,
    pub scene_hidden: usize,
    pub scene_dim: usize,
    /// One word-embedding table for the posterior and span encoders.
    pub share_embeddings: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            n_nonterminals: 10,
            n_preterminals: 20,
            grammar: GrammarDims::default(),
            word_dim: 32,
            encoder_hidden: 32,
            span_hidden: 32,
            sem_dim: 32,
            scene_hidden: 64,
            scene_dim: 0,
            share_embeddings: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Model {
    pub spec: GrammarSpec,
    pub config: ModelConfig,
    pub store: ParamStore,
    pub grammar: GrammarParams,
    pub posterior: PosteriorParams,
    pub grounding: GroundingParams,
}

/// Which semantic objective a step uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SemanticMode {
    Off,
    /// Marginal-weighted span matching.
    Spans,
    /// Whole-caption matching.
    Caption,
}

#[derive(Clone, Copy, Debug)]
pub struct StepPlan {
    pub syntax: bool,
    pub semantics: SemanticMode,
    pub matching: MatchConfig,
}

/// Equal-length sentences with their scene vectors.
#[derive(Clone, Debug)]
pub struct Batch<'a> {
    pub tokens: Vec<&'a [usize]>,
    pub scenes: Vec<&'a [f64]>,
}

#[derive(Clone, Debug)]
pub struct BatchLoss {
    /// `α1·L_syntax + α2·L_semantics` over the active parts.
    pub total: Var,
    /// `−Σ ELBO`, zero when inactive.
    pub syntax: f64,
    pub semantics: f64,
    /// `[1 + E]` inside/outside outputs per sentence, when computed.
    pub io: Vec<Var>,
}

/// Evaluation view of one caption under `z = mu`.
#[derive(Clone, Debug)]
pub struct CaptionView {
    pub best: BestParse,
    pub log_z: f64,
    pub marginals: Vec<f64>,
    /// Unit encodings of eligible spans, in eligible-span order.
    pub spans: Vec<Vec<f64>>,
    pub caption: Vec<f64>,
}

impl CaptionView {
    /// `Σ_e marginal_e · cos(span_e, m)`, or the whole-caption cosine.
    pub fn match_score(&self, scene: &[f64], whole_caption: bool) -> f64 {
        if whole_caption {
            return cosine(&self.caption, scene);
        }
        self.marginals.iter().zip(&self.spans).map(|(w, c)| w * cosine(c, scene)).sum()
    }
}

fn stack(rows: &[&[f64]]) -> Result<Tensor> {
    let cols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::shape("stack", "rows differ in length"));
    }
    Tensor::new(vec![rows.len(), cols], rows.concat())
}

impl Model {
    pub fn new(spec: GrammarSpec, config: ModelConfig, seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, Stream::ParamInit, 0);
        Self::build(spec, config, &mut rng)
    }

    fn build(spec: GrammarSpec, config: ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        if spec.n_nonterminals != config.n_nonterminals
            || spec.n_preterminals != config.n_preterminals
            || spec.dims != config.grammar
        {
            return Err(Error::Invalid("grammar spec disagrees with model config".into()));
        }
        if config.scene_dim == 0 {
            return Err(Error::Invalid("scene dimension must be positive".into()));
        }
        let mut store = ParamStore::new();
        let grammar = GrammarParams::register(&mut store, rng, &spec)?;
        let v = spec.vocab.len();
        let d = config.word_dim;
        let post_embed = store.add("posterior.embed", xavier(rng, &[v, d], v, d))?;
        let span_embed = if config.share_embeddings {
            post_embed
        } else {
            store.add("grounding.embed", xavier(rng, &[v, d], v, d))?
        };
        let posterior =
            PosteriorParams::register(&mut store, rng, post_embed, d, config.encoder_hidden, spec.dims.z)?;
        let grounding = GroundingParams::register(
            &mut store,
            rng,
            span_embed,
            d,
            config.span_hidden,
            config.sem_dim,
            config.scene_dim,
            config.scene_hidden,
        )?;
        Ok(Model {
            spec,
            config,
            store,
            grammar,
            posterior,
            grounding,
        })
    }

    /// Rebuild the parameter layout and take values from `store` by name.
    pub fn from_store(spec: GrammarSpec, config: ModelConfig, store: &ParamStore) -> Result<Self> {
        let mut model = Self::new(spec, config, 0)?;
        if store.len() != model.store.len() {
            return Err(Error::Format(format!(
                "checkpoint has {} parameters, model expects {}",
                store.len(),
                model.store.len()
            )));
        }
        for (_, name, value) in store.iter() {
            let id = model
                .store
                .id(name)
                .ok_or_else(|| Error::Format(format!("unexpected parameter {name}")))?;
            model.store.set(id, value.clone())?;
        }
        Ok(model)
    }

    /// Rule distributions for `z = mu` of each sentence, or a sampled `z`.
    pub fn rules(&self, g: &mut Graph, tokens: &[&[usize]], eps: Option<Tensor>) -> Result<(RuleVars, Var, Var)> {
        let (mu, logvar) = encode_posterior(g, &self.posterior, tokens)?;
        let z = match eps {
            Some(e) => sample_z(g, mu, logvar, e)?,
            None => mu,
        };
        Ok((rule_vars(g, &self.grammar, &self.spec, z)?, mu, logvar))
    }

    /// Per-sentence ELBO `[B]` with one reparameterised sample, plus the
    /// inside/outside outputs used to form it.
    pub fn elbo(&self, g: &mut Graph, tokens: &[&[usize]], eps: Tensor) -> Result<(Var, Vec<Var>)> {
        let (rules, mu, logvar) = self.rules(g, tokens, Some(eps))?;
        let mut io = Vec::with_capacity(tokens.len());
        let mut log_z = Vec::with_capacity(tokens.len());
        for (b, t) in tokens.iter().enumerate() {
            let (root, bin, term) = rules.sentence(g, b, t)?;
            let out = inside_outside_op(g, root, bin, term)?;
            log_z.push(g.gather(out, vec![0], vec![1, 1])?);
            io.push(out);
        }
        let log_z = g.concat_cols(&log_z)?;
        let log_z = g.reshape(log_z, vec![tokens.len()])?;
        let kl = kl_divergence(g, mu, logvar)?;
        Ok((g.sub(log_z, kl)?, io))
    }

    /// Joint loss for one batch.
    pub fn batch_loss(
        &self,
        g: &mut Graph,
        batch: &Batch,
        plan: &StepPlan,
        eps: Tensor,
        neg_rng: &mut ChaCha8Rng,
    ) -> Result<BatchLoss> {
        let bsz = batch.tokens.len();
        if batch.scenes.len() != bsz {
            return Err(Error::shape("batch_loss", "tokens and scenes differ in count"));
        }
        let m = plan.matching;
        let semantics = if m.alpha2 == 0.0 || bsz < 2 { SemanticMode::Off } else { plan.semantics };
        let need_grammar = plan.syntax || semantics == SemanticMode::Spans;

        let mut parts = Vec::new();
        let mut out = BatchLoss {
            total: g.constant(Tensor::scalar(0.0)),
            syntax: 0.0,
            semantics: 0.0,
            io: Vec::new(),
        };
        if need_grammar {
            let (elbo, io) = self.elbo(g, &batch.tokens, eps)?;
            let s = g.sum(elbo)?;
            let loss = g.scale(s, -1.0)?;
            out.syntax = g.value(loss).item()?;
            out.io = io;
            if plan.syntax {
                parts.push(g.scale(loss, m.alpha1)?);
            }
        }
        if semantics != SemanticMode::Off {
            let scenes = g.constant(stack(&batch.scenes)?);
            let codes = encode_scene(g, &self.grounding, scenes)?;
            let enc = encode_spans(g, &self.grounding, &batch.tokens, semantics == SemanticMode::Spans)?;
            let loss = match semantics {
                SemanticMode::Spans => match enc.spans {
                    Some(spans) => {
                        let weights = self.stacked_marginals(g, &out.io, enc.n_spans)?;
                        let neg = negative_weights(enc.n_spans, bsz, m.negative_strategy, neg_rng)?;
                        Some(contrastive_loss(g, spans, codes, Some(weights), &neg, m.epsilon)?)
                    }
                    None => None,
                },
                SemanticMode::Caption => {
                    let neg = negative_weights(1, bsz, m.negative_strategy, neg_rng)?;
                    Some(contrastive_loss(g, enc.caption, codes, None, &neg, m.epsilon)?)
                }
                SemanticMode::Off => unreachable!(),
            };
            if let Some(loss) = loss {
                out.semantics = g.value(loss).item()?;
                parts.push(g.scale(loss, m.alpha2)?);
            }
        }
        for p in parts {
            out.total = g.add(out.total, p)?;
        }
        Ok(out)
    }

    /// Marginals of every sentence as `[E·B]`, row `e·B + b`.
    fn stacked_marginals(&self, g: &mut Graph, io: &[Var], n_spans: usize) -> Result<Var> {
        let bsz = io.len();
        let cols = io
            .iter()
            .map(|&v| g.reshape(v, vec![n_spans + 1, 1]))
            .collect::<Result<Vec<_>>>()?;
        let table = g.concat_cols(&cols)?;
        let idx = (0..n_spans)
            .flat_map(|e| (0..bsz).map(move |b| (e + 1) * bsz + b))
            .collect();
        g.gather(table, idx, vec![n_spans * bsz])
    }

    /// Parses, marginals and span encodings for equal-length captions under
    /// the posterior mean.
    pub fn caption_views(&self, tokens: &[&[usize]], words: &[&[String]]) -> Result<Vec<CaptionView>> {
        let mut g = Graph::new(&self.store);
        let (rules, _, _) = self.rules(&mut g, tokens, None)?;
        let enc = encode_spans(&mut g, &self.grounding, tokens, true)?;
        let sem = self.config.sem_dim;
        let bsz = tokens.len();
        let span_vals = enc.spans.map(|v| g.value(v).data().to_vec()).unwrap_or_default();
        let cap_vals = g.value(enc.caption).data().to_vec();
        let mut out = Vec::with_capacity(bsz);
        for (b, (t, w)) in tokens.iter().zip(words).enumerate() {
            let table: RuleTable = rules.table(&g, b);
            let term = table.term_for(t);
            let sr = table.sentence(&term);
            let io = crate::inference::inside_outside(&sr)?;
            let ws: Vec<&str> = w.iter().map(String::as_str).collect();
            let best = best_parse(&sr, &ws)?;
            let spans = (0..enc.n_spans)
                .map(|e| span_vals[(e * bsz + b) * sem..(e * bsz + b + 1) * sem].to_vec())
                .collect();
            out.push(CaptionView {
                best,
                log_z: io.log_z,
                marginals: io.marginals,
                spans,
                caption: cap_vals[b * sem..(b + 1) * sem].to_vec(),
            });
        }
        debug_assert!(out.iter().all(|v| v.marginals.len() == eligible_spans(tokens[0].len()).len()));
        Ok(out)
    }

    /// Unit scene encodings.
    pub fn scene_codes(&self, scenes: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let mut g = Graph::new(&self.store);
        let v = g.constant(stack(scenes)?);
        let m = encode_scene(&mut g, &self.grounding, v)?;
        let sem = self.config.sem_dim;
        Ok(g.value(m).data().chunks(sem).map(<[f64]>::to_vec).collect())
    }

    /// Views for arbitrary captions, batched internally by length; output
    /// follows input order.
    pub fn caption_views_all(&self, tokens: &[&[usize]], words: &[&[String]]) -> Result<Vec<CaptionView>> {
        const CHUNK: usize = 32;
        let mut order: Vec<usize> = (0..tokens.len()).collect();
        order.sort_by_key(|&i| (tokens[i].len(), i));
        let mut out: Vec<Option<CaptionView>> = vec![None; tokens.len()];
        let mut start = 0;
        while start < order.len() {
            let n = tokens[order[start]].len();
            let mut end = start;
            while end < order.len() && end - start < CHUNK && tokens[order[end]].len() == n {
                end += 1;
            }
            let idx = &order[start..end];
            let t: Vec<&[usize]> = idx.iter().map(|&i| tokens[i]).collect();
            let w: Vec<&[String]> = idx.iter().map(|&i| words[i]).collect();
            for (&i, v) in idx.iter().zip(self.caption_views(&t, &w)?) {
                out[i] = Some(v);
            }
            start = end;
        }
        Ok(out.into_iter().map(|v| v.expect("every index visited")).collect())
    }
}
