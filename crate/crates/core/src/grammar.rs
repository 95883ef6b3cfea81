//! Compound PCFG: symbol inventories, embeddings and the networks mapping a
//! latent vector to root, binary and terminal rule distributions.

use std::collections::{BTreeMap, HashMap};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::SentenceRules;
use crate::nn::{xavier, Mlp};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub const UNK: &str = "<unk>";

/// Word list with the unknown token at index 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl TryFrom<Vec<String>> for Vocab {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        if words.first().map(String::as_str) != Some(UNK) {
            return Err(Error::Format(format!("vocabulary must start with {UNK}")));
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate vocabulary entry {w}")));
            }
        }
        Ok(Vocab { words, index })
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.words
    }
}

impl Vocab {
    /// Words occurring at least `min_count` times, sorted, after `UNK`.
    pub fn from_sentences<'a, I, S>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a S>,
        S: AsRef<[String]> + 'a + ?Sized,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for w in s.as_ref() {
                *counts.entry(w.as_str()).or_default() += 1;
            }
        }
        let mut words = vec![UNK.to_string()];
        words.extend(
            counts
                .into_iter()
                .filter(|&(w, c)| c >= min_count && w != UNK)
                .map(|(w, _)| w.to_string()),
        );
        Vocab::try_from(words).expect("unique by construction")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn encode<S: AsRef<str>>(&self, words: &[S]) -> Vec<usize> {
        words.iter().map(|w| self.id(w.as_ref())).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarDims {
    pub symbol_embed: usize,
    pub z: usize,
    pub hidden: usize,
}

impl Default for GrammarDims {
    fn default() -> Self {
        GrammarDims {
            symbol_embed: 64,
            z: 32,
            hidden: 128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrammarSpec {
    pub n_nonterminals: usize,
    pub n_preterminals: usize,
    pub vocab: Vocab,
    pub dims: GrammarDims,
}

impl GrammarSpec {
    pub fn new(n_nonterminals: usize, n_preterminals: usize, vocab: Vocab, dims: GrammarDims) -> Result<Self> {
        let spec = GrammarSpec {
            n_nonterminals,
            n_preterminals,
            vocab,
            dims,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_nonterminals < 1 || self.n_preterminals < 1 {
            return Err(Error::Invalid("grammar needs at least one nonterminal and preterminal".into()));
        }
        if self.vocab.len() < 2 {
            return Err(Error::Invalid("vocabulary needs at least two entries".into()));
        }
        if self.dims.symbol_embed == 0 || self.dims.z == 0 || self.dims.hidden == 0 {
            return Err(Error::Invalid("grammar dimensions must be positive".into()));
        }
        Ok(())
    }

    pub fn n_symbols(&self) -> usize {
        self.n_nonterminals + self.n_preterminals
    }
}

#[derive(Clone, Debug)]
pub struct GrammarParams {
    pub w_root: ParamId,
    pub w_nonterminal: ParamId,
    pub w_preterminal: ParamId,
    /// `f_s`; its output layer holds the root embeddings `u_A`.
    pub f_root: Mlp,
    /// `u_BC`, applied to `[w_A; z]` without a hidden layer or bias.
    pub u_binary: ParamId,
    /// `f_t`; its output layer holds the word embeddings `u_w`.
    pub f_term: Mlp,
}

impl GrammarParams {
    pub fn register(store: &mut ParamStore, rng: &mut ChaCha8Rng, spec: &GrammarSpec) -> Result<Self> {
        spec.validate()?;
        let (n, p, v) = (spec.n_nonterminals, spec.n_preterminals, spec.vocab.len());
        let GrammarDims { symbol_embed: e, z, hidden: h } = spec.dims;
        let s = spec.n_symbols();
        Ok(GrammarParams {
            w_root: store.add("grammar.w_root", xavier(rng, &[1, e], 1, e))?,
            w_nonterminal: store.add("grammar.w_nonterminal", xavier(rng, &[n, e], n, e))?,
            w_preterminal: store.add("grammar.w_preterminal", xavier(rng, &[p, e], p, e))?,
            f_root: Mlp::register(store, rng, "grammar.f_root", e + z, h, n)?,
            u_binary: store.add("grammar.u_binary", xavier(rng, &[e + z, s * s], e + z, s * s))?,
            f_term: Mlp::register(store, rng, "grammar.f_term", e + z, h, v)?,
        })
    }
}

/// Batched rule log-probabilities for `B` latent vectors.
#[derive(Clone, Copy, Debug)]
pub struct RuleVars {
    /// `[B, N]`
    pub root: Var,
    /// `[B·N, S²]`, row `b·N + A`.
    pub binary: Var,
    /// `[B·P, V]`, row `b·P + T`.
    pub term: Var,
    pub batch: usize,
    pub n_nt: usize,
    pub n_pt: usize,
    pub vocab: usize,
}

/// `[symbol embedding; z]` for every (batch row, symbol) pair, row-major in
/// the batch index.
fn symbol_inputs(g: &mut Graph, emb: ParamId, count: usize, z: Var, batch: usize) -> Result<Var> {
    let e = g.param(emb);
    let syms: Vec<usize> = (0..batch).flat_map(|_| 0..count).collect();
    let rows: Vec<usize> = (0..batch).flat_map(|b| std::iter::repeat_n(b, count)).collect();
    let we = g.gather_rows(e, &syms)?;
    let zz = g.gather_rows(z, &rows)?;
    g.concat_cols(&[we, zz])
}

/// Rule distributions for each row of `z: [B, z_dim]`.
pub fn rule_vars(g: &mut Graph, p: &GrammarParams, spec: &GrammarSpec, z: Var) -> Result<RuleVars> {
    let zs = g.shape(z).to_vec();
    if zs.len() != 2 || zs[1] != spec.dims.z {
        return Err(Error::shape("rule_vars", format!("z {zs:?}, expected [B, {}]", spec.dims.z)));
    }
    let batch = zs[0];
    let (n, pt) = (spec.n_nonterminals, spec.n_preterminals);

    let root_in = symbol_inputs(g, p.w_root, 1, z, batch)?;
    let root = p.f_root.forward(g, root_in)?;
    let root = g.log_softmax_rows(root)?;

    let bin_in = symbol_inputs(g, p.w_nonterminal, n, z, batch)?;
    let u = g.param(p.u_binary);
    let binary = g.matmul(bin_in, u)?;
    let binary = g.log_softmax_rows(binary)?;

    let term_in = symbol_inputs(g, p.w_preterminal, pt, z, batch)?;
    let term = p.f_term.forward(g, term_in)?;
    let term = g.log_softmax_rows(term)?;

    Ok(RuleVars {
        root,
        binary,
        term,
        batch,
        n_nt: n,
        n_pt: pt,
        vocab: spec.vocab.len(),
    })
}

impl RuleVars {
    /// Per-sentence views for batch row `b`: `root [N]`, `binary [N, S²]`,
    /// `term [n, P]` (terminal log-probabilities at the sentence's tokens).
    pub fn sentence(&self, g: &mut Graph, b: usize, tokens: &[usize]) -> Result<(Var, Var, Var)> {
        let (n, p, v) = (self.n_nt, self.n_pt, self.vocab);
        let s = n + p;
        if let Some(&bad) = tokens.iter().find(|&&t| t >= v) {
            return Err(Error::Invalid(format!("token id {bad} outside vocabulary of {v}")));
        }
        let root = g.gather(self.root, (b * n..(b + 1) * n).collect(), vec![n])?;
        let rows: Vec<usize> = (b * n..(b + 1) * n).collect();
        let binary = g.gather_rows(self.binary, &rows)?;
        let idx = tokens
            .iter()
            .flat_map(|&w| (0..p).map(move |t| ((b * p + t) * v) + w))
            .collect();
        let term = g.gather(self.term, idx, vec![tokens.len(), p])?;
        debug_assert_eq!(g.shape(binary), [n, s * s]);
        Ok((root, binary, term))
    }

    /// Plain values for batch row `b`.
    pub fn table(&self, g: &Graph, b: usize) -> RuleTable {
        let (n, p, v) = (self.n_nt, self.n_pt, self.vocab);
        let s = n + p;
        RuleTable {
            n_nt: n,
            n_pt: p,
            vocab: v,
            root: g.value(self.root).data()[b * n..(b + 1) * n].to_vec(),
            binary: g.value(self.binary).data()[b * n * s * s..(b + 1) * n * s * s].to_vec(),
            term: g.value(self.term).data()[b * p * v..(b + 1) * p * v].to_vec(),
        }
    }
}

/// Rule log-probabilities under one latent vector.
#[derive(Clone, Debug, PartialEq)]
pub struct RuleTable {
    pub n_nt: usize,
    pub n_pt: usize,
    pub vocab: usize,
    /// `[N]`
    pub root: Vec<f64>,
    /// `[N, S, S]`
    pub binary: Vec<f64>,
    /// `[P, V]`
    pub term: Vec<f64>,
}

impl RuleTable {
    pub fn n_symbols(&self) -> usize {
        self.n_nt + self.n_pt
    }

    /// `[n, P]` terminal log-probabilities at `tokens`.
    pub fn term_for(&self, tokens: &[usize]) -> Vec<f64> {
        tokens
            .iter()
            .flat_map(|&w| (0..self.n_pt).map(move |t| self.term[t * self.vocab + w]))
            .collect()
    }

    pub fn sentence<'a>(&'a self, term: &'a [f64]) -> SentenceRules<'a> {
        SentenceRules {
            n_nt: self.n_nt,
            n_pt: self.n_pt,
            root: &self.root,
            binary: &self.binary,
            term,
        }
    }
}

/// Rule table for a single latent vector.
pub fn rule_logprobs(store: &ParamStore, p: &GrammarParams, spec: &GrammarSpec, z: &[f64]) -> Result<RuleTable> {
    let mut g = Graph::new(store);
    let z = g.constant(Tensor::new(vec![1, z.len()], z.to_vec())?);
    let vars = rule_vars(&mut g, p, spec, z)?;
    Ok(vars.table(&g, 0))
}
