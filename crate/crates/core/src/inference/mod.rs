//! Exact inside/outside, span marginals, Viterbi parsing, and the amortised
//! variational posterior.

mod chart;
pub mod posterior;
mod scalar;
mod tree;
mod viterbi;

pub use chart::{
    eligible_spans, inside, inside_graph, inside_outside, inside_outside_op, marginal_vjp, span_marginals, Chart,
    InsideOutside, SentenceRules,
};
pub use posterior::{draw_noise, encode_posterior, kl_closed_form, kl_divergence, sample_z, PosteriorParams};
pub use tree::ParseTree;
pub use viterbi::{best_parse, symbol_label, BestParse};

use crate::error::{Error, Result};
use crate::grammar::Vocab;

/// Token ids plus the original words.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sentence {
    pub tokens: Vec<usize>,
    pub raw: Vec<String>,
}

impl Sentence {
    pub fn new(vocab: &Vocab, raw: Vec<String>) -> Result<Self> {
        if raw.len() < 2 {
            return Err(Error::Invalid(format!("sentence length {} is below 2", raw.len())));
        }
        Ok(Sentence {
            tokens: vocab.encode(&raw),
            raw,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}
