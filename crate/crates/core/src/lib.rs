//! Visually grounded compound PCFG induction.
//!
//! A compound PCFG whose rule probabilities depend on a per-sentence latent
//! vector is trained jointly with a contrastive span/scene matching model on
//! synthetic sentence–scene pairs.

pub mod error;
pub mod grammar;
pub mod evalsuite;
pub mod grounding;
pub mod inference;
pub mod model;
pub mod nn;
pub mod rng;
pub mod scenegen;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use grammar::{GrammarDims, GrammarSpec, RuleTable, Vocab};
pub use inference::{ParseTree, Sentence};
pub use model::{Model, ModelConfig};
pub use tensor::{Gradients, Graph, ParamId, ParamStore, Tensor, Var};
