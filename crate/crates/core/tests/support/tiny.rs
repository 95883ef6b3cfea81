//! A deliberately small model for gradient and loss checks.

#![allow(dead_code)]

use groundgram::grammar::{GrammarDims, GrammarSpec, Vocab};
use groundgram::model::{Model, ModelConfig};
use groundgram::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn tiny_model(seed: u64) -> Model {
    let words = ["<unk>", "the", "dog", "sees", "a", "ball", "cat"];
    let vocab = Vocab::try_from(words.iter().map(|w| w.to_string()).collect::<Vec<_>>()).unwrap();
    let dims = GrammarDims { symbol_embed: 4, z: 2, hidden: 4 };
    let config = ModelConfig {
        n_nonterminals: 2,
        n_preterminals: 3,
        grammar: dims,
        word_dim: 4,
        encoder_hidden: 3,
        span_hidden: 3,
        sem_dim: 3,
        scene_hidden: 4,
        scene_dim: 5,
        share_embeddings: true,
    };
    let spec = GrammarSpec::new(2, 3, vocab, dims).unwrap();
    let mut model = Model::new(spec, config, seed).unwrap();
    // Zero-initialised biases put ReLU inputs exactly on the kink; move to a
    // generic point so finite differences are meaningful.
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = model.store.ids().collect();
    for id in ids {
        for x in model.store.get_mut(id).data_mut() {
            *x += 0.2 * rng.random_range(-1.0..1.0);
        }
    }
    model
}

pub const PAIR: [&[usize]; 2] = [&[1, 2, 3, 4, 5], &[4, 6, 3, 1, 2]];
pub const SCENES: [&[f64]; 2] = [&[0.3, -0.8, 0.5, 0.1, 0.9], &[-0.6, 0.2, 0.7, -0.4, 0.0]];

pub fn fixed_eps(rows: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..rows * dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    Tensor::matrix(rows, dim, data).unwrap()
}
