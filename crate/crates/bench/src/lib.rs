//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Normalised random rule tables for an `n`-word sentence: `(root, binary, term)`.
pub fn random_rules(n_nt: usize, n_pt: usize, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = n_nt + n_pt;
    let mut table = |rows: usize, cols: usize| -> Vec<f64> {
        let mut v: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        for row in v.chunks_mut(cols) {
            let z = row.iter().map(|x| x.exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|x| *x -= z);
        }
        v
    };
    (table(1, n_nt), table(n_nt, s * s), table(n, n_pt))
}
