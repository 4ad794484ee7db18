//! Deterministic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Row-normalized bigram log-probabilities over `vocab` tokens.
pub fn bigram_table(vocab: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..vocab)
        .map(|_| {
            let raw: Vec<f64> = (0..vocab).map(|_| rng.random_range(-4.0..4.0)).collect();
            let max = raw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + raw.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
            raw.iter().map(|x| x - lse).collect()
        })
        .collect()
}

/// `n` candidate/reference pairs of `len` words drawn from a small vocabulary,
/// so that n-gram matches are common.
pub fn token_corpus(n: usize, len: usize, seed: u64) -> (Vec<Vec<String>>, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| -> Vec<String> {
        (0..len).map(|_| format!("w{}", rng.random_range(0..30))).collect()
    };
    let cands = (0..n).map(|_| sentence(&mut rng)).collect();
    let refs = (0..n).map(|_| sentence(&mut rng)).collect();
    (cands, refs)
}
