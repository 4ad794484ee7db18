//! Length-bounded beam search with hard trigram blocking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeamConfig {
    pub beam_width: usize,
    /// Maximum generated tokens, terminator excluded.
    pub max_length: usize,
    pub block_repeated_trigrams: bool,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam_width: 5,
            max_length: 50,
            block_repeated_trigrams: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    /// Generated tokens, terminator excluded.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities, terminator included when emitted.
    pub score: f64,
    /// Whether a terminator ended the sequence (as opposed to the length cap).
    pub finished: bool,
}

/// Whether appending `next` to `seq` repeats a trigram already in `seq`.
pub fn repeats_trigram(seq: &[usize], next: usize) -> bool {
    let n = seq.len();
    if n < 2 {
        return false;
    }
    let (a, b) = (seq[n - 2], seq[n - 1]);
    seq.windows(3).any(|w| w == [a, b, next])
}

pub fn has_repeated_trigram<T: PartialEq>(seq: &[T]) -> bool {
    let tri: Vec<&[T]> = seq.windows(3).collect();
    (0..tri.len()).any(|i| (i + 1..tri.len()).any(|j| tri[i] == tri[j]))
}

struct Hyp<S> {
    tokens: Vec<usize>,
    score: f64,
    state: S,
    next: Vec<f64>,
}

/// Beam search from an initial state and next-token log-probabilities.
///
/// `step(state, token)` feeds `token` and returns the new state with the
/// log-probabilities of the following token. Any token in `terminators`
/// ends a hypothesis. Returns the highest-scoring hypothesis; when none
/// terminates before `max_length`, the best truncated one.
pub fn beam_search<S: Clone>(
    initial: S,
    initial_logprobs: Vec<f64>,
    terminators: &[usize],
    config: &BeamConfig,
    mut step: impl FnMut(&S, usize) -> Result<(S, Vec<f64>)>,
) -> Result<BeamResult> {
    if config.beam_width < 1 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let mut alive = vec![Hyp {
        tokens: Vec::new(),
        score: 0.0,
        state: initial,
        next: initial_logprobs,
    }];
    let mut finished: Vec<BeamResult> = Vec::new();
    for _ in 0..=config.max_length {
        let at_cap = alive.first().is_some_and(|h| h.tokens.len() == config.max_length);
        // (hyp, token, score)
        let mut cands: Vec<(usize, usize, f64)> = Vec::new();
        for (h, hyp) in alive.iter().enumerate() {
            for (tok, &lp) in hyp.next.iter().enumerate() {
                if lp == f64::NEG_INFINITY || lp.is_nan() {
                    continue;
                }
                let terminal = terminators.contains(&tok);
                if at_cap && !terminal {
                    continue;
                }
                if !terminal && config.block_repeated_trigrams && repeats_trigram(&hyp.tokens, tok) {
                    continue;
                }
                cands.push((h, tok, hyp.score + lp));
            }
        }
        // stable order: score desc, then hypothesis, then token
        cands.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)).then(a.1.cmp(&b.1)));
        let mut next_alive = Vec::new();
        for (rank, (h, tok, score)) in cands.into_iter().enumerate() {
            if next_alive.len() >= config.beam_width {
                break;
            }
            if terminators.contains(&tok) {
                // a terminator only counts while it ranks inside the beam
                if rank < config.beam_width {
                    finished.push(BeamResult {
                        tokens: alive[h].tokens.clone(),
                        score,
                        finished: true,
                    });
                }
                continue;
            }
            let (state, next) = step(&alive[h].state, tok)?;
            let mut tokens = alive[h].tokens.clone();
            tokens.push(tok);
            next_alive.push(Hyp {
                tokens,
                score,
                state,
                next,
            });
        }
        if at_cap {
            // truncated hypotheses compete with finished ones
            for hyp in &alive {
                finished.push(BeamResult {
                    tokens: hyp.tokens.clone(),
                    score: hyp.score,
                    finished: false,
                });
            }
            break;
        }
        alive = next_alive;
        let best_finished = finished.iter().map(|f| f.score).fold(f64::NEG_INFINITY, f64::max);
        let best_alive = alive.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        // scores only decrease, so no live hypothesis can overtake
        if alive.is_empty() || best_finished >= best_alive {
            break;
        }
    }
    finished
        .into_iter()
        .max_by(|a, b| a.score.total_cmp(&b.score).then(b.tokens.len().cmp(&a.tokens.len())))
        .ok_or_else(|| Error::validation("beam search produced no hypothesis"))
}
