//! Model-agnostic beam search.

use std::cmp::Ordering;
use std::collections::HashMap;

use super::{GeneratorError, QuestionCandidate};

/// Autoregressive decoder interface consumed by [`beam_search`].
pub trait StepModel {
    /// Encoded source, computed once per input.
    type State;

    fn encode(&self, source: &[u32]) -> Result<Self::State, GeneratorError>;

    fn bos(&self) -> u32;

    fn eos(&self) -> u32;

    /// Next-token log-probabilities for each prefix (each starts with BOS).
    fn next_log_probs(
        &self,
        state: &Self::State,
        prefixes: &[Vec<u32>],
    ) -> Result<Vec<Vec<f32>>, GeneratorError>;
}

/// A decoded token sequence (without BOS/EOS) and its log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub score: f64,
    pub finished: bool,
}

fn by_score(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Standard beam search without length normalization.
///
/// Keeps `beam_size` live prefixes per step. A hypothesis finishes when EOS
/// is chosen; search stops once `beam_size` hypotheses are finished and no
/// live prefix can still beat the worst of them (log-probabilities only
/// decrease), or after `max_len` tokens. Unfinished prefixes fill the result
/// if fewer than `beam_size` hypotheses finished.
pub fn beam_search<M: StepModel>(
    model: &M,
    source: &[u32],
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<Hypothesis>, GeneratorError> {
    if beam_size == 0 {
        return Err(GeneratorError::InvalidConfig("beam_size must be positive".into()));
    }
    let state = model.encode(source)?;
    let eos = model.eos();
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_len {
        if live.is_empty() {
            break;
        }
        let prefixes: Vec<Vec<u32>> = live
            .iter()
            .map(|h| std::iter::once(model.bos()).chain(h.tokens.iter().copied()).collect())
            .collect();
        let log_probs = model.next_log_probs(&state, &prefixes)?;
        let mut expansions: Vec<Hypothesis> = Vec::new();
        for (hyp, row) in live.iter().zip(&log_probs) {
            for (token, &lp) in row.iter().enumerate() {
                if !lp.is_finite() {
                    continue;
                }
                let token = token as u32;
                let mut tokens = hyp.tokens.clone();
                let done = token == eos;
                if !done {
                    tokens.push(token);
                }
                expansions.push(Hypothesis {
                    tokens,
                    score: hyp.score + f64::from(lp),
                    finished: done,
                });
            }
        }
        expansions.sort_by(by_score);
        let mut next = Vec::with_capacity(beam_size);
        for (position, h) in expansions.into_iter().take(2 * beam_size).enumerate() {
            if h.finished {
                // only EOS expansions ranked inside the beam may finish
                if position < beam_size {
                    finished.push(h);
                }
            } else if next.len() < beam_size {
                next.push(h);
            }
        }
        live = next;

        finished.sort_by(by_score);
        if finished.len() >= beam_size {
            let worst_kept = finished[beam_size - 1].score;
            let best_live = live.first().map_or(f64::NEG_INFINITY, |h| h.score);
            if best_live <= worst_kept {
                break;
            }
        }
    }

    let mut all = finished;
    if all.len() < beam_size {
        all.extend(live);
    }
    all.sort_by(by_score);
    all.truncate(beam_size);
    Ok(all)
}

/// Deduplicates decoded texts (keeping the best score), orders by score then
/// text, and assigns ranks. With `keep_all == false` only rank 0 remains.
pub fn rank_candidates(
    decoded: impl IntoIterator<Item = (String, f64)>,
    beam_size: usize,
    keep_all: bool,
) -> Vec<QuestionCandidate> {
    let mut best: HashMap<String, f64> = HashMap::new();
    for (text, score) in decoded {
        let entry = best.entry(text).or_insert(f64::NEG_INFINITY);
        if score > *entry {
            *entry = score;
        }
    }
    let mut items: Vec<(String, f64)> = best.into_iter().collect();
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let keep = if keep_all { beam_size } else { 1 };
    items
        .into_iter()
        .take(keep)
        .enumerate()
        .map(|(rank, (text, score))| QuestionCandidate {
            text,
            beam_rank: rank,
            score,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Toy model over tokens {0: BOS, 1: EOS, 2, 3, 4}; the distribution
    /// depends on the full prefix through a hash.
    struct Toy;

    fn toy_row(prefix: &[u32]) -> Vec<f32> {
        let mut h: u64 = 1469598103934665603;
        for t in prefix {
            h = (h ^ u64::from(*t)).wrapping_mul(1099511628211);
        }
        let mut logits = [f64::NEG_INFINITY; 5];
        for (i, l) in logits.iter_mut().enumerate().skip(1) {
            *l = ((h >> (i * 8)) & 0xff) as f64 / 64.0;
        }
        let z: f64 = logits[1..].iter().map(|l| l.exp()).sum();
        logits.iter().map(|l| (l - z.ln()) as f32).collect()
    }

    impl StepModel for Toy {
        type State = ();
        fn encode(&self, _: &[u32]) -> Result<(), GeneratorError> {
            Ok(())
        }
        fn bos(&self) -> u32 {
            0
        }
        fn eos(&self) -> u32 {
            1
        }
        fn next_log_probs(&self, _: &(), prefixes: &[Vec<u32>]) -> Result<Vec<Vec<f32>>, GeneratorError> {
            Ok(prefixes.iter().map(|p| toy_row(p)).collect())
        }
    }

    /// Enumerates every sequence of at most `max_len` decoding steps.
    fn exhaustive(max_len: usize) -> Vec<Hypothesis> {
        let mut out = Vec::new();
        let mut frontier = vec![(vec![0u32], 0.0f64)];
        for step in 0..max_len {
            let mut next = Vec::new();
            for (prefix, score) in frontier {
                let row = toy_row(&prefix);
                for tok in 1..5u32 {
                    let s = score + f64::from(row[tok as usize]);
                    if tok == 1 {
                        out.push(Hypothesis { tokens: prefix[1..].to_vec(), score: s, finished: true });
                    } else {
                        let mut p = prefix.clone();
                        p.push(tok);
                        if step + 1 == max_len {
                            out.push(Hypothesis { tokens: p[1..].to_vec(), score: s, finished: false });
                        } else {
                            next.push((p, s));
                        }
                    }
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn wide_beam_equals_exhaustive_search_over_finished() {
        let max_len = 3;
        let mut all = exhaustive(max_len);
        all.retain(|h| h.finished);
        all.sort_by(by_score);
        let beam = beam_search(&Toy, &[], 128, max_len).unwrap();
        let finished: Vec<_> = beam.iter().filter(|h| h.finished).cloned().collect();
        assert!(!finished.is_empty());
        for (b, e) in finished.iter().zip(&all) {
            assert_eq!(b.tokens, e.tokens);
            assert!((b.score - e.score).abs() < 1e-9);
        }
    }

    #[test]
    fn beam_one_is_greedy() {
        let beam = beam_search(&Toy, &[], 1, 6).unwrap();
        assert_eq!(beam.len(), 1);
        let mut prefix = vec![0u32];
        let mut score = 0.0;
        for _ in 0..6 {
            let row = toy_row(&prefix);
            let (tok, lp) = row
                .iter()
                .enumerate()
                .skip(1)
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .unwrap();
            score += f64::from(*lp);
            if tok == 1 {
                break;
            }
            prefix.push(tok as u32);
        }
        assert_eq!(beam[0].tokens, prefix[1..].to_vec());
        assert!((beam[0].score - score).abs() < 1e-9);
    }

    #[test]
    fn results_are_sorted_and_deterministic() {
        let a = beam_search(&Toy, &[], 8, 8).unwrap();
        assert_eq!(a, beam_search(&Toy, &[], 8, 8).unwrap());
        assert!(a.len() <= 8);
        assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn ranking_dedups_and_orders() {
        let ranked = rank_candidates(
            vec![("b".into(), -1.0), ("a".into(), -1.0), ("b".into(), -0.5), ("c".into(), -3.0)],
            8,
            true,
        );
        let texts: Vec<&str> = ranked.iter().map(|c| c.text.as_str()).collect();
        assert_eq!(texts, vec!["b", "a", "c"]);
        assert_eq!(ranked.iter().map(|c| c.beam_rank).collect::<Vec<_>>(), vec![0, 1, 2]);
        let top = rank_candidates(vec![("x".into(), -2.0), ("y".into(), -1.0)], 8, false);
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].text, "y");
    }

    #[test]
    fn zero_beam_is_rejected() {
        assert!(beam_search(&Toy, &[], 0, 4).is_err());
    }
}
