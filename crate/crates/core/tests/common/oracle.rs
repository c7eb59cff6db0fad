//! Decoder oracles: random next-token tables and exhaustive search.

use std::collections::HashMap;

use morphome::transducer::{StepScorer, EOS, FORBIDDEN};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Next-token distributions drawn at random per prefix.
pub struct TableScorer {
    vocab: usize,
    seed: u64,
    table: HashMap<Vec<usize>, Vec<f64>>,
}

impl TableScorer {
    pub fn new(vocab: usize, seed: u64) -> Self {
        Self {
            vocab,
            seed,
            table: HashMap::new(),
        }
    }

    fn dist(&mut self, prefix: &[usize]) -> Vec<f64> {
        let (vocab, seed) = (self.vocab, self.seed);
        self.table
            .entry(prefix.to_vec())
            .or_insert_with(|| {
                let mut h = seed;
                for &t in prefix {
                    h = h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 1);
                }
                let mut rng = ChaCha8Rng::seed_from_u64(h);
                let raw: Vec<f64> = (0..vocab).map(|_| rng.random_range(-3.0..3.0)).collect();
                let lse = raw.iter().map(|x| x.exp()).sum::<f64>().ln();
                raw.iter().map(|x| x - lse).collect()
            })
            .clone()
    }
}

impl StepScorer for TableScorer {
    fn vocab_size(&self) -> usize {
        self.vocab
    }

    fn log_probs(&mut self, prefixes: &[Vec<usize>]) -> morphome::Result<Vec<Vec<f64>>> {
        Ok(prefixes.iter().map(|p| self.dist(p)).collect())
    }
}

/// Best complete sequence with at most `max_len` tokens counting EOS.
pub fn exhaustive<S: StepScorer>(scorer: &mut S, max_len: usize) -> (Vec<usize>, f64) {
    let allowed: Vec<usize> = (0..scorer.vocab_size())
        .filter(|t| !FORBIDDEN.contains(t) && *t != EOS)
        .collect();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut frontier = vec![(Vec::<usize>::new(), 0.0)];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for (prefix, score) in frontier {
            let lp = scorer.log_probs(std::slice::from_ref(&prefix)).unwrap().remove(0);
            if score + lp[EOS] > best.1 {
                best = (prefix.clone(), score + lp[EOS]);
            }
            for &t in &allowed {
                let mut p = prefix.clone();
                p.push(t);
                next.push((p, score + lp[t]));
            }
        }
        frontier = next;
    }
    best
}
