use morphome_nn::graph::log_sum_exp;
use morphome_nn::{Graph, Scalar};

use super::model::{CrossCache, Transducer};
use super::vocab::{BOS, EOS, PAD, UNK};
use crate::error::Result;

/// Next-token log-probabilities for a set of prefixes (BOS excluded).
pub trait StepScorer {
    fn vocab_size(&self) -> usize;
    fn log_probs(&mut self, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>>;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Output tokens without BOS and EOS.
    pub tokens: Vec<usize>,
    /// Sum of token log-probabilities (EOS included when finished).
    pub score: f64,
    pub finished: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamOutput {
    pub best: Hypothesis,
    /// Finished hypotheses, best first (at most `width`).
    pub n_best: Vec<Hypothesis>,
}

impl BeamOutput {
    /// True when no hypothesis reached EOS and `best` is a partial one.
    pub fn is_partial(&self) -> bool {
        !self.best.finished
    }
}

/// Tokens never proposed during search.
pub const FORBIDDEN: [usize; 3] = [PAD, BOS, UNK];

fn by_score_desc(a: &(f64, usize, usize), b: &(f64, usize, usize)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Beam search over at most `max_len` output tokens (EOS counted).
///
/// At each step all one-token extensions of the live hypotheses are ranked;
/// EOS extensions ranked within the top `width` become finished, and the best
/// `width` non-EOS extensions stay live. Search stops once the best finished
/// score is at least the best live score, which is exact because extending a
/// hypothesis never raises its score. No length normalization is applied.
pub fn beam_search<S: StepScorer>(scorer: &mut S, width: usize, max_len: usize) -> Result<BeamOutput> {
    assert!(width > 0, "beam width must be positive");
    let vocab = scorer.vocab_size();
    let mut live: Vec<Hypothesis> = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    for _ in 0..max_len {
        let prefixes: Vec<Vec<usize>> = live.iter().map(|h| h.tokens.clone()).collect();
        let lps = scorer.log_probs(&prefixes)?;
        let mut cands: Vec<(f64, usize, usize)> = Vec::with_capacity(live.len() * vocab);
        for (i, (h, lp)) in live.iter().zip(&lps).enumerate() {
            for (tok, &l) in lp.iter().enumerate() {
                if !FORBIDDEN.contains(&tok) {
                    cands.push((h.score + l, i, tok));
                }
            }
        }
        cands.sort_by(by_score_desc);
        let mut next = Vec::with_capacity(width);
        for (rank, &(score, i, tok)) in cands.iter().enumerate() {
            if tok == EOS {
                if rank < width {
                    finished.push(Hypothesis {
                        tokens: live[i].tokens.clone(),
                        score,
                        finished: true,
                    });
                }
            } else if next.len() < width {
                let mut tokens = live[i].tokens.clone();
                tokens.push(tok);
                next.push(Hypothesis {
                    tokens,
                    score,
                    finished: false,
                });
            }
            if next.len() == width && rank + 1 >= width {
                break;
            }
        }
        finished.sort_by(|a, b| b.score.total_cmp(&a.score));
        finished.truncate(width);
        live = next;
        let best_live = live.first().map(|h| h.score);
        match (finished.first(), best_live) {
            (_, None) => break,
            (Some(f), Some(l)) if f.score >= l => break,
            _ => {}
        }
    }
    let best = match finished.first() {
        Some(f) => f.clone(),
        None => live.into_iter().next().unwrap_or(Hypothesis {
            tokens: Vec::new(),
            score: f64::NEG_INFINITY,
            finished: false,
        }),
    };
    Ok(BeamOutput { best, n_best: finished })
}

/// Greedy search: the single best extension at each step, lowest id on ties.
pub fn greedy_search<S: StepScorer>(scorer: &mut S, max_len: usize) -> Result<Hypothesis> {
    let mut h = Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        finished: false,
    };
    for _ in 0..max_len {
        let lp = scorer.log_probs(std::slice::from_ref(&h.tokens))?.remove(0);
        let (tok, l) = argmax_allowed(&lp);
        h.score += l;
        if tok == EOS {
            h.finished = true;
            break;
        }
        h.tokens.push(tok);
    }
    Ok(h)
}

fn argmax_allowed(lp: &[f64]) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (tok, &l) in lp.iter().enumerate() {
        if !FORBIDDEN.contains(&tok) && (best.0 == usize::MAX || l > best.1) {
            best = (tok, l);
        }
    }
    best
}

/// Scores prefixes for one source; the encoder runs once at construction.
pub struct ModelScorer<'m, T: Scalar> {
    model: &'m Transducer<T>,
    encoder: Graph<'m, T>,
    cache: CrossCache,
}

impl<'m, T: Scalar> ModelScorer<'m, T> {
    pub fn new(model: &'m Transducer<T>, src: &[usize]) -> Result<Self> {
        let mut encoder = Graph::new(&model.params).no_grad();
        let len = src.len().max(1);
        let mut ids = src.to_vec();
        ids.resize(len, PAD);
        let enc = model.encode(&mut encoder, &ids, 1, len, 0.0)?;
        let cache = model.cross_cache(&mut encoder, &enc)?;
        Ok(Self { model, encoder, cache })
    }
}

impl<T: Scalar> StepScorer for ModelScorer<'_, T> {
    fn vocab_size(&self) -> usize {
        self.model.arch.vocab_size
    }

    fn log_probs(&mut self, prefixes: &[Vec<usize>]) -> Result<Vec<Vec<f64>>> {
        let n = prefixes.len();
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut step = Graph::new(&self.model.params).no_grad();
        let cache = self
            .model
            .select_cache(&self.encoder, &mut step, &self.cache, &vec![0; n])?;
        let t = prefixes.iter().map(Vec::len).max().unwrap_or(0) + 1;
        let mut tgt = vec![PAD; n * t];
        for (b, p) in prefixes.iter().enumerate() {
            tgt[b * t] = BOS;
            tgt[b * t + 1..b * t + 1 + p.len()].copy_from_slice(p);
        }
        let logits = self.model.decode(&mut step, &cache, &tgt, t, 0.0)?;
        let lv = step.value(logits);
        Ok(prefixes
            .iter()
            .enumerate()
            .map(|(b, p)| log_softmax_row(lv.row(b * t + p.len())))
            .collect())
    }
}

fn log_softmax_row<T: Scalar>(row: &[T]) -> Vec<f64> {
    let raw: Vec<f64> = row.iter().map(|x| x.to_f64().unwrap_or(f64::NAN)).collect();
    let lse = log_sum_exp(&raw);
    raw.iter().map(|x| x - lse).collect()
}

/// Beam search for one encoded source line.
pub fn beam_decode<T: Scalar>(
    model: &Transducer<T>,
    src: &[usize],
    width: usize,
    max_len: usize,
) -> Result<BeamOutput> {
    let mut scorer = ModelScorer::new(model, src)?;
    beam_search(&mut scorer, width, max_len)
}

/// Sources decoded together by [`greedy_decode_batch`].
const GREEDY_CHUNK: usize = 64;

/// Greedy decoding of many sources, chunked; equivalent to running
/// [`greedy_search`] on each.
pub fn greedy_decode_batch<T: Scalar>(
    model: &Transducer<T>,
    sources: &[Vec<usize>],
    max_len: usize,
) -> Result<Vec<Hypothesis>> {
    let mut out = Vec::with_capacity(sources.len());
    for chunk in sources.chunks(GREEDY_CHUNK) {
        out.extend(greedy_chunk(model, chunk, max_len)?);
    }
    Ok(out)
}

fn greedy_chunk<T: Scalar>(model: &Transducer<T>, sources: &[Vec<usize>], max_len: usize) -> Result<Vec<Hypothesis>> {
    let n = sources.len();
    let mut hyps: Vec<Hypothesis> = (0..n)
        .map(|_| Hypothesis {
            tokens: Vec::new(),
            score: 0.0,
            finished: false,
        })
        .collect();
    let mut g = Graph::new(&model.params).no_grad();
    let len = sources.iter().map(Vec::len).max().unwrap_or(0).max(1);
    let mut ids = vec![PAD; n * len];
    for (b, s) in sources.iter().enumerate() {
        ids[b * len..b * len + s.len()].copy_from_slice(s);
    }
    let enc = model.encode(&mut g, &ids, n, len, 0.0)?;
    let cache = model.cross_cache(&mut g, &enc)?;
    for _ in 0..max_len {
        let active: Vec<usize> = (0..n).filter(|&i| !hyps[i].finished).collect();
        if active.is_empty() {
            break;
        }
        // unfinished hypotheses all have the same length
        let t = hyps[active[0]].tokens.len() + 1;
        let mut tgt = vec![PAD; active.len() * t];
        for (row, &b) in active.iter().enumerate() {
            tgt[row * t] = BOS;
            tgt[row * t + 1..(row + 1) * t].copy_from_slice(&hyps[b].tokens);
        }
        let mut step = Graph::new(&model.params).no_grad();
        let sub = model.select_cache(&g, &mut step, &cache, &active)?;
        let logits = model.decode(&mut step, &sub, &tgt, t, 0.0)?;
        let lv = step.value(logits);
        for (row, &b) in active.iter().enumerate() {
            let lp = log_softmax_row(lv.row(row * t + t - 1));
            let (tok, l) = argmax_allowed(&lp);
            let h = &mut hyps[b];
            h.score += l;
            if tok == EOS {
                h.finished = true;
            } else {
                h.tokens.push(tok);
            }
        }
    }
    Ok(hyps)
}
