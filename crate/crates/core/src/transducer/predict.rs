use std::io::{BufRead, Write};
use std::path::Path;

use morphome_nn::Scalar;

use super::decode::{beam_decode, greedy_decode_batch, Hypothesis};
use super::model::Transducer;
use crate::error::{io_err, Error, Result};
use crate::tripler::SerializedExample;

pub const PREDICTIONS_HEADER: &str = "id\tgold\thypothesis\tlog_score\tcomplete";

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionRow {
    pub id: usize,
    pub gold: String,
    pub hypothesis: String,
    pub log_score: f64,
    /// False when decoding hit the length cap without producing EOS.
    pub complete: bool,
}

impl PredictionRow {
    fn write<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(
            w,
            "{}\t{}\t{}\t{:.6}\t{}",
            self.id, self.gold, self.hypothesis, self.log_score, self.complete
        )
    }
}

/// Examples decoded per beam-1 batch before rows are flushed.
const STREAM_CHUNK: usize = 256;

/// Decodes every example in order and streams one row per example to `out`.
/// Width 1 uses batched greedy decoding, which is the same search.
pub fn predict_examples<T: Scalar, W: Write>(
    model: &Transducer<T>,
    examples: &[SerializedExample],
    beam_width: usize,
    max_len: usize,
    mut out: W,
) -> Result<usize> {
    let io = |e: std::io::Error| Error::Io {
        path: "<predictions>".into(),
        source: e,
    };
    writeln!(out, "{PREDICTIONS_HEADER}").map_err(io)?;
    for (c, chunk) in examples.chunks(STREAM_CHUNK).enumerate() {
        let sources: Vec<Vec<usize>> = chunk.iter().map(|e| model.vocab.encode(&e.source)).collect();
        let hyps: Vec<Hypothesis> = if beam_width == 1 {
            greedy_decode_batch(model, &sources, max_len)?
        } else {
            sources
                .iter()
                .map(|s| beam_decode(model, s, beam_width, max_len).map(|o| o.best))
                .collect::<Result<_>>()?
        };
        for (i, (ex, h)) in chunk.iter().zip(hyps).enumerate() {
            PredictionRow {
                id: c * STREAM_CHUNK + i,
                gold: ex.target.split(' ').collect(),
                hypothesis: model.vocab.decode_form(&h.tokens),
                log_score: h.score,
                complete: h.finished,
            }
            .write(&mut out)
            .map_err(io)?;
        }
        out.flush().map_err(io)?;
    }
    Ok(examples.len())
}

pub fn read_predictions(path: &Path) -> Result<Vec<PredictionRow>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if n == 0 {
            if line != PREDICTIONS_HEADER {
                return Err(Error::Serialization(format!("{}: unexpected header", path.display())));
            }
            continue;
        }
        let bad = || Error::Malformed {
            line: n + 1,
            reason: format!("bad prediction row in {}", path.display()),
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(bad());
        }
        rows.push(PredictionRow {
            id: cols[0].parse().map_err(|_| bad())?,
            gold: cols[1].to_string(),
            hypothesis: cols[2].to_string(),
            log_score: cols[3].parse().map_err(|_| bad())?,
            complete: cols[4].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}
