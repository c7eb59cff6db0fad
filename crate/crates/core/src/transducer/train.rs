use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use morphome_nn::{Adam, Checkpoint, Graph, NnError, Tensor};

use super::config::{BatchUnit, ModelConfig};
use super::decode::{beam_decode, greedy_decode_batch};
use super::model::{Architecture, Batch, Transducer};
use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::seeds::derive_seed;
use crate::tripler::SerializedExample;

pub const CHECKPOINT_KIND: &str = "morphome-transducer";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Updates completed at the end of the epoch.
    pub updates: usize,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
    pub dev_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointRecord {
    pub epoch: usize,
    pub update: usize,
    pub dev_loss: f64,
    pub dev_accuracy: f64,
    /// File name inside the output directory, when one was given.
    pub path: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<CheckpointRecord>,
    /// Index into `checkpoints` of the model returned.
    pub selected: usize,
    pub updates: usize,
    /// Loss of the first batch before any update.
    pub initial_loss: f64,
    pub vocab_size: usize,
    pub parameters: usize,
    pub max_len: usize,
}

impl TrainReport {
    pub fn selected_checkpoint(&self) -> &CheckpointRecord {
        &self.checkpoints[self.selected]
    }
}

pub struct Trained {
    pub model: Transducer<f32>,
    pub report: TrainReport,
}

/// Where checkpoints go and who hears about progress.
#[derive(Default)]
pub struct TrainOptions<'a> {
    pub out_dir: Option<PathBuf>,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochRecord)>,
}

/// Encoded (source, target) id sequences.
pub struct EncodedSet {
    pub pairs: Vec<(Vec<usize>, Vec<usize>)>,
}

impl EncodedSet {
    pub fn new(vocab: &Vocabulary, examples: &[SerializedExample]) -> Self {
        Self {
            pairs: examples
                .iter()
                .map(|e| (vocab.encode(&e.source), vocab.encode(&e.target)))
                .collect(),
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Batch {
        let pairs: Vec<(&[usize], &[usize])> = idx
            .iter()
            .map(|&i| (self.pairs[i].0.as_slice(), self.pairs[i].1.as_slice()))
            .collect();
        Batch::new(&pairs)
    }
}

/// Splits a permutation into batches of `size` examples or tokens.
pub fn make_batches(order: &[usize], set: &EncodedSet, size: usize, unit: BatchUnit) -> Vec<Vec<usize>> {
    match unit {
        BatchUnit::Examples => order.chunks(size).map(<[usize]>::to_vec).collect(),
        BatchUnit::Tokens => {
            let mut out = Vec::new();
            let mut cur = Vec::new();
            let mut tokens = 0;
            for &i in order {
                let n = set.pairs[i].0.len() + set.pairs[i].1.len() + 1;
                if !cur.is_empty() && tokens + n > size {
                    out.push(std::mem::take(&mut cur));
                    tokens = 0;
                }
                cur.push(i);
                tokens += n;
            }
            if !cur.is_empty() {
                out.push(cur);
            }
            out
        }
    }
}

/// Token-weighted smoothed loss and exact-match accuracy on a dev set.
pub fn evaluate_dev(
    model: &Transducer<f32>,
    dev: &EncodedSet,
    smoothing: f64,
    beam_width: usize,
    max_len: usize,
) -> Result<(f64, f64)> {
    if dev.pairs.is_empty() {
        return Ok((0.0, 0.0));
    }
    let (mut total, mut tokens) = (0.0, 0usize);
    let idx: Vec<usize> = (0..dev.pairs.len()).collect();
    for chunk in idx.chunks(64) {
        for (loss, n) in model.example_losses(&dev.batch(chunk), smoothing)? {
            total += loss;
            tokens += n;
        }
    }
    let sources: Vec<Vec<usize>> = dev.pairs.iter().map(|p| p.0.clone()).collect();
    let hyps = if beam_width == 1 {
        greedy_decode_batch(model, &sources, max_len)?
    } else {
        sources
            .iter()
            .map(|s| beam_decode(model, s, beam_width, max_len).map(|o| o.best))
            .collect::<Result<_>>()?
    };
    let correct = hyps
        .iter()
        .zip(&dev.pairs)
        .filter(|(h, p)| h.finished && h.tokens == p.1)
        .count();
    Ok((total / tokens.max(1) as f64, correct as f64 / dev.pairs.len() as f64))
}

fn rng_state(rng: &ChaCha8Rng) -> serde_json::Value {
    serde_json::json!({
        "seed": hex::encode(rng.get_seed()),
        "stream": rng.get_stream().to_string(),
        "word_pos": rng.get_word_pos().to_string(),
    })
}

/// Header and tensors of a training checkpoint.
pub fn checkpoint_of(
    model: &Transducer<f32>,
    config: &ModelConfig,
    adam: Option<&Adam<f32>>,
    meta: serde_json::Value,
) -> Checkpoint<f32> {
    let mut header = serde_json::json!({
        "kind": CHECKPOINT_KIND,
        "arch": model.arch,
        "vocab": model.vocab,
        "config": config,
    });
    if let (Some(obj), serde_json::Value::Object(extra)) = (header.as_object_mut(), meta) {
        obj.extend(extra);
    }
    let mut ckpt = Checkpoint::new(header);
    for p in model.params.iter() {
        ckpt.push(p.name.clone(), p.value.clone());
    }
    if let Some(adam) = adam {
        let (m, v) = adam.moments();
        for ((p, m), v) in model.params.iter().zip(m).zip(v) {
            ckpt.push(format!("adam.m.{}", p.name), m.clone());
            ckpt.push(format!("adam.v.{}", p.name), v.clone());
        }
        ckpt.header["adam_step"] = adam.step_count().into();
    }
    ckpt
}

/// Model stored in a checkpoint written by [`train`].
pub fn load_model(path: &Path) -> Result<(Transducer<f32>, serde_json::Value)> {
    let ckpt = Checkpoint::<f32>::load(path)?;
    if ckpt.header["kind"] != CHECKPOINT_KIND {
        return Err(Error::Nn(NnError::Checkpoint(format!(
            "{} is not a transducer checkpoint",
            path.display()
        ))));
    }
    let arch: Architecture = serde_json::from_value(ckpt.header["arch"].clone())?;
    let vocab: Vocabulary = serde_json::from_value(ckpt.header["vocab"].clone())?;
    let params: Vec<(String, Tensor<f32>)> = ckpt
        .tensors
        .iter()
        .filter(|(n, _)| !n.starts_with("adam."))
        .cloned()
        .collect();
    let model = Transducer::from_params(arch, vocab, &params)?;
    Ok((model, ckpt.header))
}

fn diverged(update: usize, last: &Option<PathBuf>) -> impl FnOnce(Error) -> Error + '_ {
    move |e| match e {
        Error::Nn(NnError::NonFinite { .. }) => Error::Diverged {
            update,
            checkpoint: last.clone(),
        },
        other => other,
    }
}

/// Trains for `max_updates` optimizer steps, evaluating and checkpointing
/// every `checkpoint_every_epochs` epochs and after the last update. Returns
/// the checkpoint with the best dev sequence accuracy (latest on ties).
pub fn train(
    config: &ModelConfig,
    train_set: &[SerializedExample],
    dev_set: &[SerializedExample],
    mut options: TrainOptions<'_>,
) -> Result<Trained> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("empty training set".into()));
    }
    let vocab = Vocabulary::build(train_set);
    let train_enc = EncodedSet::new(&vocab, train_set);
    let dev_enc = EncodedSet::new(&vocab, dev_set);
    let max_len = train_enc.pairs.iter().map(|p| p.1.len()).max().unwrap_or(0) + config.max_len_margin;
    let mut model = Transducer::<f32>::new(config, vocab, derive_seed(config.seed, &["init"]));
    let mut adam = Adam::new(config.adam(), &model.params);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["batches"]));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, &["dropout"]));
    if let Some(dir) = &options.out_dir {
        std::fs::create_dir_all(dir).map_err(crate::error::io_err(dir))?;
    }

    let mut epochs = Vec::new();
    let mut checkpoints: Vec<CheckpointRecord> = Vec::new();
    let mut best: Option<(usize, Vec<Tensor<f32>>)> = None;
    let mut last_saved: Option<PathBuf> = None;
    let mut updates = 0usize;
    let mut initial_loss = None;
    let mut order: Vec<usize> = (0..train_enc.pairs.len()).collect();
    let mut epoch = 0;
    while updates < config.max_updates {
        epoch += 1;
        order.shuffle(&mut batch_rng);
        let (mut loss_sum, mut batches) = (0.0, 0usize);
        for idx in make_batches(&order, &train_enc, config.batch_size, config.batch_unit) {
            if updates == config.max_updates {
                break;
            }
            let batch = train_enc.batch(&idx);
            model.params.zero_grad();
            let loss_value = {
                let mut g = Graph::training(&model.params, &mut dropout_rng);
                let loss = model
                    .loss(&mut g, &batch, config.label_smoothing, config.dropout)
                    .map_err(diverged(updates, &last_saved))?;
                let grads = g.backward(loss)?;
                let value = f64::from(g.value(loss).item());
                drop(g);
                grads.accumulate_into(&mut model.params);
                value
            };
            initial_loss.get_or_insert(loss_value);
            model.params.clip_grad_norm(config.clip_norm as f32);
            let lr = config.lr_schedule.rate(config.lr, updates as u64 + 1);
            adam.step(&mut model.params, lr)
                .map_err(|e| diverged(updates, &last_saved)(Error::Nn(e)))?;
            updates += 1;
            loss_sum += loss_value;
            batches += 1;
        }
        let mut record = EpochRecord {
            epoch,
            updates,
            train_loss: loss_sum / batches.max(1) as f64,
            dev_loss: None,
            dev_accuracy: None,
        };
        if epoch % config.checkpoint_every_epochs == 0 || updates == config.max_updates {
            let (dev_loss, dev_acc) =
                evaluate_dev(&model, &dev_enc, config.label_smoothing, config.dev_beam_width, max_len)?;
            record.dev_loss = Some(dev_loss);
            record.dev_accuracy = Some(dev_acc);
            let path = match &options.out_dir {
                Some(dir) => {
                    let name = format!("checkpoint_e{epoch:04}.ckpt");
                    let path = dir.join(&name);
                    let meta = serde_json::json!({
                        "epoch": epoch,
                        "update": updates,
                        "max_len": max_len,
                        "dev_loss": dev_loss,
                        "dev_accuracy": dev_acc,
                        "rng": {"batches": rng_state(&batch_rng), "dropout": rng_state(&dropout_rng)},
                    });
                    checkpoint_of(&model, config, Some(&adam), meta).save(&path)?;
                    last_saved = Some(path.clone());
                    Some(name)
                }
                None => None,
            };
            checkpoints.push(CheckpointRecord {
                epoch,
                update: updates,
                dev_loss,
                dev_accuracy: dev_acc,
                path,
            });
            let is_best = best
                .as_ref()
                .is_none_or(|(i, _)| dev_acc >= checkpoints[*i].dev_accuracy);
            if is_best {
                let values = model.params.iter().map(|p| p.value.clone()).collect();
                best = Some((checkpoints.len() - 1, values));
            }
        }
        if let Some(cb) = options.on_epoch.as_mut() {
            cb(&record);
        }
        epochs.push(record);
    }
    let (selected, values) = best.expect("a checkpoint is always taken after the last update");
    for (id, value) in model.params.ids().collect::<Vec<_>>().into_iter().zip(values) {
        *model.params.value_mut(id) = value;
    }
    if let Some(dir) = &options.out_dir {
        let c = &checkpoints[selected];
        let meta = serde_json::json!({
            "epoch": c.epoch,
            "update": c.update,
            "max_len": max_len,
            "dev_loss": c.dev_loss,
            "dev_accuracy": c.dev_accuracy,
        });
        checkpoint_of(&model, config, None, meta).save(&dir.join("checkpoint_best.ckpt"))?;
    }
    let report = TrainReport {
        epochs,
        checkpoints,
        selected,
        updates,
        initial_loss: initial_loss.unwrap_or(f64::NAN),
        vocab_size: model.vocab.len(),
        parameters: model.num_parameters(),
        max_len,
    };
    Ok(Trained { model, report })
}
