//! Trains a small transducer on generated paradigms, then decodes unseen
//! lemmas greedily and with a beam.
//!
//! ```text
//! cargo run --release --example train_and_decode
//! ```

use morphome::synth::{synthesize, SynthConfig};
use morphome::transducer::{beam_decode, greedy_decode_batch, train, ModelConfig, TrainOptions};
use morphome::tripler::{generate_triples, serialize, SerializedExample};

fn examples(tables: &[morphome::corpus::InflectionTable], per_lemma: usize) -> Vec<SerializedExample> {
    tables
        .iter()
        .enumerate()
        .flat_map(|(i, t)| generate_triples(t, i as u64).into_iter().step_by(660 / per_lemma))
        .map(|t| serialize(&t))
        .collect()
}

fn main() -> anyhow::Result<()> {
    let tables = synthesize(&SynthConfig {
        l_lemmas: 30,
        nl_lemmas: 90,
        incomplete_lemmas: 0,
        seed: 4,
    });
    let train_set = examples(&tables[..100], 66);
    let dev = examples(&tables[100..110], 22);
    let test = examples(&tables[110..], 4);

    let config = ModelConfig {
        layers: 2,
        heads: 4,
        embedding_dim: 64,
        feed_forward_dim: 256,
        dropout: 0.1,
        max_updates: 1500,
        batch_size: 64,
        checkpoint_every_epochs: 5,
        lr: 0.001,
        ..ModelConfig::default()
    };
    let mut on_epoch = |e: &morphome::transducer::EpochRecord| {
        if let Some(acc) = e.dev_accuracy {
            println!(
                "epoch {:>3} update {:>5} loss {:.3} dev accuracy {:.1}%",
                e.epoch,
                e.updates,
                e.train_loss,
                100.0 * acc
            );
        }
    };
    let run = train(
        &config,
        &train_set,
        &dev,
        TrainOptions {
            out_dir: None,
            on_epoch: Some(&mut on_epoch),
        },
    )?;
    let best = run.report.selected_checkpoint();
    println!(
        "{} parameters, |V| = {}, initial loss {:.3}; kept the update-{} checkpoint",
        run.report.parameters, run.report.vocab_size, run.report.initial_loss, best.update
    );

    let model = &run.model;
    let max_len = run.report.max_len;
    let sources: Vec<Vec<usize>> = test.iter().map(|e| model.vocab.encode(&e.source)).collect();
    let greedy = greedy_decode_batch(model, &sources, max_len)?;
    let mut correct = 0;
    for (i, (ex, hyp)) in test.iter().zip(&greedy).enumerate() {
        let gold: String = ex.target.split(' ').collect();
        let out = model.vocab.decode_form(&hyp.tokens);
        correct += usize::from(out == gold);
        if i < 6 {
            println!("\n{}\n  gold {gold}  greedy {out}", ex.source);
            for h in beam_decode(model, &sources[i], 3, max_len)?.n_best {
                println!("  beam {:<12} {:.3}", model.vocab.decode_form(&h.tokens), h.score);
            }
        }
    }
    println!(
        "\ngreedy accuracy on {} unseen-lemma triples: {:.1}%",
        test.len(),
        100.0 * correct as f64 / test.len() as f64
    );
    Ok(())
}
