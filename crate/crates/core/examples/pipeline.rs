//! Runs every stage of a miniature experiment in a scratch directory, shows
//! that a second run is a no-op, and prints the experiment summary.
//!
//! ```text
//! cargo run --release --example pipeline [output-dir]
//! ```

use std::path::PathBuf;

use morphome::pipeline::{ExperimentConfig, Pipeline};
use morphome::synth::SynthConfig;
use morphome::transducer::ModelConfig;

fn main() -> anyhow::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("morphome-pipeline-example"));
    let mut config = ExperimentConfig {
        output_dir: out.clone(),
        master_seed: 3,
        ..ExperimentConfig::default()
    };
    config.corpus.synthetic = Some(SynthConfig {
        l_lemmas: 20,
        nl_lemmas: 40,
        incomplete_lemmas: 2,
        seed: 1,
    });
    config.sampling.total_lemmas = 20;
    config.sampling.split.train = 12;
    config.sampling.split.dev = 2;
    config.sampling.split.test = 6;
    config.sampling.bins = 2;
    config.sampling.runs = 2;
    config.model = ModelConfig {
        layers: 1,
        heads: 2,
        embedding_dim: 16,
        feed_forward_dim: 32,
        max_updates: 40,
        batch_size: 64,
        beam_width: 1,
        checkpoint_every_epochs: 1,
        ..ModelConfig::default()
    };
    config.sweep.batch_sizes = vec![32, 128];
    config.sweep.conditions = vec!["50L-50NL".into()];
    println!("configuration:\n{}", config.to_toml());

    let pipeline = Pipeline::new(config)?.with_logger(|msg| eprintln!("  {msg}"));
    let first = pipeline.run_all(true)?;
    println!("first run: {} units ran", first.ran);
    let again = pipeline.run_all(true)?;
    println!("second run: {} ran, {} already current", again.ran, again.skipped);

    let report = std::fs::read_to_string(out.join("report/experiment_summary.tsv"))?;
    for line in report
        .lines()
        .filter(|l| l.starts_with("accuracy\t") || l.starts_with("section"))
    {
        println!("{line}");
    }
    println!("full outputs under {}", out.display());
    Ok(())
}
