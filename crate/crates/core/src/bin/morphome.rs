use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use morphome::pipeline::{DatasetFilter, ExperimentConfig, Pipeline, StageSummary};

#[derive(Parser)]
#[command(
    name = "morphome",
    version,
    about = "Two-source reinflection experiments on Spanish L-shaped verbs"
)]
struct Cli {
    /// Experiment configuration (TOML). Relative corpus paths resolve against
    /// $MORPHOME_DATA_ROOT when set, otherwise against the file's directory.
    #[arg(short, long, global = true, default_value = "morphome.toml")]
    config: PathBuf,
    /// Re-run stages even when their manifests are current.
    #[arg(long, global = true)]
    force: bool,
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Datasets {
    /// Restrict to these conditions (repeatable, e.g. 10L-90NL).
    #[arg(long = "condition")]
    conditions: Vec<String>,
    #[arg(long)]
    bin: Option<usize>,
    #[arg(long)]
    run: Option<usize>,
}

impl From<Datasets> for DatasetFilter {
    fn from(d: Datasets) -> Self {
        DatasetFilter {
            conditions: d.conditions,
            bin: d.bin,
            run: d.run,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse the corpus into complete 12-cell tables.
    Ingest,
    /// Label each table L or NL.
    Classify,
    /// Generate reinflection triples for every sampled lemma.
    Triples,
    /// Build the train/dev/test datasets of each condition, bin and run.
    Sample {
        /// Restrict to these conditions (repeatable).
        #[arg(long = "condition")]
        conditions: Vec<String>,
    },
    /// Train one transducer per dataset.
    Train(Datasets),
    /// Decode the test set of each dataset with its selected checkpoint.
    Predict(Datasets),
    /// Score predictions and summarize accuracy with confidence intervals.
    Evaluate,
    /// Cell-combination tables, contrasts, knowledge states and pair analyses.
    Analyze,
    /// Train and test across batch sizes.
    Sweep {
        /// Comma-separated batch sizes; defaults to the configured list.
        #[arg(long, value_delimiter = ',')]
        batch_sizes: Option<Vec<usize>>,
    },
    /// Assemble all summary tables into one experiment summary.
    Report,
    /// Every stage in order, resuming where manifests are current.
    Run {
        /// Include the batch-size sweep.
        #[arg(long)]
        sweep: bool,
    },
    /// Print the resolved configuration.
    Config,
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let config = ExperimentConfig::load(&cli.config)?;
    if let Command::Config = cli.command {
        print!("{}", config.to_toml());
        return Ok(());
    }
    let quiet = cli.quiet;
    let pipeline = Pipeline::new(config)?.with_force(cli.force).with_logger(move |msg| {
        if !quiet {
            eprintln!("{msg}");
        }
    });
    let summary: StageSummary = match cli.command {
        Command::Ingest => pipeline.ingest()?,
        Command::Classify => pipeline.classify()?,
        Command::Triples => pipeline.triples()?,
        Command::Sample { conditions } => pipeline.sample(&DatasetFilter {
            conditions,
            ..DatasetFilter::all()
        })?,
        Command::Train(d) => pipeline.train(&d.into())?,
        Command::Predict(d) => pipeline.predict(&d.into())?,
        Command::Evaluate => pipeline.evaluate()?,
        Command::Analyze => pipeline.analyze()?,
        Command::Sweep { batch_sizes } => pipeline.sweep(batch_sizes)?,
        Command::Report => pipeline.report()?,
        Command::Run { sweep } => pipeline.run_all(sweep)?,
        Command::Config => unreachable!(),
    };
    if !quiet {
        eprintln!(
            "done: {} unit(s) ran, {} up to date; outputs in {}",
            summary.ran,
            summary.skipped,
            pipeline.root().display()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // errors outside the library (config file unreadable etc.) count as user errors
            let user = e.downcast_ref::<morphome::Error>().is_none_or(|e| e.is_user_error());
            ExitCode::from(if user { 1 } else { 2 })
        }
    }
}
