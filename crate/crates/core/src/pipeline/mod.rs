//! File-based experiment pipeline: every stage reads artifacts of earlier
//! stages, writes its own atomically and records a manifest. A stage unit
//! whose inputs, configuration and outputs are unchanged is skipped.

mod config;
mod layout;
mod manifest;
mod report;
mod stages;
mod sweep;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

pub use config::{CorpusConfig, EvaluationConfig, ExperimentConfig, SamplingConfig, SweepConfig, DATA_ROOT_ENV};
pub use layout::Layout;
pub use manifest::{display_path, fingerprint, manifest_path, FileRecord, RunManifest, SOFTWARE_VERSION};
pub use report::REPORT_HEADER;
pub use stages::{load_tables, read_examples, TABLES_HEADER};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Ingest,
    Classify,
    Triples,
    Sample,
    Train,
    Predict,
    Evaluate,
    Analyze,
    Sweep,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 10] = [
        Stage::Ingest,
        Stage::Classify,
        Stage::Triples,
        Stage::Sample,
        Stage::Train,
        Stage::Predict,
        Stage::Evaluate,
        Stage::Analyze,
        Stage::Sweep,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Classify => "classify",
            Stage::Triples => "triples",
            Stage::Sample => "sample",
            Stage::Train => "train",
            Stage::Predict => "predict",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Sweep => "sweep",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Whether a stage unit did work.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitOutcome {
    Ran,
    Skipped,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StageSummary {
    pub ran: usize,
    pub skipped: usize,
}

impl StageSummary {
    fn add(&mut self, o: UnitOutcome) {
        match o {
            UnitOutcome::Ran => self.ran += 1,
            UnitOutcome::Skipped => self.skipped += 1,
        }
    }

    fn merge(&mut self, other: StageSummary) {
        self.ran += other.ran;
        self.skipped += other.skipped;
    }
}

/// Restricts per-dataset stages to some conditions, bins or runs.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetFilter {
    /// Empty means every configured condition.
    pub conditions: Vec<String>,
    pub bin: Option<usize>,
    pub run: Option<usize>,
}

impl DatasetFilter {
    pub fn all() -> Self {
        Self::default()
    }
}

/// Identifies one (condition, bin, run) dataset.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DatasetKey {
    pub condition: String,
    pub bin: usize,
    pub run: usize,
}

impl DatasetKey {
    pub fn id(&self) -> String {
        crate::sampler::dataset_id(&self.condition, self.bin, self.run)
    }
}

pub struct Pipeline {
    pub config: ExperimentConfig,
    pub layout: Layout,
    /// Re-run units even when their manifests are current.
    pub force: bool,
    log: Box<dyn Fn(&str)>,
}

impl Pipeline {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config.output_dir);
        Ok(Self {
            config,
            layout,
            force: false,
            log: Box::new(|_| {}),
        })
    }

    pub fn with_force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn with_logger(mut self, log: impl Fn(&str) + 'static) -> Self {
        self.log = Box::new(log);
        self
    }

    pub fn root(&self) -> &Path {
        &self.layout.root
    }

    fn log(&self, msg: &str) {
        (self.log)(msg)
    }

    /// Hashes the inputs of a unit; a missing one names the stage producing it.
    fn inputs(&self, files: &[(PathBuf, Stage)]) -> Result<Vec<FileRecord>> {
        files
            .iter()
            .map(|(p, stage)| {
                if !p.exists() {
                    return Err(Error::MissingArtifact {
                        path: p.clone(),
                        stage: format!("morphome {stage}"),
                    });
                }
                FileRecord::of(p, self.root())
            })
            .collect()
    }

    /// Runs `body` unless the unit's manifest shows identical inputs,
    /// configuration and outputs. `body` returns the files it wrote.
    fn run_unit(
        &self,
        stage: Stage,
        unit: Option<&str>,
        inputs: Vec<FileRecord>,
        stage_config: serde_json::Value,
        seeds: BTreeMap<String, u64>,
        body: impl FnOnce() -> Result<Vec<PathBuf>>,
    ) -> Result<UnitOutcome> {
        let path = manifest_path(self.root(), stage.name(), unit);
        let fp = fingerprint(&stage_config);
        let label = match unit {
            Some(u) => format!("{stage} {u}"),
            None => stage.to_string(),
        };
        if !self.force {
            if let Some(m) = RunManifest::load(&path)? {
                if m.is_current(self.root(), &fp, &inputs) {
                    self.log(&format!("{label}: up to date"));
                    return Ok(UnitOutcome::Skipped);
                }
            }
        }
        self.log(&format!("{label}: running"));
        let start = Instant::now();
        let written = body().map_err(|e| Error::Stage {
            stage: label.clone(),
            source: Box::new(e),
        })?;
        let artifacts = written
            .iter()
            .map(|p| FileRecord::of(p, self.root()))
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            stage: stage.name().to_string(),
            unit: unit.map(str::to_string),
            inputs,
            fingerprint: fp,
            config: serde_json::to_value(&self.config)?,
            seeds,
            artifacts,
            wall_clock_seconds: start.elapsed().as_secs_f64(),
            software_version: SOFTWARE_VERSION.to_string(),
        };
        manifest.save(&path)?;
        Ok(UnitOutcome::Ran)
    }

    /// Every configured dataset key passing `filter`.
    pub fn dataset_keys(&self, filter: &DatasetFilter) -> Result<Vec<DatasetKey>> {
        let conditions: Vec<String> = if filter.conditions.is_empty() {
            self.config.sampling.conditions.clone()
        } else {
            for c in &filter.conditions {
                self.config.condition(c)?;
            }
            filter.conditions.clone()
        };
        let s = &self.config.sampling;
        for (what, v, max) in [("bin", filter.bin, s.bins), ("run", filter.run, s.runs)] {
            if let Some(v) = v {
                if v >= max {
                    return Err(Error::Config(format!("{what} {v} out of range (configured {max})")));
                }
            }
        }
        let mut keys = Vec::new();
        for condition in conditions {
            for bin in 0..s.bins {
                for run in 0..s.runs {
                    if filter.bin.is_some_and(|b| b != bin) || filter.run.is_some_and(|r| r != run) {
                        continue;
                    }
                    keys.push(DatasetKey {
                        condition: condition.clone(),
                        bin,
                        run,
                    });
                }
            }
        }
        Ok(keys)
    }

    /// ingest → classify → triples → sample → train → predict → evaluate →
    /// analyze → report, resuming wherever manifests are current.
    pub fn run_all(&self, with_sweep: bool) -> Result<StageSummary> {
        let mut total = StageSummary::default();
        let all = DatasetFilter::all();
        total.merge(self.ingest()?);
        total.merge(self.classify()?);
        total.merge(self.triples()?);
        total.merge(self.sample(&all)?);
        total.merge(self.train(&all)?);
        total.merge(self.predict(&all)?);
        total.merge(self.evaluate()?);
        total.merge(self.analyze()?);
        if with_sweep {
            total.merge(self.sweep(None)?);
        }
        total.merge(self.report()?);
        Ok(total)
    }
}
