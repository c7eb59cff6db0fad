use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::CiMethod;
use crate::fsio::read_to_string;
use crate::sampler::{FrequencyCondition, SamplerConfig, SplitSizes};
use crate::synth::SynthConfig;
use crate::transducer::ModelConfig;
use crate::tripler::SourceOrdering;

/// Environment variable naming the directory relative corpus paths resolve against.
pub const DATA_ROOT_ENV: &str = "MORPHOME_DATA_ROOT";

/// Where paradigms come from: a UniMorph file or the built-in generator.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub path: Option<PathBuf>,
    pub synthetic: Option<SynthConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub conditions: Vec<String>,
    /// Lemmas per condition.
    pub total_lemmas: usize,
    pub split: SplitSizes,
    pub bins: usize,
    pub runs: usize,
    pub source_ordering: SourceOrdering,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        let s = SamplerConfig::default();
        Self {
            conditions: FrequencyCondition::standard().map(|c| c.name).to_vec(),
            total_lemmas: FrequencyCondition::TOTAL,
            split: s.split,
            bins: s.bins,
            runs: s.runs,
            source_ordering: s.source_ordering,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub ci: CiMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub batch_sizes: Vec<usize>,
    /// Empty means every sampled condition.
    pub conditions: Vec<String>,
    /// Datasets per condition: bins `0..bins` times runs `0..runs`.
    pub bins: usize,
    pub runs: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            batch_sizes: vec![32, 64, 128, 256, 400, 512, 1024, 2048, 3600],
            conditions: Vec::new(),
            bins: 1,
            runs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub master_seed: u64,
    pub corpus: CorpusConfig,
    pub sampling: SamplingConfig,
    pub model: ModelConfig,
    pub evaluation: EvaluationConfig,
    pub sweep: SweepConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("morphome-out"),
            master_seed: 1,
            corpus: CorpusConfig::default(),
            sampling: SamplingConfig::default(),
            model: ModelConfig::default(),
            evaluation: EvaluationConfig::default(),
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Reads a config file and resolves its relative paths: the output
    /// directory against the file's directory, the corpus against
    /// `MORPHOME_DATA_ROOT` when set and the file's directory otherwise.
    pub fn load(path: &Path) -> Result<Self> {
        let mut config =
            Self::from_toml(&read_to_string(path)?).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let data_root = std::env::var_os(DATA_ROOT_ENV).map(PathBuf::from);
        config.resolve_paths(base, data_root.as_deref());
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path, data_root: Option<&Path>) {
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
        if let Some(p) = &self.corpus.path {
            if p.is_relative() {
                self.corpus.path = Some(data_root.unwrap_or(base).join(p));
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match (&self.corpus.path, &self.corpus.synthetic) {
            (Some(_), Some(_)) => problems.push("corpus: set either path or synthetic, not both".to_string()),
            (None, None) => problems.push("corpus: set path or synthetic".to_string()),
            _ => {}
        }
        let s = &self.sampling;
        if s.conditions.is_empty() {
            problems.push("sampling.conditions: at least one condition".into());
        }
        for c in s.conditions.iter().chain(&self.sweep.conditions) {
            if let Err(e) = FrequencyCondition::parse_with_total(c, s.total_lemmas) {
                problems.push(format!("sampling.conditions: {e}"));
            }
        }
        if s.split.total() != s.total_lemmas {
            problems.push(format!(
                "sampling.split: {} + {} + {} must equal total_lemmas {}",
                s.split.train, s.split.dev, s.split.test, s.total_lemmas
            ));
        }
        if s.bins == 0 || s.runs == 0 {
            problems.push("sampling.bins and sampling.runs must be positive".into());
        }
        if let Err(Error::Config(m)) = self.model.validate() {
            problems.push(format!("model: {m}"));
        }
        let w = &self.sweep;
        if w.batch_sizes.contains(&0) {
            problems.push("sweep.batch_sizes: sizes must be positive".into());
        }
        if w.bins == 0 || w.bins > s.bins || w.runs == 0 || w.runs > s.runs {
            problems.push("sweep.bins/runs must be in 1..=sampling.bins/runs".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn conditions(&self) -> Result<Vec<FrequencyCondition>> {
        self.sampling
            .conditions
            .iter()
            .map(|c| FrequencyCondition::parse_with_total(c, self.sampling.total_lemmas))
            .collect()
    }

    pub fn condition(&self, name: &str) -> Result<FrequencyCondition> {
        FrequencyCondition::parse_with_total(name, self.sampling.total_lemmas)
    }

    pub fn sweep_conditions(&self) -> Result<Vec<FrequencyCondition>> {
        if self.sweep.conditions.is_empty() {
            return self.conditions();
        }
        self.sweep.conditions.iter().map(|c| self.condition(c)).collect()
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            split: self.sampling.split,
            bins: self.sampling.bins,
            runs: self.sampling.runs,
            source_ordering: self.sampling.source_ordering,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_need_a_corpus() {
        let c = ExperimentConfig::default();
        assert!(c.validate().unwrap_err().to_string().contains("corpus"));
        let c = ExperimentConfig {
            corpus: CorpusConfig {
                path: Some("spa".into()),
                synthetic: None,
            },
            ..ExperimentConfig::default()
        };
        c.validate().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn problems_are_collected() {
        let text = "[corpus]\npath = \"x\"\n[sampling]\nconditions = [\"20L-70NL\"]\nbins = 0\n";
        let err = ExperimentConfig::from_toml(text)
            .unwrap()
            .validate()
            .unwrap_err()
            .to_string();
        assert!(err.contains("20L-70NL") && err.contains("bins"), "{err}");
        assert!(ExperimentConfig::from_toml("[sampling]\nbogus = 1\n").is_err());
    }

    #[test]
    fn relative_corpus_resolves_against_data_root() {
        let mut c = ExperimentConfig::from_toml("[corpus]\npath = \"spa\"\n").unwrap();
        c.resolve_paths(Path::new("/cfg"), Some(Path::new("/data")));
        assert_eq!(c.corpus.path.as_deref(), Some(Path::new("/data/spa")));
        assert_eq!(c.output_dir, Path::new("/cfg/morphome-out"));
    }
}
