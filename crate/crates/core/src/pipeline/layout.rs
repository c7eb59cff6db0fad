use std::path::{Path, PathBuf};

use super::DatasetKey;
use crate::sampler::dataset_dir;
use crate::tripler::DatasetFiles;

/// Artifact paths below the output directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
        }
    }

    pub fn synthetic_corpus(&self) -> PathBuf {
        self.root.join("corpus/synthetic.unimorph")
    }

    pub fn tables(&self) -> PathBuf {
        self.root.join("corpus/tables.tsv")
    }

    pub fn ingest_report(&self) -> PathBuf {
        self.root.join("corpus/ingest_report.tsv")
    }

    pub fn classes(&self) -> PathBuf {
        self.root.join("corpus/classes.tsv")
    }

    pub fn class_counts(&self) -> PathBuf {
        self.root.join("corpus/class_counts.tsv")
    }

    pub fn triples(&self) -> DatasetFiles {
        DatasetFiles::new(&self.root.join("triples"), "all")
    }

    pub fn datasets_root(&self) -> PathBuf {
        self.root.join("datasets")
    }

    pub fn dataset(&self, key: &DatasetKey) -> PathBuf {
        dataset_dir(&self.datasets_root(), &key.condition, key.bin, key.run)
    }

    pub fn split(&self, key: &DatasetKey, split: &str) -> DatasetFiles {
        DatasetFiles::new(&self.dataset(key), split)
    }

    /// `prefix` separates sweep models from the main ones.
    pub fn model_dir(&self, prefix: &str, key: &DatasetKey) -> PathBuf {
        dataset_dir(&self.root.join(prefix).join("models"), &key.condition, key.bin, key.run)
    }

    pub fn best_checkpoint(&self, prefix: &str, key: &DatasetKey) -> PathBuf {
        self.model_dir(prefix, key).join("checkpoint_best.ckpt")
    }

    pub fn predictions(&self, prefix: &str, key: &DatasetKey) -> PathBuf {
        self.root
            .join(prefix)
            .join("predictions")
            .join(&key.condition)
            .join(format!("bin{}", key.bin))
            .join(format!("run{}.tsv", key.run))
    }

    pub fn evaluation(&self, name: &str) -> PathBuf {
        self.root.join("evaluation").join(name)
    }

    pub fn analysis(&self, name: &str) -> PathBuf {
        self.root.join("analysis").join(name)
    }

    pub fn sweep_dir(&self, batch_size: usize) -> String {
        format!("sweep/bs{batch_size}")
    }

    pub fn sweep_table(&self) -> PathBuf {
        self.root.join("sweep/batch_sizes.tsv")
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("report").join(name)
    }
}
