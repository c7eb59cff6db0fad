use std::collections::BTreeMap;
use std::io::Write;

use serde_json::json;

use super::{DatasetKey, Pipeline, Stage, StageSummary};
use crate::error::{io_err, Result};
use crate::evaluation::{summarize, Metric};
use crate::fsio::atomic_write;
use crate::transducer::ModelConfig;

pub const SWEEP_HEADER: &str = "batch_size\tcondition\tverb_class\tmetric\tmean\tci_low\tci_high\tmodels\trecords";

impl Pipeline {
    fn sweep_keys(&self) -> Result<Vec<DatasetKey>> {
        let mut keys = Vec::new();
        for c in self.config.sweep_conditions()? {
            for bin in 0..self.config.sweep.bins {
                for run in 0..self.config.sweep.runs {
                    keys.push(DatasetKey {
                        condition: c.name.clone(),
                        bin,
                        run,
                    });
                }
            }
        }
        Ok(keys)
    }

    /// Trains and tests one model per batch size and sweep dataset, then
    /// tabulates accuracy per size.
    pub fn sweep(&self, batch_sizes: Option<Vec<usize>>) -> Result<StageSummary> {
        let sizes = batch_sizes.unwrap_or_else(|| self.config.sweep.batch_sizes.clone());
        let keys = self.sweep_keys()?;
        let mut summary = StageSummary::default();
        for &bs in &sizes {
            let prefix = self.layout.sweep_dir(bs);
            let model = ModelConfig {
                batch_size: bs,
                ..self.config.model.clone()
            };
            for key in &keys {
                summary.add(self.train_one(&prefix, key, &model)?);
                summary.add(self.predict_one(&prefix, key)?);
            }
        }
        let mut files = Vec::new();
        for &bs in &sizes {
            for key in &keys {
                let test = self.layout.split(key, "test");
                files.extend(test.all().iter().map(|p| (p.to_path_buf(), Stage::Sample)));
                files.push((self.layout.predictions(&self.layout.sweep_dir(bs), key), Stage::Sweep));
            }
        }
        let inputs = self.inputs(&files)?;
        let ci = self.config.evaluation.ci;
        let path = self.layout.sweep_table();
        summary.add(self.run_unit(
            Stage::Sweep,
            Some("table"),
            inputs,
            json!({"batch_sizes": sizes, "ci": ci}),
            BTreeMap::new(),
            || {
                let mut buf = Vec::new();
                writeln!(buf, "{SWEEP_HEADER}").map_err(io_err(&path))?;
                for &bs in &sizes {
                    let records = self.score(&self.layout.sweep_dir(bs), &keys)?;
                    for s in summarize(&records, false, Metric::Sequence, ci) {
                        self.log(&format!(
                            "sweep bs{bs} {} {}: {:.2}%",
                            s.key.condition, s.key.verb_class, s.mean
                        ));
                        let (lo, hi) = s.ci.map_or(("NA".to_string(), "NA".to_string()), |(l, h)| {
                            (format!("{l:.4}"), format!("{h:.4}"))
                        });
                        writeln!(
                            buf,
                            "{bs}\t{}\t{}\t{}\t{:.4}\t{lo}\t{hi}\t{}\t{}",
                            s.key.condition, s.key.verb_class, s.metric, s.mean, s.models, s.records
                        )
                        .map_err(io_err(&path))?;
                    }
                }
                atomic_write(&path, &buf)?;
                Ok(vec![path.clone()])
            },
        )?);
        Ok(summary)
    }
}
