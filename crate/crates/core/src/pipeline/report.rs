use std::borrow::Cow;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::manifest::display_path;
use super::{Pipeline, RunManifest, Stage, StageSummary};
use crate::error::{Error, Result};
use crate::fsio::{atomic_write, read_to_string};

/// Long format: one number per row, with the file it was taken from.
pub const REPORT_HEADER: &str = "section\tcondition\tverb_class\tkey\tmetric\tvalue\tci_low\tci_high\tsource";

pub const SOURCES_HEADER: &str = "path\tsha256\tbytes\tmanifest";

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn read(path: &Path) -> Result<Self> {
        let text = read_to_string(path)?;
        let mut lines = text.lines();
        let header = lines
            .next()
            .unwrap_or_default()
            .split('\t')
            .map(str::to_string)
            .collect();
        let rows = lines.map(|l| l.split('\t').map(str::to_string).collect()).collect();
        Ok(Self { header, rows })
    }

    fn col(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Serialization(format!("report input lacks column {name:?}")))
    }
}

struct Row<'a> {
    section: &'a str,
    condition: &'a str,
    verb_class: &'a str,
    key: Cow<'a, str>,
    metric: &'a str,
    value: &'a str,
    ci: (&'a str, &'a str),
}

impl Pipeline {
    /// Collects the summary tables into `report/experiment_summary.tsv` and
    /// lists every source file with its producing manifest in `report/sources.tsv`.
    pub fn report(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let mut sources = vec![
            (l.evaluation("summary.tsv"), Stage::Evaluate),
            (l.analysis("cell_combinations.tsv"), Stage::Analyze),
            (l.analysis("contrasts.tsv"), Stage::Analyze),
            (l.analysis("proportions.tsv"), Stage::Analyze),
            (l.analysis("confusion_accuracy.tsv"), Stage::Analyze),
        ];
        if l.sweep_table().exists() {
            sources.push((l.sweep_table(), Stage::Sweep));
        }
        let inputs = self.inputs(&sources)?;
        let mut summary = StageSummary::default();
        summary.add(
            self.run_unit(Stage::Report, None, inputs.clone(), json!({}), BTreeMap::new(), || {
                let mut out = format!("{REPORT_HEADER}\n");
                for (path, _) in &sources {
                    let source = display_path(path, self.root());
                    let table = Table::read(path)?;
                    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default();
                    for row in report_rows(name, &table)? {
                        out.push_str(&format!(
                            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{source}\n",
                            row.section,
                            row.condition,
                            row.verb_class,
                            row.key,
                            row.metric,
                            row.value,
                            row.ci.0,
                            row.ci.1
                        ));
                    }
                }
                let summary_path = l.report("experiment_summary.tsv");
                atomic_write(&summary_path, out.as_bytes())?;

                let producers = self.producing_manifests()?;
                let mut listing = format!("{SOURCES_HEADER}\n");
                for f in &inputs {
                    let manifest = producers
                        .get(&f.path)
                        .map_or("NA".to_string(), |p| display_path(p, self.root()));
                    listing.push_str(&format!("{}\t{}\t{}\t{manifest}\n", f.path, f.sha256, f.bytes));
                }
                let sources_path = l.report("sources.tsv");
                atomic_write(&sources_path, listing.as_bytes())?;
                Ok(vec![summary_path, sources_path])
            })?,
        );
        Ok(summary)
    }

    /// Artifact path to the manifest that recorded it.
    fn producing_manifests(&self) -> Result<BTreeMap<String, PathBuf>> {
        let mut map = BTreeMap::new();
        let mut stack = vec![self.root().join("manifests")];
        while let Some(dir) = stack.pop() {
            let Ok(entries) = std::fs::read_dir(&dir) else { continue };
            for entry in entries.flatten() {
                let path = entry.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path.extension().is_some_and(|e| e == "json") {
                    if let Some(m) = RunManifest::load(&path)? {
                        for a in m.artifacts {
                            map.insert(a.path, path.clone());
                        }
                    }
                }
            }
        }
        Ok(map)
    }
}

fn report_rows<'a>(name: &str, t: &'a Table) -> Result<Vec<Row<'a>>> {
    let mut rows = Vec::new();
    match name {
        "summary.tsv" => {
            let (c, v, z, m, mean, lo, hi) = (
                t.col("condition")?,
                t.col("verb_class")?,
                t.col("zone_pattern")?,
                t.col("metric")?,
                t.col("mean")?,
                t.col("ci_low")?,
                t.col("ci_high")?,
            );
            for r in &t.rows {
                rows.push(Row {
                    section: if r[z] == "all" { "accuracy" } else { "accuracy_by_zone" },
                    condition: &r[c],
                    verb_class: &r[v],
                    key: Cow::Borrowed(&r[z]),
                    metric: &r[m],
                    value: &r[mean],
                    ci: (&r[lo], &r[hi]),
                });
            }
        }
        "cell_combinations.tsv" => {
            let (c, z) = (t.col("condition")?, t.col("zone_pattern")?);
            for (class, metric) in [("L", "sequence"), ("NL", "sequence"), ("L/NL", "ratio")] {
                let i = t.col(class)?;
                for r in &t.rows {
                    rows.push(Row {
                        section: "cell_combination",
                        condition: &r[c],
                        verb_class: class,
                        key: Cow::Borrowed(&r[z]),
                        metric,
                        value: &r[i],
                        ci: ("NA", "NA"),
                    });
                }
            }
        }
        "contrasts.tsv" => {
            let (c, v, k, m, o, d) = (
                t.col("condition")?,
                t.col("verb_class")?,
                t.col("kind")?,
                t.col("matching")?,
                t.col("other")?,
                t.col("delta")?,
            );
            for r in &t.rows {
                rows.push(Row {
                    section: "contrast",
                    condition: &r[c],
                    verb_class: &r[v],
                    key: Cow::Owned(format!("{}:{}-{}", r[k], r[m], r[o])),
                    metric: "delta",
                    value: &r[d],
                    ci: ("NA", "NA"),
                });
            }
        }
        "proportions.tsv" => {
            let (k, c, p, lo, hi) = (
                t.col("knowledge_state")?,
                t.col("frequency_condition")?,
                t.col("proportion")?,
                t.col("wilson_low")?,
                t.col("wilson_high")?,
            );
            for r in &t.rows {
                rows.push(Row {
                    section: "knowledge_state",
                    condition: &r[c],
                    verb_class: "L",
                    key: Cow::Borrowed(&r[k]),
                    metric: "proportion_correct",
                    value: &r[p],
                    ci: (&r[lo], &r[hi]),
                });
            }
        }
        "confusion_accuracy.tsv" => {
            let (c, g, a) = (t.col("condition")?, t.col("gold")?, t.col("accuracy")?);
            for r in &t.rows {
                rows.push(Row {
                    section: "pair_accuracy",
                    condition: &r[c],
                    verb_class: "L",
                    key: Cow::Borrowed(&r[g]),
                    metric: "stem",
                    value: &r[a],
                    ci: ("NA", "NA"),
                });
            }
        }
        "batch_sizes.tsv" => {
            let (b, c, v, m, mean, lo, hi) = (
                t.col("batch_size")?,
                t.col("condition")?,
                t.col("verb_class")?,
                t.col("metric")?,
                t.col("mean")?,
                t.col("ci_low")?,
                t.col("ci_high")?,
            );
            for r in &t.rows {
                rows.push(Row {
                    section: "batch_size",
                    condition: &r[c],
                    verb_class: &r[v],
                    key: Cow::Borrowed(&r[b]),
                    metric: &r[m],
                    value: &r[mean],
                    ci: (&r[lo], &r[hi]),
                });
            }
        }
        other => return Err(Error::Serialization(format!("no report section for {other}"))),
    }
    Ok(rows)
}
