use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;

use super::layout::Layout;
use super::{DatasetFilter, DatasetKey, Pipeline, Stage, StageSummary};
use crate::analysis::{
    cell_combination_table, consonant_pair_census, export_observations, grouped_proportions, label_knowledge_state,
    lemma_pair, pair_confusion_matrix, pair_train_test_frequencies, primacy_recency_contrasts, training_triples,
    write_cell_table, write_census, write_confusion_accuracy, write_confusion_long, write_confusion_wide,
    write_contrasts, write_pair_frequencies, write_proportions, ConsonantPair, KnowledgeState,
};
use crate::corpus::{assemble_tables, parse_unimorph, write_ingest_report, InflectionTable, MsdTag, VerbClass};
use crate::error::{io_err, Error, Result};
use crate::evaluation::{
    parse_records, score_records, summarize, write_records, write_summaries, Metric, PredictionRecord,
};
use crate::fsio::{atomic_write, atomic_write_with, read_to_string};
use crate::sampler::{write_condition_dataset, Sampler};
use crate::synth::synthesize_unimorph;
use crate::transducer::{load_model, predict_examples, read_predictions, train, ModelConfig, TrainOptions};
use crate::tripler::{read_dataset, write_dataset, DatasetFiles, ReinflectionTriple, SerializedExample};

/// `lemma` followed by the twelve cells in canonical order.
pub const TABLES_HEADER: &str = "lemma\tIND.1SG\tIND.2SG\tIND.3SG\tIND.1PL\tIND.2PL\tIND.3PL\tSBJV.1SG\tSBJV.2SG\tSBJV.3SG\tSBJV.1PL\tSBJV.2PL\tSBJV.3PL";

const CLASSES_HEADER: &str = "lemma\tverb_class\tind1sg_stem\tind3sg_stem\tsbjv3sg_stem\tunsegmentable_cells";

fn render_tables(tables: &[InflectionTable]) -> String {
    let mut out = format!("{TABLES_HEADER}\n");
    for t in tables {
        out.push_str(&t.lemma);
        for (_, form) in t.cells() {
            out.push('\t');
            out.push_str(form);
        }
        out.push('\n');
    }
    out
}

fn parse_tables(text: &str) -> Result<Vec<InflectionTable>> {
    let mut lines = text.lines();
    if lines.next() != Some(TABLES_HEADER) {
        return Err(Error::Serialization("tables file has an unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(n, line)| {
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 13 {
                return Err(Error::Malformed {
                    line: n + 2,
                    reason: "expected lemma and 12 forms".into(),
                });
            }
            let cells: [String; 12] = std::array::from_fn(|i| cols[i + 1].to_string());
            Ok(InflectionTable::new(cols[0], cells))
        })
        .collect()
}

/// Tables written by `ingest`, with the classes recorded by `classify`.
pub fn load_tables(layout: &Layout) -> Result<Vec<InflectionTable>> {
    let mut tables = parse_tables(&read_to_string(&layout.tables())?)?;
    let classes = read_to_string(&layout.classes())?;
    let mut by_lemma: HashMap<&str, VerbClass> = HashMap::new();
    for line in classes.lines().skip(1) {
        let mut cols = line.split('\t');
        if let (Some(l), Some(c)) = (cols.next(), cols.next()) {
            by_lemma.insert(l, c.parse()?);
        }
    }
    for t in &mut tables {
        t.verb_class = *by_lemma
            .get(t.lemma.as_str())
            .ok_or_else(|| Error::Serialization(format!("lemma {:?} missing from classes file", t.lemma)))?;
    }
    Ok(tables)
}

/// Source and target lines of a split, paired.
pub fn read_examples(files: &DatasetFiles) -> Result<Vec<SerializedExample>> {
    let src = read_to_string(&files.source)?;
    let tgt = read_to_string(&files.target)?;
    let (s, t): (Vec<&str>, Vec<&str>) = (src.lines().collect(), tgt.lines().collect());
    if s.len() != t.len() {
        return Err(Error::Serialization(format!(
            "{}: {} source lines but {} target lines",
            files.source.display(),
            s.len(),
            t.len()
        )));
    }
    Ok(s.into_iter()
        .zip(t)
        .map(|(s, t)| SerializedExample {
            source: s.to_string(),
            target: t.to_string(),
        })
        .collect())
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| io_err(path)(e)
}

fn write_tsv(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<PathBuf> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(io(path))?;
    atomic_write(path, &buf)?;
    Ok(path.to_path_buf())
}

fn dataset_model_seed(layout: &Layout, key: &DatasetKey) -> Result<u64> {
    let path = layout.dataset(key).join("dataset.json");
    let v: serde_json::Value = serde_json::from_str(&read_to_string(&path)?)?;
    v["seeds"]["model"]
        .as_u64()
        .ok_or_else(|| Error::Serialization(format!("{}: no model seed", path.display())))
}

impl Pipeline {
    pub fn ingest(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let corpus = &self.config.corpus;
        let (inputs, source) = match (&corpus.path, &corpus.synthetic) {
            (Some(p), _) => {
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "corpus file {} does not exist (relative paths resolve against ${})",
                        p.display(),
                        super::DATA_ROOT_ENV
                    )));
                }
                (self.inputs(&[(p.clone(), Stage::Ingest)])?, p.clone())
            }
            _ => (Vec::new(), l.synthetic_corpus()),
        };
        let mut summary = StageSummary::default();
        let outcome = self.run_unit(
            Stage::Ingest,
            None,
            inputs,
            json!({"corpus": corpus}),
            BTreeMap::new(),
            || {
                let mut written = Vec::new();
                if let Some(cfg) = &corpus.synthetic {
                    atomic_write(&source, synthesize_unimorph(cfg).as_bytes())?;
                    written.push(source.clone());
                }
                let file = std::fs::File::open(&source).map_err(io_err(&source))?;
                let parsed = parse_unimorph(std::io::BufReader::new(file))?;
                let assembly = assemble_tables(&parsed.entries)?;
                atomic_write(&l.tables(), render_tables(&assembly.tables).as_bytes())?;
                written.push(l.tables());
                written.push(write_tsv(&l.ingest_report(), |w| {
                    write_ingest_report(w, &parsed, &assembly)
                })?);
                self.log(&format!(
                    "ingest: {} complete paradigms ({} incomplete dropped)",
                    assembly.tables.len(),
                    assembly.incomplete.len()
                ));
                Ok(written)
            },
        )?;
        summary.add(outcome);
        Ok(summary)
    }

    pub fn classify(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let inputs = self.inputs(&[(l.tables(), Stage::Ingest)])?;
        let mut summary = StageSummary::default();
        summary.add(
            self.run_unit(Stage::Classify, None, inputs, json!({}), BTreeMap::new(), || {
                let tables = parse_tables(&read_to_string(&l.tables())?)?;
                let classes = write_tsv(&l.classes(), |w| {
                    writeln!(w, "{CLASSES_HEADER}")?;
                    for t in &tables {
                        let bad: Vec<String> = t.unsegmentable_cells().iter().map(|c| c.short()).collect();
                        writeln!(
                            w,
                            "{}\t{}\t{}\t{}\t{}\t{}",
                            t.lemma,
                            t.verb_class,
                            t.stem(MsdTag::IND_1SG).surface,
                            t.stem(MsdTag::IND_3SG).surface,
                            t.stem(MsdTag::SBJV_3SG).surface,
                            if bad.is_empty() { "-".to_string() } else { bad.join(",") }
                        )?;
                    }
                    Ok(())
                })?;
                let count = |c| tables.iter().filter(|t| t.verb_class == c).count();
                let (n_l, n_nl) = (count(VerbClass::L), count(VerbClass::NL));
                self.log(&format!("classify: {n_l} L, {n_nl} NL"));
                let counts = write_tsv(&l.class_counts(), |w| {
                    writeln!(w, "verb_class\tlemmas")?;
                    writeln!(w, "L\t{n_l}")?;
                    writeln!(w, "NL\t{n_nl}")?;
                    writeln!(w, "total\t{}", tables.len())
                })?;
                Ok(vec![classes, counts])
            })?,
        );
        Ok(summary)
    }

    fn sampling_fingerprint(&self) -> serde_json::Value {
        json!({"master_seed": self.config.master_seed, "sampling": self.config.sampling})
    }

    /// Triples of every lemma drawn into any condition roster.
    pub fn triples(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let inputs = self.inputs(&[(l.tables(), Stage::Ingest), (l.classes(), Stage::Classify)])?;
        let mut summary = StageSummary::default();
        let fp = json!({"sampling": self.sampling_fingerprint(), "sweep_conditions": self.config.sweep.conditions});
        summary.add(self.run_unit(Stage::Triples, None, inputs, fp, BTreeMap::new(), || {
            let tables = load_tables(l)?;
            let mut sampler = Sampler::new(&tables, self.config.sampler_config(), self.config.master_seed)?;
            let mut lemmas = BTreeSet::new();
            let mut conditions = self.config.conditions()?;
            conditions.extend(self.config.sweep_conditions()?);
            for c in &conditions {
                let roster = sampler.roster(c)?;
                lemmas.extend(roster.l);
                lemmas.extend(roster.nl);
            }
            let mut all = Vec::with_capacity(lemmas.len() * 660);
            for lemma in &lemmas {
                all.extend_from_slice(sampler.lemma_triples(lemma)?);
            }
            self.log(&format!("triples: {} lemmas, {} triples", lemmas.len(), all.len()));
            let files = write_dataset(&l.root.join("triples"), "all", &all)?;
            Ok(files.all().iter().map(|p| p.to_path_buf()).collect())
        })?);
        Ok(summary)
    }

    /// One dataset directory and manifest per (condition, bin, run).
    pub fn sample(&self, filter: &DatasetFilter) -> Result<StageSummary> {
        let l = &self.layout;
        let triples = l.triples();
        let mut files = vec![(l.tables(), Stage::Ingest), (l.classes(), Stage::Classify)];
        files.extend(triples.all().iter().map(|p| (p.to_path_buf(), Stage::Triples)));
        let inputs = self.inputs(&files)?;
        let tables = load_tables(l)?;
        let mut sampler = Sampler::new(&tables, self.config.sampler_config(), self.config.master_seed)?;
        let mut loaded = false;
        let mut summary = StageSummary::default();
        let keys = self.dataset_keys(filter)?;
        // sweep conditions may lie outside the main ones
        let mut extra = Vec::new();
        if filter.conditions.is_empty() {
            for c in self.config.sweep_conditions()? {
                if !self.config.sampling.conditions.contains(&c.name) {
                    for bin in 0..self.config.sweep.bins {
                        for run in 0..self.config.sweep.runs {
                            extra.push(DatasetKey {
                                condition: c.name.clone(),
                                bin,
                                run,
                            });
                        }
                    }
                }
            }
        }
        for key in keys.into_iter().chain(extra) {
            let condition = self.config.condition(&key.condition)?;
            let seeds = sampler.dataset_seeds(&condition, key.bin, key.run);
            let seed_map = BTreeMap::from([
                ("master".to_string(), seeds.master),
                ("roster".to_string(), seeds.roster),
                ("split".to_string(), seeds.split),
                ("train_order".to_string(), seeds.train_order),
                ("model".to_string(), seeds.model),
            ]);
            let id = key.id();
            let outcome = self.run_unit(
                Stage::Sample,
                Some(&id),
                inputs.clone(),
                self.sampling_fingerprint(),
                seed_map,
                || {
                    if !loaded {
                        let mut by_lemma: BTreeMap<String, Vec<ReinflectionTriple>> = BTreeMap::new();
                        for t in read_dataset(&triples)? {
                            by_lemma.entry(t.lemma.clone()).or_default().push(t);
                        }
                        for (lemma, ts) in by_lemma {
                            sampler.insert_triples(&lemma, ts)?;
                        }
                        loaded = true;
                    }
                    let ds = sampler.build(&condition, key.bin, key.run)?;
                    let rows = write_condition_dataset(&l.datasets_root(), &ds)?;
                    self.log(&format!(
                        "sample {id}: train {} dev {} test {}",
                        ds.train.len(),
                        ds.dev.len(),
                        ds.test.len()
                    ));
                    Ok(rows.iter().map(|r| l.datasets_root().join(&r.path)).collect())
                },
            )?;
            summary.add(outcome);
        }
        Ok(summary)
    }

    pub(crate) fn train_one(&self, prefix: &str, key: &DatasetKey, model: &ModelConfig) -> Result<super::UnitOutcome> {
        let l = &self.layout;
        let (train_files, dev_files) = (l.split(key, "train"), l.split(key, "dev"));
        let descriptor = l.dataset(key).join("dataset.json");
        let inputs = self.inputs(&[
            (train_files.source.clone(), Stage::Sample),
            (train_files.target.clone(), Stage::Sample),
            (dev_files.source.clone(), Stage::Sample),
            (dev_files.target.clone(), Stage::Sample),
            (descriptor, Stage::Sample),
        ])?;
        let seed = dataset_model_seed(l, key)?;
        let config = ModelConfig { seed, ..model.clone() };
        let stage = if prefix.is_empty() { Stage::Train } else { Stage::Sweep };
        let unit = if prefix.is_empty() {
            key.id()
        } else {
            format!("{}/train/{}", prefix.trim_start_matches("sweep/"), key.id())
        };
        let dir = l.model_dir(prefix, key);
        let id = key.id();
        // the test beam width does not affect training
        let mut fp = json!({ "model": config });
        fp["model"].as_object_mut().map(|m| m.remove("beam_width"));
        self.run_unit(
            stage,
            Some(&unit),
            inputs,
            fp,
            BTreeMap::from([("model".into(), seed)]),
            || {
                let train_set = read_examples(&train_files)?;
                let dev_set = read_examples(&dev_files)?;
                if dir.exists() {
                    std::fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
                }
                let mut on_epoch = |e: &crate::transducer::EpochRecord| {
                    let dev = match (e.dev_loss, e.dev_accuracy) {
                        (Some(l), Some(a)) => format!(" dev loss {l:.4} dev acc {:.2}%", 100.0 * a),
                        _ => String::new(),
                    };
                    self.log(&format!(
                        "train {id}: epoch {} update {} loss {:.4}{dev}",
                        e.epoch, e.updates, e.train_loss
                    ));
                };
                let trained = train(
                    &config,
                    &train_set,
                    &dev_set,
                    TrainOptions {
                        out_dir: Some(dir.clone()),
                        on_epoch: Some(&mut on_epoch),
                    },
                )?;
                let report_path = dir.join("train_report.json");
                let mut text = serde_json::to_string_pretty(&trained.report)?;
                text.push('\n');
                atomic_write(&report_path, text.as_bytes())?;
                let log_path = write_tsv(&dir.join("train_log.tsv"), |w| {
                    writeln!(w, "epoch\tupdates\ttrain_loss\tdev_loss\tdev_accuracy")?;
                    for e in &trained.report.epochs {
                        let na = |v: Option<f64>| v.map_or("NA".to_string(), |v| format!("{v:.6}"));
                        writeln!(
                            w,
                            "{}\t{}\t{:.6}\t{}\t{}",
                            e.epoch,
                            e.updates,
                            e.train_loss,
                            na(e.dev_loss),
                            na(e.dev_accuracy)
                        )?;
                    }
                    Ok(())
                })?;
                let mut written: Vec<PathBuf> = trained
                    .report
                    .checkpoints
                    .iter()
                    .filter_map(|c| c.path.as_ref().map(|name| dir.join(name)))
                    .collect();
                written.push(dir.join("checkpoint_best.ckpt"));
                written.push(report_path);
                written.push(log_path);
                Ok(written)
            },
        )
    }

    pub fn train(&self, filter: &DatasetFilter) -> Result<StageSummary> {
        let mut summary = StageSummary::default();
        for key in self.dataset_keys(filter)? {
            summary.add(self.train_one("", &key, &self.config.model)?);
        }
        Ok(summary)
    }

    pub(crate) fn predict_one(&self, prefix: &str, key: &DatasetKey) -> Result<super::UnitOutcome> {
        let l = &self.layout;
        let test = l.split(key, "test");
        let checkpoint = l.best_checkpoint(prefix, key);
        let producer = if prefix.is_empty() { Stage::Train } else { Stage::Sweep };
        let inputs = self.inputs(&[
            (checkpoint.clone(), producer),
            (test.source.clone(), Stage::Sample),
            (test.target.clone(), Stage::Sample),
        ])?;
        let out = l.predictions(prefix, key);
        let stage = if prefix.is_empty() {
            Stage::Predict
        } else {
            Stage::Sweep
        };
        let unit = if prefix.is_empty() {
            key.id()
        } else {
            format!("{}/predict/{}", prefix.trim_start_matches("sweep/"), key.id())
        };
        let width = self.config.model.beam_width;
        let id = key.id();
        self.run_unit(
            stage,
            Some(&unit),
            inputs,
            json!({"beam_width": width}),
            BTreeMap::new(),
            || {
                let (model, header) = load_model(&checkpoint)?;
                let max_len = header["max_len"]
                    .as_u64()
                    .ok_or_else(|| Error::Serialization(format!("{}: no max_len", checkpoint.display())))?
                    as usize;
                let examples = read_examples(&test)?;
                atomic_write_with(&out, |w| {
                    predict_examples(&model, &examples, width, max_len, w).map(|_| ())
                })?;
                self.log(&format!("predict {id}: {} rows", examples.len()));
                Ok(vec![out.clone()])
            },
        )
    }

    pub fn predict(&self, filter: &DatasetFilter) -> Result<StageSummary> {
        let mut summary = StageSummary::default();
        for key in self.dataset_keys(filter)? {
            summary.add(self.predict_one("", &key)?);
        }
        Ok(summary)
    }

    /// Scored records of the given datasets.
    pub(crate) fn score(&self, prefix: &str, keys: &[DatasetKey]) -> Result<Vec<PredictionRecord>> {
        let mut records = Vec::new();
        for key in keys {
            let test = read_dataset(&self.layout.split(key, "test"))?;
            let preds = read_predictions(&self.layout.predictions(prefix, key))?;
            records.extend(score_records(&key.condition, key.bin, key.run, &test, &preds)?);
        }
        Ok(records)
    }

    fn scoring_inputs(&self, prefix: &str, keys: &[DatasetKey]) -> Result<Vec<super::FileRecord>> {
        let mut files = Vec::new();
        let producer = if prefix.is_empty() {
            Stage::Predict
        } else {
            Stage::Sweep
        };
        for key in keys {
            let test = self.layout.split(key, "test");
            files.extend(test.all().iter().map(|p| (p.to_path_buf(), Stage::Sample)));
            files.push((self.layout.predictions(prefix, key), producer));
        }
        self.inputs(&files)
    }

    pub fn evaluate(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let keys = self.dataset_keys(&DatasetFilter::all())?;
        let inputs = self.scoring_inputs("", &keys)?;
        let ci = self.config.evaluation.ci;
        let mut summary = StageSummary::default();
        summary.add(self.run_unit(
            Stage::Evaluate,
            None,
            inputs,
            json!({"ci": ci}),
            BTreeMap::new(),
            || {
                let records = self.score("", &keys)?;
                let records_path = l.evaluation("records.tsv");
                atomic_write_with(&records_path, |w| write_records(&records, w).map_err(io(&records_path)))?;
                let mut rows = Vec::new();
                for by_zone in [false, true] {
                    for metric in [Metric::Sequence, Metric::Stem] {
                        rows.extend(summarize(&records, by_zone, metric, ci));
                    }
                }
                let summary_path = write_tsv(&l.evaluation("summary.tsv"), |w| write_summaries(&rows, ci, w))?;
                for r in rows.iter().filter(|r| r.key.zone_pattern.is_none()) {
                    self.log(&format!(
                        "evaluate {} {} {}: {:.2}% over {} models",
                        r.key.condition, r.key.verb_class, r.metric, r.mean, r.models
                    ));
                }
                Ok(vec![records_path, summary_path])
            },
        )?);
        Ok(summary)
    }

    pub fn analyze(&self) -> Result<StageSummary> {
        let l = &self.layout;
        let keys = self.dataset_keys(&DatasetFilter::all())?;
        let mut files = vec![
            (l.evaluation("records.tsv"), Stage::Evaluate),
            (l.tables(), Stage::Ingest),
            (l.classes(), Stage::Classify),
        ];
        for key in &keys {
            files.extend(
                l.split(key, "train")
                    .all()
                    .iter()
                    .map(|p| (p.to_path_buf(), Stage::Sample)),
            );
            files.push((l.dataset(key).join("roster.tsv"), Stage::Sample));
        }
        let inputs = self.inputs(&files)?;
        let mut summary = StageSummary::default();
        summary.add(
            self.run_unit(Stage::Analyze, None, inputs, json!({}), BTreeMap::new(), || {
                self.analyze_body(&keys)
            })?,
        );
        Ok(summary)
    }

    fn analyze_body(&self, keys: &[DatasetKey]) -> Result<Vec<PathBuf>> {
        let l = &self.layout;
        let mut records = parse_records(&read_to_string(&l.evaluation("records.tsv"))?)?;
        let tables = load_tables(l)?;
        let pairs: HashMap<String, ConsonantPair> = tables
            .iter()
            .filter(|t| t.verb_class == VerbClass::L)
            .map(|t| (t.lemma.clone(), lemma_pair(t)))
            .collect();
        let mut seen = HashMap::new();
        for key in keys {
            seen.insert(key.clone(), training_triples(&read_dataset(&l.split(key, "train"))?));
        }
        let mut written = Vec::new();

        // knowledge states, plus how many flip under another run's training set
        let mut sensitivity = Vec::new();
        let mut by_key: BTreeMap<DatasetKey, Vec<PredictionRecord>> = BTreeMap::new();
        for r in records.drain(..) {
            let key = DatasetKey {
                condition: r.condition.clone(),
                bin: r.bin,
                run: r.run,
            };
            by_key.entry(key).or_default().push(r);
        }
        let runs = self.config.sampling.runs;
        for (key, rs) in &mut by_key {
            let own = seen
                .get(key)
                .ok_or_else(|| Error::Serialization(format!("records for unconfigured dataset {}", key.id())))?;
            label_knowledge_state(rs, own);
            if runs > 1 {
                let other = DatasetKey {
                    run: (key.run + 1) % runs,
                    ..key.clone()
                };
                if let Some(other_seen) = seen.get(&other) {
                    let changed = rs
                        .iter()
                        .filter(|r| {
                            let alt = if other_seen.contains(&r.gold_triple) {
                                KnowledgeState::Memorized
                            } else {
                                KnowledgeState::Generalized
                            };
                            r.knowledge_state != Some(alt)
                        })
                        .count();
                    sensitivity.push((key.id(), other.id(), rs.len(), changed));
                }
            }
        }
        let records: Vec<PredictionRecord> = by_key.into_values().flatten().collect();
        let labeled = l.analysis("records_labeled.tsv");
        atomic_write_with(&labeled, |w| write_records(&records, w).map_err(io(&labeled)))?;
        written.push(labeled);
        written.push(write_tsv(&l.analysis("knowledge_sensitivity.tsv"), |w| {
            writeln!(w, "dataset\tother_training_set\trecords\tchanged_labels")?;
            for (a, b, n, c) in &sensitivity {
                writeln!(w, "{a}\t{b}\t{n}\t{c}")?;
            }
            Ok(())
        })?);

        let conditions = &self.config.sampling.conditions;
        let table = cell_combination_table(&records, conditions, Metric::Sequence);
        written.push(write_tsv(&l.analysis("cell_combinations.tsv"), |w| {
            write_cell_table(&table, w)
        })?);
        let stem_table = cell_combination_table(&records, conditions, Metric::Stem);
        written.push(write_tsv(&l.analysis("cell_combinations_stem.tsv"), |w| {
            write_cell_table(&stem_table, w)
        })?);
        let contrasts = primacy_recency_contrasts(&table);
        written.push(write_tsv(&l.analysis("contrasts.tsv"), |w| {
            write_contrasts(&contrasts, w)
        })?);

        let l_records: Vec<PredictionRecord> = records
            .iter()
            .filter(|r| r.verb_class() == VerbClass::L)
            .cloned()
            .collect();
        let obs = l.analysis("observations.tsv");
        atomic_write_with(&obs, |w| export_observations(&l_records, w).map(|_| ()))?;
        written.push(obs);
        let props = grouped_proportions(&l_records);
        written.push(write_tsv(&l.analysis("proportions.tsv"), |w| {
            write_proportions(&props, w)
        })?);

        let census = consonant_pair_census(&tables);
        written.push(write_tsv(&l.analysis("census.tsv"), |w| write_census(&census, w))?);

        let mut freq_rows = Vec::new();
        for key in keys {
            let roster = read_to_string(&l.dataset(key).join("roster.tsv"))?;
            let (mut train_l, mut test_l) = (Vec::new(), Vec::new());
            for line in roster.lines().skip(1) {
                let c: Vec<&str> = line.split('\t').collect();
                if c.len() == 3 && c[1] == "L" {
                    match c[2] {
                        "train" => train_l.push(c[0].to_string()),
                        "test" => test_l.push(c[0].to_string()),
                        _ => {}
                    }
                }
            }
            freq_rows.extend(pair_train_test_frequencies(&key.id(), &train_l, &test_l, &pairs));
        }
        written.push(write_tsv(&l.analysis("pair_frequencies.tsv"), |w| {
            write_pair_frequencies(&freq_rows, w)
        })?);

        let mut matrices = Vec::new();
        for cond in conditions {
            let rs: Vec<PredictionRecord> = records.iter().filter(|r| &r.condition == cond).cloned().collect();
            matrices.push((cond.clone(), pair_confusion_matrix(&rs, &pairs)));
        }
        written.push(write_tsv(&l.analysis("confusion_long.tsv"), |w| {
            write_confusion_long(&matrices, w)
        })?);
        written.push(write_tsv(&l.analysis("confusion_accuracy.tsv"), |w| {
            write_confusion_accuracy(&matrices, w)
        })?);
        for (cond, m) in &matrices {
            written.push(write_tsv(&l.analysis(&format!("confusion_wide_{cond}.tsv")), |w| {
                write_confusion_wide(m, w)
            })?);
        }
        Ok(written)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_header_lists_cells_in_canonical_order() {
        let cells: Vec<String> = MsdTag::ALL.iter().map(|t| t.short()).collect();
        assert_eq!(TABLES_HEADER, format!("lemma\t{}", cells.join("\t")));
    }

    #[test]
    fn tables_round_trip() {
        let tables = crate::synth::synthesize(&crate::synth::SynthConfig {
            l_lemmas: 10,
            nl_lemmas: 20,
            ..Default::default()
        });
        let parsed = parse_tables(&render_tables(&tables)).unwrap();
        assert_eq!(parsed, tables);
    }
}
