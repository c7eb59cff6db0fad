//! Frequency-conditioned datasets: nested lemma rosters, stratified
//! lemma-disjoint splits, combination bins and randomized runs.

use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{InflectionTable, VerbClass};
use crate::error::{Error, Result};
use crate::fsio::{atomic_write, sha256_hex};
use crate::seeds::derive_seed;
use crate::tripler::{generate_triples_with, render_dataset, DatasetFiles, ReinflectionTriple, SourceOrdering};

/// A named L/NL lemma mix such as `90L-10NL` (300 L + 33 NL).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrequencyCondition {
    pub name: String,
    pub l_count: usize,
    pub nl_count: usize,
}

impl FrequencyCondition {
    pub const TOTAL: usize = 333;

    /// The three standard conditions over 333 lemmas.
    pub fn standard() -> [FrequencyCondition; 3] {
        ["10L-90NL", "50L-50NL", "90L-10NL"].map(|n| n.parse().expect("standard condition"))
    }

    /// `percent_l` of `total` lemmas are L, rounded half up.
    pub fn from_percent(percent_l: u32, total: usize) -> Result<Self> {
        if percent_l > 100 {
            return Err(Error::Config(format!("L share {percent_l}% exceeds 100%")));
        }
        let l_count = (percent_l as usize * total * 2 + 100) / 200;
        Ok(Self {
            name: format!("{percent_l}L-{}NL", 100 - percent_l),
            l_count,
            nl_count: total - l_count,
        })
    }

    pub fn total(&self) -> usize {
        self.l_count + self.nl_count
    }

    /// Share of L lemmas in the roster.
    pub fn l_ratio(&self) -> f64 {
        self.l_count as f64 / self.total() as f64
    }
}

impl fmt::Display for FrequencyCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

impl FromStr for FrequencyCondition {
    type Err = Error;

    /// Parses `<p>L-<q>NL` with p + q = 100 over the standard 333 lemmas.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("condition {s:?} is not of the form <p>L-<q>NL"));
        let (l, nl) = s.split_once('-').ok_or_else(bad)?;
        let l: u32 = l.strip_suffix('L').and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        let nl: u32 = nl.strip_suffix("NL").and_then(|x| x.parse().ok()).ok_or_else(bad)?;
        if l + nl != 100 {
            return Err(bad());
        }
        Self::from_percent(l, Self::TOTAL)
    }
}

impl FrequencyCondition {
    /// Like the `FromStr` impl but over `total` lemmas.
    pub fn parse_with_total(s: &str, total: usize) -> Result<Self> {
        let standard: Self = s.parse()?;
        let percent = standard.name.split_once('L').map_or(0, |(p, _)| p.parse().unwrap_or(0));
        Self::from_percent(percent, total)
    }
}

/// Lemmas of a condition, split by class.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roster {
    pub l: Vec<String>,
    pub nl: Vec<String>,
}

impl Roster {
    pub fn len(&self) -> usize {
        self.l.len() + self.nl.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Seeded shuffle of a pool; sorting first makes the result independent of
/// the order the pool was supplied in.
fn shuffled(pool: &[String], seed: u64) -> Vec<String> {
    let mut v = pool.to_vec();
    v.sort();
    v.dedup();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

/// Prefixes of fixed shuffles of the two pools, so a condition with fewer L
/// (or NL) lemmas uses a subset of the lemmas of any condition with more.
pub fn sample_condition_lemmas(
    l_pool: &[String],
    nl_pool: &[String],
    condition: &FrequencyCondition,
    seed: u64,
) -> Result<Roster> {
    let take = |pool: &[String], n: usize, label: &str| -> Result<Vec<String>> {
        let order = shuffled(pool, derive_seed(seed, &["roster", label]));
        if order.len() < n {
            return Err(Error::PoolTooSmall {
                what: format!("{label} lemmas for {condition}"),
                requested: n,
                available: order.len(),
            });
        }
        Ok(order[..n].to_vec())
    };
    Ok(Roster {
        l: take(l_pool, condition.l_count, "L")?,
        nl: take(nl_pool, condition.nl_count, "NL")?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub dev: usize,
    pub test: usize,
}

impl Default for SplitSizes {
    fn default() -> Self {
        Self {
            train: 239,
            dev: 27,
            test: 67,
        }
    }
}

impl SplitSizes {
    pub fn total(&self) -> usize {
        self.train + self.dev + self.test
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lemma sets of the three splits, each sorted.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRoster {
    pub train: Vec<(String, VerbClass)>,
    pub dev: Vec<(String, VerbClass)>,
    pub test: Vec<(String, VerbClass)>,
}

impl SplitRoster {
    pub fn get(&self, split: Split) -> &[(String, VerbClass)] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    pub fn l_count(&self, split: Split) -> usize {
        self.get(split).iter().filter(|(_, c)| *c == VerbClass::L).count()
    }
}

/// `round(ratio * size)` with exact halves rounded down, so the leftover goes
/// to the training split.
fn quota(l: usize, total: usize, size: usize) -> usize {
    let num = 2 * l * size;
    let den = 2 * total;
    // floor((l*size/total) + 1/2), minus one on exact ties
    let q = (num + total) / den;
    if (num + total) % den == 0 && q > 0 {
        q - 1
    } else {
        q
    }
}

/// Lemma-disjoint split stratified by class: dev and test each take
/// `round(L share * size)` L lemmas, NL fills the rest, train takes what is left.
pub fn split_lemmas(roster: &Roster, sizes: SplitSizes, seed: u64) -> Result<SplitRoster> {
    if roster.len() != sizes.total() {
        return Err(Error::Config(format!(
            "split sizes {}+{}+{} do not add up to the roster size {}",
            sizes.train,
            sizes.dev,
            sizes.test,
            roster.len()
        )));
    }
    let total = roster.len();
    let l_test = quota(roster.l.len(), total, sizes.test);
    let l_dev = quota(roster.l.len(), total, sizes.dev);
    let nl_test = sizes.test - l_test;
    let nl_dev = sizes.dev - l_dev;
    if l_test + l_dev > roster.l.len() || nl_test + nl_dev > roster.nl.len() {
        return Err(Error::Config("roster too small for stratified split".into()));
    }
    let l = shuffled(&roster.l, derive_seed(seed, &["split", "L"]));
    let nl = shuffled(&roster.nl, derive_seed(seed, &["split", "NL"]));
    let part = |ls: &[String], nls: &[String]| {
        let mut v: Vec<(String, VerbClass)> = ls
            .iter()
            .map(|x| (x.clone(), VerbClass::L))
            .chain(nls.iter().map(|x| (x.clone(), VerbClass::NL)))
            .collect();
        v.sort();
        v
    };
    Ok(SplitRoster {
        test: part(&l[..l_test], &nl[..nl_test]),
        dev: part(&l[l_test..l_test + l_dev], &nl[nl_test..nl_test + nl_dev]),
        train: part(&l[l_test + l_dev..], &nl[nl_test + nl_dev..]),
    })
}

/// Seeded partition of a lemma's triples into `bins` near-equal parts
/// (165 each for 660 triples and 4 bins). Each bin keeps enumeration order.
pub fn bin_combinations<T: Clone>(triples: &[T], bins: usize, seed: u64) -> Vec<Vec<T>> {
    assert!(bins > 0, "at least one bin");
    let mut idx: Vec<usize> = (0..triples.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = triples.len() / bins;
    let extra = triples.len() % bins;
    let mut out = Vec::with_capacity(bins);
    let mut start = 0;
    for b in 0..bins {
        let len = base + usize::from(b < extra);
        let mut chosen = idx[start..start + len].to_vec();
        chosen.sort_unstable();
        out.push(chosen.into_iter().map(|i| triples[i].clone()).collect());
        start += len;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub split: SplitSizes,
    pub bins: usize,
    pub runs: usize,
    pub source_ordering: SourceOrdering,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            split: SplitSizes::default(),
            bins: 4,
            runs: 3,
            source_ordering: SourceOrdering::Random,
        }
    }
}

/// Seeds used to build one dataset; each is derived from the master seed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSeeds {
    pub master: u64,
    pub roster: u64,
    pub split: u64,
    pub train_order: u64,
    /// Seed for model initialization, dropout and batching in this run.
    pub model: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConditionDataset {
    pub condition: FrequencyCondition,
    pub bin: usize,
    pub run: usize,
    pub train: Vec<ReinflectionTriple>,
    pub dev: Vec<ReinflectionTriple>,
    pub test: Vec<ReinflectionTriple>,
    pub roster: SplitRoster,
    pub seeds: DatasetSeeds,
}

impl ConditionDataset {
    pub fn id(&self) -> String {
        dataset_id(&self.condition.name, self.bin, self.run)
    }

    pub fn split(&self, split: Split) -> &[ReinflectionTriple] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }
}

/// Identifier `<condition>/bin<b>/run<r>`, also the dataset's relative directory.
pub fn dataset_id(condition: &str, bin: usize, run: usize) -> String {
    format!("{condition}/bin{bin}/run{run}")
}

/// Builds datasets for any (condition, bin, run) from one corpus and master seed.
pub struct Sampler<'a> {
    tables: HashMap<&'a str, &'a InflectionTable>,
    l_pool: Vec<String>,
    nl_pool: Vec<String>,
    master_seed: u64,
    config: SamplerConfig,
    triple_cache: HashMap<String, Vec<ReinflectionTriple>>,
}

impl<'a> Sampler<'a> {
    pub fn new(tables: &'a [InflectionTable], config: SamplerConfig, master_seed: u64) -> Result<Self> {
        if config.bins == 0 || config.runs == 0 {
            return Err(Error::Config("bins and runs must be positive".into()));
        }
        let mut l_pool = Vec::new();
        let mut nl_pool = Vec::new();
        let mut map = HashMap::new();
        for t in tables {
            if map.insert(t.lemma.as_str(), t).is_some() {
                return Err(Error::Config(format!("lemma {:?} appears twice", t.lemma)));
            }
            match t.verb_class {
                VerbClass::L => l_pool.push(t.lemma.clone()),
                VerbClass::NL => nl_pool.push(t.lemma.clone()),
            }
        }
        Ok(Self {
            tables: map,
            l_pool,
            nl_pool,
            master_seed,
            config,
            triple_cache: HashMap::new(),
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.config
    }

    pub fn roster_seed(&self) -> u64 {
        derive_seed(self.master_seed, &["roster"])
    }

    pub fn split_seed(&self, condition: &FrequencyCondition, bin: usize) -> u64 {
        derive_seed(self.master_seed, &[&condition.name, &format!("bin{bin}"), "split"])
    }

    pub fn dataset_seeds(&self, condition: &FrequencyCondition, bin: usize, run: usize) -> DatasetSeeds {
        let (b, r) = (format!("bin{bin}"), format!("run{run}"));
        DatasetSeeds {
            master: self.master_seed,
            roster: self.roster_seed(),
            split: self.split_seed(condition, bin),
            train_order: derive_seed(self.master_seed, &[&condition.name, &b, &r, "train-order"]),
            model: derive_seed(self.master_seed, &[&condition.name, &b, &r, "model"]),
        }
    }

    pub fn roster(&self, condition: &FrequencyCondition) -> Result<Roster> {
        sample_condition_lemmas(&self.l_pool, &self.nl_pool, condition, self.roster_seed())
    }

    pub fn split(&self, condition: &FrequencyCondition, bin: usize) -> Result<SplitRoster> {
        split_lemmas(
            &self.roster(condition)?,
            self.config.split,
            self.split_seed(condition, bin),
        )
    }

    /// Supplies a lemma's triples instead of generating them, e.g. when they
    /// were read back from disk.
    pub fn insert_triples(&mut self, lemma: &str, triples: Vec<ReinflectionTriple>) -> Result<()> {
        if !self.tables.contains_key(lemma) {
            return Err(Error::Config(format!("unknown lemma {lemma:?}")));
        }
        self.triple_cache.insert(lemma.to_string(), triples);
        Ok(())
    }

    /// Seed of a lemma's source-order coin flips.
    pub fn triple_seed(&self, lemma: &str) -> u64 {
        derive_seed(self.master_seed, &["triples", lemma])
    }

    /// All triples of a lemma; source order is seeded by the lemma alone so
    /// a lemma's triples are identical in every condition.
    pub fn lemma_triples(&mut self, lemma: &str) -> Result<&[ReinflectionTriple]> {
        if !self.triple_cache.contains_key(lemma) {
            let table = self
                .tables
                .get(lemma)
                .ok_or_else(|| Error::Config(format!("unknown lemma {lemma:?}")))?;
            let triples = generate_triples_with(table, self.triple_seed(lemma), self.config.source_ordering);
            self.triple_cache.insert(lemma.to_string(), triples);
        }
        Ok(&self.triple_cache[lemma])
    }

    pub fn lemma_bins(&mut self, lemma: &str) -> Result<Vec<Vec<ReinflectionTriple>>> {
        let seed = derive_seed(self.master_seed, &["bins", lemma]);
        let bins = self.config.bins;
        Ok(bin_combinations(self.lemma_triples(lemma)?, bins, seed))
    }

    pub fn build(&mut self, condition: &FrequencyCondition, bin: usize, run: usize) -> Result<ConditionDataset> {
        if bin >= self.config.bins || run >= self.config.runs {
            return Err(Error::Config(format!("bin {bin} / run {run} out of range")));
        }
        let roster = self.split(condition, bin)?;
        let seeds = self.dataset_seeds(condition, bin, run);
        let mut train = Vec::new();
        for (lemma, _) in &roster.train {
            train.extend(self.lemma_bins(lemma)?.swap_remove(bin));
        }
        train.shuffle(&mut ChaCha8Rng::seed_from_u64(seeds.train_order));
        let mut dev = Vec::new();
        for (lemma, _) in &roster.dev {
            dev.extend(self.lemma_bins(lemma)?.swap_remove(bin));
        }
        let mut test = Vec::new();
        for (lemma, _) in &roster.test {
            test.extend_from_slice(self.lemma_triples(lemma)?);
        }
        Ok(ConditionDataset {
            condition: condition.clone(),
            bin,
            run,
            train,
            dev,
            test,
            roster,
            seeds,
        })
    }

    /// Every bin and run of a condition (12 datasets with the defaults).
    pub fn build_condition(&mut self, condition: &FrequencyCondition) -> Result<Vec<ConditionDataset>> {
        let mut out = Vec::new();
        for bin in 0..self.config.bins {
            for run in 0..self.config.runs {
                out.push(self.build(condition, bin, run)?);
            }
        }
        Ok(out)
    }
}

/// One row of a dataset manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

pub const MANIFEST_HEADER: &str = "path\tbytes\tsha256";

pub fn render_manifest(rows: &[ManifestRow]) -> String {
    let mut out = format!("{MANIFEST_HEADER}\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\n", r.path, r.bytes, r.sha256));
    }
    out
}

/// Directory of a dataset below `root`.
pub fn dataset_dir(root: &Path, condition: &str, bin: usize, run: usize) -> PathBuf {
    root.join(condition).join(format!("bin{bin}")).join(format!("run{run}"))
}

/// Writes the split files, a roster TSV and a JSON descriptor for one dataset;
/// returns manifest rows with paths relative to `root`.
pub fn write_condition_dataset(root: &Path, ds: &ConditionDataset) -> Result<Vec<ManifestRow>> {
    let dir = dataset_dir(root, &ds.condition.name, ds.bin, ds.run);
    let mut files: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    for split in Split::ALL {
        let (src, tgt, tsv) = render_dataset(ds.split(split));
        let paths = DatasetFiles::new(&dir, split.name());
        files.push((paths.source, src.into_bytes()));
        files.push((paths.target, tgt.into_bytes()));
        files.push((paths.sidecar, tsv.into_bytes()));
    }
    let mut roster = String::from("lemma\tverb_class\tsplit\n");
    for split in Split::ALL {
        for (lemma, class) in ds.roster.get(split) {
            roster.push_str(&format!("{lemma}\t{class}\t{split}\n"));
        }
    }
    files.push((dir.join("roster.tsv"), roster.into_bytes()));
    let descriptor = serde_json::json!({
        "id": ds.id(),
        "condition": ds.condition,
        "bin": ds.bin,
        "run": ds.run,
        "sizes": {"train": ds.train.len(), "dev": ds.dev.len(), "test": ds.test.len()},
        "lemmas": {
            "train": ds.roster.train.len(), "dev": ds.roster.dev.len(), "test": ds.roster.test.len(),
            "train_l": ds.roster.l_count(Split::Train), "dev_l": ds.roster.l_count(Split::Dev),
            "test_l": ds.roster.l_count(Split::Test),
        },
        "seeds": ds.seeds,
    });
    files.push((dir.join("dataset.json"), serde_json::to_vec_pretty(&descriptor)?));
    let mut rows = Vec::new();
    for (path, bytes) in files {
        atomic_write(&path, &bytes)?;
        let rel = path.strip_prefix(root).unwrap_or(&path);
        rows.push(ManifestRow {
            path: rel.to_string_lossy().replace('\\', "/"),
            bytes: bytes.len(),
            sha256: sha256_hex(&bytes),
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i:04}")).collect()
    }

    #[test]
    fn standard_conditions() {
        let [a, b, c] = FrequencyCondition::standard();
        assert_eq!((a.l_count, a.nl_count), (33, 300));
        assert_eq!((b.l_count, b.nl_count), (167, 166));
        assert_eq!((c.l_count, c.nl_count), (300, 33));
        assert!("90L-20NL".parse::<FrequencyCondition>().is_err());
        assert!("90-10".parse::<FrequencyCondition>().is_err());
    }

    #[test]
    fn rosters_are_nested_and_deterministic() {
        let (l, nl) = (names("l", 300), names("n", 4860));
        let rosters: Vec<Roster> = FrequencyCondition::standard()
            .iter()
            .map(|c| sample_condition_lemmas(&l, &nl, c, 11).unwrap())
            .collect();
        assert_eq!(rosters[2].len(), 333);
        assert_eq!(rosters[0].l, rosters[2].l[..33]);
        assert_eq!(rosters[2].nl, rosters[0].nl[..33]);
        assert_eq!(rosters[1].l, rosters[2].l[..167]);
        let again = sample_condition_lemmas(&l, &nl, &FrequencyCondition::standard()[2], 11).unwrap();
        assert_eq!(again, rosters[2]);
        let c = FrequencyCondition::standard()[2].clone();
        assert!(matches!(
            sample_condition_lemmas(&l[..10], &nl, &c, 1),
            Err(Error::PoolTooSmall {
                requested: 300,
                available: 10,
                ..
            })
        ));
    }

    #[test]
    fn stratified_quotas() {
        for (l, expect) in [(33, [23, 3, 7]), (167, [119, 14, 34]), (300, [216, 24, 60])] {
            let roster = Roster {
                l: names("l", l),
                nl: names("n", 333 - l),
            };
            let s = split_lemmas(&roster, SplitSizes::default(), 5).unwrap();
            assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (239, 27, 67));
            let got = [Split::Train, Split::Dev, Split::Test].map(|x| s.l_count(x));
            assert_eq!(got, expect, "L = {l}");
        }
    }

    #[test]
    fn half_ties_go_to_train() {
        assert_eq!(quota(1, 2, 1), 0);
        assert_eq!(quota(1, 2, 3), 1);
        assert_eq!(quota(3, 4, 2), 1);
        assert_eq!(quota(33, 333, 67), 7);
    }

    #[test]
    fn bins_partition() {
        let items: Vec<usize> = (0..660).collect();
        let bins = bin_combinations(&items, 4, 3);
        assert!(bins.iter().all(|b| b.len() == 165));
        let mut all: Vec<usize> = bins.concat();
        all.sort_unstable();
        assert_eq!(all, items);
        assert_eq!(bins, bin_combinations(&items, 4, 3));
    }
}
