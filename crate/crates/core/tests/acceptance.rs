//! Acceptance criteria 1-9. Each criterion prints one `PASS`/`FAIL` line.
//!
//! Criteria 1 and 3 need the UniMorph Spanish snapshot at
//! `$MORPHOME_DATA_ROOT/spa.ipa.unimorph`; without it they report FAIL and are
//! not asserted. Criterion 7 trains the desk-scale experiment of
//! `configs/desk.toml` (on the snapshot when present, otherwise on the
//! synthetic corpus) and is reported but never asserted, since it measures a
//! stochastic effect. Its outputs persist under the cargo target directory, so
//! a rerun resumes from the manifests instead of retraining.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use morphome::analysis::{consonant_pair_census, lemma_pair, pair_confusion_matrix, ConsonantPair};
use morphome::corpus::{assemble_tables, parse_unimorph, CellZone, InflectionTable, MsdTag, VerbClass};
use morphome::evaluation::{parse_records, score_sequence, score_stem, summarize, CiMethod, Metric};
use morphome::nn::gradcheck::check_gradients;
use morphome::nn::{clip_global_norm, global_norm, Graph, NnError, ParamStore, Tensor, Var};
use morphome::pipeline::{load_tables, ExperimentConfig, Layout, Pipeline, DATA_ROOT_ENV};
use morphome::sampler::{FrequencyCondition, Sampler, SamplerConfig, Split};
use morphome::synth::{synthesize, SynthConfig};
use morphome::transducer::{
    beam_search, greedy_search, train, Batch, ModelConfig, ModelScorer, TrainOptions, Transducer, Vocabulary, FORBIDDEN,
};
use morphome::tripler::{generate_triples_with, render_dataset, SerializedExample, SourceOrdering};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use common::examples;
use common::fixture::{count, fixture, CONDITIONS};
use common::oracle::{exhaustive, TableScorer};

const SNAPSHOT_FILE: &str = "spa.ipa.unimorph";

// criterion 1
const COMPLETE_LEMMAS: usize = 5460;
const L_LEMMAS: usize = 300;
const NL_LEMMAS: usize = 4860;
const DRIFT_TOLERANCE: f64 = 0.02;
// criterion 2
const TEST_SIZE: usize = 44_220;
const DEV_SIZE: usize = 4_455;
const TRAIN_SIZE: usize = 39_435;
const TRAIN_SLACK: usize = 165;
// criterion 3
const CENSUS: [(&str, &str, usize); 4] = [("s", "sk", 141), ("n", "nɡ", 53), ("ç", "x", 25), ("b", "p", 1)];
// criterion 4
const GRAD_TOL: f64 = 1e-4;
const GRAD_STEP: f64 = 1e-5;
const CLIP_TOL: f64 = 1e-6;
const LOSS_TOL: f64 = 1e-6;
// criterion 5
const ORACLE_CASES: u64 = 200;
// criterion 6
const OVERFIT_TRIPLES: usize = 50;
const OVERFIT_UPDATES: usize = 2000;
const INITIAL_LOSS_TOL: f64 = 0.05;
// criterion 7
const L_MARGIN_POINTS: f64 = 20.0;
const RARE_PAIR_MAX_LEMMAS: usize = 15;

type Outcome = Result<String, String>;

fn check(cond: bool, detail: impl Into<String>) -> Outcome {
    if cond {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn snapshot_path() -> Option<PathBuf> {
    let path = Path::new(&std::env::var_os(DATA_ROOT_ENV)?).join(SNAPSHOT_FILE);
    path.is_file().then_some(path)
}

fn snapshot_tables(path: &Path) -> Result<Vec<InflectionTable>, String> {
    let file = File::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let parsed = parse_unimorph(BufReader::new(file)).map_err(|e| e.to_string())?;
    Ok(assemble_tables(&parsed.entries).map_err(|e| e.to_string())?.tables)
}

fn missing_snapshot() -> Outcome {
    Err(format!(
        "snapshot not found; set {DATA_ROOT_ENV} to the directory holding {SNAPSHOT_FILE}"
    ))
}

fn criterion_1() -> Outcome {
    let Some(path) = snapshot_path() else {
        return missing_snapshot();
    };
    let tables = snapshot_tables(&path)?;
    let l = tables.iter().filter(|t| t.verb_class == VerbClass::L).count();
    let nl = tables.len() - l;
    let detail = format!("{} complete lemmas, {l} L / {nl} NL", tables.len());
    if (tables.len(), l, nl) == (COMPLETE_LEMMAS, L_LEMMAS, NL_LEMMAS) {
        return Ok(detail);
    }
    let drift = |got: usize, want: usize| (got as f64 - want as f64) / want as f64;
    let report = format!(
        "drift: complete {:+.2}%, L {:+.2}%, NL {:+.2}%",
        100.0 * drift(tables.len(), COMPLETE_LEMMAS),
        100.0 * drift(l, L_LEMMAS),
        100.0 * drift(nl, NL_LEMMAS)
    );
    let within = [(tables.len(), COMPLETE_LEMMAS), (l, L_LEMMAS), (nl, NL_LEMMAS)]
        .iter()
        .all(|&(g, w)| drift(g, w).abs() <= DRIFT_TOLERANCE);
    check(within, format!("{detail}; {report}"))
}

fn dataset_digest(
    sampler: &mut Sampler<'_>,
    cond: &FrequencyCondition,
    bin: usize,
    run: usize,
) -> Result<(Vec<u8>, [usize; 3]), String> {
    let ds = sampler.build(cond, bin, run).map_err(|e| e.to_string())?;
    let mut h = Sha256::new();
    for split in [Split::Train, Split::Dev, Split::Test] {
        let (src, tgt, tsv) = render_dataset(ds.split(split));
        h.update(src);
        h.update(tgt);
        h.update(tsv);
    }
    Ok((h.finalize().to_vec(), [ds.train.len(), ds.dev.len(), ds.test.len()]))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let (tables, corpus) = match snapshot_path() {
        Some(p) => (snapshot_tables(&p)?, "snapshot"),
        None => (synthesize(&SynthConfig::default()), "synthetic corpus"),
    };
    let config = SamplerConfig::default();
    let mut a = Sampler::new(&tables, config.clone(), 1).map_err(|e| e.to_string())?;
    let mut b = Sampler::new(&tables, config.clone(), 1).map_err(|e| e.to_string())?;
    let mut datasets = 0;
    let mut train_range = (usize::MAX, 0);
    for cond in FrequencyCondition::standard() {
        for bin in 0..config.bins {
            for run in 0..config.runs {
                let (da, [train, dev, test]) = dataset_digest(&mut a, &cond, bin, run)?;
                let (db, _) = dataset_digest(&mut b, &cond, bin, run)?;
                let id = format!("{}/bin{bin}/run{run}", cond.name);
                if test != TEST_SIZE || dev != DEV_SIZE || train.abs_diff(TRAIN_SIZE) > TRAIN_SLACK {
                    return Err(format!("{id}: train {train}, dev {dev}, test {test}"));
                }
                if da != db {
                    return Err(format!("{id}: two builds from the same master seed differ"));
                }
                train_range = (train_range.0.min(train), train_range.1.max(train));
                datasets += 1;
            }
        }
    }
    Ok(format!(
        "{datasets} datasets on the {corpus}: test {TEST_SIZE}, dev {DEV_SIZE}, train {}..{}; byte-identical rebuilds; {:.1}s",
        train_range.0,
        train_range.1,
        start.elapsed().as_secs_f64()
    ))
}

fn criterion_3() -> Outcome {
    let Some(path) = snapshot_path() else {
        return missing_snapshot();
    };
    let census: HashMap<ConsonantPair, usize> = consonant_pair_census(&snapshot_tables(&path)?).into_iter().collect();
    let mut parts = Vec::new();
    let mut ok = true;
    for (out, inn, want) in CENSUS {
        let got = census.get(&ConsonantPair::new(out, inn)).copied().unwrap_or(0);
        ok &= got == want;
        parts.push(format!("[{out}]-[{inn}] {got}/{want}"));
    }
    check(ok, parts.join(", "))
}

fn weighted_sum(g: &mut Graph<'_, f64>, x: Var) -> morphome::nn::Result<Var> {
    let shape = g.shape(x).to_vec();
    let w = g.constant(Tensor::from_fn(&shape, |i| ((i * 7919 % 13) as f64 - 6.0) / 5.0 + 0.05));
    let y = g.mul(x, w)?;
    g.sum(y)
}

/// Gradient check of every op on one small graph each, plus a whole model.
fn op_gradient_errors() -> Result<Vec<(String, f64)>, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut out = Vec::new();
    let mut run =
        |name: &str, store: &mut ParamStore<f64>, build: &dyn Fn(&mut Graph<'_, f64>) -> morphome::nn::Result<Var>| {
            let r = check_gradients(store, GRAD_STEP, build).map_err(|e| format!("{name}: {e}"))?;
            out.push((name.to_string(), r.max_rel_error));
            Ok::<_, String>(())
        };

    let mut s = ParamStore::new();
    let a = s.add("a", Tensor::normal(&[2, 3, 4], 1.0, &mut rng));
    let b = s.add("b", Tensor::normal(&[2, 5, 4], 1.0, &mut rng));
    let w = s.add("w", Tensor::normal(&[4, 3], 1.0, &mut rng));
    let bias = s.add("bias", Tensor::normal(&[3], 1.0, &mut rng));
    let gain = s.add("gain", Tensor::normal(&[4], 1.0, &mut rng));
    let shift = s.add("shift", Tensor::normal(&[4], 1.0, &mut rng));
    let kink_free = s.add(
        "x",
        Tensor::from_fn(&[2, 5], |i| {
            if i % 2 == 0 {
                0.3 + i as f64 * 0.1
            } else {
                -0.4 - i as f64 * 0.1
            }
        }),
    );
    let emb = s.add("emb", Tensor::normal(&[5, 3], 1.0, &mut rng));
    let logits = s.add("logits", Tensor::normal(&[5, 6], 1.0, &mut rng));

    run("matmul", &mut s, &|g| {
        let (av, bv) = (g.param(a), g.param(b));
        let y = g.matmul(av, bv, false, true)?;
        let wv = g.param(w);
        let z = g.matmul(av, wv, false, false)?;
        let (ys, zs) = (weighted_sum(g, y)?, weighted_sum(g, z)?);
        g.add(ys, zs)
    })?;
    run("add/mul/scale/add_bias", &mut s, &|g| {
        let (av, wv, bv) = (g.param(a), g.param(w), g.param(bias));
        let x = g.matmul(av, wv, false, false)?;
        let y = g.mul(x, x)?;
        let y = g.add(y, x)?;
        let y = g.scale(y, 0.7)?;
        let y = g.add_bias(y, bv)?;
        weighted_sum(g, y)
    })?;
    run("relu/gelu", &mut s, &|g| {
        let x = g.param(kink_free);
        let r = g.relu(x)?;
        let e = g.gelu(x)?;
        let y = g.add(r, e)?;
        weighted_sum(g, y)
    })?;
    run("layer_norm", &mut s, &|g| {
        let (x, gv, bv) = (g.param(a), g.param(gain), g.param(shift));
        let y = g.layer_norm(x, gv, bv, 1e-5)?;
        weighted_sum(g, y)
    })?;
    let keep: Vec<bool> = (0..30).map(|i| i % 6 != 4).collect();
    run("softmax/masked_softmax/log_softmax", &mut s, &|g| {
        let x = g.param(logits);
        let p = g.softmax(x)?;
        let m = g.masked_softmax(x, &keep)?;
        let l = g.log_softmax(x)?;
        let y = g.add(p, m)?;
        let y = g.add(y, l)?;
        weighted_sum(g, y)
    })?;
    // batch 2, heads 2, tq 3, tk 5; the second sequence has two padded keys
    let attn_keep: Vec<bool> = (0..60).map(|i| i / 15 < 2 || i % 5 < 3).collect();
    run("split_heads/attention/merge_heads", &mut s, &|g| {
        let (q, kv) = (g.param(a), g.param(b));
        let qh = g.split_heads(q, 2)?;
        let kh = g.split_heads(kv, 2)?;
        let (o, _) = g.attention(qh, kh, kh, &attn_keep)?;
        let o = g.merge_heads(o, 2)?;
        weighted_sum(g, o)
    })?;
    run("embedding/reshape/mean", &mut s, &|g| {
        let t = g.param(emb);
        let e = g.embedding(t, &[4, 0, 4, 2])?;
        let e = g.reshape(e, &[2, 2, 3])?;
        let m = g.mean(e)?;
        let w = weighted_sum(g, e)?;
        g.add(m, w)
    })?;
    run("label_smoothed_nll", &mut s, &|g| {
        let l = g.param(logits);
        g.label_smoothed_nll(l, &[1, 0, 5, 0, 3], 0.1, Some(0))
    })?;

    // a whole two-layer transducer, dropout off
    let ex = vec![SerializedExample {
        source: "d i ɡ a # <V;SBJV;PRS;1;SG> # d i ɡ a s # <V;SBJV;PRS;2;SG> # <V;IND;PRS;1;SG>".into(),
        target: "d i ɡ o".into(),
    }];
    let vocab = Vocabulary::build(&ex);
    let config = ModelConfig {
        layers: 2,
        heads: 2,
        embedding_dim: 8,
        feed_forward_dim: 12,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = Transducer::<f64>::new(&config, vocab, 2);
    let src = model.vocab.encode(&ex[0].source);
    let tgt = model.vocab.encode(&ex[0].target);
    let batch = Batch::new(&[(&src, &tgt)]);
    let mut params = std::mem::take(&mut model.params);
    run("transducer loss", &mut params, &|g| {
        model
            .loss(g, &batch, 0.1, 0.0)
            .map_err(|e| NnError::InvalidArgument(e.to_string()))
    })?;
    Ok(out)
}

fn criterion_4() -> Outcome {
    let errors = op_gradient_errors()?;
    let (worst_name, worst) = errors
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
        .unwrap_or_default();

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut clip_err: f64 = 0.0;
    for _ in 0..200 {
        let scale = 10f64.powf(rng.random_range(-3.0..2.0));
        let mut grads: Vec<Tensor<f64>> = (0..3)
            .map(|_| Tensor::from_fn(&[rng.random_range(1..20)], |_| rng.random_range(-1.0..1.0) * scale))
            .collect();
        let norm = clip_global_norm(&mut grads, 1.0);
        clip_err = clip_err.max((global_norm(grads.iter()) - norm.min(1.0)).abs());
    }

    let mut loss_err: f64 = 0.0;
    for v in [2usize, 5, 40, 97] {
        for smoothing in [0.0, 0.1, 0.3] {
            let store = ParamStore::<f64>::new();
            let mut g = Graph::new(&store);
            let logits = g.constant(Tensor::from_fn(&[3, v], |_| 0.25));
            let loss = g
                .label_smoothed_nll(logits, &[0, v - 1, v / 2], smoothing, None)
                .map_err(|e| e.to_string())?;
            loss_err = loss_err.max((g.value(loss).item() - (v as f64).ln()).abs());
        }
    }
    check(
        worst < GRAD_TOL && clip_err <= CLIP_TOL && loss_err <= LOSS_TOL,
        format!(
            "max gradient relative error {worst:.2e} ({worst_name}) over {} checks; clip error {clip_err:.1e}; uniform-logit loss error {loss_err:.1e}",
            errors.len()
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..ORACLE_CASES {
        // 1-4 real symbols plus EOS, so at most five outputs per step
        let symbols = rng.random_range(1..=4usize);
        let vocab = FORBIDDEN.len() + 1 + symbols;
        let max_len = rng.random_range(1..=3usize);
        let width = (symbols + 1).pow(max_len as u32);
        let mut scorer = TableScorer::new(vocab, case);
        let (tokens, score) = exhaustive(&mut scorer, max_len);
        let out = beam_search(&mut scorer, width, max_len).map_err(|e| e.to_string())?;
        if out.best.tokens != tokens || (out.best.score - score).abs() > 1e-12 {
            return Err(format!(
                "case {case}: beam {:?} vs exhaustive {tokens:?}",
                out.best.tokens
            ));
        }
        let greedy = greedy_search(&mut scorer, max_len).map_err(|e| e.to_string())?;
        if beam_search(&mut scorer, 1, max_len).map_err(|e| e.to_string())?.best != greedy {
            return Err(format!("case {case}: beam-1 differs from greedy"));
        }
    }
    // the same checks with real (random) transducers as scorers
    let ex = vec![SerializedExample {
        source: "a # <V;IND;PRS;1;SG> # b # <V;IND;PRS;2;SG> # <V;IND;PRS;3;SG>".into(),
        target: "a b".into(),
    }];
    let vocab = Vocabulary::build(&ex);
    let config = ModelConfig {
        layers: 1,
        heads: 2,
        embedding_dim: 8,
        feed_forward_dim: 8,
        dropout: 0.0,
        init_std: 1.0,
        ..ModelConfig::default()
    };
    let allowed = vocab.len() - FORBIDDEN.len();
    for seed in 0..20 {
        let model = Transducer::<f64>::new(&config, vocab.clone(), seed);
        let src = vocab.encode(&ex[0].source);
        let mut scorer = ModelScorer::new(&model, &src).map_err(|e| e.to_string())?;
        for max_len in 1..=3 {
            let (tokens, _) = exhaustive(&mut scorer, max_len);
            let out = beam_search(&mut scorer, allowed.pow(max_len as u32), max_len).map_err(|e| e.to_string())?;
            if out.best.tokens != tokens {
                return Err(format!(
                    "transducer seed {seed}, max_len {max_len}: beam differs from exhaustive"
                ));
            }
            let greedy = greedy_search(&mut scorer, max_len).map_err(|e| e.to_string())?;
            if beam_search(&mut scorer, 1, max_len).map_err(|e| e.to_string())?.best != greedy {
                return Err(format!("transducer seed {seed}: beam-1 differs from greedy"));
            }
        }
    }
    Ok(format!(
        "{ORACLE_CASES} random tables and 20 random transducers: beam = exhaustive, beam-1 = greedy"
    ))
}

fn criterion_6() -> Outcome {
    let ex = examples(10, 5);
    assert_eq!(ex.len(), OVERFIT_TRIPLES);
    let config = ModelConfig {
        layers: 2,
        heads: 4,
        embedding_dim: 64,
        feed_forward_dim: 256,
        dropout: 0.0,
        batch_size: OVERFIT_TRIPLES,
        checkpoint_every_epochs: 100,
        max_updates: OVERFIT_UPDATES,
        lr: 0.002,
        ..ModelConfig::default()
    };
    let run = train(&config, &ex, &ex, TrainOptions::default()).map_err(|e| e.to_string())?;
    let first_full = run
        .report
        .checkpoints
        .iter()
        .find(|c| c.dev_accuracy == 1.0)
        .map(|c| c.update);

    let initial = train(
        &ModelConfig {
            max_updates: 1,
            batch_size: 64,
            ..ModelConfig::default()
        },
        &examples(40, 20),
        &ex[..10],
        TrainOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let ln_v = (initial.report.vocab_size as f64).ln();
    let rel = (initial.report.initial_loss - ln_v).abs() / ln_v;
    check(
        first_full.is_some_and(|u| u <= OVERFIT_UPDATES) && rel < INITIAL_LOSS_TOL,
        format!(
            "training accuracy 100% at update {}; initial loss {:.4} vs ln|V| {ln_v:.4} ({:.2}% off)",
            first_full.map_or("never".into(), |u| u.to_string()),
            initial.report.initial_loss,
            100.0 * rel
        ),
    )
}

fn desk_config(out: &Path) -> Result<ExperimentConfig, String> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/desk.toml");
    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
    config.output_dir = out.to_path_buf();
    if let Some(snapshot) = snapshot_path() {
        config.corpus.path = Some(snapshot);
        config.corpus.synthetic = None;
    }
    Ok(config)
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance-desk");
    let config = desk_config(&out)?;
    let pipeline = Pipeline::new(config).map_err(|e| e.to_string())?;
    pipeline.run_all(false).map_err(|e| e.to_string())?;
    let layout = Layout::new(&out);
    let records = parse_records(&std::fs::read_to_string(layout.evaluation("records.tsv")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let mean = |cond: &str, class: VerbClass| {
        summarize(&records, false, Metric::Sequence, CiMethod::Normal)
            .into_iter()
            .find(|s| s.key.condition == cond && s.key.verb_class == class)
            .map(|s| s.mean)
    };
    let (Some(l90), Some(nl90), Some(l10), Some(nl10)) = (
        mean("90L-10NL", VerbClass::L),
        mean("90L-10NL", VerbClass::NL),
        mean("10L-90NL", VerbClass::L),
        mean("10L-90NL", VerbClass::NL),
    ) else {
        return Err("missing condition or class in the desk records".into());
    };

    let tables = load_tables(&layout).map_err(|e| e.to_string())?;
    let pairs: HashMap<String, ConsonantPair> = tables.iter().map(|t| (t.lemma.clone(), lemma_pair(t))).collect();
    let sk = ConsonantPair::new("s", "sk");
    let rare: Vec<ConsonantPair> = consonant_pair_census(&tables)
        .into_iter()
        .filter(|(p, n)| p.alternates() && *n <= RARE_PAIR_MAX_LEMMAS && *p != sk)
        .map(|(p, _)| p)
        .collect();
    let in_90: Vec<_> = records.iter().filter(|r| r.condition == "90L-10NL").cloned().collect();
    let matrix = pair_confusion_matrix(&in_90, &pairs);
    let sk_acc = matrix.accuracy(&sk);
    let rare_acc = matrix.pooled_accuracy(&rare);

    let a = l90 - nl90 >= L_MARGIN_POINTS;
    let b = nl10 > l10;
    let c = matches!((sk_acc, rare_acc), (Some(s), Some(r)) if s >= r);
    let pct = |x: Option<f64>| x.map_or("NA".to_string(), |v| format!("{:.2}%", 100.0 * v));
    let mark = |ok: bool| if ok { "ok" } else { "not met" };
    check(
        a && b && c,
        format!(
            "(a) 90L-10NL L {l90:.2} vs NL {nl90:.2} {}; (b) 10L-90NL NL {nl10:.2} vs L {l10:.2} {}; (c) [s]-[sk] {} vs rare pairs {} {}; {:.0}s",
            mark(a),
            mark(b),
            pct(sk_acc),
            pct(rare_acc),
            mark(c),
            start.elapsed().as_secs_f64()
        ),
    )
}

fn criterion_8() -> Outcome {
    let f = fixture();
    let conditions: Vec<String> = CONDITIONS.iter().map(|c| c.to_string()).collect();
    let table = morphome::analysis::cell_combination_table(&f.records, &conditions, Metric::Sequence);
    let mut text = Vec::new();
    morphome::analysis::write_cell_table(&table, &mut text).map_err(|e| e.to_string())?;
    let text = String::from_utf8(text).map_err(|e| e.to_string())?;
    let header: Vec<&str> = text.lines().next().unwrap_or("").split('\t').collect();
    let rows_ok = table.len() == 24 && text.lines().count() == 25 && header.contains(&"L/NL");
    let expected_l = [100.0, 50.0, 50.0, 50.0, 100.0, 50.0, 50.0, 50.0];
    let values_ok = table
        .chunks(8)
        .all(|c| c.iter().zip(expected_l).all(|(r, l)| r.l == Some(l)))
        && table[..8].iter().map(|r| r.ratio()).collect::<Vec<_>>()
            == [Some(2.0), None, None, Some(1.0), None, Some(1.0), None, Some(1.0)];

    let obs_ok = morphome::analysis::OBSERVATION_HEADER.split('\t').collect::<Vec<_>>()
        == [
            "prediction_status",
            "knowledge_state",
            "frequency_condition",
            "triple",
            "model",
        ];

    let pair = lemma_pair(&f.l_table);
    let pairs: HashMap<String, ConsonantPair> = [(f.l_table.lemma.clone(), pair.clone())].into();
    let in_targets = count(&f.l_triples, |t| t.target_tag.zone() == CellZone::In);
    let mut confusion_ok = true;
    for cond in CONDITIONS {
        let recs: Vec<_> = f.records.iter().filter(|r| r.condition == cond).cloned().collect();
        let m = pair_confusion_matrix(&recs, &pairs);
        let gold = recs
            .iter()
            .filter(|r| r.verb_class() == VerbClass::L && r.triple.target_tag.zone() == CellZone::In)
            .count();
        confusion_ok &= gold == 2 * in_targets && m.counts.get(&pair).map(|r| r.values().sum::<usize>()) == Some(gold);
    }
    check(
        rows_ok && values_ok && obs_ok && confusion_ok,
        format!(
            "8 zone rows x 3 conditions with L/NL {}; hand-computed cells {}; observation variables {}; confusion row sums {}",
            rows_ok, values_ok, obs_ok, confusion_ok
        ),
    )
}

fn criterion_9() -> Outcome {
    use proptest::prelude::*;
    use proptest::test_runner::{Config, TestRunner};
    let mut runner = TestRunner::new(Config {
        cases: 64,
        ..Config::default()
    });
    let corpus = |seed: u64| {
        synthesize(&SynthConfig {
            l_lemmas: 12,
            nl_lemmas: 20,
            incomplete_lemmas: 0,
            seed,
        })
    };

    runner
        .run(
            &(0u64..30, 0usize..32, 0usize..12, 0usize..8, "[a-zɡx]{0,2}"),
            |(seed, lemma, tag, cut, insert)| {
                let tables = corpus(seed);
                let tag = MsdTag::ALL[tag];
                let gold = tables[lemma % tables.len()].form(tag).to_string();
                let chars: Vec<char> = gold.chars().collect();
                let hyp: String = chars[..chars.len() - cut.min(chars.len())].iter().collect::<String>() + &insert;
                if score_sequence(&hyp, &gold) {
                    prop_assert!(score_stem(&hyp, &gold, tag).correct);
                }
                Ok(())
            },
        )
        .map_err(|e| format!("seqCorrect => stemCorrect: {e}"))?;

    let ins = MsdTag::ALL.iter().filter(|t| t.zone() == CellZone::In).count();
    if ins != 7 || MsdTag::ALL.len() != 12 {
        return Err(format!("{ins} In cells of {}", MsdTag::ALL.len()));
    }

    runner
        .run(
            &(0u64..30, 0usize..32, any::<u64>(), any::<bool>()),
            |(seed, lemma, tseed, canonical)| {
                let tables = corpus(seed);
                let ordering = if canonical {
                    SourceOrdering::Canonical
                } else {
                    SourceOrdering::Random
                };
                let triples = generate_triples_with(&tables[lemma % tables.len()], tseed, ordering);
                prop_assert_eq!(triples.len(), 660);
                let mut pairs: BTreeMap<(MsdTag, MsdTag), usize> = BTreeMap::new();
                for t in &triples {
                    let key = if t.src1.tag < t.src2.tag {
                        (t.src1.tag, t.src2.tag)
                    } else {
                        (t.src2.tag, t.src1.tag)
                    };
                    *pairs.entry(key).or_default() += 1;
                }
                let mut multiset = [0usize; 3];
                for (a, b) in pairs.keys() {
                    multiset[usize::from(a.zone() == CellZone::In) + usize::from(b.zone() == CellZone::In)] += 1;
                }
                prop_assert!(pairs.values().all(|&n| n == 10));
                prop_assert_eq!(multiset, [10, 35, 21]);
                Ok(())
            },
        )
        .map_err(|e| format!("660 triples / 21-35-10: {e}"))?;

    let mut runner = TestRunner::new(Config {
        cases: 8,
        ..Config::default()
    });
    let tables = corpus(7);
    runner
        .run(
            &(any::<u64>(), prop::sample::select(vec![10u32, 50, 90]), 0usize..3),
            |(master, percent, bin)| {
                let config = SamplerConfig {
                    split: morphome::sampler::SplitSizes {
                        train: 6,
                        dev: 2,
                        test: 2,
                    },
                    bins: 3,
                    runs: 3,
                    source_ordering: SourceOrdering::Random,
                };
                let cond = FrequencyCondition::from_percent(percent, 10).unwrap();
                let mut sampler = Sampler::new(&tables, config, master).unwrap();
                let reference = render_dataset(&sampler.build(&cond, bin, 0).unwrap().test);
                for run in 1..3 {
                    prop_assert_eq!(
                        &render_dataset(&sampler.build(&cond, bin, run).unwrap().test),
                        &reference
                    );
                }
                Ok(())
            },
        )
        .map_err(|e| format!("test-set identity: {e}"))?;
    Ok(
        "seqCorrect => stemCorrect, 7 In / 5 Out, 660 triples with 21/35/10 pairs, test-set identity across runs"
            .into(),
    )
}

#[test]
fn acceptance_criteria() {
    let snapshot = snapshot_path().is_some();
    let criteria: [(u8, &str, fn() -> Outcome, bool); 9] = [
        (1, "corpus reconciliation", criterion_1, snapshot),
        (2, "count reconciliation", criterion_2, true),
        (3, "consonant census", criterion_3, snapshot),
        (4, "numerical core", criterion_4, true),
        (5, "decoder oracle", criterion_5, true),
        (6, "training smoke", criterion_6, true),
        (7, "directional effect", criterion_7, false),
        (8, "analysis structure", criterion_8, true),
        (9, "invariant suites", criterion_9, true),
    ];
    let mut failed = Vec::new();
    for (id, name, f, asserted) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        // written to the stdout handle so the lines survive libtest capture
        let line = match &outcome {
            Ok(detail) => format!("PASS {id} {name}: {detail}\n"),
            Err(detail) => {
                if asserted {
                    failed.push(id);
                }
                format!("FAIL {id} {name}: {detail}\n")
            }
        };
        let mut out = std::io::stdout().lock();
        out.write_all(line.as_bytes()).unwrap();
        out.flush().unwrap();
    }
    assert!(failed.is_empty(), "criteria failed: {failed:?}");
}
