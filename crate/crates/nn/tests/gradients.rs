//! Analytic gradients against central finite differences in f64.

use morphome_nn::gradcheck::check_gradients;
use morphome_nn::{Graph, ParamStore, Result, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-4;
const H: f64 = 1e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Weighted sum so each output entry gets a distinct upstream gradient.
fn reduce(g: &mut Graph<'_, f64>, x: Var) -> Result<Var> {
    let shape = g.shape(x).to_vec();
    let w = g.constant(Tensor::from_fn(&shape, |i| ((i * 7919 % 13) as f64 - 6.0) / 5.0 + 0.05));
    let y = g.mul(x, w)?;
    g.sum(y)
}

fn assert_ok(name: &str, store: &mut ParamStore<f64>, build: impl Fn(&mut Graph<'_, f64>) -> Result<Var>) {
    let report = check_gradients(store, H, build).unwrap();
    assert!(report.checked > 0);
    assert!(
        report.max_rel_error < TOL,
        "{name}: max relative error {} at {}",
        report.max_rel_error,
        report.worst
    );
}

#[test]
fn matmul_all_transpose_combinations_and_shared_rhs() {
    let mut r = rng(1);
    for (ta, tb) in [(false, false), (true, false), (false, true), (true, true)] {
        let mut s = ParamStore::new();
        let a_shape = if ta { [2, 4, 3] } else { [2, 3, 4] };
        let b_shape = if tb { [2, 5, 4] } else { [2, 4, 5] };
        let a = s.add("a", Tensor::normal(&a_shape, 1.0, &mut r));
        let b = s.add("b", Tensor::normal(&b_shape, 1.0, &mut r));
        assert_ok("bmm", &mut s, |g| {
            let (av, bv) = (g.param(a), g.param(b));
            let y = g.matmul(av, bv, ta, tb)?;
            reduce(g, y)
        });

        let mut s = ParamStore::new();
        let b2_shape = if tb { [5, 4] } else { [4, 5] };
        let a = s.add("a", Tensor::normal(&a_shape, 1.0, &mut r));
        let b = s.add("b", Tensor::normal(&b2_shape, 1.0, &mut r));
        assert_ok("shared matmul", &mut s, |g| {
            let (av, bv) = (g.param(a), g.param(b));
            let y = g.matmul(av, bv, ta, tb)?;
            reduce(g, y)
        });
    }
}

#[test]
fn elementwise_ops() {
    let mut r = rng(2);
    let mut s = ParamStore::new();
    let a = s.add("a", Tensor::normal(&[3, 4], 1.0, &mut r));
    let b = s.add("b", Tensor::normal(&[3, 4], 1.0, &mut r));
    let bias = s.add("bias", Tensor::normal(&[4], 1.0, &mut r));
    assert_ok("add/mul/scale/bias", &mut s, |g| {
        let (av, bv, cv) = (g.param(a), g.param(b), g.param(bias));
        let x = g.add(av, bv)?;
        let x = g.mul(x, av)?;
        let x = g.scale(x, 0.7)?;
        let x = g.add_bias(x, cv)?;
        reduce(g, x)
    });
}

#[test]
fn activations() {
    let mut r = rng(3);
    let mut s = ParamStore::new();
    // keep relu inputs away from the kink
    let x = s.add(
        "x",
        Tensor::from_fn(&[2, 5], |i| {
            if i % 2 == 0 {
                0.3 + i as f64 * 0.1
            } else {
                -0.4 - i as f64 * 0.1
            }
        }),
    );
    let y = s.add("y", Tensor::normal(&[2, 5], 1.5, &mut r));
    assert_ok("relu", &mut s, |g| {
        let v = g.param(x);
        let o = g.relu(v)?;
        reduce(g, o)
    });
    assert_ok("gelu", &mut s, |g| {
        let v = g.param(y);
        let o = g.gelu(v)?;
        reduce(g, o)
    });
}

#[test]
fn layer_norm() {
    let mut r = rng(4);
    let mut s = ParamStore::new();
    let x = s.add("x", Tensor::normal(&[3, 6], 2.0, &mut r));
    let gamma = s.add("gamma", Tensor::normal(&[6], 1.0, &mut r));
    let beta = s.add("beta", Tensor::normal(&[6], 1.0, &mut r));
    assert_ok("layer_norm", &mut s, |g| {
        let (xv, gv, bv) = (g.param(x), g.param(gamma), g.param(beta));
        let o = g.layer_norm(xv, gv, bv, 1e-5)?;
        reduce(g, o)
    });
}

#[test]
fn softmax_variants() {
    let mut r = rng(5);
    let mut s = ParamStore::new();
    let x = s.add("x", Tensor::normal(&[4, 5], 1.0, &mut r));
    assert_ok("softmax", &mut s, |g| {
        let v = g.param(x);
        let o = g.softmax(v)?;
        reduce(g, o)
    });
    assert_ok("log_softmax", &mut s, |g| {
        let v = g.param(x);
        let o = g.log_softmax(v)?;
        reduce(g, o)
    });
    let keep: Vec<bool> = (0..20).map(|i| i % 5 != 3 && i != 7).collect();
    assert_ok("masked_softmax", &mut s, |g| {
        let v = g.param(x);
        let o = g.masked_softmax(v, &keep)?;
        reduce(g, o)
    });
}

#[test]
fn attention_with_heads() {
    let mut r = rng(6);
    let mut s = ParamStore::new();
    let q = s.add("q", Tensor::normal(&[2, 3, 4], 1.0, &mut r));
    let kv = s.add("kv", Tensor::normal(&[2, 5, 4], 1.0, &mut r));
    // batch 2, heads 2, tq 3, tk 5; second sequence has two padded keys
    let keep: Vec<bool> = (0..2 * 2 * 3 * 5)
        .map(|i| {
            let bh = i / 15;
            let k = i % 5;
            bh < 2 || k < 3
        })
        .collect();
    assert_ok("attention", &mut s, |g| {
        let (qv, kvv) = (g.param(q), g.param(kv));
        let qh = g.split_heads(qv, 2)?;
        let kh = g.split_heads(kvv, 2)?;
        let (o, _) = g.attention(qh, kh, kh, &keep)?;
        let o = g.merge_heads(o, 2)?;
        reduce(g, o)
    });
}

#[test]
fn embedding_reshape_and_reductions() {
    let mut r = rng(7);
    let mut s = ParamStore::new();
    let table = s.add("table", Tensor::normal(&[5, 3], 1.0, &mut r));
    assert_ok("embedding", &mut s, |g| {
        let t = g.param(table);
        let e = g.embedding(t, &[4, 0, 4, 2])?;
        let e = g.reshape(e, &[2, 2, 3])?;
        let m = g.mean(e)?;
        let w = reduce(g, e)?;
        g.add(m, w)
    });
}

#[test]
fn smoothed_nll_with_padding() {
    let mut r = rng(8);
    let mut s = ParamStore::new();
    let logits = s.add("logits", Tensor::normal(&[5, 6], 1.0, &mut r));
    for smoothing in [0.0, 0.1, 0.5] {
        assert_ok("nll", &mut s, |g| {
            let l = g.param(logits);
            g.label_smoothed_nll(l, &[1, 0, 5, 0, 3], smoothing, Some(0))
        });
    }
}

#[test]
fn random_five_parameter_graph() {
    // a small MLP-with-attention graph touching five parameters
    for seed in 0..5 {
        let mut r = rng(100 + seed);
        let mut s = ParamStore::new();
        let x = s.add("x", Tensor::normal(&[1, 4, 8], 1.0, &mut r));
        let w1 = s.add("w1", Tensor::normal(&[8, 8], 0.4, &mut r));
        let b1 = s.add("b1", Tensor::normal(&[8], 0.1, &mut r));
        let gain = s.add("gain", Tensor::normal(&[8], 1.0, &mut r));
        let w2 = s.add("w2", Tensor::normal(&[8, 6], 0.4, &mut r));
        let keep = vec![true; 4 * 4 * 2];
        assert_ok("composite", &mut s, |g| {
            let xv = g.param(x);
            let zero = g.constant(Tensor::zeros(&[8]));
            let gv = g.param(gain);
            let n = g.layer_norm(xv, gv, zero, 1e-5)?;
            let heads = g.split_heads(n, 2)?;
            let (a, _) = g.attention(heads, heads, heads, &keep)?;
            let a = g.merge_heads(a, 2)?;
            let h = g.add(a, xv)?;
            let w1v = g.param(w1);
            let h = g.matmul(h, w1v, false, false)?;
            let b1v = g.param(b1);
            let h = g.add_bias(h, b1v)?;
            let h = g.gelu(h)?;
            let w2v = g.param(w2);
            let logits = g.matmul(h, w2v, false, false)?;
            let logits = g.reshape(logits, &[4, 6])?;
            g.label_smoothed_nll(logits, &[2, 5, 0, 1], 0.1, None)
        });
    }
}
