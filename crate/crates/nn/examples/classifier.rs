//! Fits a two-layer softmax classifier to a noisy XOR with Adam, after
//! checking its gradients against finite differences.
//!
//! ```text
//! cargo run --release -p morphome-nn --example classifier
//! ```

use morphome_nn::gradcheck::check_gradients;
use morphome_nn::{Adam, AdamConfig, Graph, ParamId, ParamStore, Result, Tensor, Var};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

struct Mlp {
    w1: ParamId,
    b1: ParamId,
    w2: ParamId,
}

impl Mlp {
    fn loss(&self, g: &mut Graph<'_, f64>, x: &Tensor<f64>, y: &[usize]) -> Result<Var> {
        let x = g.constant(x.clone());
        let (w1, b1, w2) = (g.param(self.w1), g.param(self.b1), g.param(self.w2));
        let h = g.matmul(x, w1, false, false)?;
        let h = g.add_bias(h, b1)?;
        let h = g.gelu(h)?;
        let logits = g.matmul(h, w2, false, false)?;
        g.label_smoothed_nll(logits, y, 0.0, None)
    }
}

fn main() -> Result<()> {
    let mut rng = StdRng::seed_from_u64(0);
    let n = 64;
    let mut xs = Vec::with_capacity(2 * n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let (a, b) = (rng.random_bool(0.5), rng.random_bool(0.5));
        xs.push(f64::from(u8::from(a)) + rng.random_range(-0.1..0.1));
        xs.push(f64::from(u8::from(b)) + rng.random_range(-0.1..0.1));
        ys.push(usize::from(a != b));
    }
    let x = Tensor::new(&[n, 2], xs)?;

    let mut params = ParamStore::new();
    let mlp = Mlp {
        w1: params.add("w1", Tensor::normal(&[2, 8], 1.0, &mut rng)),
        b1: params.add("b1", Tensor::zeros(&[8])),
        w2: params.add("w2", Tensor::normal(&[8, 2], 1.0, &mut rng)),
    };

    let report = check_gradients(&mut params, 1e-5, |g| mlp.loss(g, &x, &ys))?;
    println!(
        "gradient check: max relative error {:.1e} over {} entries",
        report.max_rel_error, report.checked
    );

    let mut adam = Adam::new(AdamConfig::default(), &params);
    for step in 1..=300 {
        params.zero_grad();
        let (grads, loss) = {
            let mut g = Graph::new(&params);
            let loss = mlp.loss(&mut g, &x, &ys)?;
            (g.backward(loss)?, g.value(loss).item())
        };
        grads.accumulate_into(&mut params);
        params.clip_grad_norm(1.0);
        adam.step(&mut params, 0.05)?;
        if step % 50 == 0 {
            println!("step {step:>3} loss {loss:.4}");
        }
    }
    Ok(())
}
