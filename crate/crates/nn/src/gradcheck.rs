//! Central finite-difference gradient checking, meant to run in `f64`.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParamStore;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `name[index]` of the worst entry.
    pub worst: String,
    pub checked: usize,
}

/// Relative error with a floor on the denominator so that entries whose true
/// gradient is (numerically) zero are judged on absolute error instead.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-5);
    (analytic - numeric).abs() / denom
}

/// Compares the analytic gradient of `build`'s scalar output with respect to
/// every entry of every parameter against central differences of step `h`.
pub fn check_gradients<F>(params: &mut ParamStore<f64>, h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_, f64>) -> Result<Var>,
{
    params.zero_grad();
    let grads = {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        g.backward(loss)?
    };
    grads.accumulate_into(params);
    let analytic: Vec<Vec<f64>> = params.iter().map(|p| p.grad.data().to_vec()).collect();

    let eval = |params: &ParamStore<f64>| -> Result<f64> {
        let mut g = Graph::new(params);
        let loss = build(&mut g)?;
        Ok(g.value(loss).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: String::new(),
        checked: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for (pi, id) in ids.into_iter().enumerate() {
        for j in 0..params.value(id).numel() {
            let orig = params.value(id).data()[j];
            params.value_mut(id).data_mut()[j] = orig + h;
            let plus = eval(params)?;
            params.value_mut(id).data_mut()[j] = orig - h;
            let minus = eval(params)?;
            params.value_mut(id).data_mut()[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(analytic[pi][j], numeric);
            report.checked += 1;
            if report.checked == 1 || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = format!("{}[{j}]", params.get(id).name);
            }
        }
    }
    Ok(report)
}
