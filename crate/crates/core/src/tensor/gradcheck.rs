//! Finite-difference verification of traced gradients.

use super::{backward, ParamStore, Tensor};
use crate::error::Result;
use crate::rng::Prng;

/// Outcome of a finite-difference sweep.
#[derive(Debug, Clone)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub coords_checked: usize,
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

impl std::fmt::Display for FdReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "max rel err {:.3e} over {} coords (worst {}[{}]: traced {:.6e}, central diff {:.6e})",
            self.max_rel_err,
            self.coords_checked,
            self.worst_param,
            self.worst_index,
            self.worst_analytic,
            self.worst_numeric
        )
    }
}

/// Compare traced gradients of `f` against central finite differences on a
/// sampled coordinate subset.
///
/// `f` must be a pure function of the store contents. Runs in 64-bit; the
/// relative error uses `max(|traced|, 1e-8)` as denominator. `samples_per_param`
/// coordinates are drawn per parameter (capped by the parameter size).
pub fn finite_diff_check<F>(
    store: &mut ParamStore<f64>,
    mut f: F,
    eps: f64,
    samples_per_param: usize,
    rng: &mut Prng,
) -> Result<FdReport>
where
    F: FnMut(&ParamStore<f64>) -> Result<Tensor<f64>>,
{
    store.clear_bindings();
    let loss = f(store)?;
    let grads = backward(&loss)?;
    let analytic = store.grads_by_name(&grads);

    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut report = FdReport {
        max_rel_err: 0.0,
        coords_checked: 0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for name in &names {
        let len = store.entry(name)?.data.len();
        let take = samples_per_param.min(len);
        let coords = rng.sample_indices(len, take);
        for idx in coords {
            store.clear_bindings();
            store.nudge(name, idx, eps)?;
            let f_plus = f(store)?.scalar_value();
            store.nudge(name, idx, -2.0 * eps)?;
            let f_minus = f(store)?.scalar_value();
            store.nudge(name, idx, eps)?;

            let numeric = (f_plus - f_minus) / (2.0 * eps);
            let traced = analytic[name][idx];
            let rel = (numeric - traced).abs() / traced.abs().max(1e-8);
            report.coords_checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = traced;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}
