//! Central finite-difference verification of analytic gradients.

use super::{ParamSet, Real};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest relative error over every checked entry.
    pub max_rel_err: f64,
    /// Total scalar entries compared.
    pub checked: usize,
    /// Parameter name and flat index of the worst entry.
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Compare the analytic gradients stored in `params.grad` against central
/// finite differences of `f`.
///
/// The caller runs forward+backward once to populate `params.grad`, then
/// hands over a pure evaluation closure. `f` is evaluated twice up front at
/// the unperturbed point; any disagreement means it is not deterministic and
/// the check aborts. `epsilon` must lie in `[1e-6, 1e-3]`.
///
/// Relative error per entry: `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn finite_diff_gradcheck<T, F>(
    params: &mut ParamSet<T>,
    f: F,
    epsilon: f64,
) -> Result<GradCheckReport>
where
    T: Real,
    F: Fn(&ParamSet<T>) -> f64,
{
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(Error::GradCheck(format!(
            "epsilon {epsilon} outside [1e-6, 1e-3]"
        )));
    }
    let base_a = f(params);
    let base_b = f(params);
    if base_a.to_bits() != base_b.to_bits() {
        return Err(Error::GradCheck(format!(
            "loss function is not deterministic: {base_a} vs {base_b}"
        )));
    }
    if !base_a.is_finite() {
        return Err(Error::GradCheck(format!("loss is not finite: {base_a}")));
    }

    let analytic: Vec<(String, Vec<f64>)> = params
        .iter()
        .map(|p| {
            (
                p.name.clone(),
                p.grad.data().iter().map(|v| v.as_f64()).collect(),
            )
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        checked: 0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
    };

    for (pi, (name, grads)) in analytic.iter().enumerate() {
        for (idx, &a) in grads.iter().enumerate() {
            let orig = params.iter().nth(pi).unwrap().value.data()[idx].as_f64();
            set_entry(params, pi, idx, orig + epsilon);
            let fp = f(params);
            set_entry(params, pi, idx, orig - epsilon);
            let fm = f(params);
            set_entry(params, pi, idx, orig);

            let numeric = (fp - fm) / (2.0 * epsilon);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_err {
                report.max_rel_err = rel;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.worst_analytic = a;
                report.worst_numeric = numeric;
            }
        }
    }
    Ok(report)
}

fn set_entry<T: Real>(params: &mut ParamSet<T>, pi: usize, idx: usize, v: f64) {
    params.iter_mut().nth(pi).unwrap().value.data_mut()[idx] = T::from_f64(v);
}
