//! Central finite-difference checks of analytic gradients.

use rand::seq::index::sample;
use rand::Rng;

use super::params::Params;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|)` over the
    /// probed coordinates above [`REL_FLOOR`].
    pub max_rel_error: f64,
    /// Largest absolute error over coordinates below [`REL_FLOOR`].
    pub max_abs_error_small: f64,
    pub worst_param: String,
    pub checked: usize,
    /// Probes skipped because the perturbation crossed a non-differentiable
    /// point.
    pub skipped: usize,
}

/// Compares `analytic` with central differences of `loss` on up to
/// `per_group` coordinates of every parameter tensor. `loss` returns the
/// scalar loss and a signature of its piecewise-linear regime; probes whose
/// two sides disagree on the signature are skipped.
pub fn gradient_check<R: Rng>(
    params: &Params,
    analytic: &[f64],
    mut loss: impl FnMut(&[f64]) -> (f64, u64),
    per_group: usize,
    step: f64,
    rng: &mut R,
) -> GradCheckReport {
    assert_eq!(analytic.len(), params.len());
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        max_abs_error_small: 0.0,
        worst_param: String::new(),
        checked: 0,
        skipped: 0,
    };
    let (_, base_sig) = loss(&params.data);
    let mut p = params.data.clone();
    for spec in &params.specs {
        let n = spec.len();
        let picks: Vec<usize> = if n <= per_group { (0..n).collect() } else { sample(rng, n, per_group).into_vec() };
        for local in picks {
            let i = spec.offset + local;
            let orig = p[i];
            p[i] = orig + step;
            let (lp, sp) = loss(&p);
            p[i] = orig - step;
            let (lm, sm) = loss(&p);
            p[i] = orig;
            if sp != base_sig || sm != base_sig {
                report.skipped += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * step);
            let a = analytic[i];
            let scale = a.abs().max(numeric.abs());
            report.checked += 1;
            if scale < REL_FLOOR {
                report.max_abs_error_small = report.max_abs_error_small.max((a - numeric).abs());
                continue;
            }
            let rel = (a - numeric).abs() / scale;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_param = spec.name.clone();
            }
        }
    }
    report
}
