//! Central finite differences against the tape's reverse-mode gradients.

use alloc::string::String;

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;

/// Denominator floor for [`relative_error`]: below this gradient magnitude the
/// check becomes an absolute one (`|a - n| < 1e-4 * REL_FLOOR`).
pub const REL_FLOOR: f64 = 1e-3;

/// Worst disagreement found by [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// `|a - n| / max(|a| + |n|, floor)`; the floor keeps vanishing gradients
/// from turning round-off into large ratios.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(floor)
}

/// Compares reverse-mode gradients of the scalar built by `f` with central
/// differences of step `h` for every value of every parameter (or the
/// parameters accepted by `filter`).
pub fn check_gradients<F>(params: &ParamStore, h: f64, filter: impl Fn(&str) -> bool, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let grads = {
        let mut tape = Tape::new(params);
        let loss = f(&mut tape)?;
        tape.backward(loss)?
    };
    let eval = |p: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(p);
        let loss = f(&mut tape)?;
        Ok(tape.value(loss).data()[0])
    };
    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
    };
    for name in params.names() {
        if !filter(&name) {
            continue;
        }
        let n = params.get(&name).map_or(0, |t| t.len());
        for i in 0..n {
            let orig = params.get(&name).unwrap().data()[i];
            work.get_mut(&name).unwrap().data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work.get_mut(&name).unwrap().data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work.get_mut(&name).unwrap().data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = grads.get(&name).unwrap().data()[i];
            let err = relative_error(analytic, numeric, REL_FLOOR);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
