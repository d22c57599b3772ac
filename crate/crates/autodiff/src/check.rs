//! Central finite-difference gradient checking.

use crate::params::{Gradients, ParamStore};
use crate::tape::{Tape, Var};

/// Worst relative error between analytic and numeric gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
}

/// `|a - n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backward-mode gradients of `f` against central differences with step `h`.
///
/// `f` must build a scalar loss from the store's parameters on the given tape.
/// At most `max_per_param` coordinates of each parameter are probed (evenly strided).
pub fn check_gradients<F>(store: &mut ParamStore, f: F, h: f64, max_per_param: usize) -> CheckReport
where
    F: Fn(&mut Tape) -> Var,
{
    let mut grads = Gradients::zeros_like(store);
    {
        let mut tape = Tape::new(store);
        let loss = f(&mut tape);
        tape.backward(loss, &mut grads).expect("scalar loss");
    }
    let eval = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let loss = f(&mut tape);
        tape.value(loss).item()
    };
    let mut max_rel_err: f64 = 0.0;
    let mut checked = 0;
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        let n = store.get(id).len();
        let stride = (n / max_per_param.max(1)).max(1);
        for j in (0..n).step_by(stride).take(max_per_param) {
            let orig = store.get(id).data[j];
            store.get_mut(id).data[j] = orig + h;
            let plus = eval(store);
            store.get_mut(id).data[j] = orig - h;
            let minus = eval(store);
            store.get_mut(id).data[j] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let err = relative_error(grads.get(id)[j], numeric, 1e-6);
            max_rel_err = max_rel_err.max(err);
            checked += 1;
        }
    }
    CheckReport {
        max_rel_err,
        checked,
    }
}
