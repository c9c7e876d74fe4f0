use super::{ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Outcome of comparing analytic gradients against central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter holding the worst element, and the element's flat index.
    pub worst_param: String,
    pub worst_index: usize,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.max_rel_error < tol
    }
}

/// Central-difference gradient check of every parameter element.
///
/// `f` builds a scalar loss on the tape it is given. Piecewise branches
/// (ReLU masks, max-pool winners) taken at the unperturbed point are
/// replayed during the perturbed evaluations so that both sides of each
/// difference differentiate the same smooth piece.
pub fn grad_check<F>(f: F, store: &mut ParamStore, h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
{
    grad_check_with(f, store, h, |_, _| {})
}

/// As [`grad_check`], with `tamper` applied to each analytic gradient
/// before comparison. Used to confirm that corrupted gradients are caught.
pub fn grad_check_with<F, T>(
    mut f: F,
    store: &mut ParamStore,
    h: f64,
    mut tamper: T,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Tape, &ParamStore) -> Result<Var>,
    T: FnMut(&str, &mut Tensor),
{
    if !(h > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {h}")));
    }
    let mut tape = Tape::new();
    let loss = f(&mut tape, store)?;
    store.zero_grads();
    tape.backward(loss, store)?;
    let record = tape.into_branch_record();
    let analytic: Vec<Tensor> = store
        .iter()
        .map(|p| {
            let mut g = p.grad.clone();
            tamper(&p.name, &mut g);
            g
        })
        .collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        checked: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for (id, ga) in ids.into_iter().zip(&analytic) {
        for i in 0..ga.len() {
            let orig = store.get(id).value.data()[i];
            let mut eval = |store: &mut ParamStore, x: f64| -> Result<f64> {
                store.get_mut(id).value.data_mut()[i] = x;
                let mut t = Tape::replaying(record.clone());
                let out = f(&mut t, store)
                    .and_then(|v| t.value(v).item())
                    .map_err(|e| match e {
                        Error::NonFinite(what) => Error::NonFinite(format!(
                            "{what} while perturbing {}[{i}]",
                            store.get(id).name
                        )),
                        other => other,
                    });
                store.get_mut(id).value.data_mut()[i] = orig;
                let out = out?;
                if !out.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss while perturbing {}[{i}]",
                        store.get(id).name
                    )));
                }
                Ok(out)
            };
            let fp = eval(store, orig + h)?;
            let fm = eval(store, orig - h)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (ga.data()[i] - fd).abs() / fd.abs().max(1e-8);
            report.checked += 1;
            if rel > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = rel.max(report.max_rel_error);
                report.worst_param = store.get(id).name.clone();
                report.worst_index = i;
                report.worst_analytic = ga.data()[i];
                report.worst_numeric = fd;
            }
        }
    }
    Ok(report)
}
