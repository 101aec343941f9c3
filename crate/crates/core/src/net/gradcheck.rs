use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::NetError;

/// Worst disagreement found by [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub checked: usize,
    pub exempt: usize,
    pub max_rel_error: f64,
    /// `(array name, flat index, analytic, numeric)` of the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

/// Compares tape gradients of `loss` with central differences of step `h`
/// for every scalar in `store`. Entries where both gradients are below
/// `exempt_below` are skipped.
pub fn check_gradients<F>(
    store: &mut ParamStore,
    loss: F,
    h: f64,
    exempt_below: f64,
) -> Result<GradCheckReport, NetError>
where
    F: Fn(&mut Tape) -> Result<Var, NetError>,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let l = loss(&mut tape)?;
        tape.backward(l)
    };
    let eval = |s: &ParamStore| -> Result<f64, NetError> {
        let mut tape = Tape::new(s);
        let l = loss(&mut tape)?;
        Ok(tape.value(l).data[0])
    };
    let mut report = GradCheckReport {
        checked: 0,
        exempt: 0,
        max_rel_error: 0.0,
        worst: None,
    };
    for p in 0..store.len() {
        let id = ParamId(p);
        for k in 0..store.get(id).len() {
            let orig = store.get(id).data[k];
            store.get_mut(id).data[k] = orig + h;
            let up = eval(store)?;
            store.get_mut(id).data[k] = orig - h;
            let down = eval(store)?;
            store.get_mut(id).data[k] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic.get(id).map_or(0.0, |g| g.data[k]);
            if a.abs() < exempt_below && numeric.abs() < exempt_below {
                report.exempt += 1;
                continue;
            }
            report.checked += 1;
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((store.name(id).to_string(), k, a, numeric));
            }
        }
    }
    Ok(report)
}
