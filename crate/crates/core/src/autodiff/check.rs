use super::params::{ParamId, ParamSet};
use super::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// max |g_ad − g_fd| / max(1e-8, |g_ad| + |g_fd|) over checked coordinates.
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst coordinate.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

fn evaluate<F>(params: &ParamSet<f64>, f: &mut F) -> Result<f64>
where
    F: for<'a> FnMut(&mut Tape<'a, f64>) -> Result<Var>,
{
    let mut tape = Tape::new(params);
    let out = f(&mut tape)?;
    Ok(tape.scalar(out))
}

/// Compares reverse-mode gradients of the loss built by `f` with central
/// differences of step `eps`. Every trainable tensor is probed at no more than
/// `max_coords` coordinates, spaced by a fixed stride.
pub fn grad_check<F>(params: &ParamSet<f64>, eps: f64, max_coords: usize, mut f: F) -> Result<GradCheckReport>
where
    F: for<'a> FnMut(&mut Tape<'a, f64>) -> Result<Var>,
{
    let mut grads = params.zero_grads();
    let base = {
        let mut tape = Tape::new(params);
        let out = f(&mut tape)?;
        tape.backward(out, &mut grads)?;
        tape.scalar(out)
    };
    let again = evaluate(params, &mut f)?;
    if base.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: base,
            second: again,
        });
    }

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    let ids: Vec<ParamId> = params.ids().filter(|&id| params.get(id).trainable).collect();
    for id in ids {
        let len = params.value(id).len();
        let stride = len.div_ceil(max_coords.max(1)).max(1);
        for flat in (0..len).step_by(stride) {
            let original = params.value(id).as_slice().expect("standard layout")[flat];
            let set = |w: &mut ParamSet<f64>, v: f64| {
                w.get_mut(id).value.as_slice_mut().expect("standard layout")[flat] = v;
            };
            set(&mut work, original + eps);
            let plus = evaluate(&work, &mut f)?;
            set(&mut work, original - eps);
            let minus = evaluate(&work, &mut f)?;
            set(&mut work, original);
            let fd = (plus - minus) / (2.0 * eps);
            let ad = grads.get(id).as_slice().expect("standard layout")[flat];
            let err = (ad - fd).abs() / (ad.abs() + fd.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                if err >= report.max_rel_error {
                    report.worst = Some((params.get(id).name.clone(), flat));
                }
            }
        }
    }
    Ok(report)
}
