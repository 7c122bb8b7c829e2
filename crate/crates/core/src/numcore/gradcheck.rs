use super::param::ParamSet;
use super::tape::{Bindings, Tape, Var};
use crate::error::{PflError, Result};

/// Outcome of [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_err: f64,
    /// `name[index]` of the entry with the largest error.
    pub worst: String,
    pub entries: usize,
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences for every entry of every trainable parameter.
///
/// The relative error of an entry is `|analytic - fd| / max(1, |fd|)`.
pub fn check_gradients<F>(params: &mut ParamSet, h: f64, f: F) -> Result<GradCheck>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let bind = tape.bind(params);
    let out = f(&mut tape, &bind)?;
    let grads = tape.backward(out)?;

    let eval = |params: &ParamSet, name: &str| -> Result<f64> {
        let mut tape = Tape::new();
        let bind = tape.bind(params);
        let out = f(&mut tape, &bind)?;
        let v = tape.scalar(out);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(PflError::numeric(format!(
                "objective is non-finite when perturbing {name}"
            )))
        }
    };

    let mut report = GradCheck {
        max_rel_err: 0.0,
        worst: String::new(),
        entries: 0,
    };
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.get(id).trainable {
            continue;
        }
        let name = params.get(id).name.clone();
        let analytic = grads
            .get(bind.var(id))
            .cloned()
            .unwrap_or_else(|| super::tensor::Tensor::zeros(params.value(id).shape()));
        for k in 0..analytic.len() {
            let orig = params.value(id).data()[k];
            params.get_mut(id).value.data_mut()[k] = orig + h;
            let plus = eval(params, &name);
            params.get_mut(id).value.data_mut()[k] = orig - h;
            let minus = eval(params, &name);
            params.get_mut(id).value.data_mut()[k] = orig;
            let fd = (plus? - minus?) / (2.0 * h);
            let err = (analytic.data()[k] - fd).abs() / fd.abs().max(1.0);
            report.entries += 1;
            if err > report.max_rel_err || report.worst.is_empty() {
                report.max_rel_err = err;
                report.worst = format!("{name}[{k}]");
            }
        }
    }
    Ok(report)
}
