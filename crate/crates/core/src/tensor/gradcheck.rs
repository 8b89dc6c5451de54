//! Central finite-difference check of tape gradients.

use super::{ParamSet, Tape, TensorError, Var};

/// Per-parameter comparison of analytic and numeric gradients.
#[derive(Clone, Debug)]
pub struct GradCheck {
    pub name: String,
    /// `‖a − n‖ / (‖a‖ + ‖n‖)`, 0 when both vanish.
    pub rel_error: f64,
    pub analytic_norm: f64,
    pub numeric_norm: f64,
}

/// Evaluates `loss` (which must record every parameter it uses via
/// `tape.param`) and compares its gradient against `(f(θ+h) − f(θ−h)) / 2h`
/// for every scalar of every parameter.
pub fn check_params<F>(params: &ParamSet<f64>, h: f64, loss: F) -> Result<Vec<GradCheck>, TensorError>
where
    F: Fn(&ParamSet<f64>, &mut Tape<f64>) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let l = loss(params, &mut tape)?;
    let grads = tape.backward(l)?;
    let analytic = params.collect_grads(&tape, &grads);
    let eval = |p: &ParamSet<f64>| -> Result<f64, TensorError> {
        let mut t = Tape::inference();
        let l = loss(p, &mut t)?;
        Ok(t.value(l).item())
    };
    let mut work = params.clone();
    let mut out = Vec::with_capacity(params.len());
    for (id, name, value) in params.iter() {
        let a = analytic.get(id).data();
        let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
        for i in 0..value.len() {
            let orig = value.data()[i];
            work.get_mut(id).data_mut()[i] = orig + h;
            let up = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig - h;
            let down = eval(&work)?;
            work.get_mut(id).data_mut()[i] = orig;
            let n = (up - down) / (2.0 * h);
            diff += (a[i] - n).powi(2);
            na += a[i] * a[i];
            nn += n * n;
        }
        let (diff, na, nn) = (diff.sqrt(), na.sqrt(), nn.sqrt());
        out.push(GradCheck {
            name: name.to_string(),
            rel_error: if na + nn == 0.0 { 0.0 } else { diff / (na + nn) },
            analytic_norm: na,
            numeric_norm: nn,
        });
    }
    Ok(out)
}
