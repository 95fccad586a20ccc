//! Central finite-difference verification of tape gradients.

use super::{AutodiffError, Result, Tape, Tensor, Var};

/// Compares the tape gradient of scalar `f` at `x` with central differences.
///
/// Returns `max_i |analytic_i − numeric_i| / max(1, |analytic_i|, |numeric_i|)`.
pub fn gradient_check<F>(f: F, x: &Tensor<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, Var) -> Result<Var>,
{
    gradient_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), eps)
}

/// [`gradient_check`] over several inputs at once; the error is the maximum
/// over every coordinate of every input.
pub fn gradient_check_many<F>(f: F, inputs: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    ensure_finite(tape.value(out)?.item(), "forward value")?;
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| tape.grad(v).map(|g| g.unwrap_or_default().to_vec()))
        .collect::<Result<_>>()?;

    let eval = |perturbed: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        ensure_finite(tape.value(out)?.item(), "perturbed value")
    };

    let mut worst = 0.0f64;
    let mut work: Vec<Tensor<f64>> = inputs.to_vec();
    for (which, grad) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let orig = inputs[which].data()[i];
            work[which].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[which].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[which].data_mut()[i] = orig;

            let numeric = (plus - minus) / (2.0 * eps);
            if !a.is_finite() {
                return Err(AutodiffError::NonFinite("analytic gradient".into()));
            }
            let err = (a - numeric).abs() / 1f64.max(a.abs()).max(numeric.abs());
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn ensure_finite(v: Option<f64>, what: &str) -> Result<f64> {
    match v {
        Some(v) if v.is_finite() => Ok(v),
        Some(_) => Err(AutodiffError::NonFinite(what.into())),
        None => Err(AutodiffError::Invalid {
            op: "gradient_check",
            msg: "function must return a scalar".into(),
        }),
    }
}
