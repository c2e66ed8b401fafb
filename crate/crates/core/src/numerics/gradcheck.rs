use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Tape gradient and central finite difference of one parameter coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradSample {
    pub param: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradSample {
    /// `|a - g| / max(|a|, |g|, 1e-8)`.
    pub fn rel_err(&self) -> f64 {
        let denom = self.analytic.abs().max(self.numeric.abs()).max(1e-8);
        (self.analytic - self.numeric).abs() / denom
    }

    pub fn abs_err(&self) -> f64 {
        (self.analytic - self.numeric).abs()
    }
}

/// Largest relative disagreement between tape gradients and central finite
/// differences over every coordinate of `params`.
///
/// `f` receives a fresh tape with `params` bound as tracked leaves (in order)
/// and must return a scalar node. Relative error per coordinate is
/// `|a - g| / max(|a|, |g|, 1e-8)`.
pub fn grad_check<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<f64>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    Ok(grad_samples(f, params, eps)?
        .iter()
        .map(GradSample::rel_err)
        .fold(0.0, f64::max))
}

/// Every coordinate compared by [`grad_check`].
///
/// Coordinates whose true gradient is exactly zero (a softmax loss is blind
/// to a shift shared by all its scores) still pick up forward rounding in
/// the finite difference, about `ulp(f) / eps`; callers can inspect those
/// separately.
pub fn grad_samples<F>(f: F, params: &[Tensor<f64>], eps: f64) -> Result<Vec<GradSample>>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let v = tape.scalar(out);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check forward value {v}")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    if !tape.scalar(out).is_finite() {
        return Err(Error::NonFinite(format!(
            "grad_check forward value {}",
            tape.scalar(out)
        )));
    }
    let mut grads = tape.backward(out)?;
    let analytic: Vec<Tensor<f64>> = vars
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.take_or_zeros(v, p.shape()))
        .collect();

    let mut work = params.to_vec();
    let mut samples = Vec::new();
    for (pi, a) in analytic.iter().enumerate() {
        for k in 0..a.len() {
            let orig = work[pi].data()[k];
            work[pi].data_mut()[k] = orig + eps;
            let hi = eval(&work)?;
            work[pi].data_mut()[k] = orig - eps;
            let lo = eval(&work)?;
            work[pi].data_mut()[k] = orig;
            samples.push(GradSample {
                param: pi,
                index: k,
                analytic: a.data()[k],
                numeric: (hi - lo) / (2.0 * eps),
            });
        }
    }
    Ok(samples)
}
