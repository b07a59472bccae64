//! Central finite-difference gradient checking.
//!
//! Only forward evaluations of the graph are used here, so the check stays
//! independent of the backward rules it validates.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Worst coordinate seen by [`check_gradients`].
#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub coordinates: usize,
    pub failures: usize,
    pub max_abs_err: f64,
    pub worst: Option<Mismatch>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures == 0
    }
}

/// Finite-difference step used for a coordinate with value `theta`.
pub fn step_for(theta: f64) -> f64 {
    1e-5 * theta.abs().max(1.0)
}

/// `|a - n| <= abs_tol` or `|a - n| <= rel_tol * max(|a|, |n|)`.
pub fn close(analytic: f64, numeric: f64, rel_tol: f64, abs_tol: f64) -> bool {
    let err = (analytic - numeric).abs();
    err <= abs_tol || err <= rel_tol * analytic.abs().max(numeric.abs())
}

fn eval<F>(inputs: &[Tensor], build: &F) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    let v = g.value(out);
    if v.len() != 1 {
        return Err(Error::Contract(format!(
            "gradient check needs a scalar output, got {:?}",
            v.shape()
        )));
    }
    Ok(v.item())
}

/// Central-difference estimate of d`build`/d`inputs`.
pub fn numerical_gradient<F>(inputs: &[Tensor], build: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[i].shape());
        for j in 0..inputs[i].len() {
            let theta = inputs[i].data()[j];
            let h = step_for(theta);
            work[i].data_mut()[j] = theta + h;
            let plus = eval(&work, build)?;
            work[i].data_mut()[j] = theta - h;
            let minus = eval(&work, build)?;
            work[i].data_mut()[j] = theta;
            grad.data_mut()[j] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Backward-pass gradient of `build` with respect to every input.
pub fn analytic_gradient<F>(inputs: &[Tensor], build: &F) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| g.grad(*v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
        .collect())
}

/// Compares backward-pass gradients against central differences.
pub fn check_gradients<F>(inputs: &[Tensor], build: F, rel_tol: f64, abs_tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradient(inputs, &build)?;
    let numeric = numerical_gradient(inputs, &build)?;
    let mut report = GradCheckReport {
        coordinates: 0,
        failures: 0,
        max_abs_err: 0.0,
        worst: None,
    };
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        for (j, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            report.coordinates += 1;
            let err = (av - nv).abs();
            if !close(av, nv, rel_tol, abs_tol) {
                report.failures += 1;
            }
            if err >= report.max_abs_err {
                report.max_abs_err = err;
                report.worst = Some(Mismatch {
                    input: i,
                    index: j,
                    analytic: av,
                    numeric: nv,
                });
            }
        }
    }
    Ok(report)
}
