//! Central finite-difference verification of reverse-mode gradients.
//!
//! Everything runs in `f64`: the analytic gradient comes from the same graph
//! code instantiated at double precision, and every finite-difference probe
//! re-evaluates the forward pass in double precision.

use super::graph::{Graph, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error with the floor used throughout the test-suite.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

fn evaluate<F>(f: &F, point: &Tensor<f64>) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let g = Graph::new();
    let x = g.constant(point.clone());
    let y = f(&g, x)?;
    let v = y.value();
    if v.len() != 1 {
        return Err(Error::shape("grad_check", v.shape(), &[]));
    }
    Ok(v.item())
}

/// Analytic gradient of a scalar function at `point`.
pub fn analytic_gradient<F>(f: &F, point: &Tensor<f64>) -> Result<Tensor<f64>>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&g, x)?;
    let mut grads = g.backward(y)?;
    Ok(grads.take(x).unwrap_or_else(|| Tensor::zeros(point.shape())))
}

/// Maximum relative error between analytic and central-difference gradients
/// over every coordinate of `point`.
pub fn grad_check<F>(f: F, point: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, step, &coords)
}

/// Like [`grad_check`] but probing only the listed coordinates.
pub fn grad_check_coords<F>(f: F, point: &Tensor<f64>, step: f64, coords: &[usize]) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    let analytic = analytic_gradient(&f, point)?;
    let mut worst = 0.0f64;
    let mut probe = point.clone();
    for &i in coords {
        let x0 = point.data()[i];
        probe.data_mut()[i] = x0 + step;
        let plus = evaluate(&f, &probe)?;
        probe.data_mut()[i] = x0 - step;
        let minus = evaluate(&f, &probe)?;
        probe.data_mut()[i] = x0;
        let numeric = (plus - minus) / (2.0 * step);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

/// Relative error of the directional derivative along `direction`.
///
/// One probe pair covers every coordinate at once, which keeps checks of
/// large inputs cheap.
pub fn directional_check<F>(f: F, point: &Tensor<f64>, direction: &Tensor<f64>, step: f64) -> Result<f64>
where
    F: for<'g> Fn(&'g Graph<f64>, Var<'g, f64>) -> Result<Var<'g, f64>>,
{
    if direction.shape() != point.shape() {
        return Err(Error::shape("directional_check", point.shape(), direction.shape()));
    }
    let analytic = analytic_gradient(&f, point)?;
    let projected: f64 = analytic.data().iter().zip(direction.data()).map(|(a, d)| a * d).sum();
    let shifted = |s: f64| {
        Tensor::from_parts(
            point.shape().to_vec(),
            point
                .data()
                .iter()
                .zip(direction.data())
                .map(|(p, d)| p + s * d)
                .collect(),
        )
    };
    let plus = evaluate(&f, &shifted(step))?;
    let minus = evaluate(&f, &shifted(-step))?;
    Ok(relative_error(projected, (plus - minus) / (2.0 * step)))
}
