//! Central finite-difference gradient checking.
//!
//! Only forward evaluations are used for the numerical side, so the check is
//! independent of every backward implementation it validates.

use crate::error::Result;
use crate::tensor::{no_grad, Param, Tensor};

pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this in magnitude are compared absolutely.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Default)]
pub struct GradReport {
    /// max over checked entries of `|analytic − numeric| / max(|analytic|, |numeric|, REL_FLOOR)`
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
    /// (input index, element index) of the worst entry
    pub worst: (usize, usize),
}

impl GradReport {
    fn record(&mut self, input: usize, elem: usize, analytic: f64, numeric: f64) {
        let abs = (analytic - numeric).abs();
        let rel = abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > self.max_rel_error {
            self.max_rel_error = rel;
            self.worst = (input, elem);
        }
        self.max_abs_error = self.max_abs_error.max(abs);
        self.checked += 1;
    }
}

/// Checks `f` with respect to every element of every input.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> Result<GradReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    let leaves: Vec<Tensor> = inputs.iter().map(|t| t.detach().requires_grad_()).collect();
    f(&leaves)?.backward()?;
    let analytic: Vec<Vec<f64>> = leaves
        .iter()
        .map(|t| t.grad().unwrap_or_else(|| vec![0.0; t.numel()]))
        .collect();

    let mut report = GradReport::default();
    for (i, leaf) in leaves.iter().enumerate() {
        for e in 0..leaf.numel() {
            let eval = |delta: f64| -> Result<f64> {
                let mut probe: Vec<Tensor> = leaves.iter().map(Tensor::detach).collect();
                let mut data = probe[i].to_vec();
                data[e] += delta;
                probe[i] = Tensor::new(data, leaf.shape())?;
                no_grad(|| f(&probe)).map(|t| t.item())
            };
            let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
            report.record(i, e, analytic[i][e], numeric);
        }
    }
    Ok(report)
}

/// Checks a scalar objective against network parameters. At most
/// `per_param` evenly spaced entries of each parameter are probed.
pub fn check_param_gradients<F>(params: &[Param], per_param: usize, f: F) -> Result<GradReport>
where
    F: Fn() -> Result<Tensor>,
{
    params.iter().for_each(Param::zero_grad);
    f()?.backward()?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    params.iter().for_each(Param::zero_grad);

    let mut report = GradReport::default();
    for (i, p) in params.iter().enumerate() {
        let n = p.numel();
        let stride = n.div_ceil(per_param.max(1)).max(1);
        let base = p.tensor().to_vec();
        for e in (0..n).step_by(stride) {
            let eval = |delta: f64| -> Result<f64> {
                let mut data = base.clone();
                data[e] += delta;
                p.set_data(data)?;
                let v = no_grad(&f).map(|t| t.item());
                p.set_data(base.clone())?;
                v
            };
            let numeric = (eval(FD_STEP)? - eval(-FD_STEP)?) / (2.0 * FD_STEP);
            report.record(i, e, analytic[i][e], numeric);
        }
    }
    Ok(report)
}
