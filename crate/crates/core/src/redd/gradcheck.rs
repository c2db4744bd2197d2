use ndarray::ArrayView2;
use serde::Serialize;

use super::model::ReddModel;
use super::train::{bce_loss, gradients};
use crate::error::{Error, Result};

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-4;
const MAX_BATCH: usize = 8;
/// Gradients smaller than this are compared in absolute rather than relative terms.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub n_params: usize,
    /// Layer index, flat parameter index within the layer (weights then bias), analytic, numeric.
    pub worst: Option<(usize, usize, f64, f64)>,
}

fn param_mut(model: &mut ReddModel, layer: usize, k: usize) -> &mut f64 {
    let layer = &mut model.layers[layer];
    let n_w = layer.weights.len();
    if k < n_w {
        let cols = layer.weights.ncols();
        &mut layer.weights[[k / cols, k % cols]]
    } else {
        &mut layer.bias[k - n_w]
    }
}

fn loss(model: &ReddModel, batch: ArrayView2<f64>, labels: &[f64]) -> Result<f64> {
    let p = model.forward(batch)?;
    bce_loss(p.as_slice().expect("contiguous"), labels)
}

/// Compares backprop gradients with central differences on every parameter.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradient_check(
    model: &ReddModel,
    batch: ArrayView2<f64>,
    labels: &[f64],
) -> Result<GradCheckReport> {
    if batch.nrows() == 0 || batch.nrows() > MAX_BATCH {
        return Err(Error::InvalidArgument(format!(
            "gradient check needs 1..={MAX_BATCH} rows, got {}",
            batch.nrows()
        )));
    }
    let analytic = gradients(model, batch, labels)?;
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        n_params: model.n_params(),
        worst: None,
    };
    for (li, (gw, gb)) in analytic.layers.iter().enumerate() {
        let n_w = gw.len();
        for k in 0..n_w + gb.len() {
            let a = if k < n_w {
                gw.as_slice().expect("contiguous")[k]
            } else {
                gb[k - n_w]
            };
            let original = *param_mut(&mut probe, li, k);
            *param_mut(&mut probe, li, k) = original + FD_STEP;
            let plus = loss(&probe, batch, labels)?;
            *param_mut(&mut probe, li, k) = original - FD_STEP;
            let minus = loss(&probe, batch, labels)?;
            *param_mut(&mut probe, li, k) = original;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
            if report.worst.is_none() || rel > report.max_relative_error {
                report.max_relative_error = rel;
                report.worst = Some((li, k, a, numeric));
            }
        }
    }
    Ok(report)
}
