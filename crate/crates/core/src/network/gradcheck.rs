//! Central finite-difference checks of the analytic gradients.
//!
//! The numerical side only ever calls forward passes, so it stays
//! independent of every backward kernel it validates.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

use super::{cross_entropy, LayerSpec, Mode, Network};

/// Denominator floor for [`relative_error`]. Finite differences of an f64
/// loss near 1 carry about 1e-10 of rounding noise at the step sizes used
/// here, so relative error is not meaningful for gradients much below 1e-6.
pub const RELATIVE_FLOOR: f64 = 1e-6;

/// `|a − n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Five-point central differences
/// `(−f(x+2h) + 8f(x+h) − 8f(x−h) + f(x−2h)) / 12h` for every coordinate.
///
/// The truncation error is O(h⁴), which matters on the strongly curved loss
/// of small batch-normalized networks.
pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut at = |probe: &mut Vec<f64>, i: usize, orig: f64, step: f64| {
        probe[i] = orig + step;
        f(probe)
    };
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            let p2 = at(&mut probe, i, orig, 2.0 * h);
            let p1 = at(&mut probe, i, orig, h);
            let m1 = at(&mut probe, i, orig, -h);
            let m2 = at(&mut probe, i, orig, -2.0 * h);
            probe[i] = orig;
            (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h)
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub id: String,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_index: usize,
    /// Coordinates left out because a probe crossed a ReLU or max-pool kink.
    pub skipped: usize,
    pub checked: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn skipped(&self) -> usize {
        self.params.iter().map(|p| p.skipped).sum()
    }
}

/// Compare backprop against central differences of the training-mode loss for
/// every parameter element. Dropout must be disabled (all rates zero), since
/// each probe re-samples the masks otherwise.
///
/// The loss is only piecewise smooth. A coordinate whose probes change any
/// ReLU sign or max-pool winner has no usable difference quotient; it is
/// counted in [`ParamCheck::skipped`] instead of compared.
pub fn check_network(
    net: &Network<f64>,
    batch: &Tensor<f64>,
    one_hot: &Tensor<f64>,
    h: f64,
) -> Result<GradCheckReport> {
    if net
        .specs()
        .iter()
        .any(|s| matches!(s, LayerSpec::Dropout { rate } if *rate != 0.0))
    {
        return Err(Error::InvalidArgument(
            "gradient check needs every dropout rate set to 0".into(),
        ));
    }
    let mut analytic = net.clone();
    let probs = analytic.forward(batch, Mode::Train)?;
    let loss = cross_entropy(&probs, one_hot)?;
    analytic.backward(&loss)?;

    let mut probe = net.clone();
    probe.forward(batch, Mode::Train)?;
    let baseline = probe.activation_pattern();
    let mut report = GradCheckReport { params: Vec::new() };
    for (pi, param) in analytic.params().iter().enumerate() {
        let grad = param
            .grad
            .as_ref()
            .ok_or_else(|| Error::State(format!("no gradient for {}", param.id)))?;
        let original = net.params()[pi].value.data().to_vec();
        let mut kinked = vec![false; original.len()];
        let mut calls = 0usize;
        let numeric = numeric_gradient(
            |values| {
                probe.params_mut()[pi].value.data_mut().copy_from_slice(values);
                let p = probe.forward(batch, Mode::Train).expect("probe forward");
                // numeric_gradient makes four calls per coordinate, in order
                kinked[calls / 4] |= probe.activation_pattern() != baseline;
                calls += 1;
                cross_entropy(&p, one_hot).expect("probe loss").loss
            },
            &original,
            h,
        );
        probe.params_mut()[pi].value.data_mut().copy_from_slice(&original);
        let mut check = ParamCheck {
            id: param.id.clone(),
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_index: 0,
            skipped: 0,
            checked: 0,
        };
        for (i, (&a, &n)) in grad.data().iter().zip(&numeric).enumerate() {
            if kinked[i] {
                check.skipped += 1;
                continue;
            }
            check.checked += 1;
            let rel = relative_error(a, n);
            check.max_abs_error = check.max_abs_error.max((a - n).abs());
            if rel > check.max_rel_error {
                check.max_rel_error = rel;
                check.worst_index = i;
            }
        }
        report.params.push(check);
    }
    Ok(report)
}
