//! Per-layer kernels that are not plain tensor ops: batch normalization,
//! inverted dropout and the dense (fully connected) layer.

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::{Element, Tensor};
use crate::Rng;

use super::Mode;

/// Saved forward state of a training-mode batch normalization.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    x_hat: Tensor<T>,
    inv_std: Vec<T>,
}

fn channel_count<T: Element>(x: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<usize> {
    let c = *x.shape().last().expect("non-empty shape");
    if x.rank() < 2 {
        return Err(shape_err("batchnorm", "input needs a batch axis and a feature axis"));
    }
    if gamma.len() != c || beta.len() != c {
        return Err(shape_err(
            "batchnorm",
            format!(
                "{c} channels but gamma/beta have {}/{} entries",
                gamma.len(),
                beta.len()
            ),
        ));
    }
    Ok(c)
}

/// Normalize each channel (last axis) by its batch statistics, then scale and shift.
/// Running statistics are updated as `m·running + (1 − m)·batch`.
#[allow(clippy::too_many_arguments)]
pub fn batchnorm_forward_train<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &mut Tensor<T>,
    running_var: &mut Tensor<T>,
    eps: f64,
    momentum: f64,
) -> Result<(Tensor<T>, BatchNormCache<T>)> {
    let c = channel_count(x, gamma, beta)?;
    if x.shape()[0] < 2 {
        return Err(invalid(
            "batch normalization in training mode needs a batch of at least 2",
        ));
    }
    let count = x.len() / c;
    let inv_count = 1.0 / count as f64;
    let mut mean = vec![0.0f64; c];
    for row in x.data().chunks(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv_count);
    let mut var = vec![0.0f64; c];
    for row in x.data().chunks(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v.as_f64() - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v *= inv_count);

    let inv_std: Vec<T> = var.iter().map(|&v| T::of(1.0 / (v + eps).sqrt())).collect();
    let mean_t: Vec<T> = mean.iter().map(|&m| T::of(m)).collect();
    let mut x_hat = x.clone();
    let mut y = x.clone();
    for (xh_row, y_row) in x_hat.data_mut().chunks_mut(c).zip(y.data_mut().chunks_mut(c)) {
        for ch in 0..c {
            let xh = (xh_row[ch] - mean_t[ch]) * inv_std[ch];
            xh_row[ch] = xh;
            y_row[ch] = gamma.data()[ch] * xh + beta.data()[ch];
        }
    }
    let m = T::of(momentum);
    let one_minus = T::of(1.0 - momentum);
    for ch in 0..c {
        let rm = &mut running_mean.data_mut()[ch];
        *rm = m * *rm + one_minus * T::of(mean[ch]);
        let rv = &mut running_var.data_mut()[ch];
        *rv = m * *rv + one_minus * T::of(var[ch]);
    }
    Ok((y, BatchNormCache { x_hat, inv_std }))
}

/// Normalize with the running statistics.
pub fn batchnorm_forward_eval<T: Element>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
    eps: f64,
) -> Result<Tensor<T>> {
    let c = channel_count(x, gamma, beta)?;
    let scale: Vec<T> = (0..c)
        .map(|ch| gamma.data()[ch] * T::of(1.0 / (running_var.data()[ch].as_f64() + eps).sqrt()))
        .collect();
    let mut y = x.clone();
    for row in y.data_mut().chunks_mut(c) {
        for ch in 0..c {
            row[ch] = (row[ch] - running_mean.data()[ch]) * scale[ch] + beta.data()[ch];
        }
    }
    Ok(y)
}

/// Returns `(grad_input, grad_gamma, grad_beta)`.
pub fn batchnorm_backward<T: Element>(
    cache: &BatchNormCache<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    if grad_out.shape() != cache.x_hat.shape() {
        return Err(shape_err(
            "batchnorm_backward",
            format!("{:?} vs {:?}", grad_out.shape(), cache.x_hat.shape()),
        ));
    }
    let c = cache.inv_std.len();
    let count = T::of((grad_out.len() / c) as f64);
    let mut sum_g = vec![T::zero(); c];
    let mut sum_g_xhat = vec![T::zero(); c];
    for (g_row, xh_row) in grad_out.data().chunks(c).zip(cache.x_hat.data().chunks(c)) {
        for ch in 0..c {
            sum_g[ch] += g_row[ch];
            sum_g_xhat[ch] += g_row[ch] * xh_row[ch];
        }
    }
    let mut grad_in = grad_out.clone();
    for (gi_row, xh_row) in grad_in.data_mut().chunks_mut(c).zip(cache.x_hat.data().chunks(c)) {
        for ch in 0..c {
            let k = gamma.data()[ch] * cache.inv_std[ch] / count;
            gi_row[ch] = k * (count * gi_row[ch] - sum_g[ch] - xh_row[ch] * sum_g_xhat[ch]);
        }
    }
    Ok((
        grad_in,
        Tensor::new(vec![c], sum_g_xhat)?,
        Tensor::new(vec![c], sum_g)?,
    ))
}

/// Per-element scale applied by a training-mode dropout: 0 or `1/(1 − p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    shape: Vec<usize>,
    scale: Vec<T>,
}

impl<T: Element> DropoutMask<T> {
    pub fn scales(&self) -> &[T] {
        &self.scale
    }
}

/// Inverted dropout. Identity in eval mode and whenever `rate == 0`.
pub fn dropout_forward<T: Element>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut Rng,
    mode: Mode,
) -> Result<(Tensor<T>, Option<DropoutMask<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    if mode == Mode::Eval || rate == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = T::of(1.0 / (1.0 - rate));
    let scale: Vec<T> = (0..x.len())
        .map(|_| if rng.unit() < rate { T::zero() } else { keep })
        .collect();
    let mut y = x.clone();
    for (v, &s) in y.data_mut().iter_mut().zip(&scale) {
        *v *= s;
    }
    Ok((
        y,
        Some(DropoutMask {
            shape: x.shape().to_vec(),
            scale,
        }),
    ))
}

pub fn dropout_backward<T: Element>(
    mask: Option<&DropoutMask<T>>,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let Some(mask) = mask else {
        return Ok(grad_out.clone());
    };
    if mask.shape != grad_out.shape() {
        return Err(shape_err(
            "dropout_backward",
            format!("mask {:?} vs grad {:?}", mask.shape, grad_out.shape()),
        ));
    }
    let mut g = grad_out.clone();
    for (v, &s) in g.data_mut().iter_mut().zip(&mask.scale) {
        *v *= s;
    }
    Ok(g)
}

/// `x·W + b` for `x: [N, in]`, `W: [in, out]`, `b: [out]`.
pub fn dense_forward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, fan_in) = x.dims2()?;
    let (w_in, units) = weight.dims2()?;
    if w_in != fan_in || bias.len() != units {
        return Err(shape_err(
            "dense",
            format!(
                "input {:?}, weight {:?}, bias {:?}",
                x.shape(),
                weight.shape(),
                bias.shape()
            ),
        ));
    }
    let mut out = Vec::with_capacity(n * units);
    for _ in 0..n {
        out.extend_from_slice(bias.data());
    }
    T::gemm(n, fan_in, units, x.data(), false, weight.data(), false, &mut out, true);
    Tensor::new(vec![n, units], out)
}

/// Returns `(grad_input, grad_weight, grad_bias)`.
pub fn dense_backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (n, fan_in) = x.dims2()?;
    let (_, units) = weight.dims2()?;
    if grad_out.shape() != [n, units] {
        return Err(shape_err(
            "dense_backward",
            format!("grad_out {:?}, expected [{n}, {units}]", grad_out.shape()),
        ));
    }
    let mut gx = vec![T::zero(); n * fan_in];
    T::gemm(n, units, fan_in, grad_out.data(), false, weight.data(), true, &mut gx, false);
    let mut gw = vec![T::zero(); fan_in * units];
    T::gemm(fan_in, n, units, x.data(), true, grad_out.data(), false, &mut gw, false);
    let gb = grad_out.sum_axis(0)?.reshape(vec![units])?;
    Ok((
        Tensor::new(vec![n, fan_in], gx)?,
        Tensor::new(vec![fan_in, units], gw)?,
        gb,
    ))
}

pub(crate) fn missing_cache(kind: &str) -> Error {
    Error::State(format!("{kind} layer has no cached activations for backward"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap()
    }

    #[test]
    fn batchnorm_standardizes_each_channel() {
        let x = random(&[4, 3, 3, 5], 9).map(|v| 3.0 * v + 1.5);
        let gamma = Tensor::full(vec![5], 1.0).unwrap();
        let beta = Tensor::zeros(vec![5]).unwrap();
        let mut rm = Tensor::zeros(vec![5]).unwrap();
        let mut rv = Tensor::full(vec![5], 1.0).unwrap();
        let (y, _) =
            batchnorm_forward_train(&x, &gamma, &beta, &mut rm, &mut rv, 1e-9, 0.99).unwrap();
        for ch in 0..5 {
            let vals: Vec<f64> = y.data().iter().skip(ch).step_by(5).copied().collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 1e-5, "mean {mean}");
            assert!((var - 1.0).abs() < 1e-5, "var {var}");
        }
    }

    #[test]
    fn batchnorm_rejects_single_sample_training() {
        let x = random(&[1, 2, 2, 3], 1);
        let gamma = Tensor::full(vec![3], 1.0).unwrap();
        let beta = Tensor::zeros(vec![3]).unwrap();
        let mut rm = Tensor::zeros(vec![3]).unwrap();
        let mut rv = Tensor::full(vec![3], 1.0).unwrap();
        assert!(batchnorm_forward_train(&x, &gamma, &beta, &mut rm, &mut rv, 1e-3, 0.99).is_err());
    }

    #[test]
    fn running_stats_follow_momentum() {
        let x = Tensor::<f64>::from_f64(vec![2, 1], &[1.0, 3.0]).unwrap();
        let gamma = Tensor::full(vec![1], 1.0).unwrap();
        let beta = Tensor::zeros(vec![1]).unwrap();
        let mut rm = Tensor::zeros(vec![1]).unwrap();
        let mut rv = Tensor::full(vec![1], 1.0).unwrap();
        batchnorm_forward_train(&x, &gamma, &beta, &mut rm, &mut rv, 1e-3, 0.9).unwrap();
        assert!((rm.data()[0] - 0.2).abs() < 1e-12);
        assert!((rv.data()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eval_identity_with_unit_stats() {
        let x = random(&[3, 4], 4);
        let gamma = Tensor::full(vec![4], 1.0).unwrap();
        let beta = Tensor::zeros(vec![4]).unwrap();
        let rm = Tensor::zeros(vec![4]).unwrap();
        let rv = Tensor::full(vec![4], 1.0).unwrap();
        let y = batchnorm_forward_eval(&x, &gamma, &beta, &rm, &rv, 0.0).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dropout_zero_rate_is_identity() {
        let x = random(&[3, 4], 2);
        let mut rng = Rng::new(0);
        for mode in [Mode::Train, Mode::Eval] {
            let (y, mask) = dropout_forward(&x, 0.0, &mut rng, mode).unwrap();
            assert_eq!(y, x);
            assert!(mask.is_none());
        }
    }

    #[test]
    fn dropout_preserves_expectation() {
        let x = Tensor::<f32>::full(vec![400, 256], 1.0).unwrap();
        let mut rng = Rng::new(1234);
        let (y, mask) = dropout_forward(&x, 0.5, &mut rng, Mode::Train).unwrap();
        let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
        let dropped = mask.unwrap().scales().iter().filter(|&&s| s == 0.0).count();
        assert!(dropped > 0 && dropped < y.len());
        let (e, _) = dropout_forward(&x, 0.5, &mut rng, Mode::Eval).unwrap();
        assert_eq!(e, x);
    }

    #[test]
    fn dropout_rate_must_be_below_one() {
        let x = random(&[2, 2], 0);
        assert!(dropout_forward(&x, 1.0, &mut Rng::new(0), Mode::Train).is_err());
    }

    #[test]
    fn dense_shapes() {
        let x = random(&[2, 3], 1);
        let w = random(&[3, 4], 2);
        let b = random(&[4], 3);
        let y = dense_forward(&x, &w, &b).unwrap();
        assert_eq!(y.shape(), &[2, 4]);
        let (gx, gw, gb) = dense_backward(&x, &w, &y).unwrap();
        assert_eq!(gx.shape(), &[2, 3]);
        assert_eq!(gw.shape(), &[3, 4]);
        assert_eq!(gb.shape(), &[4]);
        assert!(dense_forward(&w, &w, &b).is_err());
    }
}
