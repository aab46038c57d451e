use super::{Element, Tensor};
use crate::error::{shape_err, Result};

/// Matrix product `[M,K]·[K,N] → [M,N]`.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2()?;
    let (k2, n) = b.dims2()?;
    if k != k2 {
        return Err(shape_err(
            "matmul",
            format!("{:?} · {:?}: inner extents differ", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * n];
    T::gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
    Tensor::new(vec![m, n], out)
}

pub fn relu<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Gradient of [`relu`]; the subgradient at 0 is taken as 0.
pub fn relu_backward<T: Element>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    input.zip_map(grad_out, "relu_backward", |x, g| {
        if x > T::zero() {
            g
        } else {
            T::zero()
        }
    })
}

/// Softmax over the last axis, computed with max subtraction.
pub fn softmax<T: Element>(x: &Tensor<T>) -> Tensor<T> {
    let cols = *x.shape().last().expect("tensor has at least one axis");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Vector-Jacobian product of [`softmax`] given its output `probs`.
pub fn softmax_backward<T: Element>(probs: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if probs.shape() != grad_out.shape() {
        return Err(shape_err(
            "softmax_backward",
            format!("{:?} vs {:?}", probs.shape(), grad_out.shape()),
        ));
    }
    let cols = *probs.shape().last().expect("tensor has at least one axis");
    let mut out = grad_out.clone();
    for (row, p) in out.data_mut().chunks_mut(cols).zip(probs.data().chunks(cols)) {
        let dot: T = row.iter().zip(p).map(|(&g, &p)| g * p).sum();
        for (g, &p) in row.iter_mut().zip(p) {
            *g = p * (*g - dot);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_definition() {
        let x = Tensor::<f64>::from_f64(vec![3], &[-1.0, 0.0, 2.5]).unwrap();
        assert_eq!(relu(&x).data(), &[0.0, 0.0, 2.5]);
        let g = Tensor::<f64>::from_f64(vec![3], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(relu_backward(&x, &g).unwrap().data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let x = Tensor::<f64>::full(vec![2, 15], 3.7).unwrap();
        for &p in softmax(&x).data() {
            assert!((p - 1.0 / 15.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_survives_huge_logits() {
        let x = Tensor::<f32>::from_f64(vec![1, 3], &[1000.0, 999.0, -1000.0]).unwrap();
        let p = softmax(&x);
        assert!(p.is_finite());
        assert!((p.sum() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn matmul_identity() {
        let a = Tensor::<f64>::from_f64(vec![2, 3], &[1., 2., 3., 4., 5., 6.]).unwrap();
        let mut eye = Tensor::<f64>::zeros(vec![3, 3]).unwrap();
        for i in 0..3 {
            eye.data_mut()[i * 3 + i] = 1.0;
        }
        assert_eq!(matmul(&a, &eye).unwrap(), a);
    }

    #[test]
    fn matmul_small_product() {
        let a = Tensor::<f32>::from_f64(vec![2, 2], &[1., 2., 3., 4.]).unwrap();
        let b = Tensor::<f32>::from_f64(vec![2, 1], &[5., 6.]).unwrap();
        assert_eq!(matmul(&a, &b).unwrap().data(), &[17., 39.]);
        assert!(matmul(&b, &b).is_err());
    }

    #[test]
    fn softmax_backward_matches_finite_differences() {
        let x = Tensor::<f64>::from_f64(vec![2, 4], &[0.3, -1.2, 2.0, 0.1, 1.0, 1.5, -0.5, 0.0])
            .unwrap();
        let w = [0.7, -0.2, 1.3, 0.4, -1.1, 0.5, 0.9, 0.2];
        let objective = |x: &Tensor<f64>| -> f64 {
            softmax(x).data().iter().zip(&w).map(|(p, w)| p * w).sum()
        };
        let p = softmax(&x);
        let g = Tensor::from_f64(vec![2, 4], &w).unwrap();
        let analytic = softmax_backward(&p, &g).unwrap();
        let h = 1e-6;
        for i in 0..x.len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += h;
            let mut minus = x.clone();
            minus.data_mut()[i] -= h;
            let numeric = (objective(&plus) - objective(&minus)) / (2.0 * h);
            assert!((numeric - analytic.data()[i]).abs() < 1e-8);
        }
    }
}
