use super::{window_extent, Element, Padding, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Flat input index chosen by each pooling window, recorded for the backward pass.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ArgmaxMap {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    indices: Vec<usize>,
}

impl ArgmaxMap {
    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn output_shape(&self) -> &[usize] {
        &self.output_shape
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

/// Max pooling over `pool×pool` windows. Padded cells never win; ties go to
/// the lowest flat input index.
pub fn maxpool_forward<T: Element>(
    input: &Tensor<T>,
    pool: usize,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, ArgmaxMap)> {
    if pool == 0 || stride == 0 {
        return Err(invalid("maxpool pool size and stride must be at least 1"));
    }
    let (n, h, w, c) = input.dims4()?;
    let (oh, pad_top) = window_extent(h, pool, stride, padding)?;
    let (ow, pad_left) = window_extent(w, pool, stride, padding)?;
    let x = input.data();
    let mut out = Vec::with_capacity(n * oh * ow * c);
    let mut indices = Vec::with_capacity(n * oh * ow * c);
    let mut best_val = vec![T::zero(); c];
    let mut best_idx = vec![usize::MAX; c];
    for b in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                best_idx.fill(usize::MAX);
                for ky in 0..pool {
                    let Some(iy) = (oy * stride + ky).checked_sub(pad_top).filter(|&i| i < h)
                    else {
                        continue;
                    };
                    for kx in 0..pool {
                        let Some(ix) =
                            (ox * stride + kx).checked_sub(pad_left).filter(|&i| i < w)
                        else {
                            continue;
                        };
                        let base = ((b * h + iy) * w + ix) * c;
                        for ch in 0..c {
                            let v = x[base + ch];
                            // windows are scanned in increasing flat index, so `>` keeps the first maximum
                            if best_idx[ch] == usize::MAX || v > best_val[ch] {
                                best_val[ch] = v;
                                best_idx[ch] = base + ch;
                            }
                        }
                    }
                }
                out.extend_from_slice(&best_val);
                indices.extend_from_slice(&best_idx);
            }
        }
    }
    let output_shape = vec![n, oh, ow, c];
    Ok((
        Tensor::new(output_shape.clone(), out)?,
        ArgmaxMap {
            input_shape: input.shape().to_vec(),
            output_shape,
            indices,
        },
    ))
}

/// Route each upstream gradient to its window's argmax; overlapping windows accumulate.
pub fn maxpool_backward<T: Element>(map: &ArgmaxMap, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != map.output_shape {
        return Err(shape_err(
            "maxpool_backward",
            format!(
                "grad_out {:?} does not match the argmax map's output {:?}",
                grad_out.shape(),
                map.output_shape
            ),
        ));
    }
    let mut grad_in = Tensor::zeros(map.input_shape.clone())?;
    let dst = grad_in.data_mut();
    for (&idx, &g) in map.indices.iter().zip(grad_out.data()) {
        dst[idx] += g;
    }
    Ok(grad_in)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Rng;

    #[test]
    fn paper_pool_shapes() {
        let x = Tensor::<f32>::zeros(vec![1, 256, 256, 2]).unwrap();
        let (y, _) = maxpool_forward(&x, 3, 3, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 85, 85, 2]);
        let x = Tensor::<f32>::zeros(vec![1, 85, 85, 2]).unwrap();
        let (y, _) = maxpool_forward(&x, 3, 2, Padding::Valid).unwrap();
        assert_eq!(y.shape(), &[1, 42, 42, 2]);
        let x = Tensor::<f32>::zeros(vec![1, 42, 42, 2]).unwrap();
        let (y, _) = maxpool_forward(&x, 3, 2, Padding::Same).unwrap();
        assert_eq!(y.shape(), &[1, 21, 21, 2]);
    }

    #[test]
    fn constant_input_gives_constant_output() {
        let x = Tensor::<f64>::full(vec![2, 7, 7, 3], -0.75).unwrap();
        let (y, _) = maxpool_forward(&x, 3, 2, Padding::Same).unwrap();
        assert!(y.data().iter().all(|&v| v == -0.75));
    }

    #[test]
    fn ties_pick_lowest_index() {
        let x = Tensor::<f64>::full(vec![1, 2, 2, 1], 1.0).unwrap();
        let (_, map) = maxpool_forward(&x, 2, 2, Padding::Valid).unwrap();
        assert_eq!(map.indices(), &[0]);
    }

    #[test]
    fn oversized_window_is_rejected() {
        let x = Tensor::<f64>::zeros(vec![1, 2, 2, 1]).unwrap();
        assert!(maxpool_forward(&x, 3, 1, Padding::Valid).is_err());
        assert!(maxpool_forward(&x, 0, 1, Padding::Valid).is_err());
    }

    #[test]
    fn disjoint_windows_route_one_per_window() {
        let mut rng = Rng::new(2);
        let data: Vec<f64> = (0..36).map(|_| rng.unit()).collect();
        let x = Tensor::new(vec![1, 6, 6, 1], data).unwrap();
        let (y, map) = maxpool_forward(&x, 3, 3, Padding::Valid).unwrap();
        let ones = Tensor::full(y.shape().to_vec(), 1.0).unwrap();
        let g = maxpool_backward(&map, &ones).unwrap();
        for wy in 0..2 {
            for wx in 0..2 {
                let mut count = 0.0;
                for y in 0..3 {
                    for x in 0..3 {
                        count += g.data()[(wy * 3 + y) * 6 + wx * 3 + x];
                    }
                }
                assert_eq!(count, 1.0);
            }
        }
        let zeros = Tensor::<f64>::zeros(y.shape().to_vec()).unwrap();
        assert!(maxpool_backward(&map, &zeros).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_map_is_rejected() {
        let x = Tensor::<f64>::zeros(vec![1, 6, 6, 1]).unwrap();
        let (_, map) = maxpool_forward(&x, 3, 3, Padding::Valid).unwrap();
        let g = Tensor::<f64>::zeros(vec![1, 3, 3, 1]).unwrap();
        assert!(maxpool_backward(&map, &g).is_err());
    }
}
