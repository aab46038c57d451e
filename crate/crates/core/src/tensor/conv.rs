use super::{window_extent, Element, Padding, Tensor};
use crate::error::{invalid, shape_err, Result};

/// Resolved geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug)]
struct ConvGeometry {
    n: usize,
    h: usize,
    w: usize,
    cin: usize,
    kh: usize,
    kw: usize,
    cout: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    pad_top: usize,
    pad_left: usize,
}

impl ConvGeometry {
    fn new<T: Element>(
        input: &Tensor<T>,
        kernels: &Tensor<T>,
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let (n, h, w, cin) = input.dims4()?;
        let [kh, kw, kcin, cout] = kernels.shape()[..] else {
            return Err(shape_err(
                "conv2d",
                format!("kernels must be Kh×Kw×Cin×Cout, got {:?}", kernels.shape()),
            ));
        };
        if kcin != cin {
            return Err(shape_err(
                "conv2d",
                format!(
                    "input has {cin} channels but kernels {:?} expect {kcin}",
                    kernels.shape()
                ),
            ));
        }
        if stride == 0 {
            return Err(invalid("conv2d stride must be at least 1"));
        }
        let (oh, pad_top) = window_extent(h, kh, stride, padding)?;
        let (ow, pad_left) = window_extent(w, kw, stride, padding)?;
        Ok(Self {
            n,
            h,
            w,
            cin,
            kh,
            kw,
            cout,
            stride,
            oh,
            ow,
            pad_top,
            pad_left,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    fn sample_len(&self) -> usize {
        self.h * self.w * self.cin
    }

    /// Input row/column for output position `o` and kernel offset `k`, if inside the image.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(pad).filter(|&i| i < extent)
    }

    /// Unfold one sample into `[oh*ow, kh*kw*cin]` patches.
    fn im2col<T: Element>(&self, sample: &[T], cols: &mut [T]) {
        let patch = self.patch_len();
        let run = self.kw * self.cin;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &mut cols[(oy * self.ow + ox) * patch..][..patch];
                for ky in 0..self.kh {
                    let dst = &mut row[ky * run..(ky + 1) * run];
                    let Some(iy) = self.source(oy, ky, self.pad_top, self.h) else {
                        dst.fill(T::zero());
                        continue;
                    };
                    for kx in 0..self.kw {
                        let d = &mut dst[kx * self.cin..(kx + 1) * self.cin];
                        match self.source(ox, kx, self.pad_left, self.w) {
                            Some(ix) => {
                                let at = (iy * self.w + ix) * self.cin;
                                d.copy_from_slice(&sample[at..at + self.cin]);
                            }
                            None => d.fill(T::zero()),
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add patch gradients back onto one sample.
    fn col2im<T: Element>(&self, cols: &[T], sample: &mut [T]) {
        let patch = self.patch_len();
        let run = self.kw * self.cin;
        for oy in 0..self.oh {
            for ox in 0..self.ow {
                let row = &cols[(oy * self.ow + ox) * patch..][..patch];
                for ky in 0..self.kh {
                    let Some(iy) = self.source(oy, ky, self.pad_top, self.h) else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        if let Some(ix) = self.source(ox, kx, self.pad_left, self.w) {
                            let at = (iy * self.w + ix) * self.cin;
                            let src = &row[ky * run + kx * self.cin..][..self.cin];
                            for (d, &s) in sample[at..at + self.cin].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Cross-correlation of an `N×H×W×Cin` input with `Kh×Kw×Cin×Cout` kernels plus bias.
pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(input, kernels, stride, padding)?;
    if bias.len() != g.cout {
        return Err(shape_err(
            "conv2d",
            format!("bias has {} entries for {} filters", bias.len(), g.cout),
        ));
    }
    let positions = g.positions();
    let patch = g.patch_len();
    let mut out = vec![T::zero(); g.n * positions * g.cout];
    let mut cols = vec![T::zero(); positions * patch];
    for (sample, dst) in input
        .data()
        .chunks(g.sample_len())
        .zip(out.chunks_mut(positions * g.cout))
    {
        g.im2col(sample, &mut cols);
        for row in dst.chunks_mut(g.cout) {
            row.copy_from_slice(bias.data());
        }
        T::gemm(positions, patch, g.cout, &cols, false, kernels.data(), false, dst, true);
    }
    Tensor::new(vec![g.n, g.oh, g.ow, g.cout], out)
}

/// Gradients of [`conv2d_forward`] with respect to input, kernels and bias.
pub fn conv2d_backward<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (gi, gk, gb) = conv2d_backward_impl(input, kernels, grad_out, stride, padding, true)?;
    Ok((gi.expect("input gradient requested"), gk, gb))
}

/// Input gradient (when requested), kernel gradient, bias gradient.
type ConvGrads<T> = (Option<Tensor<T>>, Tensor<T>, Tensor<T>);

pub(crate) fn conv2d_backward_impl<T: Element>(
    input: &Tensor<T>,
    kernels: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeometry::new(input, kernels, stride, padding)?;
    let expected = [g.n, g.oh, g.ow, g.cout];
    if grad_out.shape() != expected {
        return Err(shape_err(
            "conv2d_backward",
            format!(
                "grad_out {:?} does not match forward output {expected:?}",
                grad_out.shape()
            ),
        ));
    }
    let positions = g.positions();
    let patch = g.patch_len();
    let mut grad_k = vec![T::zero(); patch * g.cout];
    let mut grad_b = vec![T::zero(); g.cout];
    let mut grad_in = if need_input_grad {
        vec![T::zero(); input.len()]
    } else {
        Vec::new()
    };
    let mut cols = vec![T::zero(); positions * patch];
    let mut grad_cols = vec![T::zero(); positions * patch];
    for (i, (sample, go)) in input
        .data()
        .chunks(g.sample_len())
        .zip(grad_out.data().chunks(positions * g.cout))
        .enumerate()
    {
        g.im2col(sample, &mut cols);
        // dK += colsᵀ · dY
        T::gemm(patch, positions, g.cout, &cols, true, go, false, &mut grad_k, true);
        for row in go.chunks(g.cout) {
            for (b, &v) in grad_b.iter_mut().zip(row) {
                *b += v;
            }
        }
        if need_input_grad {
            // dCols = dY · Kᵀ
            T::gemm(
                positions,
                g.cout,
                patch,
                go,
                false,
                kernels.data(),
                true,
                &mut grad_cols,
                false,
            );
            let dst = &mut grad_in[i * g.sample_len()..(i + 1) * g.sample_len()];
            g.col2im(&grad_cols, dst);
        }
    }
    let grad_in = if need_input_grad {
        Some(Tensor::new(input.shape().to_vec(), grad_in)?)
    } else {
        None
    };
    Ok((
        grad_in,
        Tensor::new(kernels.shape().to_vec(), grad_k)?,
        Tensor::new(vec![g.cout], grad_b)?,
    ))
}
