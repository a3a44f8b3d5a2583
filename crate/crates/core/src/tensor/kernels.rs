//! Convolution lowering (im2col / col2im) and the GEMM-backed conv kernels.

use super::Element;

/// Output extent of a square-kernel convolution along one axis.
///
/// `None` when the padded input is smaller than the kernel.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_height: usize,
    pub out_width: usize,
}

impl ConvGeometry {
    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    fn out_plane(&self) -> usize {
        self.out_height * self.out_width
    }

    fn cols(&self) -> usize {
        self.batch * self.out_plane()
    }
}

/// Lower the input into a `[C*k*k, B*Ho*Wo]` column matrix.
fn im2col<T: Element>(g: &ConvGeometry, input: &[T], col: &mut [T]) {
    let plane = g.out_plane();
    let cols = g.cols();
    let k = g.kernel;
    for c in 0..g.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst_row = &mut col[row * cols..(row + 1) * cols];
                for b in 0..g.batch {
                    let src = &input[(b * g.in_channels + c) * g.height * g.width..][..g.height * g.width];
                    let dst = &mut dst_row[b * plane..(b + 1) * plane];
                    for oy in 0..g.out_height {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let dst_line = &mut dst[oy * g.out_width..(oy + 1) * g.out_width];
                        if iy < 0 || iy >= g.height as isize {
                            dst_line.fill(T::zero());
                            continue;
                        }
                        let src_line = &src[iy as usize * g.width..][..g.width];
                        for (ox, d) in dst_line.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *d = if ix < 0 || ix >= g.width as isize {
                                T::zero()
                            } else {
                                src_line[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-add a column matrix back onto an input-shaped gradient.
fn col2im<T: Element>(g: &ConvGeometry, col: &[T], grad_input: &mut [T]) {
    let plane = g.out_plane();
    let cols = g.cols();
    let k = g.kernel;
    for c in 0..g.in_channels {
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src_row = &col[row * cols..(row + 1) * cols];
                for b in 0..g.batch {
                    let dst = &mut grad_input[(b * g.in_channels + c) * g.height * g.width..]
                        [..g.height * g.width];
                    let src = &src_row[b * plane..(b + 1) * plane];
                    for oy in 0..g.out_height {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        let dst_line = &mut dst[iy as usize * g.width..][..g.width];
                        let src_line = &src[oy * g.out_width..(oy + 1) * g.out_width];
                        for (ox, &v) in src_line.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.width as isize {
                                dst_line[ix as usize] = dst_line[ix as usize] + v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// `[B,F,P]` <-> `[F,B*P]` relayout.
fn batch_major_to_channel_major<T: Element>(g: &ConvGeometry, src: &[T], dst: &mut [T]) {
    let plane = g.out_plane();
    let cols = g.cols();
    for b in 0..g.batch {
        for f in 0..g.out_channels {
            let s = &src[(b * g.out_channels + f) * plane..][..plane];
            dst[f * cols + b * plane..][..plane].copy_from_slice(s);
        }
    }
}

fn channel_major_to_batch_major<T: Element>(g: &ConvGeometry, src: &[T], dst: &mut [T]) {
    let plane = g.out_plane();
    let cols = g.cols();
    for b in 0..g.batch {
        for f in 0..g.out_channels {
            let s = &src[f * cols + b * plane..][..plane];
            dst[(b * g.out_channels + f) * plane..][..plane].copy_from_slice(s);
        }
    }
}

pub(crate) fn conv2d_forward<T: Element>(g: &ConvGeometry, input: &[T], weight: &[T]) -> Vec<T> {
    let patch = g.patch_len();
    let cols = g.cols();
    let mut col = vec![T::zero(); patch * cols];
    im2col(g, input, &mut col);
    let mut tmp = vec![T::zero(); g.out_channels * cols];
    T::gemm(
        g.out_channels,
        patch,
        cols,
        T::one(),
        weight,
        patch as isize,
        1,
        &col,
        cols as isize,
        1,
        T::zero(),
        &mut tmp,
        cols as isize,
        1,
    );
    let mut out = vec![T::zero(); tmp.len()];
    channel_major_to_batch_major(g, &tmp, &mut out);
    out
}

/// Returns `(grad_input, grad_weight)`; either may be skipped.
pub(crate) fn conv2d_backward<T: Element>(
    g: &ConvGeometry,
    input: &[T],
    weight: &[T],
    grad_out: &[T],
    want_input: bool,
    want_weight: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let patch = g.patch_len();
    let cols = g.cols();
    let mut dout = vec![T::zero(); g.out_channels * cols];
    batch_major_to_channel_major(g, grad_out, &mut dout);

    let grad_weight = want_weight.then(|| {
        let mut col = vec![T::zero(); patch * cols];
        im2col(g, input, &mut col);
        let mut dw = vec![T::zero(); g.out_channels * patch];
        // dW[F, patch] = dout[F, cols] * col^T
        T::gemm(
            g.out_channels,
            cols,
            patch,
            T::one(),
            &dout,
            cols as isize,
            1,
            &col,
            1,
            cols as isize,
            T::zero(),
            &mut dw,
            patch as isize,
            1,
        );
        dw
    });

    let grad_input = want_input.then(|| {
        let mut dcol = vec![T::zero(); patch * cols];
        // dcol[patch, cols] = W^T * dout
        T::gemm(
            patch,
            g.out_channels,
            cols,
            T::one(),
            weight,
            1,
            patch as isize,
            &dout,
            cols as isize,
            1,
            T::zero(),
            &mut dcol,
            cols as isize,
            1,
        );
        let mut dx = vec![T::zero(); g.batch * g.in_channels * g.height * g.width];
        col2im(g, &dcol, &mut dx);
        dx
    });

    (grad_input, grad_weight)
}
