//! Per-sample convolution and pooling kernels.

use super::gemm::gemm;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub pad: usize,
    pub stride: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], k: usize, pad: usize, stride: usize) -> Self {
        let (c, h, w) = (input[0], input[1], input[2]);
        Self {
            c,
            h,
            w,
            k,
            pad,
            stride,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        }
    }

    pub fn patch_len(&self) -> usize {
        self.c * self.k * self.k
    }

    pub fn out_pixels(&self) -> usize {
        self.oh * self.ow
    }

    /// Source pixel for output position `(oy, ox)` and kernel tap `(ky, kx)`.
    #[inline]
    fn source(&self, oy: usize, ox: usize, ky: usize, kx: usize) -> Option<(usize, usize)> {
        let y = (oy * self.stride + ky).checked_sub(self.pad)?;
        let x = (ox * self.stride + kx).checked_sub(self.pad)?;
        (y < self.h && x < self.w).then_some((y, x))
    }
}

/// Unfolds one `C x H x W` sample into a `[C*k*k, OH*OW]` patch matrix.
pub(crate) fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let np = g.out_pixels();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * np;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        cols[row + oy * g.ow + ox] = match g.source(oy, ox, ky, kx) {
                            Some((y, xx)) => x[(c * g.h + y) * g.w + xx],
                            None => 0.0,
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates patch gradients back onto the image.
pub(crate) fn col2im(g: &ConvGeom, cols: &[f64], dx: &mut [f64]) {
    let np = g.out_pixels();
    for c in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = ((c * g.k + ky) * g.k + kx) * np;
                for oy in 0..g.oh {
                    for ox in 0..g.ow {
                        if let Some((y, xx)) = g.source(oy, ox, ky, kx) {
                            dx[(c * g.h + y) * g.w + xx] += cols[row + oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

/// Batched convolution forward. `weight` is `[OC, C*k*k]` row-major.
pub(crate) fn conv_forward(
    g: &ConvGeom,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let oc = bias.len();
    let (in_len, out_len) = (g.c * g.h * g.w, oc * g.out_pixels());
    let np = g.out_pixels();
    let mut cols = vec![0.0; g.patch_len() * np];
    for n in 0..batch {
        im2col(g, &input[n * in_len..(n + 1) * in_len], &mut cols);
        let o = &mut out[n * out_len..(n + 1) * out_len];
        for (ch, row) in o.chunks_exact_mut(np).enumerate() {
            row.fill(bias[ch]);
        }
        gemm(oc, g.patch_len(), np, weight, false, &cols, false, 1.0, o);
    }
}

/// Batched convolution backward. Accumulates into `dweight` / `dbias`, and
/// writes the input gradient when `dinput` is given.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    g: &ConvGeom,
    batch: usize,
    input: &[f64],
    weight: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let oc = dbias.len();
    let (in_len, out_len) = (g.c * g.h * g.w, oc * g.out_pixels());
    let np = g.out_pixels();
    let pl = g.patch_len();
    let mut cols = vec![0.0; pl * np];
    let mut dcols = vec![0.0; pl * np];
    for n in 0..batch {
        let d = &dout[n * out_len..(n + 1) * out_len];
        im2col(g, &input[n * in_len..(n + 1) * in_len], &mut cols);
        gemm(oc, np, pl, d, false, &cols, true, 1.0, dweight);
        for (ch, row) in d.chunks_exact(np).enumerate() {
            dbias[ch] += row.iter().sum::<f64>();
        }
        if let Some(dx) = dinput.as_deref_mut() {
            gemm(pl, oc, np, weight, true, d, false, 0.0, &mut dcols);
            let dxn = &mut dx[n * in_len..(n + 1) * in_len];
            dxn.fill(0.0);
            col2im(g, &dcols, dxn);
        }
    }
}

/// Max pooling over `C x H x W` samples; records the flat input index of each maximum.
#[allow(clippy::too_many_arguments)]
pub(crate) fn maxpool_forward(
    batch: usize,
    c: usize,
    h: usize,
    w: usize,
    size: usize,
    stride: usize,
    input: &[f64],
    out: &mut [f64],
    argmax: &mut [usize],
) {
    let oh = (h - size) / stride + 1;
    let ow = (w - size) / stride + 1;
    let mut o = 0;
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for ky in 0..size {
                    for kx in 0..size {
                        let idx = base + (oy * stride + ky) * w + ox * stride + kx;
                        if input[idx] > input[best] {
                            best = idx;
                        }
                    }
                }
                out[o] = input[best];
                argmax[o] = best;
                o += 1;
            }
        }
    }
}
