//! Cross-correlation via im2col and the row-major GEMM kernels.

use crate::ops::gemm::{gemm_acc, gemm_at_acc, gemm_bt_acc};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub n: usize,
    pub ci: usize,
    pub h: usize,
    pub w: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad_h: usize,
    pub pad_w: usize,
}

impl ConvDims {
    pub fn out_h(&self) -> usize {
        self.h + 2 * self.pad_h + 1 - self.kh
    }
    pub fn out_w(&self) -> usize {
        self.w + 2 * self.pad_w + 1 - self.kw
    }
    fn k(&self) -> usize {
        self.ci * self.kh * self.kw
    }
}

/// Unfold one sample into a `[ci*kh*kw, oh*ow]` patch matrix (zero padded).
fn im2col<S: Scalar>(sample: &[S], d: &ConvDims, cols: &mut [S]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    cols.fill(S::ZERO);
    let mut row = 0;
    for ic in 0..d.ci {
        let plane = &sample[ic * d.h * d.w..(ic + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let dst_row = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                // Valid ox range keeps ix = ox + kx - pad_w inside [0, w).
                let ox_lo = d.pad_w.saturating_sub(kx);
                let ox_hi = (d.w + d.pad_w).saturating_sub(kx).min(ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < d.pad_h || iy >= d.h + d.pad_h {
                        continue;
                    }
                    let iy = iy - d.pad_h;
                    if ox_lo < ox_hi {
                        let ix_lo = ox_lo + kx - d.pad_w;
                        dst_row[oy * ow + ox_lo..oy * ow + ox_hi].copy_from_slice(
                            &plane[iy * d.w + ix_lo..iy * d.w + ix_lo + (ox_hi - ox_lo)],
                        );
                    }
                }
                row += 1;
            }
        }
    }
}

/// Fold a `[ci*kh*kw, oh*ow]` patch-gradient matrix back onto one sample.
fn col2im_acc<S: Scalar>(cols: &[S], d: &ConvDims, sample_grad: &mut [S]) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let mut row = 0;
    for ic in 0..d.ci {
        let plane = &mut sample_grad[ic * d.h * d.w..(ic + 1) * d.h * d.w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let src_row = &cols[row * oh * ow..(row + 1) * oh * ow];
                let ox_lo = d.pad_w.saturating_sub(kx);
                let ox_hi = (d.w + d.pad_w).saturating_sub(kx).min(ow);
                for oy in 0..oh {
                    let iy = oy + ky;
                    if iy < d.pad_h || iy >= d.h + d.pad_h {
                        continue;
                    }
                    let iy = iy - d.pad_h;
                    if ox_lo < ox_hi {
                        let ix_lo = ox_lo + kx - d.pad_w;
                        let dst = &mut plane[iy * d.w + ix_lo..iy * d.w + ix_lo + (ox_hi - ox_lo)];
                        let src = &src_row[oy * ow + ox_lo..oy * ow + ox_hi];
                        for (a, &b) in dst.iter_mut().zip(src) {
                            *a += b;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<S: Scalar>(input: &[S], kernels: &[S], bias: &[S], d: &ConvDims) -> Vec<S> {
    let (oh, ow) = (d.out_h(), d.out_w());
    let (k, ohw) = (d.k(), oh * ow);
    let mut out = vec![S::ZERO; d.n * d.co * ohw];
    let mut cols = vec![S::ZERO; k * ohw];
    for b in 0..d.n {
        im2col(
            &input[b * d.ci * d.h * d.w..(b + 1) * d.ci * d.h * d.w],
            d,
            &mut cols,
        );
        let out_sample = &mut out[b * d.co * ohw..(b + 1) * d.co * ohw];
        for oc in 0..d.co {
            out_sample[oc * ohw..(oc + 1) * ohw].fill(bias[oc]);
        }
        gemm_acc(out_sample, kernels, &cols, d.co, k, ohw);
    }
    out
}

/// Gradients w.r.t. input, kernels and bias given the upstream gradient.
pub fn conv2d_backward<S: Scalar>(
    input: &[S],
    kernels: &[S],
    d: &ConvDims,
    grad_out: &[S],
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let (oh, ow) = (d.out_h(), d.out_w());
    let (k, ohw) = (d.k(), oh * ow);
    let mut grad_in = vec![S::ZERO; d.n * d.ci * d.h * d.w];
    let mut grad_k = vec![S::ZERO; d.co * k];
    let mut grad_b = vec![S::ZERO; d.co];
    let mut cols = vec![S::ZERO; k * ohw];
    let mut grad_cols = vec![S::ZERO; k * ohw];

    for b in 0..d.n {
        let go = &grad_out[b * d.co * ohw..(b + 1) * d.co * ohw];
        for oc in 0..d.co {
            for &g in &go[oc * ohw..(oc + 1) * ohw] {
                grad_b[oc] += g;
            }
        }
        im2col(
            &input[b * d.ci * d.h * d.w..(b + 1) * d.ci * d.h * d.w],
            d,
            &mut cols,
        );
        // dK = dOut * cols^T
        gemm_bt_acc(&mut grad_k, go, &cols, d.co, ohw, k);
        // dCols = K^T * dOut
        grad_cols.fill(S::ZERO);
        gemm_at_acc(&mut grad_cols, kernels, go, k, d.co, ohw);
        col2im_acc(
            &grad_cols,
            d,
            &mut grad_in[b * d.ci * d.h * d.w..(b + 1) * d.ci * d.h * d.w],
        );
    }
    (grad_in, grad_k, grad_b)
}
