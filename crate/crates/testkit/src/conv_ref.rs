//! Quadruple-loop cross-correlation, the reference for conv implementations.

/// Direct cross-correlation of `input [n, ci, h, w]` with
/// `kernels [co, ci, kh, kw]` plus `bias [co]`, zero padding `(pad_h, pad_w)`.
///
/// Output shape is `[n, co, h + 2*pad_h - kh + 1, w + 2*pad_w - kw + 1]`.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_reference(
    input: &[f64],
    in_dims: [usize; 4],
    kernels: &[f64],
    k_dims: [usize; 4],
    bias: &[f64],
    pad_h: usize,
    pad_w: usize,
) -> Vec<f64> {
    let [n, ci, h, w] = in_dims;
    let [co, kci, kh, kw] = k_dims;
    assert_eq!(ci, kci, "channel mismatch");
    assert_eq!(input.len(), n * ci * h * w);
    assert_eq!(kernels.len(), co * ci * kh * kw);
    assert_eq!(bias.len(), co);
    let oh = h + 2 * pad_h + 1 - kh;
    let ow = w + 2 * pad_w + 1 - kw;

    let mut out = vec![0.0; n * co * oh * ow];
    for b in 0..n {
        for oc in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias[oc];
                    for ic in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = oy + ky;
                                let ix = ox + kx;
                                if iy < pad_h || ix < pad_w {
                                    continue;
                                }
                                let iy = iy - pad_h;
                                let ix = ix - pad_w;
                                if iy >= h || ix >= w {
                                    continue;
                                }
                                let iv = input[((b * ci + ic) * h + iy) * w + ix];
                                let kv = kernels[((oc * ci + ic) * kh + ky) * kw + kx];
                                acc += iv * kv;
                            }
                        }
                    }
                    out[((b * co + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    out
}
