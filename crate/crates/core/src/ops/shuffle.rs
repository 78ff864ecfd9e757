//! Pixel shuffle (depth to space) and its exact inverse.

use crate::scalar::Scalar;

/// `[n, c*r*r, h, w] -> [n, c, h*r, w*r]`.
/// Channel block `c*r*r + dy*r + dx` lands on output offset `(dy, dx)`.
pub fn shuffle_forward<S: Scalar>(
    input: &[S],
    n: usize,
    c_out: usize,
    h: usize,
    w: usize,
    r: usize,
) -> Vec<S> {
    let (oh, ow) = (h * r, w * r);
    let mut out = vec![S::ZERO; n * c_out * oh * ow];
    for b in 0..n {
        for c in 0..c_out {
            for dy in 0..r {
                for dx in 0..r {
                    let ic = c * r * r + dy * r + dx;
                    let src = &input[((b * c_out * r * r + ic) * h) * w..];
                    for y in 0..h {
                        let srow = &src[y * w..(y + 1) * w];
                        let obase = ((b * c_out + c) * oh + y * r + dy) * ow + dx;
                        for (x, &v) in srow.iter().enumerate() {
                            out[obase + x * r] = v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[n, c, h*r, w*r] -> [n, c*r*r, h, w]`; exact inverse of [`shuffle_forward`].
pub fn unshuffle_forward<S: Scalar>(
    input: &[S],
    n: usize,
    c: usize,
    oh: usize,
    ow: usize,
    r: usize,
) -> Vec<S> {
    let (h, w) = (oh / r, ow / r);
    let mut out = vec![S::ZERO; n * c * r * r * h * w];
    for b in 0..n {
        for ch in 0..c {
            for dy in 0..r {
                for dx in 0..r {
                    let oc = ch * r * r + dy * r + dx;
                    let dst_base = (b * c * r * r + oc) * h * w;
                    for y in 0..h {
                        let ibase = ((b * c + ch) * oh + y * r + dy) * ow + dx;
                        for x in 0..w {
                            out[dst_base + y * w + x] = input[ibase + x * r];
                        }
                    }
                }
            }
        }
    }
    out
}
