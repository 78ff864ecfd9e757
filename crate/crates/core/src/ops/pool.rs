//! Directional average pooling and the dyad (outer product) kernels.

use crate::scalar::Scalar;

/// `[n,c,h,w] -> [n,c,h,1]`, mean over the width axis.
pub fn pool_to_column_forward<S: Scalar>(
    input: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let inv = S::ONE / S::from_f64(w as f64);
    let mut out = vec![S::ZERO; n * c * h];
    for (row, o) in out.iter_mut().enumerate() {
        let base = row * w;
        let mut acc = S::ZERO;
        for &v in &input[base..base + w] {
            acc += v;
        }
        *o = acc * inv;
    }
    out
}

pub fn pool_to_column_backward<S: Scalar>(
    grad_out: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let inv = S::ONE / S::from_f64(w as f64);
    let mut grad_in = vec![S::ZERO; n * c * h * w];
    for (row, &g) in grad_out.iter().enumerate() {
        let gv = g * inv;
        for v in &mut grad_in[row * w..(row + 1) * w] {
            *v = gv;
        }
    }
    grad_in
}

/// `[n,c,h,w] -> [n,c,1,w]`, mean over the height axis.
pub fn pool_to_row_forward<S: Scalar>(
    input: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let inv = S::ONE / S::from_f64(h as f64);
    let mut out = vec![S::ZERO; n * c * w];
    for plane in 0..n * c {
        let src = &input[plane * h * w..(plane + 1) * h * w];
        let dst = &mut out[plane * w..(plane + 1) * w];
        for y in 0..h {
            for (d, &v) in dst.iter_mut().zip(&src[y * w..(y + 1) * w]) {
                *d += v;
            }
        }
        for d in dst.iter_mut() {
            *d *= inv;
        }
    }
    out
}

pub fn pool_to_row_backward<S: Scalar>(
    grad_out: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let inv = S::ONE / S::from_f64(h as f64);
    let mut grad_in = vec![S::ZERO; n * c * h * w];
    for plane in 0..n * c {
        let src = &grad_out[plane * w..(plane + 1) * w];
        let dst = &mut grad_in[plane * h * w..(plane + 1) * h * w];
        for y in 0..h {
            for (d, &g) in dst[y * w..(y + 1) * w].iter_mut().zip(src) {
                *d = g * inv;
            }
        }
    }
    grad_in
}

/// `col [n,c,h,1]` times `row [n,c,1,w]` into `[n,c,h,w]`; every output plane
/// has matrix rank at most one.
pub fn outer_forward<S: Scalar>(
    col: &[S],
    row: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> Vec<S> {
    let mut out = vec![S::ZERO; n * c * h * w];
    for plane in 0..n * c {
        let cv = &col[plane * h..(plane + 1) * h];
        let rv = &row[plane * w..(plane + 1) * w];
        let dst = &mut out[plane * h * w..(plane + 1) * h * w];
        for (y, &cy) in cv.iter().enumerate() {
            for (d, &rx) in dst[y * w..(y + 1) * w].iter_mut().zip(rv) {
                *d = cy * rx;
            }
        }
    }
    out
}

pub fn outer_backward<S: Scalar>(
    col: &[S],
    row: &[S],
    grad_out: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
) -> (Vec<S>, Vec<S>) {
    let mut grad_col = vec![S::ZERO; n * c * h];
    let mut grad_row = vec![S::ZERO; n * c * w];
    for plane in 0..n * c {
        let cv = &col[plane * h..(plane + 1) * h];
        let rv = &row[plane * w..(plane + 1) * w];
        let go = &grad_out[plane * h * w..(plane + 1) * h * w];
        let gc = &mut grad_col[plane * h..(plane + 1) * h];
        let gr = &mut grad_row[plane * w..(plane + 1) * w];
        for y in 0..h {
            let grow = &go[y * w..(y + 1) * w];
            let mut acc = S::ZERO;
            for ((&g, &r), gr_x) in grow.iter().zip(rv).zip(gr.iter_mut()) {
                acc += g * r;
                *gr_x += g * cv[y];
            }
            gc[y] = acc;
        }
    }
    (grad_col, grad_row)
}
