//! Small dense matrix kernels shared by the conv implementation.

use crate::scalar::Scalar;

/// `c[i] += a * b[i]` over whole rows; the inner loop the compiler vectorizes.
#[inline]
pub fn axpy<S: Scalar>(c: &mut [S], a: S, b: &[S]) {
    debug_assert_eq!(c.len(), b.len());
    if a == S::ZERO {
        return;
    }
    for (ci, &bi) in c.iter_mut().zip(b) {
        *ci += a * bi;
    }
}

#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    // Four partial sums keep the dependency chain short enough to vectorize.
    let mut s0 = S::ZERO;
    let mut s1 = S::ZERO;
    let mut s2 = S::ZERO;
    let mut s3 = S::ZERO;
    let mut ai = a.chunks_exact(4);
    let mut bi = b.chunks_exact(4);
    for (ca, cb) in (&mut ai).zip(&mut bi) {
        s0 += ca[0] * cb[0];
        s1 += ca[1] * cb[1];
        s2 += ca[2] * cb[2];
        s3 += ca[3] * cb[3];
    }
    let mut tail = S::ZERO;
    for (&x, &y) in ai.remainder().iter().zip(bi.remainder()) {
        tail += x * y;
    }
    s0 + s1 + s2 + s3 + tail
}

/// `c [m x n] += a [m x k] * b [k x n]`, all row-major.
pub fn gemm_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            axpy(crow, a[i * k + p], &b[p * n..(p + 1) * n]);
        }
    }
}

/// `c [m x n] += a [m x k] * b^T` where `b` is stored row-major `[n x k]`.
pub fn gemm_bt_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let crow = &mut c[i * n..(i + 1) * n];
        for (j, cj) in crow.iter_mut().enumerate() {
            *cj += dot(arow, &b[j * k..(j + 1) * k]);
        }
    }
}

/// `c [m x n] += a^T * b` where `a` is stored row-major `[k x m]`.
pub fn gemm_at_acc<S: Scalar>(c: &mut [S], a: &[S], b: &[S], m: usize, k: usize, n: usize) {
    debug_assert_eq!(c.len(), m * n);
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    for p in 0..k {
        let brow = &b[p * n..(p + 1) * n];
        for i in 0..m {
            axpy(&mut c[i * n..(i + 1) * n], a[p * m + i], brow);
        }
    }
}
