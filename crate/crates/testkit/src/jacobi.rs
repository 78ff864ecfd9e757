//! One-sided Jacobi SVD.
//!
//! Orthogonalizes the columns of the matrix by plane rotations until every
//! pair is numerically orthogonal; the singular values are then the column
//! norms. Cubic and slow, but self-contained and accurate to near machine
//! precision, which is what a test oracle needs.

/// Full SVD of a row-major `rows x cols` matrix.
///
/// Returns `(u, sigma, v)` with `u` of shape `rows x k`, `v` of shape
/// `cols x k` (both column-major lists of vectors) and `sigma` sorted in
/// descending order, where `k = min(rows, cols)`.
pub fn jacobi_svd(a: &[f64], rows: usize, cols: usize) -> (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(
        a.len(),
        rows * cols,
        "matrix data does not match dimensions"
    );
    if rows < cols {
        // Work on the transpose and swap the factors back.
        let mut t = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = a[r * cols + c];
            }
        }
        let (u, s, v) = jacobi_svd(&t, cols, rows);
        return (v, s, u);
    }

    // Columns of the working copy, plus an accumulated V.
    let mut w: Vec<Vec<f64>> = (0..cols)
        .map(|c| (0..rows).map(|r| a[r * cols + c]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|c| {
            let mut e = vec![0.0; cols];
            e[c] = 1.0;
            e
        })
        .collect();

    let eps = 1e-14;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha: f64 = w[p].iter().map(|x| x * x).sum();
                let beta: f64 = w[q].iter().map(|x| x * x).sum();
                let gamma: f64 = w[p].iter().zip(&w[q]).map(|(x, y)| x * y).sum();
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut w, p, q, c, s);
                rotate_pair(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = w
        .iter()
        .map(|col| col.iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap());

    let mut u_out = Vec::with_capacity(cols);
    let mut s_out = Vec::with_capacity(cols);
    let mut v_out = Vec::with_capacity(cols);
    for &i in &order {
        let n = norms[i];
        s_out.push(n);
        if n > 0.0 {
            u_out.push(w[i].iter().map(|x| x / n).collect());
        } else {
            u_out.push(vec![0.0; rows]);
        }
        v_out.push(v[i].clone());
    }
    (u_out, s_out, v_out)
}

/// Apply the plane rotation to columns `p` and `q`.
fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (cp, cq) = (&mut head[p], &mut tail[0]);
    for (a, b) in cp.iter_mut().zip(cq.iter_mut()) {
        let (x, y) = (*a, *b);
        *a = c * x - s * y;
        *b = s * x + c * y;
    }
}

/// Singular values of a row-major `rows x cols` matrix, descending.
pub fn singular_values(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    jacobi_svd(a, rows, cols).1
}
