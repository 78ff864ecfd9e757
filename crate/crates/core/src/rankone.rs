//! Exact rank-one machinery: best rank-one approximation by power iteration,
//! truncated decomposition by deflation, and the rank-defect probe.
//!
//! This is the non-learned ground truth the networks are trained against and
//! validated with. All matrix arithmetic runs in `f64`.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const POWER_MAX_ITERS: usize = 500;
pub const POWER_TOL: f64 = 1e-10;

/// Stronger controls used inside the deflation loop. Clustered leading
/// singular values converge as `(sigma_2/sigma_1)^(2k)`, so the default 500
/// iterations can leave a measurable energy error on random matrices; the
/// larger budget bounds the worst case comfortably below 1e-5 relative.
pub const ORACLE_MAX_ITERS: usize = 20_000;
pub const ORACLE_TOL: f64 = 1e-13;

/// Seed for the fallback start vector when the deterministic one lands in the
/// null space. Fixed so decompositions stay reproducible.
const RESTART_SEED: u64 = 0x524f_4445_435f_5631;

/// Dense row-major `f64` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::shape(format!(
                "matrix {rows}x{cols} needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (c, &v) in row.iter().enumerate() {
                t.data[c * self.rows + r] = v;
            }
        }
        t
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    fn sub_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= b;
        }
    }

    fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    /// `A v` for a length-`cols` vector.
    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `A^T w` for a length-`rows` vector.
    fn mat_t_vec(&self, w: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (row, &wr) in self.data.chunks_exact(self.cols).zip(w) {
            for (o, &a) in out.iter_mut().zip(row) {
                *o += wr * a;
            }
        }
        out
    }
}

/// Leading singular triplet. `u` and `v` are unit vectors and the first
/// nonzero entry of `u` is non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct SvdTriplet {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

impl SvdTriplet {
    /// The rank-one matrix `sigma * u * v^T`.
    pub fn to_mat(&self) -> Mat {
        let mut m = Mat::zeros(self.u.len(), self.v.len());
        for (r, &ur) in self.u.iter().enumerate() {
            let s = self.sigma * ur;
            for (c, &vc) in self.v.iter().enumerate() {
                m.data[r * self.v.len() + c] = s * vc;
            }
        }
        m
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn basis_vector(len: usize) -> Vec<f64> {
    let mut e = vec![0.0; len];
    if len > 0 {
        e[0] = 1.0;
    }
    e
}

fn seeded_unit_vector(len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(RESTART_SEED);
    let mut fresh: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let n = norm(&fresh);
    for f in &mut fresh {
        *f /= n;
    }
    fresh
}

fn power_iterate(x: &Mat, start: Vec<f64>, max_iters: usize, tol: f64) -> (f64, Vec<f64>) {
    let scale = x.max_abs();
    let mut v = start;
    let mut reseeded = false;
    let mut iters = 0;
    while iters < max_iters {
        iters += 1;
        let w = x.mat_vec(&v);
        let z = x.mat_t_vec(&w);
        let nz = norm(&z);
        if nz <= scale * scale * 1e-280 {
            // Start vector landed in the null space.
            if reseeded {
                break;
            }
            v = seeded_unit_vector(x.cols);
            reseeded = true;
            continue;
        }
        let v_next: Vec<f64> = z.iter().map(|&e| e / nz).collect();
        let diff = v_next
            .iter()
            .zip(&v)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        v = v_next;
        if diff < tol {
            break;
        }
    }
    let sigma = norm(&x.mat_vec(&v));
    (sigma, v)
}

/// Best rank-one approximation of `x` with explicit iteration controls.
///
/// Power iteration on `x^T x` from a deterministic all-ones start. The start
/// is reseeded from a fixed draw if it lands in the null space or converges
/// to a non-leading direction (the leading value always satisfies
/// `sigma_1^2 >= |x|_F^2 / min(m, n)`, which the result is checked against).
/// An all-zero input yields the degenerate triplet `sigma = 0`, `u = e1`,
/// `v = e1`.
pub fn best_rank_one_with(x: &Mat, max_iters: usize, tol: f64) -> SvdTriplet {
    if x.is_zero() {
        return SvdTriplet {
            sigma: 0.0,
            u: basis_vector(x.rows),
            v: basis_vector(x.cols),
        };
    }

    let n = x.cols;
    let start = vec![1.0 / (n as f64).sqrt(); n];
    let (mut sigma, mut v) = power_iterate(x, start, max_iters, tol);

    let fro2 = x.frobenius_norm().powi(2);
    let lower_bound = fro2 / x.rows.min(x.cols) as f64;
    if sigma * sigma < lower_bound * (1.0 - 1e-9) {
        let (sigma2, v2) = power_iterate(x, seeded_unit_vector(n), max_iters, tol);
        if sigma2 > sigma {
            sigma = sigma2;
            v = v2;
        }
    }

    let av = x.mat_vec(&v);
    let mut u = if sigma > 0.0 {
        av.iter().map(|&e| e / sigma).collect()
    } else {
        basis_vector(x.rows)
    };
    // Sign convention: first nonzero entry of u non-negative.
    if let Some(&lead) = u.iter().find(|&&e| e != 0.0) {
        if lead < 0.0 {
            for e in &mut u {
                *e = -*e;
            }
            for e in &mut v {
                *e = -*e;
            }
        }
    }
    SvdTriplet { sigma, u, v }
}

/// [`best_rank_one_with`] at the default controls.
pub fn best_rank_one(x: &Mat) -> SvdTriplet {
    best_rank_one_with(x, POWER_MAX_ITERS, POWER_TOL)
}

/// Greedy deflation: `levels` leading rank-one components plus the remainder.
pub fn svd_decompose_mat(x: &Mat, levels: usize) -> (Vec<Mat>, Mat) {
    let mut residual = x.clone();
    let mut components = Vec::with_capacity(levels);
    for _ in 0..levels {
        let triplet = best_rank_one_with(&residual, ORACLE_MAX_ITERS, ORACLE_TOL);
        let comp = triplet.to_mat();
        residual.sub_assign(&comp);
        components.push(comp);
    }
    (components, residual)
}

/// Ratio of the second to the first singular value via two-step deflation.
/// Defined as 0 for the zero matrix.
pub fn rank_one_defect(x: &Mat) -> f64 {
    let first = best_rank_one_with(x, ORACLE_MAX_ITERS, ORACLE_TOL);
    if first.sigma == 0.0 {
        return 0.0;
    }
    let mut residual = x.clone();
    residual.sub_assign(&first.to_mat());
    let second = best_rank_one_with(&residual, ORACLE_MAX_ITERS, ORACLE_TOL);
    second.sigma / first.sigma
}

/// Ordered rank-one components of an image tensor plus the residual; the
/// shared output shape of the oracle and of the learned cascade.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition<S: Scalar = f32> {
    pub components: Vec<Tensor<S>>,
    pub residual: Tensor<S>,
}

impl<S: Scalar> Decomposition<S> {
    pub fn levels(&self) -> usize {
        self.components.len()
    }

    /// Sum of components plus residual.
    pub fn reconstruct(&self) -> Tensor<S> {
        let mut data = self.residual.data().to_vec();
        for comp in &self.components {
            for (d, &c) in data.iter_mut().zip(comp.data()) {
                *d += c;
            }
        }
        Tensor::new(self.residual.shape().to_vec(), data).expect("shapes agree")
    }

    /// Largest absolute elementwise reconstruction error against `original`.
    pub fn reconstruction_error(&self, original: &Tensor<S>) -> f64 {
        let rec = self.reconstruct();
        rec.data()
            .iter()
            .zip(original.data())
            .map(|(&a, &b)| (a - b).to_f64().abs())
            .fold(0.0, f64::max)
    }
}

/// Per-channel truncated SVD of an `[n, c, h, w]` tensor. Color images are
/// decomposed as three independent matrices per sample.
pub fn svd_decompose_tensor<S: Scalar>(x: &Tensor<S>, levels: usize) -> Result<Decomposition<S>> {
    if levels == 0 {
        return Err(Error::argument("decomposition needs at least one level"));
    }
    let (n, c, h, w) = x.dims4()?;
    let shape = x.shape().to_vec();
    let mut components: Vec<Vec<S>> = (0..levels).map(|_| vec![S::ZERO; x.numel()]).collect();
    let mut residual = vec![S::ZERO; x.numel()];
    for b in 0..n {
        for ch in 0..c {
            let plane = x.plane(b, ch)?;
            let mat = Mat::new(h, w, plane.iter().map(|v| v.to_f64()).collect())?;
            let (mats, res) = svd_decompose_mat(&mat, levels);
            let base = (b * c + ch) * h * w;
            for (level, m) in mats.iter().enumerate() {
                for (i, &v) in m.data.iter().enumerate() {
                    components[level][base + i] = S::from_f64(v);
                }
            }
            for (i, &v) in res.data.iter().enumerate() {
                residual[base + i] = S::from_f64(v);
            }
        }
    }
    Ok(Decomposition {
        components: components
            .into_iter()
            .map(|d| Tensor::new(shape.clone(), d).expect("sized by construction"))
            .collect(),
        residual: Tensor::new(shape, residual)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat_from(rows: usize, cols: usize, vals: &[f64]) -> Mat {
        Mat::new(rows, cols, vals.to_vec()).unwrap()
    }

    #[test]
    fn diagonal_leading_triplet() {
        let m = mat_from(2, 2, &[2.0, 0.0, 0.0, 1.0]);
        let t = best_rank_one(&m);
        assert!((t.sigma - 2.0).abs() < 1e-9);
        assert!((t.u[0].abs() - 1.0).abs() < 1e-6 && t.u[1].abs() < 1e-6);
        assert!((t.v[0].abs() - 1.0).abs() < 1e-6 && t.v[1].abs() < 1e-6);
        let approx = t.to_mat();
        assert!((approx.at(0, 0) - 2.0).abs() < 1e-8);
        assert!(approx.at(1, 1).abs() < 1e-8);
    }

    #[test]
    fn exact_rank_one_input() {
        let u = [0.6, 0.8];
        let v = [1.0, 2.0, 2.0];
        let mut data = vec![0.0; 6];
        for r in 0..2 {
            for c in 0..3 {
                data[r * 3 + c] = 3.0 * u[r] * v[c];
            }
        }
        let m = mat_from(2, 3, &data);
        let t = best_rank_one(&m);
        let mut residual = m.clone();
        residual.sub_assign(&t.to_mat());
        assert!(residual.frobenius_norm() < 1e-8);
    }

    #[test]
    fn zero_matrix_degenerate_result() {
        let m = Mat::zeros(3, 4);
        let t = best_rank_one(&m);
        assert_eq!(t.sigma, 0.0);
        assert_eq!(t.u, vec![1.0, 0.0, 0.0]);
        assert_eq!(t.v, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn null_space_start_recovers() {
        // all-ones start vector is in the null space of this matrix
        let m = mat_from(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let t = best_rank_one(&m);
        assert!((t.sigma - 2.0).abs() < 1e-9, "sigma = {}", t.sigma);
    }

    #[test]
    fn unit_vectors_and_sign_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let data: Vec<f64> = (0..30).map(|_| rng.random_range(-1.0..1.0)).collect();
            let m = mat_from(5, 6, &data);
            let t = best_rank_one(&m);
            assert!((norm(&t.u) - 1.0).abs() < 1e-6);
            assert!((norm(&t.v) - 1.0).abs() < 1e-6);
            assert!(t.sigma >= 0.0);
            let lead = t.u.iter().find(|&&e| e != 0.0).copied().unwrap();
            assert!(lead >= 0.0);
        }
    }

    #[test]
    fn identity_deflation_residual_energy() {
        let m = mat_from(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let (comps, residual) = svd_decompose_mat(&m, 1);
        assert_eq!(comps.len(), 1);
        // sigma = 1 dyad captured; remaining energy is the other sigma = 1
        assert!((residual.frobenius_norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_rank_capture() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let data: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = mat_from(4, 4, &data);
        let (_, residual) = svd_decompose_mat(&m, 4);
        assert!(residual.frobenius_norm() < 1e-6 * m.frobenius_norm());
    }

    #[test]
    fn deflation_energy_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let data: Vec<f64> = (0..96).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = mat_from(8, 12, &data);
        let mut prev = f64::INFINITY;
        for levels in 1..=6 {
            let (_, residual) = svd_decompose_mat(&m, levels);
            let e = residual.frobenius_norm();
            assert!(e <= prev + 1e-12, "levels {levels}: {e} > {prev}");
            prev = e;
        }
    }

    #[test]
    fn transpose_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let data: Vec<f64> = (0..35).map(|_| rng.random_range(-1.0..1.0)).collect();
        let m = mat_from(5, 7, &data);
        let (comps, _) = svd_decompose_mat(&m, 3);
        let (comps_t, _) = svd_decompose_mat(&m.transpose(), 3);
        for (a, b) in comps.iter().zip(&comps_t) {
            let sa = best_rank_one(a).sigma;
            let sb = best_rank_one(b).sigma;
            assert!((sa - sb).abs() < 1e-8, "{sa} vs {sb}");
            // component of the transpose is the transpose of the component
            let bt = b.transpose();
            for (x, y) in a.data.iter().zip(&bt.data) {
                assert!((x - y).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn defect_trivial_cases() {
        // outer product -> ratio ~ 0
        let m = mat_from(2, 2, &[3.0, 4.0, 6.0, 8.0]);
        assert!(rank_one_defect(&m) < 1e-6);
        // identity -> ratio 1
        let id = mat_from(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        assert!((rank_one_defect(&id) - 1.0).abs() < 1e-6);
        // zero -> defined as 0
        assert_eq!(rank_one_defect(&Mat::zeros(2, 2)), 0.0);
    }

    #[test]
    fn tensor_decomposition_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = Tensor::<f32>::from_fn(vec![1, 3, 8, 8], |_| rng.random_range(0.0..1.0));
        let dec = svd_decompose_tensor(&x, 3).unwrap();
        assert_eq!(dec.levels(), 3);
        assert!(dec.reconstruction_error(&x) < 1e-4);
    }
}
