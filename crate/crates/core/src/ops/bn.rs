//! Per-channel batch normalization over `(batch, height, width)`.

use crate::scalar::Scalar;

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

/// Running statistics, one entry per channel. Fresh stats are mean 0, var 1,
/// so eval before any training step is well-defined.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats<S: Scalar> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
}

impl<S: Scalar> BnStats<S> {
    pub fn new(channels: usize) -> Self {
        Self {
            mean: vec![S::ZERO; channels],
            var: vec![S::ONE; channels],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Eval,
}

/// Saved forward state needed by the backward pass.
#[derive(Debug, Clone)]
pub struct BnCache<S: Scalar> {
    pub x_hat: Vec<S>,
    pub inv_std: Vec<S>,
    pub mode: BnMode,
}

#[allow(clippy::too_many_arguments)]
pub fn bn_forward<S: Scalar>(
    input: &[S],
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    gamma: &[S],
    beta: &[S],
    stats: &mut BnStats<S>,
    mode: BnMode,
) -> (Vec<S>, BnCache<S>) {
    let plane = h * w;
    let count = n * plane;
    let mut out = vec![S::ZERO; input.len()];
    let mut x_hat = vec![S::ZERO; input.len()];
    let mut inv_std = vec![S::ZERO; c];

    for ch in 0..c {
        let (mean, var) = match mode {
            BnMode::Train => {
                let mut sum = S::ZERO;
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for &v in &input[base..base + plane] {
                        sum += v;
                    }
                }
                let mean = sum / S::from_f64(count as f64);
                let mut sq = S::ZERO;
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for &v in &input[base..base + plane] {
                        let d = v - mean;
                        sq += d * d;
                    }
                }
                let var = sq / S::from_f64(count as f64);
                let m = S::from_f64(BN_MOMENTUM);
                stats.mean[ch] = m * stats.mean[ch] + (S::ONE - m) * mean;
                stats.var[ch] = m * stats.var[ch] + (S::ONE - m) * var;
                (mean, var)
            }
            BnMode::Eval => (stats.mean[ch], stats.var[ch]),
        };
        let istd = S::ONE / (var + S::from_f64(BN_EPS)).sqrt();
        inv_std[ch] = istd;
        for b in 0..n {
            let base = (b * c + ch) * plane;
            for i in base..base + plane {
                let xh = (input[i] - mean) * istd;
                x_hat[i] = xh;
                out[i] = gamma[ch] * xh + beta[ch];
            }
        }
    }
    (
        out,
        BnCache {
            x_hat,
            inv_std,
            mode,
        },
    )
}

/// Gradients w.r.t. input, gamma, beta. Train mode differentiates through the
/// batch statistics; eval mode treats them as constants.
pub fn bn_backward<S: Scalar>(
    cache: &BnCache<S>,
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    gamma: &[S],
    grad_out: &[S],
) -> (Vec<S>, Vec<S>, Vec<S>) {
    let plane = h * w;
    let count = n * plane;
    let count_s = S::from_f64(count as f64);
    let mut grad_in = vec![S::ZERO; grad_out.len()];
    let mut grad_gamma = vec![S::ZERO; c];
    let mut grad_beta = vec![S::ZERO; c];

    for ch in 0..c {
        let mut sum_dy = S::ZERO;
        let mut sum_dy_xhat = S::ZERO;
        for b in 0..n {
            let base = (b * c + ch) * plane;
            for (&g, &xh) in grad_out[base..base + plane]
                .iter()
                .zip(&cache.x_hat[base..base + plane])
            {
                sum_dy += g;
                sum_dy_xhat += g * xh;
            }
        }
        grad_gamma[ch] = sum_dy_xhat;
        grad_beta[ch] = sum_dy;

        let scale = gamma[ch] * cache.inv_std[ch];
        match cache.mode {
            BnMode::Train => {
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for i in base..base + plane {
                        let term = grad_out[i] * count_s - sum_dy - cache.x_hat[i] * sum_dy_xhat;
                        grad_in[i] = scale * term / count_s;
                    }
                }
            }
            BnMode::Eval => {
                for b in 0..n {
                    let base = (b * c + ch) * plane;
                    for i in base..base + plane {
                        grad_in[i] = scale * grad_out[i];
                    }
                }
            }
        }
    }
    (grad_in, grad_gamma, grad_beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn train_mode_normalizes_to_beta_gamma() {
        let input: Vec<f32> = (0..32).map(|i| (i as f32) * 0.37 - 3.0).collect();
        let mut stats = BnStats::new(2);
        let (out, _) = bn_forward(
            &input,
            2,
            2,
            2,
            2,
            &[2.0, 0.5],
            &[1.0, -1.0],
            &mut stats,
            BnMode::Train,
        );
        // Channel 0 entries over batch: planes at (b, 0)
        for ch in 0..2 {
            let mut vals = Vec::new();
            for b in 0..2 {
                let base = (b * 2 + ch) * 4;
                vals.extend_from_slice(&out[base..base + 4]);
            }
            let mean: f32 = vals.iter().sum::<f32>() / vals.len() as f32;
            let var: f32 =
                vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / vals.len() as f32;
            let (gamma, beta) = if ch == 0 { (2.0, 1.0) } else { (0.5, -1.0) };
            assert!((mean - beta).abs() < 1e-4, "mean {mean} vs beta {beta}");
            assert!(
                (var.sqrt() - gamma).abs() < 1e-4,
                "std {} vs gamma {gamma}",
                var.sqrt()
            );
        }
    }

    #[test]
    fn eval_before_training_uses_identity_stats() {
        let input = vec![0.5f32, -0.5, 1.5, -1.5];
        let mut stats = BnStats::new(1);
        let (out, _) = bn_forward(&input, 1, 1, 2, 2, &[1.0], &[0.0], &mut stats, BnMode::Eval);
        for (o, i) in out.iter().zip(&input) {
            assert!((o - i).abs() < 1e-4);
        }
    }
}
