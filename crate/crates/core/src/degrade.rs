//! Synthetic degradations for building training and evaluation pairs:
//! additive white Gaussian noise, bicubic downsampling with an anti-alias
//! prefilter, motion blur, and Poisson noise.
//!
//! Images live on the internal `[0, 1]` scale; noise levels are quoted on the
//! 0-255 scale and converted at the boundary. Outputs are not clipped;
//! clipping happens only at 8-bit export.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAX_SIGMA: f64 = 75.0;

/// Additive white Gaussian noise with `sigma` on the 0-255 scale.
pub fn awgn(img: &Tensor<f32>, sigma: f64, seed: u64) -> Result<Tensor<f32>> {
    if !(0.0..=MAX_SIGMA).contains(&sigma) {
        return Err(Error::argument(format!(
            "noise level must be in [0, {MAX_SIGMA}], got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let std = sigma / 255.0;
    let normal = Normal::new(0.0f64, std).expect("positive std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| v + normal.sample(&mut rng) as f32)
        .collect();
    Tensor::new(img.shape().to_vec(), data)
}

/// Catmull-Rom cubic kernel (a = -0.5).
fn cubic(t: f64) -> f64 {
    let a = -0.5;
    let t = t.abs();
    if t <= 1.0 {
        (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0
    } else if t < 2.0 {
        a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a
    } else {
        0.0
    }
}

/// Normalized tap weights for one output coordinate when reducing `len` by
/// `scale`. The kernel is widened by the scale factor (anti-aliasing) and
/// indices clamp at the borders.
fn resample_taps(out_index: usize, scale: usize, len: usize) -> Vec<(usize, f64)> {
    let s = scale as f64;
    let center = (out_index as f64 + 0.5) * s - 0.5;
    let radius = 2.0 * s;
    let lo = (center - radius).ceil() as isize;
    let hi = (center + radius).floor() as isize;
    let mut taps = Vec::with_capacity((hi - lo + 1) as usize);
    let mut total = 0.0;
    for j in lo..=hi {
        let w = cubic((j as f64 - center) / s) / s;
        if w != 0.0 {
            let idx = j.clamp(0, len as isize - 1) as usize;
            taps.push((idx, w));
            total += w;
        }
    }
    for (_, w) in &mut taps {
        *w /= total;
    }
    taps
}

/// Result of a downsampling call, carrying the crop note when the input
/// dimensions were not divisible by the factor.
#[derive(Debug, Clone)]
pub struct Downsampled {
    pub image: Tensor<f32>,
    /// Original `(h, w)` when the input had to be cropped first.
    pub cropped_from: Option<(usize, usize)>,
}

/// Bicubic reduction by an integer factor with anti-alias prefiltering.
/// Indivisible inputs are cropped to the largest divisible size.
pub fn bicubic_downsample(img: &Tensor<f32>, scale: usize) -> Result<Downsampled> {
    if scale == 0 {
        return Err(Error::argument("scale must be positive"));
    }
    let (n, c, h, w) = img.dims4()?;
    if scale == 1 {
        return Ok(Downsampled {
            image: img.clone(),
            cropped_from: None,
        });
    }
    let (ch, cw) = ((h / scale) * scale, (w / scale) * scale);
    if ch == 0 || cw == 0 {
        return Err(Error::argument(format!(
            "image {h}x{w} too small for scale {scale}"
        )));
    }
    let mut working = Vec::with_capacity(n * c * ch * cw);
    for b in 0..n {
        for chn in 0..c {
            let plane = img.plane(b, chn)?;
            for y in 0..ch {
                working.extend_from_slice(&plane[y * w..y * w + cw]);
            }
        }
    }
    let cropped_from = if (ch, cw) != (h, w) {
        Some((h, w))
    } else {
        None
    };

    let (oh, ow) = (ch / scale, cw / scale);
    let row_taps: Vec<Vec<(usize, f64)>> = (0..oh).map(|i| resample_taps(i, scale, ch)).collect();
    let col_taps: Vec<Vec<(usize, f64)>> = (0..ow).map(|i| resample_taps(i, scale, cw)).collect();

    let mut out = vec![0.0f32; n * c * oh * ow];
    let mut vertical = vec![0.0f64; oh * cw];
    for plane_idx in 0..n * c {
        let plane = &working[plane_idx * ch * cw..(plane_idx + 1) * ch * cw];
        for (oy, taps) in row_taps.iter().enumerate() {
            let dst = &mut vertical[oy * cw..(oy + 1) * cw];
            dst.fill(0.0);
            for &(sy, wgt) in taps {
                for (d, &v) in dst.iter_mut().zip(&plane[sy * cw..(sy + 1) * cw]) {
                    *d += wgt * v as f64;
                }
            }
        }
        let dst_plane = &mut out[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
        for oy in 0..oh {
            let src_row = &vertical[oy * cw..(oy + 1) * cw];
            for (ox, taps) in col_taps.iter().enumerate() {
                let mut acc = 0.0;
                for &(sx, wgt) in taps {
                    acc += wgt * src_row[sx];
                }
                dst_plane[oy * ow + ox] = acc as f32;
            }
        }
    }
    Ok(Downsampled {
        image: Tensor::new(vec![n, c, oh, ow], out)?,
        cropped_from,
    })
}

/// Normalized line kernel of the given length and angle (degrees), rasterized
/// with bilinear deposits.
fn line_kernel(length: usize, angle_deg: f64) -> (Vec<f64>, usize) {
    let k = if length % 2 == 1 { length } else { length + 1 }.max(1);
    let mut kernel = vec![0.0f64; k * k];
    if length == 1 {
        kernel[(k / 2) * k + k / 2] = 1.0;
        return (kernel, k);
    }
    let theta = angle_deg.to_radians();
    let (dy, dx) = (theta.sin(), theta.cos());
    let center = (k / 2) as f64;
    let half = (length as f64 - 1.0) / 2.0;
    let samples = length * 8;
    for s in 0..=samples {
        let t = -half + (s as f64 / samples as f64) * (2.0 * half);
        let y = center + t * dy;
        let x = center + t * dx;
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        for (oy, wy) in [(0usize, 1.0 - fy), (1, fy)] {
            for (ox, wx) in [(0usize, 1.0 - fx), (1, fx)] {
                let yy = y0 as isize + oy as isize;
                let xx = x0 as isize + ox as isize;
                if yy >= 0 && yy < k as isize && xx >= 0 && xx < k as isize {
                    kernel[yy as usize * k + xx as usize] += wy * wx;
                }
            }
        }
    }
    let total: f64 = kernel.iter().sum();
    for v in &mut kernel {
        *v /= total;
    }
    (kernel, k)
}

/// Motion blur along a line of `length` pixels at `angle_deg`. Borders are
/// clamped, so constant images stay constant.
pub fn motion_blur(img: &Tensor<f32>, length: usize, angle_deg: f64) -> Result<Tensor<f32>> {
    if length == 0 {
        return Err(Error::argument("blur length must be >= 1"));
    }
    let (n, c, h, w) = img.dims4()?;
    if length == 1 {
        return Ok(img.clone());
    }
    let (kernel, k) = line_kernel(length, angle_deg);
    let half = (k / 2) as isize;
    let mut out = vec![0.0f32; img.numel()];
    for b in 0..n {
        for chn in 0..c {
            let plane = img.plane(b, chn)?;
            let dst = &mut out[(b * c + chn) * h * w..(b * c + chn + 1) * h * w];
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let mut acc = 0.0f64;
                    for ky in 0..k as isize {
                        let sy = (y + ky - half).clamp(0, h as isize - 1) as usize;
                        for kx in 0..k as isize {
                            let sx = (x + kx - half).clamp(0, w as isize - 1) as usize;
                            acc +=
                                kernel[(ky * k as isize + kx) as usize] * plane[sy * w + sx] as f64;
                        }
                    }
                    dst[(y * w as isize + x) as usize] = acc as f32;
                }
            }
        }
    }
    Tensor::new(img.shape().to_vec(), out)
}

/// Shot noise: sample `Poisson(pixel * peak) / peak`. Larger peaks approach
/// the identity. Negative inputs are treated as zero intensity.
pub fn poisson_noise(img: &Tensor<f32>, peak: f64, seed: u64) -> Result<Tensor<f32>> {
    if peak <= 0.0 {
        return Err(Error::argument(format!("peak must be > 0, got {peak}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = img
        .data()
        .iter()
        .map(|&v| {
            let lambda = (v as f64).max(0.0) * peak;
            if lambda == 0.0 {
                0.0
            } else {
                let dist = Poisson::new(lambda).expect("positive lambda");
                (dist.sample(&mut rng) / peak) as f32
            }
        })
        .collect();
    Tensor::new(img.shape().to_vec(), data)
}

/// One degradation step.
#[derive(Debug, Clone, PartialEq)]
pub enum DegradationKind {
    Awgn { sigma: f64 },
    BicubicDown { scale: usize },
    MotionBlur { length: usize, angle_deg: f64 },
    Poisson { peak: f64 },
}

impl DegradationKind {
    pub fn describe(&self) -> String {
        match self {
            DegradationKind::Awgn { sigma } => format!("awgn sigma={sigma}"),
            DegradationKind::BicubicDown { scale } => format!("bicubic-down scale={scale}"),
            DegradationKind::MotionBlur { length, angle_deg } => {
                format!("motion-blur length={length} angle={angle_deg}")
            }
            DegradationKind::Poisson { peak } => format!("poisson peak={peak}"),
        }
    }
}

/// An ordered pipeline of degradation steps, fully determined by its seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DegradationSpec {
    pub steps: Vec<DegradationKind>,
    pub seed: u64,
}

fn derive_seed(seed: u64, index: usize) -> u64 {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 27)
}

impl DegradationSpec {
    pub fn new(steps: Vec<DegradationKind>, seed: u64) -> Self {
        Self { steps, seed }
    }

    /// The stand-in for realistic low-resolution pairs: motion blur, bicubic
    /// reduction, then image-dependent shot noise. Blur and noise strengths
    /// are drawn from the seed.
    pub fn realistic(scale: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xD15C));
        let length = rng.random_range(3..=11usize);
        let angle_deg = rng.random_range(0.0..180.0f64);
        let peak = rng.random_range(100.0..1000.0f64);
        Self {
            steps: vec![
                DegradationKind::MotionBlur { length, angle_deg },
                DegradationKind::BicubicDown { scale },
                DegradationKind::Poisson { peak },
            ],
            seed,
        }
    }

    pub fn apply(&self, img: &Tensor<f32>) -> Result<Tensor<f32>> {
        let mut out = img.clone();
        for (i, step) in self.steps.iter().enumerate() {
            let step_seed = derive_seed(self.seed, i);
            out = match step {
                DegradationKind::Awgn { sigma } => awgn(&out, *sigma, step_seed)?,
                DegradationKind::BicubicDown { scale } => bicubic_downsample(&out, *scale)?.image,
                DegradationKind::MotionBlur { length, angle_deg } => {
                    motion_blur(&out, *length, *angle_deg)?
                }
                DegradationKind::Poisson { peak } => poisson_noise(&out, *peak, step_seed)?,
            };
        }
        Ok(out)
    }

    pub fn describe(&self) -> String {
        let steps: Vec<String> = self.steps.iter().map(|s| s.describe()).collect();
        format!("seed={} | {}", self.seed, steps.join(" -> "))
    }
}
