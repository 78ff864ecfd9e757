//! Measurement protocols: PSNR, single-scale SSIM, Y-channel restricted
//! evaluation, shifted-window maximum PSNR, and per-rank-one-component PSNR.
//!
//! Tensors are on the internal `[0, 1]` scale; a peak of 1.0 here is the
//! exact equivalent of peak 255 on 8-bit data. Identical inputs produce an
//! explicit sentinel rather than a floating infinity.

use crate::error::{Error, Result};
use crate::rankone::{svd_decompose_mat, Mat};
use crate::tensor::{same_shape, Tensor};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// PSNR value or the sentinel for identical inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Psnr {
    Db(f64),
    Identical,
}

impl Psnr {
    pub fn db(self) -> Option<f64> {
        match self {
            Psnr::Db(v) => Some(v),
            Psnr::Identical => None,
        }
    }

    pub fn is_identical(self) -> bool {
        matches!(self, Psnr::Identical)
    }

    /// Serialized form; never a floating infinity.
    pub fn csv_field(self) -> String {
        match self {
            Psnr::Db(v) => format!("{v:.4}"),
            Psnr::Identical => "identical".to_string(),
        }
    }
}

impl std::fmt::Display for Psnr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Psnr::Db(v) => write!(f, "{v:.4} dB"),
            Psnr::Identical => write!(f, "identical"),
        }
    }
}

fn mse_slices(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// `10 log10(peak^2 / mse)` over raw slices.
pub fn psnr_slices(a: &[f64], b: &[f64], peak: f64) -> Psnr {
    assert_eq!(a.len(), b.len());
    let mse = mse_slices(a, b);
    if mse == 0.0 {
        Psnr::Identical
    } else {
        Psnr::Db(10.0 * (peak * peak / mse).log10())
    }
}

/// PSNR over all elements of two same-shaped tensors on the internal scale.
pub fn psnr(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<Psnr> {
    same_shape(x, y, "psnr")?;
    Ok(psnr_slices(&x.to_f64_vec(), &y.to_f64_vec(), 1.0))
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dy = y as f64 - half;
            let dx = x as f64 - half;
            w.push((-(dy * dy + dx * dx) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Single-scale SSIM of one plane, mean over valid (unpadded) windows.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize, peak: f64) -> Result<f64> {
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::argument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let window = gaussian_window();
    let c1 = (SSIM_K1 * peak) * (SSIM_K1 * peak);
    let c2 = (SSIM_K2 * peak) * (SSIM_K2 * peak);
    let mut total = 0.0;
    let mut count = 0usize;
    for wy in 0..=(h - SSIM_WINDOW) {
        for wx in 0..=(w - SSIM_WINDOW) {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wt = window[ky * SSIM_WINDOW + kx];
                    let i = (wy + ky) * w + wx + kx;
                    mu_a += wt * a[i];
                    mu_b += wt * b[i];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for ky in 0..SSIM_WINDOW {
                for kx in 0..SSIM_WINDOW {
                    let wt = window[ky * SSIM_WINDOW + kx];
                    let i = (wy + ky) * w + wx + kx;
                    let da = a[i] - mu_a;
                    let db = b[i] - mu_b;
                    var_a += wt * da * da;
                    var_b += wt * db * db;
                    cov += wt * da * db;
                }
            }
            let num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            let den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// SSIM of two tensors: mean of per-plane scores over batch and channels.
pub fn ssim(x: &Tensor<f32>, y: &Tensor<f32>) -> Result<f64> {
    same_shape(x, y, "ssim")?;
    let (n, c, h, w) = x.dims4()?;
    let mut total = 0.0;
    for b in 0..n {
        for ch in 0..c {
            let a: Vec<f64> = x.plane(b, ch)?.iter().map(|&v| v as f64).collect();
            let bb: Vec<f64> = y.plane(b, ch)?.iter().map(|&v| v as f64).collect();
            total += ssim_plane(&a, &bb, h, w, 1.0)?;
        }
    }
    Ok(total / (n * c) as f64)
}

/// Studio-swing luma on the 0-255 scale from RGB channels in `[0, 1]`:
/// `Y = 16 + 65.481 R + 128.553 G + 24.966 B`.
pub fn luma_255(img: &Tensor<f32>, batch: usize) -> Result<Vec<f64>> {
    let (_, c, h, w) = img.dims4()?;
    if c != 3 {
        return Err(Error::argument(format!(
            "Y-channel evaluation needs RGB input, got {c} channels"
        )));
    }
    let r = img.plane(batch, 0)?;
    let g = img.plane(batch, 1)?;
    let b = img.plane(batch, 2)?;
    let mut y = Vec::with_capacity(h * w);
    for i in 0..h * w {
        y.push(16.0 + 65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64);
    }
    Ok(y)
}

fn crop_plane(plane: &[f64], h: usize, w: usize, border: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity((h - 2 * border) * (w - 2 * border));
    for y in border..h - border {
        out.extend_from_slice(&plane[y * w + border..(y + 1) * w - border]);
    }
    out
}

/// PSNR on the luma channel, ignoring `border` pixels on each side.
pub fn y_channel_psnr(x: &Tensor<f32>, y: &Tensor<f32>, border: usize) -> Result<Psnr> {
    same_shape(x, y, "y_channel_psnr")?;
    let (n, _, h, w) = x.dims4()?;
    if h <= 2 * border || w <= 2 * border {
        return Err(Error::argument(format!(
            "image {h}x{w} too small for border {border}"
        )));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    for batch in 0..n {
        a.extend(crop_plane(&luma_255(x, batch)?, h, w, border));
        b.extend(crop_plane(&luma_255(y, batch)?, h, w, border));
    }
    Ok(psnr_slices(&a, &b, 255.0))
}

/// How the shift search explores translations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShiftSearch {
    /// Every integer shift in the `[-max, max] x [-max, max]` grid.
    FullGrid,
    /// Only axis-aligned shifts (four directions).
    AxisOnly,
}

/// Outcome of the shifted-window protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftedScore {
    pub psnr: Psnr,
    pub ssim: f64,
    /// `(dy, dx)` of the best-scoring translation.
    pub shift: (isize, isize),
}

/// Crop a centered `crop x crop` window from the reference and maximize PSNR
/// over integer translations of the matching window in `y`. SSIM is reported
/// at the PSNR-optimal shift.
pub fn shifted_max_psnr(
    x: &Tensor<f32>,
    y: &Tensor<f32>,
    crop: usize,
    max_shift: usize,
    search: ShiftSearch,
) -> Result<ShiftedScore> {
    same_shape(x, y, "shifted_max_psnr")?;
    let (n, c, h, w) = x.dims4()?;
    if n != 1 {
        return Err(Error::argument("shifted protocol expects a single image"));
    }
    if h < crop + 2 * max_shift || w < crop + 2 * max_shift {
        return Err(Error::argument(format!(
            "image {h}x{w} too small for crop {crop} with shift {max_shift}"
        )));
    }
    let cy = (h - crop) / 2;
    let cx = (w - crop) / 2;

    let window_of = |img: &Tensor<f32>, oy: usize, ox: usize| -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(c * crop * crop);
        for ch in 0..c {
            let plane = img.plane(0, ch)?;
            for yy in 0..crop {
                out.extend(
                    plane[(oy + yy) * w + ox..(oy + yy) * w + ox + crop]
                        .iter()
                        .map(|&v| v as f64),
                );
            }
        }
        Ok(out)
    };

    let reference = window_of(x, cy, cx)?;
    let m = max_shift as isize;
    let mut shifts: Vec<(isize, isize)> = Vec::new();
    match search {
        ShiftSearch::FullGrid => {
            for dy in -m..=m {
                for dx in -m..=m {
                    shifts.push((dy, dx));
                }
            }
        }
        ShiftSearch::AxisOnly => {
            shifts.push((0, 0));
            for d in 1..=m {
                shifts.extend([(d, 0), (-d, 0), (0, d), (0, -d)]);
            }
        }
    }

    let mut best_mse = f64::INFINITY;
    let mut best_shift = (0isize, 0isize);
    for (dy, dx) in shifts {
        let oy = (cy as isize + dy) as usize;
        let ox = (cx as isize + dx) as usize;
        let candidate = window_of(y, oy, ox)?;
        let mse = mse_slices(&reference, &candidate);
        if mse < best_mse {
            best_mse = mse;
            best_shift = (dy, dx);
            if mse == 0.0 {
                break;
            }
        }
    }

    let oy = (cy as isize + best_shift.0) as usize;
    let ox = (cx as isize + best_shift.1) as usize;
    let best_window = window_of(y, oy, ox)?;
    let psnr = if best_mse == 0.0 {
        Psnr::Identical
    } else {
        Psnr::Db(10.0 * (1.0 / best_mse).log10())
    };
    let mut ssim_total = 0.0;
    for ch in 0..c {
        let a = &reference[ch * crop * crop..(ch + 1) * crop * crop];
        let b = &best_window[ch * crop * crop..(ch + 1) * crop * crop];
        ssim_total += ssim_plane(a, b, crop, crop, 1.0)?;
    }
    Ok(ShiftedScore {
        psnr,
        ssim: ssim_total / c as f64,
        shift: best_shift,
    })
}

/// PSNR between the `index`-th (1-based) rank-one components of two images.
/// Components are affinely mapped to the 0-255 scale by the ground-truth
/// component's dynamic range.
pub fn ro_component_psnr(x: &Tensor<f32>, y: &Tensor<f32>, index: usize) -> Result<Psnr> {
    same_shape(x, y, "ro_component_psnr")?;
    let (n, c, h, w) = x.dims4()?;
    if n != 1 {
        return Err(Error::argument("component protocol expects a single image"));
    }
    if index == 0 || index > h.min(w) {
        return Err(Error::argument(format!(
            "component index {index} out of range 1..={}",
            h.min(w)
        )));
    }
    let mut mapped_x = Vec::with_capacity(c * h * w);
    let mut mapped_y = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        let mx = Mat::new(h, w, x.plane(0, ch)?.iter().map(|&v| v as f64).collect())?;
        let my = Mat::new(h, w, y.plane(0, ch)?.iter().map(|&v| v as f64).collect())?;
        let comp_x = svd_decompose_mat(&mx, index)
            .0
            .pop()
            .expect("index components");
        let comp_y = svd_decompose_mat(&my, index)
            .0
            .pop()
            .expect("index components");
        let lo = comp_x.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = comp_x
            .data
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max);
        let range = (hi - lo).max(1e-12);
        let map = |v: f64| (v - lo) / range * 255.0;
        mapped_x.extend(comp_x.data.iter().map(|&v| map(v)));
        mapped_y.extend(comp_y.data.iter().map(|&v| map(v)));
    }
    Ok(psnr_slices(&mapped_x, &mapped_y, 255.0))
}

/// PSNR of components `1..=levels` from a single decomposition of each image;
/// the efficient form when the whole curve is wanted.
pub fn ro_component_psnr_curve(
    x: &Tensor<f32>,
    y: &Tensor<f32>,
    levels: usize,
) -> Result<Vec<Psnr>> {
    same_shape(x, y, "ro_component_psnr_curve")?;
    let (n, c, h, w) = x.dims4()?;
    if n != 1 {
        return Err(Error::argument("component protocol expects a single image"));
    }
    if levels == 0 || levels > h.min(w) {
        return Err(Error::argument(format!(
            "level count {levels} out of range 1..={}",
            h.min(w)
        )));
    }
    let mut per_level_x: Vec<Vec<f64>> = vec![Vec::new(); levels];
    let mut per_level_y: Vec<Vec<f64>> = vec![Vec::new(); levels];
    for ch in 0..c {
        let mx = Mat::new(h, w, x.plane(0, ch)?.iter().map(|&v| v as f64).collect())?;
        let my = Mat::new(h, w, y.plane(0, ch)?.iter().map(|&v| v as f64).collect())?;
        let comps_x = svd_decompose_mat(&mx, levels).0;
        let comps_y = svd_decompose_mat(&my, levels).0;
        for (level, (cx, cy)) in comps_x.iter().zip(&comps_y).enumerate() {
            let lo = cx.data.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = cx.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let range = (hi - lo).max(1e-12);
            let map = |v: f64| (v - lo) / range * 255.0;
            per_level_x[level].extend(cx.data.iter().map(|&v| map(v)));
            per_level_y[level].extend(cy.data.iter().map(|&v| map(v)));
        }
    }
    Ok(per_level_x
        .iter()
        .zip(&per_level_y)
        .map(|(a, b)| psnr_slices(a, b, 255.0))
        .collect())
}

/// One evaluated image under some protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub image_id: String,
    pub psnr: Psnr,
    pub ssim: Option<f64>,
}

/// Per-image values plus aggregates under a named protocol.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub protocol: String,
    pub records: Vec<MetricRecord>,
}

impl MetricReport {
    pub fn new(protocol: impl Into<String>) -> Self {
        Self {
            protocol: protocol.into(),
            records: Vec::new(),
        }
    }

    pub fn push(&mut self, record: MetricRecord) {
        self.records.push(record);
    }

    /// Mean over finite PSNR values; `None` when every pair was identical.
    pub fn mean_psnr(&self) -> Option<f64> {
        let finite: Vec<f64> = self.records.iter().filter_map(|r| r.psnr.db()).collect();
        if finite.is_empty() {
            None
        } else {
            Some(finite.iter().sum::<f64>() / finite.len() as f64)
        }
    }

    pub fn mean_ssim(&self) -> Option<f64> {
        let vals: Vec<f64> = self.records.iter().filter_map(|r| r.ssim).collect();
        if vals.is_empty() {
            None
        } else {
            Some(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }

    pub fn identical_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| r.psnr.is_identical())
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_rgb(h: usize, w: usize) -> Tensor<f32> {
        Tensor::from_fn(vec![1, 3, h, w], |i| ((i * 31) % 256) as f32 / 255.0)
    }

    #[test]
    fn identical_inputs_are_sentinel() {
        let x = ramp_rgb(16, 16);
        assert!(psnr(&x, &x).unwrap().is_identical());
        assert!(y_channel_psnr(&x, &x, 4).unwrap().is_identical());
    }

    #[test]
    fn constant_offset_psnr() {
        // offset 16/255 -> 10 log10(255^2 / 256) = 24.0475 dB
        let x = Tensor::filled(vec![1, 1, 32, 32], 0.3f32);
        let y = x.map(|v| v + 16.0 / 255.0);
        let p = psnr(&x, &y).unwrap().db().unwrap();
        let expect = 10.0 * (255.0f64 * 255.0 / 256.0).log10();
        assert!((p - expect).abs() < 0.01, "{p} vs {expect}");
    }

    #[test]
    fn psnr_is_symmetric() {
        let x = ramp_rgb(12, 12);
        let y = x.map(|v| v * 0.9 + 0.01);
        assert_eq!(psnr(&x, &y).unwrap(), psnr(&y, &x).unwrap());
    }

    #[test]
    fn ssim_self_is_one() {
        let x = ramp_rgb(16, 16);
        assert!((ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_inverted_below_one_and_in_range() {
        let x = ramp_rgb(16, 16);
        let inv = x.map(|v| 1.0 - v);
        let s = ssim(&x, &inv).unwrap();
        assert!(s < 1.0);
        assert!((-1.0..=1.0).contains(&s));
    }

    #[test]
    fn ssim_is_symmetric() {
        let x = ramp_rgb(14, 14);
        let y = x.map(|v| (v * 0.8 + 0.1).min(1.0));
        let a = ssim(&x, &y).unwrap();
        let b = ssim(&y, &x).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let x = Tensor::zeros(vec![1, 1, 8, 8]);
        assert!(ssim(&x, &x).is_err());
    }

    #[test]
    fn white_image_luma_is_235() {
        let white = Tensor::filled(vec![1, 3, 16, 16], 1.0f32);
        let y = luma_255(&white, 0).unwrap();
        for v in y {
            assert!((v - 235.0).abs() < 1e-9);
        }
    }

    #[test]
    fn y_channel_matches_formula_oracle() {
        let x = ramp_rgb(20, 20);
        let y = x.map(|v| (v + 0.02).min(1.0));
        let got = y_channel_psnr(&x, &y, 4).unwrap().db().unwrap();

        // Direct recomputation.
        let to_luma = |t: &Tensor<f32>| -> Vec<f64> {
            let r = t.plane(0, 0).unwrap();
            let g = t.plane(0, 1).unwrap();
            let b = t.plane(0, 2).unwrap();
            (0..400)
                .map(|i| 16.0 + 65.481 * r[i] as f64 + 128.553 * g[i] as f64 + 24.966 * b[i] as f64)
                .collect()
        };
        let (la, lb) = (to_luma(&x), to_luma(&y));
        let mut acc = 0.0;
        let mut cnt = 0;
        for yy in 4..16 {
            for xx in 4..16 {
                let d = la[yy * 20 + xx] - lb[yy * 20 + xx];
                acc += d * d;
                cnt += 1;
            }
        }
        let expect = 10.0 * (255.0f64 * 255.0 / (acc / cnt as f64)).log10();
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn shifted_recovers_constructed_translation() {
        // y is x translated by (5, 0): y[r][c] = x[r-5][c]. Hashed pixel
        // values so no other translation can tie the score.
        let h = 160;
        let w = 160;
        let x = Tensor::from_fn(vec![1, 1, h, w], |i| {
            let mut z = i as u64 ^ 0xA076_1D64_78BD_642F;
            z = (z ^ (z >> 33)).wrapping_mul(0xFF51_AFD7_ED55_8CCD);
            z ^= z >> 33;
            (z % 1000) as f32 / 1000.0
        });
        let mut shifted = vec![0.0f32; h * w];
        for r in 5..h {
            for c in 0..w {
                shifted[r * w + c] = x.data()[(r - 5) * w + c];
            }
        }
        let y = Tensor::new(vec![1, 1, h, w], shifted).unwrap();
        let score = shifted_max_psnr(&x, &y, 60, 40, ShiftSearch::FullGrid).unwrap();
        assert_eq!(score.shift, (5, 0));
        assert!(score.psnr.is_identical());
        assert!((score.ssim - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_shift_reduces_to_center_crop() {
        let x = ramp_rgb(140, 140);
        let y = x.map(|v| (v + 0.01).min(1.0));
        let score = shifted_max_psnr(&x, &y, 60, 0, ShiftSearch::FullGrid).unwrap();
        assert_eq!(score.shift, (0, 0));
        // Max over a grid containing (0,0) is at least the aligned value.
        let axis = shifted_max_psnr(&x, &y, 60, 40, ShiftSearch::FullGrid).unwrap();
        assert!(axis.psnr.db().unwrap() >= score.psnr.db().unwrap());
    }

    #[test]
    fn ro_component_identical_sentinel() {
        let x = ramp_rgb(24, 24);
        for i in [1usize, 2, 3] {
            assert!(ro_component_psnr(&x, &x, i).unwrap().is_identical());
        }
    }

    #[test]
    fn ro_component_scaled_rank_one() {
        // x rank-one, y = 2x: mapped components differ by the affine map, so
        // the value is finite and matches a direct recomputation.
        let h = 12;
        let w = 12;
        let u: Vec<f64> = (0..h).map(|i| 0.3 + 0.05 * i as f64).collect();
        let v: Vec<f64> = (0..w).map(|i| 0.2 + 0.04 * i as f64).collect();
        let x = Tensor::from_fn(vec![1, 1, h, w], |i| (u[i / w] * v[i % w]) as f32);
        let y = x.map(|p| 2.0 * p);
        let got = ro_component_psnr(&x, &y, 1).unwrap().db().unwrap();

        let mx = Mat::new(
            h,
            w,
            x.plane(0, 0).unwrap().iter().map(|&p| p as f64).collect(),
        )
        .unwrap();
        let my = Mat::new(
            h,
            w,
            y.plane(0, 0).unwrap().iter().map(|&p| p as f64).collect(),
        )
        .unwrap();
        let cx = svd_decompose_mat(&mx, 1).0.pop().unwrap();
        let cy = svd_decompose_mat(&my, 1).0.pop().unwrap();
        let lo = cx.data.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cx.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let map = |p: f64| (p - lo) / (hi - lo) * 255.0;
        let a: Vec<f64> = cx.data.iter().map(|&p| map(p)).collect();
        let b: Vec<f64> = cy.data.iter().map(|&p| map(p)).collect();
        let expect = match psnr_slices(&a, &b, 255.0) {
            Psnr::Db(v) => v,
            Psnr::Identical => panic!("should differ"),
        };
        assert!((got - expect).abs() < 1e-9);
    }

    #[test]
    fn ro_component_index_validation() {
        let x = ramp_rgb(8, 8);
        assert!(ro_component_psnr(&x, &x, 0).is_err());
        assert!(ro_component_psnr(&x, &x, 9).is_err());
    }

    #[test]
    fn forty_component_curve_on_64px_under_a_second() {
        let x = Tensor::from_fn(vec![1, 1, 64, 64], |i| ((i * 37) % 251) as f32 / 251.0);
        let y = x.map(|v| (v + 0.05).min(1.0));
        let start = std::time::Instant::now();
        let curve = ro_component_psnr_curve(&x, &y, 40).unwrap();
        assert!(start.elapsed().as_secs_f64() < 1.0);
        assert_eq!(curve.len(), 40);
        // Per-index entry agrees with the one-shot op.
        let single = ro_component_psnr(&x, &y, 3).unwrap();
        match (curve[2], single) {
            (Psnr::Db(a), Psnr::Db(b)) => assert!((a - b).abs() < 1e-9),
            (a, b) => panic!("mismatch: {a:?} vs {b:?}"),
        }
    }

    #[test]
    fn report_aggregates() {
        let mut report = MetricReport::new("plain");
        report.push(MetricRecord {
            image_id: "a".into(),
            psnr: Psnr::Db(30.0),
            ssim: Some(0.9),
        });
        report.push(MetricRecord {
            image_id: "b".into(),
            psnr: Psnr::Identical,
            ssim: Some(1.0),
        });
        assert_eq!(report.mean_psnr(), Some(30.0));
        assert_eq!(report.identical_count(), 1);
        assert!((report.mean_ssim().unwrap() - 0.95).abs() < 1e-12);
    }
}
