//! Shared test helpers: structured synthetic images that behave like small
//! natural photographs (strong low-rank content plus texture).

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use ronet_core::Tensor;

/// Deterministic synthetic image on the `[0, 1]` scale: smooth gradients,
/// a few sinusoidal gratings and rectangle patches.
pub fn synthetic_image(seed: u64, channels: usize, h: usize, w: usize) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0f32; channels * h * w];
    for c in 0..channels {
        let base = rng.random_range(0.25..0.65f64);
        let gy = rng.random_range(-0.3..0.3f64) / h as f64;
        let gx = rng.random_range(-0.3..0.3f64) / w as f64;
        let fy = rng.random_range(0.05..0.4f64);
        let fx = rng.random_range(0.05..0.4f64);
        let amp = rng.random_range(0.05..0.15f64);
        let plane = &mut data[c * h * w..(c + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let v = base
                    + gy * y as f64
                    + gx * x as f64
                    + amp * (fy * y as f64).sin() * (fx * x as f64).cos();
                plane[y * w + x] = v as f32;
            }
        }
        for _ in 0..3 {
            let ry = rng.random_range(0..h);
            let rx = rng.random_range(0..w);
            let rh = rng.random_range(h / 8..h / 2 + 1);
            let rw = rng.random_range(w / 8..w / 2 + 1);
            let delta = rng.random_range(-0.2..0.2f64) as f32;
            for y in ry..(ry + rh).min(h) {
                for x in rx..(rx + rw).min(w) {
                    plane[y * w + x] += delta;
                }
            }
        }
        for v in plane.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
    }
    Tensor::new(vec![1, channels, h, w], data).unwrap()
}

#[allow(dead_code)]
pub fn write_pngs(dir: &Path, images: &[(String, Tensor<f32>)]) {
    for (name, img) in images {
        ronet_cli::imageio::save_image(img, &dir.join(format!("{name}.png"))).unwrap();
    }
}

#[allow(dead_code)]
pub fn ronet_bin() -> &'static str {
    env!("CARGO_BIN_EXE_ronet")
}
