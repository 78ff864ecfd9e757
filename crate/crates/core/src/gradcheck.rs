//! Finite-difference verification of every differentiable primitive.
//!
//! This lives in the library (not a test file) so both the crate's own test
//! suite and the workspace acceptance suite can drive the same checks. The
//! central-difference evaluator is local and deliberately naive; it is the
//! independent route the reverse-mode gradients are compared against.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ops::bn::{BnMode, BnStats};
use crate::scalar::Scalar;
use crate::tape::{LossAlpha, NodeId, Tape};
use crate::tensor::Tensor;

/// Step and tolerance of one verification pass.
#[derive(Debug, Clone, Copy)]
pub struct Mode {
    pub h: f64,
    pub tol: f64,
}

/// f32 mode: step 1e-3, relative error under 1e-3.
pub const F32_MODE: Mode = Mode { h: 1e-3, tol: 1e-3 };
/// f64 mode: step 1e-5, relative error under 1e-6.
pub const F64_MODE: Mode = Mode { h: 1e-5, tol: 1e-6 };

/// Central-difference gradient of a scalar function.
fn central_diff<F>(mut f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y).abs() / 1.0_f64.max(x.abs()).max(y.abs()))
        .fold(0.0, f64::max)
}

const CASES: usize = 20;

/// Build a scalar loss from leaves; the same graph serves the AD and FD paths.
type Build<S> = dyn Fn(&mut Tape<S>, &[NodeId]) -> NodeId;

fn check_case<S: Scalar>(
    label: &str,
    shapes: &[Vec<usize>],
    values: &[Vec<f64>],
    build: &Build<S>,
    mode: &Mode,
) {
    // Reverse-mode gradients.
    let mut tape = Tape::<S>::new();
    let ids: Vec<NodeId> = shapes
        .iter()
        .zip(values)
        .map(|(shape, vals)| {
            tape.leaf(
                Tensor::<S>::from_f64_slice(shape.clone(), vals).unwrap(),
                true,
            )
        })
        .collect();
    let loss = build(&mut tape, &ids);
    assert_eq!(tape.value(loss).numel(), 1, "{label}: loss must be scalar");
    let grads = tape.backward(loss).unwrap();
    let ad: Vec<f64> = ids
        .iter()
        .zip(values)
        .flat_map(|(&id, vals)| match grads.get(id) {
            Some(g) => g.iter().map(|v| v.to_f64()).collect::<Vec<f64>>(),
            None => vec![0.0; vals.len()],
        })
        .collect();

    // Finite differences over the concatenation of all inputs.
    let flat: Vec<f64> = values.iter().flatten().copied().collect();
    let f = |x: &[f64]| -> f64 {
        let mut tape = Tape::<S>::new();
        let mut offset = 0;
        let ids: Vec<NodeId> = shapes
            .iter()
            .map(|shape| {
                let numel: usize = shape.iter().product();
                let t =
                    Tensor::<S>::from_f64_slice(shape.clone(), &x[offset..offset + numel]).unwrap();
                offset += numel;
                tape.leaf(t, false)
            })
            .collect();
        let loss = build(&mut tape, &ids);
        tape.value(loss).data()[0].to_f64()
    };
    let fd = central_diff(f, &flat, mode.h);

    let err = max_relative_error(&ad, &fd);
    assert!(
        err < mode.tol,
        "{label}: max relative error {err:.3e} exceeds {:.0e}",
        mode.tol
    );
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Values bounded away from zero, for kinked ops at the given FD step.
fn away_from_zero(rng: &mut ChaCha8Rng, n: usize, margin: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let sign = if rng.random_range(0.0..1.0f64) < 0.5 {
                -1.0
            } else {
                1.0
            };
            sign * rng.random_range(margin..1.0)
        })
        .collect()
}

fn random_shapes(rng: &mut ChaCha8Rng) -> (usize, usize, usize, usize) {
    (
        1 + rng.random_range(0..2usize),
        1 + rng.random_range(0..3usize),
        3 + rng.random_range(0..3usize),
        3 + rng.random_range(0..3usize),
    )
}

fn run_conv2d<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    for case in 0..CASES {
        let (n, ci, h, w) = random_shapes(&mut rng);
        let co = 1 + case % 3;
        let (kh, kw) = [(1, 3), (3, 1), (3, 3)][case % 3];
        let shapes = vec![
            vec![n, ci, h, w],
            vec![co, ci, kh, kw],
            vec![co],
            vec![n, co, h, w],
        ];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        check_case::<S>(
            "conv2d",
            &shapes,
            &values,
            &|tape, ids| {
                let out = tape.conv2d(ids[0], ids[1], ids[2], None).unwrap();
                tape.loss_norm(out, ids[3], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_elementwise_chain<S: Scalar>(mode: &Mode) {
    // relu(a + b) scaled, compared against a random reference.
    let mut rng = ChaCha8Rng::seed_from_u64(0xE1);
    for _ in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let numel = n * c * h * w;
        let shape = vec![n, c, h, w];
        // Keep a + b away from the relu kink.
        let a = away_from_zero(&mut rng, numel, 0.1);
        let b: Vec<f64> = a
            .iter()
            .map(|v| v + v.signum() * rng.random_range(0.05..0.4))
            .collect();
        let target = uniform(&mut rng, numel, -1.0, 1.0);
        let factor = rng.random_range(0.5..2.0f64);
        let shapes = vec![shape.clone(), shape.clone(), shape];
        let values = vec![a, b, target];
        check_case::<S>(
            "relu(add)*scalar",
            &shapes,
            &values,
            &move |tape, ids| {
                let sum = tape.add(ids[0], ids[1]).unwrap();
                let act = tape.relu(sum);
                let scaled = tape.scalar_mul(act, S::from_f64(factor));
                tape.loss_norm(scaled, ids[2], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_sub_sum<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5B);
    for _ in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let numel = n * c * h * w;
        let shape = vec![n, c, h, w];
        let shapes = vec![shape.clone(), shape];
        let values = vec![
            uniform(&mut rng, numel, -1.0, 1.0),
            uniform(&mut rng, numel, -1.0, 1.0),
        ];
        check_case::<S>(
            "sub+sum",
            &shapes,
            &values,
            &|tape, ids| {
                let d = tape.sub(ids[0], ids[1]).unwrap();
                let sq = tape.loss_norm(d, ids[1], LossAlpha::L2).unwrap();
                let s = tape.sum(d);
                let both = tape.add(sq, s).unwrap();
                tape.scalar_mul(both, S::from_f64(0.5))
            },
            mode,
        );
    }
}

fn run_pools<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0);
    for case in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let shapes = vec![
            vec![n, c, h, w],
            if case % 2 == 0 {
                vec![n, c, h, 1]
            } else {
                vec![n, c, 1, w]
            },
        ];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        let to_column = case % 2 == 0;
        check_case::<S>(
            "avg_pool",
            &shapes,
            &values,
            &move |tape, ids| {
                let pooled = if to_column {
                    tape.avg_pool_to_column(ids[0]).unwrap()
                } else {
                    tape.avg_pool_to_row(ids[0]).unwrap()
                };
                tape.loss_norm(pooled, ids[1], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_outer<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x07);
    for _ in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let shapes = vec![vec![n, c, h, 1], vec![n, c, 1, w], vec![n, c, h, w]];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        check_case::<S>(
            "outer_product",
            &shapes,
            &values,
            &|tape, ids| {
                let out = tape.outer_product(ids[0], ids[1]).unwrap();
                tape.loss_norm(out, ids[2], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_pixel_shuffle<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x95);
    for case in 0..CASES {
        let r = 2usize;
        let n = 1 + case % 2;
        let c_out = 1 + case % 2;
        let (h, w) = (2 + case % 2, 2 + (case / 2) % 2);
        let shapes = vec![vec![n, c_out * r * r, h, w], vec![n, c_out, h * r, w * r]];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        check_case::<S>(
            "pixel_shuffle",
            &shapes,
            &values,
            &move |tape, ids| {
                let out = tape.pixel_shuffle(ids[0], r).unwrap();
                tape.loss_norm(out, ids[1], LossAlpha::L2).unwrap()
            },
            mode,
        );
        // The inverse direction.
        let shapes = vec![vec![n, c_out, h * r, w * r], vec![n, c_out * r * r, h, w]];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        check_case::<S>(
            "pixel_unshuffle",
            &shapes,
            &values,
            &move |tape, ids| {
                let out = tape.pixel_unshuffle(ids[0], r).unwrap();
                tape.loss_norm(out, ids[1], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_batch_norm<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xBA);
    for case in 0..CASES {
        let (n, c, h, w) = (2, 1 + case % 3, 3, 4);
        let numel = n * c * h * w;
        let shapes = vec![vec![n, c, h, w], vec![c], vec![c], vec![n, c, h, w]];
        // Unit-spread inputs keep the variance well away from zero.
        let values = vec![
            uniform(&mut rng, numel, -1.5, 1.5),
            uniform(&mut rng, c, 0.5, 1.5),
            uniform(&mut rng, c, -0.5, 0.5),
            uniform(&mut rng, numel, -1.0, 1.0),
        ];
        let train = case % 2 == 0;
        check_case::<S>(
            "batch_norm",
            &shapes,
            &values,
            &move |tape, ids| {
                let mut stats = BnStats::<S>::new(tape.value(ids[1]).numel());
                let bn_mode = if train { BnMode::Train } else { BnMode::Eval };
                let out = tape
                    .batch_norm(ids[0], ids[1], ids[2], &mut stats, bn_mode)
                    .unwrap();
                tape.loss_norm(out, ids[3], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

fn run_losses<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0x10);
    for case in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let numel = n * c * h * w;
        let shape = vec![n, c, h, w];
        // For the L1 kink, keep |a - b| above the FD step.
        let a = uniform(&mut rng, numel, -1.0, 1.0);
        let b: Vec<f64> = a
            .iter()
            .map(|v| v + away_from_zero(&mut rng, 1, 0.1)[0])
            .collect();
        let alpha = if case % 2 == 0 {
            LossAlpha::L2
        } else {
            LossAlpha::L1
        };
        check_case::<S>(
            "loss_norm",
            &[shape.clone(), shape],
            &[a, b],
            &move |tape, ids| tape.loss_norm(ids[0], ids[1], alpha).unwrap(),
            mode,
        );
    }
}

fn run_diff_map<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD1);
    for _ in 0..CASES {
        let (n, c, h, w) = random_shapes(&mut rng);
        let numel = n * c * h * w;
        let shape = vec![n, c, h, w];
        // Checkerboard signs keep horizontal and vertical first differences
        // away from the absolute-value kink.
        let a: Vec<f64> = (0..numel)
            .map(|i| {
                let y = (i / w) % h;
                let x = i % w;
                let sign = if (y + x) % 2 == 0 { 1.0 } else { -1.0 };
                sign * rng.random_range(0.3..0.6)
            })
            .collect();
        let b: Vec<f64> = (0..numel).map(|_| rng.random_range(-0.05..0.05)).collect();
        check_case::<S>(
            "diff_map_l1",
            &[shape.clone(), shape],
            &[a, b],
            &|tape, ids| tape.diff_map_l1(ids[0], ids[1]).unwrap(),
            mode,
        );
    }
}

fn run_concat<S: Scalar>(mode: &Mode) {
    let mut rng = ChaCha8Rng::seed_from_u64(0xCC);
    for _ in 0..CASES {
        let (n, _, h, w) = random_shapes(&mut rng);
        let c1 = 1 + rng.random_range(0..2usize);
        let c2 = 1 + rng.random_range(0..2usize);
        let shapes = vec![vec![n, c1, h, w], vec![n, c2, h, w], vec![n, c1 + c2, h, w]];
        let values: Vec<Vec<f64>> = shapes
            .iter()
            .map(|s| uniform(&mut rng, s.iter().product(), -1.0, 1.0))
            .collect();
        check_case::<S>(
            "concat_channels",
            &shapes,
            &values,
            &|tape, ids| {
                let cat = tape.concat_channels(&[ids[0], ids[1]]).unwrap();
                tape.loss_norm(cat, ids[2], LossAlpha::L2).unwrap()
            },
            mode,
        );
    }
}

/// Run every primitive's check suite at the given mode.
pub fn run_all<S: Scalar>(mode: &Mode) {
    run_conv2d::<S>(mode);
    run_elementwise_chain::<S>(mode);
    run_sub_sum::<S>(mode);
    run_pools::<S>(mode);
    run_outer::<S>(mode);
    run_pixel_shuffle::<S>(mode);
    run_batch_norm::<S>(mode);
    run_losses::<S>(mode);
    run_diff_map::<S>(mode);
    run_concat::<S>(mode);
}
