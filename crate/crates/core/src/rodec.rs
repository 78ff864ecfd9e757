//! Cascaded rank-one decomposition network: a chain of projection units
//! applied to successive residuals. The telescoping construction guarantees
//! that components plus residual reconstruct the input for any weights.

use std::collections::HashMap;
use std::collections::VecDeque;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::optim::{Adam, LrSchedule};
use crate::params::{BoundParams, InitScheme, Initializer, ModelWeights};
use crate::rankone::{svd_decompose_tensor, Decomposition};
use crate::ropnet::{self, RopConfig};
use crate::scalar::Scalar;
use crate::tape::{LossAlpha, NodeId, Tape};
use crate::tensor::Tensor;
use crate::train::{BatchSource, LossRow, ProgressSink};

pub const MAX_LEVELS: usize = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RodecConfig {
    pub levels: usize,
    pub rop: RopConfig,
}

impl RodecConfig {
    pub fn new(levels: usize, rop: RopConfig) -> Result<Self> {
        let cfg = Self { levels, rop };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels == 0 || self.levels > MAX_LEVELS {
            return Err(Error::config(format!(
                "decomposition level count must be in 1..={MAX_LEVELS}, got {}",
                self.levels
            )));
        }
        self.rop.validate()
    }

    pub fn unit_prefix(level: usize) -> String {
        format!("dec.rop{}", level + 1)
    }
}

/// Fresh decomposition weights for the given config.
pub fn init_weights<S: Scalar>(
    cfg: &RodecConfig,
    scheme: InitScheme,
    seed: u64,
) -> Result<ModelWeights<S>> {
    cfg.validate()?;
    let mut weights = ModelWeights::new();
    let mut init = Initializer::new(scheme, seed);
    for level in 0..cfg.levels {
        ropnet::init_into(
            &mut weights,
            &mut init,
            &RodecConfig::unit_prefix(level),
            &cfg.rop,
        )?;
    }
    Ok(weights)
}

/// Reconstruct the architecture of saved decomposition weights from tensor
/// names and shapes.
pub fn infer_config<S: Scalar>(weights: &ModelWeights<S>) -> Result<RodecConfig> {
    let mut levels = 0;
    while weights.contains(&format!(
        "{}.cblock.b0.conv1.weight",
        RodecConfig::unit_prefix(levels)
    )) {
        levels += 1;
    }
    if levels == 0 {
        return Err(Error::config(
            "weights contain no decomposition units (dec.rop1.* missing)",
        ));
    }
    let first = RodecConfig::unit_prefix(0);
    let conv1 = weights.get(&format!("{first}.cblock.b0.conv1.weight"))?;
    let (wide, out_channels, ckh, ckw) = conv1.dims4()?;
    let conv2 = weights.get(&format!("{first}.cblock.b0.conv2.weight"))?;
    let narrow = conv2.shape()[0];
    let rconv1 = weights.get(&format!("{first}.rblock.b0.conv1.weight"))?;
    let (_, _, rkh, rkw) = rconv1.dims4()?;
    let mut blocks = 0;
    while weights.contains(&format!("{first}.cblock.b{blocks}.conv1.weight")) {
        blocks += 1;
    }
    RodecConfig::new(
        levels,
        RopConfig {
            channels_wide: wide,
            channels_narrow: narrow,
            out_channels,
            cblock_kernel: (ckh, ckw),
            rblock_kernel: (rkh, rkw),
            blocks_per_branch: blocks,
        },
    )
}

/// Tape nodes of one decomposition pass: components `X_1..X_L` and the
/// residual ladder `E_1..E_L`.
#[derive(Debug, Clone)]
pub struct DecompositionNodes {
    pub components: Vec<NodeId>,
    pub residuals: Vec<NodeId>,
}

impl DecompositionNodes {
    pub fn residual(&self) -> NodeId {
        *self.residuals.last().expect("at least one level")
    }

    pub fn to_values<S: Scalar>(&self, tape: &Tape<S>) -> Decomposition<S> {
        Decomposition {
            components: self
                .components
                .iter()
                .map(|&id| tape.value(id).clone())
                .collect(),
            residual: tape.value(self.residual()).clone(),
        }
    }
}

/// Run the cascade: `X_1 = rop_1(x)`, `E_l = E_{l-1} - X_l`,
/// `X_{l+1} = rop_{l+1}(E_l)`.
pub fn forward<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    cfg: &RodecConfig,
    x: NodeId,
) -> Result<DecompositionNodes> {
    let mut components = Vec::with_capacity(cfg.levels);
    let mut residuals = Vec::with_capacity(cfg.levels);
    let mut e = x;
    for level in 0..cfg.levels {
        let comp = ropnet::forward(tape, params, &RodecConfig::unit_prefix(level), &cfg.rop, e)?;
        e = tape.sub(e, comp)?;
        components.push(comp);
        residuals.push(e);
    }
    Ok(DecompositionNodes {
        components,
        residuals,
    })
}

/// Decompose without gradient tracking; the inference entry point.
pub fn forward_values<S: Scalar>(
    weights: &ModelWeights<S>,
    cfg: &RodecConfig,
    x: &Tensor<S>,
) -> Result<Decomposition<S>> {
    let mut tape = Tape::new();
    let bound = BoundParams::bind(&mut tape, weights, false);
    let xid = tape.constant(x.clone());
    let nodes = forward(&mut tape, &bound, cfg, xid)?;
    Ok(nodes.to_values(&tape))
}

/// Unsupervised objective: mean over levels of the mean-squared residuals.
pub fn unsup_loss<S: Scalar>(tape: &mut Tape<S>, nodes: &DecompositionNodes) -> Result<NodeId> {
    let mut total: Option<NodeId> = None;
    for &e in &nodes.residuals {
        let zero = tape.constant(Tensor::zeros(tape.value(e).shape().to_vec()));
        let term = tape.loss_norm(e, zero, LossAlpha::L2)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let total = total.expect("at least one level");
    Ok(tape.scalar_mul(total, S::from_f64(1.0 / nodes.residuals.len() as f64)))
}

/// Supervised objective: mean over levels of the mean-squared distance to the
/// per-level SVD targets.
pub fn sup_loss<S: Scalar>(
    tape: &mut Tape<S>,
    nodes: &DecompositionNodes,
    targets: &[Tensor<S>],
) -> Result<NodeId> {
    if targets.len() != nodes.components.len() {
        return Err(Error::contract(format!(
            "expected {} SVD targets, got {}",
            nodes.components.len(),
            targets.len()
        )));
    }
    let mut total: Option<NodeId> = None;
    for (&comp, target) in nodes.components.iter().zip(targets) {
        let t = tape.constant(target.clone());
        let term = tape.loss_norm(comp, t, LossAlpha::L2)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let total = total.expect("at least one level");
    Ok(tape.scalar_mul(total, S::from_f64(1.0 / targets.len() as f64)))
}

/// Per-sample SVD targets with a bounded content-keyed cache, so repeated
/// patches do not pay for repeated decompositions.
pub struct SvdTargetCache<S: Scalar> {
    levels: usize,
    capacity: usize,
    map: HashMap<Vec<u8>, Vec<Tensor<S>>>,
    order: VecDeque<Vec<u8>>,
}

impl<S: Scalar> SvdTargetCache<S> {
    pub fn new(levels: usize, capacity: usize) -> Self {
        Self {
            levels,
            capacity: capacity.max(1),
            map: HashMap::new(),
            order: VecDeque::new(),
        }
    }

    fn key_of(sample: &[S]) -> Vec<u8> {
        let mut key = Vec::with_capacity(sample.len() * 8);
        for v in sample {
            key.extend_from_slice(&v.to_f64().to_le_bytes());
        }
        key
    }

    /// Level-major SVD component batches for `batch [n,c,h,w]`.
    pub fn targets_for(&mut self, batch: &Tensor<S>) -> Result<Vec<Tensor<S>>> {
        let (n, c, h, w) = batch.dims4()?;
        let plane = c * h * w;
        let mut per_level: Vec<Vec<S>> = (0..self.levels)
            .map(|_| vec![S::ZERO; batch.numel()])
            .collect();
        for b in 0..n {
            let sample = &batch.data()[b * plane..(b + 1) * plane];
            let key = Self::key_of(sample);
            let comps = match self.map.get(&key) {
                Some(c) => c.clone(),
                None => {
                    let t = Tensor::new(vec![1, c, h, w], sample.to_vec())?;
                    let dec = svd_decompose_tensor(&t, self.levels)?;
                    let comps = dec.components;
                    if self.order.len() >= self.capacity {
                        if let Some(evicted) = self.order.pop_front() {
                            self.map.remove(&evicted);
                        }
                    }
                    self.map.insert(key.clone(), comps.clone());
                    self.order.push_back(key);
                    comps
                }
            };
            for (level, comp) in comps.iter().enumerate() {
                per_level[level][b * plane..(b + 1) * plane].copy_from_slice(comp.data());
            }
        }
        per_level
            .into_iter()
            .map(|d| Tensor::new(batch.shape().to_vec(), d))
            .collect()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RodecTrainMode {
    Unsupervised,
    Supervised,
}

#[derive(Debug, Clone)]
pub struct RodecTrainOptions {
    pub updates: usize,
    pub schedule: LrSchedule,
    pub mode: RodecTrainMode,
    pub init: InitScheme,
    pub init_seed: u64,
    pub svd_cache_capacity: usize,
}

impl RodecTrainOptions {
    pub fn unsupervised(updates: usize, schedule: LrSchedule, init_seed: u64) -> Self {
        Self {
            updates,
            schedule,
            mode: RodecTrainMode::Unsupervised,
            init: InitScheme::XavierUniform,
            init_seed,
            svd_cache_capacity: 4096,
        }
    }
}

/// Adam-train a decomposition network from scratch. All levels are optimized
/// jointly.
pub fn train<S: Scalar>(
    cfg: &RodecConfig,
    opts: &RodecTrainOptions,
    batches: &mut dyn BatchSource<S>,
    mut progress: ProgressSink<'_>,
) -> Result<ModelWeights<S>> {
    cfg.validate()?;
    if opts.updates == 0 {
        return Err(Error::config("training needs at least one update"));
    }
    let mut weights = init_weights::<S>(cfg, opts.init, opts.init_seed)?;
    let mut adam = Adam::new();
    let mut svd_cache = SvdTargetCache::new(cfg.levels, opts.svd_cache_capacity);
    let started = Instant::now();

    for step in 0..opts.updates {
        let batch = batches.next_batch(step)?;
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &weights, true);
        let x = tape.constant(batch.clone());
        let nodes = forward(&mut tape, &bound, cfg, x)?;
        let loss = match opts.mode {
            RodecTrainMode::Unsupervised => unsup_loss(&mut tape, &nodes)?,
            RodecTrainMode::Supervised => {
                let targets = svd_cache.targets_for(&batch)?;
                sup_loss(&mut tape, &nodes, &targets)?
            }
        };
        let loss_value = tape.value(loss).data()[0].to_f64();
        let grads = tape.backward(loss)?;
        let collected = bound.collect_grads(&weights, &grads)?;
        let lr = opts.schedule.at(step);
        adam.step(&mut weights, &collected, lr)?;
        if let Some(sink) = progress.as_deref_mut() {
            sink(&LossRow {
                step,
                loss: loss_value,
                lr,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_cfg(levels: usize) -> RodecConfig {
        RodecConfig::new(levels, RopConfig::gray().with_widths(8, 4)).unwrap()
    }

    fn random_batch(seed: u64, n: usize, h: usize, w: usize) -> Tensor<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![n, 1, h, w], |_| rng.random_range(0.0..1.0))
    }

    #[test]
    fn telescoping_identity() {
        for levels in [1usize, 3] {
            let cfg = tiny_cfg(levels);
            let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 3).unwrap();
            let x = random_batch(10, 2, 12, 9);
            let dec = forward_values(&weights, &cfg, &x).unwrap();
            assert_eq!(dec.levels(), levels);
            assert!(dec.reconstruction_error(&x) < 1e-5);
        }
    }

    #[test]
    fn single_level_residual_formula() {
        let cfg = tiny_cfg(1);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 4).unwrap();
        let x = random_batch(11, 1, 8, 8);
        let dec = forward_values(&weights, &cfg, &x).unwrap();
        for ((&r, &c), &xv) in dec
            .residual
            .data()
            .iter()
            .zip(dec.components[0].data())
            .zip(x.data())
        {
            assert!((r - (xv - c)).abs() < 1e-6);
        }
    }

    #[test]
    fn components_are_rank_one() {
        use crate::rankone::{rank_one_defect, Mat};
        let cfg = tiny_cfg(3);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 5).unwrap();
        let x = random_batch(12, 1, 10, 10);
        let dec = forward_values(&weights, &cfg, &x).unwrap();
        for comp in &dec.components {
            let m = Mat::new(
                10,
                10,
                comp.plane(0, 0)
                    .unwrap()
                    .iter()
                    .map(|&v| v as f64)
                    .collect(),
            )
            .unwrap();
            assert!(rank_one_defect(&m) < 1e-5);
        }
    }

    #[test]
    fn unsup_loss_matches_direct_formula() {
        let cfg = tiny_cfg(3);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 6).unwrap();
        let x = random_batch(13, 2, 8, 8);

        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &weights, false);
        let xid = tape.constant(x.clone());
        let nodes = forward(&mut tape, &bound, &cfg, xid).unwrap();
        let loss = unsup_loss(&mut tape, &nodes).unwrap();
        let loss_value = tape.value(loss).data()[0] as f64;

        // Direct ladder: mean over levels of mean-squared E_l computed from
        // the value-level decomposition.
        let dec = nodes.to_values(&tape);
        let mut acc = x.to_f64_vec();
        let mut expect = 0.0;
        for comp in &dec.components {
            for (a, &c) in acc.iter_mut().zip(comp.data()) {
                *a -= c as f64;
            }
            expect += acc.iter().map(|v| v * v).sum::<f64>() / acc.len() as f64;
        }
        expect /= dec.levels() as f64;
        assert!((loss_value - expect).abs() < 1e-5 * expect.max(1.0));
    }

    #[test]
    fn zeroed_weights_make_loss_equal_input_energy() {
        let cfg = tiny_cfg(2);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 7).unwrap();
        let zeroed = {
            let mut w = ModelWeights::new();
            for (name, t) in weights.iter() {
                w.insert(name, Tensor::zeros(t.shape().to_vec())).unwrap();
            }
            w
        };
        let x = random_batch(14, 1, 6, 6);
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &zeroed, false);
        let xid = tape.constant(x.clone());
        let nodes = forward(&mut tape, &bound, &cfg, xid).unwrap();
        let loss = unsup_loss(&mut tape, &nodes).unwrap();
        let expect = x.to_f64_vec().iter().map(|v| v * v).sum::<f64>() / x.numel() as f64;
        assert!((tape.value(loss).data()[0] as f64 - expect).abs() < 1e-6);
    }

    #[test]
    fn sup_loss_zero_when_components_match_targets() {
        let cfg = tiny_cfg(2);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 8).unwrap();
        let x = random_batch(15, 1, 8, 8);
        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &weights, false);
        let xid = tape.constant(x);
        let nodes = forward(&mut tape, &bound, &cfg, xid).unwrap();
        let targets: Vec<Tensor<f32>> = nodes
            .components
            .iter()
            .map(|&id| tape.value(id).clone())
            .collect();
        let loss = sup_loss(&mut tape, &nodes, &targets).unwrap();
        assert_eq!(tape.value(loss).data()[0], 0.0);
    }

    #[test]
    fn sup_loss_matches_direct_formula() {
        let cfg = tiny_cfg(2);
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 9).unwrap();
        let x = random_batch(16, 2, 8, 8);
        let mut cache = SvdTargetCache::new(2, 16);
        let targets = cache.targets_for(&x).unwrap();

        let mut tape = Tape::new();
        let bound = BoundParams::bind(&mut tape, &weights, false);
        let xid = tape.constant(x);
        let nodes = forward(&mut tape, &bound, &cfg, xid).unwrap();
        let loss = sup_loss(&mut tape, &nodes, &targets).unwrap();
        let loss_value = tape.value(loss).data()[0] as f64;

        let mut expect = 0.0;
        for (&comp, target) in nodes.components.iter().zip(&targets) {
            let cv = tape.value(comp);
            let mse = cv
                .data()
                .iter()
                .zip(target.data())
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum::<f64>()
                / cv.numel() as f64;
            expect += mse;
        }
        expect /= targets.len() as f64;
        assert!((loss_value - expect).abs() < 1e-6 * expect.max(1.0));
    }

    #[test]
    fn svd_cache_reuses_and_evicts() {
        let x = random_batch(17, 1, 8, 8);
        let mut cache = SvdTargetCache::<f32>::new(1, 2);
        cache.targets_for(&x).unwrap();
        assert_eq!(cache.len(), 1);
        cache.targets_for(&x).unwrap();
        assert_eq!(cache.len(), 1);
        cache.targets_for(&random_batch(18, 1, 8, 8)).unwrap();
        cache.targets_for(&random_batch(19, 1, 8, 8)).unwrap();
        assert_eq!(cache.len(), 2);
    }

    #[test]
    fn one_step_changes_weights_and_seeds_reproduce() {
        let cfg = tiny_cfg(2);
        let opts = RodecTrainOptions::unsupervised(2, LrSchedule::constant(1e-3), 21);
        let run = || {
            let mut source = |step: usize| Ok(random_batch(100 + step as u64, 2, 8, 8));
            train::<f32>(&cfg, &opts, &mut source, None).unwrap()
        };
        let w1 = run();
        let w2 = run();
        let initial = init_weights::<f32>(&cfg, opts.init, opts.init_seed).unwrap();
        let mut any_changed = false;
        for ((n1, t1), (n2, t2)) in w1.iter().zip(w2.iter()) {
            assert_eq!(n1, n2);
            assert_eq!(t1.data(), t2.data(), "two seeded runs diverged at {n1}");
            if t1.data() != initial.get(n1).unwrap().data() {
                any_changed = true;
            }
        }
        assert!(any_changed, "training left every weight untouched");
    }
}

#[cfg(test)]
mod infer_tests {
    use super::*;
    use crate::params::InitScheme;

    #[test]
    fn infer_recovers_init_config() {
        let cfg = RodecConfig::new(4, RopConfig::color().with_widths(32, 16)).unwrap();
        let weights = init_weights::<f32>(&cfg, InitScheme::XavierUniform, 1).unwrap();
        let inferred = infer_config(&weights).unwrap();
        assert_eq!(inferred, cfg);
    }

    #[test]
    fn infer_rejects_foreign_weights() {
        let mut w = ModelWeights::<f32>::new();
        w.insert("something.weight", Tensor::zeros(vec![1]))
            .unwrap();
        assert!(infer_config(&w).is_err());
    }
}
