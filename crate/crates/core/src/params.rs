//! Named parameter collections and their tape bindings.
//!
//! `ModelWeights` is the serializable store: an ordered name -> tensor map.
//! Names ending in `.running_mean` / `.running_var` are batch-norm buffers;
//! they are saved and loaded like parameters but never optimized and never
//! bound with gradients.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tape::{Gradients, NodeId, Tape};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<S: Scalar = f32> {
    map: BTreeMap<String, Tensor<S>>,
}

impl<S: Scalar> Default for ModelWeights<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> ModelWeights<S> {
    pub fn new() -> Self {
        Self {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<S>) -> Result<()> {
        let name = name.into();
        if self.map.contains_key(&name) {
            return Err(Error::contract(format!(
                "duplicate parameter name `{name}`"
            )));
        }
        self.map.insert(name, tensor);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&Tensor<S>> {
        self.map
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Replace the value of an existing entry; the shape must not drift.
    pub fn update(&mut self, name: &str, tensor: Tensor<S>) -> Result<()> {
        let slot = self
            .map
            .get_mut(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        if slot.shape() != tensor.shape() {
            return Err(Error::contract(format!(
                "parameter `{name}` changed shape: {:?} -> {:?}",
                slot.shape(),
                tensor.shape()
            )));
        }
        *slot = tensor;
        Ok(())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Name-ordered iteration; the order every loop in the crate relies on.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<S>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|k| k.as_str())
    }

    pub fn is_buffer(name: &str) -> bool {
        name.ends_with(".running_mean") || name.ends_with(".running_var")
    }

    /// Merge another collection under the same namespace. Duplicate names error.
    pub fn absorb(&mut self, other: ModelWeights<S>) -> Result<()> {
        for (name, tensor) in other.map {
            self.insert(name, tensor)?;
        }
        Ok(())
    }

    pub fn total_values(&self) -> usize {
        self.map.values().map(|t| t.numel()).sum()
    }
}

/// Weight initialization family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitScheme {
    /// Uniform on `[-a, a]` with `a = sqrt(6 / (fan_in + fan_out))`.
    XavierUniform,
    /// Normal with std `sqrt(2 / fan_in)`.
    MsraNormal,
}

impl InitScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "xavier-u" => Ok(InitScheme::XavierUniform),
            "msra-n" => Ok(InitScheme::MsraNormal),
            other => Err(Error::argument(format!(
                "unknown init scheme `{other}` (expected xavier-u or msra-n)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitScheme::XavierUniform => "xavier-u",
            InitScheme::MsraNormal => "msra-n",
        }
    }
}

/// Deterministic per-parameter initializer.
pub struct Initializer {
    rng: ChaCha8Rng,
    scheme: InitScheme,
}

impl Initializer {
    pub fn new(scheme: InitScheme, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            scheme,
        }
    }

    /// Conv kernel `[co, ci, kh, kw]`.
    pub fn conv_kernel<S: Scalar>(
        &mut self,
        co: usize,
        ci: usize,
        kh: usize,
        kw: usize,
    ) -> Tensor<S> {
        let receptive = kh * kw;
        let fan_in = (ci * receptive) as f64;
        let fan_out = (co * receptive) as f64;
        let data: Vec<S> = match self.scheme {
            InitScheme::XavierUniform => {
                let a = (6.0 / (fan_in + fan_out)).sqrt();
                (0..co * ci * receptive)
                    .map(|_| S::from_f64(self.rng.random_range(-a..a)))
                    .collect()
            }
            InitScheme::MsraNormal => {
                let std = (2.0 / fan_in).sqrt();
                (0..co * ci * receptive)
                    .map(|_| S::from_f64(normal_sample(&mut self.rng) * std))
                    .collect()
            }
        };
        Tensor::new(vec![co, ci, kh, kw], data).expect("sized by construction")
    }

    pub fn zeros<S: Scalar>(&mut self, shape: Vec<usize>) -> Tensor<S> {
        Tensor::zeros(shape)
    }

    pub fn ones<S: Scalar>(&mut self, shape: Vec<usize>) -> Tensor<S> {
        Tensor::filled(shape, S::ONE)
    }
}

/// Box-Muller; two uniforms in, one normal out. Enough for initialization.
fn normal_sample(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Weights inserted into a tape as leaves, looked up by name.
pub struct BoundParams {
    ids: BTreeMap<String, NodeId>,
}

impl BoundParams {
    /// Insert every entry of `weights` as a leaf. `trainable` controls
    /// whether non-buffer entries require gradients; buffers never do.
    pub fn bind<S: Scalar>(tape: &mut Tape<S>, weights: &ModelWeights<S>, trainable: bool) -> Self {
        let mut ids = BTreeMap::new();
        for (name, tensor) in weights.iter() {
            let requires = trainable && !ModelWeights::<S>::is_buffer(name);
            let id = tape.leaf(tensor.clone(), requires);
            ids.insert(name.to_string(), id);
        }
        Self { ids }
    }

    pub fn id(&self, name: &str) -> Result<NodeId> {
        self.ids
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Gradients for every bound non-buffer parameter, zero-filled where the
    /// loss did not reach the parameter.
    pub fn collect_grads<S: Scalar>(
        &self,
        weights: &ModelWeights<S>,
        grads: &Gradients<S>,
    ) -> Result<BTreeMap<String, Vec<S>>> {
        let mut out = BTreeMap::new();
        for (name, id) in &self.ids {
            if ModelWeights::<S>::is_buffer(name) {
                continue;
            }
            let tensor = weights.get(name)?;
            let g = match grads.get(*id) {
                Some(g) => g.to_vec(),
                None => vec![S::ZERO; tensor.numel()],
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}
