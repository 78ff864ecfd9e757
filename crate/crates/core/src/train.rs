//! Shared training plumbing: batch providers and progress rows.

use crate::error::Result;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Yields one training batch per update, in a seed-determined order.
pub trait BatchSource<S: Scalar> {
    fn next_batch(&mut self, step: usize) -> Result<Tensor<S>>;
}

impl<S: Scalar, F> BatchSource<S> for F
where
    F: FnMut(usize) -> Result<Tensor<S>>,
{
    fn next_batch(&mut self, step: usize) -> Result<Tensor<S>> {
        self(step)
    }
}

/// Yields `(source, target)` batches for paired training.
pub trait PairSource<S: Scalar> {
    fn next_pair(&mut self, step: usize) -> Result<(Tensor<S>, Tensor<S>)>;
}

impl<S: Scalar, F> PairSource<S> for F
where
    F: FnMut(usize) -> Result<(Tensor<S>, Tensor<S>)>,
{
    fn next_pair(&mut self, step: usize) -> Result<(Tensor<S>, Tensor<S>)> {
        self(step)
    }
}

/// One line of the append-only training log.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub step: usize,
    pub loss: f64,
    pub lr: f64,
    pub wall_ms: f64,
}

impl LossRow {
    pub const CSV_HEADER: &'static str = "step,loss,lr,wall_ms";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.3}",
            self.step, self.loss, self.lr, self.wall_ms
        )
    }
}

/// Where training loops report per-step progress.
pub type ProgressSink<'a> = Option<&'a mut dyn FnMut(&LossRow)>;
