//! Rank-one projection network: two convolutional branches pool to a column
//! and a row vector whose outer product is the projected image. Every output
//! channel plane has matrix rank at most one by construction.

use crate::error::{Error, Result};
use crate::params::{BoundParams, Initializer, ModelWeights};
use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::Tensor;

/// Kernel count of the wide conv in each basic block at full size.
pub const DEFAULT_WIDE: usize = 256;
/// Kernel count of the narrow conv in each basic block at full size.
pub const DEFAULT_NARROW: usize = 64;
pub const DEFAULT_BLOCKS: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RopConfig {
    pub channels_wide: usize,
    pub channels_narrow: usize,
    pub out_channels: usize,
    pub cblock_kernel: (usize, usize),
    pub rblock_kernel: (usize, usize),
    pub blocks_per_branch: usize,
}

impl RopConfig {
    pub fn color() -> Self {
        Self {
            channels_wide: DEFAULT_WIDE,
            channels_narrow: DEFAULT_NARROW,
            out_channels: 3,
            cblock_kernel: (1, 3),
            rblock_kernel: (3, 1),
            blocks_per_branch: DEFAULT_BLOCKS,
        }
    }

    pub fn gray() -> Self {
        Self {
            out_channels: 1,
            ..Self::color()
        }
    }

    pub fn with_widths(mut self, wide: usize, narrow: usize) -> Self {
        self.channels_wide = wide;
        self.channels_narrow = narrow;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !matches!(self.out_channels, 1 | 3) {
            return Err(Error::config(format!(
                "ROP out_channels must be 1 or 3, got {}",
                self.out_channels
            )));
        }
        if self.blocks_per_branch == 0 {
            return Err(Error::config("ROP needs at least one basic block"));
        }
        if self.channels_wide == 0 || self.channels_narrow == 0 {
            return Err(Error::config("ROP channel widths must be positive"));
        }
        Ok(())
    }
}

fn conv_names(prefix: &str) -> (String, String) {
    (format!("{prefix}.weight"), format!("{prefix}.bias"))
}

fn init_conv<S: Scalar>(
    weights: &mut ModelWeights<S>,
    init: &mut Initializer,
    prefix: &str,
    co: usize,
    ci: usize,
    kh: usize,
    kw: usize,
) -> Result<()> {
    let (w, b) = conv_names(prefix);
    weights.insert(w, init.conv_kernel(co, ci, kh, kw))?;
    weights.insert(b, Tensor::zeros(vec![co]))?;
    Ok(())
}

fn branch_block_prefix(prefix: &str, branch: &str, i: usize) -> String {
    format!("{prefix}.{branch}.b{i}")
}

/// Insert one ROP unit's parameters under `prefix`.
pub fn init_into<S: Scalar>(
    weights: &mut ModelWeights<S>,
    init: &mut Initializer,
    prefix: &str,
    cfg: &RopConfig,
) -> Result<()> {
    cfg.validate()?;
    for (branch, (kh, kw)) in [("cblock", cfg.cblock_kernel), ("rblock", cfg.rblock_kernel)] {
        let mut in_ch = cfg.out_channels;
        for i in 0..cfg.blocks_per_branch {
            let bp = branch_block_prefix(prefix, branch, i);
            init_conv(
                weights,
                init,
                &format!("{bp}.conv1"),
                cfg.channels_wide,
                in_ch,
                kh,
                kw,
            )?;
            init_conv(
                weights,
                init,
                &format!("{bp}.conv2"),
                cfg.channels_narrow,
                cfg.channels_wide,
                kh,
                kw,
            )?;
            in_ch = cfg.channels_narrow;
        }
        // Final projection back to image channels before pooling.
        init_conv(
            weights,
            init,
            &format!("{prefix}.{branch}.proj"),
            cfg.out_channels,
            cfg.channels_narrow,
            3,
            3,
        )?;
    }
    Ok(())
}

fn conv<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    let (w, b) = conv_names(prefix);
    tape.conv2d(x, params.id(&w)?, params.id(&b)?, None)
}

fn branch<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    branch_name: &str,
    cfg: &RopConfig,
    x: NodeId,
) -> Result<NodeId> {
    let mut h = x;
    for i in 0..cfg.blocks_per_branch {
        let bp = branch_block_prefix(prefix, branch_name, i);
        h = conv(tape, params, &format!("{bp}.conv1"), h)?;
        h = tape.relu(h);
        h = conv(tape, params, &format!("{bp}.conv2"), h)?;
    }
    conv(tape, params, &format!("{prefix}.{branch_name}.proj"), h)
}

/// Project `x` to a same-shaped tensor whose channel planes are rank-one.
pub fn forward<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    cfg: &RopConfig,
    x: NodeId,
) -> Result<NodeId> {
    let (_, c, _, _) = tape.value(x).dims4()?;
    if c != cfg.out_channels {
        return Err(Error::shape(format!(
            "ROP configured for {} channels, input has {c}",
            cfg.out_channels
        )));
    }
    let col_feat = branch(tape, params, prefix, "cblock", cfg, x)?;
    let col = tape.avg_pool_to_column(col_feat)?;
    let row_feat = branch(tape, params, prefix, "rblock", cfg, x)?;
    let row = tape.avg_pool_to_row(row_feat)?;
    tape.outer_product(col, row)
}
