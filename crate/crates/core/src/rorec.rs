//! Reconstruction network: three residual-block branches (components path,
//! residual path, fusion) plus pixel-shuffle upsampling, trained with deep
//! supervision on the branch heads.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::ops::bn::{BnMode, BnStats};
use crate::optim::{Adam, LrSchedule};
use crate::params::{BoundParams, InitScheme, Initializer, ModelWeights};
use crate::rodec::{self, DecompositionNodes, RodecConfig};
use crate::scalar::Scalar;
use crate::tape::{LossAlpha, NodeId, Tape};
use crate::tensor::Tensor;
use crate::train::{LossRow, PairSource, ProgressSink};

pub const DEFAULT_UP_WIDTH: usize = 256;
pub const DEFAULT_AUX_UP_WIDTH: usize = 64;

/// One residual branch: `depth` blocks of `conv(wide) -> BN? -> relu ->
/// conv(narrow)` between an entry and an exit conv, all 3x3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchSpec {
    pub depth: usize,
    pub wide: usize,
    pub narrow: usize,
}

impl BranchSpec {
    pub fn new(depth: usize, wide: usize, narrow: usize) -> Self {
        Self {
            depth,
            wide,
            narrow,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RorecConfig {
    pub ros: BranchSpec,
    pub res: BranchSpec,
    pub fus: BranchSpec,
    /// 1 disables upsampling (denoising); 2 and 4 are shuffle-based.
    pub scale: usize,
    pub use_bn: bool,
    pub residual_scale: f64,
    pub image_channels: usize,
    /// Decomposition level count the components path consumes.
    pub levels: usize,
    pub up_width: usize,
    pub aux_up_width: usize,
    /// Auxiliary branch heads exist (required whenever lambda > 0).
    pub with_aux: bool,
}

impl RorecConfig {
    pub fn validate(&self) -> Result<()> {
        if !matches!(self.scale, 1 | 2 | 4) {
            return Err(Error::config(format!(
                "upsampling scale must be 1, 2 or 4, got {}",
                self.scale
            )));
        }
        for (name, spec) in [("ros", self.ros), ("res", self.res), ("fus", self.fus)] {
            if spec.depth == 0 || spec.wide == 0 || spec.narrow == 0 {
                return Err(Error::config(format!(
                    "branch {name} needs positive depth and widths"
                )));
            }
        }
        if self.scale > 1
            && (!self.up_width.is_multiple_of(4) || !self.aux_up_width.is_multiple_of(4))
        {
            return Err(Error::config(
                "upsampler widths must be divisible by 4 when scale > 1",
            ));
        }
        if self.levels == 0 {
            return Err(Error::config("levels must be positive"));
        }
        if !matches!(self.image_channels, 1 | 3) {
            return Err(Error::config(format!(
                "image_channels must be 1 or 3, got {}",
                self.image_channels
            )));
        }
        Ok(())
    }

    /// Super-resolution preset: RecROs 192/48, RecRes and RecFus 256/64,
    /// depths (3, 6, 3), x4 shuffle upsampling.
    pub fn sr(levels: usize, image_channels: usize) -> Self {
        Self {
            ros: BranchSpec::new(3, 192, 48),
            res: BranchSpec::new(6, 256, 64),
            fus: BranchSpec::new(3, 256, 64),
            scale: 4,
            use_bn: true,
            residual_scale: 1.0,
            image_channels,
            levels,
            up_width: DEFAULT_UP_WIDTH,
            aux_up_width: DEFAULT_AUX_UP_WIDTH,
            with_aux: true,
        }
    }

    /// Denoising preset: RecROs 96/48, RecRes and RecFus 128/64, depths
    /// (3, 6, 3), no upsampling, plain fusion loss.
    pub fn denoise(levels: usize, image_channels: usize) -> Self {
        Self {
            ros: BranchSpec::new(3, 96, 48),
            res: BranchSpec::new(6, 128, 64),
            fus: BranchSpec::new(3, 128, 64),
            scale: 1,
            use_bn: true,
            residual_scale: 1.0,
            image_channels,
            levels,
            up_width: DEFAULT_UP_WIDTH,
            aux_up_width: DEFAULT_AUX_UP_WIDTH,
            with_aux: false,
        }
    }

    /// Halve every branch width; the desk-scale variant used in tests.
    pub fn halved_widths(mut self) -> Self {
        for spec in [&mut self.ros, &mut self.res, &mut self.fus] {
            spec.wide = (spec.wide / 2).max(1);
            spec.narrow = (spec.narrow / 2).max(1);
        }
        self
    }

    fn ros_in_channels(&self) -> usize {
        self.levels * self.image_channels
    }

    fn fus_in_channels(&self) -> usize {
        self.ros.narrow + self.res.narrow
    }

    fn up_stages(&self) -> usize {
        match self.scale {
            4 => 2,
            2 => 1,
            _ => 0,
        }
    }
}

/// Loss hyper-parameters of the combined reconstruction objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossHyper {
    pub lambda: f64,
    pub eta: f64,
    pub alpha: LossAlpha,
}

impl LossHyper {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!(
                "lambda must be in [0, 1], got {}",
                self.lambda
            )));
        }
        if self.eta < 0.0 {
            return Err(Error::config(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// Named task presets selecting widths and loss settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskPreset {
    SrNoiseFree,
    SrRealistic,
    DenoiseGray,
    DenoiseColor,
}

impl TaskPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sr-noisefree" => Ok(TaskPreset::SrNoiseFree),
            "sr-realistic" => Ok(TaskPreset::SrRealistic),
            "denoise-gray" => Ok(TaskPreset::DenoiseGray),
            "denoise-color" => Ok(TaskPreset::DenoiseColor),
            other => Err(Error::config(format!(
                "unknown task preset `{other}` (expected sr-noisefree, sr-realistic, denoise-gray or denoise-color)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TaskPreset::SrNoiseFree => "sr-noisefree",
            TaskPreset::SrRealistic => "sr-realistic",
            TaskPreset::DenoiseGray => "denoise-gray",
            TaskPreset::DenoiseColor => "denoise-color",
        }
    }

    pub fn image_channels(self) -> usize {
        match self {
            TaskPreset::DenoiseGray => 1,
            _ => 3,
        }
    }

    pub fn default_levels(self) -> usize {
        match self {
            TaskPreset::SrNoiseFree | TaskPreset::SrRealistic => 3,
            TaskPreset::DenoiseGray | TaskPreset::DenoiseColor => 1,
        }
    }

    pub fn rorec_config(self, levels: usize) -> RorecConfig {
        match self {
            TaskPreset::SrNoiseFree | TaskPreset::SrRealistic => {
                RorecConfig::sr(levels, self.image_channels())
            }
            TaskPreset::DenoiseGray | TaskPreset::DenoiseColor => {
                RorecConfig::denoise(levels, self.image_channels())
            }
        }
    }

    pub fn hyper(self) -> LossHyper {
        match self {
            TaskPreset::SrNoiseFree | TaskPreset::SrRealistic => LossHyper {
                lambda: 0.5,
                eta: 1e-3,
                alpha: LossAlpha::L1,
            },
            TaskPreset::DenoiseGray | TaskPreset::DenoiseColor => LossHyper {
                lambda: 0.0,
                eta: 0.0,
                alpha: LossAlpha::L2,
            },
        }
    }
}

// ---- batch-norm state ----

/// Running batch-norm statistics for every normalized layer, keyed by the
/// layer's name prefix (`<block>.bn`). Extracted from the weight store before
/// a pass and written back after training.
pub struct BnBank<S: Scalar> {
    map: BTreeMap<String, BnStats<S>>,
}

impl<S: Scalar> BnBank<S> {
    pub fn from_weights(weights: &ModelWeights<S>) -> Self {
        let mut map = BTreeMap::new();
        for (name, tensor) in weights.iter() {
            if let Some(prefix) = name.strip_suffix(".running_mean") {
                let var = weights
                    .get(&format!("{prefix}.running_var"))
                    .expect("paired running_var");
                map.insert(
                    prefix.to_string(),
                    BnStats {
                        mean: tensor.data().to_vec(),
                        var: var.data().to_vec(),
                    },
                );
            }
        }
        Self { map }
    }

    fn stats_mut(&mut self, prefix: &str) -> Result<&mut BnStats<S>> {
        self.map
            .get_mut(prefix)
            .ok_or_else(|| Error::UnknownParam(format!("{prefix}.running_mean")))
    }

    pub fn write_back(&self, weights: &mut ModelWeights<S>) -> Result<()> {
        for (prefix, stats) in &self.map {
            weights.update(
                &format!("{prefix}.running_mean"),
                Tensor::new(vec![stats.mean.len()], stats.mean.clone())?,
            )?;
            weights.update(
                &format!("{prefix}.running_var"),
                Tensor::new(vec![stats.var.len()], stats.var.clone())?,
            )?;
        }
        Ok(())
    }
}

// ---- weight initialization ----

fn init_conv<S: Scalar>(
    weights: &mut ModelWeights<S>,
    init: &mut Initializer,
    prefix: &str,
    co: usize,
    ci: usize,
    kh: usize,
    kw: usize,
) -> Result<()> {
    weights.insert(format!("{prefix}.weight"), init.conv_kernel(co, ci, kh, kw))?;
    weights.insert(format!("{prefix}.bias"), Tensor::zeros(vec![co]))?;
    Ok(())
}

fn init_branch<S: Scalar>(
    weights: &mut ModelWeights<S>,
    init: &mut Initializer,
    prefix: &str,
    spec: BranchSpec,
    in_channels: usize,
    use_bn: bool,
) -> Result<()> {
    init_conv(
        weights,
        init,
        &format!("{prefix}.entry"),
        spec.narrow,
        in_channels,
        3,
        3,
    )?;
    for i in 0..spec.depth {
        let bp = format!("{prefix}.b{i}");
        init_conv(
            weights,
            init,
            &format!("{bp}.conv1"),
            spec.wide,
            spec.narrow,
            3,
            3,
        )?;
        if use_bn {
            weights.insert(
                format!("{bp}.bn.gamma"),
                Tensor::filled(vec![spec.wide], S::ONE),
            )?;
            weights.insert(format!("{bp}.bn.beta"), Tensor::zeros(vec![spec.wide]))?;
            weights.insert(
                format!("{bp}.bn.running_mean"),
                Tensor::zeros(vec![spec.wide]),
            )?;
            weights.insert(
                format!("{bp}.bn.running_var"),
                Tensor::filled(vec![spec.wide], S::ONE),
            )?;
        }
        init_conv(
            weights,
            init,
            &format!("{bp}.conv2"),
            spec.narrow,
            spec.wide,
            3,
            3,
        )?;
    }
    init_conv(
        weights,
        init,
        &format!("{prefix}.exit"),
        spec.narrow,
        spec.narrow,
        3,
        3,
    )?;
    Ok(())
}

fn init_upsampler<S: Scalar>(
    weights: &mut ModelWeights<S>,
    init: &mut Initializer,
    prefix: &str,
    in_channels: usize,
    width: usize,
    stages: usize,
    out_channels: usize,
) -> Result<()> {
    let mut ch = in_channels;
    for s in 0..stages {
        init_conv(
            weights,
            init,
            &format!("{prefix}.stage{s}"),
            width,
            ch,
            3,
            3,
        )?;
        ch = width / 4;
    }
    init_conv(
        weights,
        init,
        &format!("{prefix}.final"),
        out_channels,
        ch,
        9,
        9,
    )?;
    Ok(())
}

/// Fresh reconstruction weights for the given config. The config itself is
/// recoverable from the tensor names and shapes (see [`infer_config`]); the
/// one free hyper-parameter, `residual_scale`, is stored as a tensor.
pub fn init_weights<S: Scalar>(
    cfg: &RorecConfig,
    scheme: InitScheme,
    seed: u64,
) -> Result<ModelWeights<S>> {
    cfg.validate()?;
    let mut weights = ModelWeights::new();
    weights.insert(
        "rec.residual_scale",
        Tensor::scalar(S::from_f64(cfg.residual_scale)),
    )?;
    let mut init = Initializer::new(scheme, seed);
    init_branch(
        &mut weights,
        &mut init,
        "rec.ros",
        cfg.ros,
        cfg.ros_in_channels(),
        cfg.use_bn,
    )?;
    init_branch(
        &mut weights,
        &mut init,
        "rec.res",
        cfg.res,
        cfg.image_channels,
        cfg.use_bn,
    )?;
    init_branch(
        &mut weights,
        &mut init,
        "rec.fus",
        cfg.fus,
        cfg.fus_in_channels(),
        cfg.use_bn,
    )?;
    init_upsampler(
        &mut weights,
        &mut init,
        "rec.fus_up",
        cfg.fus.narrow,
        cfg.up_width,
        cfg.up_stages(),
        cfg.image_channels,
    )?;
    if cfg.with_aux {
        init_upsampler(
            &mut weights,
            &mut init,
            "rec.ros_up",
            cfg.ros.narrow,
            cfg.aux_up_width,
            cfg.up_stages(),
            cfg.image_channels,
        )?;
        init_upsampler(
            &mut weights,
            &mut init,
            "rec.res_up",
            cfg.res.narrow,
            cfg.aux_up_width,
            cfg.up_stages(),
            cfg.image_channels,
        )?;
    }
    Ok(weights)
}

/// Reconstruct the architecture of saved reconstruction weights from tensor
/// names and shapes.
pub fn infer_config<S: Scalar>(weights: &ModelWeights<S>) -> Result<RorecConfig> {
    let branch = |prefix: &str| -> Result<(BranchSpec, usize)> {
        let entry = weights.get(&format!("{prefix}.entry.weight"))?;
        let (narrow, in_channels, _, _) = entry.dims4()?;
        let conv1 = weights.get(&format!("{prefix}.b0.conv1.weight"))?;
        let wide = conv1.shape()[0];
        let mut depth = 0;
        while weights.contains(&format!("{prefix}.b{depth}.conv1.weight")) {
            depth += 1;
        }
        Ok((
            BranchSpec {
                depth,
                wide,
                narrow,
            },
            in_channels,
        ))
    };
    let (ros, ros_in) = branch("rec.ros")?;
    let (res, image_channels) = branch("rec.res")?;
    let (fus, _) = branch("rec.fus")?;
    if ros_in % image_channels != 0 {
        return Err(Error::config(format!(
            "components-path input width {ros_in} not a multiple of {image_channels} channels"
        )));
    }
    let levels = ros_in / image_channels;

    let mut stages = 0;
    while weights.contains(&format!("rec.fus_up.stage{stages}.weight")) {
        stages += 1;
    }
    let scale = 1usize << stages;
    let up_width = if stages > 0 {
        weights.get("rec.fus_up.stage0.weight")?.shape()[0]
    } else {
        DEFAULT_UP_WIDTH
    };
    let with_aux = weights.contains("rec.ros_up.final.weight");
    let aux_up_width = if with_aux && stages > 0 {
        weights.get("rec.ros_up.stage0.weight")?.shape()[0]
    } else {
        DEFAULT_AUX_UP_WIDTH
    };
    let use_bn = weights.contains("rec.ros.b0.bn.gamma");
    let residual_scale = weights
        .get("rec.residual_scale")
        .map(|t| t.data()[0].to_f64())
        .unwrap_or(1.0);

    let cfg = RorecConfig {
        ros,
        res,
        fus,
        scale,
        use_bn,
        residual_scale,
        image_channels,
        levels,
        up_width,
        aux_up_width,
        with_aux,
    };
    cfg.validate()?;
    Ok(cfg)
}

// ---- forward ----

fn conv<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    x: NodeId,
) -> Result<NodeId> {
    tape.conv2d(
        x,
        params.id(&format!("{prefix}.weight"))?,
        params.id(&format!("{prefix}.bias"))?,
        None,
    )
}

/// Entry conv, `depth` residual blocks, exit conv.
#[allow(clippy::too_many_arguments)]
pub fn branch_forward<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    spec: BranchSpec,
    use_bn: bool,
    residual_scale: f64,
    bn: &mut BnBank<S>,
    mode: BnMode,
    x: NodeId,
) -> Result<NodeId> {
    let mut h = conv(tape, params, &format!("{prefix}.entry"), x)?;
    for i in 0..spec.depth {
        let bp = format!("{prefix}.b{i}");
        let mut t = conv(tape, params, &format!("{bp}.conv1"), h)?;
        if use_bn {
            let gamma = params.id(&format!("{bp}.bn.gamma"))?;
            let beta = params.id(&format!("{bp}.bn.beta"))?;
            let stats = bn.stats_mut(&format!("{bp}.bn"))?;
            t = tape.batch_norm(t, gamma, beta, stats, mode)?;
        }
        t = tape.relu(t);
        t = conv(tape, params, &format!("{bp}.conv2"), t)?;
        t = tape.scalar_mul(t, S::from_f64(residual_scale));
        h = tape.add(h, t)?;
    }
    conv(tape, params, &format!("{prefix}.exit"), h)
}

/// Shuffle stages then the final 9x9 conv; at scale 1 only the final conv.
pub fn upsample_forward<S: Scalar>(
    tape: &mut Tape<S>,
    params: &BoundParams,
    prefix: &str,
    stages: usize,
    x: NodeId,
) -> Result<NodeId> {
    let mut h = x;
    for s in 0..stages {
        h = conv(tape, params, &format!("{prefix}.stage{s}"), h)?;
        h = tape.pixel_shuffle(h, 2)?;
    }
    conv(tape, params, &format!("{prefix}.final"), h)
}

/// Every intermediate the loss needs, plus the restored estimate.
#[derive(Debug, Clone)]
pub struct RonetNodes {
    pub estimate: NodeId,
    pub ros_feature: NodeId,
    pub res_feature: NodeId,
    pub source_dec: DecompositionNodes,
}

fn check_compat(dec_cfg: &RodecConfig, rec_cfg: &RorecConfig) -> Result<()> {
    if dec_cfg.levels != rec_cfg.levels {
        return Err(Error::config(format!(
            "decomposition has {} levels but reconstruction expects {}",
            dec_cfg.levels, rec_cfg.levels
        )));
    }
    if dec_cfg.rop.out_channels != rec_cfg.image_channels {
        return Err(Error::config(format!(
            "decomposition is {}-channel but reconstruction expects {}",
            dec_cfg.rop.out_channels, rec_cfg.image_channels
        )));
    }
    Ok(())
}

fn forward_from_decomposition<S: Scalar>(
    tape: &mut Tape<S>,
    rec_params: &BoundParams,
    rec_cfg: &RorecConfig,
    bn: &mut BnBank<S>,
    mode: BnMode,
    dec_nodes: &DecompositionNodes,
) -> Result<RonetNodes> {
    let ros_in = tape.concat_channels(&dec_nodes.components)?;
    let ros_feature = branch_forward(
        tape,
        rec_params,
        "rec.ros",
        rec_cfg.ros,
        rec_cfg.use_bn,
        rec_cfg.residual_scale,
        bn,
        mode,
        ros_in,
    )?;
    let res_feature = branch_forward(
        tape,
        rec_params,
        "rec.res",
        rec_cfg.res,
        rec_cfg.use_bn,
        rec_cfg.residual_scale,
        bn,
        mode,
        dec_nodes.residual(),
    )?;
    let fus_in = tape.concat_channels(&[ros_feature, res_feature])?;
    let fus_feature = branch_forward(
        tape,
        rec_params,
        "rec.fus",
        rec_cfg.fus,
        rec_cfg.use_bn,
        rec_cfg.residual_scale,
        bn,
        mode,
        fus_in,
    )?;
    let estimate = upsample_forward(
        tape,
        rec_params,
        "rec.fus_up",
        rec_cfg.up_stages(),
        fus_feature,
    )?;
    Ok(RonetNodes {
        estimate,
        ros_feature,
        res_feature,
        source_dec: dec_nodes.clone(),
    })
}

/// Full pipeline: decompose the source, reconstruct, fuse, upsample.
#[allow(clippy::too_many_arguments)]
pub fn ronet_forward<S: Scalar>(
    tape: &mut Tape<S>,
    dec_params: &BoundParams,
    dec_cfg: &RodecConfig,
    rec_params: &BoundParams,
    rec_cfg: &RorecConfig,
    bn: &mut BnBank<S>,
    mode: BnMode,
    source: NodeId,
) -> Result<RonetNodes> {
    check_compat(dec_cfg, rec_cfg)?;
    let dec_nodes = rodec::forward(tape, dec_params, dec_cfg, source)?;
    forward_from_decomposition(tape, rec_params, rec_cfg, bn, mode, &dec_nodes)
}

/// Restore one batch with frozen weights in eval mode.
pub fn restore<S: Scalar>(
    dec_weights: &ModelWeights<S>,
    dec_cfg: &RodecConfig,
    rec_weights: &ModelWeights<S>,
    rec_cfg: &RorecConfig,
    source: &Tensor<S>,
) -> Result<Tensor<S>> {
    let mut tape = Tape::new();
    let dec_bound = BoundParams::bind(&mut tape, dec_weights, false);
    let rec_bound = BoundParams::bind(&mut tape, rec_weights, false);
    let mut bn = BnBank::from_weights(rec_weights);
    let src = tape.constant(source.clone());
    let nodes = ronet_forward(
        &mut tape,
        &dec_bound,
        dec_cfg,
        &rec_bound,
        rec_cfg,
        &mut bn,
        BnMode::Eval,
        src,
    )?;
    Ok(tape.value(nodes.estimate).clone())
}

// ---- loss ----

/// The three loss terms and their weighted total.
#[derive(Debug, Clone)]
pub struct RecLoss {
    pub total: NodeId,
    pub fus: NodeId,
    pub ros: Option<NodeId>,
    pub res: Option<NodeId>,
    /// Image-space outputs of the auxiliary branch heads, when present.
    pub ros_head: Option<NodeId>,
    pub res_head: Option<NodeId>,
    pub nodes: RonetNodes,
}

/// Combined reconstruction objective:
/// `lambda * (L_ros + L_res) + (1 - lambda) * L_fus`, where the branch terms
/// compare the upsampled branch heads against the target's own decomposition
/// and the fusion term compares the estimate against the target (plus the
/// optional first-difference surrogate weighted by eta).
#[allow(clippy::too_many_arguments)]
pub fn loss_rec<S: Scalar>(
    tape: &mut Tape<S>,
    dec_params: &BoundParams,
    dec_cfg: &RodecConfig,
    rec_params: &BoundParams,
    rec_cfg: &RorecConfig,
    bn: &mut BnBank<S>,
    mode: BnMode,
    hyper: &LossHyper,
    source: &Tensor<S>,
    target: &Tensor<S>,
) -> Result<RecLoss> {
    hyper.validate()?;
    check_compat(dec_cfg, rec_cfg)?;
    if hyper.lambda > 0.0 && !rec_cfg.with_aux {
        return Err(Error::config(
            "lambda > 0 requires auxiliary upsampler weights (with_aux)",
        ));
    }

    let src = tape.constant(source.clone());
    let dec_nodes = rodec::forward(tape, dec_params, dec_cfg, src)?;
    let nodes = forward_from_decomposition(tape, rec_params, rec_cfg, bn, mode, &dec_nodes)?;

    let tgt = tape.constant(target.clone());
    let fus_norm = tape.loss_norm(nodes.estimate, tgt, hyper.alpha)?;
    let fus = if hyper.eta > 0.0 {
        let per = tape.diff_map_l1(nodes.estimate, tgt)?;
        let per_scaled = tape.scalar_mul(per, S::from_f64(hyper.eta));
        tape.add(fus_norm, per_scaled)?
    } else {
        fus_norm
    };

    let (total, ros, res, ros_head, res_head) = if hyper.lambda > 0.0 {
        // Target-side decomposition through the same frozen weights.
        let tgt_dec = rodec::forward(tape, dec_params, dec_cfg, tgt)?;
        let mut lowrank_sum = tgt_dec.components[0];
        for &c in &tgt_dec.components[1..] {
            lowrank_sum = tape.add(lowrank_sum, c)?;
        }
        let target_lowrank = lowrank_sum;
        let target_residual = tgt_dec.residual();

        let stages = rec_cfg.up_stages();
        let ros_head = upsample_forward(tape, rec_params, "rec.ros_up", stages, nodes.ros_feature)?;
        let res_head = upsample_forward(tape, rec_params, "rec.res_up", stages, nodes.res_feature)?;
        let l_ros = tape.loss_norm(ros_head, target_lowrank, hyper.alpha)?;
        let l_res = tape.loss_norm(res_head, target_residual, hyper.alpha)?;

        let aux_sum = tape.add(l_ros, l_res)?;
        let aux_term = tape.scalar_mul(aux_sum, S::from_f64(hyper.lambda));
        let fus_term = tape.scalar_mul(fus, S::from_f64(1.0 - hyper.lambda));
        let total = tape.add(aux_term, fus_term)?;
        (
            total,
            Some(l_ros),
            Some(l_res),
            Some(ros_head),
            Some(res_head),
        )
    } else {
        let total = tape.scalar_mul(fus, S::from_f64(1.0 - hyper.lambda));
        (total, None, None, None, None)
    };

    Ok(RecLoss {
        total,
        fus,
        ros,
        res,
        ros_head,
        res_head,
        nodes,
    })
}

// ---- training ----

#[derive(Debug, Clone)]
pub struct RorecTrainOptions {
    pub updates: usize,
    pub schedule: LrSchedule,
    pub hyper: LossHyper,
    pub init: InitScheme,
    pub init_seed: u64,
    /// Also optimize the decomposition jointly with its unsupervised term
    /// instead of freezing it. Off by default.
    pub joint: bool,
}

pub struct RorecTrainResult<S: Scalar> {
    pub rec: ModelWeights<S>,
    pub dec: ModelWeights<S>,
}

/// Supervised training of the reconstruction network against paired batches.
/// The decomposition weights stay frozen unless `joint` is set.
pub fn train<S: Scalar>(
    dec_cfg: &RodecConfig,
    dec_weights: &ModelWeights<S>,
    rec_cfg: &RorecConfig,
    opts: &RorecTrainOptions,
    pairs: &mut dyn PairSource<S>,
    mut progress: ProgressSink<'_>,
) -> Result<RorecTrainResult<S>> {
    rec_cfg.validate()?;
    opts.hyper.validate()?;
    check_compat(dec_cfg, rec_cfg)?;
    if opts.updates == 0 {
        return Err(Error::config("training needs at least one update"));
    }

    let mut dec = dec_weights.clone();
    let mut rec = init_weights::<S>(rec_cfg, opts.init, opts.init_seed)?;
    let mut bn = BnBank::from_weights(&rec);
    let mut adam_rec = Adam::new();
    let mut adam_dec = Adam::new();
    let started = Instant::now();

    for step in 0..opts.updates {
        let (source, target) = pairs.next_pair(step)?;
        let mut tape = Tape::new();
        let dec_bound = BoundParams::bind(&mut tape, &dec, opts.joint);
        let rec_bound = BoundParams::bind(&mut tape, &rec, true);
        let loss = loss_rec(
            &mut tape,
            &dec_bound,
            dec_cfg,
            &rec_bound,
            rec_cfg,
            &mut bn,
            BnMode::Train,
            &opts.hyper,
            &source,
            &target,
        )?;
        let total = if opts.joint {
            let unsup = rodec::unsup_loss(&mut tape, &loss.nodes.source_dec)?;
            tape.add(loss.total, unsup)?
        } else {
            loss.total
        };
        let loss_value = tape.value(total).data()[0].to_f64();
        let grads = tape.backward(total)?;
        let lr = opts.schedule.at(step);
        let rec_grads = rec_bound.collect_grads(&rec, &grads)?;
        adam_rec.step(&mut rec, &rec_grads, lr)?;
        if opts.joint {
            let dec_grads = dec_bound.collect_grads(&dec, &grads)?;
            adam_dec.step(&mut dec, &dec_grads, lr)?;
        }
        if let Some(sink) = progress.as_deref_mut() {
            sink(&LossRow {
                step,
                loss: loss_value,
                lr,
                wall_ms: started.elapsed().as_secs_f64() * 1e3,
            });
        }
    }
    bn.write_back(&mut rec)?;
    Ok(RorecTrainResult { rec, dec })
}
