//! Flat `key = value` run configuration. Every field resolves to a concrete
//! recorded value: the manifest echo contains the whole effective config,
//! never a silent default.

use std::path::Path;

use anyhow::{bail, Context, Result};
use ronet_core::optim::LrSchedule;
use ronet_core::rodec::{RodecConfig, RodecTrainMode};
use ronet_core::ropnet::RopConfig;
use ronet_core::rorec::{LossHyper, RorecConfig, TaskPreset};
use ronet_core::tape::LossAlpha;
use ronet_core::InitScheme;

/// Which command consumes the config; picks the default schedule shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainKind {
    Decomposition,
    Reconstruction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub task: TaskPreset,
    pub seed: u64,
    pub updates: usize,
    pub batch_size: usize,
    pub patch_size: usize,
    pub levels: usize,
    pub lr: f64,
    pub lr_schedule: String,
    pub dec_mode: RodecTrainMode,
    pub init: InitScheme,
    pub joint: bool,
    pub rop_wide: usize,
    pub rop_narrow: usize,
    pub rec_halved: bool,
    pub use_bn: bool,
    pub scale: usize,
    pub lambda: f64,
    pub eta: f64,
    pub alpha: u8,
    pub svd_cache: usize,
}

impl RunConfig {
    pub fn parse_file(path: &Path, kind: TrainKind) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text, kind).with_context(|| format!("in config {}", path.display()))
    }

    pub fn parse(text: &str, kind: TrainKind) -> Result<Self> {
        let mut task = None;
        let mut seed = None;
        let mut updates = None;
        let mut batch_size = None;
        let mut patch_size = None;
        let mut levels = None;
        let mut lr = None;
        let mut lr_schedule = None;
        let mut dec_mode = None;
        let mut init = None;
        let mut joint = None;
        let mut rop_wide = None;
        let mut rop_narrow = None;
        let mut rec_halved = None;
        let mut use_bn = None;
        let mut scale = None;
        let mut lambda = None;
        let mut eta = None;
        let mut alpha = None;
        let mut svd_cache = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected `key = value`, got `{raw}`", lineno + 1);
            };
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("line {}: key `{key}`", lineno + 1);
            match key {
                "task" => task = Some(TaskPreset::parse(value).with_context(ctx)?),
                "seed" => seed = Some(value.parse::<u64>().with_context(ctx)?),
                "updates" => updates = Some(value.parse::<usize>().with_context(ctx)?),
                "batch_size" => batch_size = Some(value.parse::<usize>().with_context(ctx)?),
                "patch_size" => patch_size = Some(value.parse::<usize>().with_context(ctx)?),
                "levels" => levels = Some(value.parse::<usize>().with_context(ctx)?),
                "lr" => lr = Some(value.parse::<f64>().with_context(ctx)?),
                "lr_schedule" => {
                    if !matches!(value, "constant" | "drop-late" | "halve-every") {
                        bail!("{}: unknown schedule `{value}`", ctx());
                    }
                    lr_schedule = Some(value.to_string());
                }
                "dec_mode" => {
                    dec_mode = Some(match value {
                        "unsupervised" => RodecTrainMode::Unsupervised,
                        "supervised" => RodecTrainMode::Supervised,
                        other => bail!("{}: unknown mode `{other}`", ctx()),
                    })
                }
                "init" => init = Some(InitScheme::parse(value).with_context(ctx)?),
                "joint" => joint = Some(value.parse::<bool>().with_context(ctx)?),
                "rop_wide" => rop_wide = Some(value.parse::<usize>().with_context(ctx)?),
                "rop_narrow" => rop_narrow = Some(value.parse::<usize>().with_context(ctx)?),
                "rec_halved" => rec_halved = Some(value.parse::<bool>().with_context(ctx)?),
                "use_bn" => use_bn = Some(value.parse::<bool>().with_context(ctx)?),
                "scale" => scale = Some(value.parse::<usize>().with_context(ctx)?),
                "lambda" => lambda = Some(value.parse::<f64>().with_context(ctx)?),
                "eta" => eta = Some(value.parse::<f64>().with_context(ctx)?),
                "alpha" => alpha = Some(value.parse::<u8>().with_context(ctx)?),
                "svd_cache" => svd_cache = Some(value.parse::<usize>().with_context(ctx)?),
                other => bail!("line {}: unknown key `{other}`", lineno + 1),
            }
        }

        let Some(task) = task else {
            bail!("config is missing the required `task` key");
        };
        let preset_hyper = task.hyper();
        let cfg = Self {
            task,
            seed: seed.unwrap_or(0),
            updates: updates.unwrap_or(1000),
            batch_size: batch_size.unwrap_or(16),
            patch_size: patch_size.unwrap_or(64),
            levels: levels.unwrap_or_else(|| task.default_levels()),
            lr: lr.unwrap_or(1e-4),
            lr_schedule: lr_schedule.unwrap_or_else(|| {
                match kind {
                    TrainKind::Decomposition => "drop-late",
                    TrainKind::Reconstruction => "halve-every",
                }
                .to_string()
            }),
            dec_mode: dec_mode.unwrap_or(RodecTrainMode::Unsupervised),
            init: init.unwrap_or(InitScheme::XavierUniform),
            joint: joint.unwrap_or(false),
            rop_wide: rop_wide.unwrap_or(ronet_core::ropnet::DEFAULT_WIDE),
            rop_narrow: rop_narrow.unwrap_or(ronet_core::ropnet::DEFAULT_NARROW),
            rec_halved: rec_halved.unwrap_or(false),
            use_bn: use_bn.unwrap_or(true),
            scale: scale.unwrap_or_else(|| task.rorec_config(task.default_levels()).scale),
            lambda: lambda.unwrap_or(preset_hyper.lambda),
            eta: eta.unwrap_or(preset_hyper.eta),
            alpha: alpha.unwrap_or(preset_hyper.alpha.as_u8()),
            svd_cache: svd_cache.unwrap_or(4096),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.updates == 0 {
            bail!("updates must be positive");
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            bail!("lambda must be in [0, 1], got {}", self.lambda);
        }
        LossAlpha::from_u8(self.alpha)?;
        if !matches!(self.scale, 1 | 2 | 4) {
            bail!("scale must be 1, 2 or 4, got {}", self.scale);
        }
        Ok(())
    }

    pub fn rop_config(&self) -> RopConfig {
        let base = if self.task.image_channels() == 1 {
            RopConfig::gray()
        } else {
            RopConfig::color()
        };
        base.with_widths(self.rop_wide, self.rop_narrow)
    }

    pub fn rodec_config(&self) -> Result<RodecConfig> {
        Ok(RodecConfig::new(self.levels, self.rop_config())?)
    }

    pub fn rorec_config(&self) -> RorecConfig {
        let mut cfg = self.task.rorec_config(self.levels);
        cfg.scale = self.scale;
        if self.rec_halved {
            cfg = cfg.halved_widths();
        }
        cfg.use_bn = self.use_bn;
        cfg.with_aux = self.lambda > 0.0;
        cfg
    }

    pub fn hyper(&self) -> LossHyper {
        LossHyper {
            lambda: self.lambda,
            eta: self.eta,
            alpha: LossAlpha::from_u8(self.alpha).expect("validated"),
        }
    }

    pub fn schedule(&self) -> LrSchedule {
        match self.lr_schedule.as_str() {
            "constant" => LrSchedule::constant(self.lr),
            "drop-late" => LrSchedule::drop_late(self.lr, self.updates),
            "halve-every" => LrSchedule::halve_periodically(self.lr, self.updates),
            other => unreachable!("validated schedule `{other}`"),
        }
    }

    /// Every resolved field, for the run manifest.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mode = match self.dec_mode {
            RodecTrainMode::Unsupervised => "unsupervised",
            RodecTrainMode::Supervised => "supervised",
        };
        vec![
            ("task".into(), self.task.name().into()),
            ("seed".into(), self.seed.to_string()),
            ("updates".into(), self.updates.to_string()),
            ("batch_size".into(), self.batch_size.to_string()),
            ("patch_size".into(), self.patch_size.to_string()),
            ("levels".into(), self.levels.to_string()),
            ("lr".into(), format!("{}", self.lr)),
            ("lr_schedule".into(), self.lr_schedule.clone()),
            ("dec_mode".into(), mode.into()),
            ("init".into(), self.init.name().into()),
            ("joint".into(), self.joint.to_string()),
            ("rop_wide".into(), self.rop_wide.to_string()),
            ("rop_narrow".into(), self.rop_narrow.to_string()),
            ("rec_halved".into(), self.rec_halved.to_string()),
            ("use_bn".into(), self.use_bn.to_string()),
            ("scale".into(), self.scale.to_string()),
            ("lambda".into(), format!("{}", self.lambda)),
            ("eta".into(), format!("{}", self.eta)),
            ("alpha".into(), self.alpha.to_string()),
            ("svd_cache".into(), self.svd_cache.to_string()),
        ]
    }
}
