//! Plain-text key/value configuration files.
//!
//! Run config: one `key = value` pair per line, `#` comments, unknown keys
//! rejected. Every key has a default, so an empty file is the default
//! desk-scale setup. Example:
//!
//! ```text
//! # architecture
//! input_size = 64
//! widths = 32,64,128,256
//! blocks_per_stage = 2
//! hub_policy = per_stage
//! stem_kernel = 7
//! stem_stride = 2
//! stem_pool = true
//! head_hidden = 64
//! classes = 3
//!
//! # training
//! lr = 2e-4
//! epochs = 22
//! batch_size = 64
//! seed = 0
//! val_fraction = 0.1
//! factor = 0.7
//! patience = 5
//! min_lr = 0
//! monitor = val_loss
//! augment = true
//! aug_translation = 0.1
//! aug_rotation_deg = 10
//! aug_hflip_prob = 0.5
//! aug_zoom_lo = 0.9
//! aug_zoom_hi = 1.1
//! aug_intensity = 0.1
//!
//! # explain
//! patch_size = 8
//! patch_stride = 8
//! occlusion = mean
//! selection_fraction = 0.1
//!
//! model_name = cxrnet
//! ```
//!
//! Dataset config for `build-dataset`: `source NAME PATH LABEL[,LABEL...]`
//! directives (paths resolved against the config file's directory) plus
//! `test_fraction = F` and optional `seed = N`.

use crate::error::{PipelineError, Result};
use cxrnet_core::arch::{ArchConfig, HubPolicy};
use cxrnet_core::data::{AugmentationConfig, ClassLabel, SelectionRule};
use cxrnet_core::optim::{PlateauMetric, TrainConfig};
use std::path::{Path, PathBuf};

/// How the occlusion intensity is chosen at explain time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OcclusionValue {
    /// Mean intensity of the image under audit.
    ImageMean,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainSettings {
    pub patch_size: usize,
    pub stride: usize,
    pub occlusion: OcclusionValue,
    pub selection_fraction: f64,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        ExplainSettings {
            patch_size: 8,
            stride: 8,
            occlusion: OcclusionValue::ImageMean,
            selection_fraction: 0.1,
        }
    }
}

/// Union of the architecture, training, and explain settings plus the seed;
/// one file configures a whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub explain: ExplainSettings,
    pub model_name: String,
    /// True when the config enables augmentation (the default).
    pub augment_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            arch: ArchConfig::default(),
            train: TrainConfig::default(),
            explain: ExplainSettings::default(),
            model_name: "cxrnet".to_string(),
            augment_enabled: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        Self::parse(&text).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::format(path, msg),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut aug = AugmentationConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let (key, value) = split_kv(line, lineno)?;
            cfg.apply(key, value, &mut aug)
                .map_err(|msg| PipelineError::Config(format!("line {}: {msg}", lineno + 1)))?;
        }
        aug.seed = cfg.train.seed;
        cfg.train.augment = if cfg.augment_enabled { Some(aug) } else { None };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        self.arch.validate().map_err(PipelineError::Validation)?;
        self.train.validate().map_err(PipelineError::Validation)?;
        if self.explain.patch_size == 0 || self.explain.stride == 0 {
            return Err(PipelineError::Config(
                "patch_size and patch_stride must be positive".into(),
            ));
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str, aug: &mut AugmentationConfig) -> std::result::Result<(), String> {
        match key {
            "input_size" => self.arch.input_size = parse(value, key)?,
            "input_channels" => self.arch.input_channels = parse(value, key)?,
            "classes" => self.arch.classes = parse(value, key)?,
            "stem_kernel" => self.arch.stem_kernel = parse(value, key)?,
            "stem_stride" => self.arch.stem_stride = parse(value, key)?,
            "stem_pool" => self.arch.stem_pool = parse_bool(value, key)?,
            "widths" => {
                self.arch.widths = value
                    .split(',')
                    .map(|w| parse(w.trim(), key))
                    .collect::<std::result::Result<Vec<usize>, String>>()?;
            }
            "blocks_per_stage" => self.arch.blocks_per_stage = parse(value, key)?,
            "hub_policy" => {
                self.arch.hub_policy = match value {
                    "per_stage" => HubPolicy::PerStage,
                    "none" => HubPolicy::None,
                    other => return Err(format!("unknown hub_policy {other:?}")),
                }
            }
            "head_hidden" => self.arch.head_hidden = parse(value, key)?,
            "lr" => self.train.lr = parse(value, key)?,
            "epochs" => self.train.epochs = parse(value, key)?,
            "batch_size" => self.train.batch_size = parse(value, key)?,
            "seed" => self.train.seed = parse(value, key)?,
            "val_fraction" => self.train.val_fraction = parse(value, key)?,
            "factor" => self.train.factor = parse(value, key)?,
            "patience" => self.train.patience = parse(value, key)?,
            "min_lr" => self.train.min_lr = parse(value, key)?,
            "monitor" => {
                self.train.monitor = match value {
                    "val_loss" => PlateauMetric::ValLoss,
                    "val_acc" => PlateauMetric::ValAccuracy,
                    other => return Err(format!("unknown monitor {other:?}")),
                }
            }
            "augment" => self.augment_enabled = parse_bool(value, key)?,
            "aug_translation" => aug.max_translation_frac = parse(value, key)?,
            "aug_rotation_deg" => aug.max_rotation_deg = parse(value, key)?,
            "aug_hflip_prob" => aug.hflip_prob = parse(value, key)?,
            "aug_zoom_lo" => aug.zoom_range.0 = parse(value, key)?,
            "aug_zoom_hi" => aug.zoom_range.1 = parse(value, key)?,
            "aug_intensity" => aug.max_intensity_shift_frac = parse(value, key)?,
            "patch_size" => self.explain.patch_size = parse(value, key)?,
            "patch_stride" => self.explain.stride = parse(value, key)?,
            "occlusion" => {
                self.explain.occlusion = if value == "mean" {
                    OcclusionValue::ImageMean
                } else {
                    OcclusionValue::Fixed(parse(value, key)?)
                }
            }
            "selection_fraction" => self.explain.selection_fraction = parse(value, key)?,
            "model_name" => self.model_name = value.to_string(),
            other => return Err(format!("unknown key {other:?}")),
        }
        Ok(())
    }
}

/// One source repository of a dataset assembly.
#[derive(Debug, Clone)]
pub struct SourceEntry {
    pub name: String,
    pub path: PathBuf,
    pub rule: SelectionRule,
}

/// Parsed `build-dataset` configuration.
#[derive(Debug, Clone)]
pub struct DatasetConfig {
    pub sources: Vec<SourceEntry>,
    pub test_fraction: f64,
    pub seed: u64,
}

impl DatasetConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(PipelineError::io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            PipelineError::Config(msg) => PipelineError::format(path, msg),
            other => other,
        })
    }

    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut sources = Vec::new();
        let mut test_fraction = 0.2;
        let mut seed = 0u64;
        for (lineno, raw) in text.lines().enumerate() {
            let line = strip_comment(raw);
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| PipelineError::Config(format!("line {}: {msg}", lineno + 1));
            if let Some(rest) = line.strip_prefix("source ") {
                let fields: Vec<&str> = rest.split_whitespace().collect();
                if fields.len() != 3 {
                    return Err(err(format!(
                        "source directive needs `source NAME PATH LABELS`, got {line:?}"
                    )));
                }
                let labels = fields[2]
                    .split(',')
                    .map(ClassLabel::parse)
                    .collect::<cxrnet_core::Result<Vec<_>>>()
                    .map_err(|e| err(e.to_string()))?;
                let rule = SelectionRule::new(fields[0], labels).map_err(|e| err(e.to_string()))?;
                sources.push(SourceEntry {
                    name: fields[0].to_string(),
                    path: base_dir.join(fields[1]),
                    rule,
                });
            } else {
                let (key, value) = split_kv(line, lineno)?;
                match key {
                    "test_fraction" => {
                        test_fraction = value
                            .parse()
                            .map_err(|_| err(format!("bad test_fraction {value:?}")))?
                    }
                    "seed" => {
                        seed = value
                            .parse()
                            .map_err(|_| err(format!("bad seed {value:?}")))?
                    }
                    other => return Err(err(format!("unknown key {other:?}"))),
                }
            }
        }
        if sources.is_empty() {
            return Err(PipelineError::Config("no source directives".into()));
        }
        Ok(DatasetConfig {
            sources,
            test_fraction,
            seed,
        })
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => line[..pos].trim(),
        None => line.trim(),
    }
}

fn split_kv(line: &str, lineno: usize) -> Result<(&str, &str)> {
    match line.split_once('=') {
        Some((k, v)) => Ok((k.trim(), v.trim())),
        None => Err(PipelineError::Config(format!(
            "line {}: expected `key = value`, got {line:?}",
            lineno + 1
        ))),
    }
}

fn parse<T: std::str::FromStr>(value: &str, key: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("cannot parse {value:?} for key {key:?}"))
}

fn parse_bool(value: &str, key: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("cannot parse {other:?} as bool for key {key:?}")),
    }
}
