//! Flat `key = value` run configuration.
//!
//! A preset supplies every default; explicit keys override it. Blank lines
//! and `#` comments are ignored, unknown or repeated keys are errors, and an
//! empty value clears an optional path. [`RunConfig::to_config_string`]
//! writes every key, so a manifest parses back to the same configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::augment::{AugmentationKind, AugmentationSpec};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::derive_seed;
use crate::training::{GenTarget, TrainingConfig};

const INIT_TAG: u64 = 0x494e_4954;
const AUG_TAG: u64 = 0x4155_4721;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Desk,
    Full,
}

impl Preset {
    pub fn as_str(self) -> &'static str {
        match self {
            Preset::Desk => "desk",
            Preset::Full => "full",
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Preset::Desk),
            "full" => Ok(Preset::Full),
            _ => Err(Error::Config(format!("unknown preset {s:?} (expected desk or full)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,

    pub enc_layers: usize,
    pub dec_layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub d_proj: usize,
    pub max_src_len: usize,
    pub max_tgt_len: usize,
    pub freeze_layers: usize,

    pub alpha: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
    /// `None` is the identity view.
    pub aug1: Option<AugmentationKind>,
    pub aug1_n: usize,
    pub aug2: Option<AugmentationKind>,
    pub aug2_n: usize,
    pub gen_target: GenTarget,

    pub vocab_max_size: usize,
    pub vocab_min_freq: usize,
    pub max_decode_len: usize,

    pub train_path: Option<PathBuf>,
    pub val_path: Option<PathBuf>,
    pub test_path: Option<PathBuf>,
    pub vocab_path: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let model = match preset {
            Preset::Desk => ModelConfig::desk(0),
            Preset::Full => ModelConfig::full(0),
        };
        let desk = preset == Preset::Desk;
        Self {
            preset,
            seed: 0,
            enc_layers: model.enc_layers,
            dec_layers: model.dec_layers,
            heads: model.heads,
            d_model: model.d_model,
            d_ff: model.d_ff,
            d_proj: model.d_proj,
            max_src_len: model.max_src_len,
            max_tgt_len: model.max_tgt_len,
            freeze_layers: model.freeze_layers,
            alpha: 0.2,
            tau: 0.5,
            batch_size: if desk { 4 } else { 16 },
            epochs: if desk { 30 } else { 5 },
            lr: if desk { 1e-3 } else { 5e-7 },
            clip_norm: 1.0,
            aug1: Some(AugmentationKind::RD),
            aug1_n: if desk { 1 } else { 3 },
            aug2: Some(AugmentationKind::RS),
            aug2_n: if desk { 1 } else { 3 },
            gen_target: GenTarget::Views,
            vocab_max_size: if desk { 5_000 } else { 50_265 },
            vocab_min_freq: 1,
            max_decode_len: model.max_tgt_len,
            train_path: None,
            val_path: None,
            test_path: None,
            vocab_path: None,
            checkpoint: None,
            out_dir: PathBuf::from("out"),
        }
    }

    /// Parses `text` over the defaults of its `preset` key (or `preset`
    /// when given, which takes precedence).
    pub fn parse(text: &str, preset: Option<Preset>) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key = value, got {line:?}", i + 1))
            })?;
            let key = k.trim();
            if entries.iter().any(|(_, e, _): &(usize, &str, &str)| *e == key) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", i + 1)));
            }
            entries.push((i + 1, key, v.trim()));
        }
        let file_preset = entries
            .iter()
            .find(|(_, k, _)| *k == "preset")
            .map(|(_, _, v)| v.parse())
            .transpose()?;
        let mut cfg = Self::preset(preset.or(file_preset).unwrap_or(Preset::Desk));
        for (line, key, value) in entries {
            if key == "preset" {
                continue;
            }
            cfg.set(key, value)
                .map_err(|e| Error::Config(format!("line {line}: {}", strip_prefix(e))))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, preset: Option<Preset>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, preset)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("{key}: cannot parse {v:?}")))
        }
        fn path(v: &str) -> Option<PathBuf> {
            (!v.is_empty()).then(|| PathBuf::from(v))
        }
        fn aug(key: &str, v: &str) -> Result<Option<AugmentationKind>> {
            match v {
                "none" => Ok(None),
                _ => v
                    .parse()
                    .map(Some)
                    .map_err(|_| Error::Config(format!("{key}: unknown augmentation {v:?}"))),
            }
        }
        match key {
            "seed" => self.seed = num(key, value)?,
            "enc_layers" => self.enc_layers = num(key, value)?,
            "dec_layers" => self.dec_layers = num(key, value)?,
            "heads" => self.heads = num(key, value)?,
            "d_model" => self.d_model = num(key, value)?,
            "d_ff" => self.d_ff = num(key, value)?,
            "d_proj" => self.d_proj = num(key, value)?,
            "max_src_len" => self.max_src_len = num(key, value)?,
            "max_tgt_len" => self.max_tgt_len = num(key, value)?,
            "freeze_layers" => self.freeze_layers = num(key, value)?,
            "alpha" => self.alpha = num(key, value)?,
            "tau" => self.tau = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "lr" => self.lr = num(key, value)?,
            "clip_norm" => self.clip_norm = num(key, value)?,
            "aug1" => self.aug1 = aug(key, value)?,
            "aug1_n" => self.aug1_n = num(key, value)?,
            "aug2" => self.aug2 = aug(key, value)?,
            "aug2_n" => self.aug2_n = num(key, value)?,
            "gen_target" => self.gen_target = value.parse()?,
            "vocab_max_size" => self.vocab_max_size = num(key, value)?,
            "vocab_min_freq" => self.vocab_min_freq = num(key, value)?,
            "max_decode_len" => self.max_decode_len = num(key, value)?,
            "train_path" => self.train_path = path(value),
            "val_path" => self.val_path = path(value),
            "test_path" => self.test_path = path(value),
            "vocab_path" => self.vocab_path = path(value),
            "checkpoint" => self.checkpoint = path(value),
            "out_dir" => {
                self.out_dir = path(value).ok_or_else(|| Error::Config("out_dir must not be empty".into()))?
            }
            "preset" => self.preset = value.parse()?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config(NUM_VOCAB_PROBE)
            .validate()
            .map_err(|e| Error::Config(strip_prefix(e)))?;
        self.training_config()?.validate()?;
        if self.vocab_max_size <= crate::tokenizer::NUM_RESERVED {
            return Err(Error::Config(format!(
                "vocab_max_size must exceed {}, got {}",
                crate::tokenizer::NUM_RESERVED,
                self.vocab_max_size
            )));
        }
        if self.vocab_min_freq == 0 {
            return Err(Error::Config("vocab_min_freq must be at least 1".into()));
        }
        if self.max_decode_len == 0 {
            return Err(Error::Config("max_decode_len must be at least 1".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            vocab_size,
            enc_layers: self.enc_layers,
            dec_layers: self.dec_layers,
            heads: self.heads,
            d_model: self.d_model,
            d_ff: self.d_ff,
            d_proj: self.d_proj,
            max_src_len: self.max_src_len,
            max_tgt_len: self.max_tgt_len,
            freeze_layers: self.freeze_layers,
        }
    }

    /// Model initialization seed, derived from `seed`.
    pub fn init_seed(&self) -> u64 {
        derive_seed(self.seed, &[INIT_TAG])
    }

    /// Augmentation seeds are derived from `seed` so that one override
    /// reseeds the whole run.
    pub fn training_config(&self) -> Result<TrainingConfig> {
        let spec = |kind: Option<AugmentationKind>, n: usize, slot: u64| {
            kind.map(|k| {
                AugmentationSpec::new(k, n, derive_seed(self.seed, &[AUG_TAG, slot]))
                    .map_err(|e| Error::Config(format!("aug{slot}_n: {}", strip_prefix(e))))
            })
            .transpose()
        };
        Ok(TrainingConfig {
            alpha: self.alpha,
            tau: self.tau,
            batch_size: self.batch_size,
            epochs: self.epochs,
            lr: self.lr,
            seed: self.seed,
            aug1: spec(self.aug1, self.aug1_n, 1)?,
            aug2: spec(self.aug2, self.aug2_n, 2)?,
            clip_norm: self.clip_norm,
            gen_target: self.gen_target,
        })
    }

    pub fn to_config_string(&self) -> String {
        let aug = |a: Option<AugmentationKind>| a.map_or("none".to_string(), |k| k.to_string());
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let rows: Vec<(&str, String)> = vec![
            ("preset", self.preset.to_string()),
            ("seed", self.seed.to_string()),
            ("enc_layers", self.enc_layers.to_string()),
            ("dec_layers", self.dec_layers.to_string()),
            ("heads", self.heads.to_string()),
            ("d_model", self.d_model.to_string()),
            ("d_ff", self.d_ff.to_string()),
            ("d_proj", self.d_proj.to_string()),
            ("max_src_len", self.max_src_len.to_string()),
            ("max_tgt_len", self.max_tgt_len.to_string()),
            ("freeze_layers", self.freeze_layers.to_string()),
            ("alpha", self.alpha.to_string()),
            ("tau", self.tau.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("lr", self.lr.to_string()),
            ("clip_norm", self.clip_norm.to_string()),
            ("aug1", aug(self.aug1)),
            ("aug1_n", self.aug1_n.to_string()),
            ("aug2", aug(self.aug2)),
            ("aug2_n", self.aug2_n.to_string()),
            ("gen_target", self.gen_target.to_string()),
            ("vocab_max_size", self.vocab_max_size.to_string()),
            ("vocab_min_freq", self.vocab_min_freq.to_string()),
            ("max_decode_len", self.max_decode_len.to_string()),
            ("train_path", path(&self.train_path)),
            ("val_path", path(&self.val_path)),
            ("test_path", path(&self.test_path)),
            ("vocab_path", path(&self.vocab_path)),
            ("checkpoint", path(&self.checkpoint)),
            ("out_dir", self.out_dir.display().to_string()),
        ];
        rows.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

const NUM_VOCAB_PROBE: usize = 64;

/// Message without the variant's display prefix.
fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) | Error::Validation(m) | Error::Contract(m) => m,
        other => other.to_string(),
    }
}
