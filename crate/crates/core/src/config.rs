//! Training configuration and its flat `key = value` text form.

use std::fmt::Write as _;
use std::path::Path;

use crate::augment::{AugmentConfig, Interval};
use crate::bank::DEFAULT_BANK_MOMENTUM;
use crate::error::{Error, Result};
use crate::loss::{DEFAULT_LAMBDA_CT, DEFAULT_TEMPERATURE};
use crate::model::ModelConfig;
use crate::optim::LrSchedule;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Scans per step.
    pub batch_size: usize,
    pub lambda_ct: f64,
    pub temperature: f64,
    pub bank_momentum: f64,
    /// `false` contrasts against the current batch's class means instead of
    /// the momentum bank.
    pub use_memory_bank: bool,
    pub schedule: LrSchedule,
    pub seed: u64,
    pub augment: AugmentConfig,
    /// `false` closes every strong-view gate.
    pub strong_augment: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    /// Desk-scale defaults.
    fn default() -> Self {
        Self {
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 1.4e-4,
            epochs: 20,
            batch_size: 2,
            lambda_ct: DEFAULT_LAMBDA_CT,
            temperature: DEFAULT_TEMPERATURE,
            bank_momentum: DEFAULT_BANK_MOMENTUM,
            use_memory_bank: true,
            schedule: LrSchedule::Constant,
            seed: 0,
            augment: AugmentConfig::default(),
            strong_augment: true,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Full-scale generalization settings: lr 0.24, 50 epochs, batch 4.
    pub fn full_scale() -> Self {
        Self {
            lr: 0.24,
            epochs: 50,
            batch_size: 4,
            ..Self::default()
        }
    }

    /// Supervised oracle settings: lr 0.1 with poly decay, weight decay 1e-4.
    pub fn oracle() -> Self {
        Self {
            lr: 0.1,
            weight_decay: 1.0e-4,
            schedule: LrSchedule::Poly { power: 0.9 },
            ..Self::full_scale()
        }
    }

    /// The CE-only baseline: no contrastive term and no strong view.
    pub fn baseline(&self) -> Self {
        Self {
            lambda_ct: 0.0,
            strong_augment: false,
            ..self.clone()
        }
    }

    /// Augmentation actually used for the strong view.
    pub fn strong_config(&self) -> AugmentConfig {
        if self.strong_augment {
            self.augment.clone()
        } else {
            self.augment.without_strong()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Argument("lr must be non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be at least 1".into()));
        }
        if self.temperature.is_nan() || self.temperature <= 0.0 {
            return Err(Error::Argument("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bank_momentum) {
            return Err(Error::Argument("bank_momentum must lie in [0, 1]".into()));
        }
        self.augment.validate()?;
        self.model.validate()
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Parses `key = value` lines over the defaults; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Format(format!("config line {}: expected `key = value`", lineno + 1))
            })?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Format(format!("config line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Argument(format!("bad value `{v}` for `{key}`")))
        }
        let a = &mut self.augment;
        match key {
            "lr" => self.lr = num(key, value)?,
            "momentum" => self.momentum = num(key, value)?,
            "weight_decay" => self.weight_decay = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "lambda_ct" => self.lambda_ct = num(key, value)?,
            "temperature" | "tau" => self.temperature = num(key, value)?,
            "bank_momentum" => self.bank_momentum = num(key, value)?,
            "use_memory_bank" => self.use_memory_bank = num(key, value)?,
            "schedule" => {
                self.schedule = match value {
                    "constant" => LrSchedule::Constant,
                    "poly" => LrSchedule::Poly { power: 0.9 },
                    _ => return Err(Error::Argument(format!("unknown schedule `{value}`"))),
                }
            }
            "poly_power" => {
                self.schedule = LrSchedule::Poly {
                    power: num(key, value)?,
                }
            }
            "seed" => self.seed = num(key, value)?,
            "strong_augment" => self.strong_augment = num(key, value)?,
            "rotation_min" => a.rotation_deg.lo = num(key, value)?,
            "rotation_max" => a.rotation_deg.hi = num(key, value)?,
            "scale_min" => a.scale.lo = num(key, value)?,
            "scale_max" => a.scale.hi = num(key, value)?,
            "dropout_min" => a.dropout_frac.lo = num(key, value)?,
            "dropout_max" => a.dropout_frac.hi = num(key, value)?,
            "dropout_prob" => a.dropout_prob = num(key, value)?,
            "noise_min" => a.noise_count.0 = num(key, value)?,
            "noise_max" => a.noise_count.1 = num(key, value)?,
            "noise_prob" => a.noise_prob = num(key, value)?,
            "flip_prob" => a.flip_prob = num(key, value)?,
            "jitter_min" => a.jitter.lo = num(key, value)?,
            "jitter_max" => a.jitter.hi = num(key, value)?,
            "jitter_prob" => a.jitter_prob = num(key, value)?,
            "hidden" => {
                self.model.hidden = value
                    .split(',')
                    .map(|w| num(key, w.trim()))
                    .collect::<Result<_>>()?
            }
            "embed_dim" => self.model.embed_dim = num(key, value)?,
            "num_classes" => self.model.num_classes = num(key, value)?,
            "voxel_size" => self.model.voxel_size = num(key, value)?,
            _ => return Err(Error::Argument(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let a = &self.augment;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("lr", self.lr.to_string());
        kv("momentum", self.momentum.to_string());
        kv("weight_decay", self.weight_decay.to_string());
        kv("epochs", self.epochs.to_string());
        kv("batch_size", self.batch_size.to_string());
        kv("lambda_ct", self.lambda_ct.to_string());
        kv("temperature", self.temperature.to_string());
        kv("bank_momentum", self.bank_momentum.to_string());
        kv("use_memory_bank", self.use_memory_bank.to_string());
        match self.schedule {
            LrSchedule::Constant => kv("schedule", "constant".into()),
            LrSchedule::Poly { power } => kv("poly_power", power.to_string()),
        }
        kv("seed", self.seed.to_string());
        kv("strong_augment", self.strong_augment.to_string());
        let iv = |i: &Interval| (i.lo.to_string(), i.hi.to_string());
        let (lo, hi) = iv(&a.rotation_deg);
        kv("rotation_min", lo);
        kv("rotation_max", hi);
        let (lo, hi) = iv(&a.scale);
        kv("scale_min", lo);
        kv("scale_max", hi);
        let (lo, hi) = iv(&a.dropout_frac);
        kv("dropout_min", lo);
        kv("dropout_max", hi);
        kv("dropout_prob", a.dropout_prob.to_string());
        kv("noise_min", a.noise_count.0.to_string());
        kv("noise_max", a.noise_count.1.to_string());
        kv("noise_prob", a.noise_prob.to_string());
        kv("flip_prob", a.flip_prob.to_string());
        let (lo, hi) = iv(&a.jitter);
        kv("jitter_min", lo);
        kv("jitter_max", hi);
        kv("jitter_prob", a.jitter_prob.to_string());
        let hidden: Vec<String> = self.model.hidden.iter().map(usize::to_string).collect();
        kv("hidden", hidden.join(","));
        kv("embed_dim", self.model.embed_dim.to_string());
        kv("num_classes", self.model.num_classes.to_string());
        kv("voxel_size", self.model.voxel_size.to_string());
        s
    }
}
