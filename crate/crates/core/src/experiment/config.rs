//! Flat `key = value` experiment configuration.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::attacks::{AttackConfig, AttackKind, CwConfig};
use crate::data::DatasetId;
use crate::detector::LogRegHyper;
use crate::error::{Error, Result};
use crate::nn::TrainHyper;

/// Every free parameter of an experiment run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dataset: DatasetId,
    pub data_dir: PathBuf,
    pub out_dir: PathBuf,
    pub seed: u64,

    pub cnn_epochs: usize,
    pub cnn_batch: usize,
    pub cnn_lr: f64,
    /// Use only the first `n` training images; `None` = all.
    pub train_cap: Option<usize>,

    pub mlp_epochs: usize,
    pub mlp_batch: usize,
    pub mlp_lr: f64,
    pub closeness_eps: f64,
    pub closeness_cap: Option<usize>,

    pub attacks: Vec<AttackKind>,
    pub eps: Vec<f64>,
    /// Correctly classified test samples attacked per (attack, eps) cell.
    pub cap: usize,
    pub mc_samples: usize,
    pub folds: usize,

    pub alpha_fraction: f64,
    pub bim_iters: usize,
    pub pgd_iters: usize,
    pub deepfool_iters: usize,
    pub deepfool_overshoot: f64,
    pub cw_binary_steps: usize,
    pub cw_inner_steps: usize,
    pub cw_initial_c: f64,
    pub cw_confidence: f64,
    pub cw_lr: f64,

    pub lr_epochs: usize,
    pub lr_lr: f64,
    pub lr_l2: f64,

    pub sweep_attack: AttackKind,
    pub sweep_eps: Vec<f64>,
}

impl ExperimentConfig {
    /// Per-dataset defaults.
    pub fn defaults(dataset: DatasetId) -> Self {
        let (cnn_epochs, cnn_batch, mlp_epochs, eps, closeness_eps, sweep_eps) = match dataset {
            DatasetId::MnistDigit => (
                10,
                64,
                50,
                vec![0.12, 0.3],
                0.2,
                vec![0.05, 0.1, 0.15, 0.2, 0.25, 0.3],
            ),
            DatasetId::MnistFashion => (
                10,
                64,
                50,
                vec![0.03, 0.12],
                0.07,
                vec![0.01, 0.03, 0.05, 0.08, 0.12, 0.16],
            ),
            DatasetId::Cifar10 => (
                50,
                128,
                150,
                vec![0.02, 0.04],
                0.03,
                vec![0.005, 0.01, 0.02, 0.03, 0.04, 0.06],
            ),
        };
        ExperimentConfig {
            dataset,
            data_dir: PathBuf::from("data"),
            out_dir: PathBuf::from("out").join(dataset.as_str()),
            seed: 0,
            cnn_epochs,
            cnn_batch,
            cnn_lr: 0.001,
            train_cap: None,
            mlp_epochs,
            mlp_batch: 128,
            mlp_lr: 0.001,
            closeness_eps,
            closeness_cap: None,
            attacks: AttackKind::ALL.to_vec(),
            eps,
            cap: 1000,
            mc_samples: 50,
            folds: 5,
            alpha_fraction: 0.1,
            bim_iters: 10,
            pgd_iters: 20,
            deepfool_iters: 50,
            deepfool_overshoot: 0.02,
            cw_binary_steps: 5,
            cw_inner_steps: 100,
            cw_initial_c: 1e-2,
            cw_confidence: 0.0,
            cw_lr: 0.1,
            lr_epochs: 200,
            lr_lr: 0.1,
            lr_l2: 1e-4,
            sweep_attack: AttackKind::Bim,
            sweep_eps,
        }
    }

    /// Reads a config file. `dataset` is applied first so that its defaults
    /// underlie every other key.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(None, &pairs)
    }

    /// Defaults for the dataset named in `pairs` (or `base`'s dataset, or
    /// MNIST Digit), then every pair applied in order. A dataset change
    /// without a base resets all dataset-dependent defaults.
    pub fn from_pairs(base: Option<ExperimentConfig>, pairs: &[(String, String)]) -> Result<Self> {
        let named = pairs
            .iter()
            .rev()
            .find(|(k, _)| k == "dataset")
            .map(|(_, v)| v.parse::<DatasetId>().map_err(|e| Error::Config(e.to_string())))
            .transpose()?;
        let mut cfg = match (base, named) {
            (Some(b), _) => b,
            (None, Some(d)) => Self::defaults(d),
            (None, None) => Self::defaults(DatasetId::MnistDigit),
        };
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("`{key}`: invalid {what} `{value}`"));
        let uint = || value.parse::<usize>().map_err(|_| bad("integer"));
        let float = || value.parse::<f64>().map_err(|_| bad("number"));
        let cap = || -> Result<Option<usize>> {
            if value == "none" {
                Ok(None)
            } else {
                Ok(Some(value.parse::<usize>().map_err(|_| bad("integer or `none`"))?))
            }
        };
        let floats = || -> Result<Vec<f64>> {
            if value.is_empty() {
                return Ok(Vec::new());
            }
            value
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| bad("number list")))
                .collect()
        };
        match key {
            "dataset" => self.dataset = value.parse().map_err(|_| bad("dataset"))?,
            "data_dir" => self.data_dir = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "cnn_epochs" => self.cnn_epochs = uint()?,
            "cnn_batch" => self.cnn_batch = uint()?,
            "cnn_lr" => self.cnn_lr = float()?,
            "train_cap" => self.train_cap = cap()?,
            "mlp_epochs" => self.mlp_epochs = uint()?,
            "mlp_batch" => self.mlp_batch = uint()?,
            "mlp_lr" => self.mlp_lr = float()?,
            "closeness_eps" => self.closeness_eps = float()?,
            "closeness_cap" => self.closeness_cap = cap()?,
            "attacks" => {
                self.attacks = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse().map_err(|_| bad("attack list")))
                    .collect::<Result<_>>()?
            }
            "eps" => self.eps = floats()?,
            "cap" => self.cap = uint()?,
            "mc_samples" => self.mc_samples = uint()?,
            "folds" => self.folds = uint()?,
            "alpha_fraction" => self.alpha_fraction = float()?,
            "bim_iters" => self.bim_iters = uint()?,
            "pgd_iters" => self.pgd_iters = uint()?,
            "deepfool_iters" => self.deepfool_iters = uint()?,
            "deepfool_overshoot" => self.deepfool_overshoot = float()?,
            "cw_binary_steps" => self.cw_binary_steps = uint()?,
            "cw_inner_steps" => self.cw_inner_steps = uint()?,
            "cw_initial_c" => self.cw_initial_c = float()?,
            "cw_confidence" => self.cw_confidence = float()?,
            "cw_lr" => self.cw_lr = float()?,
            "lr_epochs" => self.lr_epochs = uint()?,
            "lr_lr" => self.lr_lr = float()?,
            "lr_l2" => self.lr_l2 = float()?,
            "sweep_attack" => self.sweep_attack = value.parse().map_err(|_| bad("attack"))?,
            "sweep_eps" => self.sweep_eps = floats()?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.eps.iter().chain(&self.sweep_eps).any(|e| !(*e >= 0.0) || !e.is_finite()) {
            return err("every eps must be finite and >= 0");
        }
        if !(self.closeness_eps >= 0.0) {
            return err("closeness_eps must be >= 0");
        }
        if self.cap == 0 || self.train_cap == Some(0) || self.closeness_cap == Some(0) {
            return err("sample caps must be >= 1");
        }
        if self.mc_samples == 0 {
            return err("mc_samples must be >= 1");
        }
        if self.folds < 2 {
            return err("folds must be >= 2");
        }
        if self.cnn_batch == 0 || self.mlp_batch == 0 {
            return err("batch sizes must be >= 1");
        }
        if self.bim_iters == 0 || self.pgd_iters == 0 || self.deepfool_iters == 0 {
            return err("iteration counts must be >= 1");
        }
        if !(self.alpha_fraction > 0.0) {
            return err("alpha_fraction must be > 0");
        }
        Ok(())
    }

    /// Canonical text form; `parse(render())` reproduces the config.
    pub fn render(&self) -> String {
        let list = |v: &[f64]| v.iter().map(|e| format!("{e:?}")).collect::<Vec<_>>().join(",");
        let cap = |c: Option<usize>| c.map_or("none".to_string(), |n| n.to_string());
        let attacks = self.attacks.iter().map(|a| a.as_str()).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("dataset", self.dataset.to_string());
        kv("data_dir", self.data_dir.display().to_string());
        kv("out_dir", self.out_dir.display().to_string());
        kv("seed", self.seed.to_string());
        kv("cnn_epochs", self.cnn_epochs.to_string());
        kv("cnn_batch", self.cnn_batch.to_string());
        kv("cnn_lr", format!("{:?}", self.cnn_lr));
        kv("train_cap", cap(self.train_cap));
        kv("mlp_epochs", self.mlp_epochs.to_string());
        kv("mlp_batch", self.mlp_batch.to_string());
        kv("mlp_lr", format!("{:?}", self.mlp_lr));
        kv("closeness_eps", format!("{:?}", self.closeness_eps));
        kv("closeness_cap", cap(self.closeness_cap));
        kv("attacks", attacks);
        kv("eps", list(&self.eps));
        kv("cap", self.cap.to_string());
        kv("mc_samples", self.mc_samples.to_string());
        kv("folds", self.folds.to_string());
        kv("alpha_fraction", format!("{:?}", self.alpha_fraction));
        kv("bim_iters", self.bim_iters.to_string());
        kv("pgd_iters", self.pgd_iters.to_string());
        kv("deepfool_iters", self.deepfool_iters.to_string());
        kv("deepfool_overshoot", format!("{:?}", self.deepfool_overshoot));
        kv("cw_binary_steps", self.cw_binary_steps.to_string());
        kv("cw_inner_steps", self.cw_inner_steps.to_string());
        kv("cw_initial_c", format!("{:?}", self.cw_initial_c));
        kv("cw_confidence", format!("{:?}", self.cw_confidence));
        kv("cw_lr", format!("{:?}", self.cw_lr));
        kv("lr_epochs", self.lr_epochs.to_string());
        kv("lr_lr", format!("{:?}", self.lr_lr));
        kv("lr_l2", format!("{:?}", self.lr_l2));
        kv("sweep_attack", self.sweep_attack.to_string());
        kv("sweep_eps", list(&self.sweep_eps));
        s
    }

    /// CRC-32 of the rendered config without `out_dir`, as 8 hex digits.
    pub fn hash(&self) -> String {
        let text: String = self
            .render()
            .lines()
            .filter(|l| !l.starts_with("out_dir "))
            .map(|l| format!("{l}\n"))
            .collect();
        format!("{:08x}", crc32fast::hash(text.as_bytes()))
    }

    pub fn cnn_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.cnn_epochs,
            batch_size: self.cnn_batch,
            lr: self.cnn_lr,
            seed: crate::rng::derive_seed(self.seed, "cnn", 0),
        }
    }

    pub fn mlp_hyper(&self) -> TrainHyper {
        TrainHyper {
            epochs: self.mlp_epochs,
            batch_size: self.mlp_batch,
            lr: self.mlp_lr,
            seed: crate::rng::derive_seed(self.seed, "mlp", 0),
        }
    }

    pub fn logreg_hyper(&self) -> LogRegHyper {
        LogRegHyper {
            epochs: self.lr_epochs,
            lr: self.lr_lr,
            l2: self.lr_l2,
        }
    }

    /// The attack parameters for one (attack, eps) cell.
    pub fn attack_config(&self, kind: AttackKind, eps: f64) -> AttackConfig {
        let mut a = AttackConfig::new(kind, eps, crate::rng::derive_seed(self.seed, "attack", 0));
        a.alpha = eps * self.alpha_fraction;
        a.iters = match kind {
            AttackKind::Pgd => self.pgd_iters,
            AttackKind::DeepFool => self.deepfool_iters,
            _ => self.bim_iters,
        };
        a.overshoot = self.deepfool_overshoot;
        a.cw = CwConfig {
            binary_steps: self.cw_binary_steps,
            inner_steps: self.cw_inner_steps,
            initial_c: self.cw_initial_c,
            confidence: self.cw_confidence,
            lr: self.cw_lr,
            ..CwConfig::default()
        };
        a
    }
}
