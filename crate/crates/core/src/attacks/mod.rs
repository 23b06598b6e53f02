//! Adversarial attacks against a deterministic (dropout off) network.
//!
//! Every attack works on a batch `[N, ...]` and returns one [`AttackOutcome`]
//! per row. Rows never interact, so results do not depend on how a caller
//! chunks its data.

mod cw;
mod deepfool;
mod sign;

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::container::Container;
use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::stream;
use crate::tensor::Tensor;

pub use cw::{carlini_wagner, CwConfig};
pub use deepfool::deepfool;
pub use sign::{bim, fgsm, pgd, pgd_with_seeds};

/// Rows processed per batched network call inside [`run_attack`].
pub const ATTACK_CHUNK: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AttackKind {
    Fgsm,
    Bim,
    Pgd,
    DeepFool,
    Cw,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::Fgsm,
        AttackKind::Bim,
        AttackKind::Pgd,
        AttackKind::DeepFool,
        AttackKind::Cw,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Bim => "bim",
            AttackKind::Pgd => "pgd",
            AttackKind::DeepFool => "deepfool",
            AttackKind::Cw => "cw",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown attack `{s}`")))
    }
}

/// Full parameterisation of one attack run.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L-inf budget in pixel units. CW converts it with [`linf_to_l2`].
    pub eps: f64,
    /// Step size for BIM and PGD.
    pub alpha: f64,
    /// Iterations for BIM and PGD, iteration cap for DeepFool.
    pub iters: usize,
    pub overshoot: f64,
    pub cw: CwConfig,
    pub seed: u64,
}

impl AttackConfig {
    /// Defaults: `alpha = eps / 10`; 10 BIM, 20 PGD and 50 DeepFool iterations.
    pub fn new(kind: AttackKind, eps: f64, seed: u64) -> Self {
        let iters = match kind {
            AttackKind::Pgd => 20,
            AttackKind::DeepFool => 50,
            _ => 10,
        };
        AttackConfig {
            kind,
            eps,
            alpha: eps / 10.0,
            iters,
            overshoot: 0.02,
            cw: CwConfig::default(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps >= 0.0) || !self.eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {}", self.eps)));
        }
        let iterative = matches!(self.kind, AttackKind::Bim | AttackKind::Pgd);
        if iterative && !(self.alpha > 0.0 || (self.eps == 0.0 && self.alpha == 0.0)) {
            return Err(Error::InvalidArgument(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be >= 1".into()));
        }
        if !(self.overshoot >= 0.0) {
            return Err(Error::InvalidArgument("overshoot must be >= 0".into()));
        }
        self.cw.validate()
    }
}

/// Result of attacking one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// The adversarial input, shaped like one sample.
    pub x_adv: Tensor,
    /// The deterministic prediction on `x_adv` differs from the label.
    pub success: bool,
    pub iterations_used: usize,
    pub linf: f64,
    pub l2: f64,
}

/// L2 radius matching an L-inf budget on `n` inputs:
/// `eps * sqrt(n) * sqrt(2 / (pi e))`.
pub fn linf_to_l2(eps_inf: f64, n: usize) -> f64 {
    eps_inf * (n as f64).sqrt() * (2.0 / (std::f64::consts::PI * std::f64::consts::E)).sqrt()
}

/// Runs `cfg` over a batch in chunks of [`ATTACK_CHUNK`]. `sample_ids` seed
/// the per-sample random streams (PGD only) so results are independent of
/// batching.
pub fn run_attack(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    cfg: &AttackConfig,
    sample_ids: &[u64],
) -> Result<Vec<AttackOutcome>> {
    cfg.validate()?;
    check_batch(net, x, labels)?;
    if sample_ids.len() != labels.len() {
        return Err(Error::Shape("one sample id per row is required".into()));
    }
    let n = labels.len();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + ATTACK_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let xb = x.select_rows(&idx);
        let yb = &labels[start..end];
        let chunk = match cfg.kind {
            AttackKind::Fgsm => fgsm(net, &xb, yb, cfg.eps)?,
            AttackKind::Bim => bim(net, &xb, yb, cfg.eps, cfg.alpha, cfg.iters)?,
            AttackKind::Pgd => {
                let seeds: Vec<u64> = sample_ids[start..end].to_vec();
                pgd_with_seeds(net, &xb, yb, cfg.eps, cfg.alpha, cfg.iters, cfg.seed, &seeds)?
            }
            AttackKind::DeepFool => {
                let mut o = deepfool(net, &xb, cfg.eps, cfg.overshoot, cfg.iters)?;
                // DeepFool is untargeted; success is judged against the true label.
                let preds = net.predict(&stack(&o, x.shape())?)?;
                for ((o, p), &y) in o.iter_mut().zip(preds).zip(yb) {
                    o.success = p != y;
                }
                o
            }
            AttackKind::Cw => {
                let budget = linf_to_l2(cfg.eps, x.row_len());
                carlini_wagner(net, &xb, yb, budget, &cfg.cw)?
            }
        };
        out.extend(chunk);
        start = end;
    }
    Ok(out)
}

/// Stacks outcome inputs back into a batch shaped like `batch_shape`.
pub fn stack(outcomes: &[AttackOutcome], batch_shape: &[usize]) -> Result<Tensor> {
    Tensor::stack_rows(&batch_shape[1..], outcomes.iter().map(|o| o.x_adv.data()))
}

/// A crafted set: outcomes plus the source index of every row.
#[derive(Debug, Clone)]
pub struct CraftedSet {
    pub kind: AttackKind,
    pub eps: f64,
    pub source_indices: Vec<usize>,
    pub outcomes: Vec<AttackOutcome>,
}

impl CraftedSet {
    pub fn success_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|o| o.success).count() as f64 / self.outcomes.len() as f64
    }

    /// Manifest text: header line, then
    /// `source_index attack eps success linf l2` per sample.
    pub fn manifest(&self) -> String {
        let mut s = String::from("source_index attack eps success linf l2\n");
        for (i, o) in self.source_indices.iter().zip(&self.outcomes) {
            s.push_str(&format!(
                "{} {} {} {} {:.9} {:.9}\n",
                i,
                self.kind,
                self.eps,
                u8::from(o.success),
                o.linf,
                o.l2
            ));
        }
        s
    }

    /// Writes the manifest text and the adversarial inputs as a container.
    pub fn save(&self, manifest_path: &Path, blob_path: &Path, sample_shape: &[usize]) -> Result<()> {
        let mut f = fs::File::create(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
        f.write_all(self.manifest().as_bytes())
            .map_err(|e| Error::io(manifest_path, e))?;
        let mut shape = vec![self.outcomes.len()];
        shape.extend_from_slice(sample_shape);
        let x = stack(&self.outcomes, &shape)?;
        let meta = serde_json::json!({
            "kind": "crafted",
            "attack": self.kind.as_str(),
            "eps": self.eps,
            "source_indices": self.source_indices,
        });
        let mut c = Container::new(meta);
        c.push("x_adv", x);
        c.write(blob_path)
    }
}

pub(crate) fn check_batch(net: &Network, x: &Tensor, labels: &[usize]) -> Result<()> {
    if x.rank() < 1 || x.batch_len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} labels for a batch of shape {:?}",
            labels.len(),
            x.shape()
        )));
    }
    if x.shape()[1..] != net.spec().input_shape[..] {
        return Err(Error::Shape(format!(
            "batch {:?} does not match input shape {:?}",
            x.shape(),
            net.spec().input_shape
        )));
    }
    let k = net.spec().class_count;
    if let Some(&label) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    Ok(())
}

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Clamps `xa` into the L-inf ball of radius `eps` around `x0`, intersected
/// with `[0, 1]`.
pub(crate) fn project_linf(x0: &[f64], xa: &mut [f64], eps: f64) {
    for (a, &o) in xa.iter_mut().zip(x0) {
        let lo = (o - eps).max(0.0);
        let hi = (o + eps).min(1.0);
        *a = a.clamp(lo, hi);
    }
}

/// Builds outcomes from a final adversarial batch and the source batch.
pub(crate) fn outcomes(
    net: &Network,
    x0: &Tensor,
    xa: Tensor,
    labels: &[usize],
    iterations: &[usize],
) -> Result<Vec<AttackOutcome>> {
    let preds = net.predict(&xa)?;
    let sample_shape = &x0.shape()[1..];
    Ok((0..labels.len())
        .map(|i| {
            let (a, o) = (xa.row(i), x0.row(i));
            let linf = a.iter().zip(o).map(|(a, o)| (a - o).abs()).fold(0.0, f64::max);
            let l2 = a.iter().zip(o).map(|(a, o)| (a - o).powi(2)).sum::<f64>().sqrt();
            AttackOutcome {
                x_adv: Tensor::from_parts(sample_shape.to_vec(), a.to_vec()),
                success: preds[i] != labels[i],
                iterations_used: iterations[i],
                linf,
                l2,
            }
        })
        .collect())
}

/// A fresh per-sample stream for PGD random starts.
pub(crate) fn sample_stream(seed: u64, id: u64) -> crate::rng::StreamRng {
    stream(seed, "pgd-start", id)
}
