//! Five-feature detection samples, the logistic-regression detector and
//! ROC-AUC evaluation.

mod logreg;
mod roc;

use std::fmt;
use std::str::FromStr;

use crate::attacks::{self, AttackConfig, AttackKind, AttackOutcome};
use crate::closeness::closeness_scores;
use crate::data::{gaussian_noisify, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Network};
use crate::rng::{derive_seed, stream};
use crate::tensor::Tensor;
use crate::uncertainty::estimate_batch;

pub use logreg::{cross_validated_auc, cross_validated_scores, CvResult, logreg_score, train_logreg, LogRegHyper, LogRegModel};
pub use roc::{roc_auc, RocCurve};

pub const FEATURE_COUNT: usize = 5;
/// Column names, in feature order.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = ["epi", "ale", "sci", "ent", "close"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Origin {
    Clean,
    Noisy,
    Adversarial,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Clean => "clean",
            Origin::Noisy => "noisy",
            Origin::Adversarial => "adversarial",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Origin::Clean, Origin::Noisy, Origin::Adversarial]
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown origin `{s}`")))
    }
}

/// One detector row: `[epi, ale, sci, ent, close]` plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSample {
    pub sample_id: usize,
    pub origin: Origin,
    pub attack: AttackKind,
    pub eps: f64,
    pub features: [f64; FEATURE_COUNT],
}

impl DetectionSample {
    /// `true` exactly for adversarial rows.
    pub fn label(&self) -> bool {
        self.origin == Origin::Adversarial
    }
}

/// A detection set together with the attack results behind its positives.
#[derive(Debug, Clone)]
pub struct DetectionSet {
    pub samples: Vec<DetectionSample>,
    pub outcomes: Vec<AttackOutcome>,
    /// Test-set indices of the correctly classified samples that were attacked.
    pub survivors: Vec<usize>,
}

impl DetectionSet {
    pub fn attack_success_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|o| o.success).count() as f64 / self.outcomes.len() as f64
    }

    pub fn labels(&self) -> Vec<bool> {
        self.samples.iter().map(DetectionSample::label).collect()
    }

    pub fn feature_rows(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.features.to_vec()).collect()
    }

    /// Source sample of every row, for grouped cross-validation.
    pub fn groups(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.sample_id).collect()
    }

    /// One feature column, oriented so larger means more adversarial:
    /// uncertainties as-is, closeness negated.
    pub fn metric_scores(&self, feature: usize) -> Vec<f64> {
        let sign = if feature == 4 { -1.0 } else { 1.0 };
        self.samples.iter().map(|s| sign * s.features[feature]).collect()
    }
}

/// Features of every row of `x`. MC-dropout masks for row `i` come from a
/// stream keyed by `(seed, ids[i])`, so different views of the same source
/// sample share their masks.
pub fn detection_features(
    cnn: &Network,
    mlp: &Checkpoint,
    x: &Tensor,
    t: usize,
    seed: u64,
    ids: &[u64],
) -> Result<Vec<[f64; FEATURE_COUNT]>> {
    let est = estimate_batch(cnn, x, t, derive_seed(seed, "detect-mc", 0), ids)?;
    let inf = cnn.infer(x)?;
    let close = closeness_scores(mlp, &inf.penultimate, &inf.predictions())?;
    Ok(est
        .iter()
        .zip(close)
        .map(|(e, c)| [e.epistemic, e.aleatoric, e.scibilic, e.entropy, c])
        .collect())
}

/// Indices of the first `cap` test samples the CNN classifies correctly.
pub fn correctly_classified(cnn: &Network, test: &LabeledDataset, cap: usize) -> Result<Vec<usize>> {
    let preds = cnn.predict(&test.images)?;
    Ok((0..test.len())
        .filter(|&i| preds[i] == test.labels[i])
        .take(cap)
        .collect())
}

/// Keeps the first `cap` test samples the CNN classifies correctly and
/// emits, for each, a clean row, a Gaussian-noisy row (σ = attack eps) and
/// an attacked row, in that order.
pub fn assemble_detection_set(
    cnn: &Network,
    mlp: &Checkpoint,
    test: &LabeledDataset,
    attack: &AttackConfig,
    t: usize,
    cap: usize,
    seed: u64,
) -> Result<DetectionSet> {
    let survivors = correctly_classified(cnn, test, cap)?;
    if survivors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = test.images.select_rows(&survivors);
    let y: Vec<usize> = survivors.iter().map(|&i| test.labels[i]).collect();
    let ids: Vec<u64> = survivors.iter().map(|&i| i as u64).collect();

    let mut noisy = Tensor::zeros(x.shape());
    for (r, &id) in ids.iter().enumerate() {
        let mut rng = stream(seed, "detect-noise", id);
        let row = Tensor::new(vec![x.row_len()], x.row(r).to_vec())?;
        noisy.row_mut(r).copy_from_slice(gaussian_noisify(&row, attack.eps, &mut rng)?.data());
    }
    let outcomes = attacks::run_attack(cnn, &x, &y, attack, &ids)?;
    let adv = attacks::stack(&outcomes, x.shape())?;

    let blocks = [
        (Origin::Clean, detection_features(cnn, mlp, &x, t, seed, &ids)?),
        (Origin::Noisy, detection_features(cnn, mlp, &noisy, t, seed, &ids)?),
        (Origin::Adversarial, detection_features(cnn, mlp, &adv, t, seed, &ids)?),
    ];
    let mut samples = Vec::with_capacity(3 * survivors.len());
    for (r, &sid) in survivors.iter().enumerate() {
        for (origin, feats) in &blocks {
            samples.push(DetectionSample {
                sample_id: sid,
                origin: *origin,
                attack: attack.kind,
                eps: attack.eps,
                features: feats[r],
            });
        }
    }
    Ok(DetectionSet {
        samples,
        outcomes,
        survivors,
    })
}
