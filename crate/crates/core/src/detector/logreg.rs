//! Standardised logistic regression trained by full-batch gradient descent.

use rand::seq::SliceRandom;

use super::roc::roc_auc;
use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegHyper {
    pub epochs: usize,
    pub lr: f64,
    /// L2 penalty on the weights (not the bias).
    pub l2: f64,
}

impl Default for LogRegHyper {
    fn default() -> Self {
        LogRegHyper {
            epochs: 200,
            lr: 0.1,
            l2: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub means: Vec<f64>,
    /// Population standard deviations; `1` for constant features.
    pub stds: Vec<f64>,
}

impl LogRegModel {
    fn logit(&self, x: &[f64]) -> f64 {
        let dot: f64 = x
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .zip(&self.weights)
            .map(|(((v, m), s), w)| (v - m) / s * w)
            .sum();
        self.bias + dot
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Fits the detector from zero weights. Deterministic.
pub fn train_logreg(rows: &[Vec<f64>], labels: &[bool], hyper: &LogRegHyper) -> Result<LogRegModel> {
    if rows.len() != labels.len() {
        return Err(Error::Shape(format!("{} rows, {} labels", rows.len(), labels.len())));
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.iter().all(|&l| l) || labels.iter().all(|&l| !l) {
        return Err(Error::SingleClass);
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("ragged feature rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("detector features"));
    }
    let n = rows.len() as f64;
    let mut means = vec![0.0; d];
    for r in rows {
        for (m, v) in means.iter_mut().zip(r) {
            *m += v;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut stds = vec![0.0; d];
    for r in rows {
        for ((s, v), m) in stds.iter_mut().zip(r).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in stds.iter_mut() {
        *s = (*s / n).sqrt();
        if !(*s > 1e-12) {
            *s = 1.0;
        }
    }
    let z: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.iter().zip(&means).zip(&stds).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let y: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l))).collect();

    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..hyper.epochs {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (zi, yi) in z.iter().zip(&y) {
            let p = sigmoid(b + zi.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>());
            let e = p - yi;
            gb += e;
            for (g, a) in gw.iter_mut().zip(zi) {
                *g += e * a;
            }
        }
        for (wj, g) in w.iter_mut().zip(&gw) {
            *wj -= hyper.lr * (g / n + hyper.l2 * *wj);
        }
        b -= hyper.lr * gb / n;
    }
    Ok(LogRegModel {
        weights: w,
        bias: b,
        means,
        stds,
    })
}

/// Detector probability that `features` is adversarial.
pub fn logreg_score(model: &LogRegModel, features: &[f64]) -> Result<f64> {
    if features.len() != model.weights.len() {
        return Err(Error::Shape(format!(
            "{} features for a {}-feature model",
            features.len(),
            model.weights.len()
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("detector features"));
    }
    Ok(sigmoid(model.logit(features)))
}

/// Held-out detector scores from grouped k-fold cross-validation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    /// Mean of the per-fold AUCs.
    pub mean_auc: f64,
    pub fold_aucs: Vec<f64>,
    /// Every row's score from the model that did not see it.
    pub out_of_fold: Vec<f64>,
}

/// Mean held-out AUC over `folds` folds. Rows sharing a group id (the
/// clean, noisy and adversarial views of one source image) always land in
/// the same fold; the group-to-fold assignment is a seeded shuffle.
pub fn cross_validated_auc(
    rows: &[Vec<f64>],
    labels: &[bool],
    groups: &[usize],
    folds: usize,
    seed: u64,
    hyper: &LogRegHyper,
) -> Result<f64> {
    Ok(cross_validated_scores(rows, labels, groups, folds, seed, hyper)?.mean_auc)
}

/// [`cross_validated_auc`] with per-fold AUCs and out-of-fold scores.
pub fn cross_validated_scores(
    rows: &[Vec<f64>],
    labels: &[bool],
    groups: &[usize],
    folds: usize,
    seed: u64,
    hyper: &LogRegHyper,
) -> Result<CvResult> {
    if groups.len() != rows.len() || labels.len() != rows.len() {
        return Err(Error::Shape("one label and group id per row is required".into()));
    }
    let mut ids: Vec<usize> = groups.to_vec();
    ids.sort_unstable();
    ids.dedup();
    if folds < 2 || ids.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{folds} folds need at least {folds} groups, have {}",
            ids.len()
        )));
    }
    ids.shuffle(&mut stream(seed, "cv-folds", 0));
    let fold_of: std::collections::HashMap<usize, usize> =
        ids.iter().enumerate().map(|(pos, &g)| (g, pos % folds)).collect();

    let mut out_of_fold = vec![0.0; rows.len()];
    let mut fold_aucs = Vec::with_capacity(folds);
    for f in 0..folds {
        let (mut tr_x, mut tr_y, mut held) = (vec![], vec![], vec![]);
        for (i, g) in groups.iter().enumerate() {
            if fold_of[g] == f {
                held.push(i);
            } else {
                tr_x.push(rows[i].clone());
                tr_y.push(labels[i]);
            }
        }
        let model = train_logreg(&tr_x, &tr_y, hyper)?;
        let mut scores = Vec::with_capacity(held.len());
        for &i in &held {
            let s = logreg_score(&model, &rows[i])?;
            out_of_fold[i] = s;
            scores.push(s);
        }
        let te_y: Vec<bool> = held.iter().map(|&i| labels[i]).collect();
        fold_aucs.push(roc_auc(&scores, &te_y)?.auc);
    }
    Ok(CvResult {
        mean_auc: fold_aucs.iter().sum::<f64>() / folds as f64,
        fold_aucs,
        out_of_fold,
    })
}
