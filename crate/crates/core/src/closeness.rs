//! Feature-space closeness: an MLP trained on the classifier's last hidden
//! layer for clean, noisy and BIM-perturbed inputs, scored at the
//! classifier's predicted class.

use std::path::Path;

use crate::attacks::{self, ATTACK_CHUNK};
use crate::container::Container;
use crate::data::{gaussian_noisify, DatasetId, LabeledDataset};
use crate::error::{Error, Result};
use crate::nn::{build_architecture, softmax, train_classifier, Checkpoint, EpochStats, ModelKind, TrainHyper};
use crate::rng::stream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Clean,
    Noisy,
    Pert,
}

impl Provenance {
    fn code(self) -> f64 {
        match self {
            Provenance::Clean => 0.0,
            Provenance::Noisy => 1.0,
            Provenance::Pert => 2.0,
        }
    }

    fn from_code(c: f64) -> Option<Self> {
        match c as i64 {
            0 => Some(Provenance::Clean),
            1 => Some(Provenance::Noisy),
            2 => Some(Provenance::Pert),
            _ => None,
        }
    }
}

/// Penultimate features of `m` training images in three blocks (clean,
/// noisy, perturbed), every row labelled with its clean image's class.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub provenance: Vec<Provenance>,
    pub eps: f64,
    pub attack: attacks::AttackKind,
}

impl FeatureDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Number of source images `m`.
    pub fn source_len(&self) -> usize {
        self.len() / 3
    }

    pub fn width(&self) -> usize {
        self.features.row_len()
    }

    pub fn to_container(&self) -> Container {
        let meta = serde_json::json!({
            "kind": "features",
            "eps": self.eps,
            "attack": self.attack.as_str(),
        });
        let n = self.len();
        let mut c = Container::new(meta);
        c.push("features", self.features.clone());
        c.push(
            "labels",
            Tensor::from_fn(&[n], |i| self.labels[i] as f64),
        );
        c.push(
            "provenance",
            Tensor::from_fn(&[n], |i| self.provenance[i].code()),
        );
        c
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container().write(path.as_ref())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut c = Container::read(path)?;
        let bad = |why: &str| Error::format(path, why);
        if c.meta.get("kind").and_then(|v| v.as_str()) != Some("features") {
            return Err(bad("not a feature dataset"));
        }
        let eps = c.meta.get("eps").and_then(|v| v.as_f64()).ok_or_else(|| bad("missing eps"))?;
        let attack = c
            .meta
            .get("attack")
            .and_then(|v| v.as_str())
            .ok_or_else(|| bad("missing attack"))?
            .parse()?;
        let features = c.take("features").ok_or_else(|| bad("missing features"))?;
        let labels = c.take("labels").ok_or_else(|| bad("missing labels"))?;
        let prov = c.take("provenance").ok_or_else(|| bad("missing provenance"))?;
        let provenance = prov
            .data()
            .iter()
            .map(|&v| Provenance::from_code(v))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad provenance code"))?;
        Ok(FeatureDataset {
            labels: labels.data().iter().map(|&v| v as usize).collect(),
            features,
            provenance,
            eps,
            attack,
        })
    }
}

/// Extracts dropout-off penultimate features for each training image, a
/// Gaussian-noisy copy (σ = `eps`) and a BIM-perturbed copy (module default
/// step and iterations). Noise for image `i` comes from the stream
/// `(seed, "closeness-noise", i)`.
pub fn build_feature_dataset(
    cnn: &Checkpoint,
    train: &LabeledDataset,
    eps: f64,
    seed: u64,
) -> Result<FeatureDataset> {
    if !cnn.is_trained() {
        return Err(Error::Untrained);
    }
    if !(eps >= 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let net = &cnn.network;
    let m = train.len();
    let j = net.spec().penultimate_width();
    let bim_cfg = attacks::AttackConfig::new(attacks::AttackKind::Bim, eps, seed);
    let mut blocks = [
        Vec::with_capacity(m * j),
        Vec::with_capacity(m * j),
        Vec::with_capacity(m * j),
    ];
    let mut start = 0;
    while start < m {
        let end = (start + ATTACK_CHUNK).min(m);
        let idx: Vec<usize> = (start..end).collect();
        let x = train.images.select_rows(&idx);
        let y = &train.labels[start..end];

        let mut noisy = Tensor::zeros(x.shape());
        for (r, i) in idx.iter().enumerate() {
            let mut rng = stream(seed, "closeness-noise", *i as u64);
            let row = Tensor::new(vec![x.row_len()], x.row(r).to_vec())?;
            noisy.row_mut(r).copy_from_slice(gaussian_noisify(&row, eps, &mut rng)?.data());
        }
        let pert = attacks::bim(net, &x, y, eps, bim_cfg.alpha, bim_cfg.iters)?;
        let pert = attacks::stack(&pert, x.shape())?;

        for (block, input) in blocks.iter_mut().zip([&x, &noisy, &pert]) {
            block.extend_from_slice(net.infer(input)?.penultimate.data());
        }
        start = end;
    }
    let [clean, noisy, pert] = blocks;
    let mut data = clean;
    data.extend(noisy);
    data.extend(pert);
    let mut labels = Vec::with_capacity(3 * m);
    let mut provenance = Vec::with_capacity(3 * m);
    for p in [Provenance::Clean, Provenance::Noisy, Provenance::Pert] {
        labels.extend_from_slice(&train.labels);
        provenance.extend(std::iter::repeat_n(p, m));
    }
    Ok(FeatureDataset {
        features: Tensor::new(vec![3 * m, j], data)?,
        labels,
        provenance,
        eps,
        attack: attacks::AttackKind::Bim,
    })
}

/// Trains the dataset's MLP on the feature rows.
pub fn train_closeness_mlp(
    fd: &FeatureDataset,
    dataset: DatasetId,
    hyper: &TrainHyper,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    if fd.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let spec = build_architecture(dataset, ModelKind::Mlp);
    if spec.input_shape != [fd.width()] {
        return Err(Error::Shape(format!(
            "features have width {}, the {} MLP expects {:?}",
            fd.width(),
            dataset,
            spec.input_shape
        )));
    }
    train_classifier(spec, &fd.features, &fd.labels, hyper, dataset.as_str())
}

/// MLP softmax probability of `predicted_class` given one penultimate vector.
pub fn closeness_score(mlp: &Checkpoint, penultimate: &[f64], predicted_class: usize) -> Result<f64> {
    Ok(closeness_scores(mlp, &Tensor::new(vec![1, penultimate.len()], penultimate.to_vec())?, &[predicted_class])?[0])
}

/// Batched [`closeness_score`] over `[N, j]` penultimate rows.
pub fn closeness_scores(mlp: &Checkpoint, penultimate: &Tensor, predicted: &[usize]) -> Result<Vec<f64>> {
    let k = mlp.spec().class_count;
    if let Some(&label) = predicted.iter().find(|&&c| c >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    if penultimate.rank() != 2 || penultimate.batch_len() != predicted.len() {
        return Err(Error::Shape(format!(
            "{} classes for penultimate batch {:?}",
            predicted.len(),
            penultimate.shape()
        )));
    }
    let logits = mlp.network.infer(penultimate)?.logits;
    Ok(predicted
        .iter()
        .enumerate()
        .map(|(i, &c)| softmax(logits.row(i))[c].clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON))
        .collect())
}
