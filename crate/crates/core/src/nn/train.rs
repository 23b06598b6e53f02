//! Mini-batch Adam training of classifiers.

use rand::seq::SliceRandom;

use super::adam::{adam_step, AdamConfig};
use super::checkpoint::{Checkpoint, TrainMeta};
use super::network::{cross_entropy, DropoutMode, Network};
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean training loss over the epoch's mini-batches (dropout active).
    pub loss: f64,
    /// Training accuracy of the dropout-active forward passes.
    pub accuracy: f64,
}

/// Trains a freshly initialised network on `(inputs, labels)`.
///
/// Deterministic for a given seed: initialisation, shuffling and dropout each
/// draw from their own derived stream.
pub fn train_classifier(
    spec: NetworkSpec,
    inputs: &Tensor,
    labels: &[usize],
    hyper: &TrainHyper,
    dataset: &str,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    let net = Network::init(spec, &mut stream(hyper.seed, "init", 0))?;
    let ckpt = Checkpoint::fresh(
        net,
        TrainMeta {
            dataset: dataset.to_string(),
            epochs_completed: 0,
            seed: hyper.seed,
        },
    );
    continue_training(ckpt, inputs, labels, hyper)
}

/// Runs `hyper.epochs` further epochs on an existing checkpoint.
pub fn continue_training(
    mut ckpt: Checkpoint,
    inputs: &Tensor,
    labels: &[usize],
    hyper: &TrainHyper,
) -> Result<(Checkpoint, Vec<EpochStats>)> {
    let n = labels.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if inputs.batch_len() != n {
        return Err(Error::Shape(format!("{} inputs for {n} labels", inputs.batch_len())));
    }
    if hyper.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be positive".into()));
    }
    let k = ckpt.spec().class_count;
    if let Some(&label) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label, classes: k });
    }
    let cfg = AdamConfig {
        lr: hyper.lr,
        ..AdamConfig::default()
    };
    let mut history = Vec::with_capacity(hyper.epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..hyper.epochs {
        let epoch = ckpt.meta.epochs_completed;
        order.sort_unstable();
        order.shuffle(&mut stream(hyper.seed, "shuffle", epoch as u64));
        let mut dropout_rng = stream(hyper.seed, "dropout", epoch as u64);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for idx in order.chunks(hyper.batch_size) {
            let batch = inputs.select_rows(idx);
            let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            let trace = ckpt
                .network
                .forward(&batch, DropoutMode::Sample(&mut dropout_rng))?;
            loss_sum += cross_entropy(trace.logits(), &y)? * idx.len() as f64;
            correct += (0..idx.len())
                .filter(|&r| Tensor::argmax(trace.logits().row(r)) == y[r])
                .count();
            let grads = ckpt.network.param_gradients(&trace, &y)?;
            adam_step(ckpt.network.params_mut(), &grads, &mut ckpt.adam, &cfg)?;
        }
        ckpt.meta.epochs_completed += 1;
        history.push(EpochStats {
            epoch: ckpt.meta.epochs_completed,
            loss: loss_sum / n as f64,
            accuracy: correct as f64 / n as f64,
        });
    }
    Ok((ckpt, history))
}

/// Fraction of samples the deterministic network classifies correctly.
pub fn accuracy(net: &Network, inputs: &Tensor, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let pred = net.predict(inputs)?;
    Ok(pred.iter().zip(labels).filter(|(p, y)| p == y).count() as f64 / labels.len() as f64)
}
