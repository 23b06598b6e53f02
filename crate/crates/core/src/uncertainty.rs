//! MC-dropout ensembles and the four scalar uncertainty metrics.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::nn::{softmax_rows, DropoutMode, Network};
use crate::rng::stream;
use crate::tensor::Tensor;

/// Guard added to the aleatoric denominator of [`scibilic`].
pub const SCIBILIC_GUARD: f64 = 1e-12;

/// `T` softmax outputs for one input, one row per dropout sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionEnsemble {
    probs: Tensor,
}

impl PredictionEnsemble {
    /// Validates a `[T, K]` matrix of probability rows.
    pub fn new(probs: Tensor) -> Result<Self> {
        if probs.rank() != 2 || probs.shape()[0] == 0 || probs.shape()[1] == 0 {
            return Err(Error::Shape(format!(
                "ensemble must be a non-empty [T, K] matrix, got {:?}",
                probs.shape()
            )));
        }
        for t in 0..probs.shape()[0] {
            let row = probs.row(t);
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidArgument(format!("row {t} has entries outside [0, 1]")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidArgument(format!("row {t} sums to {s}")));
            }
        }
        Ok(PredictionEnsemble { probs })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Shape("ragged ensemble rows".into()));
        }
        Self::new(Tensor::new(vec![rows.len(), k], rows.concat())?)
    }

    pub fn samples(&self) -> usize {
        self.probs.shape()[0]
    }

    pub fn classes(&self) -> usize {
        self.probs.shape()[1]
    }

    pub fn probs(&self) -> &Tensor {
        &self.probs
    }

    /// The MC-mean distribution `p_T`.
    pub fn mean_probs(&self) -> Vec<f64> {
        let (t, k) = (self.samples(), self.classes());
        let mut mean = vec![0.0; k];
        for s in 0..t {
            for (m, p) in mean.iter_mut().zip(self.probs.row(s)) {
                *m += p;
            }
        }
        mean.iter_mut().for_each(|m| *m /= t as f64);
        mean
    }
}

/// The four metrics plus the MC-mean prediction for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyEstimate {
    pub epistemic: f64,
    pub aleatoric: f64,
    pub scibilic: f64,
    pub entropy: f64,
    pub mean_probs: Vec<f64>,
    pub predicted_class: usize,
}

impl UncertaintyEstimate {
    pub fn from_ensemble(ens: &PredictionEnsemble) -> Self {
        let epistemic = epistemic(ens);
        let aleatoric = aleatoric(ens);
        let mean_probs = ens.mean_probs();
        UncertaintyEstimate {
            epistemic,
            aleatoric,
            scibilic: scibilic(epistemic, aleatoric),
            entropy: entropy_of(&mean_probs),
            predicted_class: Tensor::argmax(&mean_probs),
            mean_probs,
        }
    }
}

/// `T` stochastic forward passes of one sample (shape `[C, H, W]` or
/// `[1, C, H, W]`), each with fresh dropout masks.
pub fn mc_predict(
    net: &Network,
    x: &Tensor,
    t: usize,
    rng: &mut dyn RngCore,
) -> Result<PredictionEnsemble> {
    if t == 0 {
        return Err(Error::InvalidArgument("T must be >= 1".into()));
    }
    let sample = if x.shape() == net.spec().input_shape.as_slice() {
        x.data()
    } else if x.rank() >= 1 && x.batch_len() == 1 && x.shape()[1..] == net.spec().input_shape[..] {
        x.row(0)
    } else {
        return Err(Error::Shape(format!(
            "expected one sample of shape {:?}, got {:?}",
            net.spec().input_shape,
            x.shape()
        )));
    };
    let batch = Tensor::stack_rows(&net.spec().input_shape, std::iter::repeat_n(sample, t))?;
    let trace = net.forward(&batch, DropoutMode::Sample(rng))?;
    PredictionEnsemble::new(softmax_rows(trace.logits()))
}

/// Uncertainty estimates for every row of a batch. Row `i` draws its masks
/// from the stream `(seed, "mc-dropout", sample_ids[i])`.
pub fn estimate_batch(
    net: &Network,
    x: &Tensor,
    t: usize,
    seed: u64,
    sample_ids: &[u64],
) -> Result<Vec<UncertaintyEstimate>> {
    if sample_ids.len() != x.batch_len() {
        return Err(Error::Shape("one sample id per row is required".into()));
    }
    let shape = &net.spec().input_shape;
    sample_ids
        .iter()
        .enumerate()
        .map(|(i, &id)| {
            let xi = Tensor::new(shape.clone(), x.row(i).to_vec())?;
            let mut rng = stream(seed, "mc-dropout", id);
            Ok(UncertaintyEstimate::from_ensemble(&mc_predict(net, &xi, t, &mut rng)?))
        })
        .collect()
}

/// Mean over classes of `(1/T) sum_t (p_t[k] - p_t[k]^2)`.
pub fn aleatoric(ens: &PredictionEnsemble) -> f64 {
    let (t, k) = (ens.samples(), ens.classes());
    let total: f64 = ens.probs.data().iter().map(|p| p - p * p).sum();
    total / (t * k) as f64
}

/// Mean over classes of the population variance across the `T` samples.
/// Deviations are taken from the first row, so identical rows give exactly 0.
pub fn epistemic(ens: &PredictionEnsemble) -> f64 {
    let (t, k) = (ens.samples(), ens.classes());
    let first = ens.probs.row(0);
    let mut total = 0.0;
    for c in 0..k {
        let (mut sum, mut sq) = (0.0, 0.0);
        for s in 0..t {
            let d = ens.probs.row(s)[c] - first[c];
            sum += d;
            sq += d * d;
        }
        let mean = sum / t as f64;
        total += (sq / t as f64 - mean * mean).max(0.0);
    }
    total / k as f64
}

pub fn scibilic(epistemic: f64, aleatoric: f64) -> f64 {
    epistemic / (aleatoric + SCIBILIC_GUARD)
}

/// Natural-log entropy of the MC-mean distribution.
pub fn predictive_entropy(ens: &PredictionEnsemble) -> f64 {
    entropy_of(&ens.mean_probs())
}

fn entropy_of(p: &[f64]) -> f64 {
    -p.iter().filter(|&&q| q > 0.0).map(|q| q * q.ln()).sum::<f64>()
}
