//! Carlini-Wagner L2 attack in tanh space.

use super::{check_batch, outcomes, AttackOutcome};
use crate::error::{Error, Result};
use crate::nn::{DropoutMode, Network};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CwConfig {
    pub binary_steps: usize,
    pub inner_steps: usize,
    pub initial_c: f64,
    pub confidence: f64,
    pub lr: f64,
    /// Stop a round early once the loss stops improving.
    pub abort_early: bool,
}

impl Default for CwConfig {
    fn default() -> Self {
        CwConfig {
            binary_steps: 5,
            inner_steps: 100,
            initial_c: 1e-2,
            confidence: 0.0,
            lr: 0.1,
            abort_early: true,
        }
    }
}

impl CwConfig {
    pub fn validate(&self) -> Result<()> {
        if self.binary_steps == 0 || self.inner_steps == 0 {
            return Err(Error::InvalidArgument("CW needs at least one step".into()));
        }
        if !(self.initial_c > 0.0) || !(self.lr > 0.0) || !(self.confidence >= 0.0) {
            return Err(Error::InvalidArgument("CW c, lr must be > 0 and confidence >= 0".into()));
        }
        Ok(())
    }
}

const UPPER_INIT: f64 = 1e10;
const TANH_SHRINK: f64 = 0.999_999;

/// Minimises `|x' - x|_2^2 + c * max(Z_y - max_{j != y} Z_j, -kappa)` over
/// `x' = (tanh(w) + 1) / 2` with Adam, binary-searching `c` per sample. The
/// smallest successful perturbation is kept. If it is longer than
/// `l2_budget` it is shrunk radially onto the budget and success is
/// re-evaluated at that point. Without any success the last iterate is
/// returned (also shrunk to the budget).
pub fn carlini_wagner(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    l2_budget: f64,
    cfg: &CwConfig,
) -> Result<Vec<AttackOutcome>> {
    cfg.validate()?;
    check_batch(net, x, labels)?;
    let n = labels.len();
    let d = x.row_len();
    let k = net.spec().class_count;
    let w0: Vec<f64> = x.data().iter().map(|&v| ((2.0 * v - 1.0) * TANH_SHRINK).atanh()).collect();

    let mut c = vec![cfg.initial_c; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![UPPER_INIT; n];
    let mut best_l2 = vec![f64::INFINITY; n];
    let mut best = x.clone();
    let mut last = x.clone();
    let mut iterations = vec![0usize; n];

    for _ in 0..cfg.binary_steps {
        let mut w = w0.clone();
        let mut m = vec![0.0; w.len()];
        let mut v = vec![0.0; w.len()];
        let mut round_success = vec![false; n];
        let mut prev_loss = vec![f64::INFINITY; n];
        let mut active: Vec<bool> = vec![true; n];
        let check_every = (cfg.inner_steps / 10).max(1);

        for step in 1..=cfg.inner_steps {
            let xp = Tensor::from_parts(x.shape().to_vec(), w.iter().map(|t| (t.tanh() + 1.0) / 2.0).collect());
            let trace = net.forward(&xp, DropoutMode::Off)?;
            let logits = trace.logits();
            let mut grad_logits = Tensor::zeros(logits.shape());
            let mut loss = vec![0.0; n];
            for i in 0..n {
                if !active[i] {
                    continue;
                }
                iterations[i] += 1;
                let z = logits.row(i);
                let y = labels[i];
                let (j, zj) = (0..k)
                    .filter(|&j| j != y)
                    .map(|j| (j, z[j]))
                    .fold((usize::MAX, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
                let margin = z[y] - zj;
                let dist: f64 = xp.row(i).iter().zip(x.row(i)).map(|(a, b)| (a - b).powi(2)).sum();
                loss[i] = dist + c[i] * margin.max(-cfg.confidence);
                if margin > -cfg.confidence {
                    let g = grad_logits.row_mut(i);
                    g[y] = c[i];
                    g[j] = -c[i];
                }
                if Tensor::argmax(z) != y {
                    round_success[i] = true;
                    if dist.sqrt() < best_l2[i] {
                        best_l2[i] = dist.sqrt();
                        best.row_mut(i).copy_from_slice(xp.row(i));
                    }
                }
            }
            let gx = net.backward(&trace, &grad_logits, true, false)?.input.expect("requested");
            let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
            let bc1 = 1.0 - b1.powi(step as i32);
            let bc2 = 1.0 - b2.powi(step as i32);
            for i in (0..n).filter(|&i| active[i]) {
                for p in i * d..(i + 1) * d {
                    let t = w[p].tanh();
                    let dxp = 2.0 * (xp.data()[p] - x.data()[p]) + gx.data()[p];
                    let g = dxp * (1.0 - t * t) / 2.0;
                    m[p] = b1 * m[p] + (1.0 - b1) * g;
                    v[p] = b2 * v[p] + (1.0 - b2) * g * g;
                    w[p] -= cfg.lr * (m[p] / bc1) / ((v[p] / bc2).sqrt() + eps);
                }
            }
            if cfg.abort_early && step % check_every == 0 {
                for i in 0..n {
                    if active[i] && loss[i] > prev_loss[i] * 0.9999 {
                        active[i] = false;
                    }
                    prev_loss[i] = loss[i];
                }
            }
            if step == cfg.inner_steps || !active.iter().any(|&a| a) {
                let xl: Vec<f64> = w.iter().map(|t| (t.tanh() + 1.0) / 2.0).collect();
                last = Tensor::from_parts(x.shape().to_vec(), xl);
                break;
            }
        }
        // The last iterate is never checked inside the loop; check it now.
        let preds = net.predict(&last)?;
        for i in 0..n {
            if preds[i] != labels[i] {
                round_success[i] = true;
                let dist = l2(last.row(i), x.row(i));
                if dist < best_l2[i] {
                    best_l2[i] = dist;
                    best.row_mut(i).copy_from_slice(last.row(i));
                }
            }
        }
        for i in 0..n {
            if round_success[i] {
                upper[i] = upper[i].min(c[i]);
                if upper[i] < UPPER_INIT * 0.1 {
                    c[i] = (lower[i] + upper[i]) / 2.0;
                }
            } else {
                lower[i] = lower[i].max(c[i]);
                if upper[i] < UPPER_INIT * 0.1 {
                    c[i] = (lower[i] + upper[i]) / 2.0;
                } else {
                    c[i] *= 10.0;
                }
            }
        }
    }

    let mut xa = x.clone();
    for i in 0..n {
        let src = if best_l2[i].is_finite() { best.row(i) } else { last.row(i) };
        let norm = l2(src, x.row(i));
        let scale = if norm > l2_budget { l2_budget / norm } else { 1.0 };
        let x0 = x.row(i);
        for ((a, &s), &o) in xa.row_mut(i).iter_mut().zip(src).zip(x0) {
            *a = (o + scale * (s - o)).clamp(0.0, 1.0);
        }
    }
    outcomes(net, x, xa, labels, &iterations)
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
}
