//! DeepFool, L-inf variant.

use super::{outcomes, project_linf, sign, AttackOutcome};
use crate::error::{Error, Result};
use crate::nn::{DropoutMode, Network};
use crate::tensor::Tensor;

/// Added to the boundary distance so a step lands strictly past it.
const STEP_MARGIN: f64 = 1e-4;

/// Untargeted DeepFool. Each iteration linearises the logits around the
/// current point and steps to the nearest linearised boundary in L-inf,
/// until the prediction leaves the original class or `max_iter` is hit.
/// The accumulated step is scaled by `1 + overshoot`, and the final point is
/// projected onto the `eps` ball and `[0, 1]`.
///
/// `success` is judged against the original prediction.
pub fn deepfool(
    net: &Network,
    x: &Tensor,
    eps: f64,
    overshoot: f64,
    max_iter: usize,
) -> Result<Vec<AttackOutcome>> {
    if x.rank() < 1 || x.shape()[1..] != net.spec().input_shape[..] {
        return Err(Error::Shape(format!("batch {:?} does not match the network", x.shape())));
    }
    let n = x.batch_len();
    let k = net.spec().class_count;
    let d = x.row_len();
    let original = net.predict(x)?;
    let mut r_tot = vec![0.0; n * d];
    let mut xi = x.clone();
    let mut active: Vec<usize> = (0..n).collect();
    let mut iterations = vec![0usize; n];

    for _ in 0..max_iter {
        if active.is_empty() {
            break;
        }
        let xb = xi.select_rows(&active);
        let trace = net.forward(&xb, DropoutMode::Off)?;
        let logits = trace.logits();
        // Still-unflipped rows take a step; flipped rows leave the active set.
        let mut stepping = Vec::new();
        for (bi, &i) in active.iter().enumerate() {
            if Tensor::argmax(logits.row(bi)) == original[i] {
                stepping.push(bi);
            }
        }
        if stepping.is_empty() {
            active.clear();
            break;
        }
        let mut jac = Vec::with_capacity(k);
        for class in 0..k {
            let mut g = Tensor::zeros(logits.shape());
            for bi in 0..active.len() {
                g.row_mut(bi)[class] = 1.0;
            }
            jac.push(net.backward(&trace, &g, true, false)?.input.expect("requested"));
        }
        for &bi in &stepping {
            let i = active[bi];
            let l0 = original[i];
            let z = logits.row(bi);
            let g0 = jac[l0].row(bi);
            let mut best: Option<(f64, usize, f64)> = None;
            for class in (0..k).filter(|&c| c != l0) {
                let gk = jac[class].row(bi);
                let w1: f64 = gk.iter().zip(g0).map(|(a, b)| (a - b).abs()).sum();
                if w1 == 0.0 {
                    continue;
                }
                let gap = (z[class] - z[l0]).abs();
                let dist = gap / w1;
                if best.is_none_or(|(bd, _, _)| dist < bd) {
                    best = Some((dist, class, w1));
                }
            }
            iterations[i] += 1;
            let Some((_, class, w1)) = best else { continue };
            let gap = (z[class] - z[l0]).abs();
            let scale = (gap + STEP_MARGIN) / w1;
            let gk = jac[class].row(bi);
            let r = &mut r_tot[i * d..(i + 1) * d];
            for ((r, a), b) in r.iter_mut().zip(gk).zip(g0) {
                *r += scale * sign(a - b);
            }
            let x0 = x.row(i);
            let row = xi.row_mut(i);
            for ((v, o), r) in row.iter_mut().zip(x0).zip(r.iter()) {
                *v = (o + (1.0 + overshoot) * r).clamp(0.0, 1.0);
            }
        }
        active = stepping.into_iter().map(|bi| active[bi]).collect();
    }

    for i in 0..n {
        project_linf(x.row(i), xi.row_mut(i), eps);
    }
    outcomes(net, x, xi, &original, &iterations)
}
