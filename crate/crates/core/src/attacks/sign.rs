//! FGSM, BIM and PGD: steps along the sign of the input gradient.

use rand::Rng;

use super::{check_batch, outcomes, project_linf, sample_stream, sign, AttackOutcome};
use crate::error::Result;
use crate::nn::{DropoutMode, Network};
use crate::tensor::Tensor;

fn loss_gradient(net: &Network, x: &Tensor, labels: &[usize]) -> Result<Tensor> {
    let trace = net.forward(x, DropoutMode::Off)?;
    net.input_gradient(&trace, labels)
}

/// One step `clip01(x + eps * sign(grad))`.
pub fn fgsm(net: &Network, x: &Tensor, labels: &[usize], eps: f64) -> Result<Vec<AttackOutcome>> {
    check_batch(net, x, labels)?;
    let g = loss_gradient(net, x, labels)?;
    let mut xa = x.clone();
    for (a, gv) in xa.data_mut().iter_mut().zip(g.data()) {
        *a = (*a + eps * sign(*gv)).clamp(0.0, 1.0);
    }
    outcomes(net, x, xa, labels, &vec![1; labels.len()])
}

/// Basic iterative method: `iters` signed steps of size `alpha`, each
/// projected onto the `eps` ball and `[0, 1]`. All iterations always run.
pub fn bim(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
) -> Result<Vec<AttackOutcome>> {
    check_batch(net, x, labels)?;
    let xa = iterate(net, x, x.clone(), labels, eps, alpha, iters)?;
    outcomes(net, x, xa, labels, &vec![iters; labels.len()])
}

/// Projected gradient descent from a uniform random start in the `eps` ball.
/// Start noise is drawn row by row from `rng`.
pub fn pgd<R: Rng + ?Sized>(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
    rng: &mut R,
) -> Result<Vec<AttackOutcome>> {
    check_batch(net, x, labels)?;
    let start = random_start(x, eps, |_| rng.gen::<f64>());
    let xa = iterate(net, x, start, labels, eps, alpha, iters)?;
    outcomes(net, x, xa, labels, &vec![iters; labels.len()])
}

/// PGD with one independent start stream per row, keyed by `(seed, id)`.
#[allow(clippy::too_many_arguments)]
pub fn pgd_with_seeds(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
    seed: u64,
    sample_ids: &[u64],
) -> Result<Vec<AttackOutcome>> {
    check_batch(net, x, labels)?;
    let row = x.row_len();
    let mut streams: Vec<_> = sample_ids.iter().map(|&id| sample_stream(seed, id)).collect();
    let start = random_start(x, eps, |i| streams[i / row].gen::<f64>());
    let xa = iterate(net, x, start, labels, eps, alpha, iters)?;
    outcomes(net, x, xa, labels, &vec![iters; labels.len()])
}

fn random_start(x: &Tensor, eps: f64, mut unit: impl FnMut(usize) -> f64) -> Tensor {
    let mut s = x.clone();
    if eps > 0.0 {
        for (i, v) in s.data_mut().iter_mut().enumerate() {
            *v = (*v + eps * (2.0 * unit(i) - 1.0)).clamp(0.0, 1.0);
        }
    }
    s
}

fn iterate(
    net: &Network,
    x: &Tensor,
    mut xa: Tensor,
    labels: &[usize],
    eps: f64,
    alpha: f64,
    iters: usize,
) -> Result<Tensor> {
    for _ in 0..iters {
        let g = loss_gradient(net, &xa, labels)?;
        for (a, gv) in xa.data_mut().iter_mut().zip(g.data()) {
            *a += alpha * sign(*gv);
        }
        project_linf(x.data(), xa.data_mut(), eps);
    }
    Ok(xa)
}
