//! Test-only oracles and fixtures shared by the integration suites.
#![allow(dead_code)]

use std::collections::BTreeMap;

use advdetect::nn::{DropoutMode, LayerSpec, Network, NetworkSpec};
use advdetect::rng::stream;
use advdetect::Tensor;
use rand::Rng;

/// Mean cross-entropy computed from scratch (log-sum-exp), independent of
/// the library's loss code.
pub fn ce_mean(logits: &Tensor, labels: &[usize]) -> f64 {
    ce_sum(logits, labels) / labels.len() as f64
}

pub fn ce_sum(logits: &Tensor, labels: &[usize]) -> f64 {
    let k = logits.shape()[1];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * k..(i + 1) * k];
        let m = row.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total
}

fn logits_with_masks(net: &Network, x: &Tensor, masks: &[Option<Vec<f64>>]) -> Tensor {
    net.forward(x, DropoutMode::Replay(masks))
        .unwrap()
        .logits()
        .clone()
}

/// Central finite-difference gradient of the summed per-sample loss with
/// respect to the input batch.
pub fn fd_input_gradient(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    masks: &[Option<Vec<f64>>],
    h: f64,
) -> Tensor {
    let mut g = Tensor::zeros(x.shape());
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let lp = ce_sum(&logits_with_masks(net, &xp, masks), labels);
        let lm = ce_sum(&logits_with_masks(net, &xm, masks), labels);
        g.data_mut()[i] = (lp - lm) / (2.0 * h);
    }
    g
}

/// Central finite-difference gradient of the batch-mean loss with respect to
/// every weight tensor.
pub fn fd_param_gradients(
    net: &Network,
    x: &Tensor,
    labels: &[usize],
    masks: &[Option<Vec<f64>>],
    h: f64,
) -> BTreeMap<String, Tensor> {
    let mut out = BTreeMap::new();
    for (name, w) in net.params() {
        let mut g = Tensor::zeros(w.shape());
        for i in 0..w.len() {
            let mut plus = net.clone();
            let mut wp = w.clone();
            wp.data_mut()[i] += h;
            plus.set_param(name, wp).unwrap();
            let mut minus = net.clone();
            let mut wm = w.clone();
            wm.data_mut()[i] -= h;
            minus.set_param(name, wm).unwrap();
            let lp = ce_mean(&logits_with_masks(&plus, x, masks), labels);
            let lm = ce_mean(&logits_with_masks(&minus, x, masks), labels);
            g.data_mut()[i] = (lp - lm) / (2.0 * h);
        }
        out.insert(name.clone(), g);
    }
    out
}

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// A small random network that exercises every layer kind, chosen by `seed`.
pub fn random_small_network(seed: u64) -> (Network, Tensor, Vec<usize>) {
    let mut rng = stream(seed, "gradcheck", 0);
    let classes = rng.gen_range(2..5);
    let batch = rng.gen_range(1..4);
    let spec = if seed % 3 == 2 {
        let inputs = rng.gen_range(2..7);
        let hidden = rng.gen_range(2..8);
        NetworkSpec::new(
            vec![inputs],
            classes,
            vec![
                LayerSpec::dense(inputs, hidden),
                LayerSpec::Relu,
                LayerSpec::dropout(rng.gen_range(0.0..0.6)),
                LayerSpec::dense(hidden, classes),
            ],
        )
        .unwrap()
    } else {
        let c = rng.gen_range(1..3);
        let side = rng.gen_range(6..9);
        let kernel = [1, 3][rng.gen_range(0..2)];
        let padding = rng.gen_range(0..2);
        let stride = rng.gen_range(1..3);
        let oc = rng.gen_range(2..4);
        let conv_side = (side + 2 * padding - kernel) / stride + 1;
        let pool_side = (conv_side - 2) / 2 + 1;
        let flat = oc * pool_side * pool_side;
        let hidden = rng.gen_range(3..6);
        NetworkSpec::new(
            vec![c, side, side],
            classes,
            vec![
                LayerSpec::Conv2d {
                    in_channels: c,
                    out_channels: oc,
                    kernel,
                    padding,
                    stride,
                },
                LayerSpec::Relu,
                LayerSpec::pool2(),
                LayerSpec::dropout(rng.gen_range(0.0..0.6)),
                LayerSpec::Flatten,
                LayerSpec::dense(flat, hidden),
                LayerSpec::Relu,
                LayerSpec::dense(hidden, classes),
            ],
        )
        .unwrap()
    };
    let mut net = Network::init(spec.clone(), &mut rng).unwrap();
    // Non-zero biases so ReLU boundaries are not aligned with zero inputs.
    for (name, shape) in spec.param_shapes() {
        if name.ends_with(".bias") {
            let b = Tensor::from_fn(&shape, |_| rng.gen_range(-0.3..0.3));
            net.set_param(&name, b).unwrap();
        }
    }
    let mut shape = vec![batch];
    shape.extend_from_slice(&spec.input_shape);
    let x = Tensor::from_fn(&shape, |_| rng.gen_range(0.0..1.0));
    let labels = (0..batch).map(|_| rng.gen_range(0..classes)).collect();
    (net, x, labels)
}

/// Runs a gradient check on one random configuration; returns the worst
/// relative error over the input gradient and every parameter gradient.
pub fn gradient_check(seed: u64) -> f64 {
    let (net, x, labels) = random_small_network(seed);
    let mut rng = stream(seed, "gradcheck-dropout", 0);
    let trace = net.forward(&x, DropoutMode::Sample(&mut rng)).unwrap();
    let masks = trace.dropout_masks().to_vec();
    let h = 1e-5;

    let gi = net.input_gradient(&trace, &labels).unwrap();
    let fi = fd_input_gradient(&net, &x, &labels, &masks, h);
    let mut worst = rel_err(gi.data(), fi.data());

    let gp = net.param_gradients(&trace, &labels).unwrap();
    let fp = fd_param_gradients(&net, &x, &labels, &masks, h);
    assert_eq!(gp.keys().collect::<Vec<_>>(), fp.keys().collect::<Vec<_>>());
    for (name, g) in &gp {
        worst = worst.max(rel_err(g.data(), fp[name].data()));
    }
    worst
}

/// Class-dependent synthetic images: class `c` lights a distinct horizontal
/// band, plus uniform pixel noise. Returned as raw bytes, row-major.
pub fn synthetic_images(n: usize, channels: usize, side: usize, seed: u64) -> (Vec<u8>, Vec<u8>) {
    let mut rng = stream(seed, "synthetic-images", 0);
    let mut pixels = Vec::with_capacity(n * channels * side * side);
    let mut labels = Vec::with_capacity(n);
    let band = side / 10;
    for i in 0..n {
        let c = i % 10;
        labels.push(c as u8);
        for _ in 0..channels {
            for r in 0..side {
                for _ in 0..side {
                    let lit = r / band.max(1) == c;
                    let base: f64 = if lit { 200.0 } else { 30.0 };
                    let v = base + rng.gen_range(-30.0..30.0);
                    pixels.push(v.clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
    (pixels, labels)
}

/// Writes an MNIST-format dataset (canonical file names) under `dir`.
pub fn write_mnist_like(dir: &std::path::Path, train: usize, test: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for (prefix, n, s) in [("train", train, seed), ("t10k", test, seed + 1)] {
        let (px, lb) = synthetic_images(n, 1, 28, s);
        let mut img = vec![0, 0, 8, 3];
        for d in [n as u32, 28, 28] {
            img.extend_from_slice(&d.to_be_bytes());
        }
        img.extend(px);
        std::fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), img).unwrap();
        let mut lab = vec![0, 0, 8, 1];
        lab.extend_from_slice(&(n as u32).to_be_bytes());
        lab.extend(lb);
        std::fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), lab).unwrap();
    }
}

/// Writes CIFAR-10 binary batches (`data_batch_1.bin`, `test_batch.bin`).
pub fn write_cifar_like(dir: &std::path::Path, train: usize, test: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    for (name, n, s) in [("data_batch_1.bin", train, seed), ("test_batch.bin", test, seed + 1)] {
        let (px, lb) = synthetic_images(n, 3, 32, s);
        let mut out = Vec::with_capacity(n * 3073);
        for i in 0..n {
            out.push(lb[i]);
            out.extend_from_slice(&px[i * 3072..(i + 1) * 3072]);
        }
        std::fs::write(dir.join(name), out).unwrap();
    }
}

/// Pairwise form of the population variance: (1 / 2T^2) sum_{s,t} (p_s - p_t)^2.
pub fn pairwise_epistemic(rows: &[Vec<f64>]) -> f64 {
    let t = rows.len() as f64;
    let k = rows[0].len();
    let mut total = 0.0;
    for c in 0..k {
        for a in rows {
            for b in rows {
                total += (a[c] - b[c]).powi(2);
            }
        }
    }
    total / (2.0 * t * t) / k as f64
}

/// `t` softmax rows over `k` classes with logits uniform in `[-sharp, sharp]`.
pub fn random_rows(seed: u64, t: usize, k: usize, sharp: f64) -> Vec<Vec<f64>> {
    let mut rng = stream(seed, "ensembles", 0);
    (0..t)
        .map(|_| {
            let z: Vec<f64> = (0..k).map(|_| rng.gen_range(-sharp..sharp)).collect();
            advdetect::nn::softmax(&z)
        })
        .collect()
}

/// Brute-force AUC over all positive/negative pairs, ties counting half.
pub fn pairwise_auc(scores: &[f64], labels: &[bool]) -> f64 {
    let (mut total, mut pairs) = (0.0, 0.0);
    for (sp, _) in scores.iter().zip(labels).filter(|(_, &l)| l) {
        for (sn, _) in scores.iter().zip(labels).filter(|(_, &l)| !l) {
            total += if sp > sn {
                1.0
            } else if sp == sn {
                0.5
            } else {
                0.0
            };
            pairs += 1.0;
        }
    }
    total / pairs
}

/// Random scores on `levels` grid points (so ties occur) with both classes present.
pub fn roc_instance(seed: u64, n: usize, levels: u32) -> (Vec<f64>, Vec<bool>) {
    let mut rng = stream(seed, "roc-instance", 0);
    let mut labels: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
    labels[0] = true;
    labels[1] = false;
    let scores = (0..n).map(|_| rng.gen_range(0..levels) as f64 / 7.0).collect();
    (scores, labels)
}
