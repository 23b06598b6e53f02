//! Crafts FGSM, BIM, PGD, DeepFool and Carlini-Wagner examples against a
//! small trained network and prints success rates and perturbation norms.
//!
//! ```text
//! cargo run --release --example craft_attacks
//! ```

use advdetect::attacks::{run_attack, AttackConfig, AttackKind};
use advdetect::nn::{accuracy, train_classifier, LayerSpec, NetworkSpec, TrainHyper};
use advdetect::rng::stream;
use advdetect::Tensor;
use rand::Rng;

fn blobs(n: usize, seed: u64) -> (Tensor, Vec<usize>) {
    let mut rng = stream(seed, "blobs", 0);
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    let mut data = Vec::new();
    for &c in &labels {
        for p in 0..36 {
            let on = p % 3 == c;
            data.push(if on { rng.gen_range(0.5..0.8) } else { rng.gen_range(0.2..0.5) });
        }
    }
    (Tensor::new(vec![n, 1, 6, 6], data).unwrap(), labels)
}

fn main() -> advdetect::Result<()> {
    let spec = NetworkSpec::new(
        vec![1, 6, 6],
        3,
        vec![
            LayerSpec::Flatten,
            LayerSpec::dense(36, 32),
            LayerSpec::Relu,
            LayerSpec::dense(32, 3),
        ],
    )?;
    let (x, y) = blobs(600, 1);
    let hyper = TrainHyper { epochs: 20, batch_size: 32, lr: 1e-2, seed: 3 };
    let (ckpt, _) = train_classifier(spec, &x, &y, &hyper, "blobs")?;
    let (xt, yt) = blobs(100, 2);
    println!("clean accuracy {:.3}", accuracy(&ckpt.network, &xt, &yt)?);

    let ids: Vec<u64> = (0..yt.len() as u64).collect();
    println!("{:<9} {:>5} {:>8} {:>8} {:>8}", "attack", "eps", "success", "linf", "l2");
    for kind in AttackKind::ALL {
        for eps in [0.05, 0.15] {
            let cfg = AttackConfig::new(kind, eps, 11);
            let out = run_attack(&ckpt.network, &xt, &yt, &cfg, &ids)?;
            let n = out.len() as f64;
            let rate = out.iter().filter(|o| o.success).count() as f64 / n;
            let linf = out.iter().map(|o| o.linf).sum::<f64>() / n;
            let l2 = out.iter().map(|o| o.l2).sum::<f64>() / n;
            println!("{:<9} {eps:>5.2} {rate:>8.3} {linf:>8.4} {l2:>8.4}", kind.as_str());
        }
    }
    Ok(())
}
