//! Builds the feature-space closeness dataset from a trained Digit CNN,
//! trains the closeness MLP and compares scores of clean and attacked
//! inputs.
//!
//! ```text
//! cargo run --release --example closeness_score
//! ```

use advdetect::attacks::{run_attack, stack, AttackConfig, AttackKind};
use advdetect::closeness::{build_feature_dataset, closeness_scores, train_closeness_mlp};
use advdetect::data::{DatasetId, LabeledDataset};
use advdetect::nn::{build_architecture, train_classifier, ModelKind, TrainHyper};
use advdetect::rng::stream;
use advdetect::Tensor;
use rand::Rng;

fn synthetic(n: usize, seed: u64) -> LabeledDataset {
    let mut rng = stream(seed, "example-data", 0);
    let labels: Vec<usize> = (0..n).map(|i| i % 10).collect();
    let mut data = Vec::with_capacity(n * 784);
    for &c in &labels {
        for p in 0..784 {
            let band = (p / 28) / 3 == c;
            data.push(if band { rng.gen_range(0.6..0.9) } else { rng.gen_range(0.0..0.3) });
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, 1, 28, 28], data).unwrap(), labels, 10).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn main() -> advdetect::Result<()> {
    let train = synthetic(300, 1);
    let hyper = TrainHyper { epochs: 2, batch_size: 32, lr: 1e-3, seed: 4 };
    let spec = build_architecture(DatasetId::MnistDigit, ModelKind::Cnn);
    let (cnn, _) = train_classifier(spec, &train.images, &train.labels, &hyper, "mnist_digit")?;

    let fd = build_feature_dataset(&cnn, &train, 0.2, 5)?;
    println!("feature rows {} (width {})", fd.len(), fd.width());
    let mlp_hyper = TrainHyper { epochs: 5, batch_size: 32, lr: 1e-3, seed: 6 };
    let (mlp, history) = train_closeness_mlp(&fd, DatasetId::MnistDigit, &mlp_hyper)?;
    println!("mlp train accuracy {:.3}", history.last().map_or(0.0, |e| e.accuracy));

    let test = synthetic(50, 2);
    let ids: Vec<u64> = (0..50).collect();
    let adv = run_attack(&cnn.network, &test.images, &test.labels, &AttackConfig::new(AttackKind::Bim, 0.3, 7), &ids)?;
    let x_adv = stack(&adv, test.images.shape())?;
    for (name, x) in [("clean", &test.images), ("bim 0.3", &x_adv)] {
        let inf = cnn.network.infer(x)?;
        let scores = closeness_scores(&mlp, &inf.penultimate, &inf.predictions())?;
        println!("{name:<8} mean closeness {:.4}", mean(&scores));
    }
    Ok(())
}
