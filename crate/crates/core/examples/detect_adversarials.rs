//! End-to-end detection for one attack cell: train the CNN and closeness
//! MLP, assemble clean / noisy / adversarial rows and report per-feature
//! and combined ROC-AUC.
//!
//! ```text
//! cargo run --release --example detect_adversarials
//! ```

use advdetect::attacks::{AttackConfig, AttackKind};
use advdetect::closeness::{build_feature_dataset, train_closeness_mlp};
use advdetect::data::{DatasetId, LabeledDataset};
use advdetect::detector::{assemble_detection_set, cross_validated_auc, roc_auc, LogRegHyper, FEATURE_NAMES};
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

fn main() -> advdetect::Result<()> {
    let train = synthetic(300, 1);
    let test = synthetic(60, 2);
    let spec = build_architecture(DatasetId::MnistDigit, ModelKind::Cnn);
    let hyper = TrainHyper { epochs: 2, batch_size: 32, lr: 1e-3, seed: 4 };
    let (cnn, _) = train_classifier(spec, &train.images, &train.labels, &hyper, "mnist_digit")?;
    let fd = build_feature_dataset(&cnn, &train, 0.2, 5)?;
    let mlp_hyper = TrainHyper { epochs: 5, batch_size: 32, lr: 1e-3, seed: 6 };
    let (mlp, _) = train_closeness_mlp(&fd, DatasetId::MnistDigit, &mlp_hyper)?;

    let attack = AttackConfig::new(AttackKind::Bim, 0.3, 7);
    let set = assemble_detection_set(&cnn.network, &mlp, &test, &attack, 20, 40, 8)?;
    println!("rows {}  attack success {:.3}", set.samples.len(), set.attack_success_rate());
    let labels = set.labels();
    for (f, name) in FEATURE_NAMES.iter().enumerate() {
        println!("{name:<6} auc {:.3}", roc_auc(&set.metric_scores(f), &labels)?.auc);
    }
    let all = cross_validated_auc(&set.feature_rows(), &labels, &set.groups(), 5, 9, &LogRegHyper::default())?;
    println!("all    auc {all:.3}");
    Ok(())
}
