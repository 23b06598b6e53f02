//! Trains the MNIST Digit CNN and reports test accuracy.
//!
//! With a data directory argument (holding `mnist_digit/`) it uses the real
//! IDX files; without one it trains on a small synthetic stand-in.
//!
//! ```text
//! cargo run --release --example train_cnn [DATA_DIR]
//! ```

use advdetect::data::{DatasetId, LabeledDataset, Split};
use advdetect::nn::{accuracy, build_architecture, train_classifier, ModelKind, TrainHyper};
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
            data.push(if band { 0.9 } else { rng.gen_range(0.0..0.2) });
        }
    }
    LabeledDataset::new(Tensor::new(vec![n, 1, 28, 28], data).unwrap(), labels, 10).unwrap()
}

fn main() -> advdetect::Result<()> {
    let (train, test) = match std::env::args().nth(1) {
        Some(dir) => {
            let root = std::path::Path::new(&dir);
            (
                DatasetId::MnistDigit.load_split(root, Split::Train)?.truncate(5000),
                DatasetId::MnistDigit.load_split(root, Split::Test)?.truncate(1000),
            )
        }
        None => (synthetic(400, 1), synthetic(100, 2)),
    };
    let hyper = TrainHyper { epochs: 2, batch_size: 32, lr: 1e-3, seed: 7 };
    let spec = build_architecture(DatasetId::MnistDigit, ModelKind::Cnn);
    let (ckpt, history) = train_classifier(spec, &train.images, &train.labels, &hyper, "mnist_digit")?;
    for e in &history {
        println!("epoch {:>2}  loss {:.4}  train acc {:.3}", e.epoch, e.loss, e.accuracy);
    }
    let acc = accuracy(&ckpt.network, &test.images, &test.labels)?;
    println!("test accuracy {acc:.4} on {} images", test.len());
    Ok(())
}
