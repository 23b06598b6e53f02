//! Runs the command-level pipeline (train-cnn, build-closeness, sweep) on a
//! synthetic IDX dataset written to a temporary directory, then prints the
//! AUC-versus-eps table.
//!
//! ```text
//! cargo run --release --example sweep
//! ```

use std::fs;
use std::path::Path;

use advdetect::data::DatasetId;
use advdetect::experiment::{run_build_closeness, run_sweep, run_train_cnn, ExperimentConfig};
use advdetect::rng::stream;
use rand::Rng;

fn write_idx(dir: &Path, prefix: &str, n: usize, seed: u64) -> std::io::Result<()> {
    let mut rng = stream(seed, "example-idx", 0);
    let mut images = vec![0, 0, 8, 3];
    for d in [n as u32, 28, 28] {
        images.extend(d.to_be_bytes());
    }
    let mut labels = vec![0, 0, 8, 1];
    labels.extend((n as u32).to_be_bytes());
    for i in 0..n {
        let c = i % 10;
        labels.push(c as u8);
        images.extend((0..784).map(|p| if (p / 28) / 3 == c { rng.gen_range(160..230) } else { rng.gen_range(0..70) }));
    }
    fs::write(dir.join(format!("{prefix}-images-idx3-ubyte")), images)?;
    fs::write(dir.join(format!("{prefix}-labels-idx1-ubyte")), labels)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join("advdetect-sweep-example");
    let data = root.join("data").join("mnist_digit");
    fs::create_dir_all(&data)?;
    write_idx(&data, "train", 300, 1)?;
    write_idx(&data, "t10k", 60, 2)?;

    let mut cfg = ExperimentConfig::defaults(DatasetId::MnistDigit);
    cfg.data_dir = root.join("data");
    cfg.out_dir = root.join("out");
    cfg.cnn_epochs = 2;
    cfg.mlp_epochs = 5;
    cfg.cap = 30;
    cfg.mc_samples = 10;
    cfg.sweep_eps = vec![0.0, 0.1, 0.2, 0.3];

    println!("cnn test accuracy {:.3}", run_train_cnn(&cfg)?.test_accuracy);
    run_build_closeness(&cfg)?;
    println!("{:>5} {:>8} {:>6} {:>6}", "eps", "success", "epi", "close");
    for row in run_sweep(&cfg)? {
        println!(
            "{:>5.2} {:>8.3} {:>6.3} {:>6.3}",
            row.eps,
            row.success_rate,
            row.get("epi").unwrap(),
            row.get("close").unwrap()
        );
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}
