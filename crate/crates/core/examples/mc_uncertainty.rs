//! MC-dropout uncertainty of a clean input versus a blend of two classes.
//!
//! ```text
//! cargo run --release --example mc_uncertainty
//! ```

use advdetect::nn::{train_classifier, LayerSpec, NetworkSpec, TrainHyper};
use advdetect::rng::stream;
use advdetect::uncertainty::{mc_predict, UncertaintyEstimate};
use advdetect::Tensor;
use rand::Rng;

fn main() -> advdetect::Result<()> {
    let mut rng = stream(5, "data", 0);
    let n = 400;
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let data: Vec<f64> = labels
        .iter()
        .flat_map(|&c| {
            let centre = if c == 0 { 0.25 } else { 0.75 };
            (0..8).map(|_| centre + rng.gen_range(-0.15..0.15)).collect::<Vec<_>>()
        })
        .collect();
    let x = Tensor::new(vec![n, 8], data)?;
    let spec = NetworkSpec::new(
        vec![8],
        2,
        vec![
            LayerSpec::dense(8, 64),
            LayerSpec::Relu,
            LayerSpec::dropout(0.5),
            LayerSpec::dense(64, 2),
        ],
    )?;
    let hyper = TrainHyper { epochs: 10, batch_size: 16, lr: 1e-2, seed: 1 };
    let (ckpt, _) = train_classifier(spec, &x, &labels, &hyper, "toy")?;

    for (name, value) in [("clean class 0", 0.2), ("clean class 1", 0.8), ("ambiguous", 0.5)] {
        let input = Tensor::filled(&[8], value);
        let ens = mc_predict(&ckpt.network, &input, 200, &mut stream(9, "mc", 0))?;
        let u = UncertaintyEstimate::from_ensemble(&ens);
        println!(
            "{name:<14} class {}  epi {:.5}  ale {:.5}  sci {:.4}  ent {:.4}",
            u.predicted_class, u.epistemic, u.aleatoric, u.scibilic, u.entropy
        );
    }
    Ok(())
}
