//! ROC-AUC of single scores and of a cross-validated logistic regression
//! over two noisy features.
//!
//! ```text
//! cargo run --example roc_auc
//! ```

use advdetect::detector::{cross_validated_auc, roc_auc, LogRegHyper};
use advdetect::rng::stream;
use rand_distr::{Distribution, Normal};

fn main() -> advdetect::Result<()> {
    let curve = roc_auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true])?;
    println!("toy auc {:.3}", curve.auc);
    for (t, (f, p)) in curve.thresholds.iter().zip(curve.fpr.iter().zip(&curve.tpr)) {
        println!("  threshold {t:>6}  fpr {f:.2}  tpr {p:.2}");
    }

    let mut rng = stream(2, "features", 0);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let positive = i % 2 == 1;
        let shift = if positive { 1.0 } else { 0.0 };
        rows.push(vec![shift + noise.sample(&mut rng), 0.5 * shift + noise.sample(&mut rng)]);
        labels.push(positive);
    }
    let groups: Vec<usize> = (0..rows.len()).collect();
    for f in 0..2 {
        let scores: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        println!("feature {f} auc {:.3}", roc_auc(&scores, &labels)?.auc);
    }
    let auc = cross_validated_auc(&rows, &labels, &groups, 5, 3, &LogRegHyper::default())?;
    println!("5-fold logistic regression auc {auc:.3}");
    Ok(())
}
