//! Acceptance gate: runs the nine criteria and prints one PASS/FAIL line each.
//!
//! ```text
//! cargo test --release --test acceptance            # all criteria
//! cargo test --release --test acceptance -- 4 5 6   # a subset
//! ADVDETECT_FRESH=1 cargo test --test acceptance    # ignore cached artifacts
//! ```
//!
//! Heavy artifacts (trained CNNs, closeness MLP, evaluated AUC cells) are
//! cached under the cargo target tmp dir, keyed by config hash, together with
//! the wall-clock time of the run that produced them.

#[path = "../common/mod.rs"]
mod common;

mod artifacts;
mod criteria;

use std::process::ExitCode;
use std::time::Instant;

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "cnn accuracy", criteria::cnn_accuracy),
    (2, "detection auc table", criteria::auc_table),
    (3, "metric crossover", criteria::metric_crossover),
    (4, "uncertainty oracles", criteria::uncertainty_oracles),
    (5, "gradient suite", criteria::gradient_suite),
    (6, "roc-auc oracle", criteria::roc_oracle),
    (7, "attack contracts", criteria::attack_contracts),
    (8, "entropy peak and closeness separation", criteria::statistical_behaviour),
    (9, "determinism", criteria::determinism),
];

fn main() -> ExitCode {
    let wanted: Vec<u32> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (id, name, run) in CRITERIA {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1}s] {detail}"),
            Err(reason) => {
                failed += 1;
                println!("criterion {id} ({name}): FAIL [{secs:.1}s] {reason}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
