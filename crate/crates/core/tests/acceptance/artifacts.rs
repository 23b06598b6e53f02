//! Cached pipeline stages shared by the data-driven criteria.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use advdetect::attacks::AttackKind;
use advdetect::data::DatasetId;
use advdetect::experiment::{self, EvalContext, ExperimentConfig, FEATURES_FILE};

static RAN: Mutex<Option<HashSet<PathBuf>>> = Mutex::new(None);

/// Key/value numbers saved next to a stage's artifacts.
#[derive(Debug, Clone)]
pub struct Record(BTreeMap<String, f64>);

impl Record {
    pub fn get(&self, key: &str) -> f64 {
        self.0.get(key).copied().unwrap_or(f64::NAN)
    }

    pub fn secs(&self) -> f64 {
        self.get("secs")
    }
}

fn fresh() -> bool {
    std::env::var("ADVDETECT_FRESH").is_ok_and(|v| v == "1")
}

pub fn data_root() -> PathBuf {
    std::env::var_os("ADVDETECT_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

pub fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).expect("scratch dir");
    dir
}

/// Default config for `dataset` with artifacts under a hash-keyed cache dir.
pub fn config(dataset: DatasetId) -> Result<ExperimentConfig, String> {
    let root = data_root();
    if !root.join(dataset.as_str()).is_dir() {
        return Err(format!(
            "no {dataset} data under {}; run scripts/fetch_data.sh or set ADVDETECT_DATA",
            root.display()
        ));
    }
    let mut cfg = ExperimentConfig::defaults(dataset);
    cfg.data_dir = root;
    cfg.out_dir = Path::new(env!("CARGO_TARGET_TMPDIR"))
        .join("acceptance")
        .join(format!("{dataset}-{}", cfg.hash()));
    Ok(cfg)
}

/// Runs `f` once and records its numbers and wall time, or returns the
/// record of an earlier run.
fn stage(
    dir: &Path,
    name: &str,
    f: impl FnOnce() -> advdetect::Result<Vec<(&'static str, f64)>>,
) -> Result<Record, String> {
    let path = dir.join(format!("{name}.record"));
    let mut ran = RAN.lock().unwrap();
    let ran = ran.get_or_insert_with(HashSet::new);
    if path.exists() && (!fresh() || ran.contains(&path)) {
        return read_record(&path);
    }
    fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut values = f().map_err(|e| format!("{name}: {e}"))?;
    values.push(("secs", start.elapsed().as_secs_f64()));
    let text: String = values.iter().map(|(k, v)| format!("{k} {v:?}\n")).collect();
    fs::write(&path, text).map_err(|e| e.to_string())?;
    ran.insert(path.clone());
    read_record(&path)
}

fn read_record(path: &Path) -> Result<Record, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for line in text.lines() {
        let (k, v) = line.split_once(' ').ok_or("malformed record")?;
        map.insert(k.to_string(), v.parse().map_err(|_| "malformed record")?);
    }
    Ok(Record(map))
}

/// Trained CNN for `dataset`: test accuracy and training time.
pub fn trained_cnn(cfg: &ExperimentConfig) -> Result<Record, String> {
    stage(&cfg.out_dir, "train-cnn", || {
        let r = experiment::run_train_cnn(cfg)?;
        Ok(vec![("accuracy", r.test_accuracy)])
    })
}

/// Closeness feature dataset and MLP on top of the trained CNN.
pub fn closeness(cfg: &ExperimentConfig) -> Result<Record, String> {
    trained_cnn(cfg)?;
    let r = stage(&cfg.out_dir, "build-closeness", || {
        let r = experiment::run_build_closeness(cfg)?;
        Ok(vec![("rows", r.rows as f64), ("mlp_accuracy", r.mlp_train_accuracy)])
    })?;
    if !cfg.out_dir.join(FEATURES_FILE).exists() {
        return Err("closeness record present but artifacts missing; rerun with ADVDETECT_FRESH=1".into());
    }
    Ok(r)
}

/// One evaluated (attack, eps) cell: per-metric and combined AUC.
pub fn cell(cfg: &ExperimentConfig, kind: AttackKind, eps: f64) -> Result<Record, String> {
    closeness(cfg)?;
    stage(&cfg.out_dir, &format!("cell-{kind}-{eps:?}"), || {
        let ctx = EvalContext::load(cfg)?;
        let row = experiment::evaluate_cell(&ctx, cfg, kind, eps)?.row;
        let mut v = vec![("n", row.n as f64), ("success_rate", row.success_rate), ("all", row.all_auc)];
        for (name, auc) in advdetect::detector::FEATURE_NAMES.iter().zip(row.metric_auc) {
            v.push((name, auc));
        }
        Ok(v)
    })
}
