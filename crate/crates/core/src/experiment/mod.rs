//! End-to-end experiment commands. Each reads an [`ExperimentConfig`],
//! writes its artifacts under `out_dir`, and returns a summary.

mod config;
mod report;

use std::fs;
use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use report::{line_chart, num, CsvTable, Series};

use crate::attacks::{self, AttackKind, CraftedSet};
use crate::closeness::{build_feature_dataset, train_closeness_mlp, FeatureDataset};
use crate::data::{LabeledDataset, Split};
use crate::detector::{
    assemble_detection_set, correctly_classified, cross_validated_scores, roc_auc, CvResult,
    DetectionSet, FEATURE_COUNT, FEATURE_NAMES,
};
use crate::error::{Error, Result};
use crate::nn::{accuracy, build_architecture, train_classifier, Checkpoint, EpochStats, ModelKind};

pub const CNN_FILE: &str = "cnn.ckpt";
pub const CNN_HISTORY_FILE: &str = "cnn_history.csv";
pub const FEATURES_FILE: &str = "features.advd";
pub const MLP_FILE: &str = "mlp.ckpt";
pub const MLP_HISTORY_FILE: &str = "mlp_history.csv";
pub const AUC_TABLE_FILE: &str = "auc_table.csv";

/// Column names of AUC tables, after `attack,eps,n,success_rate`.
pub const AUC_COLUMNS: [&str; 6] = ["epi", "ale", "sci", "ent", "close", "all"];

fn ensure_out_dir(cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))
}

fn out(cfg: &ExperimentConfig, file: &str) -> PathBuf {
    cfg.out_dir.join(file)
}

fn load_split(cfg: &ExperimentConfig, split: Split) -> Result<LabeledDataset> {
    cfg.dataset.load_split(&cfg.data_dir, split)
}

fn load_checkpoint(path: &Path, what: &str) -> Result<Checkpoint> {
    if !path.exists() {
        return Err(Error::format(path, format!("{what} checkpoint not found; run the earlier command first")));
    }
    Checkpoint::load(path)
}

fn history_table(history: &[EpochStats]) -> CsvTable {
    let mut t = CsvTable::new(&["epoch", "loss", "accuracy"]);
    for h in history {
        t.push(vec![h.epoch.to_string(), num(h.loss), num(h.accuracy)]);
    }
    t
}

#[derive(Debug, Clone)]
pub struct TrainCnnReport {
    pub test_accuracy: f64,
    pub history: Vec<EpochStats>,
    pub checkpoint: Checkpoint,
}

/// Trains the dataset's CNN; writes `cnn.ckpt` and `cnn_history.csv`.
pub fn run_train_cnn(cfg: &ExperimentConfig) -> Result<TrainCnnReport> {
    cfg.validate()?;
    let mut train = load_split(cfg, Split::Train)?;
    if let Some(c) = cfg.train_cap {
        train = train.truncate(c);
    }
    let test = load_split(cfg, Split::Test)?;
    ensure_out_dir(cfg)?;
    let spec = build_architecture(cfg.dataset, ModelKind::Cnn);
    let (ck, history) = train_classifier(spec, &train.images, &train.labels, &cfg.cnn_hyper(), cfg.dataset.as_str())?;
    ck.save(out(cfg, CNN_FILE))?;
    history_table(&history).write(&out(cfg, CNN_HISTORY_FILE), cfg.seed, &cfg.hash())?;
    let test_accuracy = accuracy(&ck.network, &test.images, &test.labels)?;
    Ok(TrainCnnReport {
        test_accuracy,
        history,
        checkpoint: ck,
    })
}

#[derive(Debug, Clone)]
pub struct ClosenessReport {
    pub rows: usize,
    pub mlp_train_accuracy: f64,
    pub history: Vec<EpochStats>,
}

/// Builds the feature dataset from the trained CNN and trains the
/// closeness MLP; writes `features.advd`, `mlp.ckpt` and `mlp_history.csv`.
pub fn run_build_closeness(cfg: &ExperimentConfig) -> Result<ClosenessReport> {
    cfg.validate()?;
    let cnn = load_checkpoint(&out(cfg, CNN_FILE), "CNN")?;
    let mut train = load_split(cfg, Split::Train)?;
    if let Some(c) = cfg.closeness_cap {
        train = train.truncate(c);
    }
    let fd = build_feature_dataset(&cnn, &train, cfg.closeness_eps, crate::rng::derive_seed(cfg.seed, "closeness", 0))?;
    fd.save(out(cfg, FEATURES_FILE))?;
    let (mlp, history) = train_closeness_mlp(&fd, cfg.dataset, &cfg.mlp_hyper())?;
    mlp.save(out(cfg, MLP_FILE))?;
    history_table(&history).write(&out(cfg, MLP_HISTORY_FILE), cfg.seed, &cfg.hash())?;
    Ok(ClosenessReport {
        rows: fd.len(),
        mlp_train_accuracy: accuracy(&mlp.network, &fd.features, &fd.labels)?,
        history,
    })
}

/// Loads a previously written feature dataset.
pub fn load_features(cfg: &ExperimentConfig) -> Result<FeatureDataset> {
    FeatureDataset::load(out(cfg, FEATURES_FILE))
}

fn cell_name(kind: AttackKind, eps: f64) -> String {
    format!("{kind}_{eps}")
}

/// Attacks the first `cap` correctly classified test samples for every
/// configured (attack, eps); writes `crafted_<attack>_<eps>.txt` manifests
/// and `.advd` blobs.
pub fn run_craft(cfg: &ExperimentConfig) -> Result<Vec<CraftedSet>> {
    cfg.validate()?;
    if cfg.attacks.is_empty() || cfg.eps.is_empty() {
        return Err(Error::Config("craft needs at least one attack and one eps".into()));
    }
    let cnn = load_checkpoint(&out(cfg, CNN_FILE), "CNN")?;
    let test = load_split(cfg, Split::Test)?;
    let survivors = correctly_classified(&cnn.network, &test, cfg.cap)?;
    if survivors.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let x = test.images.select_rows(&survivors);
    let y: Vec<usize> = survivors.iter().map(|&i| test.labels[i]).collect();
    let ids: Vec<u64> = survivors.iter().map(|&i| i as u64).collect();
    let mut sets = Vec::new();
    for &kind in &cfg.attacks {
        for &eps in &cfg.eps {
            let outcomes = attacks::run_attack(&cnn.network, &x, &y, &cfg.attack_config(kind, eps), &ids)?;
            let set = CraftedSet {
                kind,
                eps,
                source_indices: survivors.clone(),
                outcomes,
            };
            let name = cell_name(kind, eps);
            set.save(
                &out(cfg, &format!("crafted_{name}.txt")),
                &out(cfg, &format!("crafted_{name}.advd")),
                &test.images.shape()[1..],
            )?;
            sets.push(set);
        }
    }
    Ok(sets)
}

/// One row of an AUC table.
#[derive(Debug, Clone, PartialEq)]
pub struct AucRow {
    pub attack: AttackKind,
    pub eps: f64,
    /// Attacked (correctly classified) samples.
    pub n: usize,
    pub success_rate: f64,
    /// Raw-metric AUCs in feature order.
    pub metric_auc: [f64; FEATURE_COUNT],
    /// Cross-validated AUC of the five-feature detector.
    pub all_auc: f64,
}

impl AucRow {
    fn cells(&self) -> Vec<String> {
        let mut v = vec![
            self.attack.to_string(),
            num(self.eps),
            self.n.to_string(),
            num(self.success_rate),
        ];
        v.extend(self.metric_auc.iter().map(|&a| num(a)));
        v.push(num(self.all_auc));
        v
    }

    /// AUC by column name (`epi` .. `close`, `all`).
    pub fn get(&self, column: &str) -> Option<f64> {
        if column == "all" {
            return Some(self.all_auc);
        }
        FEATURE_NAMES.iter().position(|&c| c == column).map(|i| self.metric_auc[i])
    }
}

fn auc_table(rows: &[AucRow]) -> CsvTable {
    let mut header = vec!["attack", "eps", "n", "success_rate"];
    header.extend(AUC_COLUMNS);
    let mut t = CsvTable::new(&header);
    for r in rows {
        t.push(r.cells());
    }
    t
}

/// Everything computed for one (attack, eps) cell.
#[derive(Debug, Clone)]
pub struct CellResult {
    pub row: AucRow,
    pub set: DetectionSet,
    pub cv: CvResult,
}

/// Loaded CNN, MLP and test split, shared by evaluation cells.
pub struct EvalContext {
    pub cnn: Checkpoint,
    pub mlp: Checkpoint,
    pub test: LabeledDataset,
}

impl EvalContext {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(EvalContext {
            cnn: load_checkpoint(&out(cfg, CNN_FILE), "CNN")?,
            mlp: load_checkpoint(&out(cfg, MLP_FILE), "closeness MLP")?,
            test: load_split(cfg, Split::Test)?,
        })
    }
}

/// Assembles the detection set for one cell and scores every metric.
pub fn evaluate_cell(ctx: &EvalContext, cfg: &ExperimentConfig, kind: AttackKind, eps: f64) -> Result<CellResult> {
    let seed = crate::rng::derive_seed(cfg.seed, "evaluate", 0);
    let set = assemble_detection_set(
        &ctx.cnn.network,
        &ctx.mlp,
        &ctx.test,
        &cfg.attack_config(kind, eps),
        cfg.mc_samples,
        cfg.cap,
        seed,
    )?;
    let labels = set.labels();
    let mut metric_auc = [0.0; FEATURE_COUNT];
    for (f, a) in metric_auc.iter_mut().enumerate() {
        *a = roc_auc(&set.metric_scores(f), &labels)?.auc;
    }
    let cv = cross_validated_scores(
        &set.feature_rows(),
        &labels,
        &set.groups(),
        cfg.folds,
        crate::rng::derive_seed(cfg.seed, "folds", 0),
        &cfg.logreg_hyper(),
    )?;
    let row = AucRow {
        attack: kind,
        eps,
        n: set.survivors.len(),
        success_rate: set.attack_success_rate(),
        metric_auc,
        all_auc: cv.mean_auc,
    };
    Ok(CellResult { row, set, cv })
}

fn write_cell(cfg: &ExperimentConfig, cell: &CellResult) -> Result<()> {
    let name = cell_name(cell.row.attack, cell.row.eps);
    let hash = cfg.hash();

    let mut header = vec!["sample_id", "origin", "attack", "eps"];
    header.extend(FEATURE_NAMES);
    header.push("label");
    let mut det = CsvTable::new(&header);
    for s in &cell.set.samples {
        let mut r = vec![s.sample_id.to_string(), s.origin.to_string(), s.attack.to_string(), num(s.eps)];
        r.extend(s.features.iter().map(|&v| num(v)));
        r.push(u8::from(s.label()).to_string());
        det.push(r);
    }
    det.write(&out(cfg, &format!("detection_{name}.csv")), cfg.seed, &hash)?;

    let labels = cell.set.labels();
    let mut curves = Vec::new();
    for (f, fname) in FEATURE_NAMES.iter().enumerate() {
        curves.push((fname.to_string(), roc_auc(&cell.set.metric_scores(f), &labels)?));
    }
    curves.push(("all".to_string(), roc_auc(&cell.cv.out_of_fold, &labels)?));
    let mut roc = CsvTable::new(&["metric", "threshold", "fpr", "tpr"]);
    for (m, c) in &curves {
        for i in 0..c.fpr.len() {
            roc.push(vec![m.clone(), num(c.thresholds[i]), num(c.fpr[i]), num(c.tpr[i])]);
        }
    }
    roc.write(&out(cfg, &format!("roc_{name}.csv")), cfg.seed, &hash)?;
    let series: Vec<Series> = curves
        .iter()
        .map(|(m, c)| Series {
            name: format!("{m} ({:.3})", c.auc),
            points: c.fpr.iter().copied().zip(c.tpr.iter().copied()).collect(),
        })
        .collect();
    let svg = line_chart(
        &format!("ROC: {} eps={}", cell.row.attack, cell.row.eps),
        "false positive rate",
        "true positive rate",
        (0.0, 1.0),
        &series,
        true,
    );
    let path = out(cfg, &format!("roc_{name}.svg"));
    fs::write(&path, svg).map_err(|e| Error::io(&path, e))
}

/// Runs every configured (attack, eps) cell; writes `auc_table.csv` and per
/// cell `detection_*.csv`, `roc_*.csv` and `roc_*.svg`.
pub fn run_evaluate(cfg: &ExperimentConfig) -> Result<Vec<AucRow>> {
    cfg.validate()?;
    if cfg.attacks.is_empty() || cfg.eps.is_empty() {
        return Err(Error::Config("evaluate needs at least one attack and one eps".into()));
    }
    let ctx = EvalContext::load(cfg)?;
    ensure_out_dir(cfg)?;
    let mut rows = Vec::new();
    for &kind in &cfg.attacks {
        for &eps in &cfg.eps {
            let cell = evaluate_cell(&ctx, cfg, kind, eps)?;
            write_cell(cfg, &cell)?;
            rows.push(cell.row);
        }
    }
    auc_table(&rows).write(&out(cfg, AUC_TABLE_FILE), cfg.seed, &cfg.hash())?;
    Ok(rows)
}

/// AUC of every metric for `sweep_attack` over `sweep_eps`; writes
/// `sweep_<attack>.csv` and `sweep_<attack>.svg`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<AucRow>> {
    cfg.validate()?;
    if cfg.sweep_eps.is_empty() {
        return Err(Error::Config("sweep_eps is empty".into()));
    }
    let ctx = EvalContext::load(cfg)?;
    ensure_out_dir(cfg)?;
    let kind = cfg.sweep_attack;
    let mut rows = Vec::new();
    for &eps in &cfg.sweep_eps {
        rows.push(evaluate_cell(&ctx, cfg, kind, eps)?.row);
    }
    auc_table(&rows).write(&out(cfg, &format!("sweep_{kind}.csv")), cfg.seed, &cfg.hash())?;
    let lo = cfg.sweep_eps.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cfg.sweep_eps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let series: Vec<Series> = AUC_COLUMNS
        .iter()
        .map(|&c| Series {
            name: c.to_string(),
            points: rows.iter().map(|r| (r.eps, r.get(c).unwrap_or(0.0))).collect(),
        })
        .collect();
    let svg = line_chart(
        &format!("ROC-AUC vs eps ({kind})"),
        "eps",
        "ROC-AUC",
        (lo, if hi > lo { hi } else { lo + 1.0 }),
        &series,
        false,
    );
    let path = out(cfg, &format!("sweep_{kind}.svg"));
    fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
