use std::fs;

use advdetect::attacks::{linf_to_l2, run_attack, stack, AttackConfig, AttackKind};
use advdetect::closeness::closeness_scores;
use advdetect::data::{DatasetId, Split};
use advdetect::detector::{correctly_classified, roc_auc};
use advdetect::experiment::{self, ExperimentConfig, CNN_FILE, MLP_FILE};
use advdetect::nn::{Checkpoint, Network};
use advdetect::rng::stream;
use advdetect::uncertainty::{aleatoric, epistemic, estimate_batch, predictive_entropy, scibilic, PredictionEnsemble};
use advdetect::Tensor;
use rand::Rng;

use crate::artifacts::{self, Record};
use crate::{common, Outcome};

/// Collects named checks; passes only if every one holds.
#[derive(Default)]
struct Checks(Vec<(bool, String)>);

impl Checks {
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.0.push((ok, what.into()));
    }

    fn verdict(self) -> Outcome {
        let failed: Vec<_> = self.0.iter().filter(|(ok, _)| !ok).map(|(_, w)| w.as_str()).collect();
        if failed.is_empty() {
            Ok(self.0.iter().map(|(_, w)| w.as_str()).collect::<Vec<_>>().join("; "))
        } else {
            Err(failed.join("; "))
        }
    }
}

fn err(e: advdetect::Error) -> String {
    e.to_string()
}

fn digit() -> Result<ExperimentConfig, String> {
    artifacts::config(DatasetId::MnistDigit)
}

fn load_cnn(cfg: &ExperimentConfig) -> Result<Network, String> {
    artifacts::trained_cnn(cfg)?;
    Ok(Checkpoint::load(cfg.out_dir.join(CNN_FILE)).map_err(err)?.network)
}

pub fn cnn_accuracy() -> Outcome {
    let mut c = Checks::default();
    for (dataset, floor, budget) in [(DatasetId::MnistDigit, 0.985, 1800.0), (DatasetId::MnistFashion, 0.89, 2700.0)] {
        let r = artifacts::trained_cnn(&artifacts::config(dataset)?)?;
        let (acc, secs) = (r.get("accuracy"), r.secs());
        c.check(acc >= floor, format!("{dataset} accuracy {acc:.4} (>= {floor})"));
        c.check(secs <= budget, format!("{dataset} training {:.1} min (<= {} min)", secs / 60.0, budget / 60.0));
    }
    c.verdict()
}

const TABLE: [(AttackKind, f64, f64); 5] = [
    (AttackKind::Bim, 0.30, 0.99),
    (AttackKind::Pgd, 0.30, 0.99),
    (AttackKind::Fgsm, 0.30, 0.94),
    (AttackKind::Cw, 0.30, 1.00),
    (AttackKind::Bim, 0.12, 0.96),
];

pub fn auc_table() -> Outcome {
    let cfg = digit()?;
    let mut c = Checks::default();
    let mut secs = artifacts::closeness(&cfg)?.secs();
    for (kind, eps, target) in TABLE {
        let r = artifacts::cell(&cfg, kind, eps)?;
        secs += r.secs();
        let all = r.get("all");
        c.check(
            (all - target).abs() <= 0.05,
            format!("{kind} {eps}: all {all:.3} vs {target} (n {}, success {:.3})", r.get("n"), r.get("success_rate")),
        );
    }
    c.check(secs <= 7200.0, format!("closeness + cells {:.1} min (<= 120 min)", secs / 60.0));
    match cifar_pipeline() {
        Ok(()) => c.check(true, "2-epoch cifar pipeline ran (synthetic CIFAR-format data)"),
        Err(e) => c.check(false, format!("cifar pipeline: {e}")),
    }
    c.verdict()
}

fn cifar_pipeline() -> Result<(), String> {
    let root = artifacts::scratch("cifar");
    common::write_cifar_like(&root.join("data").join("cifar10"), 200, 40, 3);
    let mut cfg = ExperimentConfig::defaults(DatasetId::Cifar10);
    cfg.data_dir = root.join("data");
    cfg.out_dir = root.join("out");
    cfg.cnn_epochs = 2;
    cfg.mlp_epochs = 2;
    cfg.closeness_cap = Some(50);
    cfg.cap = 10;
    cfg.mc_samples = 5;
    cfg.folds = 2;
    cfg.attacks = AttackKind::ALL.to_vec();
    cfg.eps = vec![0.03];
    cfg.cw_binary_steps = 2;
    cfg.cw_inner_steps = 10;
    experiment::run_train_cnn(&cfg).map_err(err)?;
    experiment::run_build_closeness(&cfg).map_err(err)?;
    let rows = experiment::run_evaluate(&cfg).map_err(err)?;
    if rows.len() != AttackKind::ALL.len() {
        return Err(format!("{} rows evaluated", rows.len()));
    }
    Ok(())
}

pub fn metric_crossover() -> Outcome {
    let cfg = digit()?;
    let low: Record = artifacts::cell(&cfg, AttackKind::Bim, 0.12)?;
    let high = artifacts::cell(&cfg, AttackKind::Bim, 0.30)?;
    let mut c = Checks::default();
    let (e1, e2) = (low.get("epi"), high.get("epi"));
    let (c1, c2) = (low.get("close"), high.get("close"));
    c.check(e1 - e2 >= 0.15, format!("epistemic auc {e1:.3} -> {e2:.3} (drop >= 0.15)"));
    c.check(c2 - c1 >= 0.10, format!("closeness auc {c1:.3} -> {c2:.3} (rise >= 0.10)"));
    c.verdict()
}

fn ens(rows: &[&[f64]]) -> PredictionEnsemble {
    PredictionEnsemble::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

pub fn uncertainty_oracles() -> Outcome {
    let mut c = Checks::default();
    let close = |a: f64, b: f64| (a - b).abs() <= 1e-9;
    let u = [0.1; 10];
    let examples = [
        ("aleatoric one-hot", aleatoric(&ens(&[&[1.0, 0.0], &[0.0, 1.0]])), 0.0),
        ("aleatoric uniform", aleatoric(&ens(&[&u, &u])), 0.09),
        ("aleatoric mixed", aleatoric(&ens(&[&[1.0, 0.0], &[0.5, 0.5]])), 0.125),
        ("epistemic identical", epistemic(&ens(&[&[0.3, 0.7], &[0.3, 0.7]])), 0.0),
        ("epistemic opposite", epistemic(&ens(&[&[1.0, 0.0], &[0.0, 1.0]])), 0.25),
        ("scibilic zero", scibilic(0.0, 0.09), 0.0),
        ("scibilic quotient", scibilic(0.02, 0.04), 0.5),
        ("entropy one-hot", predictive_entropy(&ens(&[&[0.0, 1.0, 0.0]])), 0.0),
        ("entropy uniform", predictive_entropy(&ens(&[&u])), 10f64.ln()),
        (
            "entropy [0.75, 0.25]",
            predictive_entropy(&ens(&[&[1.0, 0.0], &[0.5, 0.5]])),
            -(0.75f64 * 0.75f64.ln() + 0.25 * 0.25f64.ln()),
        ),
    ];
    let bad: Vec<_> = examples.iter().filter(|(_, got, want)| !close(*got, *want)).map(|e| e.0).collect();
    let what = if bad.is_empty() { String::new() } else { format!(", off: {bad:?}") };
    c.check(bad.is_empty(), format!("{} analytic examples to 1e-9{what}", examples.len()));
    let guarded = scibilic(0.25, 0.0);
    c.check((guarded / 2.5e11 - 1.0).abs() <= 1e-9, "scibilic guard 2.5e11");

    let mut worst_ltv = 0f64;
    let mut worst_pair = 0f64;
    for seed in 0..1000u64 {
        let rows = common::random_rows(seed, 1 + seed as usize % 50, 2 + seed as usize % 10, 6.0);
        let en = PredictionEnsemble::from_rows(&rows).unwrap();
        let m = en.mean_probs();
        let total = m.iter().map(|p| p - p * p).sum::<f64>() / m.len() as f64;
        worst_ltv = worst_ltv.max((aleatoric(&en) + epistemic(&en) - total).abs());
        worst_pair = worst_pair.max((epistemic(&en) - common::pairwise_epistemic(&rows)).abs());
    }
    c.check(worst_ltv <= 1e-12, format!("total variance over 1000 ensembles, worst {worst_ltv:.1e}"));
    c.check(worst_pair <= 1e-12, format!("pairwise epistemic oracle, worst {worst_pair:.1e}"));
    c.verdict()
}

pub fn gradient_suite() -> Outcome {
    let errs: Vec<f64> = (0..50).map(common::gradient_check).collect();
    let worst = errs.iter().cloned().fold(0.0, f64::max);
    let mut c = Checks::default();
    c.check(worst < 1e-4, format!("50 configurations, worst relative error {worst:.2e}"));
    c.verdict()
}

pub fn roc_oracle() -> Outcome {
    let (mut worst, mut flip, mut mono) = (0f64, 0f64, 0f64);
    for seed in 0..100u64 {
        let n = 2 + (seed as usize * 13) % 150;
        let (s, l) = common::roc_instance(seed, n, [3, 12, 1_000_000][seed as usize % 3]);
        let auc = roc_auc(&s, &l).map_err(err)?.auc;
        worst = worst.max((auc - common::pairwise_auc(&s, &l)).abs());
        let flipped: Vec<bool> = l.iter().map(|x| !x).collect();
        flip = flip.max((auc + roc_auc(&s, &flipped).map_err(err)?.auc - 1.0).abs());
        let t: Vec<f64> = s.iter().map(|v| 2.0 * v.ln_1p() + v.cbrt() - 5.0).collect();
        mono = mono.max((auc - roc_auc(&t, &l).map_err(err)?.auc).abs());
    }
    let mut c = Checks::default();
    c.check(worst <= 1e-12, format!("100 instances with ties vs pairwise, worst {worst:.1e}"));
    c.check(flip <= 1e-12, format!("label flip, worst {flip:.1e}"));
    c.check(mono <= 1e-12, format!("monotone transform, worst {mono:.1e}"));
    c.verdict()
}

fn success_rate(net: &Network, x: &Tensor, y: &[usize], cfg: &AttackConfig) -> Result<f64, String> {
    let ids: Vec<u64> = (0..y.len() as u64).collect();
    let out = run_attack(net, x, y, cfg, &ids).map_err(err)?;
    Ok(out.iter().filter(|o| o.success).count() as f64 / out.len() as f64)
}

fn bim_one_step_is_fgsm(net: &Network, x: &Tensor, y: &[usize], eps: f64) -> Result<bool, String> {
    let ids: Vec<u64> = (0..y.len() as u64).collect();
    let f = run_attack(net, x, y, &AttackConfig::new(AttackKind::Fgsm, eps, 0), &ids).map_err(err)?;
    let mut b = AttackConfig::new(AttackKind::Bim, eps, 0);
    b.iters = 1;
    b.alpha = eps;
    let b = run_attack(net, x, y, &b, &ids).map_err(err)?;
    Ok(f.iter().zip(&b).all(|(f, b)| {
        f.x_adv.data().iter().zip(b.x_adv.data()).all(|(p, q)| p.to_bits() == q.to_bits())
    }))
}

pub fn attack_contracts() -> Outcome {
    let mut c = Checks::default();

    let (mut checks, mut violations, mut seed) = (0usize, 0usize, 0u64);
    let mut identical = true;
    while checks < 10_000 {
        let (net, _, _) = common::random_small_network(seed);
        let mut rng = stream(seed, "budget-checks", 0);
        let rows = 20;
        let mut shape = vec![rows];
        shape.extend_from_slice(&net.spec().input_shape);
        // A quarter of pixels sit exactly on the box edges.
        let x = Tensor::from_fn(&shape, |_| match rng.gen_range(0..8) {
            0 => 0.0,
            1 => 1.0,
            _ => rng.gen_range(0.0..1.0),
        });
        let y: Vec<usize> = (0..rows).map(|_| rng.gen_range(0..net.spec().class_count)).collect();
        let kind = AttackKind::ALL[seed as usize % 5];
        let eps = rng.gen_range(0.0..0.5);
        let mut cfg = AttackConfig::new(kind, eps, seed);
        cfg.cw.inner_steps = 40;
        let ids: Vec<u64> = (0..rows as u64).collect();
        let l2_budget = linf_to_l2(eps, x.row_len());
        for o in run_attack(&net, &x, &y, &cfg, &ids).map_err(err)? {
            let in_box = o.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v));
            let in_ball = match kind {
                AttackKind::Cw => o.l2 <= l2_budget + 1e-9,
                _ => o.linf <= eps + 1e-9,
            };
            violations += usize::from(!(in_box && in_ball));
            checks += 1;
        }
        if seed % 25 == 0 {
            identical &= bim_one_step_is_fgsm(&net, &x, &y, eps)?;
        }
        seed += 1;
    }
    c.check(violations == 0, format!("{checks} budget checks, {violations} violations"));

    let cfg = digit()?;
    let net = load_cnn(&cfg)?;
    let test = DatasetId::MnistDigit.load_split(&cfg.data_dir, Split::Test).map_err(err)?;
    let keep = correctly_classified(&net, &test, 500).map_err(err)?;
    let sub = test.select(&keep);
    identical &= bim_one_step_is_fgsm(&net, &sub.images.select_rows(&(0..100).collect::<Vec<_>>()), &sub.labels[..100], 0.1)?;
    c.check(identical, "bim(iters=1, alpha=eps) bit-identical to fgsm");

    let mut rates = Vec::new();
    for eps in [0.05, 0.1, 0.2, 0.3] {
        rates.push(success_rate(&net, &sub.images, &sub.labels, &cfg.attack_config(AttackKind::Fgsm, eps))?);
    }
    let monotone = rates.windows(2).all(|w| w[0] <= w[1]);
    c.check(
        monotone && sub.len() >= 500,
        format!("fgsm success on {} mnist samples {rates:.3?} non-decreasing", sub.len()),
    );
    let bim = success_rate(&net, &sub.images, &sub.labels, &cfg.attack_config(AttackKind::Bim, 0.3))?;
    c.check(bim >= rates[3], format!("bim {bim:.3} >= fgsm {:.3} at eps 0.3", rates[3]));
    c.verdict()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn statistical_behaviour() -> Outcome {
    let cfg = digit()?;
    artifacts::closeness(&cfg)?;
    let net = load_cnn(&cfg)?;
    let mlp = Checkpoint::load(cfg.out_dir.join(MLP_FILE)).map_err(err)?;
    let test = DatasetId::MnistDigit.load_split(&cfg.data_dir, Split::Test).map_err(err)?;
    let sub = test.select(&correctly_classified(&net, &test, 200).map_err(err)?);
    let n = sub.len();
    let ids: Vec<u64> = (0..n as u64).collect();
    let mut c = Checks::default();

    // Entropy per sample at each eps of the sweep, plus the dropout-off prediction.
    let grid: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
    let mut entropy = vec![vec![0.0; grid.len()]; n];
    let mut flipped = vec![vec![false; grid.len()]; n];
    let mut at_03 = None;
    for (g, &eps) in grid.iter().enumerate() {
        let x = if eps == 0.0 {
            sub.images.clone()
        } else {
            let out = run_attack(&net, &sub.images, &sub.labels, &cfg.attack_config(AttackKind::Bim, eps), &ids)
                .map_err(err)?;
            stack(&out, sub.images.shape()).map_err(err)?
        };
        let preds = net.predict(&x).map_err(err)?;
        let est = estimate_batch(&net, &x, cfg.mc_samples, cfg.seed, &ids).map_err(err)?;
        for i in 0..n {
            entropy[i][g] = est[i].entropy;
            flipped[i][g] = preds[i] != sub.labels[i];
        }
        if (eps - 0.3).abs() < 1e-12 {
            at_03 = Some(x);
        }
    }
    let flips: Vec<(usize, usize)> = (0..n)
        .filter_map(|i| flipped[i].iter().position(|&f| f).map(|g| (i, g)))
        .collect();
    let at_flip = median(flips.iter().map(|&(i, g)| entropy[i][g]).collect());
    let at_zero = median(flips.iter().map(|&(i, _)| entropy[i][0]).collect());
    let at_end = median(flips.iter().map(|&(i, _)| entropy[i][grid.len() - 1]).collect());
    c.check(
        n >= 200 && at_flip > at_zero && at_flip > at_end,
        format!(
            "median entropy over {} of {n} flipped samples: eps 0 {at_zero:.4}, flip {at_flip:.4}, eps 0.5 {at_end:.4}",
            flips.len()
        ),
    );

    let clean = net.infer(&sub.images).map_err(err)?;
    let clean_scores = closeness_scores(&mlp, &clean.penultimate, &clean.predictions()).map_err(err)?;
    let adv = net.infer(at_03.as_ref().unwrap()).map_err(err)?;
    let adv_preds = adv.predictions();
    let adv_scores = closeness_scores(&mlp, &adv.penultimate, &adv_preds).map_err(err)?;
    let mut scores = clean_scores;
    let mut labels = vec![true; n];
    for i in (0..n).filter(|&i| adv_preds[i] != sub.labels[i]) {
        scores.push(adv_scores[i]);
        labels.push(false);
    }
    let auc = roc_auc(&scores, &labels).map_err(err)?.auc;
    c.check(
        auc >= 0.9,
        format!("closeness clean vs {} successful bim 0.3: auc {auc:.3} (>= 0.9)", labels.len() - n),
    );
    c.verdict()
}

pub fn determinism() -> Outcome {
    let base = digit()?;
    artifacts::closeness(&base)?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let dir = artifacts::scratch(&format!("determinism-{run}"));
        for f in [CNN_FILE, MLP_FILE] {
            fs::copy(base.out_dir.join(f), dir.join(f)).map_err(|e| e.to_string())?;
        }
        let mut cfg = base.clone();
        cfg.out_dir = dir.clone();
        cfg.cap = 100;
        cfg.mc_samples = 20;
        cfg.attacks = AttackKind::ALL.to_vec();
        cfg.eps = vec![0.3];
        experiment::run_evaluate(&cfg).map_err(err)?;
        let mut csv: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
            .map_err(|e| e.to_string())?
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().into_string().unwrap())
            .filter(|n| n.ends_with(".csv"))
            .map(|n| {
                let bytes = fs::read(dir.join(&n)).unwrap();
                (n, bytes)
            })
            .collect();
        csv.sort();
        outputs.push(csv);
    }
    let mut c = Checks::default();
    let same_names = outputs[0].iter().map(|f| &f.0).eq(outputs[1].iter().map(|f| &f.0));
    let differing: Vec<_> = outputs[0]
        .iter()
        .zip(&outputs[1])
        .filter(|(a, b)| a.1 != b.1)
        .map(|(a, _)| a.0.clone())
        .collect();
    c.check(
        same_names && differing.is_empty() && outputs[0].len() > AttackKind::ALL.len(),
        format!(
            "evaluate twice: {} csv files, {}",
            outputs[0].len(),
            if differing.is_empty() { "all byte-identical".to_string() } else { format!("differing {differing:?}") }
        ),
    );
    c.verdict()
}
