mod common;

use std::collections::BTreeMap;

use advdetect::attacks::{
    bim, carlini_wagner, deepfool, fgsm, pgd, run_attack, AttackConfig, AttackKind, CwConfig,
};
use advdetect::nn::{LayerSpec, Network, NetworkSpec};
use advdetect::rng::stream;
use advdetect::Tensor;
use proptest::prelude::*;

fn linear(w: &[f64], b: &[f64], inputs: usize, classes: usize) -> Network {
    let spec = NetworkSpec::new(vec![inputs], classes, vec![LayerSpec::dense(inputs, classes)]).unwrap();
    Network::new(
        spec,
        BTreeMap::from([
            ("layer0.weight".into(), Tensor::new(vec![classes, inputs], w.to_vec()).unwrap()),
            ("layer0.bias".into(), Tensor::new(vec![classes], b.to_vec()).unwrap()),
        ]),
    )
    .unwrap()
}

fn row(v: &[f64]) -> Tensor {
    Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
}

#[test]
fn fgsm_logistic_toy() {
    // softmax([0, 2x])[1] = sigmoid(2x): the 1-D logistic model w=2, b=0.
    let net = linear(&[0.0, 2.0], &[0.0, 0.0], 1, 2);
    let out = fgsm(&net, &row(&[0.3]), &[1], 0.1).unwrap();
    assert!((out[0].x_adv.data()[0] - 0.2).abs() < 1e-15);
    assert_eq!(out[0].iterations_used, 1);
}

#[test]
fn zero_budget_is_identity() {
    let (net, x, y) = common::random_small_network(0);
    for o in fgsm(&net, &x, &y, 0.0).unwrap() {
        assert_eq!(o.linf, 0.0);
    }
    let outs = pgd(&net, &x, &y, 0.0, 0.0, 5, &mut stream(0, "t", 0)).unwrap();
    for (i, o) in outs.iter().enumerate() {
        assert_eq!(o.x_adv.data(), x.row(i));
    }
    let cfg = AttackConfig::new(AttackKind::Bim, 0.0, 0);
    let ids: Vec<u64> = (0..y.len() as u64).collect();
    for o in run_attack(&net, &x, &y, &cfg, &ids).unwrap() {
        assert_eq!(o.linf, 0.0);
    }
}

#[test]
fn bim_single_full_step_equals_fgsm() {
    for seed in 0..10 {
        let (net, x, y) = common::random_small_network(seed);
        let a = fgsm(&net, &x, &y, 0.17).unwrap();
        let b = bim(&net, &x, &y, 0.17, 0.17, 1).unwrap();
        for (a, b) in a.iter().zip(&b) {
            assert_eq!(a.x_adv, b.x_adv);
        }
    }
}

#[test]
fn pgd_is_seed_deterministic() {
    let (net, x, y) = common::random_small_network(1);
    let a = pgd(&net, &x, &y, 0.1, 0.01, 5, &mut stream(7, "t", 0)).unwrap();
    let b = pgd(&net, &x, &y, 0.1, 0.01, 5, &mut stream(7, "t", 0)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn pgd_results_do_not_depend_on_chunking() {
    let (net, x, y) = common::random_small_network(3);
    let cfg = AttackConfig::new(AttackKind::Pgd, 0.2, 11);
    let ids: Vec<u64> = (40..40 + y.len() as u64).collect();
    let whole = run_attack(&net, &x, &y, &cfg, &ids).unwrap();
    for i in 0..y.len() {
        let single = run_attack(&net, &x.select_rows(&[i]), &y[i..=i], &cfg, &ids[i..=i]).unwrap();
        assert_eq!(single[0], whole[i]);
    }
}

#[test]
fn deepfool_linear_closed_form() {
    // Logit gap g = f1 - f0 at x; w = W1 - W0. One L-inf step of size
    // |g| / |w|_1 along sign(w) reaches the boundary.
    let w = [0.5, -1.0, 0.25, 2.0, 1.0, 0.5, -0.75, -1.0];
    let net = linear(&w, &[0.3, 0.0], 4, 2);
    let x = row(&[0.5, 0.5, 0.5, 0.5]);
    let out = deepfool(&net, &x, 1.0, 0.0, 1).unwrap();
    let dw: Vec<f64> = (0..4).map(|j| w[4 + j] - w[j]).collect();
    let gap: f64 = 0.3 - dw.iter().map(|d| d * 0.5).sum::<f64>();
    let w1: f64 = dw.iter().map(|d| d.abs()).sum();
    let want = (gap.abs() + 1e-4) / w1;
    for j in 0..4 {
        let delta = out[0].x_adv.data()[j] - 0.5;
        assert!((delta - want * dw[j].signum()).abs() < 1e-12);
    }
    assert!(out[0].success);
    assert_eq!(out[0].iterations_used, 1);
    assert!((out[0].linf - gap.abs() / w1).abs() < 1e-4);
}

#[test]
fn deepfool_on_boundary_flips_in_one_step() {
    let net = linear(&[1.0, 0.0, 0.0, 1.0], &[0.0, 0.0], 2, 2);
    let x = row(&[0.4, 0.4]);
    let out = deepfool(&net, &x, 0.5, 0.02, 50).unwrap();
    assert!(out[0].success);
    assert!(out[0].iterations_used <= 1);
}

#[test]
fn deepfool_respects_budget() {
    for seed in 0..6 {
        let (net, x, _) = common::random_small_network(seed);
        for o in deepfool(&net, &x, 0.05, 0.02, 50).unwrap() {
            assert!(o.linf <= 0.05 + 1e-9);
            assert!(o.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

#[test]
fn cw_linear_matches_minimal_l2() {
    // Minimal L2 perturbation to a linear boundary is margin / |w|_2.
    let w = [1.0, -0.5, 0.5, 0.25, -1.0, 0.5, -0.5, 0.75];
    let net = linear(&w, &[0.4, 0.0], 4, 2);
    let x = row(&[0.5, 0.5, 0.5, 0.5]);
    let dw: Vec<f64> = (0..4).map(|j| w[j] - w[4 + j]).collect();
    let margin = 0.4 + dw.iter().map(|d| d * 0.5).sum::<f64>();
    let oracle = margin / dw.iter().map(|d| d * d).sum::<f64>().sqrt();
    let cfg = CwConfig {
        binary_steps: 9,
        inner_steps: 1000,
        abort_early: false,
        ..CwConfig::default()
    };
    let out = carlini_wagner(&net, &x, &[0], 10.0, &cfg).unwrap();
    assert!(out[0].success);
    assert!((out[0].l2 - oracle).abs() / oracle < 0.05, "{} vs {}", out[0].l2, oracle);
}

#[test]
fn cw_infeasible_reports_failure() {
    let net = linear(&[100.0, 0.0, 0.0, 100.0], &[1000.0, 0.0], 2, 2);
    let cfg = CwConfig {
        binary_steps: 1,
        inner_steps: 1,
        initial_c: 1e-6,
        ..CwConfig::default()
    };
    let out = carlini_wagner(&net, &row(&[0.5, 0.5]), &[0], 0.1, &cfg).unwrap();
    assert!(!out[0].success);
    assert!(out[0].l2 <= 0.1 + 1e-12);
}

#[test]
fn cw_respects_l2_budget() {
    for seed in 0..4 {
        let (net, x, y) = common::random_small_network(seed);
        let cfg = CwConfig {
            binary_steps: 3,
            inner_steps: 30,
            ..CwConfig::default()
        };
        for o in carlini_wagner(&net, &x, &y, 0.5, &cfg).unwrap() {
            assert!(o.l2 <= 0.5 + 1e-9);
            assert!(o.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn linf_attacks_stay_in_budget(seed in 0u64..1000, eps in 0.0f64..0.5, which in 0usize..4) {
        let (net, x, y) = common::random_small_network(seed);
        let kind = [AttackKind::Fgsm, AttackKind::Bim, AttackKind::Pgd, AttackKind::DeepFool][which];
        let cfg = AttackConfig::new(kind, eps, seed);
        let ids: Vec<u64> = (0..y.len() as u64).collect();
        for o in run_attack(&net, &x, &y, &cfg, &ids).unwrap() {
            prop_assert!(o.linf <= eps + 1e-9);
            prop_assert!(o.x_adv.data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
