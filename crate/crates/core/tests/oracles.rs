//! Checks against independent computations: finite differences, corner
//! enumeration, straight-line re-evaluation and hand arithmetic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wat_core::bounds::{exact_signed_sum_norm, mc_signed_sum_norm, confidence_slack, linear_bound_constant};
use wat_core::rng::Tag;
use wat_core::{
    cross_entropy, epoch_class_losses, exact_rademacher, forward, kl_divergence, linear_worst_case_margin,
    loss_and_grad, margin, mc_rademacher, pgd_attack, worst_class_rhs, trades_loss, AttackConfig, BoundConfig, Dataset,
    InnerLoss, LabeledBatch, LossKind, LossSpec, Matrix, ModelParams, WeightSimplex,
};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn random_simplex(r: &mut ChaCha8Rng, len: usize) -> WeightSimplex {
    let raw: Vec<f64> = (0..len).map(|_| r.random_range(0.0..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / s).collect();
    let tail: f64 = w[1..].iter().sum();
    w[0] = 1.0 - tail;
    WeightSimplex::new(w).unwrap()
}

fn random_mlp(r: &mut ChaCha8Rng, k: usize, d: usize, h: usize) -> ModelParams {
    let mut p = ModelParams::mlp_init(k, d, h, r);
    let flat: Vec<f64> = p.flat().iter().map(|_| r.random_range(-1.0..1.0)).collect();
    p.set_flat(&flat).unwrap();
    p
}

/// Smallest |pre-activation| over the hidden units, for rejecting instances near a ReLU kink.
fn min_preactivation(p: &ModelParams, xs: &[&[f64]]) -> f64 {
    match p {
        ModelParams::Mlp { w1, b1, .. } => xs
            .iter()
            .flat_map(|x| w1.mul_vec(x).into_iter().zip(b1).map(|(z, b)| (z + b).abs()))
            .fold(f64::INFINITY, f64::min),
        ModelParams::Linear { .. } => f64::INFINITY,
    }
}

fn objective(p: &ModelParams, batch: &LabeledBatch, spec: &LossSpec, w: &WeightSimplex) -> f64 {
    loss_and_grad(p, batch, spec, w).unwrap().0
}

#[test]
fn gradients_match_central_differences() {
    let mut r = rng(11);
    let mut checked = 0;
    let mut worst = 0.0f64;
    while checked < 100 {
        let k = r.random_range(2..5);
        let d = r.random_range(1..6);
        let n = r.random_range(2..7);
        let mlp = checked % 2 == 1;
        let params = if mlp {
            let h = r.random_range(2..6);
            random_mlp(&mut r, k, d, h)
        } else {
            ModelParams::linear(random_matrix(&mut r, k, d, 1.0)).unwrap()
        };
        let inputs = random_matrix(&mut r, n, d, 1.0);
        let adv_data: Vec<f64> = inputs.as_slice().iter().map(|v| v + r.random_range(-0.1..0.1)).collect();
        let adv = Matrix::from_vec(n, d, adv_data).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..k)).collect();
        let rows: Vec<&[f64]> = inputs.iter_rows().chain(adv.iter_rows()).collect();
        if min_preactivation(&params, &rows) < 1e-3 {
            continue;
        }
        let batch = LabeledBatch::new(inputs.clone(), labels, Some(adv.clone())).unwrap();
        let weights = random_simplex(&mut r, k + 1);
        let spec = match checked % 3 {
            0 => LossSpec::trades(r.random_range(0.0..6.0)),
            1 => LossSpec { kind: LossKind::Kl, beta: 1.0, gamma: 1.0 },
            _ => LossSpec { kind: LossKind::CrossEntropy, beta: 0.0, gamma: 1.0 },
        };
        let (_, grad) = loss_and_grad(&params, &batch, &spec, &weights).unwrap();
        let analytic = grad.flat();
        let theta = params.flat();
        let step = 1e-5;
        for j in 0..theta.len() {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let mut t = theta.clone();
            t[j] += step;
            plus.set_flat(&t).unwrap();
            t[j] -= 2.0 * step;
            minus.set_flat(&t).unwrap();
            let numeric = (objective(&plus, &batch, &spec, &weights) - objective(&minus, &batch, &spec, &weights)) / (2.0 * step);
            let rel = (analytic[j] - numeric).abs() / analytic[j].abs().max(numeric.abs()).max(1e-4);
            worst = worst.max(rel);
            assert!(rel <= 1e-5, "instance {checked} coord {j}: analytic {} numeric {numeric}", analytic[j]);
        }
        checked += 1;
    }
    assert!(worst <= 1e-5);
}

#[test]
fn weighted_objective_splits_into_class_means() {
    let mut r = rng(3);
    for _ in 0..50 {
        let (k, d, n) = (3, 2, 9);
        let params = ModelParams::linear(random_matrix(&mut r, k, d, 1.0)).unwrap();
        let inputs = random_matrix(&mut r, n, d, 1.0);
        let adv = Matrix::from_vec(n, d, inputs.as_slice().iter().map(|v| v + 0.05).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let beta = 2.5;
        let batch = LabeledBatch::new(inputs.clone(), labels.clone(), Some(adv.clone())).unwrap();
        let w = random_simplex(&mut r, k + 1);
        let (loss, _) = loss_and_grad(&params, &batch, &LossSpec::trades(beta), &w).unwrap();
        let per: Vec<f64> = (0..n)
            .map(|i| trades_loss(&params, inputs.row(i), adv.row(i), labels[i], beta).unwrap())
            .collect();
        let mut expected = w.as_slice()[0] * per.iter().sum::<f64>() / n as f64;
        for c in 0..k {
            let members: Vec<f64> = (0..n).filter(|&i| labels[i] == c).map(|i| per[i]).collect();
            expected += w.as_slice()[c + 1] * members.iter().sum::<f64>() / members.len() as f64;
        }
        assert!((loss - expected).abs() < 1e-12, "{loss} vs {expected}");
    }
}

#[test]
fn trades_and_forward_match_straight_line_evaluation() {
    let mut r = rng(5);
    for _ in 0..100 {
        let (k, d, h) = (3, 4, 5);
        let p = random_mlp(&mut r, k, d, h);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(0.0..1.0)).collect();
        let xa: Vec<f64> = x.iter().map(|v| v + r.random_range(-0.03..0.03)).collect();
        let ModelParams::Mlp { w1, b1, w2, b2 } = &p else { unreachable!() };
        let straight = |x: &[f64]| -> Vec<f64> {
            let mut hidden = vec![0.0; h];
            for i in 0..h {
                let mut z = b1[i];
                for j in 0..d {
                    z += w1.get(i, j) * x[j];
                }
                hidden[i] = if z > 0.0 { z } else { 0.0 };
            }
            (0..k)
                .map(|c| b2[c] + (0..h).map(|i| w2.get(c, i) * hidden[i]).sum::<f64>())
                .collect()
        };
        let s = forward(&p, &x).unwrap();
        for (a, b) in s.iter().zip(straight(&x)) {
            assert!((a - b).abs() < 1e-12);
        }
        let y = r.random_range(0..k);
        let beta = 6.0;
        let sa = straight(&xa);
        let lse = |v: &[f64]| {
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + v.iter().map(|z| (z - m).exp()).sum::<f64>().ln()
        };
        let ce = lse(&s) - s[y];
        let (ls, la) = (lse(&s), lse(&sa));
        let kl: f64 = (0..k).map(|c| (s[c] - ls).exp() * ((s[c] - ls) - (sa[c] - la))).sum();
        let want = ce + beta * kl;
        assert!((trades_loss(&p, &x, &xa, y, beta).unwrap() - want).abs() < 1e-12);
        assert!((cross_entropy(&s, y).unwrap() - ce).abs() < 1e-12);
        assert!((kl_divergence(&s, &sa).unwrap() - kl.max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn closed_form_margin_equals_corner_enumeration() {
    let mut r = rng(17);
    for _ in 0..200 {
        let k = r.random_range(2..6);
        let d = r.random_range(1..11);
        let w = random_matrix(&mut r, k, d, 2.0);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = r.random_range(0..k);
        let eps = r.random_range(0.0..0.5);
        let closed = linear_worst_case_margin(&w, &x, y, eps).unwrap().worst;
        let mut brute = f64::INFINITY;
        for mask in 0u32..(1 << d) {
            let corner: Vec<f64> = (0..d)
                .map(|j| x[j] + if mask >> j & 1 == 1 { eps } else { -eps })
                .collect();
            brute = brute.min(margin(&w.mul_vec(&corner), y).unwrap());
        }
        assert!((closed - brute).abs() <= 1e-9, "{closed} vs {brute}");
    }
}

#[test]
fn single_full_step_pgd_hits_the_worst_corner() {
    let mut r = rng(23);
    for _ in 0..200 {
        let d = r.random_range(1..11);
        let w = random_matrix(&mut r, 2, d, 1.0);
        let x: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let y = r.random_range(0..2);
        let eps = r.random_range(0.01..0.3);
        let cfg = AttackConfig {
            epsilon: eps,
            steps: 1,
            step_size: eps,
            inner_loss: InnerLoss::Ce,
            clip_domain: None,
            restarts: 0,
        };
        let params = ModelParams::linear(w.clone()).unwrap();
        let adv = pgd_attack(&params, &x, y, &cfg, &mut r).unwrap();
        let attacked = margin(&w.mul_vec(&adv), y).unwrap();
        let closed = linear_worst_case_margin(&w, &x, y, eps).unwrap().worst;
        assert!((attacked - closed).abs() <= 1e-9, "{attacked} vs {closed}");
    }
}

#[test]
fn epoch_losses_match_resummation() {
    let mut r = rng(29);
    for round in 0..10 {
        let (k, d, n) = (3, 3, 30);
        let params = ModelParams::linear(random_matrix(&mut r, k, d, 2.0)).unwrap();
        let inputs = Matrix::from_vec(n, d, (0..n * d).map(|_| r.random_range(0.0..1.0)).collect()).unwrap();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        let data = Dataset::new(inputs, labels, k, "random").unwrap();
        let attack = AttackConfig::training();
        let got = epoch_class_losses(&params, &data, &attack, 6.0, 7, Tag::ValLoss, round).unwrap();
        let adv = wat_core::attack_batch(&params, &data.inputs, &data.labels, &attack, 7, Tag::ValLoss, round, 0).unwrap();
        let per: Vec<f64> = (0..n)
            .map(|i| trades_loss(&params, data.inputs.row(i), adv.row(i), data.labels[i], 6.0).unwrap())
            .collect();
        let all = per.iter().sum::<f64>() / n as f64;
        assert!((got.average() - all).abs() <= 1e-10);
        for c in 0..k {
            let m: Vec<f64> = (0..n).filter(|&i| data.labels[i] == c).map(|i| per[i]).collect();
            assert!((got.class(c) - m.iter().sum::<f64>() / m.len() as f64).abs() <= 1e-10);
        }
        let mean_of_classes = (0..k).map(|c| got.class(c)).sum::<f64>() / k as f64;
        assert!((got.average() - mean_of_classes).abs() <= 1e-9);
    }
}

#[test]
fn rademacher_small_examples() {
    let h = vec![1.0, 1.0];
    let neg: Vec<f64> = h.iter().map(|v| -v).collect();
    let class = vec![h.clone(), neg];
    assert_eq!(exact_rademacher(&class).unwrap(), 0.5);
    let mc = mc_rademacher(&class, 20_000, 1, 0).unwrap();
    assert!((mc.mean - 0.5).abs() <= 3.0 * mc.std_error);
    let single = mc_rademacher(&[vec![0.3, -0.2, 0.8]], 20_000, 2, 0).unwrap();
    assert!(single.mean.abs() <= 3.0 * single.std_error);
}

#[test]
fn rademacher_exact_is_monotone_in_the_class() {
    let mut r = rng(31);
    for _ in 0..50 {
        let n = r.random_range(1..11);
        let mut class: Vec<Vec<f64>> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for _ in 0..5 {
            class.push((0..n).map(|_| r.random_range(-1.0..1.0)).collect());
            let v = exact_rademacher(&class).unwrap();
            assert!(v >= last - 1e-15);
            last = v;
        }
    }
}

#[test]
fn bound_terms_match_hand_arithmetic() {
    let rhs = worst_class_rhs(0.3, 0.05, 1.0, 2, 800, 0.1).unwrap();
    let slack = 3.0 * (2.0 * 20f64.ln() / 1600.0).sqrt();
    assert!((rhs - (0.3 + 0.1 + slack)).abs() <= 1e-12);
    assert!((rhs - 0.5835).abs() < 1e-4);
    assert!((confidence_slack(1.0, 2, 800, 0.1).unwrap() - slack).abs() <= 1e-12);

    let cfg = BoundConfig {
        delta: 0.1,
        loss_bound: 1.0,
        gamma: 1.0,
        weight_norm: 1.0,
        q: 1.0,
        mc_draws: 100,
        seed: 0,
    };
    let eps = 8.0 / 255.0;
    let c = linear_bound_constant(&cfg, 2, eps, 4, 400).unwrap();
    let want = 2.0 * 1.0 * 4.0 * eps * 4.0 / 20.0 + 3.0 * (2.0 * 20f64.ln() / 800.0).sqrt();
    assert!((c - want).abs() <= 1e-12);
    assert!((c - 0.3097).abs() < 2e-4);

    let e1 = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
    assert_eq!(exact_signed_sum_norm(&e1, 1.0).unwrap(), 1.0);
    let mc = mc_signed_sum_norm(&e1, 1.0, 500, 0, 0).unwrap();
    assert_eq!(mc.mean, 1.0);
}

#[test]
fn rhs_decreases_with_delta_and_n() {
    let mut prev = f64::INFINITY;
    for &d in &[0.01, 0.05, 0.1, 0.5, 0.9] {
        let v = worst_class_rhs(0.2, 0.01, 1.0, 3, 900, d).unwrap();
        assert!(v < prev);
        prev = v;
    }
    prev = f64::INFINITY;
    for &n in &[10, 100, 1000, 10_000] {
        let v = worst_class_rhs(0.2, 0.01, 1.0, 3, n, 0.05).unwrap();
        assert!(v < prev);
        prev = v;
    }
    let near = worst_class_rhs(0.2, 0.0, 1.0, 3, usize::MAX / 4, 0.999_999).unwrap();
    assert!((near - 0.2).abs() < 1e-6);
}
