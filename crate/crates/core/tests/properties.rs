use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wat_core::models::{argmax, softmax};
use wat_core::trainer::stratified_batches;
use wat_core::{
    cross_entropy, cv, hedge_weights, kl_divergence, linear_worst_case_margin, margin, pgd_attack, ramp_loss,
    rho_values, robust_error_indicator, stratified_split, AttackConfig, Dataset, InnerLoss, Matrix, ModelParams,
};

fn scores(len: impl Into<prop::collection::SizeRange>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-30.0f64..30.0, len)
}

fn linear_instance() -> impl Strategy<Value = (usize, usize, Vec<f64>, Vec<f64>, usize)> {
    (2usize..5, 1usize..7).prop_flat_map(|(k, d)| {
        (
            Just(k),
            Just(d),
            prop::collection::vec(-2.0f64..2.0, k * d),
            prop::collection::vec(0.0f64..1.0, d),
            0..k,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn softmax_is_a_distribution(s in scores(1..10)) {
        let p = softmax(&s).unwrap();
        prop_assert!(p.iter().all(|&v| v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn losses_are_nonnegative(s in scores(2..8), t in scores(2..8), y in 0usize..8) {
        let n = s.len().min(t.len());
        let (s, t) = (&s[..n], &t[..n]);
        prop_assert!(cross_entropy(s, y % n).unwrap() >= 0.0);
        prop_assert!(kl_divergence(s, t).unwrap() >= 0.0);
        prop_assert!(kl_divergence(s, s).unwrap() <= 1e-12);
        let shifted: Vec<f64> = s.iter().map(|v| v + 3.5).collect();
        prop_assert!(kl_divergence(s, &shifted).unwrap() <= 1e-12);
    }

    #[test]
    fn ramp_is_bounded_and_nonincreasing(a in -5.0f64..5.0, b in -5.0f64..5.0, gamma in 0.01f64..3.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (rl, rh) = (ramp_loss(lo, gamma).unwrap(), ramp_loss(hi, gamma).unwrap());
        prop_assert!((0.0..=1.0).contains(&rl) && (0.0..=1.0).contains(&rh));
        prop_assert!(rh <= rl);
        let indicator = if a <= 0.0 { 1.0 } else { 0.0 };
        prop_assert!(indicator <= ramp_loss(a, gamma).unwrap());
    }

    #[test]
    fn positive_margin_means_prediction(s in scores(2..8), y in 0usize..8) {
        let y = y % s.len();
        if margin(&s, y).unwrap() > 0.0 {
            prop_assert_eq!(argmax(&s), y);
        }
    }

    #[test]
    fn hedge_weights_on_simplex_and_monotone(cum in prop::collection::vec(0.0f64..200.0, 2..12), eta in 0.0f64..2.0) {
        let w = hedge_weights(&cum, eta).unwrap();
        let s = w.as_slice();
        prop_assert!(s.iter().all(|&v| v >= 0.0));
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        if eta == 0.0 {
            prop_assert!(s.iter().all(|&v| v == s[0]));
        }
        for a in 0..cum.len() {
            for b in 0..cum.len() {
                if eta > 0.0 && cum[a] > cum[b] && (cum[a] - cum[b]) * eta > 1e-9 {
                    prop_assert!(s[a] > s[b], "cum {} > {} but w {} <= {}", cum[a], cum[b], s[a], s[b]);
                }
            }
        }
        let shifted: Vec<f64> = cum.iter().map(|c| c + 17.0).collect();
        let w2 = hedge_weights(&shifted, eta).unwrap();
        for (x, y) in s.iter().zip(w2.as_slice()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn pgd_stays_in_ball_and_box(
        (k, d, w, x, y) in linear_instance(),
        eps in 0.0f64..0.2,
        steps in 1usize..8,
        inner in prop::sample::select(vec![InnerLoss::Ce, InnerLoss::Kl, InnerLoss::CwMargin]),
        restarts in 0usize..3,
        seed in any::<u64>(),
    ) {
        let params = ModelParams::linear(Matrix::from_vec(k, d, w.clone()).unwrap()).unwrap();
        let cfg = AttackConfig { epsilon: eps, steps, step_size: 0.01, inner_loss: inner, clip_domain: Some((0.0, 1.0)), restarts };
        let adv = pgd_attack(&params, &x, y, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        for (a, b) in adv.iter().zip(&x) {
            prop_assert!((a - b).abs() <= eps + 1e-12);
            prop_assert!((0.0..=1.0).contains(a));
        }
        let unboxed = AttackConfig { clip_domain: None, ..cfg };
        let adv = pgd_attack(&params, &x, y, &unboxed, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let wm = Matrix::from_vec(k, d, w).unwrap();
        let closed = linear_worst_case_margin(&wm, &x, y, eps).unwrap().worst;
        prop_assert!(closed <= margin(&wm.mul_vec(&adv), y).unwrap() + 1e-9);
    }

    #[test]
    fn pgd_never_loses_to_the_clean_point((k, d, w, x, y) in linear_instance(), seed in any::<u64>()) {
        let params = ModelParams::linear(Matrix::from_vec(k, d, w).unwrap()).unwrap();
        let cfg = AttackConfig { inner_loss: InnerLoss::Ce, restarts: 2, ..AttackConfig::training() };
        let adv = pgd_attack(&params, &x, y, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let s = |p: &[f64]| wat_core::forward(&params, p).unwrap();
        prop_assert!(cross_entropy(&s(&adv), y).unwrap() >= cross_entropy(&s(&x), y).unwrap());
    }

    #[test]
    fn zero_budget_indicator_is_natural_error((k, d, w, x, y) in linear_instance()) {
        let wm = Matrix::from_vec(k, d, w).unwrap();
        let s = wm.mul_vec(&x);
        let natural_error = margin(&s, y).unwrap() <= 0.0;
        prop_assert_eq!(robust_error_indicator(&wm, &x, y, 0.0, 0.0).unwrap(), natural_error);
    }

    #[test]
    fn rho_identities(ba in 0.05f64..1.0, bw in 0.05f64..1.0, ta in 0.0f64..1.0, tw in 0.0f64..1.0, d in 0.001f64..0.1) {
        prop_assert_eq!(rho_values(ba, bw, ba, bw).unwrap(), 0.0);
        prop_assert!(rho_values(ba, bw, ta, tw + d).unwrap() > rho_values(ba, bw, ta, tw).unwrap());
        prop_assert!(rho_values(ba, bw, ta + d, tw).unwrap() > rho_values(ba, bw, ta, tw).unwrap());
    }

    #[test]
    fn cv_identities(v in prop::collection::vec(0.0f64..1.0, 1..12), c in 0.0f64..1.0, seed in any::<u64>()) {
        prop_assert!(cv(&v).unwrap() >= 0.0);
        prop_assert_eq!(cv(&vec![c; v.len()]).unwrap(), 0.0);
        let mut shuffled = v.clone();
        use rand::seq::SliceRandom;
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((cv(&shuffled).unwrap() - cv(&v).unwrap()).abs() <= 1e-15);
        let spread = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - v.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 1e-6 {
            prop_assert!(cv(&v).unwrap() > 0.0);
        }
    }

    #[test]
    fn splits_and_batches_partition(counts in prop::collection::vec(3usize..25, 2..5), batch in 1usize..40, seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect();
        let n = labels.len();
        let inputs = Matrix::from_vec(n, 1, (0..n).map(|i| i as f64).collect()).unwrap();
        let data = Dataset::new(inputs, labels, counts.len(), "p").unwrap();
        let (tr, va) = stratified_split(&data, 2).unwrap();
        prop_assert_eq!(tr.len() + va.len(), n);
        prop_assert!(va.class_counts().iter().all(|&c| c == 2));
        for part in [&tr, &va] {
            for (i, row) in part.inputs.iter_rows().enumerate() {
                prop_assert_eq!(data.labels[row[0] as usize], part.labels[i]);
            }
        }
        let batches = stratified_batches(&data, batch, seed, 3);
        let mut seen: Vec<usize> = batches.iter().flatten().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }
}
