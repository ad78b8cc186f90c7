use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;
use wat_bench::{linear, mixture, mlp};
use wat_core::rng::{substream, Tag};
use wat_core::{
    attack_batch, hedge_weights, loss_and_grad, mc_rademacher, pgd_attack, AttackConfig, LabeledBatch, LossSpec,
    WeightSimplex,
};

fn hedge(c: &mut Criterion) {
    let mut g = c.benchmark_group("hedge_weights");
    for k in [11usize, 101, 1001] {
        let cum: Vec<f64> = (0..k).map(|i| (i as f64 * 0.37).sin().abs() * 50.0).collect();
        g.bench_with_input(BenchmarkId::from_parameter(k), &cum, |b, cum| {
            b.iter(|| hedge_weights(black_box(cum), 0.1).unwrap())
        });
    }
    g.finish();
}

fn pgd(c: &mut Criterion) {
    let data = mixture(3, 16, 1, 0);
    let x = data.inputs.row(0).to_vec();
    let mut g = c.benchmark_group("pgd_attack");
    for (name, params) in [("linear", linear(3, 16, 0)), ("mlp64", mlp(3, 16, 64, 0))] {
        let cfg = AttackConfig::training();
        g.bench_function(name, |b| {
            let mut rng = substream(0, Tag::EvalAttack, 0);
            b.iter(|| pgd_attack(&params, black_box(&x), 0, &cfg, &mut rng).unwrap())
        });
    }
    g.finish();
    let data = mixture(3, 16, 128, 1);
    let params = mlp(3, 16, 64, 1);
    c.bench_function("attack_batch/mlp64x384", |b| {
        b.iter(|| attack_batch(&params, &data.inputs, &data.labels, &AttackConfig::training(), 0, Tag::TrainAttack, 0, 0).unwrap())
    });
}

fn gradients(c: &mut Criterion) {
    let data = mixture(10, 32, 13, 2);
    let mut g = c.benchmark_group("loss_and_grad");
    let w = WeightSimplex::uniform(11);
    for (name, params) in [("linear", linear(10, 32, 2)), ("mlp128", mlp(10, 32, 128, 2))] {
        let adv = attack_batch(&params, &data.inputs, &data.labels, &AttackConfig::training(), 0, Tag::TrainAttack, 0, 0).unwrap();
        let batch = LabeledBatch::new(data.inputs.clone(), data.labels.clone(), Some(adv)).unwrap();
        g.bench_function(name, |b| b.iter(|| loss_and_grad(&params, black_box(&batch), &LossSpec::trades(6.0), &w).unwrap()));
    }
    g.finish();
}

fn rademacher(c: &mut Criterion) {
    let class: Vec<Vec<f64>> = (0..30).map(|f| (0..200).map(|i| ((f * 7 + i) as f64).cos()).collect()).collect();
    c.bench_function("mc_rademacher/30x200x10000", |b| b.iter(|| mc_rademacher(black_box(&class), 10_000, 0, 0).unwrap()));
}

criterion_group!(benches, hedge, pgd, gradients, rademacher);
criterion_main!(benches);
