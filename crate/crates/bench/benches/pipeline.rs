use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use nesua_bench::{fixture, scenario_config};
use nesua_core::baselines::associate_oracle;
use nesua_core::scenario::{build_graph, generate_scenario};
use nesua_core::training::{instance_loss, train_step};
use nesua_core::{Adam, AdamConfig, Graph, LossConfig, PowerParams, Tensor};

fn scenario(c: &mut Criterion) {
    let mut group = c.benchmark_group("scenario");
    for k in [20, 50] {
        let cfg = scenario_config(k, 7);
        group.bench_with_input(BenchmarkId::new("generate", k), &cfg, |b, cfg| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                generate_scenario(black_box(cfg), seed).unwrap()
            })
        });
        let s = generate_scenario(&cfg, 0).unwrap();
        group.bench_with_input(BenchmarkId::new("build_graph", k), &s, |b, s| {
            b.iter(|| build_graph(black_box(s), cfg.gamma_th_db))
        });
    }
    group.finish();
}

fn model(c: &mut Criterion) {
    let p = PowerParams::default();
    let lc = LossConfig::default();
    let mut group = c.benchmark_group("gat");
    for (k, hidden) in [(20, 32), (50, 32), (50, 128)] {
        let (_, graphs, model) = fixture(k, 7, hidden, 1);
        let id = format!("k{k}_h{hidden}");
        group.bench_with_input(BenchmarkId::new("forward_loss", &id), &graphs[0], |b, g| {
            b.iter(|| instance_loss(&model, black_box(g), &p, &lc).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("train_step", &id), &graphs[0], |b, g| {
            let mut m = model.clone();
            let params: Vec<&Tensor> = m.params().iter().map(|(_, t)| *t).collect();
            let mut adam = Adam::new(AdamConfig::default(), &params);
            b.iter(|| train_step(&mut m, &mut adam, black_box(g), &p, &lc).unwrap())
        });
    }
    group.finish();

    let mut group = c.benchmark_group("autodiff");
    let x = Tensor::from_fn(64, 64, |i, j| ((i * 7 + j * 3) % 11) as f64 / 11.0);
    group.bench_function("matmul_backward_64", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let a = g.param(x.clone());
            let y = g.matmul(a, a).unwrap();
            let s = g.sum(y);
            g.backward(s).unwrap();
        })
    });
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let p = PowerParams::default();
    let mut group = c.benchmark_group("oracle");
    group.sample_size(20);
    for (k, n) in [(6, 3), (8, 3), (7, 4)] {
        let s = generate_scenario(&scenario_config(k, n), 0).unwrap();
        group.bench_with_input(BenchmarkId::new("enumerate", format!("k{k}_n{n}")), &s, |b, s| {
            b.iter(|| associate_oracle(black_box(s), &p, 10_000_000).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, scenario, model, oracle);
criterion_main!(benches);
