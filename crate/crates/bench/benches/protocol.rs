use std::f64::consts::FRAC_PI_3;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use qpq_core::adversary::attack_alice_helstrom;
use qpq_core::bases::{build_povm, key_basis, sample_epr, AliceAction};
use qpq_core::chsh::{run_chsh_test, Referee};
use qpq_core::protocol::Protocol;
use qpq_core::qmath::{trace_norm, PureState};
use qpq_core::{DeviceModel, ProtocolConfig, StreamSeed, Theta};

fn bench_qmath(c: &mut Criterion) {
    let a = PureState::zero().projector();
    let b = PureState::rotated(FRAC_PI_3).projector();
    c.bench_function("trace_norm", |bench| bench.iter(|| trace_norm(black_box(&(a - b)))));
}

fn bench_sampling(c: &mut Criterion) {
    let theta = Theta::new(FRAC_PI_3).unwrap();
    let basis = key_basis(1, theta);
    let povm = build_povm(0, theta).unwrap();
    let mut rng = StreamSeed::new(1).rng();
    c.bench_function("sample_epr_povm", |bench| {
        bench.iter(|| sample_epr(&basis, AliceAction::Povm(&povm), &mut rng).unwrap())
    });
    c.bench_function("chsh_10k", |bench| {
        bench.iter(|| run_chsh_test(10_000, 0.02, Referee::Alice, 0.0, &mut rng).unwrap())
    });
    c.bench_function("helstrom_attack_10k", |bench| {
        bench.iter(|| attack_alice_helstrom(theta, 10_000, &mut rng).unwrap())
    });
}

fn bench_protocol(c: &mut Criterion) {
    let theta = Theta::new(FRAC_PI_3).unwrap();
    let mut group = c.benchmark_group("protocol_attempt");
    for n in [100usize, 1_000] {
        let cfg = ProtocolConfig::for_database(theta, 2, n, 0.45, 0.1, 0).unwrap();
        group.bench_with_input(BenchmarkId::from_parameter(n), &cfg, |bench, cfg| {
            let mut rng = StreamSeed::new(2).rng();
            bench.iter(|| {
                let mut p = Protocol::new(cfg, DeviceModel::honest()).unwrap();
                p.run_with_retries(&mut rng).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, bench_qmath, bench_sampling, bench_protocol);
criterion_main!(benches);
