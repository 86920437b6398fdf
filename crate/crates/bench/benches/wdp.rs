use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use proxylab_bench::{random_bid, wdp_instances};
use proxylab_core::{brute_force_wdp, learn_xor_full, solve_wdp, ScriptedPerson};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn winner_determination(c: &mut Criterion) {
    let mut group = c.benchmark_group("wdp");
    group.sample_size(20);
    for (goods, bidders) in [(6, 3), (6, 4), (8, 5)] {
        let instances = wdp_instances(7, 20, goods, bidders, 8);
        let label = format!("{goods}g{bidders}b");
        group.bench_with_input(BenchmarkId::new("branch_and_bound", &label), &instances, |b, inst| {
            b.iter(|| inst.iter().map(|bids| solve_wdp(black_box(bids)).unwrap().welfare).max())
        });
        // Exhaustive search grows as atoms^bidders; keep it to the sizes it is used on.
        if goods <= 6 {
            group.bench_with_input(BenchmarkId::new("brute_force", &label), &instances, |b, inst| {
                b.iter(|| inst.iter().map(|bids| brute_force_wdp(black_box(bids)).unwrap().welfare).max())
            });
        }
    }
    let large = wdp_instances(8, 5, 12, 8, 12);
    group.bench_function("branch_and_bound/12g8b", |b| {
        b.iter(|| large.iter().map(|bids| solve_wdp(black_box(bids)).unwrap().welfare).max())
    });
    group.finish();
}

fn exact_learning(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truths: Vec<_> = (0..20).map(|_| random_bid(&mut rng, 6, 8)).collect();
    c.bench_function("learn_xor_full/6g", |b| {
        b.iter(|| {
            truths.iter().map(|t| learn_xor_full(&mut ScriptedPerson::new(t.clone())).unwrap().len()).sum::<usize>()
        })
    });
}

criterion_group!(benches, winner_determination, exact_learning);
criterion_main!(benches);
