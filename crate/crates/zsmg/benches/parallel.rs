//! Parallel core vs sequential fallback on the three fan-out hot spots:
//! exact solving (states within a layer), certified exploitability (the
//! per-episode dynamic program), and Monte Carlo evaluation (independent
//! rollouts). Outputs are identical by construction; only wall time should
//! differ.

use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;
use zsmg::exact::{
    nash_backward_induction, nash_backward_induction_sequential, Side,
};
use zsmg::game::{benchmark_game, generate_random_game, MarkovGame};
use zsmg::learner::{run_training, Hyperparams, TrainingConfig, TrainingRun};
use zsmg::replay::{
    build_replay, exploitability_upper, exploitability_upper_sequential, monte_carlo_value,
    monte_carlo_value_sequential, uniform_markov_policy, ReplayStore,
};
use zsmg::rng::SeededRng;

const DP_BUDGET: u64 = 1_000_000_000_000;

fn trained_store(game: &MarkovGame, episodes: u64) -> (TrainingRun, ReplayStore) {
    let cfg = TrainingConfig {
        hp: Hyperparams::defaults(game),
        episodes,
        epsilon_grid: vec![],
        exact: None,
    };
    let run = run_training(game, &cfg, &SeededRng::new(1)).expect("training fixture");
    let store = build_replay(&run.log).expect("replay fixture");
    (run, store)
}

fn bench_backward_induction(c: &mut Criterion) {
    let game = generate_random_game(5, 120, 4, 4, 4, 1.0).expect("bench game");
    let mut group = c.benchmark_group("backward_induction_s120");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| nash_backward_induction(black_box(&game)).unwrap())
    });
    group.bench_function("sequential", |b| {
        b.iter(|| nash_backward_induction_sequential(black_box(&game)).unwrap())
    });
    group.finish();
}

fn bench_exploitability(c: &mut Criterion) {
    let game = benchmark_game();
    let exact = nash_backward_induction(&game).unwrap();
    let (_, store) = trained_store(&game, 20_000);
    let mut group = c.benchmark_group("exploitability_upper_k20000");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            exploitability_upper(&game, black_box(&store), &exact, Side::Max, DP_BUDGET).unwrap()
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            exploitability_upper_sequential(&game, black_box(&store), &exact, Side::Max, DP_BUDGET)
                .unwrap()
        })
    });
    group.finish();
}

fn bench_monte_carlo(c: &mut Criterion) {
    let game = benchmark_game();
    let (_, store) = trained_store(&game, 5_000);
    let opponent = uniform_markov_policy(&game, Side::Min);
    let rng = SeededRng::new(77);
    let mut group = c.benchmark_group("monte_carlo_50k_rollouts");
    group.sample_size(20);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            monte_carlo_value(&game, black_box(&store), &opponent, Side::Max, 50_000, &rng)
                .unwrap()
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            monte_carlo_value_sequential(
                &game,
                black_box(&store),
                &opponent,
                Side::Max,
                50_000,
                &rng,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(benches, bench_backward_induction, bench_exploitability, bench_monte_carlo);
criterion_main!(benches);
