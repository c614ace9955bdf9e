use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kelly_core::de_solver::{multi_run, DeConfig, Individual, TerminationPolicy};
use kelly_core::market_data::reference_inputs;
use kelly_core::monte_carlo::{sample_returns, CorrelationMode, JointReturnModel, SimConfig};
use kelly_core::{ExecMode, ModelKind, OptimizationProblem};

const MODES: [ExecMode; 2] = [ExecMode::Sequential, ExecMode::Parallel];

fn mode_name(m: ExecMode) -> &'static str {
    match m {
        ExecMode::Sequential => "sequential",
        ExecMode::Parallel => "parallel",
    }
}

fn kelly_problem(p: f64) -> OptimizationProblem {
    let (stats, cov) = reference_inputs();
    OptimizationProblem::new(ModelKind::Kelly, p, stats, cov).unwrap()
}

fn monte_carlo_sampling(c: &mut Criterion) {
    let (stats, cov) = reference_inputs();
    let model = JointReturnModel::new(stats, &cov, CorrelationMode::ReturnSpace).unwrap();
    let mut group = c.benchmark_group("mc_sample_returns");
    for samples in [10_000usize, 100_000] {
        for mode in MODES {
            let config = SimConfig {
                sample_count: samples,
                exec: mode,
                ..SimConfig::with_seed(1)
            };
            group.bench_with_input(
                BenchmarkId::new(mode_name(mode), samples),
                &config,
                |b, cfg| b.iter(|| black_box(sample_returns(&model, cfg, 1).unwrap())),
            );
        }
    }
    group.finish();
}

fn population_evaluation(c: &mut Criterion) {
    let problem = kelly_problem(0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let population: Vec<Vec<f64>> = (0..100)
        .map(|_| {
            let raw: Vec<f64> = (0..10).map(|_| rng.random_range(0.05..0.95)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect()
        })
        .collect();
    let mut group = c.benchmark_group("kelly_population_eval");
    for mode in MODES {
        group.bench_function(mode_name(mode), |b| {
            b.iter(|| {
                black_box(mode.map(&population, |g| Individual::evaluate(&problem, g.clone())))
            })
        });
    }
    group.finish();
}

fn de_solve(c: &mut Criterion) {
    let problem = kelly_problem(0.3);
    let mut group = c.benchmark_group("kelly_de_solve");
    group.sample_size(10);
    for mode in MODES {
        let config = DeConfig {
            termination: TerminationPolicy::StagnationIterations { generations: 30 },
            max_generations: 300,
            seed: 4,
            exec: mode,
            ..DeConfig::default()
        };
        group.bench_function(mode_name(mode), |b| {
            b.iter(|| black_box(multi_run(&problem, &config, 1).unwrap().best.objective))
        });
    }
    group.finish();
}

criterion_group!(
    benches,
    monte_carlo_sampling,
    population_evaluation,
    de_solve
);
criterion_main!(benches);
