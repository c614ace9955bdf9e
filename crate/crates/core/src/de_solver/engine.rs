use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::operators::{challenger_wins, crossover, mutate, repair_equality, strictly_better};
use super::{DeConfig, DeProblem, Individual, SolveTrace, TraceRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub best: Individual,
    pub trace: SolveTrace,
    pub generations: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct MultiRunOutcome {
    /// Best of the last run.
    pub best: Individual,
    pub runs: Vec<SolveOutcome>,
}

impl MultiRunOutcome {
    /// All runs' trace records in run order.
    pub fn combined_trace(&self) -> SolveTrace {
        SolveTrace {
            records: self
                .runs
                .iter()
                .flat_map(|r| r.trace.records.iter().cloned())
                .collect(),
        }
    }
}

/// A single run seeded from the problem's initial genome.
pub fn solve<P: DeProblem + ?Sized>(problem: &P, config: &DeConfig) -> Result<SolveOutcome> {
    solve_from(problem, config, 0, None)
}

/// `runs` successive solves; each run's population contains the previous
/// run's best and is otherwise re-randomized within the bounds.
pub fn multi_run<P: DeProblem + ?Sized>(
    problem: &P,
    config: &DeConfig,
    runs: usize,
) -> Result<MultiRunOutcome> {
    if runs == 0 {
        return Err(Error::InvalidConfig("run count must be at least 1".into()));
    }
    let mut outcomes: Vec<SolveOutcome> = Vec::with_capacity(runs);
    for r in 0..runs {
        let seed = outcomes.last().map(|o| o.best.genome.as_slice());
        let out = solve_from(problem, config, r, seed)?;
        outcomes.push(out);
    }
    let best = outcomes.last().expect("runs >= 1").best.clone();
    Ok(MultiRunOutcome {
        best,
        runs: outcomes,
    })
}

/// One run. `run_index` selects the random stream and labels trace records;
/// `seed_genome` replaces the problem's initial genome.
pub fn solve_from<P: DeProblem + ?Sized>(
    problem: &P,
    config: &DeConfig,
    run_index: usize,
    seed_genome: Option<&[f64]>,
) -> Result<SolveOutcome> {
    let (lower, upper) = (problem.lower_bounds(), problem.upper_bounds());
    config.validate(lower, upper)?;
    let dim = problem.dim();
    let np = config.resolved_population(dim);
    let scale = config.resolved_scale_factor(lower, upper);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(run_index as u64);

    let first = match seed_genome {
        Some(g) if g.len() == dim => g.to_vec(),
        Some(g) => {
            return Err(Error::Shape {
                expected: dim,
                got: g.len(),
                context: "warm-start genome",
            })
        }
        None => problem.initial_genome()?,
    };
    let mut genomes = Vec::with_capacity(np);
    genomes.push(first);
    for _ in 1..np {
        let mut g: Vec<f64> = (0..dim)
            .map(|j| {
                if upper[j] > lower[j] {
                    rng.random_range(lower[j]..upper[j])
                } else {
                    lower[j]
                }
            })
            .collect();
        repair_equality(&mut g, &mut rng);
        genomes.push(g);
    }
    let evaluate = |g: &Vec<f64>| Individual::evaluate(problem, g.clone());
    let mut population: Vec<Individual> = config.exec.map(&genomes, evaluate);
    let mut evaluations = np;

    let mut best = population[0].clone();
    for ind in &population[1..] {
        if strictly_better(ind, &best) {
            best = ind.clone();
        }
    }

    let start = Instant::now();
    let mut last_acceptance = start;
    let mut trace = SolveTrace::default();
    let record = |trace: &mut SolveTrace, best: &Individual, iteration: usize| {
        if best.feasible {
            trace.records.push(TraceRecord {
                run: run_index,
                iteration,
                elapsed_ms: config
                    .record_elapsed
                    .then(|| start.elapsed().as_secs_f64() * 1e3),
                objective: best.objective,
                ret: best.ret,
                risk: best.risk,
                genome: best.genome.clone(),
            });
        }
    };
    record(&mut trace, &best, 0);

    let timer = config.termination.timer();
    let patience = match config.termination {
        super::TerminationPolicy::StagnationIterations { generations } => generations,
        super::TerminationPolicy::StagnationTimer { .. } => usize::MAX,
    };
    let mut stagnant = 0usize;
    let mut generations = 0usize;
    while generations < config.max_generations {
        generations += 1;
        let donors: Vec<Vec<f64>> = population.iter().map(|p| p.genome.clone()).collect();
        let trials: Vec<Vec<f64>> = (0..np)
            .map(|i| {
                let candidate = mutate(&donors, i, scale, config.noise_std, lower, upper, &mut rng);
                let mut trial = crossover(&donors[i], &candidate, config.crossover_rate, &mut rng);
                repair_equality(&mut trial, &mut rng);
                trial
            })
            .collect();
        let evaluated = config.exec.map(&trials, evaluate);
        evaluations += np;
        let mut accepted = false;
        for (slot, trial) in population.iter_mut().zip(evaluated) {
            if challenger_wins(&trial, slot) {
                *slot = trial;
                accepted = true;
            }
        }

        let mut improved = false;
        for ind in &population {
            if strictly_better(ind, &best) {
                best = ind.clone();
                improved = true;
            }
        }
        if improved {
            record(&mut trace, &best, generations);
        }
        // Any accepted trial counts as progress, not only a new best.
        if accepted {
            stagnant = 0;
            last_acceptance = Instant::now();
        } else {
            stagnant += 1;
        }
        if stagnant >= patience {
            break;
        }
        if let Some(t) = timer {
            if last_acceptance.elapsed() >= t {
                break;
            }
        }
    }

    if !best.feasible {
        return Err(Error::Infeasible {
            equality_gap: best.equality_gap,
            bound_violation: best.total_bound_violation(),
            genome: best.genome.clone(),
        });
    }
    Ok(SolveOutcome {
        best,
        trace,
        generations,
        evaluations,
    })
}
