//! Constrained DE/rand/1/bin.
//!
//! One trial per population member and generation:
//!
//! 1. mutation `x_r1 + F (x_r2 − x_r3) + N(0, noise²)`, clipped to the bounds;
//! 2. binomial crossover with the target;
//! 3. a randomly chosen component is set from the equality `Σ x = 1`;
//! 4. greedy selection under the feasibility-first comparison.
//!
//! Trials are generated serially from one seeded stream, evaluated (possibly
//! in parallel), then selected serially, so a seed fully determines a run.

mod benchmarks;
mod engine;
mod operators;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::models::OptimizationProblem;

pub use benchmarks::ConstrainedSphere;
pub use engine::{multi_run, solve, solve_from, MultiRunOutcome, SolveOutcome};
pub use operators::{
    challenger_wins, crossover, initialize, lampinen_compare, mutate, repair_equality,
    strictly_better,
};

pub const DEFAULT_CROSSOVER_RATE: f64 = 0.75;
pub const DEFAULT_NOISE_STD: f64 = 0.01;
pub const DEFAULT_STAGNATION_SECONDS: f64 = 30.0;
pub const DEFAULT_MAX_GENERATIONS: usize = 50_000;
pub const DEFAULT_RUNS: usize = 20;

/// What the engine needs from a problem. Genomes live in the space the
/// bounds and the equality `Σ x = 1` are written in.
pub trait DeProblem: Sync {
    fn dim(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];
    fn equality_tolerance(&self) -> f64;
    /// Objective (maximized), reported return and risk.
    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation>;
    /// Seed genome for the first run.
    fn initial_genome(&self) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub objective: f64,
    pub ret: f64,
    pub risk: f64,
}

impl DeProblem for OptimizationProblem {
    fn dim(&self) -> usize {
        OptimizationProblem::dim(self)
    }

    fn lower_bounds(&self) -> &[f64] {
        &self.k_min
    }

    fn upper_bounds(&self) -> &[f64] {
        &self.k_max
    }

    fn equality_tolerance(&self) -> f64 {
        self.equality_tolerance
    }

    fn evaluate(&self, genome: &[f64]) -> Result<Evaluation> {
        let (objective, ret, risk) = self.evaluate_all(genome)?;
        Ok(Evaluation {
            objective,
            ret,
            risk,
        })
    }

    fn initial_genome(&self) -> Result<Vec<f64>> {
        self.sharpe_weights()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerminationPolicy {
    /// Stop once this long has passed without an accepted trial (wall clock).
    StagnationTimer { seconds: f64 },
    /// Stop after this many generations without an accepted trial.
    StagnationIterations { generations: usize },
}

impl Default for TerminationPolicy {
    fn default() -> Self {
        TerminationPolicy::StagnationTimer {
            seconds: DEFAULT_STAGNATION_SECONDS,
        }
    }
}

impl TerminationPolicy {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, TerminationPolicy::StagnationIterations { .. })
    }

    fn validate(&self) -> Result<()> {
        match *self {
            TerminationPolicy::StagnationTimer { seconds } if !(seconds > 0.0) => Err(
                Error::InvalidConfig(format!("stagnation timer must be positive, got {seconds}")),
            ),
            TerminationPolicy::StagnationIterations { generations: 0 } => Err(
                Error::InvalidConfig("stagnation generation count must be positive".into()),
            ),
            _ => Ok(()),
        }
    }

    pub(crate) fn timer(&self) -> Option<Duration> {
        match *self {
            TerminationPolicy::StagnationTimer { seconds } => {
                Some(Duration::from_secs_f64(seconds))
            }
            TerminationPolicy::StagnationIterations { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeConfig {
    pub crossover_rate: f64,
    /// `None` → (1/2N) Σ (k_max_i − k_min_i).
    pub scale_factor: Option<f64>,
    pub noise_std: f64,
    /// `None` → 10 N.
    pub population_size: Option<usize>,
    pub termination: TerminationPolicy,
    /// Hard cap on generations per run, whatever the termination policy.
    pub max_generations: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
    /// Store wall-clock elapsed time in trace records.
    #[serde(default = "yes")]
    pub record_elapsed: bool,
}

fn yes() -> bool {
    true
}

impl Default for DeConfig {
    fn default() -> Self {
        Self {
            crossover_rate: DEFAULT_CROSSOVER_RATE,
            scale_factor: None,
            noise_std: DEFAULT_NOISE_STD,
            population_size: None,
            termination: TerminationPolicy::default(),
            max_generations: DEFAULT_MAX_GENERATIONS,
            seed: 0,
            exec: ExecMode::default(),
            record_elapsed: true,
        }
    }
}

impl DeConfig {
    /// Default operators with a deterministic stagnation-generation stop.
    pub fn reproducible(generations: usize, seed: u64) -> Self {
        Self {
            termination: TerminationPolicy::StagnationIterations { generations },
            seed,
            record_elapsed: false,
            ..Self::default()
        }
    }

    pub fn resolved_scale_factor(&self, lower: &[f64], upper: &[f64]) -> f64 {
        self.scale_factor
            .unwrap_or_else(|| default_scale_factor(lower, upper))
    }

    pub fn resolved_population(&self, dim: usize) -> usize {
        self.population_size.unwrap_or(10 * dim)
    }

    pub fn validate(&self, lower: &[f64], upper: &[f64]) -> Result<()> {
        if !(0.0..=1.0).contains(&self.crossover_rate) {
            return Err(Error::InvalidConfig(format!(
                "crossover rate {} outside [0, 1]",
                self.crossover_rate
            )));
        }
        let f = self.resolved_scale_factor(lower, upper);
        if !(0.0..=2.0).contains(&f) {
            return Err(Error::InvalidConfig(format!(
                "scale factor {f} outside [0, 2]"
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "noise std {} must be >= 0",
                self.noise_std
            )));
        }
        let np = self.resolved_population(lower.len());
        if np < 4 {
            return Err(Error::InvalidConfig(format!(
                "population size {np} < 4; rand/1 needs three donors besides the target"
            )));
        }
        if self.max_generations == 0 {
            return Err(Error::InvalidConfig(
                "max_generations must be positive".into(),
            ));
        }
        self.termination.validate()
    }
}

/// (1/2N) Σ (k_max_i − k_min_i)
pub fn default_scale_factor(lower: &[f64], upper: &[f64]) -> f64 {
    let n = lower.len().max(1) as f64;
    lower.iter().zip(upper).map(|(lo, hi)| hi - lo).sum::<f64>() / (2.0 * n)
}

/// A genome with its objective and constraint record.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub genome: Vec<f64>,
    /// `-inf` when the genome lies outside the objective's domain; such a
    /// genome is always out of bounds and therefore infeasible.
    pub objective: f64,
    pub ret: f64,
    pub risk: f64,
    pub equality_gap: f64,
    pub bound_gaps: Vec<f64>,
    pub feasible: bool,
    equality_tolerance: f64,
}

impl Individual {
    pub fn evaluate<P: DeProblem + ?Sized>(problem: &P, genome: Vec<f64>) -> Self {
        let tol = problem.equality_tolerance();
        let (lo, hi) = (problem.lower_bounds(), problem.upper_bounds());
        let equality_gap = (genome.iter().sum::<f64>() - 1.0).abs();
        let bound_gaps: Vec<f64> = genome
            .iter()
            .enumerate()
            .map(|(i, &x)| (lo[i] - x).max(x - hi[i]).max(0.0))
            .collect();
        let feasible = equality_gap <= tol && bound_gaps.iter().all(|&b| b == 0.0);
        let (objective, ret, risk) = match problem.evaluate(&genome) {
            Ok(e) if e.objective.is_finite() => (e.objective, e.ret, e.risk),
            _ => (f64::NEG_INFINITY, f64::NAN, f64::NAN),
        };
        Self {
            genome,
            objective,
            ret,
            risk,
            equality_gap,
            bound_gaps,
            feasible,
            equality_tolerance: tol,
        }
    }

    /// Constraint violations in a fixed order: equality first (beyond its
    /// tolerance), then one entry per bound.
    pub fn violations(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.bound_gaps.len());
        v.push((self.equality_gap - self.equality_tolerance).max(0.0));
        v.extend_from_slice(&self.bound_gaps);
        v
    }

    pub fn total_bound_violation(&self) -> f64 {
        self.bound_gaps.iter().sum()
    }

    /// Builds an individual from precomputed parts. Mostly useful in tests.
    pub fn from_parts(
        genome: Vec<f64>,
        objective: f64,
        equality_gap: f64,
        bound_gaps: Vec<f64>,
        equality_tolerance: f64,
    ) -> Self {
        let feasible = equality_gap <= equality_tolerance && bound_gaps.iter().all(|&b| b == 0.0);
        Self {
            genome,
            objective,
            ret: f64::NAN,
            risk: f64::NAN,
            equality_gap,
            bound_gaps,
            feasible,
            equality_tolerance,
        }
    }
}

/// One accepted new best.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub run: usize,
    pub iteration: usize,
    pub elapsed_ms: Option<f64>,
    pub objective: f64,
    pub ret: f64,
    pub risk: f64,
    pub genome: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Writes `run,iteration,elapsed_ms,objective,return,risk,g_1..g_N`.
    /// A missing elapsed time is written as an empty cell.
    pub fn write_csv<W: std::io::Write>(&self, dim: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = [
            "run",
            "iteration",
            "elapsed_ms",
            "objective",
            "return",
            "risk",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=dim).map(|i| format!("g_{i}")));
        let io = |e: csv::Error| Error::Io(format!("trace write failed: {e}"));
        w.write_record(&header).map_err(io)?;
        for r in &self.records {
            let mut row = vec![
                r.run.to_string(),
                r.iteration.to_string(),
                r.elapsed_ms.map(|e| format!("{e:.3}")).unwrap_or_default(),
                format!("{:?}", r.objective),
                format!("{:?}", r.ret),
                format!("{:?}", r.risk),
            ];
            row.extend(r.genome.iter().map(|g| format!("{g:?}")));
            w.write_record(&row).map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::Io(format!("trace write failed: {e}")))?;
        Ok(())
    }
}
