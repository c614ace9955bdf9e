use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DeProblem, Individual};
use crate::error::Result;

/// The seed individual: the problem's initial genome, evaluated. For
/// portfolio problems this is the drift/volatility-normalized allocation.
pub fn initialize<P: DeProblem + ?Sized>(problem: &P) -> Result<Individual> {
    Ok(Individual::evaluate(problem, problem.initial_genome()?))
}

/// `x_r1 + F (x_r2 − x_r3) + ε`, clipped to `[lower, upper]`, with `r1`, `r2`,
/// `r3` distinct and different from `target`.
#[allow(clippy::too_many_arguments)]
pub fn mutate<R: Rng + ?Sized>(
    population: &[Vec<f64>],
    target: usize,
    scale_factor: f64,
    noise_std: f64,
    lower: &[f64],
    upper: &[f64],
    rng: &mut R,
) -> Vec<f64> {
    let np = population.len();
    assert!(np >= 4, "mutation needs at least four individuals");
    let mut pick = |taken: &[usize]| loop {
        let r = rng.random_range(0..np);
        if r != target && !taken.contains(&r) {
            break r;
        }
    };
    let r1 = pick(&[]);
    let r2 = pick(&[r1]);
    let r3 = pick(&[r1, r2]);
    let (a, b, c) = (&population[r1], &population[r2], &population[r3]);
    (0..a.len())
        .map(|j| {
            let eps: f64 = StandardNormal.sample(rng);
            let v = a[j] + scale_factor * (b[j] - c[j]) + noise_std * eps;
            v.clamp(lower[j], upper[j])
        })
        .collect()
}

/// Binomial crossover. Each component comes from `candidate` with
/// probability `rate`; one uniformly chosen component always does.
pub fn crossover<R: Rng + ?Sized>(
    target: &[f64],
    candidate: &[f64],
    rate: f64,
    rng: &mut R,
) -> Vec<f64> {
    assert_eq!(target.len(), candidate.len());
    let forced = rng.random_range(0..target.len());
    target
        .iter()
        .zip(candidate)
        .enumerate()
        .map(|(j, (&t, &c))| {
            let u: f64 = rng.random();
            if j == forced || u < rate {
                c
            } else {
                t
            }
        })
        .collect()
}

/// Sets one uniformly chosen component to `1 − Σ others`. Returns the index.
/// The result may leave that component out of bounds; the selection step
/// sees it as a bound violation.
pub fn repair_equality<R: Rng + ?Sized>(genome: &mut [f64], rng: &mut R) -> usize {
    let k = rng.random_range(0..genome.len());
    let others: f64 = genome
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != k)
        .map(|(_, x)| x)
        .sum();
    genome[k] = 1.0 - others;
    k
}

/// Whether `challenger` replaces `incumbent` in greedy selection.
///
/// Feasible beats infeasible. Two feasible individuals compare by objective,
/// with ties going to the incumbent. Two infeasible individuals: the
/// challenger wins iff none of its violations is larger.
pub fn challenger_wins(challenger: &Individual, incumbent: &Individual) -> bool {
    match (challenger.feasible, incumbent.feasible) {
        (true, false) => true,
        (false, true) => false,
        (true, true) => challenger.objective > incumbent.objective,
        (false, false) => challenger
            .violations()
            .iter()
            .zip(incumbent.violations())
            .all(|(a, b)| *a <= b),
    }
}

/// Like [`challenger_wins`] but requires a strict improvement between two
/// infeasible individuals. Used to decide whether the best has moved.
pub fn strictly_better(a: &Individual, b: &Individual) -> bool {
    match (a.feasible, b.feasible) {
        (false, false) => {
            let (va, vb) = (a.violations(), b.violations());
            va.iter().zip(&vb).all(|(x, y)| x <= y) && va.iter().zip(&vb).any(|(x, y)| x < y)
        }
        _ => challenger_wins(a, b),
    }
}

/// The preferred of `a` (challenger) and `b` (incumbent).
pub fn lampinen_compare<'a>(a: &'a Individual, b: &'a Individual) -> &'a Individual {
    if challenger_wins(a, b) {
        a
    } else {
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::de_solver::{default_scale_factor, ConstrainedSphere};
    use crate::market_data::reference_inputs;
    use crate::models::{ModelKind, OptimizationProblem};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ind(obj: f64, eq: f64, bounds: Vec<f64>) -> Individual {
        Individual::from_parts(vec![0.0; bounds.len()], obj, eq, bounds, 0.01)
    }

    #[test]
    fn sharpe_initialization() {
        let (stats, cov) = reference_inputs();
        let p = OptimizationProblem::new(ModelKind::Kelly, 0.3, stats.clone(), cov).unwrap();
        let init = initialize(&p).unwrap();
        assert_relative_eq!(init.genome.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        let ratios: Vec<f64> = stats.iter().map(|s| s.drift / s.volatility).collect();
        let total: f64 = ratios.iter().sum();
        assert_relative_eq!(init.genome[9], ratios[9] / total, epsilon = 1e-15);
        let argmax = init
            .genome
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 9);
        // X2's ratio is small enough to start below k_min.
        assert!(!init.feasible);
    }

    #[test]
    fn sharpe_initialization_small_cases() {
        use crate::market_data::{AssetStats, CovarianceMatrix};
        let s = |mu: f64, sigma: f64| AssetStats {
            label: "a".into(),
            avg_return: mu.exp_m1(),
            var_return: 0.0,
            drift: mu,
            volatility: sigma,
        };
        let cov2 = CovarianceMatrix::from_row_major(2, &[0.04, 0.0, 0.0, 0.09]).unwrap();
        let p =
            OptimizationProblem::new(ModelKind::Kelly, 0.5, vec![s(0.1, 0.1), s(0.3, 0.3)], cov2)
                .unwrap()
                .with_uniform_bounds(0.0, 0.9)
                .unwrap();
        assert_eq!(p.sharpe_weights().unwrap(), vec![0.5, 0.5]);
        let cov1 = CovarianceMatrix::from_row_major(1, &[0.04]).unwrap();
        let single =
            OptimizationProblem::new(ModelKind::Kelly, 0.5, vec![s(0.1, 0.2)], cov1.clone());
        // k_max < 1 makes a single-asset problem infeasible; the weights are still defined.
        assert!(single.is_err());
        let mut zero = s(0.1, 0.2);
        zero.volatility = 0.0;
        let p = OptimizationProblem::new(ModelKind::Kelly, 0.5, vec![zero, s(0.3, 0.3)], {
            CovarianceMatrix::from_row_major(2, &[0.0, 0.0, 0.0, 0.09]).unwrap()
        })
        .unwrap();
        assert!(matches!(
            p.sharpe_weights(),
            Err(crate::Error::Initialization(_))
        ));
    }

    #[test]
    fn mutation_degenerate_cases() {
        let pop: Vec<Vec<f64>> = (0..6).map(|i| vec![0.1 * i as f64; 3]).collect();
        let (lo, hi) = (vec![0.0; 3], vec![0.45; 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let c = mutate(&pop, 2, 0.0, 0.0, &lo, &hi, &mut rng);
            // With F = 0 and no noise the candidate is one of the donors, clipped.
            assert!(pop
                .iter()
                .enumerate()
                .any(|(i, x)| i != 2 && x.iter().zip(&c).all(|(a, b)| a.clamp(0.0, 0.45) == *b)));
        }
        let same: Vec<Vec<f64>> = vec![vec![0.3, 0.2]; 5];
        let c = mutate(&same, 0, 0.9, 0.0, &[0.0; 2], &[1.0; 2], &mut rng);
        assert_eq!(c, vec![0.3, 0.2]);
    }

    #[test]
    fn mutation_respects_bounds_and_donor_rule() {
        let pop: Vec<Vec<f64>> = (0..4).map(|i| vec![i as f64; 2]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let c = mutate(&pop, 0, 0.5, 0.0, &[0.0; 2], &[10.0; 2], &mut rng);
            // donors are {1,2,3}: r1 + 0.5(r2 − r3) with all distinct
            let possible = [
                1.0 + 0.5 * (2.0 - 3.0),
                1.0 + 0.5,
                2.0 - 1.0,
                2.0 + 1.0,
                3.0 - 0.5,
                3.0 + 0.5,
            ];
            assert!(possible.iter().any(|p| (p - c[0]).abs() < 1e-12), "{c:?}");
            let c = mutate(&pop, 0, 1.9, 1.0, &[0.0; 2], &[1.5; 2], &mut rng);
            assert!(c.iter().all(|x| (0.0..=1.5).contains(x)));
        }
    }

    #[test]
    fn default_scale_factor_for_reference_bounds() {
        assert_relative_eq!(
            default_scale_factor(&[0.05; 10], &[0.95; 10]),
            0.45,
            epsilon = 1e-15
        );
    }

    #[test]
    fn crossover_extremes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let t = vec![0.0; 10];
        let c = vec![1.0; 10];
        assert_eq!(crossover(&t, &c, 1.0, &mut rng), c);
        for _ in 0..100 {
            let trial = crossover(&t, &c, 0.0, &mut rng);
            assert_eq!(trial.iter().filter(|&&x| x == 1.0).count(), 1);
        }
    }

    /// Oracle: each of the nine non-forced components is taken with probability
    /// C, the forced one always, so E = 1 + 9 · 0.75 = 7.75.
    #[test]
    fn crossover_expected_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (t, c) = (vec![0.0; 10], vec![1.0; 10]);
        let trials = 100_000;
        let total: usize = (0..trials)
            .map(|_| {
                crossover(&t, &c, 0.75, &mut rng)
                    .iter()
                    .filter(|&&x| x == 1.0)
                    .count()
            })
            .sum();
        let mean = total as f64 / trials as f64;
        assert!((mean - 7.75).abs() / 7.75 < 0.01, "{mean}");
    }

    #[test]
    fn repair_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut g = vec![0.4, 0.4];
        let k = repair_equality(&mut g, &mut rng);
        assert_relative_eq!(g[k], 0.6, epsilon = 1e-15);

        let mut g = vec![0.05; 10];
        let k = repair_equality(&mut g, &mut rng);
        assert_relative_eq!(g[k], 0.55, epsilon = 1e-12);

        // Others sum to 1.2 → repaired value −0.2, gap 0.25 below k_min = 0.05.
        let sphere = ConstrainedSphere::new(3, 0.05, 0.95);
        let mut g = vec![0.6, 0.6, 0.6];
        let k = repair_equality(&mut g, &mut rng);
        assert_relative_eq!(g[k], -0.2, epsilon = 1e-12);
        let ind = Individual::evaluate(&sphere, g);
        assert_relative_eq!(ind.bound_gaps[k], 0.25, epsilon = 1e-12);
        assert!(ind.equality_gap < 1e-12 && !ind.feasible);
    }

    #[test]
    fn lampinen_examples() {
        let a = ind(1.0, 0.0, vec![0.0, 0.0]);
        let b = ind(5.0, 0.0, vec![0.1, 0.0]);
        assert!(std::ptr::eq(lampinen_compare(&a, &b), &a));
        assert!(std::ptr::eq(lampinen_compare(&b, &a), &a));

        let lo = ind(1.0, 0.0, vec![0.0; 2]);
        let hi = ind(2.0, 0.0, vec![0.0; 2]);
        assert!(std::ptr::eq(lampinen_compare(&lo, &hi), &hi));
        assert!(std::ptr::eq(lampinen_compare(&hi, &lo), &hi));
        // Equal objectives keep the incumbent.
        let same = ind(2.0, 0.0, vec![0.0; 2]);
        assert!(std::ptr::eq(lampinen_compare(&same, &hi), &hi));

        let a = ind(0.0, 0.0, vec![0.1, 0.0]);
        let b = ind(0.0, 0.0, vec![0.05, 0.05]);
        assert!(std::ptr::eq(lampinen_compare(&a, &b), &b));
        assert!(std::ptr::eq(lampinen_compare(&b, &a), &a));
    }

    /// Enumerates every ordering of two violation pairs over {0, 1, 2} and checks
    /// the infeasible-vs-infeasible rule against the dominance definition.
    #[test]
    fn lampinen_truth_table() {
        let levels = [0.0, 0.1, 0.2];
        for &a1 in &levels {
            for &a2 in &levels {
                for &b1 in &levels {
                    for &b2 in &levels {
                        if a1 + a2 == 0.0 || b1 + b2 == 0.0 {
                            continue;
                        }
                        let a = ind(0.0, 0.0, vec![a1, a2]);
                        let b = ind(0.0, 0.0, vec![b1, b2]);
                        let expected = a1 <= b1 && a2 <= b2;
                        assert_eq!(challenger_wins(&a, &b), expected, "{a1},{a2} vs {b1},{b2}");
                        let strict = expected && (a1 < b1 || a2 < b2);
                        assert_eq!(strictly_better(&a, &b), strict);
                    }
                }
            }
        }
    }

    #[test]
    fn equality_violation_counts_beyond_tolerance() {
        let a = ind(0.0, 0.005, vec![0.0]);
        assert!(a.feasible);
        let b = ind(0.0, 0.03, vec![0.0]);
        assert!(!b.feasible);
        assert_relative_eq!(b.violations()[0], 0.02, epsilon = 1e-15);
        assert!(challenger_wins(&a, &b));
    }
}
