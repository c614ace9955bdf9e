//! Mean-variance and decoupled Kelly objectives.
//!
//! Kelly portfolios are stored in actual-fraction space `g` (what is really
//! invested in each asset). The Kelly solver variable is `f = √g`; it only
//! appears inside the return term. Both risk functions are the same quadratic
//! form: `Σ g_i² M_ii + 2 Σ_{j>i} g_i g_j M_ij`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::{AssetStats, CovarianceMatrix};
use crate::quadrature::{GaussHermite, QuadratureSpec};

pub const DEFAULT_K_MIN: f64 = 0.05;
pub const DEFAULT_K_MAX: f64 = 0.95;
pub const DEFAULT_EQUALITY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "mv")]
    MeanVariance,
    #[serde(rename = "kelly")]
    Kelly,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::MeanVariance => "mv",
            ModelKind::Kelly => "kelly",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mv" | "mean-variance" => Ok(ModelKind::MeanVariance),
            "kelly" => Ok(ModelKind::Kelly),
            other => Err(Error::InvalidConfig(format!("unknown model {other:?}"))),
        }
    }
}

/// An allocation. `weights` are `F_i` for MV and actual fractions `g_i` for Kelly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    pub kind: ModelKind,
    pub weights: Vec<f64>,
}

impl Portfolio {
    pub fn new(kind: ModelKind, weights: Vec<f64>) -> Result<Self> {
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::Domain(format!("negative or non-finite weight {w}")));
        }
        Ok(Self { kind, weights })
    }

    /// The variables the model is written in: `F` for MV, `f = √g` for Kelly.
    pub fn solver_variables(&self) -> Vec<f64> {
        match self.kind {
            ModelKind::MeanVariance => self.weights.clone(),
            ModelKind::Kelly => self.weights.iter().map(|g| g.sqrt()).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Equality and per-asset bound violations of a weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintReport {
    /// |Σ w − 1|
    pub equality_gap: f64,
    /// max(0, k_min − w, w − k_max) per asset.
    pub bound_gaps: Vec<f64>,
    pub feasible: bool,
}

/// A single-objective portfolio problem.
#[derive(Debug, Clone)]
pub struct OptimizationProblem {
    pub kind: ModelKind,
    pub risk_parameter: f64,
    pub k_min: Vec<f64>,
    pub k_max: Vec<f64>,
    pub equality_tolerance: f64,
    pub stats: Vec<AssetStats>,
    pub covariance: CovarianceMatrix,
    pub quadrature: QuadratureSpec,
    rule: GaussHermite,
}

impl OptimizationProblem {
    /// Uniform 0.05/0.95 bounds, ±0.01 equality tolerance, 128-node quadrature.
    pub fn new(
        kind: ModelKind,
        risk_parameter: f64,
        stats: Vec<AssetStats>,
        covariance: CovarianceMatrix,
    ) -> Result<Self> {
        let n = stats.len();
        let quadrature = QuadratureSpec::default();
        let problem = Self {
            kind,
            risk_parameter,
            k_min: vec![DEFAULT_K_MIN; n],
            k_max: vec![DEFAULT_K_MAX; n],
            equality_tolerance: DEFAULT_EQUALITY_TOLERANCE,
            stats,
            covariance,
            rule: quadrature.rule(),
            quadrature,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn with_bounds(mut self, k_min: Vec<f64>, k_max: Vec<f64>) -> Result<Self> {
        self.k_min = k_min;
        self.k_max = k_max;
        self.validate()?;
        Ok(self)
    }

    pub fn with_uniform_bounds(self, k_min: f64, k_max: f64) -> Result<Self> {
        let n = self.dim();
        self.with_bounds(vec![k_min; n], vec![k_max; n])
    }

    pub fn with_equality_tolerance(mut self, tol: f64) -> Result<Self> {
        self.equality_tolerance = tol;
        self.validate()?;
        Ok(self)
    }

    pub fn with_quadrature(mut self, spec: QuadratureSpec) -> Self {
        self.rule = spec.rule();
        self.quadrature = spec;
        self
    }

    pub fn dim(&self) -> usize {
        self.stats.len()
    }

    pub fn rule(&self) -> &GaussHermite {
        &self.rule
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        if n == 0 {
            return Err(Error::Degenerate("problem has no assets".into()));
        }
        if self.covariance.dim() != n {
            return Err(Error::Shape {
                expected: n,
                got: self.covariance.dim(),
                context: "covariance vs asset count",
            });
        }
        if !(0.0..=1.0).contains(&self.risk_parameter) {
            return Err(Error::Domain(format!(
                "risk parameter P = {} outside [0, 1]",
                self.risk_parameter
            )));
        }
        for (name, v) in [("k_min", &self.k_min), ("k_max", &self.k_max)] {
            if v.len() != n {
                return Err(Error::Shape {
                    expected: n,
                    got: v.len(),
                    context: name,
                });
            }
        }
        for i in 0..n {
            let (lo, hi) = (self.k_min[i], self.k_max[i]);
            if !(0.0 <= lo && lo <= hi && hi < 1.0) {
                return Err(Error::Domain(format!(
                    "asset {i}: bounds must satisfy 0 <= k_min <= k_max < 1, got [{lo}, {hi}]"
                )));
            }
        }
        let (smin, smax): (f64, f64) = (self.k_min.iter().sum(), self.k_max.iter().sum());
        if smin > 1.0 || smax < 1.0 {
            return Err(Error::Domain(format!(
                "empty feasible region: sum k_min = {smin}, sum k_max = {smax}"
            )));
        }
        if !(self.equality_tolerance >= 0.0) {
            return Err(Error::Domain("equality tolerance must be >= 0".into()));
        }
        Ok(())
    }

    /// The model's objective (maximized).
    pub fn objective(&self, weights: &[f64]) -> Result<f64> {
        match self.kind {
            ModelKind::MeanVariance => mv_objective(weights, self),
            ModelKind::Kelly => kelly_objective(weights, self),
        }
    }

    /// Reported portfolio return: Σ F_i Avg[R]_i for MV, the decoupled return for Kelly.
    pub fn portfolio_return(&self, weights: &[f64]) -> Result<f64> {
        match self.kind {
            ModelKind::MeanVariance => mv_return(weights, &self.stats),
            ModelKind::Kelly => decoupled_return(weights, &self.stats, &self.rule),
        }
    }

    pub fn risk(&self, weights: &[f64]) -> Result<f64> {
        match self.kind {
            ModelKind::MeanVariance => mv_risk(weights, &self.covariance),
            ModelKind::Kelly => kelly_risk(weights, &self.covariance),
        }
    }

    pub fn constraint_violation(&self, weights: &[f64]) -> ConstraintReport {
        constraint_violation(weights, self)
    }

    /// Objective, reported return and risk in one pass; the Kelly growth
    /// factors are shared between objective and return.
    pub fn evaluate_all(&self, weights: &[f64]) -> Result<(f64, f64, f64)> {
        match self.kind {
            ModelKind::MeanVariance => {
                let p = checked_p(self)?;
                let ret = mv_return(weights, &self.stats)?;
                let risk = mv_risk(weights, &self.covariance)?;
                Ok((p * ret - (1.0 - p) * risk, ret, risk))
            }
            ModelKind::Kelly => {
                let p = checked_p(self)?;
                let factors = growth_factors(weights, &self.stats, &self.rule)?;
                let risk = kelly_risk(weights, &self.covariance)?;
                let term: f64 = factors.iter().map(|(f, e)| f * (e - 1.0)).sum();
                let ret = factors.iter().map(|(f, e)| f * e).sum::<f64>() - 1.0;
                Ok((p * term - (1.0 - p) * risk, ret, risk))
            }
        }
    }

    /// drift/volatility ratios normalized to sum to one.
    pub fn sharpe_weights(&self) -> Result<Vec<f64>> {
        let mut ratios = Vec::with_capacity(self.dim());
        for s in &self.stats {
            if !(s.volatility > 0.0) {
                return Err(Error::Initialization(format!(
                    "asset {} has zero volatility; drift/volatility ratio undefined",
                    s.label
                )));
            }
            ratios.push(s.drift / s.volatility);
        }
        let total: f64 = ratios.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Initialization(format!(
                "sum of drift/volatility ratios is {total}, cannot normalize"
            )));
        }
        Ok(ratios.iter().map(|r| r / total).collect())
    }
}

fn check_len(got: usize, expected: usize, context: &'static str) -> Result<()> {
    if got != expected {
        return Err(Error::Shape {
            expected,
            got,
            context,
        });
    }
    Ok(())
}

/// Σ F_i · Avg[R]_i
pub fn mv_return(weights: &[f64], stats: &[AssetStats]) -> Result<f64> {
    check_len(weights.len(), stats.len(), "weights vs stats")?;
    Ok(weights
        .iter()
        .zip(stats)
        .map(|(w, s)| w * s.avg_return)
        .sum())
}

pub fn mv_risk(weights: &[f64], cov: &CovarianceMatrix) -> Result<f64> {
    cov.quadratic_form(weights)
}

/// Risk quartic in `f`, i.e. the covariance quadratic form in `g = f²`.
pub fn kelly_risk(g: &[f64], cov: &CovarianceMatrix) -> Result<f64> {
    cov.quadratic_form(g)
}

/// `E[ln(1 + f X)]` for `X = exp(μ − σ²/2 + σy) − 1`, `y ~ N(0, 1)`.
pub fn kelly_expectation(f: f64, mu: f64, sigma: f64, rule: &GaussHermite) -> Result<f64> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::Domain(format!(
            "Kelly fraction f = {f} outside [0, 1]; leverage is not supported"
        )));
    }
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("volatility {sigma} must be >= 0")));
    }
    if f == 0.0 {
        return Ok(0.0);
    }
    let shift = mu - 0.5 * sigma * sigma;
    Ok(rule.expect(|y| log_growth(f, shift + sigma * y)))
}

/// ln(1 + f(e^z − 1)), accurate for both small f·(e^z − 1) and f near one.
#[inline]
fn log_growth(f: f64, z: f64) -> f64 {
    (f * z.exp_m1()).ln_1p()
}

/// Per-asset growth factors `exp(E[ln(1 + f_i X_i)])` with `f_i = √g_i`.
fn growth_factors(g: &[f64], stats: &[AssetStats], rule: &GaussHermite) -> Result<Vec<(f64, f64)>> {
    check_len(g.len(), stats.len(), "fractions vs stats")?;
    g.iter()
        .zip(stats)
        .map(|(&gi, s)| {
            if !(0.0..=1.0).contains(&gi) {
                return Err(Error::Domain(format!(
                    "actual fraction g = {gi} outside [0, 1]"
                )));
            }
            let f = gi.sqrt();
            let k = kelly_expectation(f, s.drift, s.volatility, rule)?;
            Ok((f, k.exp()))
        })
        .collect()
}

/// Reporting form: `Σ f_i exp(E[ln(1 + f_i X_i)]) − 1`.
pub fn decoupled_return(g: &[f64], stats: &[AssetStats], rule: &GaussHermite) -> Result<f64> {
    Ok(growth_factors(g, stats, rule)?
        .iter()
        .map(|(f, e)| f * e)
        .sum::<f64>()
        - 1.0)
}

/// Objective form: `Σ f_i (exp(E[ln(1 + f_i X_i)]) − 1)`.
pub fn kelly_return_term(g: &[f64], stats: &[AssetStats], rule: &GaussHermite) -> Result<f64> {
    Ok(growth_factors(g, stats, rule)?
        .iter()
        .map(|(f, e)| f * (e - 1.0))
        .sum())
}

pub fn mv_objective(weights: &[f64], problem: &OptimizationProblem) -> Result<f64> {
    let p = checked_p(problem)?;
    let ret = mv_return(weights, &problem.stats)?;
    let risk = mv_risk(weights, &problem.covariance)?;
    Ok(p * ret - (1.0 - p) * risk)
}

pub fn kelly_objective(g: &[f64], problem: &OptimizationProblem) -> Result<f64> {
    let p = checked_p(problem)?;
    let ret = kelly_return_term(g, &problem.stats, problem.rule())?;
    let risk = kelly_risk(g, &problem.covariance)?;
    Ok(p * ret - (1.0 - p) * risk)
}

fn checked_p(problem: &OptimizationProblem) -> Result<f64> {
    let p = problem.risk_parameter;
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Domain(format!(
            "risk parameter P = {p} outside [0, 1]"
        )));
    }
    Ok(p)
}

pub fn constraint_violation(weights: &[f64], problem: &OptimizationProblem) -> ConstraintReport {
    let equality_gap = (weights.iter().sum::<f64>() - 1.0).abs();
    let bound_gaps: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let lo = problem.k_min.get(i).copied().unwrap_or(0.0);
            let hi = problem.k_max.get(i).copied().unwrap_or(1.0);
            (lo - w).max(w - hi).max(0.0)
        })
        .collect();
    let feasible = weights.len() == problem.dim()
        && equality_gap <= problem.equality_tolerance
        && bound_gaps.iter().all(|&b| b == 0.0);
    ConstraintReport {
        equality_gap,
        bound_gaps,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::{lognormal_moments, reference_inputs};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn problem(kind: ModelKind, p: f64) -> OptimizationProblem {
        let (stats, cov) = reference_inputs();
        OptimizationProblem::new(kind, p, stats, cov).unwrap()
    }

    fn corner() -> Vec<f64> {
        let mut w = vec![0.05; 10];
        w[9] = 0.55;
        w
    }

    #[test]
    fn mv_return_examples() {
        let (stats, _) = reference_inputs();
        let avg: f64 = stats.iter().map(|s| s.avg_return).sum::<f64>() / 10.0;
        assert_relative_eq!(
            mv_return(&[0.1; 10], &stats).unwrap(),
            0.24299,
            epsilon = 1e-12
        );
        assert_relative_eq!(avg, 0.24299, epsilon = 1e-12);
        assert_eq!(mv_return(&[0.0; 10], &stats).unwrap(), 0.0);
        let mut w = vec![0.05; 10];
        w[9] = 0.5499;
        // 0.05 · (sum of first nine Avg[R]) + 0.5499 · 0.4405
        let expected = 0.05 * 1.9894 + 0.5499 * 0.4405;
        assert_relative_eq!(mv_return(&w, &stats).unwrap(), expected, epsilon = 1e-12);
        assert!(matches!(
            mv_return(&[0.1; 3], &stats),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn risk_examples() {
        let (_, cov) = reference_inputs();
        let mut e1 = vec![0.0; 10];
        e1[0] = 1.0;
        assert_relative_eq!(mv_risk(&e1, &cov).unwrap(), 0.1817, epsilon = 1e-15);
        assert_relative_eq!(kelly_risk(&e1, &cov).unwrap(), 0.1817, epsilon = 1e-15);
        assert_eq!(mv_risk(&[0.0; 10], &cov).unwrap(), 0.0);
        let mut h = vec![0.0; 10];
        h[0] = 0.5;
        h[1] = 0.5;
        assert_relative_eq!(mv_risk(&h, &cov).unwrap(), 0.128575, epsilon = 1e-15);
        assert_relative_eq!(kelly_risk(&h, &cov).unwrap(), 0.128575, epsilon = 1e-15);
        assert!(mv_risk(&[1.0], &cov).is_err());
    }

    #[test]
    fn kelly_expectation_examples() {
        let q = GaussHermite::default();
        assert_eq!(kelly_expectation(0.0, 0.1613, 0.3516, &q).unwrap(), 0.0);
        let k = kelly_expectation(1.0, 0.1613, 1e-12, &q).unwrap();
        assert!((k - 0.1613).abs() < 1e-9);
        assert!(kelly_expectation(1.0 + 1e-9, 0.1, 0.2, &q).is_err());
        assert!(kelly_expectation(-0.1, 0.1, 0.2, &q).is_err());
    }

    /// 10⁷ direct draws of ln(1 + f X) as the oracle.
    #[test]
    fn kelly_expectation_matches_sampling() {
        let (f, mu, sigma) = (0.7416f64, 0.1613f64, 0.3516f64);
        let q = GaussHermite::default();
        let k = kelly_expectation(f, mu, sigma, &q).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let n = 10_000_000usize;
        let (mut s, mut ss) = (0.0, 0.0);
        for _ in 0..n {
            let y: f64 = StandardNormal.sample(&mut rng);
            let x = (mu - 0.5 * sigma * sigma + sigma * y).exp_m1();
            let l = (f * x).ln_1p();
            s += l;
            ss += l * l;
        }
        let mean = s / n as f64;
        let se = ((ss / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((k - mean).abs() < 3.0 * se, "{k} vs {mean} ± {se}");
    }

    #[test]
    fn decoupled_return_examples() {
        let (stats, _) = reference_inputs();
        let q = GaussHermite::default();
        assert_relative_eq!(decoupled_return(&[0.0; 10], &stats, &q).unwrap(), -1.0);
        let riskless = vec![AssetStats {
            label: "r".into(),
            avg_return: 0.1613f64.exp_m1(),
            var_return: 0.0,
            drift: 0.1613,
            volatility: 1e-12,
        }];
        let r = decoupled_return(&[1.0], &riskless, &q).unwrap();
        assert!((r - 0.1750).abs() < 1e-4 && (r - 0.1613f64.exp_m1()).abs() < 1e-6);
        assert!(decoupled_return(&[1.2], &riskless, &q).is_err());
    }

    #[test]
    fn objective_examples() {
        let w = corner();
        for kind in [ModelKind::MeanVariance, ModelKind::Kelly] {
            let p1 = problem(kind, 1.0);
            let p0 = problem(kind, 0.0);
            assert_relative_eq!(
                p0.objective(&w).unwrap(),
                -p0.risk(&w).unwrap(),
                epsilon = 1e-15
            );
            if kind == ModelKind::MeanVariance {
                assert_relative_eq!(p1.objective(&w).unwrap(), mv_return(&w, &p1.stats).unwrap());
            }
            for p in [0.0, 0.3, 1.0] {
                assert_eq!(problem(kind, p).objective(&[0.0; 10]).unwrap(), 0.0);
            }
        }
        let p = problem(ModelKind::MeanVariance, 0.5);
        let mut w = vec![0.05; 10];
        w[9] = 0.5499;
        let expected =
            0.5 * mv_return(&w, &p.stats).unwrap() - 0.5 * mv_risk(&w, &p.covariance).unwrap();
        assert_relative_eq!(p.objective(&w).unwrap(), expected, epsilon = 1e-15);
    }

    #[test]
    fn fused_evaluation_matches_parts() {
        let g = [0.07, 0.05, 0.06, 0.05, 0.12, 0.05, 0.08, 0.05, 0.05, 0.42];
        for kind in [ModelKind::MeanVariance, ModelKind::Kelly] {
            let p = problem(kind, 0.4);
            let (obj, ret, risk) = p.evaluate_all(&g).unwrap();
            assert_eq!(obj, p.objective(&g).unwrap());
            assert_eq!(ret, p.portfolio_return(&g).unwrap());
            assert_eq!(risk, p.risk(&g).unwrap());
        }
    }

    /// The P = 0.3 Kelly row is a local maximum among feasible neighbours that
    /// move 0.01 between two assets.
    #[test]
    fn kelly_p03_row_is_locally_optimal() {
        let p = problem(ModelKind::Kelly, 0.3);
        let row = [
            0.05, 0.05, 0.05, 0.05, 0.0501, 0.05, 0.05, 0.0501, 0.05, 0.5498,
        ];
        let base = p.objective(&row).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                if i == j {
                    continue;
                }
                let mut g = row;
                g[i] += 0.01;
                g[j] -= 0.01;
                if g[j] < p.k_min[j] - 1e-12 {
                    continue;
                }
                assert!(p.objective(&g).unwrap() < base, "move {j}->{i}");
            }
        }
    }

    #[test]
    fn constraint_examples() {
        let p = problem(ModelKind::MeanVariance, 0.1);
        let r = constraint_violation(&corner(), &p);
        assert!(r.equality_gap < 1e-12 && r.bound_gaps.iter().all(|&b| b == 0.0) && r.feasible);
        let r = constraint_violation(&[0.04; 10], &p);
        for b in &r.bound_gaps {
            assert_relative_eq!(*b, 0.01, epsilon = 1e-12);
        }
        assert!(!r.feasible);
        let mut w = corner();
        w[9] += 0.005;
        assert!(constraint_violation(&w, &p).feasible);
        w[9] += 0.006;
        assert!(!constraint_violation(&w, &p).feasible);
    }

    #[test]
    fn problem_validation() {
        let (stats, cov) = reference_inputs();
        assert!(
            OptimizationProblem::new(ModelKind::Kelly, 1.5, stats.clone(), cov.clone()).is_err()
        );
        let p = OptimizationProblem::new(ModelKind::Kelly, 0.5, stats, cov).unwrap();
        assert!(p.clone().with_uniform_bounds(0.05, 1.0).is_err());
        assert!(p.clone().with_uniform_bounds(0.2, 0.9).is_err());
        assert!(p.clone().with_uniform_bounds(0.0, 0.05).is_err());
        assert!(Portfolio::new(ModelKind::Kelly, vec![-0.1, 1.1]).is_err());
    }

    #[test]
    fn quadrature_converges() {
        let (q64, q128, q256) = (
            GaussHermite::new(64),
            GaussHermite::new(128),
            GaussHermite::new(256),
        );
        for &f in &[0.0, 0.01, 0.3, 0.7416, 0.99, 1.0] {
            for &mu in &[0.0, 0.2, 0.4] {
                for &sigma in &[0.05, 0.25, 0.5] {
                    let a = kelly_expectation(f, mu, sigma, &q64).unwrap();
                    let b = kelly_expectation(f, mu, sigma, &q128).unwrap();
                    let c = kelly_expectation(f, mu, sigma, &q256).unwrap();
                    assert!((a - b).abs() < 1e-9 && (b - c).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn small_f_taylor_remainder_is_cubic() {
        let q = GaussHermite::default();
        for &(mu, sigma) in &[(0.1613, 0.3516), (0.3650, 0.1991), (0.05, 0.45)] {
            let (ex, ex2) = lognormal_moments(mu, sigma);
            let dev = |f: f64| {
                (kelly_expectation(f, mu, sigma, &q).unwrap() - (f * ex - 0.5 * f * f * ex2)).abs()
            };
            for &f in &[0.01, 0.005, 0.002] {
                assert!(dev(f) / dev(f / 2.0) >= 7.0);
            }
        }
    }

    /// f ↦ f·exp(E[ln(1 + fX)]) behaves like f + f²E[X] near zero, so it is
    /// convex. The concave pieces are the growth rate itself and the return
    /// term written in the decision variable g.
    #[test]
    fn curvature_of_growth_terms() {
        let (stats, _) = reference_inputs();
        let q = GaussHermite::default();
        let h = 1e-3;
        for s in &stats {
            let k = |f: f64| kelly_expectation(f, s.drift, s.volatility, &q).unwrap();
            let literal = |f: f64| f * k(f).exp();
            let in_g = |g: f64| g.sqrt() * (k(g.sqrt()).exp() - 1.0);
            let d2 = |fun: &dyn Fn(f64) -> f64, x: f64| {
                (fun(x + h) - 2.0 * fun(x) + fun(x - h)) / (h * h)
            };
            assert!(d2(&literal, 0.3) > 0.0);
            for x in [0.06, 0.3, 0.6, 0.94] {
                assert!(d2(&k, x) <= 1e-8);
                assert!(d2(&in_g, x) <= 1e-8);
            }
        }
    }

    proptest! {
        #[test]
        fn kelly_and_mv_risk_agree(g in proptest::collection::vec(0.0f64..1.0, 10)) {
            let (_, cov) = reference_inputs();
            prop_assert_eq!(kelly_risk(&g, &cov).unwrap(), mv_risk(&g, &cov).unwrap());
        }

        #[test]
        fn risk_is_convex(
            g in proptest::collection::vec(0.0f64..1.0, 10),
            h in proptest::collection::vec(0.0f64..1.0, 10),
            t in 0.0f64..1.0,
        ) {
            let (_, cov) = reference_inputs();
            let mix: Vec<f64> = g.iter().zip(&h).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let lhs = kelly_risk(&mix, &cov).unwrap();
            let rhs = t * kelly_risk(&g, &cov).unwrap() + (1.0 - t) * kelly_risk(&h, &cov).unwrap();
            prop_assert!(lhs <= rhs + 1e-12);
        }

        #[test]
        fn objectives_linear_in_p(g in proptest::collection::vec(0.0f64..0.5, 10), p in 0.0f64..1.0) {
            for kind in [ModelKind::MeanVariance, ModelKind::Kelly] {
                let at = |p: f64| problem(kind, p).objective(&g).unwrap();
                let (a, b) = (at(0.0), at(1.0));
                let interp = (1.0 - p) * a + p * b;
                prop_assert!((at(p) - interp).abs() <= 1e-12 * (1.0 + a.abs() + b.abs()));
            }
        }
    }
}
