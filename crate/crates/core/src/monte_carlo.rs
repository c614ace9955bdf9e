//! Correlated lognormal return sampling and simulated return-to-risk ratios.
//!
//! Draws are produced in fixed blocks of [`CHUNK_ROWS`] rows; block `c` uses
//! stream `c` of a ChaCha8 generator keyed by the seed, so the output is the
//! same for any thread count or execution mode.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::ExecMode;
use crate::market_data::{AssetStats, CovarianceMatrix};
use crate::models::{ModelKind, Portfolio};

pub const DEFAULT_SAMPLE_COUNT: usize = 10_000;
pub const CHUNK_ROWS: usize = 1024;
/// Diagonal jitter tried once when the correlation matrix will not factor.
pub const FACTOR_JITTER: f64 = 1e-10;
const PIVOT_TOLERANCE: f64 = 1e-12;
const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// How the normal-space correlation is derived from the return covariance.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationMode {
    /// The return covariance normalized by its diagonal.
    #[default]
    ReturnSpace,
    /// The log-space correlation that makes Cov(X_i, X_j) match the return
    /// covariance exactly under the lognormal model.
    LognormalExact,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointReturnModel {
    pub stats: Vec<AssetStats>,
    pub correlation: DMatrix<f64>,
    /// Lower triangular with `factor · factorᵀ = correlation (+ jitter·I)`.
    pub factor: DMatrix<f64>,
    /// Diagonal jitter that was needed to factor, 0 if none.
    pub jitter: f64,
    pub mode: CorrelationMode,
}

impl JointReturnModel {
    pub fn new(
        stats: Vec<AssetStats>,
        cov: &CovarianceMatrix,
        mode: CorrelationMode,
    ) -> Result<Self> {
        if cov.dim() != stats.len() {
            return Err(Error::Shape {
                expected: stats.len(),
                got: cov.dim(),
                context: "covariance vs stats",
            });
        }
        let correlation = match mode {
            CorrelationMode::ReturnSpace => cov.correlation(),
            CorrelationMode::LognormalExact => lognormal_correlation(&stats, cov),
        };
        let mut model = Self::from_correlation(stats, correlation)?;
        model.mode = mode;
        Ok(model)
    }

    /// Independent assets.
    pub fn independent(stats: Vec<AssetStats>) -> Result<Self> {
        let n = stats.len();
        Self::from_correlation(stats, DMatrix::identity(n, n))
    }

    pub fn from_correlation(stats: Vec<AssetStats>, correlation: DMatrix<f64>) -> Result<Self> {
        let n = stats.len();
        if n == 0 {
            return Err(Error::Degenerate(
                "joint model needs at least one asset".into(),
            ));
        }
        if correlation.nrows() != n || correlation.ncols() != n {
            return Err(Error::Shape {
                expected: n,
                got: correlation.nrows(),
                context: "correlation vs stats",
            });
        }
        for s in &stats {
            if !(s.volatility >= 0.0) || !s.drift.is_finite() {
                return Err(Error::Domain(format!(
                    "asset {}: drift {} / volatility {} not usable",
                    s.label, s.drift, s.volatility
                )));
            }
        }
        for i in 0..n {
            if (correlation[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::Domain(format!(
                    "correlation diagonal {i} is {}, expected 1",
                    correlation[(i, i)]
                )));
            }
            for j in 0..i {
                let (a, b) = (correlation[(i, j)], correlation[(j, i)]);
                if a != b {
                    return Err(Error::Asymmetric {
                        row: i,
                        col: j,
                        a,
                        b,
                    });
                }
            }
        }
        let (factor, jitter) = match psd_cholesky(&correlation) {
            Some(l) => (l, 0.0),
            None => {
                let jittered = &correlation + DMatrix::identity(n, n) * FACTOR_JITTER;
                match psd_cholesky(&jittered) {
                    Some(l) => (l, FACTOR_JITTER),
                    None => {
                        let min_eigenvalue =
                            correlation.clone().symmetric_eigen().eigenvalues.min();
                        return Err(Error::NotPositiveSemiDefinite { min_eigenvalue });
                    }
                }
            }
        };
        Ok(Self {
            stats,
            correlation,
            factor,
            jitter,
            mode: CorrelationMode::ReturnSpace,
        })
    }

    pub fn dim(&self) -> usize {
        self.stats.len()
    }

    /// max |factor · factorᵀ − correlation|
    pub fn reconstruction_error(&self) -> f64 {
        let r = &self.factor * self.factor.transpose() - &self.correlation;
        r.amax()
    }

    /// Canonical text of everything that determines the draws, for hashing.
    pub fn fingerprint_source(&self) -> String {
        let mut s = format!("mode={:?};jitter={:?};", self.mode, self.jitter);
        for a in &self.stats {
            s.push_str(&format!("{}:{:?}:{:?};", a.label, a.drift, a.volatility));
        }
        for v in self.correlation.transpose().iter() {
            s.push_str(&format!("{v:?},"));
        }
        s
    }
}

/// `ln(1 + C_ij e^{−μ_i−μ_j})`, normalized to unit diagonal.
fn lognormal_correlation(stats: &[AssetStats], cov: &CovarianceMatrix) -> DMatrix<f64> {
    let n = stats.len();
    let log_cov = DMatrix::from_fn(n, n, |i, j| {
        (cov.get(i, j) * (-stats[i].drift - stats[j].drift).exp()).ln_1p()
    });
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            return 1.0;
        }
        let d = (log_cov[(i, i)] * log_cov[(j, j)]).sqrt();
        if d > 0.0 {
            log_cov[(i, j)] / d
        } else {
            0.0
        }
    })
}

/// Cholesky that accepts semi-definite input: a (numerically) zero pivot
/// gives a zero column as long as the rest of that column also vanishes.
fn psd_cholesky(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)] * l[(j, k)]).sum::<f64>();
        if d > PIVOT_TOLERANCE {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..n {
                let r = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                l[(i, j)] = r / ljj;
            }
        } else if d >= -PIVOT_TOLERANCE {
            for i in j + 1..n {
                let r = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                if r.abs() > RESIDUAL_TOLERANCE {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub sample_count: usize,
    /// Periods per wealth path.
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: ExecMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_count: DEFAULT_SAMPLE_COUNT,
            horizon: 1,
            seed: 0,
            exec: ExecMode::default(),
        }
    }
}

impl SimConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 2 {
            return Err(Error::InvalidConfig(format!(
                "sample_count must be >= 2, got {}",
                self.sample_count
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Row-major draw matrix. Row `s · periods + t` holds sample `s`, period `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Draws {
    assets: usize,
    periods: usize,
    data: Vec<f64>,
}

impl Draws {
    pub fn from_rows(assets: usize, periods: usize, data: Vec<f64>) -> Result<Self> {
        if assets == 0 || periods == 0 || !data.len().is_multiple_of(assets * periods) {
            return Err(Error::Shape {
                expected: assets * periods,
                got: data.len(),
                context: "draw buffer is not a whole number of samples",
            });
        }
        Ok(Self {
            assets,
            periods,
            data,
        })
    }

    pub fn assets(&self) -> usize {
        self.assets
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.assets
    }

    pub fn samples(&self) -> usize {
        self.rows() / self.periods
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.assets..(r + 1) * self.assets]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.assets)
    }

    /// All periods of sample `s`, `periods × assets` row-major.
    pub fn sample(&self, s: usize) -> &[f64] {
        let w = self.assets * self.periods;
        &self.data[s * w..(s + 1) * w]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }
}

/// Correlated standard normals `y = factor · z`, `sample_count × period_count` rows.
pub fn sample_normals(
    model: &JointReturnModel,
    config: &SimConfig,
    period_count: usize,
) -> Result<Draws> {
    fill_draws(model, config, period_count, false)
}

/// `X_i = exp(μ_i − σ_i²/2 + σ_i y_i) − 1`, `sample_count × period_count` rows.
pub fn sample_returns(
    model: &JointReturnModel,
    config: &SimConfig,
    period_count: usize,
) -> Result<Draws> {
    fill_draws(model, config, period_count, true)
}

fn fill_draws(
    model: &JointReturnModel,
    config: &SimConfig,
    period_count: usize,
    to_returns: bool,
) -> Result<Draws> {
    config.validate()?;
    if period_count == 0 {
        return Err(Error::InvalidConfig("period_count must be >= 1".into()));
    }
    let n = model.dim();
    let rows = config
        .sample_count
        .checked_mul(period_count)
        .ok_or_else(|| Error::InvalidConfig("sample_count × periods overflows".into()))?;
    let shift: Vec<f64> = model
        .stats
        .iter()
        .map(|s| s.drift - 0.5 * s.volatility * s.volatility)
        .collect();
    let mut data = vec![0.0; rows * n];
    config
        .exec
        .for_each_chunk_mut(&mut data, CHUNK_ROWS * n, |chunk, block| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(chunk as u64);
            let mut z = vec![0.0; n];
            for row in block.chunks_exact_mut(n) {
                for zk in z.iter_mut() {
                    *zk = StandardNormal.sample(&mut rng);
                }
                for i in 0..n {
                    let y: f64 = z[..=i]
                        .iter()
                        .enumerate()
                        .map(|(k, zk)| model.factor[(i, k)] * zk)
                        .sum();
                    row[i] = if to_returns {
                        (shift[i] + model.stats[i].volatility * y).exp_m1()
                    } else {
                        y
                    };
                }
            }
        });
    Draws::from_rows(n, period_count, data)
}

/// Single-period portfolio return for one draw: `Σ f_i (1 + f_i X_i) − 1`
/// with `f = √g` for Kelly, `Σ F_i X_i` for MV.
pub fn period_return(x: &[f64], portfolio: &Portfolio) -> Result<f64> {
    if x.len() != portfolio.len() {
        return Err(Error::Shape {
            expected: portfolio.len(),
            got: x.len(),
            context: "draw width vs portfolio",
        });
    }
    Ok(match portfolio.kind {
        ModelKind::MeanVariance => portfolio.weights.iter().zip(x).map(|(w, x)| w * x).sum(),
        ModelKind::Kelly => {
            portfolio
                .weights
                .iter()
                .zip(x)
                .map(|(g, x)| {
                    let f = g.sqrt();
                    f * (1.0 + f * x)
                })
                .sum::<f64>()
                - 1.0
        }
    })
}

/// [`period_return`] for every row of `draws`.
pub fn portfolio_period_return(draws: &Draws, portfolio: &Portfolio) -> Result<Vec<f64>> {
    if draws.assets() != portfolio.len() {
        return Err(Error::Shape {
            expected: portfolio.len(),
            got: draws.assets(),
            context: "draw width vs portfolio",
        });
    }
    draws
        .iter_rows()
        .map(|x| period_return(x, portfolio))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthPath {
    /// `W_t / W_0` after each completed period.
    pub multipliers: Vec<f64>,
    /// Period (0-based) in which a wealth factor hit zero or below. The path
    /// stops before it.
    pub ruined_at: Option<usize>,
}

/// Fixed-fractional wealth over the given periods. Kelly keeps a separate
/// compounding stake per asset, `Σ f_i Π_t (1 + f_i X_{i,t})`; MV rebalances,
/// `Π_t (1 + Σ F_i X_{i,t})`.
pub fn wealth_path_from_draws(periods: &[Vec<f64>], portfolio: &Portfolio) -> Result<WealthPath> {
    let n = portfolio.len();
    let flat: Vec<f64> = periods.iter().flatten().copied().collect();
    if periods.iter().any(|p| p.len() != n) {
        return Err(Error::Shape {
            expected: n,
            got: periods.iter().map(Vec::len).find(|&l| l != n).unwrap_or(0),
            context: "draw width vs portfolio",
        });
    }
    Ok(path_from_flat(&flat, n, portfolio))
}

fn path_from_flat(flat: &[f64], n: usize, portfolio: &Portfolio) -> WealthPath {
    let mut multipliers = Vec::with_capacity(flat.len() / n.max(1));
    match portfolio.kind {
        ModelKind::Kelly => {
            let f: Vec<f64> = portfolio.weights.iter().map(|g| g.sqrt()).collect();
            let mut stake = vec![1.0; n];
            for (t, x) in flat.chunks_exact(n).enumerate() {
                for i in 0..n {
                    let factor = 1.0 + f[i] * x[i];
                    if f[i] > 0.0 && factor <= 0.0 {
                        return WealthPath {
                            multipliers,
                            ruined_at: Some(t),
                        };
                    }
                    stake[i] *= factor;
                }
                multipliers.push(f.iter().zip(&stake).map(|(f, s)| f * s).sum());
            }
        }
        ModelKind::MeanVariance => {
            let mut w = 1.0;
            for (t, x) in flat.chunks_exact(n).enumerate() {
                let factor = 1.0
                    + portfolio
                        .weights
                        .iter()
                        .zip(x)
                        .map(|(w, x)| w * x)
                        .sum::<f64>();
                if factor <= 0.0 {
                    return WealthPath {
                        multipliers,
                        ruined_at: Some(t),
                    };
                }
                w *= factor;
                multipliers.push(w);
            }
        }
    }
    WealthPath {
        multipliers,
        ruined_at: None,
    }
}

/// `sample_count` simulated paths of `horizon` periods.
pub fn wealth_path(
    model: &JointReturnModel,
    portfolio: &Portfolio,
    config: &SimConfig,
) -> Result<Vec<WealthPath>> {
    if portfolio.len() != model.dim() {
        return Err(Error::Shape {
            expected: model.dim(),
            got: portfolio.len(),
            context: "portfolio vs model",
        });
    }
    let draws = sample_returns(model, config, config.horizon)?;
    let n = model.dim();
    Ok(config.exec.map_range(draws.samples(), |s| {
        path_from_flat(draws.sample(s), n, portfolio)
    }))
}

/// Simulated mean, variance and their ratio, each with a standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub mean_return: f64,
    pub return_variance: f64,
    pub ratio: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub ratio_se: f64,
    pub sample_count: usize,
}

pub fn estimate_ratio(
    model: &JointReturnModel,
    portfolio: &Portfolio,
    config: &SimConfig,
) -> Result<RatioEstimate> {
    let draws = sample_returns(model, config, 1)?;
    estimate_ratio_from_draws(&draws, portfolio)
}

/// Variance is the unbiased sample variance of the single-period returns.
/// The MV mean is their sample mean. The Kelly mean is the decoupled growth
/// estimate `Σ f_i exp(mean ln(1 + f_i X_i)) − 1`. Standard errors use
/// first-order influence functions, which gives the delta method for the
/// Kelly mean and the ratio.
pub fn estimate_ratio_from_draws(draws: &Draws, portfolio: &Portfolio) -> Result<RatioEstimate> {
    let returns = portfolio_period_return(draws, portfolio)?;
    let n = returns.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let nf = n as f64;
    let r_mean = returns.iter().sum::<f64>() / nf;
    let dev: Vec<f64> = returns.iter().map(|r| r - r_mean).collect();
    let variance = dev.iter().map(|d| d * d).sum::<f64>() / (nf - 1.0);
    let constant = returns.iter().all(|&r| r == returns[0]);
    if constant || !(variance > 0.0) {
        return Err(Error::RatioUndefined);
    }

    let (mean, mean_influence): (f64, Vec<f64>) = match portfolio.kind {
        ModelKind::MeanVariance => (r_mean, dev.clone()),
        ModelKind::Kelly => {
            let f: Vec<f64> = portfolio.weights.iter().map(|g| g.sqrt()).collect();
            let m = f.len();
            let mut logs = vec![0.0; n * m];
            for (k, x) in draws.iter_rows().enumerate() {
                for i in 0..m {
                    let a = f[i] * x[i];
                    if !(a > -1.0) {
                        return Err(Error::Domain(format!(
                            "1 + f X = {} <= 0 for asset {i}; log growth undefined",
                            1.0 + a
                        )));
                    }
                    logs[k * m + i] = a.ln_1p();
                }
            }
            let log_means: Vec<f64> = (0..m)
                .map(|i| logs.iter().skip(i).step_by(m).sum::<f64>() / nf)
                .collect();
            let grad: Vec<f64> = (0..m).map(|i| f[i] * log_means[i].exp()).collect();
            let mean = grad.iter().sum::<f64>() - 1.0;
            let infl = (0..n)
                .map(|k| {
                    (0..m)
                        .map(|i| grad[i] * (logs[k * m + i] - log_means[i]))
                        .sum()
                })
                .collect();
            (mean, infl)
        }
    };

    let var_influence: Vec<f64> = dev.iter().map(|d| d * d - variance).collect();
    let ratio = mean / variance;
    let avg_sq = |xs: &mut dyn Iterator<Item = f64>| xs.map(|v| v * v).sum::<f64>() / nf;
    let mean_se = (avg_sq(&mut mean_influence.iter().copied()) / nf).sqrt();
    let variance_se = (avg_sq(&mut var_influence.iter().copied()) / nf).sqrt();
    let ratio_se = (avg_sq(
        &mut mean_influence
            .iter()
            .zip(&var_influence)
            .map(|(a, b)| a / variance - mean * b / (variance * variance)),
    ) / nf)
        .sqrt();
    Ok(RatioEstimate {
        mean_return: mean,
        return_variance: variance,
        ratio,
        mean_se,
        variance_se,
        ratio_se,
        sample_count: n,
    })
}
