//! Market data ingestion and calibration.
//!
//! Turns monthly simple-return series (or a precomputed statistics file) into
//! the per-asset moments, the sample covariance matrix and the lognormal
//! drift/volatility used by the models. The time step is one month throughout.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest eigenvalue a covariance matrix may have and still count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-9;

/// Stored μ/σ columns may differ from the recomputed values by at most this.
pub const FIXTURE_CALIBRATION_TOLERANCE: f64 = 5e-3;

/// The bundled ten-asset statistics file (monthly moments and covariance).
pub const REFERENCE_FIXTURE: &str = include_str!("../data/reference_10.toml");

/// Monthly simple returns for one asset.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    pub asset_id: String,
    returns: Vec<f64>,
}

impl ReturnSeries {
    pub fn new(asset_id: impl Into<String>, returns: Vec<f64>) -> Result<Self> {
        let asset_id = asset_id.into();
        if returns.len() < 2 {
            return Err(Error::Degenerate(format!(
                "series {asset_id} has {} observation(s), need at least 2",
                returns.len()
            )));
        }
        if let Some((i, r)) = returns
            .iter()
            .enumerate()
            .find(|(_, r)| !r.is_finite() || **r <= -1.0)
        {
            return Err(Error::Domain(format!(
                "series {asset_id}: return {r} at month {i} must be finite and > -1"
            )));
        }
        Ok(Self { asset_id, returns })
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Per-asset monthly statistics and their lognormal calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetStats {
    pub label: String,
    /// Sample mean of simple returns, Avg[R].
    pub avg_return: f64,
    /// Sample variance of simple returns, Var[R].
    pub var_return: f64,
    /// Monthly drift μ = ln(1 + Avg[R]).
    pub drift: f64,
    /// Monthly volatility σ.
    pub volatility: f64,
}

impl AssetStats {
    /// Calibrates drift and volatility from the sample moments.
    pub fn from_moments(
        label: impl Into<String>,
        avg_return: f64,
        var_return: f64,
    ) -> Result<Self> {
        let (drift, volatility) = drift_volatility(avg_return, var_return)?;
        Ok(Self {
            label: label.into(),
            avg_return,
            var_return,
            drift,
            volatility,
        })
    }

    /// E[X] / E[X²] of the calibrated one-month lognormal return.
    pub fn moment_ratio(&self) -> Result<f64> {
        moment_ratio(self.drift, self.volatility)
    }
}

/// Symmetric, positive semi-definite sample covariance of monthly returns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    entries: DMatrix<f64>,
}

impl CovarianceMatrix {
    /// Validates symmetry (exact), non-negative diagonal and PSD.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let n = entries.nrows();
        if entries.ncols() != n {
            return Err(Error::Shape {
                expected: n,
                got: entries.ncols(),
                context: "covariance columns",
            });
        }
        if n == 0 {
            return Err(Error::Degenerate("empty covariance matrix".into()));
        }
        for i in 0..n {
            if !entries[(i, i)].is_finite() || entries[(i, i)] < 0.0 {
                return Err(Error::Domain(format!(
                    "covariance diagonal entry {i} is {}",
                    entries[(i, i)]
                )));
            }
            for j in (i + 1)..n {
                let (a, b) = (entries[(i, j)], entries[(j, i)]);
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
        let cov = Self { entries };
        let min_eigenvalue = cov.min_eigenvalue();
        if min_eigenvalue < -PSD_TOLERANCE {
            return Err(Error::NotPositiveSemiDefinite { min_eigenvalue });
        }
        Ok(cov)
    }

    /// Builds from a row-major slice of `n * n` values.
    pub fn from_row_major(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Shape {
                expected: n * n,
                got: values.len(),
                context: "row-major covariance entries",
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, values))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.entries[(i, i)]).collect()
    }

    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.entries[(i, j)]);
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// Ratio of the largest to the smallest eigenvalue (infinite if singular).
    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let (lo, hi) = (ev[0], ev[ev.len() - 1]);
        if lo <= 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }

    /// wᵀ M w, summed as Σ w_i² M_ii + 2 Σ_{j>i} w_i w_j M_ij.
    pub fn quadratic_form(&self, w: &[f64]) -> Result<f64> {
        let n = self.dim();
        if w.len() != n {
            return Err(Error::Shape {
                expected: n,
                got: w.len(),
                context: "weights vs covariance",
            });
        }
        let mut acc = 0.0;
        for i in 0..n {
            acc += w[i] * w[i] * self.entries[(i, i)];
            let off: f64 = ((i + 1)..n).map(|j| w[j] * self.entries[(i, j)]).sum();
            acc += 2.0 * w[i] * off;
        }
        Ok(acc)
    }

    /// Normalizes by the diagonal. Zero-variance assets get a unit diagonal
    /// and zero off-diagonal entries.
    pub fn correlation(&self) -> DMatrix<f64> {
        let n = self.dim();
        let sd: Vec<f64> = self.diagonal().iter().map(|v| v.sqrt()).collect();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else if sd[i] > 0.0 && sd[j] > 0.0 {
                self.entries[(i, j)] / (sd[i] * sd[j])
            } else {
                0.0
            }
        })
    }
}

/// Arithmetic mean and unbiased (n − 1) sample variance.
pub fn compute_sample_stats(returns: &[f64]) -> Result<(f64, f64)> {
    let n = returns.len();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "sample variance needs at least 2 observations, got {n}"
        )));
    }
    let mean = returns.iter().sum::<f64>() / n as f64;
    let ss: f64 = returns.iter().map(|r| (r - mean) * (r - mean)).sum();
    Ok((mean, ss / (n - 1) as f64))
}

/// Unbiased sample covariance of equally long series.
pub fn compute_covariance(all_series: &[ReturnSeries]) -> Result<CovarianceMatrix> {
    let n = all_series.len();
    if n == 0 {
        return Err(Error::Degenerate("no return series".into()));
    }
    let t = all_series[0].len();
    for s in all_series {
        if s.len() != t {
            return Err(Error::Shape {
                expected: t,
                got: s.len(),
                context: "series length",
            });
        }
    }
    if t < 2 {
        return Err(Error::Degenerate(format!(
            "covariance needs at least 2 observations, got {t}"
        )));
    }
    let means: Vec<f64> = all_series
        .iter()
        .map(|s| s.returns().iter().sum::<f64>() / t as f64)
        .collect();
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let (a, b) = (all_series[i].returns(), all_series[j].returns());
            let c: f64 = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - means[i]) * (y - means[j]))
                .sum::<f64>()
                / (t - 1) as f64;
            m[(i, j)] = c;
            m[(j, i)] = c;
        }
    }
    CovarianceMatrix::new(m)
}

/// Monthly lognormal drift and volatility matching a sample mean and variance.
pub fn drift_volatility(avg: f64, var: f64) -> Result<(f64, f64)> {
    if !avg.is_finite() || avg <= -1.0 {
        return Err(Error::Domain(format!("average return {avg} must be > -1")));
    }
    if !var.is_finite() || var < 0.0 {
        return Err(Error::Domain(format!("variance {var} must be >= 0")));
    }
    let mu = avg.ln_1p();
    let sigma = (var * (-2.0 * mu).exp()).ln_1p().sqrt();
    Ok((mu, sigma))
}

/// E[X]/E[X²] for X = exp(μ − σ²/2 + σy) − 1, y ~ N(0, 1).
pub fn moment_ratio(mu: f64, sigma: f64) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::Domain(format!("volatility {sigma} must be >= 0")));
    }
    if mu == 0.0 && sigma == 0.0 {
        return Err(Error::DegenerateMoment);
    }
    let (first, second) = lognormal_moments(mu, sigma);
    Ok(first / second)
}

/// (E[X], E[X²]) of the one-month lognormal return.
pub fn lognormal_moments(mu: f64, sigma: f64) -> (f64, f64) {
    let first = mu.exp_m1();
    // e^{2μ+σ²} − 2e^{μ} + 1 = (e^{μ} − 1)² + e^{2μ}(e^{σ²} − 1)
    let second = first * first + (2.0 * mu).exp() * (sigma * sigma).exp_m1();
    (first, second)
}

/// On-disk statistics file: labels, Avg[R], μ, σ and the covariance matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsFixture {
    pub assets: FixtureAssets,
    pub covariance: FixtureCovariance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureAssets {
    pub n: usize,
    pub labels: Vec<String>,
    pub avg_return: Vec<f64>,
    pub drift: Vec<f64>,
    pub volatility: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureCovariance {
    /// Row-major, `n * n` values.
    pub entries: Vec<f64>,
}

impl StatsFixture {
    pub fn from_parts(stats: &[AssetStats], cov: &CovarianceMatrix) -> Self {
        Self {
            assets: FixtureAssets {
                n: stats.len(),
                labels: stats.iter().map(|s| s.label.clone()).collect(),
                avg_return: stats.iter().map(|s| s.avg_return).collect(),
                drift: stats.iter().map(|s| s.drift).collect(),
                volatility: stats.iter().map(|s| s.volatility).collect(),
            },
            covariance: FixtureCovariance {
                entries: cov.to_row_major(),
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        if text.trim().is_empty() {
            return Err(load_err("<text>", "file is empty"));
        }
        toml::from_str(text).map_err(|e| load_err("<text>", e.to_string()))
    }

    /// Serializes in the canonical layout (one covariance row per line).
    pub fn to_text(&self) -> String {
        let a = &self.assets;
        let list = |xs: &[f64]| {
            xs.iter()
                .map(|x| format!("{x:?}"))
                .collect::<Vec<_>>()
                .join(", ")
        };
        let mut out = String::new();
        let _ = writeln!(out, "[assets]");
        let _ = writeln!(out, "n = {}", a.n);
        let labels: Vec<String> = a.labels.iter().map(|l| format!("{l:?}")).collect();
        let _ = writeln!(out, "labels = [{}]", labels.join(", "));
        let _ = writeln!(out, "avg_return = [{}]", list(&a.avg_return));
        let _ = writeln!(out, "drift = [{}]", list(&a.drift));
        let _ = writeln!(out, "volatility = [{}]", list(&a.volatility));
        let _ = writeln!(out);
        let _ = writeln!(out, "[covariance]");
        let _ = writeln!(out, "entries = [");
        let n = a.n.max(1);
        for row in self.covariance.entries.chunks(n) {
            let _ = writeln!(out, "  {},", list(row));
        }
        let _ = writeln!(out, "]");
        out
    }

    /// Validates the file and builds model inputs. Drift and volatility are
    /// recomputed from Avg[R] and the covariance diagonal.
    pub fn into_model_inputs(&self) -> Result<(Vec<AssetStats>, CovarianceMatrix)> {
        let a = &self.assets;
        let n = a.n;
        if n == 0 {
            return Err(load_err("<fixture>", "n must be positive"));
        }
        for (name, len) in [
            ("labels", a.labels.len()),
            ("avg_return", a.avg_return.len()),
            ("drift", a.drift.len()),
            ("volatility", a.volatility.len()),
        ] {
            if len != n {
                return Err(load_err(
                    "<fixture>",
                    format!("{name} has {len} entries, expected n = {n}"),
                ));
            }
        }
        let cov = CovarianceMatrix::from_row_major(n, &self.covariance.entries)?;
        let mut stats = Vec::with_capacity(n);
        for i in 0..n {
            let s = AssetStats::from_moments(a.labels[i].clone(), a.avg_return[i], cov.get(i, i))?;
            let dmu = (s.drift - a.drift[i]).abs();
            let dsigma = (s.volatility - a.volatility[i]).abs();
            if dmu > FIXTURE_CALIBRATION_TOLERANCE || dsigma > FIXTURE_CALIBRATION_TOLERANCE {
                return Err(load_err(
                    "<fixture>",
                    format!(
                        "asset {}: stored (mu, sigma) = ({}, {}) inconsistent with \
                         Avg[R] and covariance diagonal ({:.6}, {:.6})",
                        a.labels[i], a.drift[i], a.volatility[i], s.drift, s.volatility
                    ),
                ));
            }
            stats.push(s);
        }
        Ok((stats, cov))
    }
}

fn load_err(path: &str, message: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_string(),
        message: message.into(),
    }
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Load { message, .. } => load_err(&path.display().to_string(), message),
        other => load_err(&path.display().to_string(), other.to_string()),
    }
}

/// Reads a statistics file and returns validated model inputs.
pub fn load_stats_file(path: impl AsRef<Path>) -> Result<(Vec<AssetStats>, CovarianceMatrix)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| load_err(&path.display().to_string(), e.to_string()))?;
    StatsFixture::parse(&text)
        .and_then(|f| f.into_model_inputs())
        .map_err(|e| with_path(e, path))
}

/// The bundled ten-asset statistics.
pub fn reference_inputs() -> (Vec<AssetStats>, CovarianceMatrix) {
    StatsFixture::parse(REFERENCE_FIXTURE)
        .and_then(|f| f.into_model_inputs())
        .expect("bundled fixture is valid")
}

/// Parses a return-series CSV: a header of asset labels, then one row per month.
pub fn parse_returns_csv(reader: impl std::io::Read) -> Result<Vec<ReturnSeries>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let labels: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    if labels.is_empty() || labels.iter().all(String::is_empty) {
        return Err(Error::Parse {
            line: 1,
            message: "missing header row of asset labels".into(),
        });
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); labels.len()];
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != labels.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", labels.len(), record.len()),
            });
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                message: format!("not a number: {field:?}"),
            })?;
            col.push(v);
        }
    }
    labels
        .into_iter()
        .zip(columns)
        .map(|(l, c)| ReturnSeries::new(l, c))
        .collect()
}

/// Full calibration pipeline from raw series.
pub fn calibrate(series: &[ReturnSeries]) -> Result<(Vec<AssetStats>, CovarianceMatrix)> {
    let cov = compute_covariance(series)?;
    let stats = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (avg, _) = compute_sample_stats(s.returns())?;
            AssetStats::from_moments(s.asset_id.clone(), avg, cov.get(i, i))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((stats, cov))
}
