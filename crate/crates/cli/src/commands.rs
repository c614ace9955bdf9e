//! The five batch commands. Each renders its outputs in memory; the caller
//! writes them atomically together with the manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kelly_core::de_solver::{multi_run, MultiRunOutcome};
use kelly_core::market_data::{self, calibrate, parse_returns_csv, StatsFixture};
use kelly_core::models::{decoupled_return, kelly_risk, mv_return, mv_risk};
use kelly_core::monte_carlo::{
    estimate_ratio_from_draws, portfolio_period_return, sample_returns, JointReturnModel, SimConfig,
};
use kelly_core::{
    AssetStats, CovarianceMatrix, ModelKind, OptimizationProblem, Portfolio, QuadratureSpec,
};

use crate::config::{SimulateSpec, SolveSpec};
use crate::error::{CliError, CliResult};
use crate::manifest::{derive_seed, OutputFile};

/// Rendered outputs, human-readable notes, and a failure that did not stop
/// the command from producing partial results.
#[derive(Debug, Default)]
pub struct Rendered {
    pub outputs: Vec<OutputFile>,
    pub messages: Vec<String>,
    pub partial_failure: Option<CliError>,
}

pub fn load_stats(path: Option<&Path>) -> CliResult<(Vec<AssetStats>, CovarianceMatrix)> {
    match path {
        None => Ok(market_data::reference_inputs()),
        Some(p) => Ok(market_data::load_stats_file(p)?),
    }
}

fn comment_line(manifest_ref: &str, extra: &[(&str, String)]) -> String {
    let mut line = format!("# manifest={manifest_ref}");
    for (k, v) in extra {
        let _ = write!(line, " {k}={v}");
    }
    line.push('\n');
    line
}

fn float(x: f64) -> String {
    format!("{x:?}")
}

// ---------------------------------------------------------------- ingest

pub fn ingest(input: &Path, manifest_ref: &str) -> CliResult<Rendered> {
    let file = std::fs::File::open(input)
        .map_err(|e| CliError::Data(format!("returns {}: {e}", input.display())))?;
    let series = parse_returns_csv(file).map_err(|e| CliError::from(e).context(input.display()))?;
    let months = series.first().map_or(0, |s| s.len());
    let (stats, cov) = calibrate(&series)?;
    let fixture = StatsFixture::from_parts(&stats, &cov);
    let text = comment_line(manifest_ref, &[]) + &fixture.to_text();
    Ok(Rendered {
        outputs: vec![OutputFile::new("stats.toml", text)],
        messages: vec![format!(
            "assets {}, months {months}, covariance condition number {:.4e}",
            stats.len(),
            cov.condition_number()
        )],
        partial_failure: None,
    })
}

// ---------------------------------------------------------------- solve / sweep

/// Final allocation as written by `solve` and read by `simulate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortfolioFile {
    pub model: ModelKind,
    #[serde(default)]
    pub risk_parameter: Option<f64>,
    /// Solver variables: F for MV, f = √g for Kelly.
    #[serde(default)]
    pub weights: Vec<f64>,
    pub actual_fractions: Vec<f64>,
    #[serde(default)]
    pub objective: Option<f64>,
    #[serde(default, rename = "return")]
    pub ret: Option<f64>,
    #[serde(default)]
    pub risk: Option<f64>,
    #[serde(default)]
    pub feasible: Option<bool>,
    #[serde(default)]
    pub equality_gap: Option<f64>,
    #[serde(default)]
    pub bound_gaps: Vec<f64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub runs: Option<usize>,
    #[serde(default)]
    pub generations: Option<usize>,
    #[serde(default)]
    pub manifest_ref: Option<String>,
}

pub fn p_label(p: f64) -> String {
    format!("{p}")
}

struct Solved {
    p: f64,
    seed: u64,
    outcome: MultiRunOutcome,
}

/// Bounds that leave no feasible portfolio are a usage problem, not a per-P
/// failure, so they are rejected before any solve starts.
fn check_bounds(spec: &SolveSpec, stats: &[AssetStats], cov: &CovarianceMatrix) -> CliResult<()> {
    OptimizationProblem::new(
        spec.model,
        spec.risk_parameters[0],
        stats.to_vec(),
        cov.clone(),
    )?
    .with_uniform_bounds(spec.k_min, spec.k_max)
    .and_then(|p| p.with_equality_tolerance(spec.equality_tolerance))
    .map(|_| ())
    .map_err(|e| CliError::Usage(e.to_string()))
}

fn solve_one(
    spec: &SolveSpec,
    stats: &[AssetStats],
    cov: &CovarianceMatrix,
    p: f64,
) -> CliResult<Solved> {
    let problem = OptimizationProblem::new(spec.model, p, stats.to_vec(), cov.clone())?
        .with_uniform_bounds(spec.k_min, spec.k_max)?
        .with_equality_tolerance(spec.equality_tolerance)?
        .with_quadrature(QuadratureSpec::new(spec.quadrature_nodes)?);
    let seed = derive_seed(spec.seed, p);
    let mut de = spec.de.clone();
    de.seed = seed;
    let outcome = multi_run(&problem, &de, spec.runs)?;
    Ok(Solved { p, seed, outcome })
}

fn render_solved(spec: &SolveSpec, s: &Solved, manifest_ref: &str) -> CliResult<Vec<OutputFile>> {
    let best = &s.outcome.best;
    let portfolio = Portfolio::new(spec.model, best.genome.clone())?;
    let file = PortfolioFile {
        model: spec.model,
        risk_parameter: Some(s.p),
        weights: portfolio.solver_variables(),
        actual_fractions: best.genome.clone(),
        objective: Some(best.objective),
        ret: Some(best.ret),
        risk: Some(best.risk),
        feasible: Some(best.feasible),
        equality_gap: Some(best.equality_gap),
        bound_gaps: best.bound_gaps.clone(),
        seed: Some(s.seed),
        runs: Some(s.outcome.runs.len()),
        generations: Some(s.outcome.runs.iter().map(|r| r.generations).sum()),
        manifest_ref: Some(manifest_ref.to_string()),
    };
    let mut json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Data(format!("cannot serialize portfolio: {e}")))?;
    json.push('\n');

    let mut trace = comment_line(
        manifest_ref,
        &[
            ("model", spec.model.to_string()),
            ("risk_parameter", p_label(s.p)),
            ("seed", s.seed.to_string()),
        ],
    )
    .into_bytes();
    s.outcome
        .combined_trace()
        .write_csv(best.genome.len(), &mut trace)?;

    let stem = format!("{}_p{}", spec.model, p_label(s.p));
    Ok(vec![
        OutputFile::new(format!("portfolio_{stem}.json"), json),
        OutputFile::new(format!("trace_{stem}.csv"), trace),
    ])
}

fn summary_line(spec: &SolveSpec, s: &Solved) -> String {
    let g: Vec<String> = s
        .outcome
        .best
        .genome
        .iter()
        .map(|x| format!("{x:.4}"))
        .collect();
    format!(
        "{} P={}: objective {:.6}, return {:.6}, risk {:.6}, g = [{}]",
        spec.model,
        p_label(s.p),
        s.outcome.best.objective,
        s.outcome.best.ret,
        s.outcome.best.risk,
        g.join(", ")
    )
}

pub fn solve(spec: &SolveSpec, manifest_ref: &str) -> CliResult<Rendered> {
    let (stats, cov) = load_stats(spec.stats.as_deref())?;
    check_bounds(spec, &stats, &cov)?;
    let p = spec.risk_parameters[0];
    let solved = solve_one(spec, &stats, &cov, p)?;
    Ok(Rendered {
        outputs: render_solved(spec, &solved, manifest_ref)?,
        messages: vec![summary_line(spec, &solved)],
        partial_failure: None,
    })
}

/// Per-P solves run independently; a failing P is reported and the others
/// are still written.
pub fn sweep(spec: &SolveSpec, manifest_ref: &str) -> CliResult<Rendered> {
    let (stats, cov) = load_stats(spec.stats.as_deref())?;
    check_bounds(spec, &stats, &cov)?;
    let results = spec
        .de
        .exec
        .map(&spec.risk_parameters, |&p| solve_one(spec, &stats, &cov, p));

    let mut out = Rendered::default();
    let mut failures = Vec::new();
    let mut table = comment_line(manifest_ref, &[("model", spec.model.to_string())]);
    table.push_str("risk_parameter,return,risk,objective,predicted_ratio,status\n");
    for (&p, result) in spec.risk_parameters.iter().zip(results) {
        match result.and_then(|s| render_solved(spec, &s, manifest_ref).map(|files| (s, files))) {
            Ok((s, files)) => {
                let b = &s.outcome.best;
                let ratio = if b.risk > 0.0 {
                    float(b.ret / b.risk)
                } else {
                    String::new()
                };
                let _ = writeln!(
                    table,
                    "{},{},{},{},{ratio},ok",
                    p_label(p),
                    float(b.ret),
                    float(b.risk),
                    float(b.objective)
                );
                out.messages.push(summary_line(spec, &s));
                out.outputs.extend(files);
            }
            Err(e) => {
                let e = e.context(format!("P={}", p_label(p)));
                let status = e.to_string().replace([',', '\n'], ";");
                let _ = writeln!(table, "{},,,,,{status}", p_label(p));
                out.messages
                    .push(format!("{} P={}: FAILED", spec.model, p_label(p)));
                failures.push(e);
            }
        }
    }
    out.outputs
        .push(OutputFile::new(format!("sweep_{}.csv", spec.model), table));
    out.partial_failure = match failures.len() {
        0 => None,
        1 => failures.pop(),
        _ => Some(CliError::Multiple(failures)),
    };
    Ok(out)
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioFile {
    pub model: ModelKind,
    #[serde(default)]
    pub risk_parameter: Option<f64>,
    pub mean_return: f64,
    pub return_variance: f64,
    pub ratio: f64,
    pub mean_se: f64,
    pub variance_se: f64,
    pub ratio_se: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub correlation: kelly_core::monte_carlo::CorrelationMode,
    pub factor_jitter: f64,
    pub model_fingerprint: String,
    pub predicted_return: f64,
    pub predicted_risk: f64,
    pub predicted_ratio: f64,
    /// (simulated − predicted) / ratio_se
    pub ratio_z: f64,
    pub agrees_within_3se: bool,
    pub manifest_ref: String,
}

pub fn read_portfolio(path: &Path) -> CliResult<PortfolioFile> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("portfolio {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("portfolio {}: {e}", path.display())))
}

pub fn simulate(spec: &SimulateSpec, manifest_ref: &str) -> CliResult<Rendered> {
    let (stats, cov) = load_stats(spec.stats.as_deref())?;
    let pf = read_portfolio(&spec.portfolio)?;
    if pf.actual_fractions.len() != stats.len() {
        return Err(CliError::Data(format!(
            "portfolio {} has {} weights but the statistics have {} assets",
            spec.portfolio.display(),
            pf.actual_fractions.len(),
            stats.len()
        )));
    }
    let portfolio = Portfolio::new(pf.model, pf.actual_fractions.clone())?;
    let rule = QuadratureSpec::new(spec.quadrature_nodes)?.rule();
    let (predicted_return, predicted_risk) = match pf.model {
        ModelKind::MeanVariance => (
            mv_return(&portfolio.weights, &stats)?,
            mv_risk(&portfolio.weights, &cov)?,
        ),
        ModelKind::Kelly => (
            decoupled_return(&portfolio.weights, &stats, &rule)?,
            kelly_risk(&portfolio.weights, &cov)?,
        ),
    };
    let model = JointReturnModel::new(stats, &cov, spec.correlation)?;
    let config = SimConfig {
        sample_count: spec.samples,
        horizon: 1,
        seed: spec.seed,
        exec: spec.exec,
    };
    let draws = sample_returns(&model, &config, 1)?;
    let est = estimate_ratio_from_draws(&draws, &portfolio)?;
    let predicted_ratio = predicted_return / predicted_risk;
    let ratio_z = (est.ratio - predicted_ratio) / est.ratio_se;
    let file = RatioFile {
        model: pf.model,
        risk_parameter: pf.risk_parameter,
        mean_return: est.mean_return,
        return_variance: est.return_variance,
        ratio: est.ratio,
        mean_se: est.mean_se,
        variance_se: est.variance_se,
        ratio_se: est.ratio_se,
        sample_count: est.sample_count,
        seed: spec.seed,
        correlation: spec.correlation,
        factor_jitter: model.jitter,
        model_fingerprint: crate::manifest::sha256_hex(model.fingerprint_source().as_bytes()),
        predicted_return,
        predicted_risk,
        predicted_ratio,
        ratio_z,
        agrees_within_3se: ratio_z.abs() <= 3.0,
        manifest_ref: manifest_ref.to_string(),
    };
    let mut json = serde_json::to_string_pretty(&file)
        .map_err(|e| CliError::Data(format!("cannot serialize ratio: {e}")))?;
    json.push('\n');

    let stem = match pf.risk_parameter {
        Some(p) => format!("{}_p{}", pf.model, p_label(p)),
        None => pf.model.to_string(),
    };
    let mut outputs = vec![OutputFile::new(format!("ratio_{stem}.json"), json)];
    if spec.write_samples {
        let returns = portfolio_period_return(&draws, &portfolio)?;
        let mut csv = comment_line(manifest_ref, &[("model", pf.model.to_string())]);
        csv.push_str("sample,return\n");
        for (i, r) in returns.iter().enumerate() {
            let _ = writeln!(csv, "{i},{}", float(*r));
        }
        outputs.push(OutputFile::new(format!("samples_{stem}.csv"), csv));
    }
    Ok(Rendered {
        outputs,
        messages: vec![format!(
            "simulated ratio {:.4} ± {:.4} (mean {:.6}, variance {:.6}); predicted {:.4}; z = {:.2}",
            est.ratio, est.ratio_se, est.mean_return, est.return_variance, predicted_ratio, ratio_z
        )],
        partial_failure: None,
    })
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq)]
struct TraceRow {
    run: String,
    iteration: String,
    elapsed_ms: String,
    objective: String,
    ret: String,
    risk: String,
}

#[derive(Debug, Clone, PartialEq)]
enum ReportInput {
    Trace {
        model: String,
        p: String,
        rows: Vec<TraceRow>,
    },
    Sweep {
        model: String,
        rows: Vec<(String, String)>,
    },
    Ratio(RatioFile),
}

fn comment_fields(first_line: &str) -> BTreeMap<String, String> {
    first_line
        .trim_start_matches('#')
        .split_whitespace()
        .filter_map(|kv| kv.split_once('='))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect()
}

fn parse_report_input(path: &Path) -> CliResult<ReportInput> {
    let data_err = |m: String| CliError::Data(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| data_err(e.to_string()))?;
    if path.extension().is_some_and(|e| e == "json") {
        return serde_json::from_str::<RatioFile>(&text)
            .map(ReportInput::Ratio)
            .map_err(|e| data_err(format!("not a ratio file: {e}")));
    }
    let first = text.lines().next().unwrap_or_default();
    if !first.starts_with('#') {
        return Err(data_err("missing '# manifest=...' header line".into()));
    }
    let meta = comment_fields(first);
    let model = meta
        .get("model")
        .cloned()
        .ok_or_else(|| data_err("header line has no model=".into()))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| data_err(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| data_err(format!("missing column {name}")))
    };
    let records: Vec<csv::StringRecord> = rdr
        .records()
        .collect::<Result<_, _>>()
        .map_err(|e| data_err(e.to_string()))?;
    if headers.iter().any(|h| h == "iteration") {
        let p = meta
            .get("risk_parameter")
            .cloned()
            .ok_or_else(|| data_err("header line has no risk_parameter=".into()))?;
        let idx = [
            col("run")?,
            col("iteration")?,
            col("elapsed_ms")?,
            col("objective")?,
            col("return")?,
            col("risk")?,
        ];
        let rows = records
            .iter()
            .map(|r| TraceRow {
                run: r[idx[0]].to_string(),
                iteration: r[idx[1]].to_string(),
                elapsed_ms: r[idx[2]].to_string(),
                objective: r[idx[3]].to_string(),
                ret: r[idx[4]].to_string(),
                risk: r[idx[5]].to_string(),
            })
            .collect();
        Ok(ReportInput::Trace { model, p, rows })
    } else if headers.iter().any(|h| h == "predicted_ratio") {
        let (ip, ir, is) = (
            col("risk_parameter")?,
            col("predicted_ratio")?,
            col("status")?,
        );
        let rows = records
            .iter()
            .filter(|r| &r[is] == "ok")
            .map(|r| (r[ip].to_string(), r[ir].to_string()))
            .collect();
        Ok(ReportInput::Sweep { model, rows })
    } else {
        Err(data_err("neither a trace nor a sweep table".into()))
    }
}

fn p_key(model: &str, p: &str) -> CliResult<(String, u64)> {
    let v: f64 = p
        .parse()
        .map_err(|_| CliError::Data(format!("risk parameter {p:?} is not a number")))?;
    Ok((model.to_string(), v.to_bits()))
}

/// Plot-ready tables: every trace record (`convergence.csv`), the final
/// record of each run (`runs.csv`), and predicted vs simulated ratios by
/// model and P (`ratio_comparison.csv`).
pub fn report(inputs: &[std::path::PathBuf], manifest_ref: &str) -> CliResult<Rendered> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one input file".into(),
        ));
    }
    let mut parsed = Vec::new();
    let mut errors = Vec::new();
    for path in inputs {
        match parse_report_input(path) {
            Ok(p) => parsed.push(p),
            Err(e) => errors.push(e),
        }
    }
    if !errors.is_empty() {
        return Err(if errors.len() == 1 {
            errors.pop().expect("one error")
        } else {
            CliError::Multiple(errors)
        });
    }

    let header = comment_line(manifest_ref, &[]);
    let mut convergence =
        header.clone() + "model,risk_parameter,run,iteration,elapsed_ms,objective,return,risk\n";
    let mut runs = header.clone() + "model,risk_parameter,run,iteration,objective,return,risk\n";
    // (model, P bits) -> (P text, predicted, simulated ratio file)
    type Joined = (String, Option<String>, Option<RatioFile>);
    let mut joined: BTreeMap<(String, u64), Joined> = BTreeMap::new();
    let (mut n_trace, mut n_runs) = (0usize, 0usize);
    for input in &parsed {
        match input {
            ReportInput::Trace { model, p, rows } => {
                for r in rows {
                    let _ = writeln!(
                        convergence,
                        "{model},{p},{},{},{},{},{},{}",
                        r.run, r.iteration, r.elapsed_ms, r.objective, r.ret, r.risk
                    );
                    n_trace += 1;
                }
                for (i, r) in rows.iter().enumerate() {
                    if rows.get(i + 1).is_none_or(|next| next.run != r.run) {
                        let _ = writeln!(
                            runs,
                            "{model},{p},{},{},{},{},{}",
                            r.run, r.iteration, r.objective, r.ret, r.risk
                        );
                        n_runs += 1;
                    }
                }
            }
            ReportInput::Sweep { model, rows } => {
                for (p, predicted) in rows {
                    let entry = joined
                        .entry(p_key(model, p)?)
                        .or_insert((p.clone(), None, None));
                    entry.1 = Some(predicted.clone());
                }
            }
            ReportInput::Ratio(r) => {
                let Some(p) = r.risk_parameter else { continue };
                let model = r.model.to_string();
                let entry = joined
                    .entry((model, p.to_bits()))
                    .or_insert((p_label(p), None, None));
                entry.2 = Some(r.clone());
            }
        }
    }
    let mut comparison = header
        + "model,risk_parameter,predicted_ratio,simulated_ratio,simulated_ratio_se,ratio_z\n";
    for ((model, _), (p, predicted, simulated)) in &joined {
        let predicted = predicted
            .clone()
            .or_else(|| simulated.as_ref().map(|s| float(s.predicted_ratio)))
            .unwrap_or_default();
        let (sim, se, z) = match simulated {
            Some(s) => (float(s.ratio), float(s.ratio_se), float(s.ratio_z)),
            None => Default::default(),
        };
        let _ = writeln!(comparison, "{model},{p},{predicted},{sim},{se},{z}");
    }
    Ok(Rendered {
        outputs: vec![
            OutputFile::new("convergence.csv", convergence),
            OutputFile::new("runs.csv", runs),
            OutputFile::new("ratio_comparison.csv", comparison),
        ],
        messages: vec![format!(
            "{} input(s): {n_trace} trace records, {n_runs} run finals, {} ratio points",
            parsed.len(),
            joined.len()
        )],
        partial_failure: None,
    })
}
