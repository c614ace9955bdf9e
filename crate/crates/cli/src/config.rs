//! Run settings: a TOML file mirroring the command-line flags, with flags
//! taking precedence, resolved into fully specified command inputs.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use kelly_core::de_solver::{DeConfig, TerminationPolicy, DEFAULT_RUNS};
use kelly_core::models::{DEFAULT_EQUALITY_TOLERANCE, DEFAULT_K_MAX, DEFAULT_K_MIN};
use kelly_core::monte_carlo::{CorrelationMode, DEFAULT_SAMPLE_COUNT};
use kelly_core::quadrature::DEFAULT_NODES;
use kelly_core::{ExecMode, ModelKind};

use crate::error::{CliError, CliResult};

pub const DEFAULT_P_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Every tunable. All optional so that file and flag values can be layered.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Statistics file (TOML). The bundled ten-asset data when omitted.
    #[arg(long)]
    pub stats: Option<PathBuf>,

    /// mv or kelly.
    #[arg(long)]
    pub model: Option<ModelKind>,

    /// Risk parameter P; a comma-separated list for sweeps.
    #[arg(short = 'p', long = "risk-parameter", value_delimiter = ',')]
    pub risk_parameters: Option<Vec<f64>>,

    #[arg(long)]
    pub k_min: Option<f64>,

    #[arg(long)]
    pub k_max: Option<f64>,

    /// Allowed |Σ g − 1|.
    #[arg(long)]
    pub equality_tolerance: Option<f64>,

    /// Warm-started solver runs per P.
    #[arg(long)]
    pub runs: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Stop a run after this many generations without an accepted trial
    /// (deterministic).
    #[arg(long, conflicts_with = "stagnation_seconds")]
    pub stagnation_generations: Option<usize>,

    /// Stop a run after this many seconds without an accepted trial (the default
    /// policy, 30 s; not reproducible).
    #[arg(long)]
    pub stagnation_seconds: Option<f64>,

    #[arg(long)]
    pub max_generations: Option<usize>,

    #[arg(long)]
    pub crossover_rate: Option<f64>,

    /// Mutation scale; defaults to half the mean bound width.
    #[arg(long)]
    pub scale_factor: Option<f64>,

    #[arg(long)]
    pub noise_std: Option<f64>,

    /// Defaults to 10 × the number of assets.
    #[arg(long)]
    pub population_size: Option<usize>,

    #[arg(long)]
    pub quadrature_nodes: Option<usize>,

    /// Monte Carlo sample count.
    #[arg(long)]
    pub samples: Option<usize>,

    /// return_space or lognormal_exact.
    #[arg(long, value_parser = parse_correlation)]
    pub correlation: Option<CorrelationMode>,

    /// sequential or parallel.
    #[arg(long, value_parser = parse_exec)]
    pub exec: Option<ExecMode>,
}

fn parse_correlation(s: &str) -> Result<CorrelationMode, String> {
    match s {
        "return_space" | "return-space" => Ok(CorrelationMode::ReturnSpace),
        "lognormal_exact" | "lognormal-exact" => Ok(CorrelationMode::LognormalExact),
        other => Err(format!("unknown correlation mode {other:?}")),
    }
}

fn parse_exec(s: &str) -> Result<ExecMode, String> {
    match s {
        "sequential" => Ok(ExecMode::Sequential),
        "parallel" => Ok(ExecMode::Parallel),
        other => Err(format!("unknown exec mode {other:?}")),
    }
}

macro_rules! overlay {
    ($base:expr, $top:expr, $($field:ident),+) => {
        $( if $top.$field.is_some() { $base.$field = $top.$field.clone(); } )+
    };
}

impl Settings {
    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
    }

    /// `file` values overridden by any flag that was given.
    pub fn layered(file: Option<Settings>, flags: Settings) -> Settings {
        let mut s = file.unwrap_or_default();
        if flags.stagnation_generations.is_some() {
            s.stagnation_seconds = None;
        }
        if flags.stagnation_seconds.is_some() {
            s.stagnation_generations = None;
        }
        overlay!(
            s,
            flags,
            stats,
            model,
            risk_parameters,
            k_min,
            k_max,
            equality_tolerance,
            runs,
            seed,
            stagnation_generations,
            stagnation_seconds,
            max_generations,
            crossover_rate,
            scale_factor,
            noise_std,
            population_size,
            quadrature_nodes,
            samples,
            correlation,
            exec
        );
        s
    }

    fn termination(&self) -> CliResult<TerminationPolicy> {
        match (self.stagnation_generations, self.stagnation_seconds) {
            (Some(_), Some(_)) => Err(CliError::Usage(
                "stagnation_generations and stagnation_seconds are mutually exclusive".into(),
            )),
            (Some(generations), None) => {
                Ok(TerminationPolicy::StagnationIterations { generations })
            }
            (None, Some(seconds)) => Ok(TerminationPolicy::StagnationTimer { seconds }),
            (None, None) => Ok(TerminationPolicy::default()),
        }
    }

    /// Inputs for `solve` (`single`) or `sweep`.
    pub fn resolve_solve(&self, single: bool) -> CliResult<SolveSpec> {
        let model = self
            .model
            .ok_or_else(|| CliError::Usage("--model (mv or kelly) is required".into()))?;
        let risk_parameters = match (&self.risk_parameters, single) {
            (Some(ps), _) => ps.clone(),
            (None, true) => return Err(CliError::Usage("--risk-parameter is required".into())),
            (None, false) => DEFAULT_P_GRID.to_vec(),
        };
        if risk_parameters.is_empty() {
            return Err(CliError::Usage("the risk parameter list is empty".into()));
        }
        if single && risk_parameters.len() != 1 {
            return Err(CliError::Usage(format!(
                "solve takes one risk parameter, got {}; use sweep for a list",
                risk_parameters.len()
            )));
        }
        if let Some(p) = risk_parameters.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(CliError::Usage(format!(
                "risk parameter {p} outside [0, 1]"
            )));
        }
        let runs = self.runs.unwrap_or(DEFAULT_RUNS);
        if runs == 0 {
            return Err(CliError::Usage("runs must be at least 1".into()));
        }
        let termination = self.termination()?;
        let defaults = DeConfig::default();
        let de = DeConfig {
            crossover_rate: self.crossover_rate.unwrap_or(defaults.crossover_rate),
            scale_factor: self.scale_factor,
            noise_std: self.noise_std.unwrap_or(defaults.noise_std),
            population_size: self.population_size,
            termination,
            max_generations: self.max_generations.unwrap_or(defaults.max_generations),
            seed: self.seed.unwrap_or(0),
            exec: self.exec.unwrap_or_default(),
            record_elapsed: !termination.is_deterministic(),
        };
        Ok(SolveSpec {
            stats: self.stats.clone(),
            model,
            risk_parameters,
            k_min: self.k_min.unwrap_or(DEFAULT_K_MIN),
            k_max: self.k_max.unwrap_or(DEFAULT_K_MAX),
            equality_tolerance: self
                .equality_tolerance
                .unwrap_or(DEFAULT_EQUALITY_TOLERANCE),
            runs,
            seed: self.seed.unwrap_or(0),
            quadrature_nodes: self.quadrature_nodes.unwrap_or(DEFAULT_NODES),
            de,
        })
    }

    pub fn resolve_simulate(
        &self,
        portfolio: PathBuf,
        write_samples: bool,
    ) -> CliResult<SimulateSpec> {
        let samples = self.samples.unwrap_or(DEFAULT_SAMPLE_COUNT);
        if samples < 2 {
            return Err(CliError::Usage(format!(
                "samples must be at least 2, got {samples}"
            )));
        }
        Ok(SimulateSpec {
            stats: self.stats.clone(),
            portfolio,
            samples,
            seed: self.seed.unwrap_or(0),
            correlation: self.correlation.unwrap_or_default(),
            quadrature_nodes: self.quadrature_nodes.unwrap_or(DEFAULT_NODES),
            write_samples,
            exec: self.exec.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSpec {
    pub stats: Option<PathBuf>,
    pub model: ModelKind,
    pub risk_parameters: Vec<f64>,
    pub k_min: f64,
    pub k_max: f64,
    pub equality_tolerance: f64,
    pub runs: usize,
    /// Base seed; each P solves with a seed derived from this and P.
    pub seed: u64,
    pub quadrature_nodes: usize,
    pub de: DeConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub stats: Option<PathBuf>,
    pub portfolio: PathBuf,
    pub samples: usize,
    pub seed: u64,
    pub correlation: CorrelationMode,
    pub quadrature_nodes: usize,
    pub write_samples: bool,
    pub exec: ExecMode,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let file: Settings = toml::from_str(
            r#"
            model = "kelly"
            risk_parameters = [0.1, 0.3]
            runs = 5
            stagnation_seconds = 2.0
            exec = "sequential"
            correlation = "lognormal_exact"
            "#,
        )
        .unwrap();
        let flags = Settings {
            runs: Some(3),
            stagnation_generations: Some(50),
            ..Settings::default()
        };
        let s = Settings::layered(Some(file), flags);
        assert_eq!(s.model, Some(ModelKind::Kelly));
        assert_eq!(s.runs, Some(3));
        assert_eq!(s.stagnation_seconds, None);
        let spec = s.resolve_solve(false).unwrap();
        assert_eq!(spec.risk_parameters, vec![0.1, 0.3]);
        assert_eq!(
            spec.de.termination,
            TerminationPolicy::StagnationIterations { generations: 50 }
        );
        assert!(!spec.de.record_elapsed);
        assert_eq!(spec.de.exec, ExecMode::Sequential);
        assert_eq!(s.correlation, Some(CorrelationMode::LognormalExact));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<Settings>("modle = \"mv\"").is_err());
    }

    #[test]
    fn resolution_errors_are_usage_errors() {
        let base = Settings {
            model: Some(ModelKind::MeanVariance),
            ..Settings::default()
        };
        let usage =
            |s: Settings, single: bool| matches!(s.resolve_solve(single), Err(CliError::Usage(_)));
        assert!(usage(Settings::default(), false));
        assert!(usage(base.clone(), true));
        assert!(usage(
            Settings {
                risk_parameters: Some(vec![1.5]),
                ..base.clone()
            },
            true
        ));
        assert!(usage(
            Settings {
                risk_parameters: Some(vec![]),
                ..base.clone()
            },
            false
        ));
        assert!(usage(
            Settings {
                risk_parameters: Some(vec![0.1, 0.2]),
                ..base.clone()
            },
            true
        ));
        assert!(usage(
            Settings {
                runs: Some(0),
                ..base.clone()
            },
            false
        ));
        let sweep = base.resolve_solve(false).unwrap();
        assert_eq!(sweep.risk_parameters, DEFAULT_P_GRID.to_vec());
        assert_eq!(sweep.runs, 20);
        assert_eq!(
            sweep.de.termination,
            TerminationPolicy::StagnationTimer { seconds: 30.0 }
        );
        assert!(matches!(
            base.resolve_simulate("p.json".into(), false)
                .map(|s| s.samples),
            Ok(10_000)
        ));
        let one = Settings {
            samples: Some(1),
            ..base
        };
        assert!(matches!(
            one.resolve_simulate("p.json".into(), false),
            Err(CliError::Usage(_))
        ));
    }
}
