//! Run manifests and output plumbing.
//!
//! A manifest records the fully resolved command plus a digest of every
//! input file. Its `config_digest` covers only those, so re-running a
//! manifest yields the same digest and, under iteration-based termination,
//! byte-identical outputs. Timestamps live in the manifest alone.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use kelly_core::de_solver::TerminationPolicy;
use kelly_core::market_data::REFERENCE_FIXTURE;
use kelly_core::ModelKind;

use crate::config::{SimulateSpec, SolveSpec};
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BUILTIN_STATS: &str = "builtin:reference_10";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum CommandSpec {
    Ingest { input: PathBuf },
    Solve(SolveSpec),
    Sweep(SolveSpec),
    Simulate(SimulateSpec),
    Report { inputs: Vec<PathBuf> },
}

impl CommandSpec {
    pub fn name(&self) -> &'static str {
        match self {
            CommandSpec::Ingest { .. } => "ingest",
            CommandSpec::Solve(_) => "solve",
            CommandSpec::Sweep(_) => "sweep",
            CommandSpec::Simulate(_) => "simulate",
            CommandSpec::Report { .. } => "report",
        }
    }

    /// Input files in a fixed order, with their roles.
    fn input_paths(&self) -> Vec<(&'static str, Option<&Path>)> {
        match self {
            CommandSpec::Ingest { input } => vec![("returns", Some(input.as_path()))],
            CommandSpec::Solve(s) | CommandSpec::Sweep(s) => vec![("stats", s.stats.as_deref())],
            CommandSpec::Simulate(s) => vec![
                ("stats", s.stats.as_deref()),
                ("portfolio", Some(s.portfolio.as_path())),
            ],
            CommandSpec::Report { inputs } => inputs
                .iter()
                .map(|p| ("report_input", Some(p.as_path())))
                .collect(),
        }
    }

    /// Reads and hashes every input. A missing stats path means the bundled data.
    pub fn digest_inputs(&self) -> CliResult<Vec<InputRecord>> {
        let mut records = Vec::new();
        let mut missing = Vec::new();
        for (role, path) in self.input_paths() {
            match path {
                None => records.push(InputRecord {
                    role: role.into(),
                    path: BUILTIN_STATS.into(),
                    sha256: sha256_hex(REFERENCE_FIXTURE.as_bytes()),
                }),
                Some(p) => match std::fs::read(p) {
                    Ok(bytes) => records.push(InputRecord {
                        role: role.into(),
                        path: p.display().to_string(),
                        sha256: sha256_hex(&bytes),
                    }),
                    Err(e) => missing.push(CliError::Data(format!("{role} {}: {e}", p.display()))),
                },
            }
        }
        match missing.len() {
            0 => Ok(records),
            1 => Err(missing.pop().expect("one error")),
            _ => Err(CliError::Multiple(missing)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub k_min: f64,
    pub k_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub model: Option<ModelKind>,
    pub risk_parameters: Vec<f64>,
    pub bounds: Option<Bounds>,
    pub termination: Option<TerminationPolicy>,
    pub spec: CommandSpec,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<String>,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
}

impl RunManifest {
    pub fn new(spec: CommandSpec, inputs: Vec<InputRecord>) -> CliResult<Self> {
        let tool_version = env!("CARGO_PKG_VERSION").to_string();
        let canonical = serde_json::to_string(&(&tool_version, &spec, &inputs))
            .map_err(|e| CliError::Data(format!("cannot serialize run spec: {e}")))?;
        let config_digest = sha256_hex(canonical.as_bytes());
        let (seed, model, risk_parameters, bounds, termination) = match &spec {
            CommandSpec::Solve(s) | CommandSpec::Sweep(s) => (
                Some(s.seed),
                Some(s.model),
                s.risk_parameters.clone(),
                Some(Bounds {
                    k_min: s.k_min,
                    k_max: s.k_max,
                }),
                Some(s.de.termination),
            ),
            CommandSpec::Simulate(s) => (Some(s.seed), None, Vec::new(), None, None),
            _ => (None, None, Vec::new(), None, None),
        };
        Ok(Self {
            tool_version,
            config_digest,
            seed,
            model,
            risk_parameters,
            bounds,
            termination,
            spec,
            inputs,
            outputs: Vec::new(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
        })
    }

    /// What output files embed to point back here.
    pub fn reference(&self) -> String {
        format!("{MANIFEST_FILE}#sha256:{}", self.config_digest)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("manifest {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Data(format!("manifest {}: {e}", path.display())))
    }

    /// Stamps the finish time and writes `manifest.json` into `dir`.
    pub fn finish(mut self, dir: &Path, outputs: &[OutputFile]) -> CliResult<PathBuf> {
        self.outputs = outputs.iter().map(|o| o.name.clone()).collect();
        self.finished_unix_ms = now_ms();
        let mut text = serde_json::to_string_pretty(&self)
            .map_err(|e| CliError::Data(format!("cannot serialize manifest: {e}")))?;
        text.push('\n');
        let path = dir.join(MANIFEST_FILE);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// A fully rendered output, written only once the command has succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

impl OutputFile {
    pub fn new(name: impl Into<String>, bytes: impl Into<Vec<u8>>) -> Self {
        Self {
            name: name.into(),
            bytes: bytes.into(),
        }
    }
}

/// Write to a temporary file in the target directory, then rename over the
/// destination, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .map_err(|e| CliError::Data(format!("temp file in {}: {e}", dir.display())))?;
    tmp.write_all(bytes)
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| CliError::Data(format!("writing {}: {e}", path.display())))?;
    tmp.persist(path)
        .map_err(|e| CliError::Data(format!("renaming into {}: {}", path.display(), e.error)))?;
    Ok(())
}

/// `seed` mixed with the bit pattern of `p`. A P value gets the same seed
/// whether it is solved alone or as part of any sweep.
pub fn derive_seed(seed: u64, p: f64) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(p.to_bits().to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.txt");
        write_atomic(&p, b"first").unwrap();
        write_atomic(&p, b"second").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"second");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn digest_ignores_timestamps() {
        let spec = CommandSpec::Report { inputs: vec![] };
        let a = RunManifest::new(spec.clone(), vec![]).unwrap();
        std::thread::sleep(std::time::Duration::from_millis(2));
        let b = RunManifest::new(spec, vec![]).unwrap();
        assert_eq!(a.config_digest, b.config_digest);
        assert_eq!(a.reference(), b.reference());
    }

    #[test]
    fn derived_seeds_differ_by_p() {
        assert_eq!(derive_seed(7, 0.5), derive_seed(7, 0.5));
        assert_ne!(derive_seed(7, 0.5), derive_seed(7, 0.3));
        assert_ne!(derive_seed(7, 0.5), derive_seed(8, 0.5));
    }

    #[test]
    fn missing_inputs_are_listed() {
        let spec = CommandSpec::Report {
            inputs: vec!["/nonexistent/a.csv".into(), "/nonexistent/b.json".into()],
        };
        match spec.digest_inputs() {
            Err(CliError::Multiple(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }
}
