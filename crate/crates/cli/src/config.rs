//! Run configuration: flat `key = value` files, mirrored command-line
//! flags, and the manifest that makes runs reproducible.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use odediscover_core::analysis::{GammaMode, Method};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Denoise,
    Discover,
    VerifyTheory,
    Benchmark,
}

impl Command {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s {
            "simulate" => Ok(Command::Simulate),
            "denoise" => Ok(Command::Denoise),
            "discover" => Ok(Command::Discover),
            "verify-theory" => Ok(Command::VerifyTheory),
            "benchmark" => Ok(Command::Benchmark),
            other => Err(CliError::Config(format!(
                "unknown command '{other}'; valid: simulate, denoise, discover, verify-theory, benchmark"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Denoise => "denoise",
            Command::Discover => "discover",
            Command::VerifyTheory => "verify-theory",
            Command::Benchmark => "benchmark",
        }
    }
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub system: String,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub t_end: Option<f64>,
    pub sigma: f64,
    pub sigma_list: Vec<f64>,
    pub seed: u64,
    pub method: Method,
    pub methods: Vec<Method>,
    pub gamma_mode: GammaMode,
    pub replications: usize,
    pub irw_iters: usize,
    pub output_dir: PathBuf,
}

/// Raw key/value layer: file values overridden by flag values.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "command",
    "system",
    "n",
    "n_list",
    "t_end",
    "sigma",
    "sigma2",
    "sigma_list",
    "seed",
    "method",
    "methods",
    "gamma_mode",
    "replications",
    "irw_iters",
    "output_dir",
];

impl RawConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("reading {}: {e}", path.display())))?;
        let mut cfg = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected 'key = value', got '{line}'",
                    path.display(),
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        // artifact_version appears in manifests; accept and ignore on re-runs
        if key == "artifact_version" {
            return Ok(());
        }
        if !KNOWN_KEYS.contains(&key) {
            return Err(CliError::Config(format!(
                "unknown configuration key '{key}'"
            )));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parse_with<T, F>(&self, key: &str, parse: F) -> Result<Option<T>, CliError>
    where
        F: Fn(&str) -> Result<T, String>,
    {
        match self.get(key) {
            None => Ok(None),
            Some(raw) => parse(raw)
                .map(Some)
                .map_err(|e| CliError::Config(format!("key '{key}': {e}"))),
        }
    }

    /// Validates everything up front and produces the resolved config.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let command = match self.get("command") {
            Some(c) => Command::parse(c)?,
            None => {
                return Err(CliError::Config(
                    "no command given (positional argument or 'command' key)".into(),
                ))
            }
        };
        let system = self
            .get("system")
            .ok_or_else(|| CliError::Config("missing required key 'system'".into()))?
            .to_string();
        // eagerly reject unknown systems before any computation
        odediscover_core::systems::builtin_system(&system)
            .map_err(|e| CliError::Config(e.to_string()))?;

        let n = self
            .parse_with("n", |s| s.parse::<usize>().map_err(|e| e.to_string()))?
            .unwrap_or(1000);
        let n_list = self
            .parse_with("n_list", parse_usize_list)?
            .unwrap_or_else(|| vec![n]);
        let t_end = self.parse_with("t_end", |s| {
            s.parse::<f64>().map_err(|e| e.to_string()).and_then(|v| {
                if v > 0.0 {
                    Ok(v)
                } else {
                    Err("t_end must be positive".into())
                }
            })
        })?;
        let mut sigma = self.parse_with("sigma", parse_nonneg)?.unwrap_or(0.0);
        if let Some(s2) = self.parse_with("sigma2", parse_nonneg)? {
            sigma = s2.sqrt();
        }
        let sigma_list = self
            .parse_with("sigma_list", parse_f64_list)?
            .unwrap_or_else(|| vec![sigma]);
        let seed = self
            .parse_with("seed", |s| s.parse::<u64>().map_err(|e| e.to_string()))?
            .unwrap_or(0);
        let method = self
            .parse_with("method", |s| Method::parse(s).map_err(|e| e.to_string()))?
            .unwrap_or(Method::Dsindy);
        let methods = self
            .parse_with("methods", parse_method_list)?
            .unwrap_or_else(|| vec![method]);
        let gamma_mode = self
            .parse_with("gamma_mode", |s| {
                GammaMode::parse(s).map_err(|e| e.to_string())
            })?
            .unwrap_or(GammaMode::Theory);
        let replications = self
            .parse_with("replications", |s| {
                s.parse::<usize>().map_err(|e| e.to_string()).and_then(|v| {
                    if v >= 1 {
                        Ok(v)
                    } else {
                        Err("replications must be >= 1".into())
                    }
                })
            })?
            .unwrap_or(1);
        let irw_iters = self
            .parse_with("irw_iters", |s| {
                s.parse::<usize>().map_err(|e| e.to_string()).and_then(|v| {
                    if v >= 1 {
                        Ok(v)
                    } else {
                        Err("irw_iters must be >= 1".into())
                    }
                })
            })?
            .unwrap_or(2);
        let output_dir = PathBuf::from(self.get("output_dir").unwrap_or("out"));

        if n_list.iter().any(|&v| v < 2) {
            return Err(CliError::Config("sample sizes must be >= 2".into()));
        }
        if sigma_list.iter().any(|&v| v < 0.0) {
            return Err(CliError::Config("noise levels must be >= 0".into()));
        }

        Ok(RunConfig {
            command,
            system,
            n,
            n_list,
            t_end,
            sigma,
            sigma_list,
            seed,
            method,
            methods,
            gamma_mode,
            replications,
            irw_iters,
            output_dir,
        })
    }
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .parse()
        .map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v < 0.0 {
        return Err("must be nonnegative".into());
    }
    Ok(v)
}

fn parse_usize_list(s: &str) -> Result<Vec<usize>, String> {
    let out: Result<Vec<usize>, _> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| e.to_string()))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_f64_list(s: &str) -> Result<Vec<f64>, String> {
    let out: Result<Vec<f64>, _> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| e.to_string()))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

fn parse_method_list(s: &str) -> Result<Vec<Method>, String> {
    let out: Result<Vec<Method>, _> = s
        .split(',')
        .map(|p| Method::parse(p.trim()).map_err(|e| e.to_string()))
        .collect();
    let out = out?;
    if out.is_empty() {
        return Err("empty list".into());
    }
    Ok(out)
}

impl RunConfig {
    /// Manifest: the fully resolved configuration as a config file. Running
    /// with `--config manifest.txt` reproduces the outputs byte for byte.
    pub fn manifest(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "artifact_version = {}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(out, "command = {}", self.command.name());
        let _ = writeln!(out, "gamma_mode = {}", self.gamma_mode.name());
        let _ = writeln!(out, "irw_iters = {}", self.irw_iters);
        let _ = writeln!(out, "method = {}", self.method.name());
        let _ = writeln!(
            out,
            "methods = {}",
            self.methods
                .iter()
                .map(|m| m.name())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "n = {}", self.n);
        let _ = writeln!(
            out,
            "n_list = {}",
            self.n_list
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "output_dir = {}", self.output_dir.display());
        let _ = writeln!(out, "replications = {}", self.replications);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "sigma = {}", self.sigma);
        let _ = writeln!(
            out,
            "sigma_list = {}",
            self.sigma_list
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "system = {}", self.system);
        if let Some(t) = self.t_end {
            let _ = writeln!(out, "t_end = {t}");
        }
        out
    }
}
