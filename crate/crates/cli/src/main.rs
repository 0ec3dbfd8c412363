//! `odediscover`: sparse ODE discovery experiments from the command line.

mod commands;
mod config;
mod svg;

use clap::Parser;
use std::path::PathBuf;

use config::RawConfig;

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration (exit code 2).
    Config(String),
    /// Runtime or solver failure (exit code 3).
    Runtime(String),
    /// Filesystem trouble (exit code 4).
    Io(String),
}

impl CliError {
    fn from_core(e: odediscover_core::Error) -> Self {
        match e {
            odediscover_core::Error::InvalidConfig(msg) => CliError::Config(msg),
            odediscover_core::Error::UnknownSystem { .. } => CliError::Config(e.to_string()),
            other => CliError::Runtime(other.to_string()),
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Runtime(m) | CliError::Io(m) => m,
        }
    }
}

/// Discover sparse ODE dynamics from noisy measurements.
///
/// Configuration comes from an optional plain `key = value` file plus
/// mirrored flags; flags override file values. Every run writes a
/// `manifest.txt` that reproduces it byte for byte.
#[derive(Parser, Debug)]
#[command(name = "odediscover", version, disable_help_subcommand = true)]
struct Cli {
    /// Command: simulate | denoise | discover | verify-theory | benchmark
    command: Option<String>,

    /// Plain key = value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,

    /// System name (duffing_ps1, duffing_ps2, van_der_pol, rossler, lorenz96).
    #[arg(long)]
    system: Option<String>,

    /// Number of samples.
    #[arg(long, alias = "N")]
    n: Option<usize>,

    /// Comma-separated sample sizes for studies.
    #[arg(long)]
    n_list: Option<String>,

    /// Training window override in seconds.
    #[arg(long)]
    t_end: Option<f64>,

    /// Noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,

    /// Noise variance (overrides --sigma when set).
    #[arg(long)]
    sigma2: Option<f64>,

    /// Comma-separated noise standard deviations for studies.
    #[arg(long)]
    sigma_list: Option<String>,

    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Discovery method: dsindy | l1sindy | wsindy-lite.
    #[arg(long)]
    method: Option<String>,

    /// Comma-separated methods for studies.
    #[arg(long)]
    methods: Option<String>,

    /// Data-radius selection: theory | pareto.
    #[arg(long)]
    gamma_mode: Option<String>,

    /// Replications per grid point.
    #[arg(long)]
    replications: Option<usize>,

    /// Reweighting passes of the cone-program recovery.
    #[arg(long)]
    irw_iters: Option<usize>,

    /// Output directory (created if missing).
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn build_config(cli: &Cli) -> Result<config::RunConfig, CliError> {
    let mut raw = match &cli.config {
        Some(path) => RawConfig::from_file(path)?,
        None => RawConfig::default(),
    };
    // flags override file values
    if let Some(v) = &cli.command {
        raw.set("command", v)?;
    }
    if let Some(v) = &cli.system {
        raw.set("system", v)?;
    }
    if let Some(v) = cli.n {
        raw.set("n", &v.to_string())?;
    }
    if let Some(v) = &cli.n_list {
        raw.set("n_list", v)?;
    }
    if let Some(v) = cli.t_end {
        raw.set("t_end", &v.to_string())?;
    }
    if let Some(v) = cli.sigma {
        raw.set("sigma", &v.to_string())?;
    }
    if let Some(v) = cli.sigma2 {
        raw.set("sigma2", &v.to_string())?;
    }
    if let Some(v) = &cli.sigma_list {
        raw.set("sigma_list", v)?;
    }
    if let Some(v) = cli.seed {
        raw.set("seed", &v.to_string())?;
    }
    if let Some(v) = &cli.method {
        raw.set("method", v)?;
    }
    if let Some(v) = &cli.methods {
        raw.set("methods", v)?;
    }
    if let Some(v) = &cli.gamma_mode {
        raw.set("gamma_mode", v)?;
    }
    if let Some(v) = cli.replications {
        raw.set("replications", &v.to_string())?;
    }
    if let Some(v) = cli.irw_iters {
        raw.set("irw_iters", &v.to_string())?;
    }
    if let Some(v) = &cli.output_dir {
        raw.set("output_dir", &v.display().to_string())?;
    }
    raw.resolve()
}

fn init_thread_pool() {
    if let Ok(raw) = std::env::var("ODEDISCOVER_THREADS") {
        if let Ok(threads) = raw.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global();
            }
        }
    }
}

fn main() {
    let cli = Cli::parse();
    init_thread_pool();
    let result = build_config(&cli).and_then(|cfg| commands::run(&cfg));
    if let Err(e) = result {
        eprintln!("odediscover: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
