//! Monte Carlo study harness: runs the discovery pipelines over a
//! (sample-size, noise-level, method) grid with keyed replications, and
//! emits deterministic long-format records.

use std::fmt::Write as _;

use nalgebra::DVector;
use rayon::prelude::*;

use super::pipeline::{run_method, Method, PipelineOptions};
use super::{reconstruction_error, relative_error, ReconstructionProtocol};
use crate::error::{Error, Result};
use crate::rng::derive_key;
use crate::systems::{add_noise, builtin_system, simulate, OdeSystem};

/// Study definition: full cross product of sample sizes, noise levels,
/// and methods, replicated with derived seeds.
#[derive(Debug, Clone)]
pub struct StudyConfig {
    pub system: String,
    pub n_list: Vec<usize>,
    pub sigma_list: Vec<f64>,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub base_seed: u64,
    pub options: PipelineOptions,
}

/// One (grid point, replication) outcome, in per-state vectors.
#[derive(Debug, Clone)]
pub struct ExperimentRecord {
    pub system: String,
    pub method: Method,
    pub n: usize,
    pub sigma: f64,
    pub seed: u64,
    pub denoise_rel_err: Vec<f64>,
    pub deriv_rel_err: Vec<f64>,
    pub coeff_rel_err: Vec<f64>,
    pub recon_rel_err: Vec<f64>,
    pub failed: bool,
    pub prediction_horizon: Option<f64>,
    /// Set when the replication pipeline itself errored.
    pub error: Option<String>,
}

/// Runs one replication of one grid point. The clean trajectory and true
/// derivative matrix are shared across replications by the caller.
fn run_replication(
    system: &OdeSystem,
    clean: &crate::systems::Trajectory,
    true_deriv: &nalgebra::DMatrix<f64>,
    method: Method,
    n: usize,
    sigma: f64,
    seed: u64,
    options: &PipelineOptions,
) -> ExperimentRecord {
    let mut record = ExperimentRecord {
        system: system.name.clone(),
        method,
        n,
        sigma,
        seed,
        denoise_rel_err: Vec::new(),
        deriv_rel_err: Vec::new(),
        coeff_rel_err: Vec::new(),
        recon_rel_err: Vec::new(),
        failed: false,
        prediction_horizon: None,
        error: None,
    };
    let run =
        add_noise(clean, sigma, seed).and_then(|noisy| run_method(method, system, &noisy, options));
    let run = match run {
        Ok(r) => r,
        Err(e) => {
            record.failed = true;
            record.recon_rel_err = vec![1.0; system.state_count];
            record.error = Some(e.to_string());
            return record;
        }
    };

    let m = system.state_count;
    if let Some(den) = &run.denoised {
        for k in 0..m {
            let err =
                relative_error(&den.state_column(k), &clean.state_column(k)).unwrap_or(f64::NAN);
            record.denoise_rel_err.push(err);
        }
    }
    if let Some(deriv) = &run.derivatives {
        for k in 0..m {
            let err = relative_error(
                &deriv.column(k).clone_owned(),
                &true_deriv.column(k).clone_owned(),
            )
            .unwrap_or(f64::NAN);
            record.deriv_rel_err.push(err);
        }
    }
    for k in 0..m {
        let est: DVector<f64> = run.coefficients.row(k).transpose();
        let truth: DVector<f64> = system.true_coefficients.row(k).transpose();
        record
            .coeff_rel_err
            .push(relative_error(&est, &truth).unwrap_or(f64::NAN));
    }

    let protocol = if system.name == "lorenz96" {
        ReconstructionProtocol::Horizon
    } else {
        ReconstructionProtocol::DoubleTime
    };
    match reconstruction_error(&run.coefficients, system, protocol) {
        Ok(outcome) => {
            record.recon_rel_err = outcome.per_state;
            record.failed = outcome.failed;
            record.prediction_horizon = outcome.horizon;
        }
        Err(e) => {
            record.failed = true;
            record.recon_rel_err = vec![1.0; m];
            record.error = Some(format!("reconstruction: {e}"));
        }
    }
    record
}

/// Runs the full study. Replications are keyed by
/// (base_seed, grid index, replication index) and run concurrently;
/// identical configs produce identical records.
pub fn monte_carlo(cfg: &StudyConfig) -> Result<Vec<ExperimentRecord>> {
    if cfg.replications == 0 {
        return Err(Error::InvalidConfig("replications must be >= 1".into()));
    }
    let system = builtin_system(&cfg.system)?;
    let t_end = system.default_t_end;

    // methods share the noise draw of each (n, sigma, replication) cell so
    // that method comparisons are paired
    let mut grid = Vec::new();
    for (ni, &n) in cfg.n_list.iter().enumerate() {
        for (si, &sigma) in cfg.sigma_list.iter().enumerate() {
            for &method in &cfg.methods {
                grid.push((ni, si, n, sigma, method));
            }
        }
    }

    // clean trajectories and true derivatives shared per sample size
    let mut clean_by_n = std::collections::BTreeMap::new();
    for &n in &cfg.n_list {
        let clean = simulate(&system, system.default_ic.as_slice(), t_end, n)?;
        let mut true_deriv = nalgebra::DMatrix::zeros(n, system.state_count);
        let mut rhs = vec![0.0; system.state_count];
        for i in 0..n {
            let state: Vec<f64> = (0..system.state_count)
                .map(|k| clean.values()[(i, k)])
                .collect();
            system.rhs(&state, &mut rhs);
            for k in 0..system.state_count {
                true_deriv[(i, k)] = rhs[k];
            }
        }
        clean_by_n.insert(n, (clean, true_deriv));
    }

    let mut tasks = Vec::new();
    for &(ni, si, n, sigma, method) in &grid {
        for r in 0..cfg.replications {
            tasks.push((ni, si, r, n, sigma, method));
        }
    }
    let mut records: Vec<ExperimentRecord> = tasks
        .par_iter()
        .map(|&(ni, si, r, n, sigma, method)| {
            let (clean, true_deriv) = &clean_by_n[&n];
            let seed = derive_key(&[cfg.base_seed, ni as u64, si as u64, r as u64]);
            run_replication(
                &system,
                clean,
                true_deriv,
                method,
                n,
                sigma,
                seed,
                &cfg.options,
            )
        })
        .collect();

    records.sort_by(|a, b| {
        (a.system.as_str(), a.method, a.n, ordered(a.sigma), a.seed).cmp(&(
            b.system.as_str(),
            b.method,
            b.n,
            ordered(b.sigma),
            b.seed,
        ))
    });
    Ok(records)
}

fn ordered(v: f64) -> u64 {
    // monotone map of nonnegative finite f64 to u64 for sorting keys
    v.to_bits()
}

fn push_row(
    out: &mut String,
    system: &str,
    method: Method,
    n: usize,
    sigma: f64,
    seed: u64,
    state: usize,
    metric: &str,
    value: f64,
) {
    let _ = writeln!(
        out,
        "{system},{},{n},{sigma},{seed},{state},{metric},{value:.16e}",
        method.name()
    );
}

/// Long-format CSV: `system,method,N,sigma,seed,state,metric,value`.
/// States are 1-based; record-level metrics (failed, prediction_horizon,
/// error) use state 0. Rows come out sorted by all key columns.
pub fn records_to_csv(records: &[ExperimentRecord]) -> String {
    let mut out = String::from("system,method,N,sigma,seed,state,metric,value\n");
    for rec in records {
        // per-record rows, state 0
        let mut rows: Vec<(usize, &str, f64)> = Vec::new();
        rows.push((0, "failed", if rec.failed { 1.0 } else { 0.0 }));
        if let Some(h) = rec.prediction_horizon {
            rows.push((0, "prediction_horizon", h));
        }
        for (k, v) in rec.coeff_rel_err.iter().enumerate() {
            rows.push((k + 1, "coeff_rel_err", *v));
        }
        for (k, v) in rec.denoise_rel_err.iter().enumerate() {
            rows.push((k + 1, "denoise_rel_err", *v));
        }
        for (k, v) in rec.deriv_rel_err.iter().enumerate() {
            rows.push((k + 1, "deriv_rel_err", *v));
        }
        for (k, v) in rec.recon_rel_err.iter().enumerate() {
            rows.push((k + 1, "recon_rel_err", *v));
        }
        rows.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for (state, metric, value) in rows {
            push_row(
                &mut out,
                &rec.system,
                rec.method,
                rec.n,
                rec.sigma,
                rec.seed,
                state,
                metric,
                value,
            );
        }
    }
    out
}

/// Aggregate over replications for one grid point, state, and metric.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub system: String,
    pub method: Method,
    pub n: usize,
    pub sigma: f64,
    pub state: usize,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
    pub count: usize,
    pub failure_rate: f64,
}

/// Mean / std / sem / failure-rate aggregation per grid point.
pub fn summarize(records: &[ExperimentRecord]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    type Key = (String, Method, usize, u64, usize, String);
    let mut groups: BTreeMap<Key, Vec<f64>> = BTreeMap::new();
    let mut failures: BTreeMap<(String, Method, usize, u64), (usize, usize)> = BTreeMap::new();

    for rec in records {
        let fkey = (rec.system.clone(), rec.method, rec.n, ordered(rec.sigma));
        let entry = failures.entry(fkey).or_insert((0, 0));
        entry.1 += 1;
        if rec.failed {
            entry.0 += 1;
        }
        let mut add = |state: usize, metric: &str, value: f64| {
            groups
                .entry((
                    rec.system.clone(),
                    rec.method,
                    rec.n,
                    ordered(rec.sigma),
                    state,
                    metric.to_string(),
                ))
                .or_default()
                .push(value);
        };
        for (k, v) in rec.denoise_rel_err.iter().enumerate() {
            add(k + 1, "denoise_rel_err", *v);
        }
        for (k, v) in rec.deriv_rel_err.iter().enumerate() {
            add(k + 1, "deriv_rel_err", *v);
        }
        for (k, v) in rec.coeff_rel_err.iter().enumerate() {
            add(k + 1, "coeff_rel_err", *v);
        }
        for (k, v) in rec.recon_rel_err.iter().enumerate() {
            add(k + 1, "recon_rel_err", *v);
        }
        if let Some(h) = rec.prediction_horizon {
            add(0, "prediction_horizon", h);
        }
    }

    let mut rows = Vec::new();
    for ((system, method, n, sigma_bits, state, metric), values) in groups {
        let count = values.len();
        let mean = values.iter().sum::<f64>() / count as f64;
        let var = if count > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (count as f64 - 1.0)
        } else {
            0.0
        };
        let std = var.sqrt();
        let (nf, nt) = failures[&(system.clone(), method, n, sigma_bits)];
        rows.push(SummaryRow {
            system,
            method,
            n,
            sigma: f64::from_bits(sigma_bits),
            state,
            metric,
            mean,
            std,
            sem: std / (count as f64).sqrt(),
            count,
            failure_rate: nf as f64 / nt as f64,
        });
    }
    rows
}

/// CSV for the aggregate summary.
pub fn summary_to_csv(rows: &[SummaryRow]) -> String {
    let mut out =
        String::from("system,method,N,sigma,state,metric,mean,std,sem,count,failure_rate\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            r.system,
            r.method.name(),
            r.n,
            r.sigma,
            r.state,
            r.metric,
            r.mean,
            r.std,
            r.sem,
            r.count,
            r.failure_rate
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_study() -> StudyConfig {
        StudyConfig {
            system: "duffing_ps2".into(),
            n_list: vec![120],
            sigma_list: vec![0.01],
            methods: vec![Method::Dsindy],
            replications: 2,
            base_seed: 11,
            options: PipelineOptions::default(),
        }
    }

    #[test]
    fn identical_configs_are_byte_identical() {
        let cfg = tiny_study();
        let a = records_to_csv(&monte_carlo(&cfg).unwrap());
        let b = records_to_csv(&monte_carlo(&cfg).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn clean_pipeline_recovers_duffing() {
        let cfg = StudyConfig {
            sigma_list: vec![0.0],
            n_list: vec![400],
            replications: 1,
            ..tiny_study()
        };
        let records = monte_carlo(&cfg).unwrap();
        assert_eq!(records.len(), 1);
        let rec = &records[0];
        assert!(rec.error.is_none(), "error: {:?}", rec.error);
        for (k, e) in rec.coeff_rel_err.iter().enumerate() {
            assert!(*e < 1e-2, "state {k} coefficient error {e}");
        }
        assert!(!rec.failed);
    }

    #[test]
    fn summary_has_mean_and_failure_rate() {
        let cfg = tiny_study();
        let records = monte_carlo(&cfg).unwrap();
        let summary = summarize(&records);
        let coeff_rows: Vec<_> = summary
            .iter()
            .filter(|r| r.metric == "coeff_rel_err")
            .collect();
        assert_eq!(coeff_rows.len(), 2); // two states
        for row in coeff_rows {
            assert_eq!(row.count, 2);
            assert!(row.mean.is_finite());
            assert!(row.failure_rate <= 1.0);
        }
        let csv = summary_to_csv(&summary);
        assert!(csv.starts_with("system,method,N,sigma,state,metric,"));
    }
}
