//! Command implementations: each writes its artifacts plus a manifest into
//! the output directory.

use std::fmt::Write as _;
use std::path::Path;

use odediscover_core::analysis::{
    monte_carlo, records_to_csv, summarize, summary_to_csv, theory_estimates, Method,
    PipelineOptions, StudyConfig, SummaryRow,
};
use odediscover_core::basis;
use odediscover_core::denoise::{iter_psdn, psdn, DenoiseConfig};
use odediscover_core::error::Error as CoreError;
use odediscover_core::operators::{Projector, TrapezoidMatrix, DEFAULT_RANK_TOL};
use odediscover_core::systems::{
    add_noise, builtin_system, estimate_noise_std, simulate, OdeSystem,
};
use rayon::prelude::*;

use crate::config::{Command, RunConfig};
use crate::svg::{line_chart, Series};
use crate::CliError;

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir)
        .map_err(|e| CliError::Io(format!("creating {}: {e}", cfg.output_dir.display())))?;
    match cfg.command {
        Command::Simulate => simulate_cmd(cfg)?,
        Command::Denoise => denoise_cmd(cfg)?,
        Command::Discover => discover_cmd(cfg)?,
        Command::VerifyTheory => verify_theory_cmd(cfg)?,
        Command::Benchmark => benchmark_cmd(cfg)?,
    }
    write_file(&cfg.output_dir, "manifest.txt", &cfg.manifest())?;
    Ok(())
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| CliError::Io(format!("writing {}: {e}", path.display())))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn pipeline_options(cfg: &RunConfig) -> PipelineOptions {
    PipelineOptions {
        gamma_mode: cfg.gamma_mode,
        irw_iters: cfg.irw_iters,
        ..PipelineOptions::default()
    }
}

fn load_system(cfg: &RunConfig) -> Result<(OdeSystem, f64), CliError> {
    let system = builtin_system(&cfg.system).map_err(CliError::from_core)?;
    let t_end = cfg.t_end.unwrap_or(system.default_t_end);
    Ok((system, t_end))
}

fn simulate_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, t_end) = load_system(cfg)?;
    let clean = simulate(&system, system.default_ic.as_slice(), t_end, cfg.n)
        .map_err(CliError::from_core)?;
    write_file(&cfg.output_dir, "trajectory.csv", &clean.to_csv())?;
    if cfg.sigma > 0.0 {
        let noisy = add_noise(&clean, cfg.sigma, cfg.seed).map_err(CliError::from_core)?;
        write_file(&cfg.output_dir, "trajectory_noisy.csv", &noisy.to_csv())?;
    }
    Ok(())
}

fn denoise_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, t_end) = load_system(cfg)?;
    let clean = simulate(&system, system.default_ic.as_slice(), t_end, cfg.n)
        .map_err(CliError::from_core)?;
    let noisy = add_noise(&clean, cfg.sigma, cfg.seed).map_err(CliError::from_core)?;
    let sigma_hat = estimate_noise_std(&noisy).map_err(CliError::from_core)?;
    let den_cfg = DenoiseConfig {
        sigma_per_state: Some(sigma_hat.clone()),
        check_diverg: true,
        max_iters: 2000,
        ..DenoiseConfig::default()
    };
    let result = iter_psdn(&noisy, &system.basis, &den_cfg).map_err(CliError::from_core)?;
    write_file(&cfg.output_dir, "trajectory_noisy.csv", &noisy.to_csv())?;
    write_file(
        &cfg.output_dir,
        "trajectory_denoised.csv",
        &result.denoised.to_csv(),
    )?;
    let mut info = String::new();
    let _ = writeln!(info, "iterations,{}", result.iterations);
    let _ = writeln!(info, "converged,{}", result.converged);
    let _ = writeln!(info, "reverted_updates,{}", result.reverted_states.len());
    for (k, s) in sigma_hat.iter().enumerate() {
        let _ = writeln!(info, "sigma_hat_u{},{s:.16e}", k + 1);
    }
    write_file(&cfg.output_dir, "denoise_info.csv", &info)?;
    Ok(())
}

fn study_config(cfg: &RunConfig) -> StudyConfig {
    StudyConfig {
        system: cfg.system.clone(),
        n_list: cfg.n_list.clone(),
        sigma_list: cfg.sigma_list.clone(),
        methods: cfg.methods.clone(),
        replications: cfg.replications,
        base_seed: cfg.seed,
        options: pipeline_options(cfg),
    }
}

fn discover_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, _) = load_system(cfg)?;
    let mut study = study_config(cfg);
    study.n_list = vec![cfg.n];
    study.sigma_list = vec![cfg.sigma];
    study.methods = vec![cfg.method];
    study.replications = cfg.replications;
    let records = monte_carlo(&study).map_err(CliError::from_core)?;
    write_file(&cfg.output_dir, "records.csv", &records_to_csv(&records))?;

    // learned coefficients of the first replication, for inspection
    let noisy = {
        let t_end = cfg.t_end.unwrap_or(system.default_t_end);
        let clean = simulate(&system, system.default_ic.as_slice(), t_end, cfg.n)
            .map_err(CliError::from_core)?;
        let seed = odediscover_core::rng::derive_key(&[cfg.seed, 0, 0, 0]);
        add_noise(&clean, cfg.sigma, seed).map_err(CliError::from_core)?
    };
    let run =
        odediscover_core::analysis::run_method(cfg.method, &system, &noisy, &pipeline_options(cfg))
            .map_err(CliError::from_core)?;
    let mut coeffs = String::from("state");
    for j in 0..system.basis.len() {
        let _ = write!(coeffs, ",{}", system.basis.term_name(j));
    }
    coeffs.push('\n');
    for k in 0..system.state_count {
        let _ = write!(coeffs, "u{}", k + 1);
        for j in 0..system.basis.len() {
            let _ = write!(coeffs, ",{:.16e}", run.coefficients[(k, j)]);
        }
        coeffs.push('\n');
    }
    write_file(&cfg.output_dir, "coefficients.csv", &coeffs)?;
    Ok(())
}

fn benchmark_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let study = study_config(cfg);
    let records = monte_carlo(&study).map_err(CliError::from_core)?;
    write_file(&cfg.output_dir, "records.csv", &records_to_csv(&records))?;
    let summary = summarize(&records);
    write_file(&cfg.output_dir, "summary.csv", &summary_to_csv(&summary))?;

    // mean coefficient error averaged over states, per method
    let series_for =
        |pick: &dyn Fn(&SummaryRow) -> Option<(f64, f64)>, method: Method| -> Vec<(f64, f64)> {
            let mut pts: Vec<(f64, f64)> = summary
                .iter()
                .filter(|r| r.method == method && r.metric == "coeff_rel_err")
                .filter_map(pick)
                .collect();
            pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            // states share the same abscissa; average them
            let mut merged: Vec<(f64, f64)> = Vec::new();
            for (x, y) in pts {
                match merged.last_mut() {
                    Some(last) if (last.0 - x).abs() < 1e-12 => {
                        last.1 = (last.1 + y) / 2.0;
                    }
                    _ => merged.push((x, y)),
                }
            }
            merged
        };

    if cfg.sigma_list.len() > 1 {
        for &n in &cfg.n_list {
            let series: Vec<Series> = cfg
                .methods
                .iter()
                .map(|&m| Series {
                    name: m.name().to_string(),
                    points: series_for(
                        &|r: &SummaryRow| (r.n == n).then_some((r.sigma, r.mean)),
                        m,
                    ),
                })
                .collect();
            let svg = line_chart(
                &format!("{} coefficient error, N = {n}", cfg.system),
                "noise std",
                "relative coefficient error",
                &series,
            );
            write_file(
                &cfg.output_dir,
                &format!("coeff_err_vs_sigma_N{n}.svg"),
                &svg,
            )?;
        }
    }
    if cfg.n_list.len() > 1 {
        for &sigma in &cfg.sigma_list {
            let series: Vec<Series> = cfg
                .methods
                .iter()
                .map(|&m| Series {
                    name: m.name().to_string(),
                    points: series_for(
                        &|r: &SummaryRow| {
                            ((r.sigma - sigma).abs() < 1e-15).then_some((r.n as f64, r.mean))
                        },
                        m,
                    ),
                })
                .collect();
            let svg = line_chart(
                &format!("{} coefficient error, sigma = {sigma}", cfg.system),
                "N",
                "relative coefficient error",
                &series,
            );
            write_file(
                &cfg.output_dir,
                &format!("coeff_err_vs_N_sigma{sigma}.svg"),
                &svg,
            )?;
        }
    }
    Ok(())
}

/// Denoising-vs-theory comparison: for each sample size, the relative
/// denoising error of the known-library projection, the single projection,
/// and the iterative denoiser, against the theory levels.
fn verify_theory_cmd(cfg: &RunConfig) -> Result<(), CliError> {
    let (system, t_end) = load_system(cfg)?;
    let sigma = cfg.sigma;
    let n_list = if cfg.n_list.len() > 1 || cfg.n_list[0] != cfg.n {
        cfg.n_list.clone()
    } else {
        vec![250, 500, 1000, 2000, 4000]
    };
    let m = system.state_count;
    let reps = cfg.replications;

    let mut csv = String::from("system,variant,N,sigma,state,metric,value\n");
    let mut push = |variant: &str, n: usize, state: usize, metric: &str, value: f64| {
        let _ = writeln!(
            csv,
            "{},{variant},{n},{sigma},{state},{metric},{value:.16e}",
            cfg.system
        );
    };

    let mut series: Vec<Vec<Vec<(f64, f64)>>> = vec![vec![Vec::new(); 5]; m];
    for &n in &n_list {
        let clean = simulate(&system, system.default_ic.as_slice(), t_end, n)
            .map_err(CliError::from_core)?;
        let theta_true =
            basis::evaluate_library(&system.basis, &clean).map_err(CliError::from_core)?;
        let t = TrapezoidMatrix::new(n, t_end).map_err(CliError::from_core)?;
        let phi_true = basis::build_phi(&theta_true, &t).map_err(CliError::from_core)?;
        let projector = Projector::from_matrix(&phi_true, DEFAULT_RANK_TOL);

        let errs: Vec<Result<Vec<[f64; 3]>, CoreError>> = (0..reps as u64)
            .into_par_iter()
            .map(|rep| {
                let seed = odediscover_core::rng::derive_key(&[cfg.seed, n as u64, rep]);
                let noisy = add_noise(&clean, sigma, seed)?;
                let single = psdn(&noisy, &system.basis, sigma, true)?;
                let den_cfg = DenoiseConfig {
                    check_diverg: true,
                    sigma_per_state: Some(vec![sigma; m]),
                    max_iters: 2000,
                    ..DenoiseConfig::default()
                };
                let iter = iter_psdn(&noisy, &system.basis, &den_cfg)?;
                let mut out = Vec::with_capacity(m);
                for k in 0..m {
                    let tru = clean.state_column(k);
                    let known =
                        (projector.apply(&noisy.state_column(k)) - &tru).norm() / tru.norm();
                    let ps = (single.state_column(k) - &tru).norm() / tru.norm();
                    let it = (iter.denoised.state_column(k) - &tru).norm() / tru.norm();
                    out.push([known, ps, it]);
                }
                Ok(out)
            })
            .collect();

        let mut gathered: Vec<Vec<[f64; 3]>> = Vec::with_capacity(reps);
        for e in errs {
            gathered.push(e.map_err(CliError::from_core)?);
        }
        let estimates =
            theory_estimates(&system, n, sigma, &system.basis).map_err(CliError::from_core)?;
        for k in 0..m {
            for (vi, variant) in ["known_phi", "psdn", "iterpsdn"].iter().enumerate() {
                let vals: Vec<f64> = gathered.iter().map(|g| g[k][vi]).collect();
                let mean = vals.iter().sum::<f64>() / vals.len() as f64;
                let var = if vals.len() > 1 {
                    vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (vals.len() as f64 - 1.0)
                } else {
                    0.0
                };
                push(variant, n, k + 1, "mean_rel_err", mean);
                push(variant, n, k + 1, "std_rel_err", var.sqrt());
                series[k][vi].push((n as f64, mean));
            }
            push("theory", n, k + 1, "e_theory", estimates.e_theory[k]);
            push("theory", n, k + 1, "e_noisy", estimates.e_noisy[k]);
            series[k][3].push((n as f64, estimates.e_theory[k]));
            series[k][4].push((n as f64, estimates.e_noisy[k]));
        }
    }
    write_file(&cfg.output_dir, "verify_theory.csv", &csv)?;

    let names = ["known_phi", "psdn", "iterpsdn", "e_theory", "e_noisy"];
    for k in 0..m {
        let chart_series: Vec<Series> = names
            .iter()
            .enumerate()
            .map(|(vi, name)| Series {
                name: name.to_string(),
                points: series[k][vi].clone(),
            })
            .collect();
        let svg = line_chart(
            &format!("{} state {} denoising error vs theory", cfg.system, k + 1),
            "N",
            "relative error",
            &chart_series,
        );
        write_file(
            &cfg.output_dir,
            &format!("verify_theory_u{}.svg", k + 1),
            &svg,
        )?;
    }
    Ok(())
}
