//! Error metrics, reconstruction protocols, theoretical error predictions,
//! and the Monte Carlo verification harness.

mod mc;
mod pipeline;

pub use mc::{
    monte_carlo, records_to_csv, summarize, summary_to_csv, ExperimentRecord, StudyConfig,
    SummaryRow,
};
pub use pipeline::{
    run_dsindy, run_l1sindy, run_method, run_wsindy, GammaMode, Method, MethodRun, PipelineOptions,
};

use nalgebra::{DMatrix, DVector};

use crate::basis::MonomialBasis;
use crate::error::{Error, Result};
use crate::systems::{rk4_integrate, simulate, OdeSystem};

/// Relative l2 error ||est - truth|| / ||truth||.
pub fn relative_error(est: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if est.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            what: "relative error",
            left: est.len(),
            right: truth.len(),
        });
    }
    let denom = truth.norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((est - truth).norm() / denom)
}

/// Theory-side error predictions for a system at a given sample size and
/// noise level.
#[derive(Debug, Clone)]
pub struct TheoryEstimates {
    /// sigma sqrt(p+1) / ||u_k*|| per state: the optimal projection error.
    pub e_theory: Vec<f64>,
    /// sigma sqrt(N) / ||u_k*|| per state: the raw noisy-data error.
    pub e_noisy: Vec<f64>,
    /// Quadrature constants (t_end^3 / 12) max |d^3 u_k / dt^3| per state.
    pub c1: Vec<f64>,
    /// sigma sqrt(p+1): the theory value of the data-matching radius.
    pub gamma_exp: f64,
}

/// Computes the theory estimates. The third-derivative maximum behind C1
/// is estimated on a dense (1e5-sample) clean simulation with a
/// fourth-order central difference stencil.
pub fn theory_estimates(
    system: &OdeSystem,
    n: usize,
    sigma: f64,
    basis: &MonomialBasis,
) -> Result<TheoryEstimates> {
    let t_end = system.default_t_end;
    let traj = simulate(system, system.default_ic.as_slice(), t_end, n)?;
    let p1 = (basis.len() + 1) as f64;
    let mut e_theory = Vec::with_capacity(system.state_count);
    let mut e_noisy = Vec::with_capacity(system.state_count);
    for k in 0..system.state_count {
        let norm = traj.state_column(k).norm();
        e_theory.push(sigma * p1.sqrt() / norm);
        e_noisy.push(sigma * (n as f64).sqrt() / norm);
    }
    Ok(TheoryEstimates {
        e_theory,
        e_noisy,
        c1: quadrature_constants(system)?,
        gamma_exp: sigma * p1.sqrt(),
    })
}

/// Per-state C1 = (t_end^3 / 12) max |u_k'''| from a dense simulation.
pub fn quadrature_constants(system: &OdeSystem) -> Result<Vec<f64>> {
    let t_end = system.default_t_end;
    // 1e5 samples, but never a spacing below 1e-4: the stencil divides by
    // h^3 and would otherwise amplify f64 rounding past the signal
    let dense_n = (100_000).min((t_end / 1e-4).round() as usize + 1);
    let dense = simulate(system, system.default_ic.as_slice(), t_end, dense_n)?;
    let h = dense.dt();
    let v = dense.values();
    let mut out = Vec::with_capacity(system.state_count);
    for k in 0..system.state_count {
        let mut max3 = 0.0_f64;
        for i in 3..dense_n - 3 {
            // fourth-order central stencil for the third derivative
            let d3 = (v[(i - 3, k)] / 8.0 - v[(i - 2, k)] + 13.0 * v[(i - 1, k)] / 8.0
                - 13.0 * v[(i + 1, k)] / 8.0
                + v[(i + 2, k)]
                - v[(i + 3, k)] / 8.0)
                / (h * h * h);
            max3 = max3.max(d3.abs());
        }
        out.push(t_end.powi(3) / 12.0 * max3);
    }
    Ok(out)
}

/// How reconstruction quality is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReconstructionProtocol {
    /// Simulate training IC to 2 t_end and compare per state, clamped at 1.
    DoubleTime,
    /// Start at the true state at t_end and report how long the rolling
    /// relative error stays below 10% for all states.
    Horizon,
}

/// Outcome of the reconstruction comparison.
#[derive(Debug, Clone)]
pub struct ReconstructionOutcome {
    /// Per-state relative errors (double-time protocol), clamped at 1.
    pub per_state: Vec<f64>,
    pub failed: bool,
    /// Prediction horizon in seconds (horizon protocol only).
    pub horizon: Option<f64>,
}

const RECONSTRUCTION_DT: f64 = 0.01;
const HORIZON_THRESHOLD: f64 = 0.1;

/// Scores a learned coefficient matrix against the true system.
pub fn reconstruction_error(
    learned_coefficients: &DMatrix<f64>,
    system: &OdeSystem,
    protocol: ReconstructionProtocol,
) -> Result<ReconstructionOutcome> {
    if !learned_coefficients.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig(
            "learned coefficients must be finite".into(),
        ));
    }
    let learned = OdeSystem::from_coefficients(
        format!("{}-learned", system.name),
        system.basis.clone(),
        learned_coefficients.clone(),
        system.default_ic.clone(),
        system.default_t_end,
    )?;
    match protocol {
        ReconstructionProtocol::DoubleTime => double_time(&learned, system),
        ReconstructionProtocol::Horizon => horizon(&learned, system),
    }
}

fn double_time(learned: &OdeSystem, system: &OdeSystem) -> Result<ReconstructionOutcome> {
    let m = system.state_count;
    let t_test = 2.0 * system.default_t_end;
    let n_out = (t_test / RECONSTRUCTION_DT).round() as usize + 1;
    let truth = simulate(system, system.default_ic.as_slice(), t_test, n_out)?;
    let failed_outcome = ReconstructionOutcome {
        per_state: vec![1.0; m],
        failed: true,
        horizon: None,
    };
    let est = match simulate(learned, system.default_ic.as_slice(), t_test, n_out) {
        Ok(t) => t,
        Err(Error::Divergence { .. }) => return Ok(failed_outcome),
        Err(e) => return Err(e),
    };
    let mut per_state = Vec::with_capacity(m);
    let mut failed = false;
    for k in 0..m {
        let err = relative_error(&est.state_column(k), &truth.state_column(k))?;
        if !err.is_finite() || err > 1.0 {
            failed = true;
        }
        per_state.push(err.min(1.0));
    }
    if failed {
        return Ok(failed_outcome);
    }
    Ok(ReconstructionOutcome {
        per_state,
        failed,
        horizon: None,
    })
}

/// Largest time from the restart point for which the rolling relative
/// reconstruction error stays below 10% for every state.
fn horizon(learned: &OdeSystem, system: &OdeSystem) -> Result<ReconstructionOutcome> {
    let m = system.state_count;
    let t_end = system.default_t_end;
    // restart both systems from the true state at t_end
    let lead_n = (t_end / RECONSTRUCTION_DT).round() as usize + 1;
    let lead = simulate(system, system.default_ic.as_slice(), t_end, lead_n)?;
    let restart: Vec<f64> = (0..m).map(|k| lead.values()[(lead_n - 1, k)]).collect();

    let steps = (t_end / RECONSTRUCTION_DT).round() as usize;
    let truth = simulate(system, &restart, t_end, steps + 1)?;

    let mut est = restart.clone();
    let mut horizon = 0.0;
    let mut cum_err = vec![0.0_f64; m];
    let mut cum_ref = vec![0.0_f64; m];
    for i in 1..=steps {
        let t0 = (i - 1) as f64 * RECONSTRUCTION_DT;
        let t1 = i as f64 * RECONSTRUCTION_DT;
        let step = rk4_integrate(
            &|s: &[f64], o: &mut [f64]| learned.rhs(s, o),
            &est,
            &[t0, t1],
            1e-3 * t_end,
        );
        let step = match step {
            Ok(v) => v,
            Err(Error::Divergence { .. }) => break,
            Err(e) => return Err(e),
        };
        for k in 0..m {
            est[k] = step[(1, k)];
        }
        let mut ok = true;
        for k in 0..m {
            let truth_k = truth.values()[(i, k)];
            cum_err[k] += (est[k] - truth_k).powi(2);
            cum_ref[k] += truth_k.powi(2);
            if cum_ref[k] == 0.0 || (cum_err[k] / cum_ref[k]).sqrt() >= HORIZON_THRESHOLD {
                ok = false;
            }
        }
        if !ok {
            break;
        }
        horizon = t1;
    }
    Ok(ReconstructionOutcome {
        per_state: Vec::new(),
        failed: false,
        horizon: Some(horizon),
    })
}
