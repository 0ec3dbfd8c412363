//! End-to-end discovery pipelines for the three compared methods.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::basis;
use crate::denoise::{iter_psdn, DenoiseConfig};
use crate::error::{Error, Result};
use crate::pareto::{corner_search, gamma_pareto, ParetoCurvePoint};
use crate::regression::{
    gamma_theory, initial_derivative, irw_lasso, irw_socp, smoothing_radius, solve_socp,
    ConeProgram, IrwOptions, RegressionContext, DEFAULT_TIE_BREAK,
};
use crate::systems::{estimate_noise_std, OdeSystem, Trajectory};
use crate::weakform::{self, TestFunctionSet};

/// Discovery method under study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Method {
    Dsindy,
    L1Sindy,
    WsindyLite,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Dsindy => "dsindy",
            Method::L1Sindy => "l1sindy",
            Method::WsindyLite => "wsindy-lite",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "dsindy" => Ok(Method::Dsindy),
            "l1sindy" => Ok(Method::L1Sindy),
            "wsindy-lite" => Ok(Method::WsindyLite),
            other => Err(Error::InvalidConfig(format!(
                "unknown method '{other}'; valid: dsindy, l1sindy, wsindy-lite"
            ))),
        }
    }
}

/// How the data-matching radius is chosen per state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GammaMode {
    Theory,
    Pareto,
}

impl GammaMode {
    pub fn name(self) -> &'static str {
        match self {
            GammaMode::Theory => "theory",
            GammaMode::Pareto => "pareto",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "theory" => Ok(GammaMode::Theory),
            "pareto" => Ok(GammaMode::Pareto),
            other => Err(Error::InvalidConfig(format!(
                "unknown gamma mode '{other}'; valid: theory, pareto"
            ))),
        }
    }
}

/// Pipeline knobs shared by the methods.
#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub gamma_mode: GammaMode,
    pub irw_iters: usize,
    pub alpha: f64,
    pub check_diverg: bool,
    pub max_denoise_iters: usize,
    pub use_centered_library: bool,
    pub pareto_max_evals: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            gamma_mode: GammaMode::Theory,
            irw_iters: 2,
            alpha: 0.1,
            check_diverg: true,
            // denoising either converges or plateaus well before this;
            // runs that keep bouncing off the divergence guard stop here
            max_denoise_iters: 2000,
            use_centered_library: false,
            pareto_max_evals: 30,
        }
    }
}

/// Output of one method run on one noisy trajectory.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub coefficients: DMatrix<f64>,
    /// Recovered derivatives (derivative-based methods only).
    pub derivatives: Option<DMatrix<f64>>,
    pub denoised: Option<Trajectory>,
    /// Per-state data-matching radii actually used (cone-program method).
    pub gamma_used: Vec<Vec<f64>>,
    pub sigma_hat: Vec<f64>,
}

/// Runs one discovery method on a noisy trajectory of `system`.
pub fn run_method(
    method: Method,
    system: &OdeSystem,
    noisy: &Trajectory,
    opts: &PipelineOptions,
) -> Result<MethodRun> {
    match method {
        Method::Dsindy => run_dsindy(system, noisy, opts),
        Method::L1Sindy => run_l1sindy(system, noisy, opts),
        Method::WsindyLite => run_wsindy(system, noisy),
    }
}

fn denoise_stage(
    system: &OdeSystem,
    noisy: &Trajectory,
    opts: &PipelineOptions,
) -> Result<(Trajectory, Vec<f64>)> {
    let sigma_hat = estimate_noise_std(noisy)?;
    let cfg = DenoiseConfig {
        alpha: opts.alpha,
        check_diverg: opts.check_diverg,
        sigma_per_state: Some(sigma_hat.clone()),
        max_iters: opts.max_denoise_iters,
        conv_tol: 1e-8,
        use_centered_library: opts.use_centered_library,
    };
    let res = iter_psdn(noisy, &system.basis, &cfg)?;
    Ok((res.denoised, sigma_hat))
}

/// Full cone-program pipeline: denoise, assemble the regression context,
/// pick the data radius, and recover each state concurrently.
pub fn run_dsindy(
    system: &OdeSystem,
    noisy: &Trajectory,
    opts: &PipelineOptions,
) -> Result<MethodRun> {
    let (denoised, sigma_hat) = denoise_stage(system, noisy, opts)?;
    let theta = basis::evaluate_library(&system.basis, &denoised)?;
    let ctx = RegressionContext::new(theta, noisy.t_end(), None)?;
    let p = system.basis.len();
    let m = system.state_count;
    let irw = IrwOptions {
        irw_iters: opts.irw_iters,
        ..IrwOptions::default()
    };

    let per_state: Vec<Result<(DVector<f64>, DVector<f64>, Vec<f64>)>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let u_tilde = denoised.state_column(k);
            let init = initial_derivative(&ctx.theta_tilde, &ctx.phi_tilde, &u_tilde)?;
            let c_radius = smoothing_radius(&ctx.difference, &init.derivative)?;
            let gamma_exp = gamma_theory(sigma_hat[k], p);
            let gamma = match opts.gamma_mode {
                GammaMode::Theory => gamma_exp,
                GammaMode::Pareto => {
                    if gamma_exp > 0.0 {
                        select_gamma_by_corner(&ctx, &u_tilde, c_radius, gamma_exp, opts)?
                    } else {
                        gamma_exp
                    }
                }
            };
            let disc = irw_socp(&ctx, &u_tilde, &[gamma], c_radius, &irw)?;
            Ok((disc.coefficients, disc.derivative, disc.gamma_used))
        })
        .collect();

    let mut coefficients = DMatrix::zeros(m, p);
    let mut derivatives = DMatrix::zeros(noisy.len(), m);
    let mut gamma_used = Vec::with_capacity(m);
    for (k, res) in per_state.into_iter().enumerate() {
        let (c, d, g) = res?;
        coefficients.row_mut(k).copy_from(&c.transpose());
        derivatives.set_column(k, &d);
        gamma_used.push(g);
    }
    Ok(MethodRun {
        coefficients,
        derivatives: Some(derivatives),
        denoised: Some(denoised),
        gamma_used,
        sigma_hat,
    })
}

/// Data-radius corner search. A uniform-weight warmup solve at the theory
/// radius supplies the reweighting diagonal; the curve then trades the
/// weighted l1 norm of the coefficients against the data misfit, which
/// puts a sharp corner near the support transition.
fn select_gamma_by_corner(
    ctx: &RegressionContext,
    u_tilde: &DVector<f64>,
    c_radius: f64,
    gamma_exp: f64,
    opts: &PipelineOptions,
) -> Result<f64> {
    let data_target = ctx.project_data(u_tilde);
    let p = ctx.theta_tilde.ncols();
    let solve_at = |map: DMatrix<f64>, gamma: f64| -> Result<crate::regression::SocpSolution> {
        let prog = ConeProgram {
            objective_map: map,
            difference: ctx.difference.clone(),
            smooth_radius: c_radius,
            trapezoid: ctx.trapezoid.clone(),
            data_target: data_target.clone(),
            data_radius: gamma,
            solver_tol: 1e-8,
            roughness_tie_break: DEFAULT_TIE_BREAK,
        };
        let sol = solve_socp(&prog)?;
        if !sol.status.is_usable() {
            return Err(Error::Solver {
                status: sol.status.to_string(),
                context: "data-radius corner search",
            });
        }
        Ok(sol)
    };

    let warmup = solve_at(ctx.coefficient_map.clone(), gamma_exp)?;
    let (weights, _) = crate::regression::irw_weights(&ctx.coefficients_for(&warmup.u_dot), 1e-4);
    let mut weighted_map = ctx.coefficient_map.clone();
    for j in 0..p {
        weighted_map.row_mut(j).scale_mut(weights[j]);
    }

    gamma_pareto(
        |gamma| {
            let sol = solve_at(weighted_map.clone(), gamma)?;
            let coeffs = ctx.coefficients_for(&sol.u_dot);
            let misfit = ctx.trapezoid.apply(&sol.u_dot)?.add_scalar(sol.u0) - &data_target;
            Ok(ParetoCurvePoint {
                lambda: gamma,
                reg_residual: coeffs
                    .iter()
                    .zip(weights.iter())
                    .map(|(c, w)| w * c.abs())
                    .sum::<f64>(),
                sol_residual: misfit.norm(),
            })
        },
        gamma_exp,
        opts.pareto_max_evals,
    )
}

/// Tikhonov + reweighted-Lasso pipeline on the denoised states, with both
/// ridge weights picked at the corner of their trade-off curves.
pub fn run_l1sindy(
    system: &OdeSystem,
    noisy: &Trajectory,
    opts: &PipelineOptions,
) -> Result<MethodRun> {
    let (denoised, sigma_hat) = denoise_stage(system, noisy, opts)?;
    let theta = basis::evaluate_library(&system.basis, &denoised)?;
    let ctx = RegressionContext::new(theta, noisy.t_end(), None)?;
    let m = system.state_count;
    let p = system.basis.len();

    let per_state: Vec<Result<(DVector<f64>, DVector<f64>)>> = (0..m)
        .into_par_iter()
        .map(|k| {
            let u_tilde = denoised.state_column(k);
            let corner = corner_search(
                |lambda| {
                    let udot = crate::regression::tikhonov_derivative(
                        &u_tilde,
                        &ctx.trapezoid,
                        &ctx.difference,
                        lambda,
                    )?;
                    Ok(ParetoCurvePoint {
                        lambda,
                        reg_residual: ctx.difference.apply(&udot)?.norm(),
                        sol_residual: (ctx.trapezoid.apply(&udot)? - &u_tilde).norm(),
                    })
                },
                1e-8,
                1.0,
                opts.pareto_max_evals,
            )?;
            let udot = crate::regression::tikhonov_derivative(
                &u_tilde,
                &ctx.trapezoid,
                &ctx.difference,
                corner.lambda_corner,
            )?;

            let lambda_max = 2.0 * (ctx.theta_tilde.transpose() * &udot).amax();
            let lasso_corner = corner_search(
                |lambda| {
                    let c = irw_lasso(&ctx.theta_tilde, &udot, lambda, 1, 1e-4)?;
                    Ok(ParetoCurvePoint {
                        lambda,
                        reg_residual: c.iter().map(|v| v.abs()).sum::<f64>().max(1e-300),
                        sol_residual: (&ctx.theta_tilde * &c - &udot).norm(),
                    })
                },
                1e-6 * lambda_max.max(1e-12),
                lambda_max.max(1e-10),
                opts.pareto_max_evals,
            )?;
            let coeffs = irw_lasso(
                &ctx.theta_tilde,
                &udot,
                lasso_corner.lambda_corner,
                opts.irw_iters.max(1),
                1e-4,
            )?;
            Ok((coeffs, udot))
        })
        .collect();

    let mut coefficients = DMatrix::zeros(m, p);
    let mut derivatives = DMatrix::zeros(noisy.len(), m);
    for (k, res) in per_state.into_iter().enumerate() {
        let (c, d) = res?;
        coefficients.row_mut(k).copy_from(&c.transpose());
        derivatives.set_column(k, &d);
    }
    Ok(MethodRun {
        coefficients,
        derivatives: Some(derivatives),
        denoised: Some(denoised),
        gamma_used: Vec::new(),
        sigma_hat,
    })
}

/// Weak-form baseline on the raw noisy data.
pub fn run_wsindy(system: &OdeSystem, noisy: &Trajectory) -> Result<MethodRun> {
    let tests = TestFunctionSet::default_for(noisy.len(), noisy.t_end())?;
    let coefficients = weakform::wsindy_discover(
        noisy,
        &system.basis,
        &tests,
        &weakform::default_lambda_grid(),
    )?;
    Ok(MethodRun {
        coefficients,
        derivatives: None,
        denoised: None,
        gamma_used: Vec::new(),
        sigma_hat: Vec::new(),
    })
}
