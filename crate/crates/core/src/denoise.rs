//! Projection-based state denoising: single-shot PSDN and the iterative
//! partial-projection variant.

use nalgebra::DMatrix;

use crate::basis::{self, MonomialBasis};
use crate::error::{Error, Result};
use crate::operators::{Projector, TrapezoidMatrix, DEFAULT_RANK_TOL};
use crate::systems::{Trajectory, TrajectoryKind};

/// Configuration for [`iter_psdn`].
#[derive(Debug, Clone)]
pub struct DenoiseConfig {
    /// Partial-projection weight in [0, 1]; 1 projects fully, 0 is a no-op.
    pub alpha: f64,
    /// Revert a state update whenever it drifts more than sigma_k rms from
    /// the original measurements.
    pub check_diverg: bool,
    /// Per-state noise levels; required by `check_diverg` and by centering.
    pub sigma_per_state: Option<Vec<f64>>,
    pub max_iters: usize,
    /// Relative-change stopping threshold.
    pub conv_tol: f64,
    /// Project onto the noise-centered library instead of the raw one.
    pub use_centered_library: bool,
}

impl Default for DenoiseConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            check_diverg: false,
            sigma_per_state: None,
            max_iters: 10_000,
            conv_tol: 1e-8,
            use_centered_library: false,
        }
    }
}

impl DenoiseConfig {
    fn validate(&self, m: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig(format!(
                "alpha must lie in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be >= 1".into()));
        }
        if self.check_diverg || self.use_centered_library {
            match &self.sigma_per_state {
                Some(s) if s.len() == m && s.iter().all(|v| *v >= 0.0) => {}
                Some(s) => {
                    return Err(Error::InvalidConfig(format!(
                        "sigma_per_state needs {m} nonnegative entries, got {s:?}"
                    )))
                }
                None => {
                    return Err(Error::InvalidConfig(
                        "sigma_per_state is required by check_diverg / centering".into(),
                    ))
                }
            }
        }
        Ok(())
    }
}

/// Outcome of the iterative denoiser.
#[derive(Debug, Clone)]
pub struct DenoiseResult {
    pub denoised: Trajectory,
    pub iterations: usize,
    /// Max relative state change recorded at every completed iteration.
    pub per_iter_change: Vec<f64>,
    /// (iteration, state index) pairs where the divergence guard reverted.
    pub reverted_states: Vec<(usize, usize)>,
    pub converged: bool,
}

fn check_input(noisy: &Trajectory, basis: &MonomialBasis) -> Result<()> {
    if noisy.state_count() != basis.state_count() {
        return Err(Error::DimensionMismatch {
            what: "denoise input",
            left: basis.state_count(),
            right: noisy.state_count(),
        });
    }
    if noisy.len() < basis.len() + 1 {
        return Err(Error::InvalidDimension {
            what: "denoise sample count (need N >= p + 1)",
            need: basis.len() + 1,
            got: noisy.len(),
        });
    }
    Ok(())
}

fn projector_for(
    basis: &MonomialBasis,
    values: &DMatrix<f64>,
    trapezoid: &TrapezoidMatrix,
    sigmas: Option<&[f64]>,
) -> Result<Projector> {
    let theta = match sigmas {
        Some(s) => basis::evaluate_unbiased_library_values(basis, values, s),
        None => basis::evaluate_library_values(basis, values),
    };
    let phi = basis::build_phi(&theta, trapezoid)?;
    let projector = Projector::from_matrix(&phi, DEFAULT_RANK_TOL);
    if projector.rank() == 0 {
        return Err(Error::DegenerateLibrary);
    }
    Ok(projector)
}

/// Single-shot projection denoising: project each noisy state onto the
/// column space of the integrated library built from the noisy states.
pub fn psdn(
    noisy: &Trajectory,
    basis: &MonomialBasis,
    sigma: f64,
    use_centered: bool,
) -> Result<Trajectory> {
    check_input(noisy, basis)?;
    let trapezoid = TrapezoidMatrix::new(noisy.len(), noisy.t_end())?;
    let sigmas = vec![sigma; basis.state_count()];
    let projector = projector_for(
        basis,
        noisy.values(),
        &trapezoid,
        use_centered.then_some(&sigmas[..]),
    )?;
    let denoised = projector.apply_matrix(noisy.values());
    Ok(noisy.with_values(denoised, TrajectoryKind::Denoised))
}

/// Iterative partial-projection denoising.
///
/// Each pass rebuilds the integrated library from the current estimates and
/// moves every state toward its projection:
/// `u <- alpha * P u + (1 - alpha) * u`. States that drift more than
/// sigma_k rms from the original data are reverted when `check_diverg` is
/// set. Stops when the max relative change drops below `conv_tol`.
pub fn iter_psdn(
    noisy: &Trajectory,
    basis: &MonomialBasis,
    cfg: &DenoiseConfig,
) -> Result<DenoiseResult> {
    check_input(noisy, basis)?;
    cfg.validate(noisy.state_count())?;
    let n = noisy.len();
    let m = noisy.state_count();
    let trapezoid = TrapezoidMatrix::new(n, noisy.t_end())?;
    let sqrt_n = (n as f64).sqrt();

    let original = noisy.values().clone();
    let mut current = original.clone();
    let mut per_iter_change = Vec::new();
    let mut reverted_states = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        let projector = projector_for(
            basis,
            &current,
            &trapezoid,
            cfg.use_centered_library
                .then(|| cfg.sigma_per_state.as_deref().unwrap()),
        )?;
        let projected = projector.apply_matrix(&current);

        let mut next = DMatrix::zeros(n, m);
        let mut max_change = 0.0_f64;
        for k in 0..m {
            let mut col = projected.column(k) * cfg.alpha + current.column(k) * (1.0 - cfg.alpha);
            if cfg.check_diverg {
                let sigma_k = cfg.sigma_per_state.as_ref().unwrap()[k];
                let drift = (&col - original.column(k)).norm() / sqrt_n;
                if drift > sigma_k {
                    col.copy_from(&current.column(k));
                    reverted_states.push((iterations, k));
                }
            }
            let base = current.column(k).norm();
            let change = (&col - current.column(k)).norm() / base.max(f64::MIN_POSITIVE);
            max_change = max_change.max(change);
            next.set_column(k, &col);
        }

        current = next;
        iterations += 1;
        per_iter_change.push(max_change);
        if max_change < cfg.conv_tol {
            converged = true;
            break;
        }
    }

    Ok(DenoiseResult {
        denoised: noisy.with_values(current, TrajectoryKind::Denoised),
        iterations,
        per_iter_change,
        reverted_states,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::project;
    use crate::systems::{add_noise, builtin_system, simulate};
    use approx::assert_relative_eq;

    fn constant_rhs_trajectory(n: usize) -> Trajectory {
        // u' = 2 -> u(t) = 1 + 2t, library {1, u} makes the projection exact
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let values = DMatrix::from_fn(n, 1, |i, _| 1.0 + 2.0 * times[i]);
        Trajectory::new(times, values, TrajectoryKind::Noisy).unwrap()
    }

    #[test]
    fn psdn_exact_for_affine_dynamics() {
        let basis = MonomialBasis::new(1, 1).unwrap();
        let traj = constant_rhs_trajectory(64);
        let out = psdn(&traj, &basis, 0.0, false).unwrap();
        let err = (out.values() - traj.values()).norm();
        assert!(err < 1e-10, "projection error {err}");
    }

    #[test]
    fn psdn_square_full_rank_is_identity() {
        // N = p + 1 makes Phi square; full-space projection returns the input
        let basis = MonomialBasis::new(1, 1).unwrap();
        let times = vec![0.0, 0.5, 1.0];
        let values = DMatrix::from_fn(3, 1, |i, _| (i as f64 * 1.3).sin() + 2.0);
        let traj = Trajectory::new(times, values, TrajectoryKind::Noisy).unwrap();
        let out = psdn(&traj, &basis, 0.0, false).unwrap();
        assert_relative_eq!(out.values(), traj.values(), epsilon = 1e-10);
    }

    #[test]
    fn iter_single_full_projection_matches_psdn() {
        let sys = builtin_system("duffing_ps2").unwrap();
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, 200).unwrap();
        let noisy = add_noise(&clean, 0.05, 4).unwrap();
        let single = psdn(&noisy, &sys.basis, 0.0, false).unwrap();
        let cfg = DenoiseConfig {
            alpha: 1.0,
            max_iters: 1,
            ..DenoiseConfig::default()
        };
        let iter = iter_psdn(&noisy, &sys.basis, &cfg).unwrap();
        assert_relative_eq!(iter.denoised.values(), single.values(), epsilon = 1e-12);
        assert!(!iter.converged);
    }

    #[test]
    fn iter_alpha_zero_is_noop() {
        let sys = builtin_system("duffing_ps2").unwrap();
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, 120).unwrap();
        let noisy = add_noise(&clean, 0.1, 6).unwrap();
        let cfg = DenoiseConfig {
            alpha: 0.0,
            ..DenoiseConfig::default()
        };
        let out = iter_psdn(&noisy, &sys.basis, &cfg).unwrap();
        assert_eq!(out.iterations, 1);
        assert!(out.converged);
        assert_eq!(out.denoised.values(), noisy.values());
    }

    #[test]
    fn partial_update_sits_between_iterate_and_projection() {
        let sys = builtin_system("duffing_ps2").unwrap();
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, 150).unwrap();
        let noisy = add_noise(&clean, 0.1, 8).unwrap();
        let trapezoid = TrapezoidMatrix::new(150, 10.0).unwrap();
        let alpha = 0.3;

        let projector = projector_for(&sys.basis, noisy.values(), &trapezoid, None).unwrap();
        let u = noisy.state_column(0);
        let pu = projector.apply(&u);
        let updated = &pu * alpha + &u * (1.0 - alpha);
        let lhs = (&updated - &pu).norm();
        let rhs = (1.0 - alpha) * (&u - &pu).norm();
        assert_relative_eq!(lhs, rhs, epsilon = 1e-10, max_relative = 1e-10);
    }

    #[test]
    fn divergence_guard_reverts_bitwise() {
        let sys = builtin_system("duffing_ps2").unwrap();
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, 100).unwrap();
        let noisy = add_noise(&clean, 0.1, 12).unwrap();
        // sigma_k = 0 forces every nonzero update to revert immediately
        let cfg = DenoiseConfig {
            alpha: 0.5,
            check_diverg: true,
            sigma_per_state: Some(vec![0.0, 0.0]),
            max_iters: 3,
            ..DenoiseConfig::default()
        };
        let out = iter_psdn(&noisy, &sys.basis, &cfg).unwrap();
        assert!(!out.reverted_states.is_empty());
        // reverted on the first pass, so the data never moved
        assert_eq!(out.denoised.values(), noisy.values());
        assert!(out.converged);
    }

    #[test]
    fn centered_projection_requires_sigma() {
        let sys = builtin_system("duffing_ps2").unwrap();
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, 100).unwrap();
        let noisy = add_noise(&clean, 0.1, 13).unwrap();
        let cfg = DenoiseConfig {
            use_centered_library: true,
            ..DenoiseConfig::default()
        };
        assert!(matches!(
            iter_psdn(&noisy, &sys.basis, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn too_few_samples_rejected() {
        let basis = MonomialBasis::new(1, 3).unwrap();
        let traj = constant_rhs_trajectory(4);
        assert!(matches!(
            psdn(&traj, &basis, 0.0, false),
            Err(Error::InvalidDimension { .. })
        ));
    }

    #[test]
    fn known_phi_projection_error_is_optimal_scale() {
        // projecting onto the true-library column space lands the squared
        // error near sigma^2 (p+1): the quick version of the sandwich check
        let sys = builtin_system("duffing_ps1").unwrap();
        let n = 500;
        let clean = simulate(&sys, sys.default_ic.as_slice(), 10.0, n).unwrap();
        let trapezoid = TrapezoidMatrix::new(n, 10.0).unwrap();
        let theta_true = basis::evaluate_library(&sys.basis, &clean).unwrap();
        let phi_true = basis::build_phi(&theta_true, &trapezoid).unwrap();
        let sigma2 = 0.1_f64;
        let p1 = (sys.basis.len() + 1) as f64;

        let seeds = 40;
        let mut acc = 0.0;
        for seed in 0..seeds {
            let noisy = add_noise(&clean, sigma2.sqrt(), 1000 + seed).unwrap();
            let proj = project(&phi_true, &noisy.state_column(0), DEFAULT_RANK_TOL).unwrap();
            acc += (proj - clean.state_column(0)).norm_squared();
        }
        let mean = acc / seeds as f64;
        let target = sigma2 * p1;
        assert!(
            (mean - target).abs() < 0.35 * target,
            "mean {mean} vs sigma^2 (p+1) = {target}"
        );
    }
}
