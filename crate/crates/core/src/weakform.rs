//! Weak-form discovery baseline: compactly supported polynomial test
//! functions, weak-system assembly by integration by parts, and
//! thresholded least-squares coefficient selection.

use nalgebra::DMatrix;

use crate::basis::{self, MonomialBasis};
use crate::error::{Error, Result};
use crate::regression::mstls_select;
use crate::systems::Trajectory;

/// A family of bump test functions phi(t) = (1 - ((t - t_c)/r)^2)^q on
/// their support, zero outside.
#[derive(Debug, Clone)]
pub struct TestFunctionSet {
    /// Support centers, in time units.
    pub centers: Vec<f64>,
    /// Support half-width, in time units.
    pub radius: f64,
    /// Polynomial order q >= 2, so phi and phi' vanish at the endpoints.
    pub degree: u32,
}

impl TestFunctionSet {
    pub fn new(centers: Vec<f64>, radius: f64, degree: u32) -> Result<Self> {
        if degree < 2 {
            return Err(Error::InvalidConfig(format!(
                "test function degree must be >= 2, got {degree}"
            )));
        }
        if !(radius > 0.0) || centers.is_empty() {
            return Err(Error::InvalidConfig(
                "test functions need a positive radius and at least one center".into(),
            ));
        }
        Ok(Self {
            centers,
            radius,
            degree,
        })
    }

    /// Default family: radius N/20 samples, degree 8, centers spaced one
    /// radius apart (50% support overlap), supports inside [0, t_end].
    pub fn default_for(n: usize, t_end: f64) -> Result<Self> {
        let dt = t_end / (n - 1) as f64;
        let radius = (n as f64 / 20.0) * dt;
        let mut centers = Vec::new();
        let mut c = radius;
        while c <= t_end - radius + 1e-12 {
            centers.push(c);
            c += radius;
        }
        Self::new(centers, radius, 8)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// phi_l(t)
    pub fn value(&self, l: usize, t: f64) -> f64 {
        let s = (t - self.centers[l]) / self.radius;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - s * s).powi(self.degree as i32)
    }

    /// d phi_l / dt
    pub fn derivative(&self, l: usize, t: f64) -> f64 {
        let s = (t - self.centers[l]) / self.radius;
        if s.abs() >= 1.0 {
            return 0.0;
        }
        let q = self.degree as i32;
        (1.0 - s * s).powi(q - 1) * (-2.0 * s * q as f64) / self.radius
    }
}

/// Assembles the weak-form linear system: for each test function l,
/// b_{k,l} = -dt * sum_i phi'_l(t_i) u_k(t_i) and
/// H_{l,:} = dt * sum_i phi_l(t_i) Theta_{i,:}. Integration by parts has
/// already moved the derivative onto the test function.
pub fn assemble_weak_system(
    noisy: &Trajectory,
    monomials: &MonomialBasis,
    tests: &TestFunctionSet,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if noisy.state_count() != monomials.state_count() {
        return Err(Error::DimensionMismatch {
            what: "weak system assembly",
            left: monomials.state_count(),
            right: noisy.state_count(),
        });
    }
    let dt = noisy.dt();
    if 2.0 * tests.radius < 3.0 * dt {
        return Err(Error::InvalidConfig(format!(
            "test support ({} s) narrower than 3 samples",
            2.0 * tests.radius
        )));
    }
    let theta = basis::evaluate_library(monomials, noisy)?;
    let n = noisy.len();
    let l_count = tests.len();
    let p = monomials.len();
    let m = noisy.state_count();
    let times = noisy.times();

    let mut b = DMatrix::zeros(l_count, m);
    let mut h = DMatrix::zeros(l_count, p);
    for l in 0..l_count {
        // supports are compact; only touch samples inside
        let lo = ((tests.centers[l] - tests.radius) / dt).floor().max(0.0) as usize;
        let hi = (((tests.centers[l] + tests.radius) / dt).ceil() as usize).min(n - 1);
        for i in lo..=hi {
            let w = tests.value(l, times[i]) * dt;
            let wd = tests.derivative(l, times[i]) * dt;
            for k in 0..m {
                b[(l, k)] -= wd * noisy.values()[(i, k)];
            }
            if w != 0.0 {
                for j in 0..p {
                    h[(l, j)] += w * theta[(i, j)];
                }
            }
        }
    }
    Ok((b, h))
}

/// Weak-form equation discovery: assemble the weak system per state, then
/// select sparse coefficients with the capped-threshold scan.
pub fn wsindy_discover(
    noisy: &Trajectory,
    monomials: &MonomialBasis,
    tests: &TestFunctionSet,
    lambda_grid: &[f64],
) -> Result<DMatrix<f64>> {
    let (b, h) = assemble_weak_system(noisy, monomials, tests)?;
    let m = noisy.state_count();
    let mut coeffs = DMatrix::zeros(m, monomials.len());
    for k in 0..m {
        let rhs = b.column(k).clone_owned();
        if rhs.norm() == 0.0 {
            continue;
        }
        let (c, _) = mstls_select(&h, &rhs, lambda_grid)?;
        coeffs.row_mut(k).copy_from(&c.transpose());
    }
    Ok(coeffs)
}

/// Default threshold grid for the selection scan.
pub fn default_lambda_grid() -> Vec<f64> {
    (0..50)
        .map(|i| 10.0_f64.powf(-4.0 + 4.0 * i as f64 / 49.0))
        .collect()
}
