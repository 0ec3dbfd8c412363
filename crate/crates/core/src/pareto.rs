//! L-curve corner search by golden-section refinement on the log-log
//! trade-off curve, with three-point Menger curvature.

use crate::error::{Error, Result};

/// One evaluated point of the trade-off curve.
#[derive(Debug, Clone, Copy)]
pub struct ParetoCurvePoint {
    pub lambda: f64,
    /// Regularization residual, e.g. ||c(lambda)||.
    pub reg_residual: f64,
    /// Solution residual, e.g. ||A c(lambda) - b||.
    pub sol_residual: f64,
}

/// Search outcome with the evaluation trace.
#[derive(Debug, Clone)]
pub struct CornerResult {
    pub lambda_corner: f64,
    pub curvature: f64,
    /// True when the curve showed no positive-curvature corner anywhere.
    pub no_corner: bool,
    pub trace: Vec<ParetoCurvePoint>,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;
// curvature below this (in log10-log10 coordinates) counts as a straight line
const FLAT_CURVATURE: f64 = 1e-6;

fn log_point(p: &ParetoCurvePoint) -> Result<(f64, f64)> {
    if !p.reg_residual.is_finite() || !p.sol_residual.is_finite() {
        return Err(Error::NonFiniteResidual { lambda: p.lambda });
    }
    // zero residuals are clamped so the log transform stays defined
    let x = p.sol_residual.max(1e-300).log10();
    let y = p.reg_residual.max(1e-300).log10();
    Ok((x, y))
}

/// Signed Menger curvature of three points in the log-log plane. The sign
/// convention makes a genuine L-corner (steep branch turning flat with
/// increasing lambda) positive.
fn menger_curvature(p1: (f64, f64), p2: (f64, f64), p3: (f64, f64)) -> f64 {
    let cross = (p2.0 - p1.0) * (p3.1 - p1.1) - (p2.1 - p1.1) * (p3.0 - p1.0);
    let d12 = ((p2.0 - p1.0).powi(2) + (p2.1 - p1.1).powi(2)).sqrt();
    let d23 = ((p3.0 - p2.0).powi(2) + (p3.1 - p2.1).powi(2)).sqrt();
    let d13 = ((p3.0 - p1.0).powi(2) + (p3.1 - p1.1).powi(2)).sqrt();
    let denom = d12 * d23 * d13;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * cross / denom
    }
}

/// Golden-section corner search over `[lambda_min, lambda_max]`.
///
/// Keeps four log-spaced abscissas, computes the Menger curvature of the
/// two interior triples, and shrinks the bracket toward the larger one.
/// Stops after `max_evals` curve evaluations or once the bracket narrows
/// to 1% relative width, returning the highest-curvature point seen.
pub fn corner_search<F>(
    mut evaluate: F,
    lambda_min: f64,
    lambda_max: f64,
    max_evals: usize,
) -> Result<CornerResult>
where
    F: FnMut(f64) -> Result<ParetoCurvePoint>,
{
    if !(lambda_min > 0.0) || !(lambda_max > lambda_min) {
        return Err(Error::InvalidConfig(format!(
            "need 0 < lambda_min < lambda_max, got [{lambda_min}, {lambda_max}]"
        )));
    }
    let mut trace: Vec<ParetoCurvePoint> = Vec::new();
    let mut evals = 0usize;

    let mut eval_log = |lambda: f64, trace: &mut Vec<ParetoCurvePoint>, evals: &mut usize| {
        let point = evaluate(lambda)?;
        trace.push(point);
        *evals += 1;
        log_point(&point)
    };

    // bracket in log10(lambda)
    let mut x1 = lambda_min.log10();
    let mut x4 = lambda_max.log10();
    let mut x2 = x4 - GOLDEN * (x4 - x1);
    let mut x3 = x1 + GOLDEN * (x4 - x1);
    let mut p1 = eval_log(10f64.powf(x1), &mut trace, &mut evals)?;
    let mut p2 = eval_log(10f64.powf(x2), &mut trace, &mut evals)?;
    let mut p3 = eval_log(10f64.powf(x3), &mut trace, &mut evals)?;
    let mut p4 = eval_log(10f64.powf(x4), &mut trace, &mut evals)?;

    let mut best_lambda = 10f64.powf(x2);
    let mut best_curvature = f64::NEG_INFINITY;
    let consider = |lambda: f64, k: f64, best_l: &mut f64, best_k: &mut f64| {
        if k > *best_k {
            *best_k = k;
            *best_l = lambda;
        }
    };

    while evals < max_evals && (x4 - x1) > (1.01f64).log10() {
        let k2 = menger_curvature(p1, p2, p3);
        let k3 = menger_curvature(p2, p3, p4);
        consider(10f64.powf(x2), k2, &mut best_lambda, &mut best_curvature);
        consider(10f64.powf(x3), k3, &mut best_lambda, &mut best_curvature);
        if k2 > k3 {
            // corner on the left: drop x4
            x4 = x3;
            p4 = p3;
            x3 = x2;
            p3 = p2;
            x2 = x4 - GOLDEN * (x4 - x1);
            p2 = eval_log(10f64.powf(x2), &mut trace, &mut evals)?;
        } else {
            x1 = x2;
            p1 = p2;
            x2 = x3;
            p2 = p3;
            x3 = x1 + GOLDEN * (x4 - x1);
            p3 = eval_log(10f64.powf(x3), &mut trace, &mut evals)?;
        }
    }
    let k2 = menger_curvature(p1, p2, p3);
    let k3 = menger_curvature(p2, p3, p4);
    consider(10f64.powf(x2), k2, &mut best_lambda, &mut best_curvature);
    consider(10f64.powf(x3), k3, &mut best_lambda, &mut best_curvature);

    let no_corner = best_curvature <= FLAT_CURVATURE;
    Ok(CornerResult {
        lambda_corner: if no_corner { lambda_min } else { best_lambda },
        curvature: best_curvature,
        no_corner,
        trace,
    })
}

/// Data-matching radius selection: corner search restricted to within an
/// order of magnitude of the theory value. Falls back to the theory value
/// when the curve has no corner.
pub fn gamma_pareto<F>(evaluate: F, gamma_exp: f64, max_evals: usize) -> Result<f64>
where
    F: FnMut(f64) -> Result<ParetoCurvePoint>,
{
    if !(gamma_exp > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "gamma_exp must be positive, got {gamma_exp}"
        )));
    }
    let result = corner_search(evaluate, 0.1 * gamma_exp, 10.0 * gamma_exp, max_evals)?;
    if result.no_corner {
        Ok(gamma_exp)
    } else {
        Ok(result.lambda_corner)
    }
}
