//! Multivariate monomial libraries and their noise-aware estimators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::TrapezoidMatrix;
use crate::systems::Trajectory;

/// Ordered multi-index set for monomials of `m` states up to total degree `d`.
///
/// The order is graded (total degree nondecreasing) and descending
/// lexicographic within a degree, so `m=2, d=2` enumerates
/// `[0,0], [1,0], [0,1], [2,0], [1,1], [0,2]`.
#[derive(Debug, Clone)]
pub struct MonomialBasis {
    m: usize,
    d: u32,
    indices: Vec<Vec<u32>>,
    // (earlier column, state index) such that alpha_j = alpha_parent + e_state
    parent: Vec<Option<(usize, usize)>>,
    // for each j, all k with alpha_k < alpha_j componentwise
    strictly_below: Vec<Vec<usize>>,
}

impl MonomialBasis {
    pub fn new(m: usize, d: u32) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidDimension {
                what: "monomial basis state count",
                need: 1,
                got: 0,
            });
        }
        let mut indices = Vec::new();
        for deg in 0..=d {
            let mut level = Vec::new();
            enumerate_degree(m, deg, &mut Vec::with_capacity(m), &mut level);
            indices.extend(level);
        }

        let lookup = |alpha: &[u32]| indices.iter().position(|a| a == alpha);
        let mut parent = Vec::with_capacity(indices.len());
        for alpha in &indices {
            let link = alpha.iter().position(|&e| e > 0).map(|k| {
                let mut reduced = alpha.clone();
                reduced[k] -= 1;
                (lookup(&reduced).expect("reduced index enumerated"), k)
            });
            parent.push(link);
        }

        let mut strictly_below = Vec::with_capacity(indices.len());
        for (j, aj) in indices.iter().enumerate() {
            let below = indices
                .iter()
                .enumerate()
                .filter(|(k, ak)| *k != j && ak.iter().zip(aj).all(|(a, b)| a <= b))
                .map(|(k, _)| k)
                .collect();
            strictly_below.push(below);
        }

        Ok(Self {
            m,
            d,
            indices,
            parent,
            strictly_below,
        })
    }

    pub fn state_count(&self) -> usize {
        self.m
    }

    pub fn max_degree(&self) -> u32 {
        self.d
    }

    /// Number of basis terms, p = binomial(m + d, d).
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[Vec<u32>] {
        &self.indices
    }

    pub fn index_of(&self, alpha: &[u32]) -> Option<usize> {
        self.indices.iter().position(|a| a == alpha)
    }

    /// Human-readable term like `1`, `u1^2*u3`.
    pub fn term_name(&self, j: usize) -> String {
        let alpha = &self.indices[j];
        let parts: Vec<String> = alpha
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(k, &e)| {
                if e == 1 {
                    format!("u{}", k + 1)
                } else {
                    format!("u{}^{}", k + 1, e)
                }
            })
            .collect();
        if parts.is_empty() {
            "1".to_string()
        } else {
            parts.join("*")
        }
    }

    /// Evaluates every basis term at one state sample into `row`.
    pub fn eval_row(&self, state: &[f64], row: &mut [f64]) {
        debug_assert_eq!(state.len(), self.m);
        debug_assert_eq!(row.len(), self.indices.len());
        for j in 0..self.indices.len() {
            row[j] = match self.parent[j] {
                None => 1.0,
                Some((pj, k)) => row[pj] * state[k],
            };
        }
    }
}

fn enumerate_degree(m: usize, deg: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if m == 1 {
        prefix.push(deg);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    // descending lexicographic: largest leading exponent first
    for e in (0..=deg).rev() {
        prefix.push(e);
        enumerate_degree(m - 1, deg - e, prefix, out);
        prefix.pop();
    }
}

/// Enumerates the monomial basis for `m` states up to total degree `d`.
pub fn enumerate_basis(m: usize, d: u32) -> Result<MonomialBasis> {
    MonomialBasis::new(m, d)
}

/// Library matrix Theta: row per sample, column per basis term.
pub fn evaluate_library(basis: &MonomialBasis, states: &Trajectory) -> Result<DMatrix<f64>> {
    if states.state_count() != basis.state_count() {
        return Err(Error::DimensionMismatch {
            what: "library evaluation",
            left: basis.state_count(),
            right: states.state_count(),
        });
    }
    Ok(evaluate_library_values(basis, states.values()))
}

/// Library evaluation on a raw N x m sample matrix.
pub fn evaluate_library_values(basis: &MonomialBasis, values: &DMatrix<f64>) -> DMatrix<f64> {
    let n = values.nrows();
    let p = basis.len();
    let mut theta = DMatrix::zeros(n, p);
    let mut state = vec![0.0; basis.state_count()];
    let mut row = vec![0.0; p];
    for i in 0..n {
        for k in 0..basis.state_count() {
            state[k] = values[(i, k)];
        }
        basis.eval_row(&state, &mut row);
        for j in 0..p {
            theta[(i, j)] = row[j];
        }
    }
    theta
}

/// E[eps^alpha] for centered Gaussian noise with shared standard deviation.
pub fn gaussian_moment(alpha: &[u32], sigma: f64) -> f64 {
    let sigmas = vec![sigma; alpha.len()];
    gaussian_moment_per_state(alpha, &sigmas)
}

/// E[eps^alpha] with a per-state standard deviation vector.
///
/// Zero when any exponent is odd; otherwise the product over even positive
/// exponents of sigma_k^{alpha_k} (alpha_k - 1)!!.
pub fn gaussian_moment_per_state(alpha: &[u32], sigmas: &[f64]) -> f64 {
    debug_assert_eq!(alpha.len(), sigmas.len());
    let mut moment = 1.0;
    for (&e, &s) in alpha.iter().zip(sigmas) {
        if e == 0 {
            continue;
        }
        if e % 2 == 1 {
            return 0.0;
        }
        moment *= s.powi(e as i32) * double_factorial_odd(e - 1);
    }
    moment
}

/// (n)!! for odd n, i.e. 1*3*5*...*n; returns 1.0 for n = 0 never hit here.
fn double_factorial_odd(n: u32) -> f64 {
    let mut acc = 1.0;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    acc
}

/// Componentwise product of binomial coefficients binom(alpha_j, alpha_k).
fn multi_binomial(aj: &[u32], ak: &[u32]) -> f64 {
    aj.iter().zip(ak).map(|(&a, &b)| binomial(a, b)).product()
}

fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

/// Noise-centered library: each column is an unbiased estimate of the
/// corresponding true-state monomial. Reduces to `evaluate_library` at
/// sigma = 0.
pub fn evaluate_unbiased_library(
    basis: &MonomialBasis,
    noisy: &Trajectory,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let sigmas = vec![sigma; basis.state_count()];
    evaluate_unbiased_library_per_state(basis, noisy, &sigmas)
}

/// Noise-centered library with per-state noise levels.
pub fn evaluate_unbiased_library_per_state(
    basis: &MonomialBasis,
    noisy: &Trajectory,
    sigmas: &[f64],
) -> Result<DMatrix<f64>> {
    if noisy.state_count() != basis.state_count() {
        return Err(Error::DimensionMismatch {
            what: "unbiased library evaluation",
            left: basis.state_count(),
            right: noisy.state_count(),
        });
    }
    if sigmas.len() != basis.state_count() {
        return Err(Error::DimensionMismatch {
            what: "per-state sigma vector",
            left: basis.state_count(),
            right: sigmas.len(),
        });
    }
    Ok(evaluate_unbiased_library_values(
        basis,
        noisy.values(),
        sigmas,
    ))
}

pub fn evaluate_unbiased_library_values(
    basis: &MonomialBasis,
    values: &DMatrix<f64>,
    sigmas: &[f64],
) -> DMatrix<f64> {
    let raw = evaluate_library_values(basis, values);
    let p = basis.len();
    // correction[j][idx] = C_jk * M_{j \ k} for each k strictly below j
    let mut corrections: Vec<Vec<(usize, f64)>> = Vec::with_capacity(p);
    for j in 0..p {
        let aj = &basis.indices()[j];
        let terms = basis.strictly_below[j]
            .iter()
            .map(|&k| {
                let ak = &basis.indices()[k];
                let diff: Vec<u32> = aj.iter().zip(ak).map(|(a, b)| a - b).collect();
                (
                    k,
                    multi_binomial(aj, ak) * gaussian_moment_per_state(&diff, sigmas),
                )
            })
            .filter(|&(_, w)| w != 0.0)
            .collect();
        corrections.push(terms);
    }

    let n = raw.nrows();
    let mut hat = DMatrix::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            let mut v = raw[(i, j)];
            for &(k, w) in &corrections[j] {
                v -= w * hat[(i, k)];
            }
            hat[(i, j)] = v;
        }
    }
    hat
}

/// Integrated library Phi = [1 | T*Theta].
pub fn build_phi(theta: &DMatrix<f64>, trapezoid: &TrapezoidMatrix) -> Result<DMatrix<f64>> {
    let n = theta.nrows();
    let integrated = trapezoid.apply_matrix(theta)?;
    let mut phi = DMatrix::zeros(n, theta.ncols() + 1);
    phi.column_mut(0).fill(1.0);
    phi.view_mut((0, 1), (n, theta.ncols()))
        .copy_from(&integrated);
    Ok(phi)
}

/// Library matrices used throughout the pipeline.
#[derive(Debug, Clone)]
pub struct LibraryMatrices {
    pub theta: DMatrix<f64>,
    pub theta_hat: Option<DMatrix<f64>>,
    pub phi: DMatrix<f64>,
    pub sigma: f64,
}

impl LibraryMatrices {
    /// Builds Theta (and the centered Theta-hat when `sigma > 0`) from the
    /// given samples, plus the integrated matrix Phi from the centered
    /// variant when present.
    pub fn build(
        basis: &MonomialBasis,
        states: &Trajectory,
        trapezoid: &TrapezoidMatrix,
        sigma: f64,
        center: bool,
    ) -> Result<Self> {
        let theta = evaluate_library(basis, states)?;
        let theta_hat = if center {
            Some(evaluate_unbiased_library(basis, states, sigma)?)
        } else {
            None
        };
        let phi = build_phi(theta_hat.as_ref().unwrap_or(&theta), trapezoid)?;
        Ok(Self {
            theta,
            theta_hat,
            phi,
            sigma,
        })
    }
}

/// Plain Gramian estimate G-tilde = Theta^T Theta.
pub fn gramian_tilde(theta_tilde: &DMatrix<f64>) -> DMatrix<f64> {
    theta_tilde.transpose() * theta_tilde
}

/// Consistent Gramian estimate: the moment-corrected recursion applied to
/// the coupling of a smoothed library with noisy monomials. Returns N * H-hat
/// so that it is interchangeable with `gramian_tilde`.
pub fn gramian_consistent(
    theta_tilde: &DMatrix<f64>,
    noisy: &Trajectory,
    basis: &MonomialBasis,
    sigma: f64,
) -> Result<DMatrix<f64>> {
    let theta_noisy = evaluate_library(basis, noisy)?;
    if theta_tilde.nrows() != theta_noisy.nrows() {
        return Err(Error::DimensionMismatch {
            what: "consistent Gramian",
            left: theta_tilde.nrows(),
            right: theta_noisy.nrows(),
        });
    }
    let n = theta_tilde.nrows() as f64;
    let p = basis.len();
    let s = (theta_tilde.transpose() * &theta_noisy) / n;
    let sigmas = vec![sigma; basis.state_count()];

    let mut h = DMatrix::zeros(p, p);
    for k in 0..p {
        let ak = &basis.indices()[k];
        let mut col = DVector::from_column_slice(s.column(k).as_slice());
        for &l in &basis.strictly_below[k] {
            let al = &basis.indices()[l];
            let diff: Vec<u32> = ak.iter().zip(al).map(|(a, b)| a - b).collect();
            let w = multi_binomial(ak, al) * gaussian_moment_per_state(&diff, &sigmas);
            if w != 0.0 {
                col -= h.column(l) * w;
            }
        }
        h.set_column(k, &col);
    }
    Ok(h * n)
}
