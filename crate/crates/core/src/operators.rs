//! Discrete integration, finite differencing, and SVD-backed projection.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative singular-value cutoff shared by all rank-tolerant routines.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;

/// Lower-triangular cumulative trapezoid operator on a uniform grid.
///
/// Row 1 is identically zero; row `i >= 2` holds `(dt/2) * [1, 2, ..., 2, 1]`
/// over the first `i` columns. Applied to samples of a derivative it returns
/// the cumulative integral from the first grid point.
#[derive(Debug, Clone)]
pub struct TrapezoidMatrix {
    n: usize,
    dt: f64,
}

impl TrapezoidMatrix {
    pub fn new(n: usize, t_end: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidDimension {
                what: "trapezoid operator",
                need: 2,
                got: n,
            });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        Ok(Self {
            n,
            dt: t_end / (n - 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Cumulative trapezoid sum in O(n).
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "trapezoid apply",
                left: self.n,
                right: x.len(),
            });
        }
        let mut out = DVector::zeros(self.n);
        let half = self.dt / 2.0;
        for i in 1..self.n {
            out[i] = out[i - 1] + half * (x[i - 1] + x[i]);
        }
        Ok(out)
    }

    /// Transpose apply in O(n), via suffix sums of the input.
    pub fn apply_transpose(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        if y.len() != self.n {
            return Err(Error::DimensionMismatch {
                what: "trapezoid transpose apply",
                left: self.n,
                right: y.len(),
            });
        }
        let half = self.dt / 2.0;
        // suffix[k] = sum_{i >= k} y_i, for i >= 1 (0-indexed rows; row 0 of T is zero)
        let mut suffix = vec![0.0; self.n + 1];
        for k in (1..self.n).rev() {
            suffix[k] = suffix[k + 1] + y[k];
        }
        // row k of T^T: weight dt/2 at i = k, then 2*(dt/2) for every i > k
        let mut out = DVector::zeros(self.n);
        out[0] = half * suffix[1];
        for k in 1..self.n {
            out[k] = half * (y[k] + 2.0 * suffix[k + 1]);
        }
        Ok(out)
    }

    /// Applies T to every column of `m`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if m.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                what: "trapezoid matrix apply",
                left: self.n,
                right: m.nrows(),
            });
        }
        let mut out = DMatrix::zeros(self.n, m.ncols());
        let half = self.dt / 2.0;
        for j in 0..m.ncols() {
            let mut acc = 0.0;
            for i in 1..self.n {
                acc += half * (m[(i - 1, j)] + m[(i, j)]);
                out[(i, j)] = acc;
            }
        }
        Ok(out)
    }

    /// Dense materialization, for small-n tests and normal-equation assembly.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(self.n, self.n);
        let half = self.dt / 2.0;
        for i in 1..self.n {
            t[(i, 0)] = half;
            for k in 1..i {
                t[(i, k)] = 2.0 * half;
            }
            t[(i, i)] = half;
        }
        t
    }

    /// Gram matrix T^T T filled from the closed form of the row overlaps.
    ///
    /// For 1-indexed columns k <= l (both >= 2):
    ///   (T^T T)_{kl} = dt^2 (N - l + 1/2), off-diagonal
    ///   (T^T T)_{kk} = dt^2 (N - k + 1/4)
    /// and the first column/row carries the half-weight boundary terms.
    pub fn gram(&self) -> DMatrix<f64> {
        let n = self.n;
        let dt2 = self.dt * self.dt;
        let mut g = DMatrix::zeros(n, n);
        // entries indexed 0-based; formulas below use 1-based k, l
        g[(0, 0)] = dt2 * (n as f64 - 1.0) / 4.0;
        for l in 2..=n {
            let v = dt2 * ((n - l) as f64 / 2.0 + 0.25);
            g[(0, l - 1)] = v;
            g[(l - 1, 0)] = v;
        }
        for k in 2..=n {
            g[(k - 1, k - 1)] = dt2 * ((n - k) as f64 + 0.25);
            for l in (k + 1)..=n {
                let v = dt2 * ((n - l) as f64 + 0.5);
                g[(k - 1, l - 1)] = v;
                g[(l - 1, k - 1)] = v;
            }
        }
        g
    }
}

/// Stacked smoothing penalty [I; D1; D2] of shape (3n-3) x n.
///
/// D1 is the forward first difference scaled by 1/dt, D2 the centered second
/// difference scaled by 1/dt^2.
#[derive(Debug, Clone)]
pub struct DifferenceStack {
    n: usize,
    dt: f64,
}

impl DifferenceStack {
    pub fn new(n: usize, t_end: f64) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidDimension {
                what: "difference stack",
                need: 3,
                got: n,
            });
        }
        if !(t_end > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "t_end must be positive, got {t_end}"
            )));
        }
        Ok(Self {
            n,
            dt: t_end / (n - 1) as f64,
        })
    }

    pub fn input_len(&self) -> usize {
        self.n
    }

    pub fn output_len(&self) -> usize {
        3 * self.n - 3
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// First-difference block alone.
    pub fn apply_d1(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let mut out = DVector::zeros(self.n - 1);
        for i in 0..self.n - 1 {
            out[i] = (x[i + 1] - x[i]) / self.dt;
        }
        Ok(out)
    }

    /// Second-difference block alone.
    pub fn apply_d2(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let dt2 = self.dt * self.dt;
        let mut out = DVector::zeros(self.n - 2);
        for i in 0..self.n - 2 {
            out[i] = (x[i] - 2.0 * x[i + 1] + x[i + 2]) / dt2;
        }
        Ok(out)
    }

    /// Full stacked apply [x; D1 x; D2 x].
    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(x.len())?;
        let n = self.n;
        let mut out = DVector::zeros(self.output_len());
        out.rows_mut(0, n).copy_from(x);
        out.rows_mut(n, n - 1).copy_from(&self.apply_d1(x)?);
        out.rows_mut(2 * n - 1, n - 2).copy_from(&self.apply_d2(x)?);
        Ok(out)
    }

    /// Nonzero entries of row `r` of the stacked operator as (col, value).
    pub fn row_entries(&self, r: usize) -> Vec<(usize, f64)> {
        let n = self.n;
        if r < n {
            vec![(r, 1.0)]
        } else if r < 2 * n - 1 {
            let i = r - n;
            vec![(i, -1.0 / self.dt), (i + 1, 1.0 / self.dt)]
        } else {
            let i = r - (2 * n - 1);
            let dt2 = self.dt * self.dt;
            vec![(i, 1.0 / dt2), (i + 1, -2.0 / dt2), (i + 2, 1.0 / dt2)]
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.output_len(), self.n);
        for r in 0..self.output_len() {
            for (c, v) in self.row_entries(r) {
                d[(r, c)] = v;
            }
        }
        d
    }

    /// Gram matrix D^T D = I + D1^T D1 + D2^T D2, assembled row by row.
    pub fn gram(&self) -> DMatrix<f64> {
        let mut g = DMatrix::zeros(self.n, self.n);
        for r in 0..self.output_len() {
            let entries = self.row_entries(r);
            for &(ci, vi) in &entries {
                for &(cj, vj) in &entries {
                    g[(ci, cj)] += vi * vj;
                }
            }
        }
        g
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.n {
            return Err(Error::DimensionMismatch {
                what: "difference apply",
                left: self.n,
                right: len,
            });
        }
        Ok(())
    }
}

/// Orthogonal projector onto the column space of a matrix, built from the
/// left singular vectors whose singular value exceeds `rank_tol * sigma_max`.
#[derive(Debug, Clone)]
pub struct Projector {
    basis: DMatrix<f64>,
    rank: usize,
}

impl Projector {
    pub fn from_matrix(source: &DMatrix<f64>, rank_tol: f64) -> Self {
        let svd = source.clone().svd(true, false);
        let u = svd.u.expect("svd requested u");
        let sigma = svd.singular_values;
        let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
        let cutoff = rank_tol * smax;
        let kept: Vec<usize> = (0..sigma.len())
            .filter(|&i| sigma[i] > cutoff && sigma[i] > 0.0)
            .collect();
        let mut basis = DMatrix::zeros(source.nrows(), kept.len());
        for (dst, &src) in kept.iter().enumerate() {
            basis.set_column(dst, &u.column(src));
        }
        Self {
            rank: kept.len(),
            basis,
        }
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// P x = U_r (U_r^T x).
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.rank == 0 {
            return DVector::zeros(x.len());
        }
        &self.basis * (self.basis.transpose() * x)
    }

    /// Applies the projector to every column of `m`.
    pub fn apply_matrix(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank == 0 {
            return DMatrix::zeros(m.nrows(), m.ncols());
        }
        &self.basis * (self.basis.transpose() * m)
    }

    /// Dense P = U_r U_r^T, for tests on small problems.
    pub fn to_dense(&self, n: usize) -> DMatrix<f64> {
        if self.rank == 0 {
            return DMatrix::zeros(n, n);
        }
        &self.basis * self.basis.transpose()
    }
}

/// Projects `x` onto the column space of `source` (truncated-SVD projector).
pub fn project(source: &DMatrix<f64>, x: &DVector<f64>, rank_tol: f64) -> Result<DVector<f64>> {
    if source.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "project",
            left: source.nrows(),
            right: x.len(),
        });
    }
    Ok(Projector::from_matrix(source, rank_tol).apply(x))
}

/// Minimum-norm least-squares solve `source^dagger x` via truncated SVD.
pub fn pseudoinverse_apply(
    source: &DMatrix<f64>,
    x: &DVector<f64>,
    rank_tol: f64,
) -> Result<DVector<f64>> {
    if source.nrows() != x.len() {
        return Err(Error::DimensionMismatch {
            what: "pseudoinverse apply",
            left: source.nrows(),
            right: x.len(),
        });
    }
    let svd = source.clone().svd(true, true);
    let u = svd.u.as_ref().expect("svd requested u");
    let vt = svd.v_t.as_ref().expect("svd requested v_t");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rank_tol * smax;
    let mut coeffs = u.transpose() * x;
    for i in 0..sigma.len() {
        if sigma[i] > cutoff && sigma[i] > 0.0 {
            coeffs[i] /= sigma[i];
        } else {
            coeffs[i] = 0.0;
        }
    }
    Ok(vt.transpose() * coeffs)
}

/// Dense truncated-SVD pseudoinverse.
pub fn pseudoinverse(source: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let svd = source.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let vt = svd.v_t.expect("svd requested v_t");
    let sigma = &svd.singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rank_tol * smax;
    let mut scaled = vt.transpose();
    for i in 0..sigma.len() {
        let factor = if sigma[i] > cutoff && sigma[i] > 0.0 {
            1.0 / sigma[i]
        } else {
            0.0
        };
        scaled.column_mut(i).scale_mut(factor);
    }
    scaled * u.transpose()
}

/// Largest singular value of `m` (spectral norm).
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Norm of the pseudoinverse: reciprocal of the smallest retained singular value.
pub fn pseudoinverse_norm(m: &DMatrix<f64>, rank_tol: f64) -> f64 {
    let sigma = m.clone().svd(false, false).singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rank_tol * smax;
    let smin = sigma
        .iter()
        .cloned()
        .filter(|&s| s > cutoff && s > 0.0)
        .fold(f64::INFINITY, f64::min);
    if smin.is_finite() {
        1.0 / smin
    } else {
        0.0
    }
}
