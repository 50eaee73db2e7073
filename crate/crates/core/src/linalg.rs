//! Dense real and complex matrix kernel.
//!
//! Thin layer over `nalgebra` that adds the decompositions the estimation
//! code needs: sorted Hermitian eigendecompositions, PSD square roots,
//! matrix absolute values, the real canonical form of antisymmetric
//! matrices and unitary exponentials.
//!
//! All tolerances use the max-absolute-entry norm ([`max_abs`]). Eigenvalues
//! within [`EIGEN_DUST`]`·max(1, ‖A‖)` of zero are treated as zero.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
pub type RMatrix = DMatrix<f64>;

/// Relative threshold under which eigenvalues count as zero.
pub const EIGEN_DUST: f64 = 1e-10;

/// Relative asymmetry accepted by the Hermitian routines.
pub const HERMITIAN_TOL: f64 = 1e-12;

pub const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Max-absolute-entry norm, used for every tolerance in the crate.
pub fn max_abs<T>(m: &DMatrix<T>) -> f64
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    m.iter().fold(0.0, |acc, x| acc.max(x.modulus()))
}

/// Absolute eigen-dust threshold for a matrix of norm `norm`.
pub fn dust(norm: f64) -> f64 {
    EIGEN_DUST * norm.max(1.0)
}

fn check_finite<T>(m: &DMatrix<T>) -> Result<()>
where
    T: nalgebra::ComplexField<RealField = f64> + Copy,
{
    if m.iter().all(|x| x.modulus().is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_square<T: nalgebra::Scalar>(m: &DMatrix<T>) -> Result<()> {
    if m.nrows() == m.ncols() {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!(
            "expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )))
    }
}

/// Real symmetric matrix. Symmetry is exact: the input is symmetrized on build.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RSymMatrix(RMatrix);

impl RSymMatrix {
    pub fn new(m: RMatrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self(sym))
    }

    pub fn identity(n: usize) -> Self {
        Self(RMatrix::identity(n, n))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(RMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(
                "matrix rows must form a non-empty square".into(),
            ));
        }
        Self::new(RMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.0
    }

    pub fn into_inner(self) -> RMatrix {
        self.0
    }

    /// Eigenvalues ascending with matching eigenvector columns.
    pub fn eig(&self) -> (Vec<f64>, RMatrix) {
        symmetric_eig(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eig().0[0]
    }

    /// True when the smallest eigenvalue is above the eigen-dust threshold.
    pub fn is_positive_definite(&self) -> bool {
        self.min_eigenvalue() > dust(max_abs(&self.0))
    }

    pub fn is_psd(&self) -> bool {
        self.min_eigenvalue() >= -dust(max_abs(&self.0))
    }

    /// Inverse of a positive definite matrix.
    pub fn inverse_pd(&self) -> Result<RSymMatrix> {
        let (vals, vecs) = self.eig();
        let tol = dust(max_abs(&self.0));
        if vals[0] <= tol {
            return Err(Error::NotPsd {
                min_eigenvalue: vals[0],
            });
        }
        Ok(Self::spectral(&vals, &vecs, |x| 1.0 / x))
    }

    /// `f(A)` through the spectral decomposition.
    fn spectral(vals: &[f64], vecs: &RMatrix, f: impl Fn(f64) -> f64) -> RSymMatrix {
        let d = DVector::from_iterator(vals.len(), vals.iter().map(|&x| f(x)));
        let m = vecs * RMatrix::from_diagonal(&d) * vecs.transpose();
        RSymMatrix((&m + m.transpose()) * 0.5)
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn congruence(&self, a: &RMatrix) -> RSymMatrix {
        let m = a.transpose() * &self.0 * a;
        RSymMatrix((&m + m.transpose()) * 0.5)
    }
}

impl Deref for RSymMatrix {
    type Target = RMatrix;
    fn deref(&self) -> &RMatrix {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for RSymMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<RSymMatrix> for Vec<Vec<f64>> {
    fn from(m: RSymMatrix) -> Self {
        m.to_rows()
    }
}

/// Real antisymmetric matrix with an exactly zero diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct RAntiMatrix(RMatrix);

impl RAntiMatrix {
    pub fn new(m: RMatrix) -> Result<Self> {
        check_square(&m)?;
        check_finite(&m)?;
        let mut a = (&m - m.transpose()) * 0.5;
        for i in 0..a.nrows() {
            a[(i, i)] = 0.0;
        }
        Ok(Self(a))
    }

    pub fn zeros(n: usize) -> Self {
        Self(RMatrix::zeros(n, n))
    }

    /// Direct sum of 2x2 blocks `[[0, -b], [b, 0]]`, padded with zeros to `n`.
    pub fn canonical(betas: &[f64], n: usize) -> Self {
        let mut a = RMatrix::zeros(n, n);
        for (k, &b) in betas.iter().enumerate() {
            a[(2 * k, 2 * k + 1)] = -b;
            a[(2 * k + 1, 2 * k)] = b;
        }
        Self(a)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &RMatrix {
        &self.0
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows())
            .map(|i| self.0.row(i).iter().copied().collect())
            .collect()
    }
}

impl Deref for RAntiMatrix {
    type Target = RMatrix;
    fn deref(&self) -> &RMatrix {
        &self.0
    }
}

impl TryFrom<Vec<Vec<f64>>> for RAntiMatrix {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(
                "matrix rows must form a non-empty square".into(),
            ));
        }
        Self::new(RMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<RAntiMatrix> for Vec<Vec<f64>> {
    fn from(m: RAntiMatrix) -> Self {
        m.to_rows()
    }
}

/// Real symmetric eigendecomposition, eigenvalues ascending.
pub fn symmetric_eig(a: &RMatrix) -> (Vec<f64>, RMatrix) {
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = RMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    (vals, vecs)
}

/// Eigendecomposition of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    /// Ascending.
    pub values: Vec<f64>,
    /// Unitary; column `k` belongs to `values[k]`.
    pub vectors: CMatrix,
}

impl HermitianEigen {
    /// `U f(Λ) U*`.
    pub fn map(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (k, &v) in self.values.iter().enumerate() {
            let fk = f(v);
            for r in 0..n {
                scaled[(r, k)] *= fk;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_asymmetry(a: &CMatrix) -> f64 {
    max_abs(&(a - a.adjoint()))
}

pub fn hermitian_eig(a: &CMatrix) -> Result<HermitianEigen> {
    check_square(a)?;
    check_finite(a)?;
    let asym = hermitian_asymmetry(a);
    if asym > HERMITIAN_TOL * max_abs(a) {
        return Err(Error::NonHermitian { asymmetry: asym });
    }
    let h = (a + a.adjoint()).scale(0.5);
    let eig = h.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(a.nrows(), order.len(), |r, c| {
        eig.eigenvectors[(r, order[c])]
    });
    Ok(HermitianEigen { values, vectors })
}

/// Square root of a real symmetric PSD matrix. Negative eigen-dust is clipped.
pub fn sqrt_psd(a: &RSymMatrix) -> Result<RSymMatrix> {
    let (vals, vecs) = a.eig();
    let tol = dust(max_abs(a));
    if vals[0] < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: vals[0],
        });
    }
    Ok(RSymMatrix::spectral(&vals, &vecs, |x| x.max(0.0).sqrt()))
}

/// Inverse square root of a real symmetric positive definite matrix.
pub fn inv_sqrt_pd(a: &RSymMatrix) -> Result<RSymMatrix> {
    let (vals, vecs) = a.eig();
    if vals[0] <= dust(max_abs(a)) {
        return Err(Error::NotPsd {
            min_eigenvalue: vals[0],
        });
    }
    Ok(RSymMatrix::spectral(&vals, &vecs, |x| 1.0 / x.sqrt()))
}

/// Square root of a Hermitian PSD matrix. Negative eigen-dust is clipped.
pub fn sqrt_psd_hermitian(a: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eig(a)?;
    let tol = dust(max_abs(a));
    if eig.values[0] < -tol {
        return Err(Error::NotPsd {
            min_eigenvalue: eig.values[0],
        });
    }
    let s = eig.map(|x| Complex64::new(x.max(0.0).sqrt(), 0.0));
    Ok((&s + s.adjoint()).scale(0.5))
}

/// `|A| = (A Aᵀ)^{1/2}` for a real square matrix, computed from the SVD so
/// small singular values keep full precision.
pub fn abs_sym(a: &RMatrix) -> Result<RSymMatrix> {
    check_square(a)?;
    check_finite(a)?;
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let m = &u * RMatrix::from_diagonal(&svd.singular_values) * u.transpose();
    RSymMatrix::new(m)
}

/// `|A| = (A A*)^{1/2}` for a complex square matrix.
pub fn abs_complex(a: &CMatrix) -> Result<CMatrix> {
    check_square(a)?;
    check_finite(a)?;
    let svd = a.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let s = svd.singular_values.map(|x| Complex64::new(x, 0.0));
    let m = &u * CMatrix::from_diagonal(&s) * u.adjoint();
    Ok((&m + m.adjoint()).scale(0.5))
}

/// Sum of singular values of a real square matrix, i.e. `Tr |A|`.
pub fn trace_abs(a: &RMatrix) -> f64 {
    a.clone().singular_values().iter().sum()
}

/// Real canonical form of an antisymmetric matrix under orthogonal congruence.
#[derive(Debug, Clone)]
pub struct AntisymCanonical {
    /// Columns `(2k, 2k+1)` span the `k`-th rotation block; the rest span the kernel.
    pub q: RMatrix,
    /// Block magnitudes, non-negative and descending.
    pub betas: Vec<f64>,
    pub zero_count: usize,
}

impl AntisymCanonical {
    pub fn canonical_matrix(&self) -> RAntiMatrix {
        RAntiMatrix::canonical(&self.betas, self.q.nrows())
    }
}

/// Orthogonal `Q` with `QᵀAQ = ⊕ [[0, -β_j], [β_j, 0]] ⊕ 0`.
///
/// Works on the symmetric PSD matrix `AᵀA = -A²`: each eigenvector `u`
/// with `‖Au‖ = β > 0` pairs with `v = Au/β`, and `uᵀAv = -β` holds exactly.
pub fn antisym_canonical(a: &RAntiMatrix) -> Result<AntisymCanonical> {
    let n = a.dim();
    let norm = max_abs(a);
    let zero_tol = dust(norm);
    let s = a.transpose() * a.matrix();
    let (_, vecs) = symmetric_eig(&s);

    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut pairs: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
    let mut kernel: Vec<DVector<f64>> = Vec::new();

    let orthogonalize = |v: &mut DVector<f64>, against: &[DVector<f64>]| {
        for _ in 0..2 {
            for b in against {
                let c = b.dot(v);
                v.axpy(-c, b, 1.0);
            }
        }
    };

    // Largest eigenvalues first.
    for k in (0..n).rev() {
        let mut u = vecs.column(k).into_owned();
        orthogonalize(&mut u, &basis);
        let nu = u.norm();
        if nu < 1e-6 {
            continue;
        }
        u /= nu;
        let au = a.matrix() * &u;
        let beta = au.norm();
        if beta <= zero_tol {
            basis.push(u.clone());
            kernel.push(u);
            continue;
        }
        let mut v = au / beta;
        orthogonalize(&mut v, &basis);
        v /= v.norm();
        basis.push(u.clone());
        basis.push(v.clone());
        pairs.push((beta, u, v));
    }
    // Complete the basis if vectors were lost to near-degenerate clusters.
    for j in 0..n {
        if basis.len() == n {
            break;
        }
        let mut e = DVector::<f64>::zeros(n);
        e[j] = 1.0;
        orthogonalize(&mut e, &basis);
        let ne = e.norm();
        if ne > 1e-6 {
            e /= ne;
            let ae = a.matrix() * &e;
            if ae.norm() <= zero_tol {
                basis.push(e.clone());
                kernel.push(e);
            } else {
                let beta = ae.norm();
                let mut v = ae / beta;
                orthogonalize(&mut v, &basis);
                v /= v.norm();
                basis.push(e.clone());
                basis.push(v.clone());
                pairs.push((beta, e, v));
            }
        }
    }

    let lead = |u: &DVector<f64>| -> usize {
        u.iter().position(|x| x.abs() > 1e-8).unwrap_or(usize::MAX)
    };
    // Descending β; ties broken by the position of the first significant
    // component so the output is reproducible.
    pairs.sort_by(|x, y| {
        if (x.0 - y.0).abs() <= 1e-9 * norm.max(1.0) {
            lead(&x.1).cmp(&lead(&y.1))
        } else {
            y.0.total_cmp(&x.0)
        }
    });
    kernel.sort_by_key(|u| lead(u));

    let mut q = RMatrix::zeros(n, n);
    let mut col = 0;
    let mut betas = Vec::with_capacity(pairs.len());
    for (beta, mut u, v) in pairs {
        // Sign-fix u; v follows from u so the block orientation is kept.
        let l = lead(&u);
        let mut v = v;
        if l != usize::MAX && u[l] < 0.0 {
            u = -u;
            v = -v;
        }
        q.set_column(col, &u);
        q.set_column(col + 1, &v);
        betas.push(beta);
        col += 2;
    }
    let zero_count = kernel.len();
    for mut u in kernel {
        let l = lead(&u);
        if l != usize::MAX && u[l] < 0.0 {
            u = -u;
        }
        q.set_column(col, &u);
        col += 1;
    }
    debug_assert_eq!(col, n);
    Ok(AntisymCanonical {
        q,
        betas,
        zero_count,
    })
}

/// `exp(i t H)` for Hermitian `H`, through the eigendecomposition of `H`.
pub fn expm_skew_hermitian(h: &CMatrix, t: f64) -> Result<CMatrix> {
    let eig = hermitian_eig(h)?;
    Ok(eig.map(|x| Complex64::from_polar(1.0, t * x)))
}

/// Complex matrix from its real part.
pub fn complexify(a: &RMatrix) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

pub fn real_part(a: &CMatrix) -> RMatrix {
    a.map(|z| z.re)
}

pub fn imag_part(a: &CMatrix) -> RMatrix {
    a.map(|z| z.im)
}

/// Matrix whose columns are the given vectors.
pub fn columns_to_matrix(cols: &[CVector], rows: usize) -> CMatrix {
    let mut m = CMatrix::zeros(rows, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = CMatrix::from_fn(n, n, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        (&a + a.adjoint()).scale(0.5)
    }

    fn random_antisym(n: usize, seed: u64) -> RAntiMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = RMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        RAntiMatrix::new(a).unwrap()
    }

    #[test]
    fn identity_eigenvalues() {
        let eig = hermitian_eig(&CMatrix::identity(3, 3)).unwrap();
        for v in eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn pauli_x_eigenvalues() {
        let x = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]);
        let eig = hermitian_eig(&x).unwrap();
        assert!((eig.values[0] + 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_hermitian_reconstructs() {
        let a = random_hermitian(5, 11);
        let eig = hermitian_eig(&a).unwrap();
        let rebuilt = eig.map(|x| c(x, 0.0));
        assert!(max_abs(&(&rebuilt - &a)) < 1e-12 * max_abs(&a).max(1.0));
        let u = &eig.vectors;
        let gram = u.adjoint() * u;
        assert!(max_abs(&(gram - CMatrix::identity(5, 5))) < 1e-12);
        for k in 0..5 {
            let v = u.column(k);
            let r = &a * v - v * c(eig.values[k], 0.0);
            assert!(r.iter().map(|z| z.norm()).fold(0.0, f64::max) < 1e-10 * max_abs(&a));
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn non_hermitian_rejected() {
        let a = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(matches!(hermitian_eig(&a), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn non_finite_rejected() {
        let a = CMatrix::from_row_slice(1, 1, &[c(f64::NAN, 0.)]);
        assert_eq!(hermitian_eig(&a).unwrap_err(), Error::NonFinite);
    }

    #[test]
    fn sqrt_of_diagonal() {
        let s = sqrt_psd(&RSymMatrix::from_diagonal(&[4.0, 9.0])).unwrap();
        assert!((s[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((s[(1, 1)] - 3.0).abs() < 1e-14);
        assert!(s[(0, 1)].abs() < 1e-14);
        let id = sqrt_psd(&RSymMatrix::identity(3)).unwrap();
        assert!(max_abs(&(id.into_inner() - RMatrix::identity(3, 3))) < 1e-14);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = RSymMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let s = sqrt_psd(&a).unwrap();
        let sq = s.matrix() * s.matrix();
        assert!(max_abs(&(sq - a.matrix())) < 1e-12);
        assert!(s.is_psd());
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        let a = RSymMatrix::from_diagonal(&[1.0, -0.1]);
        assert!(matches!(sqrt_psd(&a), Err(Error::NotPsd { .. })));
        // dust is clipped
        let b = RSymMatrix::from_diagonal(&[1.0, -1e-12]);
        assert!(sqrt_psd(&b).is_ok());
    }

    #[test]
    fn hermitian_sqrt_squares_back() {
        let a = random_hermitian(4, 5);
        let psd = &a * &a;
        let s = sqrt_psd_hermitian(&psd).unwrap();
        assert!(max_abs(&(&s * &s - &psd)) < 1e-9 * max_abs(&psd));
    }

    #[test]
    fn abs_of_diagonal_and_rotation() {
        let a = abs_sym(&RMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, 2.0]))).unwrap();
        assert!((a[(0, 0)] - 3.0).abs() < 1e-14 && (a[(1, 1)] - 2.0).abs() < 1e-14);
        let b = 0.7;
        let r = RMatrix::from_row_slice(2, 2, &[0.0, -b, b, 0.0]);
        let ar = abs_sym(&r).unwrap();
        assert!(max_abs(&(ar.into_inner() - RMatrix::identity(2, 2) * b)) < 1e-14);
    }

    #[test]
    fn abs_trace_matches_canonical_form() {
        let a = random_antisym(4, 3);
        let can = antisym_canonical(&a).unwrap();
        let t = abs_sym(a.matrix()).unwrap().trace();
        let sum: f64 = can.betas.iter().sum();
        assert!((t - 2.0 * sum).abs() < 1e-9);
        assert!((trace_abs(a.matrix()) - t).abs() < 1e-12);
    }

    #[test]
    fn canonical_zero_and_single_block() {
        let z = antisym_canonical(&RAntiMatrix::zeros(3)).unwrap();
        assert!(z.betas.is_empty());
        assert_eq!(z.zero_count, 3);

        let a = RAntiMatrix::new(RMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0])).unwrap();
        let can = antisym_canonical(&a).unwrap();
        assert_eq!(can.betas.len(), 1);
        assert!((can.betas[0] - 0.5).abs() < 1e-15);
        let t = can.q.transpose() * a.matrix() * &can.q;
        assert!(max_abs(&(t - can.canonical_matrix().matrix())) < 1e-14);
    }

    #[test]
    fn canonical_matches_hermitian_eig_of_ia() {
        for seed in 0..5 {
            let a = random_antisym(6, 100 + seed);
            let can = antisym_canonical(&a).unwrap();
            let t = can.q.transpose() * a.matrix() * &can.q;
            assert!(max_abs(&(t - can.canonical_matrix().matrix())) < 1e-9);
            let qtq = can.q.transpose() * &can.q;
            assert!(max_abs(&(qtq - RMatrix::identity(6, 6))) < 1e-12);

            // iA is Hermitian with eigenvalues ±β_j.
            let ia = complexify(a.matrix()) * I;
            let eig = hermitian_eig(&ia).unwrap();
            let mut from_eig: Vec<f64> = eig.values.iter().filter(|v| **v > 1e-9).copied().collect();
            from_eig.sort_by(|x, y| y.total_cmp(x));
            assert_eq!(from_eig.len(), can.betas.len());
            for (x, y) in from_eig.iter().zip(&can.betas) {
                assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn canonical_is_deterministic() {
        let a = random_antisym(5, 9);
        let c1 = antisym_canonical(&a).unwrap();
        let c2 = antisym_canonical(&a).unwrap();
        assert_eq!(c1.q, c2.q);
        assert_eq!(c1.betas, c2.betas);
    }

    #[test]
    fn expm_cases() {
        let z = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        let u0 = expm_skew_hermitian(&z, 0.0).unwrap();
        assert!(max_abs(&(u0 - CMatrix::identity(2, 2))) < 1e-15);
        let upi = expm_skew_hermitian(&z, std::f64::consts::PI).unwrap();
        assert!(max_abs(&(upi + CMatrix::identity(2, 2))) < 1e-14);

        // exp(i t σ_y) = cos t + i sin t σ_y, and i σ_y = [[0, 1], [-1, 0]].
        let y = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]);
        let t = std::f64::consts::FRAC_PI_2 * 0.37;
        let u = expm_skew_hermitian(&y, t).unwrap();
        assert!(max_abs(&(u.adjoint() * &u - CMatrix::identity(2, 2))) < 1e-12);
        let col = u.column(0);
        assert!((col[0] - c(t.cos(), 0.0)).norm() < 1e-14);
        assert!((col[1] - c(-t.sin(), 0.0)).norm() < 1e-14);
    }

    #[test]
    fn serde_rejects_non_square() {
        let r: std::result::Result<RSymMatrix, _> = serde_json::from_str("[[1.0, 2.0]]");
        assert!(r.is_err());
        let ok: RSymMatrix = serde_json::from_str("[[1.0, 2.0], [2.0, 5.0]]").unwrap();
        assert_eq!(ok.dim(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn sqrt_psd_squares_to_input(entries in proptest::collection::vec(-2.0f64..2.0, 16)) {
                let b = RMatrix::from_row_slice(4, 4, &entries);
                let a = RSymMatrix::new(&b * b.transpose()).unwrap();
                let s = sqrt_psd(&a).unwrap();
                let err = max_abs(&(s.matrix() * s.matrix() - a.matrix()));
                prop_assert!(err <= 1e-9 * max_abs(&a).max(1.0));
            }

            #[test]
            fn canonical_betas_match_abs_trace(entries in proptest::collection::vec(-3.0f64..3.0, 25)) {
                let a = RAntiMatrix::new(RMatrix::from_row_slice(5, 5, &entries)).unwrap();
                let can = antisym_canonical(&a).unwrap();
                let t = abs_sym(a.matrix()).unwrap().trace();
                let sum: f64 = can.betas.iter().sum();
                prop_assert!((t - 2.0 * sum).abs() <= 1e-9 * max_abs(&a).max(1.0));
                let resid = can.q.transpose() * a.matrix() * &can.q - can.canonical_matrix().matrix();
                prop_assert!(max_abs(&resid) <= 1e-9 * max_abs(&a).max(1.0));
                prop_assert_eq!(2 * can.betas.len() + can.zero_count, 5);
            }
        }
    }
}
