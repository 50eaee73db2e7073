//! Pure-state models, tangent frames of horizontal lifts, and Fisher data.
//!
//! A model is a map `θ ↦ |φ(θ)⟩` into unit vectors of `C^d`. At a point the
//! horizontal lift of `∂_i` is `|l_i⟩ = 2(I − |φ⟩⟨φ|)|∂_iφ⟩`; it satisfies
//! `∂_iρ = ½(|l_i⟩⟨φ| + |φ⟩⟨l_i|)` and `⟨φ|l_i⟩ = 0`. The Gram matrix of the
//! lifts splits into the SLD Fisher matrix (real part) and `J̃` (imaginary part).

pub mod catalog;
pub mod config;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    columns_to_matrix, dust, imag_part, max_abs, real_part, CMatrix, CVector, RAntiMatrix,
    RMatrix, RSymMatrix,
};

/// Allowed deviation of `‖φ(θ)‖` from one.
pub const NORM_TOL: f64 = 1e-8;

/// Lifts shorter than this make the model degenerate.
pub const MIN_LIFT_NORM: f64 = 1e-8;

/// Evaluates a state vector and, optionally, its parameter derivatives.
pub trait Evaluator: Send + Sync {
    fn state(&self, theta: &[f64]) -> Result<CVector>;

    /// Analytic derivatives `∂_iφ`. They may differ from the true derivative
    /// by an imaginary multiple of `φ` (a local phase change); lifts project
    /// that component out.
    fn derivatives(&self, _theta: &[f64]) -> Result<Vec<CVector>> {
        Err(Error::NotSupported(
            "evaluator has no analytic derivatives".into(),
        ))
    }
}

struct FnEvaluator<F>(F);

impl<F> Evaluator for FnEvaluator<F>
where
    F: Fn(&[f64]) -> Result<CVector> + Send + Sync,
{
    fn state(&self, theta: &[f64]) -> Result<CVector> {
        (self.0)(theta)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    Analytic,
    /// Central differences with step `scale · max(1, |θ_i|)`.
    FiniteDifference { scale: f64 },
}

impl DerivativeMode {
    pub const DEFAULT_FD: DerivativeMode = DerivativeMode::FiniteDifference { scale: 1e-6 };
}

#[derive(Clone)]
pub struct PureStateModel {
    dim: usize,
    param_dim: usize,
    label: String,
    mode: DerivativeMode,
    evaluator: Arc<dyn Evaluator>,
}

impl fmt::Debug for PureStateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PureStateModel")
            .field("dim", &self.dim)
            .field("param_dim", &self.param_dim)
            .field("label", &self.label)
            .field("mode", &self.mode)
            .finish()
    }
}

impl PureStateModel {
    pub fn new(
        dim: usize,
        param_dim: usize,
        label: impl Into<String>,
        mode: DerivativeMode,
        evaluator: Arc<dyn Evaluator>,
    ) -> Result<Self> {
        if dim == 0 || param_dim == 0 {
            return Err(Error::Domain(
                "model needs positive Hilbert and parameter dimensions".into(),
            ));
        }
        Ok(Self {
            dim,
            param_dim,
            label: label.into(),
            mode,
            evaluator,
        })
    }

    /// Model from a plain state function; derivatives by finite differences.
    pub fn from_fn<F>(dim: usize, param_dim: usize, label: impl Into<String>, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Result<CVector> + Send + Sync + 'static,
    {
        Self::new(
            dim,
            param_dim,
            label,
            DerivativeMode::DEFAULT_FD,
            Arc::new(FnEvaluator(f)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn param_dim(&self) -> usize {
        self.param_dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.mode = mode;
        self
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_dim {
            return Err(Error::DimensionMismatch(format!(
                "model '{}' takes {} parameters, got {}",
                self.label,
                self.param_dim,
                theta.len()
            )));
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(())
    }

    pub fn state(&self, theta: &[f64]) -> Result<CVector> {
        self.check_theta(theta)?;
        let phi = self.evaluator.state(theta)?;
        if phi.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "evaluator returned a vector of length {}, model dimension is {}",
                phi.len(),
                self.dim
            )));
        }
        let norm = phi.norm();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NormDrift { norm });
        }
        Ok(phi)
    }

    /// `∂_iφ` at `theta`, analytic or by phase-aligned central differences.
    pub fn derivatives(&self, theta: &[f64]) -> Result<Vec<CVector>> {
        self.check_theta(theta)?;
        match self.mode {
            DerivativeMode::Analytic => {
                let d = self.evaluator.derivatives(theta)?;
                if d.len() != self.param_dim || d.iter().any(|v| v.len() != self.dim) {
                    return Err(Error::DimensionMismatch(
                        "analytic derivatives have the wrong shape".into(),
                    ));
                }
                Ok(d)
            }
            DerivativeMode::FiniteDifference { scale } => {
                let phi = self.state(theta)?;
                (0..self.param_dim)
                    .map(|i| {
                        let h = scale * theta[i].abs().max(1.0);
                        let mut tp = theta.to_vec();
                        let mut tm = theta.to_vec();
                        tp[i] += h;
                        tm[i] -= h;
                        let p = align_phase(&phi, self.state(&tp)?);
                        let m = align_phase(&phi, self.state(&tm)?);
                        Ok((p - m).unscale(2.0 * h))
                    })
                    .collect()
            }
        }
    }
}

/// Multiply `v` by the unit phase maximizing `Re⟨reference|v⟩`.
fn align_phase(reference: &CVector, v: CVector) -> CVector {
    let overlap = reference.dotc(&v);
    if overlap.norm() == 0.0 {
        return v;
    }
    v * (overlap.conj() / overlap.norm())
}

/// State vector plus horizontal lifts at one parameter point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentFrame {
    pub theta: Vec<f64>,
    pub phi: CVector,
    pub lifts: Vec<CVector>,
}

impl TangentFrame {
    /// Builds a frame from `φ` and raw derivatives, projecting out `φ`.
    pub fn from_derivatives(theta: Vec<f64>, phi: CVector, derivs: &[CVector]) -> Result<Self> {
        let lifts: Vec<CVector> = derivs
            .iter()
            .map(|d| {
                let along = phi.dotc(d);
                (d - &phi * along) * Complex64::new(2.0, 0.0)
            })
            .collect();
        let frame = Self { theta, phi, lifts };
        frame.check_nondegenerate()?;
        Ok(frame)
    }

    fn check_nondegenerate(&self) -> Result<()> {
        for (i, l) in self.lifts.iter().enumerate() {
            if l.norm() < MIN_LIFT_NORM {
                return Err(Error::DegenerateModel(format!(
                    "lift {} has norm {:.3e}",
                    i + 1,
                    l.norm()
                )));
            }
        }
        let js = RSymMatrix::new(real_part(&self.gram()))?;
        let min = js.min_eigenvalue();
        if min <= dust(max_abs(&js)) {
            return Err(Error::DegenerateModel(format!(
                "lifts are linearly dependent over R (min Fisher eigenvalue {min:.3e})"
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    pub fn param_dim(&self) -> usize {
        self.lifts.len()
    }

    /// `L = [|l_1⟩ … |l_m⟩]` as a `d × m` matrix.
    pub fn lift_matrix(&self) -> CMatrix {
        columns_to_matrix(&self.lifts, self.dim())
    }

    /// `L*L`, entry `(i, j) = ⟨l_i|l_j⟩`.
    pub fn gram(&self) -> CMatrix {
        let l = self.lift_matrix();
        l.adjoint() * l
    }

    /// `½(|l_i⟩⟨φ| + |φ⟩⟨l_i|)`, the derivative of `ρ` represented by lift `i`.
    pub fn rho_derivative(&self, i: usize) -> CMatrix {
        let a = &self.lifts[i] * self.phi.adjoint();
        (&a + a.adjoint()).scale(0.5)
    }
}

/// Evaluate `φ` and the horizontal lifts of a model at `theta`.
pub fn tangent_frame(model: &PureStateModel, theta: &[f64]) -> Result<TangentFrame> {
    let phi = model.state(theta)?;
    let derivs = model.derivatives(theta)?;
    TangentFrame::from_derivatives(theta.to_vec(), phi, &derivs)
}

/// `J^S + iJ̃ = L*L`.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherData {
    pub js: RSymMatrix,
    pub jt: RAntiMatrix,
    pub gram: CMatrix,
}

impl FisherData {
    /// From a Hermitian PSD Gram matrix of lifts.
    pub fn from_gram(gram: CMatrix) -> Result<Self> {
        let js = RSymMatrix::new(real_part(&gram))?;
        let jt = RAntiMatrix::new(imag_part(&gram))?;
        let min = js.min_eigenvalue();
        if min <= dust(max_abs(&js)) {
            return Err(Error::SingularFisher {
                min_eigenvalue: min,
            });
        }
        let gram = CMatrix::from_fn(js.dim(), js.dim(), |i, j| {
            Complex64::new(js[(i, j)], jt[(i, j)])
        });
        Ok(Self { js, jt, gram })
    }

    /// From explicit `J^S` and `J̃`.
    pub fn from_parts(js: RSymMatrix, jt: RAntiMatrix) -> Result<Self> {
        if js.dim() != jt.dim() {
            return Err(Error::DimensionMismatch(
                "J^S and J̃ must have the same size".into(),
            ));
        }
        let gram = CMatrix::from_fn(js.dim(), js.dim(), |i, j| {
            Complex64::new(js[(i, j)], jt[(i, j)])
        });
        let eig = crate::linalg::hermitian_eig(&gram)?;
        if eig.values[0] < -dust(max_abs(&gram)) {
            return Err(Error::GramNotPsd {
                min_eigenvalue: eig.values[0],
            });
        }
        Self::from_gram(gram)
    }

    pub fn param_dim(&self) -> usize {
        self.js.dim()
    }

    pub fn js_inverse(&self) -> Result<RSymMatrix> {
        self.js.inverse_pd().map_err(|_| Error::SingularFisher {
            min_eigenvalue: self.js.min_eigenvalue(),
        })
    }

    /// Restriction to a subset of parameter indices.
    pub fn restrict(&self, idx: &[usize]) -> Result<FisherData> {
        let k = idx.len();
        let g = CMatrix::from_fn(k, k, |a, b| self.gram[(idx[a], idx[b])]);
        FisherData::from_gram(g)
    }
}

pub fn fisher_data(frame: &TangentFrame) -> Result<FisherData> {
    FisherData::from_gram(frame.gram())
}

struct Reparametrized {
    inner: PureStateModel,
    /// Maps new coordinates to old: θ = inv · θ'.
    inv: RMatrix,
}

impl Reparametrized {
    fn old_theta(&self, theta: &[f64]) -> Vec<f64> {
        (&self.inv * DVector::from_column_slice(theta))
            .iter()
            .copied()
            .collect()
    }
}

impl Evaluator for Reparametrized {
    fn state(&self, theta: &[f64]) -> Result<CVector> {
        self.inner.state(&self.old_theta(theta))
    }

    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CVector>> {
        let d = self.inner.derivatives(&self.old_theta(theta))?;
        let m = d.len();
        Ok((0..m)
            .map(|j| {
                let mut acc = CVector::zeros(self.inner.dim());
                for (i, di) in d.iter().enumerate() {
                    acc.axpy(Complex64::new(self.inv[(i, j)], 0.0), di, Complex64::new(1.0, 0.0));
                }
                acc
            })
            .collect())
    }
}

/// The model in linear coordinates `θ' = Aθ`.
pub fn reparametrize(model: &PureStateModel, a: &RMatrix) -> Result<PureStateModel> {
    let m = model.param_dim();
    if a.nrows() != m || a.ncols() != m {
        return Err(Error::DimensionMismatch(
            "reparametrization matrix must be m x m".into(),
        ));
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("reparametrization matrix is singular".into()))?;
    PureStateModel::new(
        model.dim(),
        m,
        format!("{} (reparametrized)", model.label()),
        DerivativeMode::Analytic,
        Arc::new(Reparametrized {
            inner: model.clone(),
            inv,
        }),
    )
}

struct Product {
    left: PureStateModel,
    right: PureStateModel,
}

impl Product {
    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.left.param_dim())
    }
}

fn kron(a: &CVector, b: &CVector) -> CVector {
    CVector::from_fn(a.len() * b.len(), |k, _| a[k / b.len()] * b[k % b.len()])
}

impl Evaluator for Product {
    fn state(&self, theta: &[f64]) -> Result<CVector> {
        let (t1, t2) = self.split(theta);
        Ok(kron(&self.left.state(t1)?, &self.right.state(t2)?))
    }

    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CVector>> {
        let (t1, t2) = self.split(theta);
        let (p1, p2) = (self.left.state(t1)?, self.right.state(t2)?);
        let mut out: Vec<CVector> = self
            .left
            .derivatives(t1)?
            .iter()
            .map(|d| kron(d, &p2))
            .collect();
        out.extend(self.right.derivatives(t2)?.iter().map(|d| kron(&p1, d)));
        Ok(out)
    }
}

/// Tensor product `|φ₁(θ₁)⟩ ⊗ |φ₂(θ₂)⟩`; the two parameter blocks are
/// informationally independent at every point.
pub fn product(left: &PureStateModel, right: &PureStateModel) -> Result<PureStateModel> {
    PureStateModel::new(
        left.dim() * right.dim(),
        left.param_dim() + right.param_dim(),
        format!("{} ⊗ {}", left.label(), right.label()),
        DerivativeMode::Analytic,
        Arc::new(Product {
            left: left.clone(),
            right: right.clone(),
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::catalog;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn qubit_lift_at_zero() {
        let model = catalog::qubit_rotation();
        let frame = tangent_frame(&model, &[0.0]).unwrap();
        // ∂φ = ½(-sin, cos) = (0, ½), so l = 2(I-P)∂φ = (0, 1).
        assert!((frame.lifts[0][0]).norm() < 1e-12);
        assert!((frame.lifts[0][1] - c(1.0, 0.0)).norm() < 1e-12);
        let fd = fisher_data(&frame).unwrap();
        assert!((fd.js[(0, 0)] - 1.0).abs() < 1e-12);
        assert_eq!(fd.jt[(0, 0)], 0.0);
    }

    #[test]
    fn constant_model_is_degenerate() {
        let model = PureStateModel::from_fn(2, 1, "const", |_| {
            Ok(CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]))
        })
        .unwrap();
        assert!(matches!(
            tangent_frame(&model, &[0.3]),
            Err(Error::DegenerateModel(_))
        ));
    }

    #[test]
    fn norm_drift_is_reported() {
        let model = PureStateModel::from_fn(2, 1, "bad", |t| {
            Ok(CVector::from_vec(vec![c(1.0 + t[0], 0.0), c(0.0, 0.0)]))
        })
        .unwrap();
        assert!(matches!(model.state(&[0.1]), Err(Error::NormDrift { .. })));
    }

    #[test]
    fn wrong_parameter_count() {
        let model = catalog::qubit_rotation();
        assert!(matches!(
            model.state(&[0.0, 1.0]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn finite_differences_match_analytic_spin_lifts() {
        let model = catalog::spin_rotation(1.0, 0.0).unwrap();
        let theta = [0.9, 1.3];
        let a = fisher_data(&tangent_frame(&model, &theta).unwrap()).unwrap();
        let fdm = model.clone().with_mode(DerivativeMode::DEFAULT_FD);
        let b = fisher_data(&tangent_frame(&fdm, &theta).unwrap()).unwrap();
        assert!(max_abs(&(a.gram - b.gram)) < 1e-8);
    }

    #[test]
    fn lifts_are_horizontal_and_reconstruct_rho_derivative() {
        let model = catalog::spin_rotation(1.5, 0.5).unwrap();
        let theta = [0.7, 2.1];
        let frame = tangent_frame(&model, &theta).unwrap();
        for (i, l) in frame.lifts.iter().enumerate() {
            assert!(frame.phi.dotc(l).norm() < 1e-9);
            let h = 1e-5;
            let mut tp = theta.to_vec();
            let mut tm = theta.to_vec();
            tp[i] += h;
            tm[i] -= h;
            let rho = |t: &[f64]| {
                let p = model.state(t).unwrap();
                &p * p.adjoint()
            };
            let drho = (rho(&tp) - rho(&tm)).unscale(2.0 * h);
            assert!(max_abs(&(drho - frame.rho_derivative(i))) < 1e-8);
        }
    }

    #[test]
    fn phase_gauge_does_not_change_fisher_data() {
        let base = catalog::spin_rotation(1.0, 1.0).unwrap();
        let b2 = base.clone();
        let gauged = PureStateModel::from_fn(3, 2, "gauged", move |t| {
            let alpha = 0.7 * t[0] * t[0] + (3.0 * t[1]).sin();
            Ok(b2.state(t)? * Complex64::from_polar(1.0, alpha))
        })
        .unwrap();
        let theta = [1.1, 0.4];
        let a = fisher_data(&tangent_frame(&base, &theta).unwrap()).unwrap();
        let b = fisher_data(&tangent_frame(&gauged, &theta).unwrap()).unwrap();
        assert!(max_abs(&(a.js.matrix() - b.js.matrix())) < 1e-8);
        assert!(max_abs(&(a.jt.matrix() - b.jt.matrix())) < 1e-8);
    }

    #[test]
    fn reparametrization_transforms_covariantly() {
        let model = catalog::spin_rotation(1.5, 0.5).unwrap();
        let a = RMatrix::from_row_slice(2, 2, &[2.0, 0.3, -0.5, 1.2]);
        let theta = [0.8, 0.6];
        let theta_new: Vec<f64> = (&a * DVector::from_column_slice(&theta)).iter().copied().collect();
        let re = reparametrize(&model, &a).unwrap();
        let f0 = fisher_data(&tangent_frame(&model, &theta).unwrap()).unwrap();
        let f1 = fisher_data(&tangent_frame(&re, &theta_new).unwrap()).unwrap();
        let ainv = a.clone().try_inverse().unwrap();
        let js_expect = ainv.transpose() * f0.js.matrix() * &ainv;
        let jt_expect = ainv.transpose() * f0.jt.matrix() * &ainv;
        assert!(max_abs(&(js_expect - f1.js.matrix())) < 1e-8);
        assert!(max_abs(&(jt_expect - f1.jt.matrix())) < 1e-8);
    }

    #[test]
    fn product_blocks_are_independent() {
        let a = catalog::qubit_rotation();
        let b = catalog::spin_rotation(0.5, 0.5).unwrap();
        let p = product(&a, &b).unwrap();
        let fd = fisher_data(&tangent_frame(&p, &[0.3, 1.0, 0.2]).unwrap()).unwrap();
        for j in 1..3 {
            assert!(fd.gram[(0, j)].norm() < 1e-12);
        }
    }

    #[test]
    fn from_parts_rejects_non_psd_gram() {
        let js = RSymMatrix::identity(2);
        let jt = RAntiMatrix::canonical(&[1.5], 2);
        assert!(matches!(
            FisherData::from_parts(js, jt),
            Err(Error::GramNotPsd { .. })
        ));
    }

    #[test]
    fn singular_fisher_from_gram() {
        let g = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]));
        assert!(matches!(
            FisherData::from_gram(g),
            Err(Error::SingularFisher { .. })
        ));
    }
}
