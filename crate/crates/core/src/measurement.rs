//! Projective measurements that attain a covariance `V = Re X*X`.
//!
//! Given estimation vectors `|x^i⟩ ⊥ |φ⟩` with a real Gram matrix, the rays
//! of a suitably rotated orthonormal basis of `span{φ, x¹, …, x^m}` form a
//! locally unbiased PVM whose covariance is exactly `Re X*X`.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{cr_bound_coherent, marginal_infimum, quasi_classical_test};
use crate::error::{Error, Result};
use crate::linalg::{
    abs_sym, complexify, dust, hermitian_eig, imag_part, inv_sqrt_pd, max_abs, real_part,
    sqrt_psd, sqrt_psd_hermitian, CMatrix, CVector, RMatrix, RSymMatrix, I,
};
use crate::model::{FisherData, TangentFrame};

/// Tolerance on `Im X*X` for PVM synthesis.
pub const COMMUTE_TOL: f64 = 1e-8;
/// Gram–Schmidt residuals below this are dropped.
pub const RESIDUAL_DROP: f64 = 1e-10;
/// Smallest acceptable `|⟨b'|φ⟩|` for an outcome ray.
pub const MIN_OVERLAP: f64 = 1e-6;
const ROTATION_RETRIES: u64 = 8;

fn c(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

/// `φ` and the lift matrix `L` in some Hilbert space.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftFrame {
    pub phi: CVector,
    /// `D × m`, column `i` is `|l_i⟩`.
    pub lifts: CMatrix,
}

impl LiftFrame {
    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    pub fn param_dim(&self) -> usize {
        self.lifts.ncols()
    }

    pub fn gram(&self) -> CMatrix {
        self.lifts.adjoint() * &self.lifts
    }
}

impl From<&TangentFrame> for LiftFrame {
    fn from(f: &TangentFrame) -> Self {
        Self {
            phi: f.phi.clone(),
            lifts: f.lift_matrix(),
        }
    }
}

/// The `2m+1`-dimensional frame: `φ' = e₀`, the lifts in coordinates `1..=m`
/// reproducing `L*L`, and coordinates `m+1..=2m` left free.
pub fn naimark_frame(fd: &FisherData) -> Result<LiftFrame> {
    let m = fd.param_dim();
    let eig = hermitian_eig(&fd.gram)?;
    if eig.values[0] < -dust(max_abs(&fd.gram)) {
        return Err(Error::GramNotPsd {
            min_eigenvalue: eig.values[0],
        });
    }
    // Gram = U Λ U*, so Λ^{1/2} U* is a square factor even when Λ is singular.
    let sqrt_vals = DVector::from_iterator(m, eig.values.iter().map(|&x| c(x.max(0.0).sqrt())));
    let core = CMatrix::from_diagonal(&sqrt_vals) * eig.vectors.adjoint();
    let d = 2 * m + 1;
    let mut lifts = CMatrix::zeros(d, m);
    lifts.view_mut((1, 0), (m, m)).copy_from(&core);
    let mut phi = CVector::zeros(d);
    phi[0] = c(1.0);
    Ok(LiftFrame { phi, lifts })
}

/// Vectors `|x^i⟩` encoding a measurement's first-order statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationVectors {
    pub phi: CVector,
    /// `D × k`, column `i` is `|x^i⟩`.
    pub x: CMatrix,
}

/// Constraint violations of a set of estimation vectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorResiduals {
    /// `max |⟨x^i|φ⟩|`
    pub orthogonality: f64,
    /// `max |Re X*L − I|`, restricted to the estimated parameters.
    pub unbiasedness: f64,
    /// `max |Im X*X|`
    pub commutation: f64,
}

impl EstimationVectors {
    pub fn new(phi: CVector, x: CMatrix) -> Result<Self> {
        if x.nrows() != phi.len() {
            return Err(Error::DimensionMismatch(
                "estimation vectors and φ live in different spaces".into(),
            ));
        }
        Ok(Self { phi, x })
    }

    pub fn count(&self) -> usize {
        self.x.ncols()
    }

    /// `Re X*X`.
    pub fn covariance(&self) -> Result<RSymMatrix> {
        RSymMatrix::new(real_part(&(self.x.adjoint() * &self.x)))
    }

    /// Residuals against a frame. `params[i]` is the parameter estimated by
    /// column `i` (the identity map for full estimators).
    pub fn residuals(&self, frame: &LiftFrame, params: &[usize]) -> VectorResiduals {
        let xx = self.x.adjoint() * &self.x;
        let xl = real_part(&(self.x.adjoint() * &frame.lifts));
        let target = RMatrix::from_fn(self.count(), frame.param_dim(), |i, j| {
            if params[i] == j {
                1.0
            } else {
                0.0
            }
        });
        VectorResiduals {
            orthogonality: (self.x.adjoint() * &self.phi).iter().fold(0.0f64, |a, z| a.max(z.norm())),
            unbiasedness: max_abs(&(xl - target)),
            commutation: max_abs(&imag_part(&xx)),
        }
    }
}

/// `X = L J^S⁻¹`, optimal when `J̃ = 0`.
pub fn optimal_vectors_quasi_classical(
    frame: &LiftFrame,
    fd: &FisherData,
) -> Result<EstimationVectors> {
    if !quasi_classical_test(fd) {
        return Err(Error::NotQuasiClassical);
    }
    let x = &frame.lifts * complexify(fd.js_inverse()?.matrix());
    EstimationVectors::new(frame.phi.clone(), x)
}

/// `x = L J^S⁻¹ e_i`: the locally unbiased estimator of `θ^i` alone with
/// variance `(J^S⁻¹)_ii`.
pub fn optimal_vector_marginal(
    frame: &LiftFrame,
    fd: &FisherData,
    i: usize,
) -> Result<EstimationVectors> {
    let ji = fd.js_inverse()?;
    let col = ji.matrix().column(i).map(c);
    let x = &frame.lifts * col;
    EstimationVectors::new(frame.phi.clone(), CMatrix::from_column_slice(x.len(), 1, x.as_slice()))
}

/// Optimal vectors of a coherent model in the Naimark frame.
///
/// `X = L'J^S⁻¹ + Y` with `Y` in the free coordinates and
/// `Y*Y = G^{-1/2}(|B| − iB)G^{-1/2}`, `B = G^{1/2} J^S⁻¹J̃J^S⁻¹ G^{1/2}`.
/// Then `L'*X = I + iJ̃J^S⁻¹`, `Re X*X = V_opt` and `Im X*X = 0`.
pub fn optimal_vectors_coherent(
    nf: &LiftFrame,
    fd: &FisherData,
    g: &RSymMatrix,
) -> Result<EstimationVectors> {
    let m = fd.param_dim();
    if nf.dim() != 2 * m + 1 {
        return Err(Error::DimensionMismatch(
            "coherent vectors need the 2m+1 dimensional frame".into(),
        ));
    }
    let bound = cr_bound_coherent(fd, g)?;
    let ji = fd.js_inverse()?;
    let sg = sqrt_psd(g)?;
    let sgi = inv_sqrt_pd(g).map_err(|_| Error::SingularWeight)?;
    let b = sg.matrix() * ji.matrix() * fd.jt.matrix() * ji.matrix() * sg.matrix();
    let abs_b = abs_sym(&b)?;
    let inner = complexify(abs_b.matrix()) - complexify(&b) * I;
    let sgi_c = complexify(sgi.matrix());
    let mm = &sgi_c * inner * &sgi_c;
    let y = sqrt_psd_hermitian(&mm).map_err(|e| match e {
        Error::NotPsd { min_eigenvalue } => Error::InfeasibleGram {
            residual: -min_eigenvalue,
        },
        other => other,
    })?;
    let mut x = &nf.lifts * complexify(ji.matrix());
    let mut free = x.view_mut((m + 1, 0), (m, m));
    free += &y;
    let ev = EstimationVectors::new(nf.phi.clone(), x)?;
    let v_opt = bound.v_opt.expect("coherent bound is attained");
    let xx = ev.x.adjoint() * &ev.x;
    let residual = max_abs(&imag_part(&xx)).max(max_abs(&(real_part(&xx) - v_opt.matrix())));
    if residual > COMMUTE_TOL * max_abs(v_opt.matrix()).max(1.0) {
        return Err(Error::InfeasibleGram { residual });
    }
    Ok(ev)
}

/// Partial isometry `W` from the `2m+1` frame into the model space with
/// `W e₀ = φ` and `W L' = L`, or `None` when the model space is too small to
/// hold the `m` free directions as well.
///
/// Coordinates of the Naimark frame belonging to a zero eigenvalue of the
/// Gram matrix map to zero; optimal vectors never use them.
pub fn naimark_embedding(frame: &LiftFrame, fd: &FisherData) -> Result<Option<CMatrix>> {
    let m = fd.param_dim();
    let d = frame.dim();
    let eig = hermitian_eig(&fd.gram)?;
    let tol = dust(max_abs(&fd.gram));
    let mut w = CMatrix::zeros(d, 2 * m + 1);
    w.set_column(0, &frame.phi);
    let mut basis: Vec<CVector> = vec![frame.phi.clone()];
    for k in 0..m {
        if eig.values[k] > tol {
            let col = &frame.lifts * eig.vectors.column(k) / c(eig.values[k].sqrt());
            w.set_column(1 + k, &col);
            basis.push(col);
        }
    }
    let mut added = 0;
    for e in 0..d {
        if added == m {
            break;
        }
        let mut v = CVector::zeros(d);
        v[e] = c(1.0);
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dotc(&v);
                v -= b * proj;
            }
        }
        let norm = v.norm();
        if norm > 1e-6 {
            v /= c(norm);
            w.set_column(m + 1 + added, &v);
            basis.push(v);
            added += 1;
        }
    }
    Ok((added == m).then_some(w))
}

/// One outcome: offset `θ̂ − θ` and its projector.
#[derive(Debug, Clone, PartialEq)]
pub struct PvmOutcome {
    pub offset: Vec<f64>,
    pub projector: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pvm {
    pub outcomes: Vec<PvmOutcome>,
}

/// Largest violations of `E² = E`, `E_κE_λ = 0` and `ΣE = I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PvmAlgebra {
    pub idempotence: f64,
    pub orthogonality: f64,
    pub completeness: f64,
}

impl PvmAlgebra {
    pub fn max(&self) -> f64 {
        self.idempotence.max(self.orthogonality).max(self.completeness)
    }
}

/// JSON form: outcome in absolute coordinates, projector row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PvmEntry {
    pub outcome: Vec<f64>,
    pub projector: Vec<[f64; 2]>,
}

impl Pvm {
    pub fn dim(&self) -> usize {
        self.outcomes.first().map_or(0, |o| o.projector.nrows())
    }

    pub fn param_dim(&self) -> usize {
        self.outcomes.first().map_or(0, |o| o.offset.len())
    }

    pub fn algebra(&self) -> PvmAlgebra {
        let d = self.dim();
        let mut alg = PvmAlgebra {
            idempotence: 0.0,
            orthogonality: 0.0,
            completeness: 0.0,
        };
        let mut sum = CMatrix::zeros(d, d);
        for (k, a) in self.outcomes.iter().enumerate() {
            let e = &a.projector;
            alg.idempotence = alg.idempotence.max(max_abs(&(e * e - e)));
            for b in &self.outcomes[k + 1..] {
                alg.orthogonality = alg.orthogonality.max(max_abs(&(e * &b.projector)));
            }
            sum += e;
        }
        alg.completeness = max_abs(&(sum - CMatrix::identity(d, d)));
        alg
    }

    /// `Σ_κ (θ̂_κ − θ)^i E_κ |φ⟩` for every `i`, as columns.
    pub fn reconstruct_vectors(&self, phi: &CVector) -> CMatrix {
        let mut x = CMatrix::zeros(self.dim(), self.param_dim());
        for o in &self.outcomes {
            let ep = &o.projector * phi;
            for (i, &off) in o.offset.iter().enumerate() {
                let mut col = x.column_mut(i);
                col += &ep * c(off);
            }
        }
        x
    }

    pub fn to_entries(&self, theta: &[f64]) -> Vec<PvmEntry> {
        self.outcomes
            .iter()
            .map(|o| PvmEntry {
                outcome: o.offset.iter().zip(theta).map(|(a, b)| a + b).collect(),
                projector: o.projector.transpose().iter().map(|z| [z.re, z.im]).collect(),
            })
            .collect()
    }

    pub fn from_entries(entries: &[PvmEntry], theta: &[f64]) -> Result<Self> {
        let outcomes = entries
            .iter()
            .map(|e| {
                if e.outcome.len() != theta.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "outcome has {} components, model has {} parameters",
                        e.outcome.len(),
                        theta.len()
                    )));
                }
                let d = (e.projector.len() as f64).sqrt().round() as usize;
                if d * d != e.projector.len() || d == 0 {
                    return Err(Error::DimensionMismatch(
                        "projector must have d² entries".into(),
                    ));
                }
                let projector =
                    CMatrix::from_fn(d, d, |r, col| {
                        let [re, im] = e.projector[r * d + col];
                        Complex64::new(re, im)
                    });
                Ok(PvmOutcome {
                    offset: e.outcome.iter().zip(theta).map(|(a, b)| a - b).collect(),
                    projector,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let p = Pvm { outcomes };
        if p.outcomes.iter().any(|o| o.projector.nrows() != p.dim()) {
            return Err(Error::DimensionMismatch(
                "projectors have different sizes".into(),
            ));
        }
        Ok(p)
    }
}

/// Householder reflection of size `n` mapping `e₀` to `(1, …, 1)/√n`.
fn uniform_reflection(n: usize) -> RMatrix {
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    v[0] -= 1.0;
    let norm2 = v.norm_squared();
    if norm2 < 1e-30 {
        return RMatrix::identity(n, n);
    }
    RMatrix::identity(n, n) - (&v * v.transpose()) * (2.0 / norm2)
}

/// Random orthogonal matrix: the Q factor of a seeded uniform matrix.
fn random_orthogonal(n: usize, seed: u64) -> RMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = RMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
    a.qr().q()
}

/// Builds a PVM with `Σ_κ (θ̂_κ−θ) E_κ|φ⟩ = |x⟩` for every column.
pub fn pvm_from_vectors(ev: &EstimationVectors) -> Result<Pvm> {
    let k = ev.count();
    let d = ev.phi.len();
    let xx = ev.x.adjoint() * &ev.x;
    let scale = max_abs(&xx).max(1.0);
    let comm = max_abs(&imag_part(&xx));
    if comm > COMMUTE_TOL * scale {
        return Err(Error::NotCommuting { residual: comm });
    }
    let overlap = (ev.x.adjoint() * &ev.phi).iter().fold(0.0f64, |a, z| a.max(z.norm()));
    if overlap > 1e-9 * scale.sqrt() {
        return Err(Error::DegenerateVectors(format!(
            "estimation vectors overlap φ by {overlap:.3e}"
        )));
    }

    // Modified Gram–Schmidt on {φ, x¹, …, x^k}; lambda[(j, i)] is the
    // coefficient of basis vector j in x^i.
    let mut basis: Vec<CVector> = vec![ev.phi.clone()];
    let mut lambda = RMatrix::zeros(k + 1, k);
    let col_norm = (0..k).map(|i| ev.x.column(i).norm()).fold(0.0, f64::max);
    for i in 0..k {
        let mut r: CVector = ev.x.column(i).into_owned();
        let mut coeffs = vec![Complex64::new(0.0, 0.0); basis.len()];
        for (j, b) in basis.iter().enumerate() {
            let cj = b.dotc(&r);
            r -= b * cj;
            coeffs[j] += cj;
        }
        // Second pass for numerical orthogonality.
        for (j, b) in basis.iter().enumerate() {
            let cj = b.dotc(&r);
            r -= b * cj;
            coeffs[j] += cj;
        }
        let rn = r.norm();
        if rn > RESIDUAL_DROP * col_norm.max(1.0) {
            coeffs.push(c(rn));
            basis.push(r.unscale(rn));
        }
        for (j, cj) in coeffs.iter().enumerate().skip(1) {
            if cj.im.abs() > 1e-7 * col_norm.max(1.0) {
                return Err(Error::NotCommuting { residual: cj.im.abs() });
            }
            lambda[(j, i)] = cj.re;
        }
    }
    let n = basis.len();
    if n == 1 {
        // Every x vanishes: the trivial measurement returning θ.
        return Ok(Pvm {
            outcomes: vec![PvmOutcome {
                offset: vec![0.0; k],
                projector: CMatrix::identity(d, d),
            }],
        });
    }
    let lambda = lambda.rows(0, n).into_owned();

    let h = uniform_reflection(n);
    let o = (0..=ROTATION_RETRIES)
        .map(|attempt| {
            if attempt == 0 {
                h.clone()
            } else {
                &h * random_orthogonal(n, attempt)
            }
        })
        .find(|o| o.row(0).iter().all(|v| v.abs() >= MIN_OVERLAP))
        .ok_or_else(|| {
            Error::DegenerateVectors("no rotation gives every ray an overlap with φ".into())
        })?;

    // b'^κ = Σ_j O_{jκ} b_j, so ⟨b'^κ|φ⟩ = O_{0κ} and x^i = Σ_κ (λᵀO)_{iκ} b'^κ.
    let coeff = lambda.transpose() * &o;
    let mut outcomes = Vec::with_capacity(n + 1);
    let mut covered = CMatrix::zeros(d, d);
    for kappa in 0..n {
        let mut ray = CVector::zeros(d);
        for (j, b) in basis.iter().enumerate() {
            ray.axpy(c(o[(j, kappa)]), b, c(1.0));
        }
        let proj = &ray * ray.adjoint();
        covered += &proj;
        outcomes.push(PvmOutcome {
            offset: (0..k).map(|i| coeff[(i, kappa)] / o[(0, kappa)]).collect(),
            projector: proj,
        });
    }
    if n < d {
        outcomes.push(PvmOutcome {
            offset: vec![0.0; k],
            projector: CMatrix::identity(d, d) - covered,
        });
    }
    Ok(Pvm { outcomes })
}

/// A finite outcome distribution built from projectors: each atom is
/// `(offset, weight, projector)` with probability `weight·⟨φ|E|φ⟩`.
pub trait Measurement {
    fn param_dim(&self) -> usize;
    fn atoms(&self) -> Vec<(Vec<f64>, f64, &CMatrix)>;
}

impl Measurement for Pvm {
    fn param_dim(&self) -> usize {
        Pvm::param_dim(self)
    }

    fn atoms(&self) -> Vec<(Vec<f64>, f64, &CMatrix)> {
        self.outcomes
            .iter()
            .map(|o| (o.offset.clone(), 1.0, &o.projector))
            .collect()
    }
}

/// A PVM followed by an independent random shift `√V₀ α`, `α ∈ {±1}^m`
/// uniform, which adds `V₀` to the covariance without biasing.
#[derive(Debug, Clone, PartialEq)]
pub struct InflatedPvm {
    pub pvm: Pvm,
    pub shifts: Vec<Vec<f64>>,
}

pub fn inflate_covariance(p: &Pvm, v0: &RSymMatrix) -> Result<InflatedPvm> {
    let m = p.param_dim();
    if v0.dim() != m {
        return Err(Error::DimensionMismatch(
            "V₀ must match the parameter dimension".into(),
        ));
    }
    let root = sqrt_psd(v0)?;
    let shifts = (0..1usize << m)
        .map(|mask| {
            let alpha = DVector::from_fn(m, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
            (root.matrix() * alpha).iter().copied().collect()
        })
        .collect();
    Ok(InflatedPvm {
        pvm: p.clone(),
        shifts,
    })
}

impl Measurement for InflatedPvm {
    fn param_dim(&self) -> usize {
        self.pvm.param_dim()
    }

    fn atoms(&self) -> Vec<(Vec<f64>, f64, &CMatrix)> {
        let w = 1.0 / self.shifts.len() as f64;
        self.pvm
            .outcomes
            .iter()
            .flat_map(|o| {
                self.shifts.iter().map(move |s| {
                    let off = o.offset.iter().zip(s).map(|(a, b)| a + b).collect();
                    (off, w, &o.projector)
                })
            })
            .collect()
    }
}

/// Analytic statistics of a measurement at a frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceReport {
    #[serde(rename = "V")]
    pub v: RSymMatrix,
    pub unbiased: bool,
    /// `max_i |Σ_κ p_κ (θ̂_κ − θ)^i|`
    pub mean_residual: f64,
    /// `max_ij |Σ_κ (θ̂_κ − θ)^i ∂_j p_κ − δ_ij|` over the estimated parameters.
    pub derivative_residual: f64,
    pub total_probability: f64,
    /// Probability of atoms whose offset is zero because they cover the
    /// complement of the constructed rays.
    pub remainder_probability: f64,
}

/// Probabilities `⟨φ|E|φ⟩` of each atom, scaled by its weight.
fn atom_probabilities(meas: &impl Measurement, phi: &CVector) -> Result<Vec<f64>> {
    meas.atoms()
        .iter()
        .map(|(_, w, e)| {
            let p = w * phi.dotc(&(*e * phi)).re;
            if p < -1e-10 {
                Err(Error::BadProbability(p))
            } else {
                Ok(p.max(0.0))
            }
        })
        .collect()
}

/// Covariance and local unbiasedness; `params[i]` names the parameter that
/// outcome component `i` estimates.
pub fn covariance_of(
    meas: &impl Measurement,
    frame: &LiftFrame,
    params: &[usize],
) -> Result<CovarianceReport> {
    let k = meas.param_dim();
    if params.len() != k {
        return Err(Error::DimensionMismatch(
            "one parameter index per outcome component".into(),
        ));
    }
    let atoms = meas.atoms();
    if atoms.first().is_some_and(|a| a.2.nrows() != frame.dim()) {
        return Err(Error::DimensionMismatch(
            "measurement and frame live in different spaces".into(),
        ));
    }
    let probs = atom_probabilities(meas, &frame.phi)?;
    let mut v = RMatrix::zeros(k, k);
    let mut mean = vec![0.0; k];
    let mut deriv = RMatrix::zeros(k, frame.param_dim());
    let mut remainder = 0.0;
    for ((off, w, e), p) in atoms.iter().zip(&probs) {
        let ephi = *e * &frame.phi;
        for i in 0..k {
            mean[i] += p * off[i];
            for j in 0..k {
                v[(i, j)] += p * off[i] * off[j];
            }
            for j in 0..frame.param_dim() {
                // ∂_j p = tr(E ∂_jρ) = Re⟨φ|E|l_j⟩
                let dp = w * ephi.dotc(&frame.lifts.column(j)).re;
                deriv[(i, j)] += off[i] * dp;
            }
        }
        if off.iter().all(|&o| o == 0.0) {
            remainder += p;
        }
    }
    let target = RMatrix::from_fn(k, frame.param_dim(), |i, j| {
        if params[i] == j {
            1.0
        } else {
            0.0
        }
    });
    let mean_residual = mean.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let derivative_residual = max_abs(&(deriv - target));
    Ok(CovarianceReport {
        v: RSymMatrix::new(v)?,
        unbiased: mean_residual <= 1e-8 && derivative_residual <= 1e-8,
        mean_residual,
        derivative_residual,
        total_probability: probs.iter().sum(),
        remainder_probability: remainder,
    })
}

/// [`covariance_of`] for a full estimator of all `m` parameters.
pub fn covariance_of_pvm(p: &Pvm, frame: &LiftFrame) -> Result<CovarianceReport> {
    let params: Vec<usize> = (0..p.param_dim()).collect();
    covariance_of(p, frame, &params)
}

/// Empirical statistics of a seeded sampling run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub count: usize,
    pub seed: u64,
    /// Offsets `θ̂ − θ` in draw order.
    #[serde(skip)]
    pub offsets: Vec<Vec<f64>>,
    pub mean: Vec<f64>,
    /// Empirical second moments about the analytic mean.
    pub covariance: Vec<Vec<f64>>,
    pub analytic_covariance: Vec<Vec<f64>>,
    pub analytic_mean: Vec<f64>,
    /// `(mean_i − μ_i) / se_i`
    pub mean_z: Vec<f64>,
    /// `(Ĉ_ij − V_ij) / se_ij`, with `se_ij` from the exact fourth moments.
    pub covariance_z: Vec<Vec<f64>>,
    pub insufficient_data: bool,
}

impl SampleSummary {
    pub fn max_abs_z(&self) -> f64 {
        self.mean_z
            .iter()
            .chain(self.covariance_z.iter().flatten())
            .fold(0.0, |a, z| a.max(z.abs()))
    }
}

/// Draws `count` outcomes. Deterministic given `seed`.
pub fn sample_outcomes(
    meas: &impl Measurement,
    phi: &CVector,
    count: usize,
    seed: u64,
) -> Result<SampleSummary> {
    let k = meas.param_dim();
    let atoms = meas.atoms();
    let probs = atom_probabilities(meas, phi)?;
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::BadProbability(total));
    }
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p / total;
        cdf.push(acc);
    }

    // Exact moments about the analytic mean, for the z-scores.
    let mut mu = vec![0.0; k];
    for ((off, _, _), p) in atoms.iter().zip(&probs) {
        for i in 0..k {
            mu[i] += p * off[i];
        }
    }
    let mut v = RMatrix::zeros(k, k);
    let mut m4 = RMatrix::zeros(k, k);
    for ((off, _, _), p) in atoms.iter().zip(&probs) {
        for i in 0..k {
            for j in 0..k {
                let prod = (off[i] - mu[i]) * (off[j] - mu[j]);
                v[(i, j)] += p * prod;
                m4[(i, j)] += p * prod * prod;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offsets: Vec<Vec<f64>> = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let idx = cdf.partition_point(|&c| c <= u).min(atoms.len() - 1);
            atoms[idx].0.clone()
        })
        .collect();

    let n = count as f64;
    let mut mean = vec![0.0; k];
    for o in &offsets {
        for i in 0..k {
            mean[i] += o[i] / n.max(1.0);
        }
    }
    // Centered at the analytic mean, so E[Ĉ] = V exactly.
    let mut cov = RMatrix::zeros(k, k);
    for o in &offsets {
        for i in 0..k {
            for j in 0..k {
                cov[(i, j)] += (o[i] - mu[i]) * (o[j] - mu[j]);
            }
        }
    }
    if count > 0 {
        cov /= n;
    }
    let insufficient = count < 2;
    let z = |diff: f64, var: f64| {
        if insufficient {
            0.0
        } else if var <= 1e-300 {
            if diff.abs() <= 1e-12 { 0.0 } else { f64::INFINITY }
        } else {
            diff / (var / n).sqrt()
        }
    };
    let mean_z = (0..k).map(|i| z(mean[i] - mu[i], v[(i, i)])).collect();
    let covariance_z = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| z(cov[(i, j)] - v[(i, j)], m4[(i, j)] - v[(i, j)].powi(2)))
                .collect()
        })
        .collect();
    let rows = |a: &RMatrix| -> Vec<Vec<f64>> {
        (0..k).map(|i| a.row(i).iter().copied().collect()).collect()
    };
    Ok(SampleSummary {
        count,
        seed,
        offsets,
        mean,
        analytic_mean: mu,
        covariance: rows(&cov),
        analytic_covariance: rows(&v),
        mean_z,
        covariance_z,
        insufficient_data: insufficient,
    })
}

/// `max_κ |Re⟨φ|E_κ|l_j⟩|` for a PVM estimating `θ^i` at its marginal bound.
pub fn exclusiveness_extraction_check(
    p: &Pvm,
    frame: &LiftFrame,
    fd: &FisherData,
    i: usize,
    j: usize,
) -> Result<f64> {
    if p.param_dim() != 1 {
        return Err(Error::PreconditionNotMet(
            "expected a single-parameter PVM".into(),
        ));
    }
    let report = covariance_of(p, frame, &[i])?;
    let (bound, _) = marginal_infimum(fd, i)?;
    let var = report.v[(0, 0)];
    if (var - bound).abs() > 1e-6 * bound.max(1.0) || !report.unbiased {
        return Err(Error::PreconditionNotMet(format!(
            "variance {var:.9e} is not the marginal bound {bound:.9e}"
        )));
    }
    let lj = frame.lifts.column(j);
    Ok(p.outcomes
        .iter()
        .map(|o| (&o.projector * &frame.phi).dotc(&lj).re.abs())
        .fold(0.0, f64::max))
}
