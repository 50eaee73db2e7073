//! Classification of a model at a point and the closed-form attainable bounds.
//!
//! Everything here works on [`FisherData`] alone. Two-parameter problems are
//! solved in normalized coordinates `V' = √J^S V √J^S`, where the SLD bound
//! becomes the identity and `J̃` becomes `[[0, -β], [β, 0]]`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    abs_sym, antisym_canonical, complexify, dust, hermitian_eig, inv_sqrt_pd, max_abs, real_part,
    sqrt_psd, sqrt_psd_hermitian, symmetric_eig, CMatrix, RAntiMatrix, RMatrix, RSymMatrix, I,
};
use crate::model::FisherData;

/// Relative threshold shared by the classification tests.
pub const CLASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    QuasiClassical,
    Coherent,
    Generic,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::QuasiClassical => "quasi_classical",
            Classification::Coherent => "coherent",
            Classification::Generic => "generic",
        })
    }
}

/// `|β_j|`, the absolute imaginary parts of the eigenvalues of `J^S⁻¹J̃`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSpectrum {
    /// All `m` values, descending; each nonzero block contributes twice.
    pub betas: Vec<f64>,
    pub classification: Classification,
    /// `J̃₁₂ / √det J^S` for two-parameter models. Its sign depends on the
    /// ordering convention of `J̃` and carries no meaning for the bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signed_beta: Option<f64>,
}

impl BetaSpectrum {
    pub fn max(&self) -> f64 {
        self.betas.first().copied().unwrap_or(0.0)
    }
}

fn scale(fd: &FisherData) -> f64 {
    max_abs(fd.js.matrix()).max(1.0)
}

/// `K = J^S^{-1/2} J̃ J^S^{-1/2}`.
pub fn normalized_jt(fd: &FisherData) -> Result<RAntiMatrix> {
    let si = inv_sqrt_pd(&fd.js).map_err(|_| Error::SingularFisher {
        min_eigenvalue: fd.js.min_eigenvalue(),
    })?;
    RAntiMatrix::new(si.matrix() * fd.jt.matrix() * si.matrix())
}

/// Values within the classification threshold of 1 are exactly 1. Bounds
/// depend on `√(1−β²)`, which would otherwise amplify rounding near 1.
fn snap_beta(b: f64) -> f64 {
    if b >= 1.0 - CLASS_TOL {
        1.0
    } else {
        b
    }
}

pub fn beta_spectrum(fd: &FisherData) -> Result<BetaSpectrum> {
    let k = normalized_jt(fd)?;
    let canon = antisym_canonical(&k)?;
    let mut betas = Vec::with_capacity(fd.param_dim());
    for &b in &canon.betas {
        if b > 1.0 + CLASS_TOL {
            // L*L would have a negative eigenvalue 1 - β.
            return Err(Error::GramNotPsd {
                min_eigenvalue: 1.0 - b,
            });
        }
        let b = snap_beta(b);
        betas.extend([b, b]);
    }
    betas.resize(fd.param_dim(), 0.0);
    let classification = if quasi_classical_test(fd) {
        Classification::QuasiClassical
    } else if betas.iter().all(|&b| b >= 1.0 - CLASS_TOL) {
        Classification::Coherent
    } else {
        Classification::Generic
    };
    let signed_beta = (fd.param_dim() == 2).then(|| {
        let det = fd.js[(0, 0)] * fd.js[(1, 1)] - fd.js[(0, 1)].powi(2);
        fd.jt[(0, 1)] / det.sqrt()
    });
    Ok(BetaSpectrum {
        betas,
        classification,
        signed_beta,
    })
}

/// `Im L*L = 0` up to the relative threshold.
pub fn quasi_classical_test(fd: &FisherData) -> bool {
    max_abs(fd.jt.matrix()) <= CLASS_TOL * scale(fd)
}

pub fn coherent_test(fd: &FisherData) -> Result<bool> {
    Ok(beta_spectrum(fd)?.classification == Classification::Coherent)
}

/// `(|det J^S|, |det J̃|)`; equal exactly when the model is coherent.
pub fn determinants(fd: &FisherData) -> (f64, f64) {
    (
        fd.js.matrix().determinant().abs(),
        fd.jt.matrix().determinant().abs(),
    )
}

fn check_weight(fd: &FisherData, g: &RSymMatrix) -> Result<()> {
    if g.dim() != fd.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "weight is {}x{}, model has {} parameters",
            g.dim(),
            g.dim(),
            fd.param_dim()
        )));
    }
    if !g.is_psd() {
        return Err(Error::NotPsd {
            min_eigenvalue: g.min_eigenvalue(),
        });
    }
    Ok(())
}

/// `Tr G J^S⁻¹`.
pub fn sld_bound(fd: &FisherData, g: &RSymMatrix) -> Result<f64> {
    check_weight(fd, g)?;
    Ok((g.matrix() * fd.js_inverse()?.matrix()).trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundMethod {
    #[serde(rename = "closed_form_2param")]
    TwoParam,
    #[serde(rename = "closed_form_coherent")]
    Coherent,
    #[serde(rename = "closed_form_JS_weight")]
    JsWeight,
    #[serde(rename = "quasi_classical")]
    QuasiClassical,
    #[serde(rename = "oracle")]
    Oracle,
}

impl fmt::Display for BoundMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("unit variants serialize");
        f.write_str(s.as_str().unwrap_or_default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    #[serde(rename = "G")]
    pub g: RSymMatrix,
    pub value: f64,
    pub attained: bool,
    #[serde(rename = "V_opt")]
    pub v_opt: Option<RSymMatrix>,
    pub method: BoundMethod,
    pub notes: String,
}

/// Point of the two-parameter boundary in normalized coordinates, with
/// `u = z + x` and `v = z − x` the diagonal of `V'`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub x: f64,
    pub z: f64,
    pub u: f64,
    pub v: f64,
}

impl BoundaryPoint {
    fn from_wt(w: f64, t: f64) -> Self {
        let (u, v) = (1.0 + w * w, 1.0 + t * t);
        Self {
            x: 0.5 * (u - v),
            z: 0.5 * (u + v),
            u,
            v,
        }
    }

    /// `√(u−1) + √(v−1) − β√(uv)`.
    pub fn uv_residual(&self, beta: f64) -> f64 {
        (self.u - 1.0).max(0.0).sqrt() + (self.v - 1.0).max(0.0).sqrt()
            - beta * (self.u * self.v).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    pub beta: f64,
    pub samples: Vec<BoundaryPoint>,
}

/// Half-width of the hyperbola window sampled when `β = 1`.
pub const COHERENT_X_WINDOW: f64 = 1.0;

/// The stationary curve `β w t + √(1−β²)(w + t) = β`, with `w = √(u−1)`
/// and `t = √(v−1)`, solved for `t`.
#[derive(Debug, Clone, Copy)]
struct Curve {
    beta: f64,
    c: f64,
}

impl Curve {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            c: (1.0 - beta * beta).max(0.0).sqrt(),
        }
    }

    fn t(&self, w: f64) -> f64 {
        ((self.beta - self.c * w) / (self.beta * w + self.c)).max(0.0)
    }

    fn w_max(&self) -> f64 {
        self.beta / self.c
    }

    /// Largest `|x|` on the curve, reached at `w = 0` and `t = 0`.
    fn x_max(&self) -> f64 {
        0.5 * self.beta * self.beta / (self.c * self.c)
    }

    /// The `w` whose point has abscissa `x`, by bisection (`x` grows with `w`).
    fn w_at(&self, x: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, self.w_max());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let t = self.t(mid);
            if 0.5 * (mid * mid - t * t) < x {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi.max(1.0) {
                break;
            }
        }
        0.5 * (lo + hi)
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::Domain(format!("β must lie in [0, 1], got {beta}")));
    }
    Ok(())
}

/// `count` points evenly spaced in `x` along the boundary for `|β| = beta`.
pub fn boundary_2param(beta: f64, count: usize) -> Result<BoundaryCurve> {
    boundary_2param_window(beta, count, COHERENT_X_WINDOW)
}

/// As [`boundary_2param`], with the `x`-window for `β = 1` given explicitly.
pub fn boundary_2param_window(beta: f64, count: usize, window: f64) -> Result<BoundaryCurve> {
    check_beta(beta)?;
    if count < 2 {
        return Err(Error::Domain("boundary needs at least 2 samples".into()));
    }
    if beta == 0.0 {
        return Ok(BoundaryCurve {
            beta,
            samples: vec![BoundaryPoint::from_wt(0.0, 0.0)],
        });
    }
    let xs = |half: f64| (0..count).map(move |k| -half + 2.0 * half * k as f64 / (count - 1) as f64);
    let samples = if beta >= 1.0 {
        xs(window)
            .map(|x| {
                let z = 1.0 + (1.0 + x * x).sqrt();
                BoundaryPoint {
                    x,
                    z,
                    u: z + x,
                    v: z - x,
                }
            })
            .collect()
    } else {
        let curve = Curve::new(beta);
        let xm = curve.x_max();
        xs(xm)
            .enumerate()
            .map(|(k, x)| {
                // Hit the endpoints exactly.
                let w = match k {
                    0 => 0.0,
                    _ if k == count - 1 => curve.w_max(),
                    _ => curve.w_at(x),
                };
                let mut p = BoundaryPoint::from_wt(w, curve.t(w));
                if k == 0 || k == count - 1 {
                    p.x = x;
                }
                p
            })
            .collect()
    };
    Ok(BoundaryCurve { beta, samples })
}

/// `det √Ṽ + √(1/β² − 1) Tr √Ṽ − 1` with `Ṽ = √J^S V √J^S − I`.
/// For `β = 0` returns `Tr √Ṽ`.
pub fn boundary_residual(fd: &FisherData, v: &RSymMatrix) -> Result<f64> {
    let beta = beta_spectrum(fd)?.max();
    let s = sqrt_psd(&fd.js)?;
    let vt = v.congruence(s.matrix()).into_inner() - RMatrix::identity(v.dim(), v.dim());
    let r = sqrt_psd(&RSymMatrix::new(vt)?)?;
    if beta <= CLASS_TOL {
        return Ok(r.trace());
    }
    Ok(r.matrix().determinant() + (1.0 / (beta * beta) - 1.0).sqrt() * r.trace() - 1.0)
}

/// Minimizer of `g1 (1 + w²) + g2 (1 + t(w)²)` over the curve.
///
/// The objective is convex in `w`, so bisection on its derivative
/// `2 g1 w − 2 g2 t / (β w + c)²` brackets the minimum.
fn minimize_on_curve(curve: Curve, g1: f64, g2: f64) -> f64 {
    let deriv = |w: f64| {
        let den = curve.beta * w + curve.c;
        g1 * w - g2 * curve.t(w) / (den * den)
    };
    let (mut lo, mut hi) = (0.0, curve.w_max());
    if deriv(lo) >= 0.0 {
        return lo;
    }
    if deriv(hi) <= 0.0 {
        return hi;
    }
    while hi - lo > 1e-14 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn cr_bound_2param(fd: &FisherData, g: &RSymMatrix) -> Result<BoundReport> {
    if fd.param_dim() != 2 {
        return Err(Error::Domain(format!(
            "two-parameter bound needs m = 2, got m = {}",
            fd.param_dim()
        )));
    }
    check_weight(fd, g)?;
    let beta = beta_spectrum(fd)?;
    let b = beta.max();
    let si = inv_sqrt_pd(&fd.js)?;
    let gp = g.congruence(si.matrix());
    let (gs, q) = gp.eig();
    let (g1, g2) = (gs[0].max(0.0), gs[1].max(0.0));
    let rank_one = g1 <= dust(g2);

    let report = |u: f64, v: f64, attained: bool, notes: String| -> Result<BoundReport> {
        let vp = &q * RMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![u, v])) * q.transpose();
        let v_opt = RSymMatrix::new(vp)?.congruence(si.matrix());
        let value = if attained {
            (g.matrix() * v_opt.matrix()).trace()
        } else {
            g1 * u + g2 * v
        };
        Ok(BoundReport {
            g: g.clone(),
            value,
            attained,
            v_opt: attained.then_some(v_opt),
            method: BoundMethod::TwoParam,
            notes,
        })
    };

    if beta.classification == Classification::QuasiClassical || g2 == 0.0 {
        return report(1.0, 1.0, true, "quasi-classical vertex V = J^S⁻¹".into());
    }
    if rank_one {
        // Only the direction of g2 is weighted: v = 1, u is free to grow.
        return if b >= 1.0 - CLASS_TOL {
            report(
                1.0,
                1.0,
                false,
                "rank-one weight at |β| = 1: infimum (J^S⁻¹ marginal) is not attained".into(),
            )
        } else {
            let u = 1.0 / (1.0 - b * b);
            report(u, 1.0, true, "rank-one weight: curve endpoint t = 0".into())
        };
    }
    if b >= 1.0 - CLASS_TOL {
        // Hyperbola w t = 1.
        let w2 = (g2 / g1).sqrt();
        return report(1.0 + w2, 1.0 + 1.0 / w2, true, "coherent hyperbola".into());
    }
    let curve = Curve::new(b);
    let w = minimize_on_curve(curve, g1, g2);
    let t = curve.t(w);
    report(
        1.0 + w * w,
        1.0 + t * t,
        true,
        format!("minimum on the stationary curve at w = {w:.17e}"),
    )
}

pub fn cr_bound_coherent(fd: &FisherData, g: &RSymMatrix) -> Result<BoundReport> {
    check_weight(fd, g)?;
    if !coherent_test(fd)? {
        return Err(Error::NotCoherent);
    }
    if !g.is_positive_definite() {
        return Err(Error::SingularWeight);
    }
    let ji = fd.js_inverse()?;
    let a = ji.matrix() * fd.jt.matrix() * ji.matrix();
    let sg = sqrt_psd(g)?;
    let sgi = inv_sqrt_pd(g).map_err(|_| Error::SingularWeight)?;
    let b = sg.matrix() * a * sg.matrix();
    let abs_b = abs_sym(&b)?;
    let value = (g.matrix() * ji.matrix()).trace() + abs_b.trace();
    let v_opt = RSymMatrix::new(ji.matrix() + abs_b.congruence(sgi.matrix()).into_inner())?;
    Ok(BoundReport {
        g: g.clone(),
        value,
        attained: true,
        v_opt: Some(v_opt),
        method: BoundMethod::Coherent,
        notes: "Tr G J^S⁻¹ + Tr |√G J^S⁻¹ J̃ J^S⁻¹ √G|".into(),
    })
}

/// `Tr (Re √(I + iK))⁻²`, the matrix form of the `G = J^S` bound.
pub fn js_weight_matrix_form(fd: &FisherData) -> Result<f64> {
    let k = normalized_jt(fd)?;
    let n = k.dim();
    let h = CMatrix::identity(n, n) + complexify(k.matrix()) * I;
    let root = sqrt_psd_hermitian(&h)?;
    let ri = RSymMatrix::new(real_part(&root))?.inverse_pd()?;
    Ok((ri.matrix() * ri.matrix()).trace())
}

fn js_term(b: f64) -> f64 {
    2.0 / (1.0 + (1.0 - b * b).max(0.0).sqrt())
}

pub fn cr_bound_js_weight(fd: &FisherData) -> Result<BoundReport> {
    let spectrum = beta_spectrum(fd)?;
    let value: f64 = spectrum.betas.iter().copied().map(js_term).sum();
    // In the canonical basis of K the optimum is diagonal: one term per
    // rotation block direction, 1 on the kernel.
    let canon = antisym_canonical(&normalized_jt(fd)?)?;
    let mut diag = vec![1.0; fd.param_dim()];
    for (k, &b) in canon.betas.iter().enumerate() {
        let term = js_term(snap_beta(b.min(1.0)));
        diag[2 * k] = term;
        diag[2 * k + 1] = term;
    }
    let vp = RSymMatrix::from_diagonal(&diag).congruence(&canon.q.transpose());
    let si = inv_sqrt_pd(&fd.js)?;
    let v_opt = vp.congruence(si.matrix());
    let check = js_weight_matrix_form(fd)?;
    Ok(BoundReport {
        g: fd.js.clone(),
        value,
        attained: true,
        v_opt: Some(v_opt),
        method: BoundMethod::JsWeight,
        notes: format!(
            "Σ 2/(1+√(1−β²)) over {} betas; matrix form gives {check:.17e}",
            spectrum.betas.len()
        ),
    })
}

/// `(J^S⁻¹)_ii` and whether a locally unbiased measurement reaches it.
pub fn marginal_infimum(fd: &FisherData, i: usize) -> Result<(f64, bool)> {
    let m = fd.param_dim();
    if i >= m {
        return Err(Error::DimensionMismatch(format!(
            "parameter index {i} out of range for m = {m}"
        )));
    }
    let value = fd.js_inverse()?[(i, i)];
    let spectrum = beta_spectrum(fd)?;
    let hint = m == 1
        || spectrum.classification == Classification::QuasiClassical
        || (m == 2 && spectrum.max() < 1.0 - CLASS_TOL);
    Ok((value, hint))
}

/// True when every cross-block entry of `J^S` and `J̃` vanishes.
pub fn independence_partition(fd: &FisherData, blocks: &[Vec<usize>]) -> Result<bool> {
    let m = fd.param_dim();
    let mut owner = vec![None; m];
    for (b, block) in blocks.iter().enumerate() {
        for &i in block {
            if i >= m || owner[i].is_some() {
                return Err(Error::Domain(
                    "blocks must partition the parameter indices".into(),
                ));
            }
            owner[i] = Some(b);
        }
    }
    if owner.iter().any(Option::is_none) {
        return Err(Error::Domain(
            "blocks must cover every parameter index".into(),
        ));
    }
    let tol = CLASS_TOL * scale(fd);
    Ok((0..m).all(|i| {
        (0..m).all(|j| {
            owner[i] == owner[j] || (fd.js[(i, j)].abs() <= tol && fd.jt[(i, j)].abs() <= tol)
        })
    }))
}

/// Purely imaginary and maximal cross-Gram between lifts `i` and `j`.
pub fn exclusiveness_test(fd: &FisherData, i: usize, j: usize) -> bool {
    let m = fd.param_dim();
    if i == j || i >= m || j >= m {
        return false;
    }
    let tol = CLASS_TOL * scale(fd);
    let bound = (fd.js[(i, i)] * fd.js[(j, j)]).sqrt();
    fd.js[(i, j)].abs() <= tol && fd.jt[(i, j)].abs() >= (1.0 - CLASS_TOL) * bound
}

/// Is `G = c J^S` for some `c ≥ 0`? Returns `c`.
pub fn weight_proportional_to_js(fd: &FisherData, g: &RSymMatrix) -> Option<f64> {
    let js = fd.js.matrix();
    let c = (g.matrix().component_mul(js)).sum() / js.norm_squared();
    let resid = max_abs(&(g.matrix() - js * c));
    (c >= 0.0 && resid <= CLASS_TOL * max_abs(g.matrix()).max(1.0)).then_some(c)
}

/// The closed form that applies to `(fd, G)`, if any.
pub fn closed_form_bound(fd: &FisherData, g: &RSymMatrix) -> Result<Option<BoundReport>> {
    check_weight(fd, g)?;
    let spectrum = beta_spectrum(fd)?;
    if spectrum.classification == Classification::QuasiClassical {
        let ji = fd.js_inverse()?;
        return Ok(Some(BoundReport {
            g: g.clone(),
            value: (g.matrix() * ji.matrix()).trace(),
            attained: true,
            v_opt: Some(ji),
            method: BoundMethod::QuasiClassical,
            notes: "SLD bound is attained".into(),
        }));
    }
    if spectrum.classification == Classification::Coherent && g.is_positive_definite() {
        return cr_bound_coherent(fd, g).map(Some);
    }
    if fd.param_dim() == 2 {
        return cr_bound_2param(fd, g).map(Some);
    }
    if let Some(c) = weight_proportional_to_js(fd, g) {
        let mut r = cr_bound_js_weight(fd)?;
        r.value *= c;
        r.g = g.clone();
        if c != 1.0 {
            r.notes.push_str(&format!("; weight is {c:.17e} J^S"));
        }
        return Ok(Some(r));
    }
    Ok(None)
}

/// Minimum eigenvalue of `V − J^S⁻¹`.
pub fn excess_over_sld(fd: &FisherData, v: &RSymMatrix) -> Result<f64> {
    let d = v.matrix() - fd.js_inverse()?.matrix();
    Ok(symmetric_eig(&d).0[0])
}

/// `1 − β` eigenvalue floor of `I + iK`; used by tests to confirm `|β| ≤ 1`.
pub fn normalized_gram_min_eigenvalue(fd: &FisherData) -> Result<f64> {
    let k = normalized_jt(fd)?;
    let n = k.dim();
    let h = CMatrix::identity(n, n) + complexify(k.matrix()) * I;
    Ok(hermitian_eig(&h)?.values[0])
}
