//! Built-in models: qubit rotation, spin rotation, shifted number states and
//! displaced squeezed states. The Fock-space models pick a truncation once,
//! at a reference point, and keep it fixed.

use std::f64::consts::{FRAC_1_SQRT_2, PI};
use std::sync::Arc;

use num_complex::Complex64;

use super::{DerivativeMode, Evaluator, PureStateModel};
use crate::error::{Error, Result};
use crate::linalg::{expm_skew_hermitian, CMatrix, CVector, I};

/// Tail mass allowed when choosing a Fock truncation.
pub const TRUNCATION_TAIL: f64 = 1e-10;
/// Looser tail bound checked at every later evaluation.
pub const EVALUATION_TAIL: f64 = 1e-8;
pub const MAX_FOCK_DIM: usize = 4096;

fn re(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

struct QubitRotation;

impl Evaluator for QubitRotation {
    fn state(&self, t: &[f64]) -> Result<CVector> {
        let h = t[0] / 2.0;
        Ok(CVector::from_vec(vec![re(h.cos()), re(h.sin())]))
    }

    fn derivatives(&self, t: &[f64]) -> Result<Vec<CVector>> {
        let h = t[0] / 2.0;
        Ok(vec![CVector::from_vec(vec![
            re(-0.5 * h.sin()),
            re(0.5 * h.cos()),
        ])])
    }
}

/// `φ(θ) = (cos θ/2, sin θ/2)`.
pub fn qubit_rotation() -> PureStateModel {
    PureStateModel::new(2, 1, "qubit_rotation", DerivativeMode::Analytic, Arc::new(QubitRotation))
        .expect("static dimensions are valid")
}

/// Spin operators `(S_x, S_y, S_z)` in the basis `m = s, s-1, …, -s`.
pub fn spin_operators(s: f64) -> (CMatrix, CMatrix, CMatrix) {
    let d = (2.0 * s).round() as usize + 1;
    let m_of = |k: usize| s - k as f64;
    let mut raise = CMatrix::zeros(d, d);
    for k in 1..d {
        // S+ |m⟩ = sqrt(s(s+1) - m(m+1)) |m+1⟩, and m+1 sits at index k-1.
        let m = m_of(k);
        raise[(k - 1, k)] = re((s * (s + 1.0) - m * (m + 1.0)).sqrt());
    }
    let lower = raise.adjoint();
    let sx = (&raise + &lower).scale(0.5);
    let sy = (&raise - &lower) * Complex64::new(0.0, -0.5);
    let sz = CMatrix::from_fn(d, d, |i, j| if i == j { re(m_of(i)) } else { re(0.0) });
    (sx, sy, sz)
}

struct SpinRotation {
    m: f64,
    index: usize,
    sx: CMatrix,
    sy: CMatrix,
    sz: CMatrix,
}

impl SpinRotation {
    fn generator(&self, t2: f64) -> CMatrix {
        self.sx.scale(t2.sin()) - self.sy.scale(t2.cos())
    }
}

impl Evaluator for SpinRotation {
    fn state(&self, t: &[f64]) -> Result<CVector> {
        let u = expm_skew_hermitian(&self.generator(t[1]), t[0])?;
        Ok(u.column(self.index).into_owned())
    }

    fn derivatives(&self, t: &[f64]) -> Result<Vec<CVector>> {
        let h = self.generator(t[1]);
        let phi = expm_skew_hermitian(&h, t[0])?.column(self.index).into_owned();
        let d1 = (&h * &phi) * I;
        let d2 = (&phi * re(self.m) - &self.sz * &phi) * I;
        Ok(vec![d1, d2])
    }
}

/// `φ(θ) = exp(iθ¹(sin θ² S_x − cos θ² S_y)) |s, m⟩`.
pub fn spin_rotation(s: f64, m: f64) -> Result<PureStateModel> {
    let two_s = 2.0 * s;
    if !(s >= 0.5) || (two_s - two_s.round()).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "spin s must be a positive half-integer, got {s}"
        )));
    }
    let k = s - m;
    if m.abs() > s + 1e-12 || (k - k.round()).abs() > 1e-12 {
        return Err(Error::Domain(format!(
            "m must be one of s, s-1, ..., -s, got m = {m} for s = {s}"
        )));
    }
    let (sx, sy, sz) = spin_operators(s);
    let d = sx.nrows();
    PureStateModel::new(
        d,
        2,
        format!("spin_rotation(s={s}, m={m})"),
        DerivativeMode::Analytic,
        Arc::new(SpinRotation {
            m,
            index: k.round() as usize,
            sx,
            sy,
            sz,
        }),
    )
}

/// Checks `θ¹ ∈ (0, π)` and `θ² ∈ [0, 2π)`.
pub fn check_spin_theta(theta: &[f64]) -> Result<()> {
    match theta {
        [t1, t2] if *t1 > 0.0 && *t1 < PI && *t2 >= 0.0 && *t2 < 2.0 * PI => Ok(()),
        [_, _] => Err(Error::Domain(
            "spin rotation needs θ¹ in (0, π) and θ² in [0, 2π)".into(),
        )),
        _ => Err(Error::DimensionMismatch(
            "spin rotation takes 2 parameters".into(),
        )),
    }
}

/// Fock-space ladder operators truncated to dimension `n`.
#[derive(Debug, Clone)]
pub struct Fock {
    pub a: CMatrix,
    pub adag: CMatrix,
    /// `(a + a†)/√2`
    pub x: CMatrix,
    /// `(a − a†)/(i√2)`
    pub p: CMatrix,
}

impl Fock {
    pub fn new(n: usize) -> Self {
        let a = CMatrix::from_fn(n, n, |i, j| {
            if j == i + 1 {
                re((j as f64).sqrt())
            } else {
                re(0.0)
            }
        });
        let adag = a.adjoint();
        let x = (&a + &adag).scale(FRAC_1_SQRT_2);
        let p = (&a - &adag) * Complex64::new(0.0, -FRAC_1_SQRT_2);
        Self { a, adag, x, p }
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `D(z) = exp(z a† − z̄ a)`.
    pub fn displacement(&self, z: Complex64) -> Result<CMatrix> {
        let gen = (&self.adag * z - &self.a * z.conj()) * Complex64::new(0.0, -1.0);
        expm_skew_hermitian(&gen, 1.0)
    }
}

/// Relative weight of the top quarter of Fock levels.
pub fn tail_mass(v: &CVector) -> f64 {
    let n = v.len();
    let total = v.norm_squared();
    if total == 0.0 {
        return 0.0;
    }
    let start = n - n / 4;
    v.iter().skip(start).map(|z| z.norm_sqr()).sum::<f64>() / total
}

fn frame_tail(phi: &CVector, derivs: &[CVector]) -> f64 {
    derivs
        .iter()
        .map(tail_mass)
        .fold(tail_mass(phi), f64::max)
}

/// Smallest doubling of `start` whose state and derivatives have tail mass
/// below [`TRUNCATION_TAIL`].
fn choose_truncation(
    start: usize,
    eval: impl Fn(usize) -> Result<(CVector, Vec<CVector>)>,
) -> Result<usize> {
    let mut n = start.max(8);
    loop {
        let (phi, d) = eval(n)?;
        let tail = frame_tail(&phi, &d);
        if tail < TRUNCATION_TAIL {
            return Ok(n);
        }
        if n >= MAX_FOCK_DIM {
            return Err(Error::Truncation { dim: n, tail });
        }
        n = (2 * n).min(MAX_FOCK_DIM);
    }
}

fn verify_truncation(n: usize, phi: &CVector, derivs: &[CVector], bound: f64) -> Result<()> {
    let tail = frame_tail(phi, derivs);
    if tail >= bound {
        Err(Error::Truncation { dim: n, tail })
    } else {
        Ok(())
    }
}

struct ShiftedNumber {
    n: usize,
    fock: Fock,
}

impl ShiftedNumber {
    fn eval(&self, t: &[f64]) -> Result<(CVector, Vec<CVector>)> {
        let gen = &self.fock.p * re(t[1]) - &self.fock.x * re(t[0]);
        let phi = expm_skew_hermitian(&gen, 1.0)?.column(self.n).into_owned();
        let d1 = (&self.fock.x * &phi) * Complex64::new(0.0, -1.0);
        let d2 = (&self.fock.p * &phi) * I;
        Ok((phi, vec![d1, d2]))
    }
}

impl Evaluator for ShiftedNumber {
    fn state(&self, t: &[f64]) -> Result<CVector> {
        let (phi, d) = self.eval(t)?;
        verify_truncation(self.fock.dim(), &phi, &d, EVALUATION_TAIL)?;
        Ok(phi)
    }

    fn derivatives(&self, t: &[f64]) -> Result<Vec<CVector>> {
        Ok(self.eval(t)?.1)
    }
}

/// `φ(θ) = exp(i(−θ¹X + θ²P)) |n⟩` on a truncated Fock space.
///
/// `trunc = None` picks the dimension adaptively at `reference`.
pub fn shifted_number(n: usize, reference: &[f64], trunc: Option<usize>) -> Result<PureStateModel> {
    if reference.len() != 2 {
        return Err(Error::DimensionMismatch(
            "shifted number model takes 2 parameters".into(),
        ));
    }
    let build = |dim: usize| -> Result<ShiftedNumber> {
        if dim <= n {
            return Err(Error::Domain(format!(
                "truncation {dim} does not contain level {n}"
            )));
        }
        Ok(ShiftedNumber {
            n,
            fock: Fock::new(dim),
        })
    };
    let dim = match trunc {
        Some(d) => {
            let ev = build(d)?;
            let (phi, der) = ev.eval(reference)?;
            verify_truncation(d, &phi, &der, TRUNCATION_TAIL)?;
            d
        }
        None => {
            let z2 = 0.5 * (reference[0].powi(2) + reference[1].powi(2));
            let start = n + (12.0 + 8.0 * (z2 + 1.0)).ceil() as usize;
            choose_truncation(start, |d| build(d)?.eval(reference))?
        }
    };
    PureStateModel::new(
        dim,
        2,
        format!("shifted_number(n={n})"),
        DerivativeMode::Analytic,
        Arc::new(build(dim)?),
    )
}

/// Squeezed-vacuum amplitudes `c_k` on `|2k⟩` and their `r` derivatives.
fn squeezed_vacuum(dim: usize, r: f64, psi: f64) -> (CVector, CVector) {
    let (t, ch) = (r.tanh(), r.cosh());
    let sech2 = 1.0 / (ch * ch);
    let pref = ch.powf(-0.5);
    let mut amp = CVector::zeros(dim);
    let mut d_r = CVector::zeros(dim);
    // f_k = sqrt((2k)!) / (2^k k!)
    let mut f = 1.0;
    for k in 0..(dim + 1) / 2 {
        if k > 0 {
            f *= ((2 * k - 1) as f64 / (2 * k) as f64).sqrt();
        }
        let kf = k as f64;
        let phase = Complex64::from_polar(1.0, kf * psi);
        let tk = t.powi(k as i32);
        let dtk = if k == 0 {
            0.0
        } else {
            kf * t.powi(k as i32 - 1) * sech2
        };
        amp[2 * k] = phase * (pref * tk * f);
        d_r[2 * k] = phase * (f * pref * (dtk - 0.5 * t * tk));
    }
    (amp, d_r)
}

struct Squeezed {
    fock: Fock,
}

impl Squeezed {
    fn eval(&self, t: &[f64]) -> Result<(CVector, Vec<CVector>)> {
        let dim = self.fock.dim();
        let z = Complex64::new(t[0], t[1]) * FRAC_1_SQRT_2;
        let (r, psi) = (t[2], -2.0 * t[3]);
        let d = self.fock.displacement(z)?;
        let (s, ds_r) = squeezed_vacuum(dim, r, psi);
        let ds_psi = CVector::from_fn(dim, |k, _| s[k] * Complex64::new(0.0, (k / 2) as f64));
        let phi = &d * &s;
        let d1 = (&self.fock.adag - &self.fock.a) * &phi * re(FRAC_1_SQRT_2);
        let d2 = (&self.fock.adag + &self.fock.a) * &phi * Complex64::new(0.0, FRAC_1_SQRT_2);
        let d3 = &d * ds_r;
        let d4 = (&d * ds_psi) * re(-2.0);
        Ok((phi, vec![d1, d2, d3, d4]))
    }
}

impl Evaluator for Squeezed {
    fn state(&self, t: &[f64]) -> Result<CVector> {
        let (phi, d) = self.eval(t)?;
        verify_truncation(self.fock.dim(), &phi, &d, EVALUATION_TAIL)?;
        Ok(phi)
    }

    fn derivatives(&self, t: &[f64]) -> Result<Vec<CVector>> {
        if t[2].abs() < 1e-12 {
            // The squeezing angle has no effect on the vacuum.
            return Err(Error::SingularFisher { min_eigenvalue: 0.0 });
        }
        Ok(self.eval(t)?.1)
    }
}

/// Displaced squeezed state `D(z) S(ξ) |0⟩` with `z = (θ¹ + iθ²)/√2` and
/// `ξ = θ³ e^{−2iθ⁴}`.
pub fn squeezed(reference: &[f64], trunc: Option<usize>) -> Result<PureStateModel> {
    check_squeezed_theta(reference)?;
    let build = |dim: usize| Squeezed {
        fock: Fock::new(dim),
    };
    let dim = match trunc {
        Some(d) => {
            if d < 2 {
                return Err(Error::Domain("truncation must be at least 2".into()));
            }
            let (phi, der) = build(d).eval(reference)?;
            verify_truncation(d, &phi, &der, TRUNCATION_TAIL)?;
            d
        }
        None => {
            let z2 = 0.5 * (reference[0].powi(2) + reference[1].powi(2));
            let start = (12.0 + 8.0 * (z2 + (2.0 * reference[2]).exp())).ceil() as usize;
            choose_truncation(start, |d| build(d).eval(reference))?
        }
    };
    PureStateModel::new(
        dim,
        4,
        "squeezed",
        DerivativeMode::Analytic,
        Arc::new(build(dim)),
    )
}

/// Checks `θ³ > 0` and `θ⁴ ∈ [0, 2π)`. At `θ³ = 0` the Fisher matrix is singular.
pub fn check_squeezed_theta(theta: &[f64]) -> Result<()> {
    if theta.len() != 4 {
        return Err(Error::DimensionMismatch(
            "squeezed model takes 4 parameters".into(),
        ));
    }
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite);
    }
    if theta[2] == 0.0 {
        return Err(Error::SingularFisher { min_eigenvalue: 0.0 });
    }
    if theta[2] < 0.0 || theta[3] < 0.0 || theta[3] >= 2.0 * PI {
        return Err(Error::Domain(
            "squeezed model needs θ³ > 0 and θ⁴ in [0, 2π)".into(),
        ));
    }
    Ok(())
}
