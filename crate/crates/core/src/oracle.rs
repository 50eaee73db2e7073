//! Brute-force minimizer of `Tr G Re X*X` over locally unbiased, commuting
//! estimation vectors in the `2m+1`-dimensional frame.
//!
//! Columns of `X` live in the `2m` coordinates orthogonal to `φ'`, written in
//! real form `r = [Re x; Im x] ∈ R^{4m}`. There `Re⟨x|y⟩ = r_xᵀ r_y` and
//! `Im⟨x|y⟩ = r_xᵀ Ω r_y`. The unbiasedness constraint `Re X*L' = I` is affine
//! and eliminated: `r_i = r⁰_i + N z_i` with `N` an orthonormal basis of the
//! null space. Only `Im X*X = 0` is left, handled by an augmented Lagrangian.

use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::sld_bound;
use crate::error::{Error, Result};
use crate::linalg::{
    antisym_canonical, complexify, imag_part, inv_sqrt_pd, max_abs, real_part, symmetric_eig,
    CMatrix, RAntiMatrix, RMatrix, RSymMatrix,
};
use crate::measurement::{naimark_frame, EstimationVectors, LiftFrame};
use crate::model::FisherData;

/// Accepted results satisfy the constraints to this level.
pub const FEASIBILITY_TOL: f64 = 1e-7;
const INNER_GRAD_TOL: f64 = 1e-9;
const INNER_MAX_ITER: usize = 5000;
const OUTER_PER_PENALTY: usize = 30;
const PERTURBATION: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_penalties")]
    pub penalties: Vec<f64>,
}

fn default_restarts() -> usize {
    16
}

fn default_penalties() -> Vec<f64> {
    vec![1e2, 1e4, 1e6, 1e8]
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            restarts: default_restarts(),
            seed: 0,
            penalties: default_penalties(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleProblem {
    pub fd: FisherData,
    pub g: RSymMatrix,
    pub config: OracleConfig,
    frame: LiftFrame,
    x0: Vec<DVector<f64>>,
    null: RMatrix,
}

/// Outcome of one seeded restart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartStat {
    pub seed: u64,
    pub value: f64,
    pub residual: f64,
    pub feasible: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    /// Recovered antisymmetric multiplier.
    pub lambda: Vec<Vec<f64>>,
    /// `max |X(G − iΛ) − L'VG|`
    pub residual: f64,
    /// Residuals of `GVG − ΛVΛ = GVJ^SVG` and `GVΛ + ΛVG = −GVJ̃VG` (m = 2).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_param: Option<(f64, f64)>,
    /// Block magnitudes of `G^{-1/2}ΛG^{-1/2}` when `G` is positive definite.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalized_lambda_betas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub value: f64,
    #[serde(rename = "V")]
    pub v: RSymMatrix,
    /// `X` in the `2m+1` frame, row-major `[re, im]` pairs per entry.
    #[serde(rename = "X_best")]
    pub x_best: Vec<Vec<[f64; 2]>>,
    /// `max |Im X*X|`
    pub commutation_residual: f64,
    /// `max |Re X*L' − I|`
    pub unbiasedness_residual: f64,
    pub best_seed: u64,
    pub restarts: Vec<RestartStat>,
    pub config: OracleConfig,
}

impl OracleResult {
    pub fn estimation_vectors(&self) -> EstimationVectors {
        let d = self.x_best.len();
        let m = self.x_best.first().map_or(0, Vec::len);
        let x = CMatrix::from_fn(d, m, |r, c| Complex64::new(self.x_best[r][c][0], self.x_best[r][c][1]));
        let mut phi = nalgebra::DVector::zeros(d);
        phi[0] = Complex64::new(1.0, 0.0);
        EstimationVectors { phi, x }
    }
}

/// `Ω r` for `r = [a; b]`: `[b; −a]`.
fn omega(r: &DVector<f64>) -> DVector<f64> {
    let h = r.len() / 2;
    DVector::from_fn(r.len(), |k, _| if k < h { r[k + h] } else { -r[k - h] })
}

struct InnerResult {
    x: DVector<f64>,
    iterations: usize,
}

/// Quasi-Newton minimization with an Armijo backtracking line search.
fn bfgs(
    f: impl Fn(&DVector<f64>) -> (f64, DVector<f64>),
    x0: DVector<f64>,
    gtol: f64,
    max_iter: usize,
) -> InnerResult {
    let n = x0.len();
    let mut x = x0;
    let (mut fx, mut g) = f(&x);
    let mut h = RMatrix::identity(n, n);
    let mut first = true;
    for it in 0..max_iter {
        if g.amax() <= gtol || !fx.is_finite() {
            return InnerResult { x, iterations: it };
        }
        let mut d = -(&h * &g);
        let mut slope = g.dot(&d);
        if slope >= 0.0 {
            h = RMatrix::identity(n, n);
            d = -g.clone();
            slope = -g.norm_squared();
        }
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let xn = &x + &d * alpha;
            let (fnew, gnew) = f(&xn);
            if fnew.is_finite() && fnew <= fx + 1e-4 * alpha * slope {
                accepted = Some((xn, fnew, gnew));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fnew, gnew)) = accepted else {
            return InnerResult { x, iterations: it };
        };
        let s = &xn - &x;
        let y = &gnew - &g;
        let sy = s.dot(&y);
        if sy > 1e-14 * s.norm() * y.norm() {
            if first {
                h = RMatrix::identity(n, n) * (sy / y.norm_squared());
                first = false;
            }
            let rho = 1.0 / sy;
            let hy = &h * &y;
            let yhy = y.dot(&hy);
            // H ← H − ρ(s yᵀH + H y sᵀ) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
            h += (&s * s.transpose()) * (rho * rho * yhy + rho);
        }
        let improvement = fx - fnew;
        x = xn;
        fx = fnew;
        g = gnew;
        if improvement.abs() <= f64::EPSILON * fx.abs().max(1e-300) && g.amax() <= 1e3 * gtol {
            return InnerResult { x, iterations: it + 1 };
        }
    }
    InnerResult {
        x,
        iterations: max_iter,
    }
}

impl OracleProblem {
    pub fn new(fd: &FisherData, g: &RSymMatrix, config: OracleConfig) -> Result<Self> {
        let m = fd.param_dim();
        if g.dim() != m {
            return Err(Error::DimensionMismatch(
                "weight and Fisher matrices differ in size".into(),
            ));
        }
        if !g.is_psd() {
            return Err(Error::NotPsd {
                min_eigenvalue: g.min_eigenvalue(),
            });
        }
        if config.restarts == 0 || config.penalties.is_empty() {
            return Err(Error::Schema(
                "oracle needs at least one restart and one penalty".into(),
            ));
        }
        if config.penalties.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Schema("penalties must be positive".into()));
        }
        let frame = naimark_frame(fd)?;
        let ji = fd.js_inverse()?;
        let particular = &frame.lifts * complexify(ji.matrix());
        let embed = |col: nalgebra::DVectorView<'_, Complex64>| -> DVector<f64> {
            let n = 2 * m;
            DVector::from_fn(2 * n, |k, _| {
                if k < n {
                    col[k + 1].re
                } else {
                    col[k - n + 1].im
                }
            })
        };
        let x0: Vec<DVector<f64>> = (0..m).map(|i| embed(particular.column(i))).collect();
        // Null space of the rows ℓ_jᵀ: eigenvectors of I − P_range with eigenvalue 1.
        let ell = RMatrix::from_fn(4 * m, m, |k, j| embed(frame.lifts.column(j))[k]);
        let gram = ell.transpose() * &ell;
        let gi = gram
            .try_inverse()
            .ok_or(Error::SingularFisher { min_eigenvalue: 0.0 })?;
        let proj = RMatrix::identity(4 * m, 4 * m) - &ell * gi * ell.transpose();
        let (vals, vecs) = symmetric_eig(&((&proj + proj.transpose()) * 0.5));
        let keep = vals.iter().filter(|&&v| v > 0.5).count();
        debug_assert_eq!(keep, 3 * m);
        let null = vecs.columns(4 * m - keep, keep).into_owned();
        Ok(Self {
            fd: fd.clone(),
            g: g.clone(),
            config,
            frame,
            x0,
            null,
        })
    }

    pub fn param_dim(&self) -> usize {
        self.fd.param_dim()
    }

    fn free_dim(&self) -> usize {
        self.null.ncols()
    }

    fn columns(&self, z: &DVector<f64>) -> Vec<DVector<f64>> {
        let k = self.free_dim();
        self.x0
            .iter()
            .enumerate()
            .map(|(i, x0)| x0 + &self.null * z.rows(i * k, k))
            .collect()
    }

    fn pull_back(&self, grads: &[DVector<f64>]) -> DVector<f64> {
        let k = self.free_dim();
        let mut out = DVector::zeros(k * grads.len());
        for (i, g) in grads.iter().enumerate() {
            out.rows_mut(i * k, k).copy_from(&(self.null.transpose() * g));
        }
        out
    }

    /// `c_ij = Im⟨x^i|x^j⟩` for `i < j`, in row order.
    fn constraints(cols: &[DVector<f64>]) -> Vec<f64> {
        let m = cols.len();
        let om: Vec<_> = cols.iter().map(omega).collect();
        let mut out = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in i + 1..m {
                out.push(cols[i].dot(&om[j]));
            }
        }
        out
    }

    fn objective(&self, cols: &[DVector<f64>]) -> f64 {
        let m = cols.len();
        let mut f = 0.0;
        for i in 0..m {
            for j in 0..m {
                f += self.g[(i, j)] * cols[i].dot(&cols[j]);
            }
        }
        f
    }

    /// Augmented Lagrangian value and gradient in `z`.
    fn lagrangian(&self, z: &DVector<f64>, lam: &[f64], mu: f64) -> (f64, DVector<f64>) {
        let cols = self.columns(z);
        let m = cols.len();
        let om: Vec<_> = cols.iter().map(omega).collect();
        let mut val = self.objective(&cols);
        let mut grads: Vec<DVector<f64>> = (0..m)
            .map(|k| {
                let mut g = DVector::zeros(cols[k].len());
                for j in 0..m {
                    g.axpy(2.0 * self.g[(k, j)], &cols[j], 1.0);
                }
                g
            })
            .collect();
        let mut idx = 0;
        for i in 0..m {
            for j in i + 1..m {
                let c = cols[i].dot(&om[j]);
                val += lam[idx] * c + 0.5 * mu * c * c;
                let w = lam[idx] + mu * c;
                // ∂c/∂r_i = Ω r_j, ∂c/∂r_j = −Ω r_i
                grads[i].axpy(w, &om[j], 1.0);
                grads[j].axpy(-w, &om[i], 1.0);
                idx += 1;
            }
        }
        (val, self.pull_back(&grads))
    }

    fn initial_point(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.free_dim() * self.param_dim();
        DVector::from_fn(n, |_, _| PERTURBATION * (2.0 * rng.random::<f64>() - 1.0))
    }

    fn scale(&self) -> f64 {
        max_abs(self.g.matrix()).max(1.0)
    }

    fn run_restart(&self, seed: u64) -> (RestartStat, DVector<f64>) {
        let m = self.param_dim();
        let mut z = self.initial_point(seed);
        let mut lam = vec![0.0; m * (m - 1) / 2];
        let mut iterations = 0;
        let target = 1e-13 * self.scale();
        let mut res = f64::INFINITY;
        'schedule: for &mu in &self.config.penalties {
            let mut prev = f64::INFINITY;
            for _ in 0..OUTER_PER_PENALTY {
                let inner = bfgs(
                    |z| self.lagrangian(z, &lam, mu),
                    z.clone(),
                    INNER_GRAD_TOL,
                    INNER_MAX_ITER,
                );
                iterations += inner.iterations;
                z = inner.x;
                let c = Self::constraints(&self.columns(&z));
                res = c.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                if res <= target {
                    break 'schedule;
                }
                for (l, ci) in lam.iter_mut().zip(&c) {
                    *l += mu * ci;
                }
                if res > 0.25 * prev {
                    break;
                }
                prev = res;
            }
        }
        let value = self.objective(&self.columns(&z));
        (
            RestartStat {
                seed,
                value,
                residual: res,
                feasible: res <= FEASIBILITY_TOL && value.is_finite(),
                iterations,
            },
            z,
        )
    }

    fn x_matrix(&self, z: &DVector<f64>) -> CMatrix {
        let m = self.param_dim();
        let cols = self.columns(z);
        let n = 2 * m;
        CMatrix::from_fn(2 * m + 1, m, |r, c| {
            if r == 0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(cols[c][r - 1], cols[c][r - 1 + n])
            }
        })
    }

    pub fn frame(&self) -> &LiftFrame {
        &self.frame
    }
}

fn run_all<T: Send>(seeds: Vec<u64>, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        seeds.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        seeds.into_iter().map(f).collect()
    }
}

fn restart_seeds(config: &OracleConfig) -> Vec<u64> {
    (0..config.restarts as u64)
        .map(|r| config.seed.wrapping_add(r))
        .collect()
}

/// Lowest feasible value over all restarts.
pub fn minimize(problem: &OracleProblem) -> Result<OracleResult> {
    let runs = run_all(restart_seeds(&problem.config), |s| problem.run_restart(s));
    let best = runs
        .iter()
        .filter(|(s, _)| s.feasible)
        .min_by(|(a, _), (b, _)| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)));
    let stats: Vec<RestartStat> = runs.iter().map(|(s, _)| s.clone()).collect();
    let Some((stat, z)) = best else {
        let best_residual = stats.iter().map(|s| s.residual).fold(f64::INFINITY, f64::min);
        return Err(if best_residual <= 1e-4 {
            Error::NonConvergence(format!(
                "no restart reached residual {FEASIBILITY_TOL:e}; best {best_residual:.3e}"
            ))
        } else {
            Error::Infeasible { best_residual }
        });
    };
    // Every feasible V dominates J^S⁻¹, so a value below the SLD bound means
    // the constraints were not really met.
    let floor = sld_bound(&problem.fd, &problem.g)?;
    if stat.value < floor - 1e-6 {
        return Err(Error::NonConvergence(format!(
            "value {} is below the SLD bound {floor}",
            stat.value
        )));
    }
    let x = problem.x_matrix(z);
    let xx = x.adjoint() * &x;
    let v = RSymMatrix::new(real_part(&xx))?;
    let xl = real_part(&(x.adjoint() * &problem.frame.lifts));
    let m = problem.param_dim();
    Ok(OracleResult {
        value: stat.value,
        v,
        x_best: (0..x.nrows())
            .map(|r| (0..m).map(|c| [x[(r, c)].re, x[(r, c)].im]).collect())
            .collect(),
        commutation_residual: max_abs(&imag_part(&xx)),
        unbiasedness_residual: max_abs(&(xl - RMatrix::identity(m, m))),
        best_seed: stat.seed,
        restarts: stats,
        config: problem.config.clone(),
    })
}

/// Recovers `Λ` from `X(G − iΛ) = L'VG` by least squares and reports how well
/// the first-order conditions hold.
pub fn stationarity_certificate(result: &OracleResult, problem: &OracleProblem) -> Result<StationarityReport> {
    let ev = result.estimation_vectors();
    let x = &ev.x;
    let m = problem.param_dim();
    let g = problem.g.matrix();
    let v = result.v.matrix();
    let gc = complexify(g);
    let rhs = &problem.frame.lifts * complexify(&(v * g)) - x * &gc;
    // −i X Λ = rhs, unknowns λ_pq (p < q) with Λ = Σ λ_pq (E_pq − E_qp).
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|p| (p + 1..m).map(move |q| (p, q))).collect();
    let d = x.nrows();
    let rows = 2 * d * m;
    let mut a = RMatrix::zeros(rows, pairs.len());
    let mut b = DVector::zeros(rows);
    let idx = |r: usize, c: usize, imag: bool| 2 * (c * d + r) + usize::from(imag);
    for r in 0..d {
        for c in 0..m {
            b[idx(r, c, false)] = rhs[(r, c)].re;
            b[idx(r, c, true)] = rhs[(r, c)].im;
        }
    }
    for (k, &(p, q)) in pairs.iter().enumerate() {
        // (XΛ)_{rc}: Λ_pc = +1 for c = q, Λ_qc = −1 for c = p.
        for r in 0..d {
            let col_q = x[(r, p)];
            let col_p = -x[(r, q)];
            for (c, val) in [(q, col_q), (p, col_p)] {
                let t = val * Complex64::new(0.0, -1.0);
                a[(idx(r, c, false), k)] += t.re;
                a[(idx(r, c, true), k)] += t.im;
            }
        }
    }
    let lam_vec = if pairs.is_empty() {
        DVector::zeros(0)
    } else {
        a.clone()
            .svd(true, true)
            .solve(&b, 1e-12)
            .map_err(|e| Error::NonConvergence(e.to_string()))?
    };
    let mut lambda = RMatrix::zeros(m, m);
    for (k, &(p, q)) in pairs.iter().enumerate() {
        lambda[(p, q)] = lam_vec[k];
        lambda[(q, p)] = -lam_vec[k];
    }
    let lhs = x * (gc - complexify(&lambda) * Complex64::new(0.0, 1.0));
    let residual = max_abs(&(lhs - &problem.frame.lifts * complexify(&(v * g))));
    let two_param = (m == 2).then(|| {
        let js = problem.fd.js.matrix();
        let jt = problem.fd.jt.matrix();
        let gv = g * v;
        let vg = v * g;
        let r1 = &gv * g - &lambda * v * &lambda - &gv * js * &vg;
        let r2 = &gv * &lambda + &lambda * &vg + &gv * jt * &vg;
        (max_abs(&r1), max_abs(&r2))
    });
    let normalized_lambda_betas = if problem.g.is_positive_definite() {
        let gi = inv_sqrt_pd(&problem.g)?;
        let nl = RAntiMatrix::new(gi.matrix() * &lambda * gi.matrix())?;
        Some(antisym_canonical(&nl)?.betas)
    } else {
        None
    };
    Ok(StationarityReport {
        lambda: (0..m).map(|i| lambda.row(i).iter().copied().collect()).collect(),
        residual,
        two_param,
        normalized_lambda_betas,
    })
}

/// Result of a feasibility search for a target covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleScan {
    pub feasible: bool,
    /// `max(|Re X*X − V|, |Im X*X|)` at the best restart.
    pub residual: f64,
}

/// Does some unbiased commuting `X` have `Re X*X = V_target`?
pub fn feasible_scan(problem: &OracleProblem, v_target: &RSymMatrix) -> Result<FeasibleScan> {
    let m = problem.param_dim();
    if v_target.dim() != m {
        return Err(Error::DimensionMismatch(
            "target covariance has the wrong size".into(),
        ));
    }
    let vt = v_target.matrix().clone();
    let merit = |z: &DVector<f64>| -> (f64, DVector<f64>) {
        let cols = problem.columns(z);
        let om: Vec<_> = cols.iter().map(omega).collect();
        let mut val = 0.0;
        let mut grads: Vec<DVector<f64>> = cols.iter().map(|c| DVector::zeros(c.len())).collect();
        for k in 0..m {
            for j in 0..m {
                let e = cols[k].dot(&cols[j]) - vt[(k, j)];
                let c = cols[k].dot(&om[j]);
                val += e * e + c * c;
                grads[k].axpy(4.0 * e, &cols[j], 1.0);
                grads[k].axpy(4.0 * c, &om[j], 1.0);
            }
        }
        (val, problem.pull_back(&grads))
    };
    let residual_at = |z: &DVector<f64>| {
        let cols = problem.columns(z);
        let om: Vec<_> = cols.iter().map(omega).collect();
        let mut r = 0.0f64;
        for k in 0..m {
            for j in 0..m {
                r = r.max((cols[k].dot(&cols[j]) - vt[(k, j)]).abs());
                r = r.max(cols[k].dot(&om[j]).abs());
            }
        }
        r
    };
    let results = run_all(restart_seeds(&problem.config), |s| {
        let z = bfgs(&merit, problem.initial_point(s), 1e-14, 20 * INNER_MAX_ITER).x;
        residual_at(&z)
    });
    let residual = results.into_iter().fold(f64::INFINITY, f64::min);
    Ok(FeasibleScan {
        feasible: residual <= FEASIBILITY_TOL,
        residual,
    })
}
