//! Browser bindings: the two-parameter boundary, a bound explorer for
//! `J^S = I`, and the β spectrum of spin rotation models.
//!
//! Every function returns a JSON string so the page needs no glue types.

use qcrb::analysis::{beta_spectrum, boundary_2param_window, cr_bound_2param, COHERENT_X_WINDOW};
use qcrb::linalg::{RAntiMatrix, RSymMatrix};
use qcrb::model::{catalog, fisher_data, tangent_frame, FisherData};
use serde_json::json;
use wasm_bindgen::prelude::wasm_bindgen;

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn normalized(beta: f64) -> Result<FisherData, String> {
    FisherData::from_parts(RSymMatrix::identity(2), RAntiMatrix::canonical(&[beta], 2)).map_err(err)
}

/// Points `(x, z, u, v)` of the boundary for `|β| = beta`.
#[wasm_bindgen]
pub fn boundary_curve(beta: f64, samples: usize) -> Result<String, String> {
    let curve = boundary_2param_window(beta, samples.max(2), COHERENT_X_WINDOW).map_err(err)?;
    serde_json::to_string(&curve).map_err(err)
}

/// Minimum of `Tr GV` over the boundary for `G = [[g11, g12], [g12, g22]]`,
/// with the optimal `V` and the level value of every sampled boundary point.
#[wasm_bindgen]
pub fn bound_2param(beta: f64, g11: f64, g12: f64, g22: f64, samples: usize) -> Result<String, String> {
    let fd = normalized(beta)?;
    let g = RSymMatrix::from_rows(&[vec![g11, g12], vec![g12, g22]]).map_err(err)?;
    let report = cr_bound_2param(&fd, &g).map_err(err)?;
    let curve = boundary_2param_window(beta, samples.max(2), COHERENT_X_WINDOW).map_err(err)?;
    // Tr GV for V' = Q diag(u, v) Qᵀ with Q the ascending eigenbasis of G.
    let (gs, _) = g.eig();
    let levels: Vec<f64> = curve.samples.iter().map(|p| gs[0] * p.u + gs[1] * p.v).collect();
    Ok(json!({
        "value": report.value,
        "attained": report.attained,
        "V_opt": report.v_opt,
        "sld_bound": g11 + g22,
        "weight_eigenvalues": gs,
        "curve": curve,
        "levels": levels,
    })
    .to_string())
}

/// β of the spin-`s` rotation family for every admissible `m_z` at
/// `(θ¹, θ²)`, next to `|m_z| / (s² + s − m_z²)`.
#[wasm_bindgen]
pub fn spin_spectrum(s: f64, theta1: f64, theta2: f64) -> Result<String, String> {
    let twice = (2.0 * s).round();
    if twice < 1.0 || (2.0 * s - twice).abs() > 1e-12 || twice > 40.0 {
        return Err(format!("s must be a half-integer in [1/2, 20], got {s}"));
    }
    let theta = [theta1, theta2];
    catalog::check_spin_theta(&theta).map_err(err)?;
    let rows = (0..=twice as usize)
        .map(|k| {
            let m = -s + k as f64;
            let model = catalog::spin_rotation(s, m).map_err(err)?;
            let fd = fisher_data(&tangent_frame(&model, &theta).map_err(err)?).map_err(err)?;
            let spectrum = beta_spectrum(&fd).map_err(err)?;
            Ok(json!({
                "m_z": m,
                "beta": spectrum.max(),
                "closed_form": m.abs() / (s * s + s - m * m),
                "classification": spectrum.classification,
            }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(json!({ "s": s, "theta": theta, "rows": rows }).to_string())
}
