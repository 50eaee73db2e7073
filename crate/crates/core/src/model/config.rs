//! JSON model documents.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{catalog, tangent_frame, DerivativeMode, Evaluator, PureStateModel, TangentFrame};
use crate::error::{Error, Result};
use crate::linalg::CVector;

/// A model plus the point it is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelDoc {
    SpinRotation {
        s: f64,
        m_z: f64,
        theta: Vec<f64>,
    },
    ShiftedNumber {
        n: usize,
        theta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trunc: Option<usize>,
    },
    Squeezed {
        theta: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        trunc: Option<usize>,
    },
    Custom {
        dim: usize,
        m: usize,
        phi: Vec<[f64; 2]>,
        dphi: Vec<Vec<[f64; 2]>>,
        theta: Vec<f64>,
    },
}

/// A built model together with its evaluation point and frame.
#[derive(Debug, Clone)]
pub struct ModelPoint {
    pub model: PureStateModel,
    pub theta: Vec<f64>,
    pub frame: TangentFrame,
}

fn to_vector(entries: &[[f64; 2]]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|[re, im]| Complex64::new(*re, *im)))
}

/// A model known only at a single point, from tabulated `φ` and `∂_iφ`.
struct Tabulated {
    theta: Vec<f64>,
    phi: CVector,
    dphi: Vec<CVector>,
}

impl Tabulated {
    fn check(&self, theta: &[f64]) -> Result<()> {
        let off = theta
            .iter()
            .zip(&self.theta)
            .any(|(a, b)| (a - b).abs() > 1e-12);
        if off {
            Err(Error::Domain(
                "custom model is only defined at its tabulated theta".into(),
            ))
        } else {
            Ok(())
        }
    }
}

impl Evaluator for Tabulated {
    fn state(&self, theta: &[f64]) -> Result<CVector> {
        self.check(theta)?;
        Ok(self.phi.clone())
    }

    fn derivatives(&self, theta: &[f64]) -> Result<Vec<CVector>> {
        self.check(theta)?;
        Ok(self.dphi.clone())
    }
}

impl ModelDoc {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))
    }

    pub fn theta(&self) -> &[f64] {
        match self {
            ModelDoc::SpinRotation { theta, .. }
            | ModelDoc::ShiftedNumber { theta, .. }
            | ModelDoc::Squeezed { theta, .. }
            | ModelDoc::Custom { theta, .. } => theta,
        }
    }

    pub fn build_model(&self) -> Result<PureStateModel> {
        match self {
            ModelDoc::SpinRotation { s, m_z, theta } => {
                catalog::check_spin_theta(theta)?;
                catalog::spin_rotation(*s, *m_z)
            }
            ModelDoc::ShiftedNumber { n, theta, trunc } => {
                catalog::shifted_number(*n, theta, *trunc)
            }
            ModelDoc::Squeezed { theta, trunc } => catalog::squeezed(theta, *trunc),
            ModelDoc::Custom {
                dim,
                m,
                phi,
                dphi,
                theta,
            } => {
                if phi.len() != *dim {
                    return Err(Error::Schema(format!(
                        "\"phi\" has {} entries, \"dim\" is {dim}",
                        phi.len()
                    )));
                }
                if dphi.len() != *m || theta.len() != *m {
                    return Err(Error::Schema(format!(
                        "\"dphi\" and \"theta\" must have \"m\" = {m} entries"
                    )));
                }
                if dphi.iter().any(|d| d.len() != *dim) {
                    return Err(Error::Schema(format!(
                        "every \"dphi\" entry must have \"dim\" = {dim} components"
                    )));
                }
                let all = phi.iter().chain(dphi.iter().flatten()).flatten();
                if all.chain(theta.iter()).any(|x| !x.is_finite()) {
                    return Err(Error::NonFinite);
                }
                PureStateModel::new(
                    *dim,
                    *m,
                    "custom",
                    DerivativeMode::Analytic,
                    Arc::new(Tabulated {
                        theta: theta.clone(),
                        phi: to_vector(phi),
                        dphi: dphi.iter().map(|d| to_vector(d)).collect(),
                    }),
                )
            }
        }
    }

    /// Builds the model and evaluates its frame at the document's `theta`.
    pub fn build(&self) -> Result<ModelPoint> {
        let model = self.build_model()?;
        let theta = self.theta().to_vec();
        let frame = tangent_frame(&model, &theta)?;
        Ok(ModelPoint {
            model,
            theta,
            frame,
        })
    }
}

/// Parses and builds a model document.
pub fn model_from_config(text: &str) -> Result<ModelPoint> {
    ModelDoc::from_json(text)?.build()
}
