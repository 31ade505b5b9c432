//! Model files: `{"kind": "covariance" | "deformed-wigner", "alpha", "beta",
//! "entry_law", "rho" | "deformation"}`. `kind` defaults to `covariance`.

use crate::dyson::{CovarianceModel, EntryLaw};
use crate::error::{Error, Result};
use crate::measures::{MeasureJson, SpectralMeasure};
use crate::wigner::DeformedWignerModel;
use serde::{Deserialize, Serialize};

/// Either ensemble the library handles.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Covariance(CovarianceModel),
    DeformedWigner(DeformedWignerModel),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    #[serde(default = "default_kind")]
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default = "default_beta")]
    pub beta: u8,
    #[serde(default)]
    pub entry_law: EntryLaw,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<MeasureJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deformation: Option<MeasureJson>,
}

fn default_kind() -> String {
    "covariance".into()
}

fn default_beta() -> u8 {
    1
}

pub const COVARIANCE: &str = "covariance";
pub const DEFORMED_WIGNER: &str = "deformed-wigner";

impl Model {
    pub fn kind(&self) -> &'static str {
        match self {
            Model::Covariance(_) => COVARIANCE,
            Model::DeformedWigner(_) => DEFORMED_WIGNER,
        }
    }

    pub fn beta(&self) -> u8 {
        match self {
            Model::Covariance(m) => m.beta,
            Model::DeformedWigner(m) => m.beta,
        }
    }

    pub fn from_json(json: &ModelJson) -> Result<Self> {
        match json.kind.as_str() {
            COVARIANCE => {
                let rho = json
                    .rho
                    .as_ref()
                    .ok_or_else(|| Error::InvalidModel("covariance model needs 'rho'".into()))?;
                let alpha = json
                    .alpha
                    .ok_or_else(|| Error::InvalidModel("covariance model needs 'alpha'".into()))?;
                if json.deformation.is_some() {
                    return Err(Error::InvalidModel("'deformation' belongs to deformed-wigner models".into()));
                }
                Ok(Model::Covariance(CovarianceModel::new(
                    SpectralMeasure::from_json(rho)?,
                    alpha,
                    json.beta,
                    json.entry_law,
                )?))
            }
            DEFORMED_WIGNER => {
                let d = json
                    .deformation
                    .as_ref()
                    .ok_or_else(|| Error::InvalidModel("deformed-wigner model needs 'deformation'".into()))?;
                if json.rho.is_some() || json.alpha.is_some() {
                    return Err(Error::InvalidModel("'rho' and 'alpha' belong to covariance models".into()));
                }
                Ok(Model::DeformedWigner(DeformedWignerModel::new(
                    SpectralMeasure::from_json(d)?,
                    json.beta,
                    json.entry_law,
                )?))
            }
            other => Err(Error::InvalidModel(format!("unknown model kind '{other}'"))),
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let json: ModelJson = serde_json::from_str(s)?;
        Self::from_json(&json)
    }

    pub fn to_json(&self) -> Result<ModelJson> {
        Ok(match self {
            Model::Covariance(m) => ModelJson {
                kind: COVARIANCE.into(),
                alpha: Some(m.alpha),
                beta: m.beta,
                entry_law: m.entry_law,
                rho: Some(m.rho.to_json()?),
                deformation: None,
            },
            Model::DeformedWigner(m) => ModelJson {
                kind: DEFORMED_WIGNER.into(),
                alpha: None,
                beta: m.beta,
                entry_law: m.entry_law,
                rho: None,
                deformation: Some(m.mu_d.to_json()?),
            },
        })
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_json()?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covariance_round_trip() {
        let text = r#"{"alpha": 1.0, "beta": 1, "entry_law": "gaussian", "rho": {"atoms": [[1.0, 1.0]], "density": null}}"#;
        let m = Model::from_json_str(text).unwrap();
        assert_eq!(m.kind(), COVARIANCE);
        let back = Model::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn wigner_round_trip() {
        let text = r#"{"kind": "deformed-wigner", "entry_law": "complex_gaussian", "beta": 2,
            "deformation": {"atoms": [], "density": {"kind": "semicircle", "params": {"center": 0.0, "radius": 1.0}, "support": [-1.0, 1.0], "nodes": 64}}}"#;
        let m = Model::from_json_str(text).unwrap();
        assert_eq!(m.beta(), 2);
        let back = Model::from_json_str(&m.to_json_string().unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn rejects_bad_models() {
        assert!(Model::from_json_str(r#"{"alpha": 1.0}"#).is_err());
        assert!(Model::from_json_str(r#"{"kind": "other", "alpha": 1.0, "rho": {"atoms": [[1.0, 1.0]]}}"#).is_err());
        assert!(Model::from_json_str(r#"{"alpha": 1.0, "rho": {"atoms": [[1.0, 1.0]]}, "bogus": 1}"#).is_err());
        assert!(Model::from_json_str(r#"{"alpha": 1.0, "beta": 2, "rho": {"atoms": [[1.0, 1.0]]}}"#).is_err());
        assert!(Model::from_json_str("not json").is_err());
    }
}
