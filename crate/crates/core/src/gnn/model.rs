use serde::{Deserialize, Serialize};

use super::{GnnError, GnnHyper, GnnParams, INIT_SCHEME};
use crate::pddl::Domain;

pub const MODEL_FORMAT: &str = "genplan-model/1";

/// Serializable form of [`GnnParams`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedModel {
    pub format: String,
    pub hyper: GnnHyper,
    pub init_scheme: String,
    /// `name/arity` of every predicate of the augmented domain.
    pub signature: Vec<(String, usize)>,
    pub values: Vec<f64>,
}

impl SavedModel {
    pub fn from_params(params: &GnnParams) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            hyper: *params.hyper(),
            init_scheme: INIT_SCHEME.into(),
            signature: params.signature().to_vec(),
            values: params.values().to_vec(),
        }
    }

    /// Restores parameters, rejecting a domain with different predicates.
    pub fn to_params(&self, domain: &Domain) -> Result<GnnParams, GnnError> {
        if self.format != MODEL_FORMAT {
            return Err(GnnError::Format(format!("unsupported format {:?}", self.format)));
        }
        let params = GnnParams::from_values(self.signature.clone(), self.hyper, self.values.clone())?;
        params.check_domain(domain)?;
        Ok(params)
    }
}
