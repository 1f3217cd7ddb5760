use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Model;
use crate::error::{Error, Result};
use crate::linalg::Hyperbox;
use crate::repair::{LinearConstraint, Property};

/// One entry of a property file: every input in the box must satisfy
/// `coeffs · f(x) + bias ≥ 0` for each constraint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropertyRecord {
    pub label: String,
    pub input_lower: Vec<f64>,
    pub input_upper: Vec<f64>,
    pub constraints: Vec<LinearConstraint>,
}

impl PropertyRecord {
    pub fn from_property(p: &Property) -> Self {
        PropertyRecord {
            label: p.label().to_string(),
            input_lower: p.input().lower().to_vec(),
            input_upper: p.input().upper().to_vec(),
            constraints: p.constraints().to_vec(),
        }
    }

    pub fn to_property(&self) -> Result<Property> {
        let bx = Hyperbox::new(self.input_lower.clone(), self.input_upper.clone())
            .map_err(|e| Error::InvalidProperty(format!("property '{}': {e}", self.label)))?;
        Property::new(bx, self.constraints.clone(), self.label.clone())
    }
}

/// Parses a JSON array of property records. With a model, each property is
/// checked against its dimensions and, for NNet models, converted from
/// physical units to the network's normalized coordinates.
pub fn properties_from_str(text: &str, model: Option<&Model>) -> Result<Vec<Property>> {
    let records: Vec<PropertyRecord> = serde_json::from_str(text)?;
    if records.is_empty() {
        return Err(Error::Empty("property file"));
    }
    records
        .iter()
        .map(|r| {
            let p = r.to_property()?;
            let Some(m) = model else { return Ok(p) };
            let p = match &m.normalization {
                Some(norm) => norm.normalize_property(&p)?,
                None => p,
            };
            p.check_against(&m.network)?;
            Ok(p)
        })
        .collect()
}

pub fn parse_properties(path: impl AsRef<Path>, model: Option<&Model>) -> Result<Vec<Property>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    properties_from_str(&text, model).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.to_path_buf(),
            line: j.line(),
            message: j.to_string(),
        },
        e => e,
    })
}

pub fn write_properties(props: &[Property], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let records: Vec<PropertyRecord> = props.iter().map(PropertyRecord::from_property).collect();
    let text = serde_json::to_string_pretty(&records)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}
