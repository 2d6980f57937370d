use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MipInstance, Row, Sense, Variable};
use crate::error::{Error, Result};

/// On-disk JSON layout of an instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub name: String,
    pub variables: Vec<Variable>,
    pub constraints: Vec<Row>,
    pub objective_sense: String,
}

impl From<&MipInstance> for InstanceFile {
    fn from(inst: &MipInstance) -> Self {
        InstanceFile {
            name: inst.name().to_string(),
            variables: inst.variables().to_vec(),
            constraints: inst
                .constraints()
                .iter()
                .map(|c| Row::new(c.name.clone(), c.terms.clone(), Sense::Le, c.rhs))
                .collect(),
            objective_sense: "min".to_string(),
        }
    }
}

impl InstanceFile {
    pub fn into_instance(self) -> Result<MipInstance> {
        if self.objective_sense != "min" {
            return Err(Error::Unsupported(format!(
                "objective_sense {:?} (only \"min\" is accepted)",
                self.objective_sense
            )));
        }
        MipInstance::from_rows(self.name, self.variables, self.constraints)
    }
}

impl MipInstance {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&InstanceFile::from(self)).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<MipInstance> {
        let file: InstanceFile = serde_json::from_str(text)
            .map_err(|e| Error::InvalidInstance(format!("unreadable instance JSON: {e}")))?;
        file.into_instance()
    }
}

pub fn read_instance(path: impl AsRef<Path>) -> Result<MipInstance> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    file.into_instance()
}

pub fn write_instance(path: impl AsRef<Path>, inst: &MipInstance) -> Result<()> {
    crate::io::write_atomic(path.as_ref(), inst.to_json().as_bytes())
}
