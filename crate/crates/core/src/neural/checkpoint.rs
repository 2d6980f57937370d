use std::path::Path;

use serde::{Deserialize, Serialize};

use super::PolicyParams;
use crate::error::{Error, Result};
use crate::graph::FEATURE_VERSION;
use crate::io::{read_json, write_json};

pub const CHECKPOINT_FORMAT: &str = "lnsforge-policy-v1";

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    feature_version: u32,
    params: PolicyParams,
}

pub fn save_checkpoint(path: &Path, params: &PolicyParams) -> Result<()> {
    write_json(
        path,
        &Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            feature_version: params.feature_version,
            params: params.clone(),
        },
    )
}

/// Loads a checkpoint, refusing files written for another feature layout.
pub fn load_checkpoint(path: &Path) -> Result<PolicyParams> {
    let ck: Checkpoint = read_json(path)?;
    if ck.format != CHECKPOINT_FORMAT {
        return Err(Error::InvalidParameter(format!(
            "{}: unknown checkpoint format {:?}",
            path.display(),
            ck.format
        )));
    }
    if ck.feature_version != FEATURE_VERSION || ck.params.feature_version != FEATURE_VERSION {
        return Err(Error::FeatureVersion {
            expected: FEATURE_VERSION,
            found: ck.feature_version,
        });
    }
    if !ck.params.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "{}: non-finite parameters",
            path.display()
        )));
    }
    Ok(ck.params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::PolicyConfig;

    #[test]
    fn round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.json");
        let p = PolicyParams::init(&PolicyConfig {
            embed: 4,
            hidden: 3,
            ..PolicyConfig::default()
        })
        .unwrap();
        save_checkpoint(&path, &p).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), p);

        let mut old = p.clone();
        old.feature_version = FEATURE_VERSION + 1;
        save_checkpoint(&path, &old).unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(Error::FeatureVersion { .. })
        ));
    }
}
