//! JSON persistence of trained models.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::pipeline::FusionModel;

pub const SCHEMA_VERSION: u64 = 1;

pub fn save_model<W: Write>(model: &FusionModel, writer: W) -> Result<()> {
    serde_json::to_writer_pretty(writer, model)?;
    Ok(())
}

/// Reads and validates a model. Floats round-trip exactly, so a loaded
/// model reproduces the saved one bit for bit.
pub fn load_model<R: Read>(mut reader: R) -> Result<FusionModel> {
    let mut text = String::new();
    reader.read_to_string(&mut text)?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Error::Structure(format!("malformed model file: {e}")))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| Error::Structure("missing field `schema_version`".into()))?
        .as_u64()
        .ok_or_else(|| Error::Structure("`schema_version` must be a non-negative integer".into()))?;
    if version != SCHEMA_VERSION {
        return Err(Error::Version {
            found: version,
            expected: SCHEMA_VERSION,
        });
    }
    let model: FusionModel = serde_json::from_value(value).map_err(|e| Error::Structure(format!("invalid model: {e}")))?;
    model.validate()?;
    Ok(model)
}

pub fn save_model_file(model: &FusionModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_model_file(path: &Path) -> Result<FusionModel> {
    load_model(std::io::BufReader::new(std::fs::File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn version_checked_before_structure() {
        let err = load_model(r#"{"schema_version": 2}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Version { found: 2, expected: 1 }));
    }

    #[test]
    fn missing_fields_named() {
        let err = load_model(r#"{"schema_version": 1}"#.as_bytes()).unwrap_err();
        match err {
            Error::Structure(m) => assert!(m.contains("sensors"), "{m}"),
            e => panic!("{e:?}"),
        }
        let err = load_model(r#"{"sensors": []}"#.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Structure(m) if m.contains("schema_version")));
    }

    #[test]
    fn truncated_file_rejected() {
        assert!(matches!(load_model(r#"{"schema_version": 1, "sen"#.as_bytes()), Err(Error::Structure(_))));
    }
}
