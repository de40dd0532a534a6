//! Versioned JSON envelopes for models and reports.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::geogrid::GridSpec;
use crate::{Error, Result};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub format_version: u32,
    pub model_type: String,
    pub grid_spec: GridSpec,
    pub payload: T,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Parses JSON text, checking `format_version` before the rest of the document.
pub fn parse_versioned<T: DeserializeOwned>(text: &str, expected: u32) -> Result<T> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Format(format!("invalid JSON: {e}")))?;
    let found = value
        .get("format_version")
        .and_then(serde_json::Value::as_u64)
        .ok_or_else(|| Error::Format("missing format_version".into()))? as u32;
    if found != expected {
        return Err(Error::VersionMismatch { expected, found });
    }
    serde_json::from_value(value).map_err(|e| Error::Format(e.to_string()))
}

pub fn save_envelope<T: Serialize>(
    path: &Path,
    model_type: &str,
    grid_spec: &GridSpec,
    payload: &T,
) -> Result<()> {
    let env = Envelope {
        format_version: MODEL_FORMAT_VERSION,
        model_type: model_type.to_string(),
        grid_spec: *grid_spec,
        payload,
    };
    fs::write(path, serde_json::to_vec(&env)?)?;
    Ok(())
}

/// Loads an envelope without interpreting the payload yet.
pub fn load_envelope(path: &Path) -> Result<Envelope<serde_json::Value>> {
    parse_versioned(&read_text(path)?, MODEL_FORMAT_VERSION)
}

/// `Vec<f64>` as base64 of little-endian bytes; lossless and compact.
pub mod f64_base64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn encode(values: &[f64]) -> String {
        let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        STANDARD.encode(bytes)
    }

    pub fn decode(text: &str) -> Result<Vec<f64>, String> {
        let bytes = STANDARD.decode(text).map_err(|e| e.to_string())?;
        if bytes.len() % 8 != 0 {
            return Err(format!("{} bytes is not a whole number of f64", bytes.len()));
        }
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect())
    }

    pub fn serialize<S: Serializer>(values: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&encode(values))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let text = String::deserialize(d)?;
        decode(&text).map_err(serde::de::Error::custom)
    }
}
