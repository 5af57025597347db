//! Loading JSON documents, `key=value` overrides, and the digest embedded
//! in every output.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{AppError, ErrorKind};

pub fn parse_bytes(bytes: &[u8]) -> Result<Value, AppError> {
    serde_json::from_slice(bytes).map_err(|e| AppError::new(ErrorKind::Syntax, format!("invalid JSON: {e}")))
}

pub fn read_value(path: &Path) -> Result<Value, AppError> {
    let bytes = std::fs::read(path)
        .map_err(|e| AppError::new(ErrorKind::Io, format!("cannot read {}: {e}", path.display())))?;
    parse_bytes(&bytes).map_err(|e| AppError { message: format!("{}: {}", path.display(), e.message), ..e })
}

/// Sets a dotted path such as `mc.seed` or `availability.1`, creating
/// missing object members along the way.
pub fn set_path(root: &mut Value, path: &str, new: Value) -> Result<(), AppError> {
    if path.is_empty() {
        return Err(AppError::usage("empty override key"));
    }
    let mut cur = root;
    for seg in path.split('.') {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        cur = match cur {
            Value::Object(map) => map.entry(seg.to_string()).or_insert(Value::Null),
            Value::Array(items) => {
                let len = items.len();
                let i: usize = seg.parse().map_err(|_| AppError::usage(format!("{path}: {seg:?} is not an index")))?;
                items.get_mut(i).ok_or_else(|| AppError::usage(format!("{path}: index {i} out of range {len}")))?
            }
            _ => return Err(AppError::usage(format!("{path}: {seg:?} descends into a scalar"))),
        };
    }
    *cur = new;
    Ok(())
}

/// `key=value`; the value is read as JSON when it parses, else as a string.
pub fn apply_override(root: &mut Value, assignment: &str) -> Result<(), AppError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| AppError::usage(format!("override {assignment:?} is not key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    set_path(root, key.trim(), value)
}

/// SHA-256 of the compact serialization; object keys are sorted, so equal
/// documents hash equally regardless of formatting.
pub fn digest(value: &Value) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn decode<T: DeserializeOwned>(value: Value) -> Result<T, AppError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        let err = AppError::new(ErrorKind::Schema, e.into_inner().to_string());
        if path == "." {
            err
        } else {
            err.at(path)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn overrides() {
        let mut v = json!({"alpha": 0.05, "mc": {"seed": 1}, "p": [0.1, 0.2]});
        apply_override(&mut v, "mc.seed=7").unwrap();
        apply_override(&mut v, "p.1=0.5").unwrap();
        apply_override(&mut v, "name=abc").unwrap();
        apply_override(&mut v, "new.inner=true").unwrap();
        assert_eq!(v, json!({"alpha": 0.05, "mc": {"seed": 7}, "p": [0.1, 0.5], "name": "abc", "new": {"inner": true}}));
        assert!(apply_override(&mut v, "p.9=1").is_err());
        assert!(apply_override(&mut v, "alpha.x=1").is_err());
        assert!(apply_override(&mut v, "noequals").is_err());
    }

    #[test]
    fn digest_ignores_formatting() {
        let a = parse_bytes(br#"{"b": 1, "a": [1, 2]}"#).unwrap();
        let b = parse_bytes(b"{\"a\":[1,2],\n \"b\":1}").unwrap();
        assert_eq!(digest(&a), digest(&b));
        assert_eq!(digest(&a).len(), 64);
    }

    #[test]
    fn schema_errors_carry_paths() {
        #[derive(Debug, serde::Deserialize)]
        struct Inner {
            #[allow(dead_code)]
            x: f64,
        }
        #[derive(Debug, serde::Deserialize)]
        struct Outer {
            #[allow(dead_code)]
            items: Vec<Inner>,
        }
        let e = decode::<Outer>(serde_json::json!({"items": [{"x": 1}, {"x": "a"}]})).unwrap_err();
        assert_eq!(e.code, ErrorKind::Schema);
        assert_eq!(e.field_path.as_deref(), Some("items[1].x"));
    }
}
