//! Canonical document serialization.
//!
//! Every digest, signature, and wire format in this crate is computed over
//! the canonical form: UTF-8 JSON with object keys sorted lexicographically
//! and no insignificant whitespace. Two implementations that agree on field
//! names therefore agree on every transaction id.

use alloc::string::String;
use alloc::vec::Vec;

use serde::Serialize;

use crate::crypto::Digest32;

/// Serialization failure (non-finite floats, map keys that are not strings).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalError(pub String);

impl core::fmt::Display for CanonicalError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "canonical serialization failed: {}", self.0)
    }
}

/// Renders `value` in canonical form.
///
/// `serde_json::Value` maps are BTree-backed, so converting through `Value`
/// sorts keys at every nesting level; `to_string` emits no whitespace.
pub fn to_canonical_string<T: Serialize>(value: &T) -> Result<String, CanonicalError> {
    let v = serde_json::to_value(value).map_err(|e| CanonicalError(alloc::format!("{e}")))?;
    serde_json::to_string(&v).map_err(|e| CanonicalError(alloc::format!("{e}")))
}

/// Canonical form as bytes.
pub fn to_canonical_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    to_canonical_string(value).map(String::into_bytes)
}

/// SHA-256 digest of the canonical form.
pub fn digest<T: Serialize>(value: &T) -> Result<Digest32, CanonicalError> {
    Ok(Digest32::of_bytes(&to_canonical_bytes(value)?))
}
