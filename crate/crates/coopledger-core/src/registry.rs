//! Creation-metadata validation, the work registry, and the
//! content-addressed repository.
//!
//! Creation metadata describes how a work was made and nothing else: no
//! ownership or licensing fields, no embedded asset bytes. Validation is a
//! fixed-order rule scan over the raw document so a contaminated field is
//! caught wherever it hides.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::crypto::Digest32;
use crate::error::CoopError;
use crate::ids;

/// Rights-ownership keys that must never appear in creation metadata.
pub const BLOCKLIST_KEYS: [&str; 5] =
    ["owner", "copyright_holder", "rights_share", "license", "royalty"];

/// Keys that would smuggle the work's bytes into the metadata document.
pub const EMBEDDED_ASSET_KEYS: [&str; 3] = ["asset_bytes", "asset_content", "embedded_asset"];

/// First violated validation rule, in the fixed order
/// (blocklist, embedded-asset, creators, id-format, shape).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MetadataViolation {
    Blocklist(String),
    EmbeddedAsset(String),
    CreatorsEmpty,
    CreatorsInvalid(String),
    IdFormat(String),
    Shape(String),
}

impl core::fmt::Display for MetadataViolation {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            MetadataViolation::Blocklist(key) => write!(f, "blocklist: {key}"),
            MetadataViolation::EmbeddedAsset(key) => write!(f, "embedded-asset: {key}"),
            MetadataViolation::CreatorsEmpty => write!(f, "creators-empty"),
            MetadataViolation::CreatorsInvalid(why) => write!(f, "creators-invalid: {why}"),
            MetadataViolation::IdFormat(id) => write!(f, "id-format: {id}"),
            MetadataViolation::Shape(why) => write!(f, "shape: {why}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CreatorRole {
    Composer,
    Lyricist,
    Performer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Creator {
    pub member_id: String,
    pub role: CreatorRole,
}

/// Typed view over a validated creation-metadata document. The canonical
/// bytes of the *raw* document remain the digest authority; benign extra
/// fields survive there even though this view drops them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreationMetadata {
    pub work_id: String,
    pub title: String,
    pub creators: Vec<Creator>,
    pub version_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset_digest: Option<Digest32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_note: Option<String>,
}

/// Depth-first scan (sorted keys at each level) for any key in `needles`.
fn scan_keys<'a>(value: &'a Value, needles: &[&str]) -> Option<&'a str> {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                if needles.contains(&k.as_str()) {
                    return Some(k);
                }
                if let Some(hit) = scan_keys(v, needles) {
                    return Some(hit);
                }
            }
            None
        }
        Value::Array(items) => items.iter().find_map(|v| scan_keys(v, needles)),
        _ => None,
    }
}

/// Validates a raw creation-metadata document against the separation rules.
pub fn validate_creation_metadata(doc: &Value) -> Result<(), MetadataViolation> {
    if let Some(key) = scan_keys(doc, &BLOCKLIST_KEYS) {
        return Err(MetadataViolation::Blocklist(key.to_string()));
    }
    if let Some(key) = scan_keys(doc, &EMBEDDED_ASSET_KEYS) {
        return Err(MetadataViolation::EmbeddedAsset(key.to_string()));
    }
    let obj = doc
        .as_object()
        .ok_or_else(|| MetadataViolation::Shape("document must be an object".to_string()))?;
    match obj.get("creators") {
        None => return Err(MetadataViolation::CreatorsEmpty),
        Some(Value::Array(items)) if items.is_empty() => {
            return Err(MetadataViolation::CreatorsEmpty)
        }
        Some(Value::Array(items)) => {
            for item in items {
                if serde_json::from_value::<Creator>(item.clone()).is_err() {
                    return Err(MetadataViolation::CreatorsInvalid(
                        "each creator needs member_id and a Composer/Lyricist/Performer role"
                            .to_string(),
                    ));
                }
            }
        }
        Some(_) => {
            return Err(MetadataViolation::CreatorsInvalid("creators must be a list".to_string()))
        }
    }
    match obj.get("work_id").and_then(Value::as_str) {
        Some(id) if ids::is_valid_work_id(id) => {}
        Some(id) => return Err(MetadataViolation::IdFormat(id.to_string())),
        None => return Err(MetadataViolation::IdFormat("missing work_id".to_string())),
    }
    Ok(())
}

/// Validates, then shapes the document into its typed view.
pub fn parse_creation_metadata(doc: &Value) -> Result<CreationMetadata, MetadataViolation> {
    validate_creation_metadata(doc)?;
    serde_json::from_value(doc.clone())
        .map_err(|e| MetadataViolation::Shape(alloc::format!("{e}")))
}

/// On-ledger notarization record for one registered version of a work.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistryEntry {
    pub work_id: String,
    pub version_label: String,
    pub metadata_digest: Digest32,
    pub pointer: String,
    pub registrant: String,
    pub tx_id: Digest32,
    pub logical_time: u64,
}

/// Result of following a work id back to its newest document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWork {
    pub entry: RegistryEntry,
    /// Typed view of the stored document; absent when the stored bytes no
    /// longer parse (tampering).
    pub metadata: Option<CreationMetadata>,
    pub digest_ok: bool,
}

/// Content-addressed object store for master files, metadata documents, and
/// license prose.
#[derive(Debug, Clone, Default)]
pub struct Repository {
    objects: BTreeMap<Digest32, RepositoryObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryObject {
    pub content_digest: Digest32,
    pub bytes: Vec<u8>,
    pub owner: String,
}

impl Repository {
    /// Stores bytes under their digest. Idempotent: identical bytes yield
    /// the same digest and one stored object (first owner wins).
    pub fn store(&mut self, bytes: Vec<u8>, owner: &str) -> Digest32 {
        let digest = Digest32::of_bytes(&bytes);
        self.objects.entry(digest).or_insert_with(|| RepositoryObject {
            content_digest: digest,
            bytes,
            owner: owner.to_string(),
        });
        digest
    }

    pub fn fetch(&self, digest: &Digest32) -> Option<&[u8]> {
        self.objects.get(digest).map(|o| o.bytes.as_slice())
    }

    pub fn contains(&self, digest: &Digest32) -> bool {
        self.objects.contains_key(digest)
    }

    pub fn object(&self, digest: &Digest32) -> Option<&RepositoryObject> {
        self.objects.get(digest)
    }

    pub fn objects_owned_by(&self, owner: &str) -> u64 {
        self.objects.values().filter(|o| o.owner == owner).count() as u64
    }

    /// Deletes every object the owner holds; returns the purged digests.
    pub fn purge_owner(&mut self, owner: &str) -> Vec<Digest32> {
        let doomed: Vec<Digest32> = self
            .objects
            .iter()
            .filter(|(_, o)| o.owner == owner)
            .map(|(d, _)| *d)
            .collect();
        for d in &doomed {
            self.objects.remove(d);
        }
        doomed
    }

    pub fn iter(&self) -> impl Iterator<Item = &RepositoryObject> {
        self.objects.values()
    }

    pub fn remove(&mut self, digest: &Digest32) {
        self.objects.remove(digest);
    }

    /// Restores a persisted object verbatim (node startup).
    pub fn insert_object(&mut self, object: RepositoryObject) {
        self.objects.insert(object.content_digest, object);
    }

    /// Test hook: replaces stored bytes without touching the digest key.
    pub fn tamper(&mut self, digest: &Digest32, bytes: Vec<u8>) {
        if let Some(o) = self.objects.get_mut(digest) {
            o.bytes = bytes;
        }
    }
}

/// Versioned registry of notarized works.
#[derive(Debug, Clone, Default)]
pub struct WorkRegistry {
    entries: BTreeMap<String, Vec<RegistryEntry>>,
}

impl WorkRegistry {
    pub fn version_exists(&self, work_id: &str, version_label: &str) -> bool {
        self.entries
            .get(work_id)
            .is_some_and(|v| v.iter().any(|e| e.version_label == version_label))
    }

    pub fn latest(&self, work_id: &str) -> Option<&RegistryEntry> {
        self.entries.get(work_id).and_then(|v| v.last())
    }

    pub fn versions(&self, work_id: &str) -> Option<&[RegistryEntry]> {
        self.entries.get(work_id).map(|v| v.as_slice())
    }

    /// Finds the entry pinned by a (work_id, registry tx) reference.
    pub fn by_ref(&self, work_id: &str, tx_id: &Digest32) -> Option<&RegistryEntry> {
        self.entries.get(work_id)?.iter().find(|e| &e.tx_id == tx_id)
    }

    pub fn insert(&mut self, entry: RegistryEntry) {
        self.entries.entry(entry.work_id.clone()).or_default().push(entry);
    }

    pub fn iter(&self) -> impl Iterator<Item = &RegistryEntry> {
        self.entries.values().flat_map(|v| v.iter())
    }

    /// Resolves the newest entry for `work_id` against the repository.
    pub fn resolve(&self, work_id: &str, repo: &Repository) -> Result<ResolvedWork, CoopError> {
        let entry = self
            .latest(work_id)
            .ok_or_else(|| CoopError::NotFound(alloc::format!("work {work_id}")))?;
        let bytes = repo
            .fetch(&entry.metadata_digest)
            .ok_or_else(|| CoopError::Dangling(alloc::format!("document for {work_id}")))?;
        let digest_ok = Digest32::of_bytes(bytes) == entry.metadata_digest;
        let metadata = serde_json::from_slice::<Value>(bytes)
            .ok()
            .and_then(|v| serde_json::from_value(v).ok());
        Ok(ResolvedWork { entry: entry.clone(), metadata, digest_ok })
    }
}

/// Full-registry audit: re-scans every stored metadata document for
/// separation violations. Returns offending work ids.
pub fn audit_separation(works: &WorkRegistry, repo: &Repository) -> Vec<String> {
    let mut bad = BTreeSet::new();
    for entry in works.iter() {
        if let Some(bytes) = repo.fetch(&entry.metadata_digest) {
            match serde_json::from_slice::<Value>(bytes) {
                Ok(doc) if validate_creation_metadata(&doc).is_ok() => {}
                _ => {
                    bad.insert(entry.work_id.clone());
                }
            }
        }
    }
    bad.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn clean_doc() -> Value {
        json!({
            "work_id": "wrk:abcdefghijklmnopqrstuvwxyz",
            "title": "Song A",
            "creators": [{"member_id": "mem:1234", "role": "Composer"}],
            "version_label": "v1",
            "created_note": "recorded at home"
        })
    }

    #[test]
    fn well_formed_doc_validates() {
        assert_eq!(validate_creation_metadata(&clean_doc()), Ok(()));
        let meta = parse_creation_metadata(&clean_doc()).unwrap();
        assert_eq!(meta.title, "Song A");
        assert_eq!(meta.creators.len(), 1);
    }

    #[test]
    fn blocklist_key_rejected_wherever_it_hides() {
        let mut doc = clean_doc();
        doc["copyright_holder"] = json!("Ada");
        assert_eq!(
            validate_creation_metadata(&doc),
            Err(MetadataViolation::Blocklist("copyright_holder".to_string()))
        );
        let mut nested = clean_doc();
        nested["session"] = json!({"notes": {"royalty": "1/2"}});
        assert_eq!(
            validate_creation_metadata(&nested),
            Err(MetadataViolation::Blocklist("royalty".to_string()))
        );
        let mut in_array = clean_doc();
        in_array["takes"] = json!([{"license": "x"}]);
        assert!(matches!(
            validate_creation_metadata(&in_array),
            Err(MetadataViolation::Blocklist(_))
        ));
    }

    #[test]
    fn blocklist_precedes_other_rules() {
        // Contaminated AND creator-less: blocklist must be named first.
        let doc = json!({"owner": "Ada", "creators": []});
        assert_eq!(
            validate_creation_metadata(&doc),
            Err(MetadataViolation::Blocklist("owner".to_string()))
        );
    }

    #[test]
    fn embedded_asset_bytes_rejected() {
        let mut doc = clean_doc();
        doc["asset_bytes"] = json!("UklGRiQAAABXQVZF");
        assert_eq!(
            validate_creation_metadata(&doc),
            Err(MetadataViolation::EmbeddedAsset("asset_bytes".to_string()))
        );
    }

    #[test]
    fn empty_creators_rejected() {
        let mut doc = clean_doc();
        doc["creators"] = json!([]);
        assert_eq!(validate_creation_metadata(&doc), Err(MetadataViolation::CreatorsEmpty));
    }

    #[test]
    fn bad_work_id_rejected() {
        let mut doc = clean_doc();
        doc["work_id"] = json!("wrk:TOO_SHORT");
        assert!(matches!(validate_creation_metadata(&doc), Err(MetadataViolation::IdFormat(_))));
    }

    #[test]
    fn benign_extra_fields_pass() {
        let mut doc = clean_doc();
        doc["studio"] = json!("Abbey Road");
        doc["asset_digest"] = json!(Digest32::of_bytes(b"master").to_hex());
        assert_eq!(validate_creation_metadata(&doc), Ok(()));
    }

    #[test]
    fn repository_roundtrip_and_idempotence() {
        let mut repo = Repository::default();
        let payload = vec![7u8; 1 << 20]; // 1 MiB
        let d1 = repo.store(payload.clone(), "m1");
        let d2 = repo.store(payload.clone(), "m1");
        assert_eq!(d1, d2);
        assert_eq!(repo.iter().count(), 1);
        assert_eq!(repo.fetch(&d1).unwrap(), payload.as_slice());
    }

    #[test]
    fn purge_removes_exactly_the_owners_objects() {
        let mut repo = Repository::default();
        let a = repo.store(vec![1], "m1");
        let b = repo.store(vec![2], "m1");
        let c = repo.store(vec![3], "m2");
        let purged = repo.purge_owner("m1");
        assert_eq!(purged.len(), 2);
        assert!(purged.contains(&a) && purged.contains(&b));
        assert!(repo.fetch(&a).is_none());
        assert!(repo.fetch(&c).is_some());
    }
}
