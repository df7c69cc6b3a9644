//! The aggregate-only query engine.
//!
//! Algorithms come to the data: a fixed catalog (Count, Sum, Mean,
//! Histogram) runs inside the engine over records that never leave it.
//! Manifests need committee approval, consent is per (member, algorithm)
//! with latest-wins semantics, every group below the k-threshold is
//! suppressed, and every execution lands in a hash-chained audit log.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::{Digest32, SignatureBytes};
use crate::error::CoopError;

/// A single attribute: numeric or categorical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Number(f64),
    Category(String),
}

impl AttrValue {
    pub fn as_number(&self) -> Option<f64> {
        match self {
            AttrValue::Number(n) => Some(*n),
            AttrValue::Category(_) => None,
        }
    }

    /// Label form, used for grouping and histogram buckets.
    pub fn label(&self) -> String {
        match self {
            AttrValue::Number(n) => {
                canonical::to_canonical_string(n).unwrap_or_else(|_| "?".to_string())
            }
            AttrValue::Category(s) => s.clone(),
        }
    }
}

/// A member's record held inside the engine. Nothing outside this module
/// ever receives one of these; only aggregates cross the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonalDataRecord {
    pub owner: String,
    pub schema_id: String,
    pub attributes: BTreeMap<String, AttrValue>,
    pub stored_at: u64,
}

/// Opaque handle returned by ingest; cannot dereference to raw data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RecordId(pub u64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmKind {
    Count,
    Sum,
    Mean,
    Histogram,
}

impl AlgorithmKind {
    pub fn parse(s: &str) -> Option<AlgorithmKind> {
        match s {
            "Count" | "count" => Some(AlgorithmKind::Count),
            "Sum" | "sum" => Some(AlgorithmKind::Sum),
            "Mean" | "mean" => Some(AlgorithmKind::Mean),
            "Histogram" | "histogram" => Some(AlgorithmKind::Histogram),
            _ => None,
        }
    }
}

/// Manifest parameters as signed by committee approvers. The algorithm id
/// derives from this digest, so identical manifests share an id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestParams {
    pub algorithm: AlgorithmKind,
    pub schema_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group_by: Option<String>,
    pub description: String,
}

impl ManifestParams {
    pub fn digest(&self) -> Digest32 {
        canonical::digest(self).expect("manifest params always serialize")
    }

    /// Count takes no target field; the others need one.
    pub fn check_shape(&self) -> Result<(), CoopError> {
        match (self.algorithm, &self.target_field) {
            (AlgorithmKind::Count, Some(_)) => {
                Err(CoopError::InvalidManifest("Count takes no target_field".to_string()))
            }
            (AlgorithmKind::Count, None) => Ok(()),
            (_, None) => Err(CoopError::InvalidManifest("target_field required".to_string())),
            (_, Some(_)) => Ok(()),
        }
    }
}

/// A committee member's signature over the manifest digest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Approval {
    pub member_id: String,
    pub signature: SignatureBytes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmManifest {
    pub alg_id: String,
    #[serde(flatten)]
    pub params: ManifestParams,
    pub approved: bool,
    pub approvals: Vec<Approval>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsentRecord {
    pub member_id: String,
    pub alg_id: String,
    pub granted: bool,
    pub set_at: u64,
}

/// Contributor count for one group: exact when emitted, withheld as `"<k"`
/// when the group is suppressed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Contributors {
    Exact(u64),
    BelowThreshold { k: u64 },
}

impl Serialize for Contributors {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Contributors::Exact(n) => s.serialize_u64(*n),
            Contributors::BelowThreshold { k } => s.serialize_str(&alloc::format!("<{k}")),
        }
    }
}

impl<'de> Deserialize<'de> for Contributors {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => {
                n.as_u64().map(Contributors::Exact).ok_or_else(|| D::Error::custom("bad count"))
            }
            serde_json::Value::String(s) => s
                .strip_prefix('<')
                .and_then(|rest| rest.parse().ok())
                .map(|k| Contributors::BelowThreshold { k })
                .ok_or_else(|| D::Error::custom("bad suppressed count")),
            _ => Err(D::Error::custom("bad contributor count")),
        }
    }
}

/// Aggregate value for one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GroupValue {
    Count(u64),
    Sum(f64),
    Mean(f64),
    Histogram(BTreeMap<String, u64>),
    #[serde(rename = "SUPPRESSED")]
    Suppressed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupResult {
    pub label: String,
    pub contributors: Contributors,
    pub value: GroupValue,
}

impl GroupResult {
    pub fn is_suppressed(&self) -> bool {
        matches!(self.value, GroupValue::Suppressed)
    }
}

/// The only thing a query returns: per-group aggregates, never records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub alg_id: String,
    pub groups: Vec<GroupResult>,
    pub k_threshold: u64,
    pub executed_at: u64,
}

/// One audit row per execution attempt, hash-chained like the main ledger.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditLogEntry {
    pub entry_id: u64,
    pub requester: String,
    pub alg_id: String,
    pub cohort_size: u64,
    pub suppressed_group_count: u64,
    pub result_digest: Digest32,
    pub logged_at: u64,
    pub prev_hash: Digest32,
    pub entry_hash: Digest32,
}

/// The hashed portion of an audit entry.
#[derive(Serialize)]
struct AuditEntryBody<'a> {
    entry_id: u64,
    requester: &'a str,
    alg_id: &'a str,
    cohort_size: u64,
    suppressed_group_count: u64,
    result_digest: &'a Digest32,
    logged_at: u64,
    prev_hash: &'a Digest32,
}

fn audit_entry_hash(e: &AuditLogEntry) -> Digest32 {
    canonical::digest(&AuditEntryBody {
        entry_id: e.entry_id,
        requester: &e.requester,
        alg_id: &e.alg_id,
        cohort_size: e.cohort_size,
        suppressed_group_count: e.suppressed_group_count,
        result_digest: &e.result_digest,
        logged_at: e.logged_at,
        prev_hash: &e.prev_hash,
    })
    .expect("audit entries always serialize")
}

/// Append-only, tamper-evident audit log.
#[derive(Debug, Clone, Default)]
pub struct AuditLog {
    entries: Vec<AuditLogEntry>,
}

impl AuditLog {
    pub fn append(
        &mut self,
        requester: &str,
        alg_id: &str,
        cohort_size: u64,
        suppressed_group_count: u64,
        result_digest: Digest32,
        logged_at: u64,
    ) -> &AuditLogEntry {
        let prev_hash = self.entries.last().map(|e| e.entry_hash).unwrap_or(Digest32::ZERO);
        let mut entry = AuditLogEntry {
            entry_id: self.entries.len() as u64,
            requester: requester.to_string(),
            alg_id: alg_id.to_string(),
            cohort_size,
            suppressed_group_count,
            result_digest,
            logged_at,
            prev_hash,
            entry_hash: Digest32::ZERO,
        };
        entry.entry_hash = audit_entry_hash(&entry);
        self.entries.push(entry);
        self.entries.last().expect("just pushed")
    }

    pub fn entries(&self) -> &[AuditLogEntry] {
        &self.entries
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Recomputes every hash and link; Err carries the earliest bad index.
    pub fn verify(&self) -> Result<(), u64> {
        let mut prev = Digest32::ZERO;
        for (i, e) in self.entries.iter().enumerate() {
            if e.entry_id != i as u64
                || e.prev_hash != prev
                || audit_entry_hash(e) != e.entry_hash
            {
                return Err(i as u64);
            }
            prev = e.entry_hash;
        }
        Ok(())
    }

    /// Rebuilds a log from persisted entries, verifying as it goes.
    pub fn from_entries(entries: Vec<AuditLogEntry>) -> Result<AuditLog, u64> {
        let log = AuditLog { entries };
        log.verify()?;
        Ok(log)
    }
}

/// Filter for audit reads; `None` fields match everything.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct AuditFilter {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requester: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alg_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from_tick: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to_tick: Option<u64>,
}

impl AuditFilter {
    pub fn matches(&self, e: &AuditLogEntry) -> bool {
        self.requester.as_deref().is_none_or(|r| e.requester == r)
            && self.alg_id.as_deref().is_none_or(|a| e.alg_id == a)
            && self.from_tick.is_none_or(|t| e.logged_at >= t)
            && self.to_tick.is_none_or(|t| e.logged_at <= t)
    }
}

/// Engine state: records, manifests, consent, audit.
#[derive(Debug, Clone, Default)]
pub struct OpalEngine {
    records: BTreeMap<RecordId, PersonalDataRecord>,
    next_record: u64,
    manifests: BTreeMap<String, AlgorithmManifest>,
    consent: BTreeMap<(String, String), ConsentRecord>,
    pub audit: AuditLog,
}

impl OpalEngine {
    pub fn ingest(&mut self, record: PersonalDataRecord) -> Result<RecordId, CoopError> {
        if record.attributes.is_empty() {
            return Err(CoopError::EmptyRecord);
        }
        let id = RecordId(self.next_record);
        self.next_record += 1;
        self.records.insert(id, record);
        Ok(id)
    }

    /// Drops every record a departing member owns.
    pub fn purge_owner(&mut self, owner: &str) -> u64 {
        let doomed: Vec<RecordId> = self
            .records
            .iter()
            .filter(|(_, r)| r.owner == owner)
            .map(|(id, _)| *id)
            .collect();
        for id in &doomed {
            self.records.remove(id);
        }
        doomed.len() as u64
    }

    pub fn manifest(&self, alg_id: &str) -> Option<&AlgorithmManifest> {
        self.manifests.get(alg_id)
    }

    pub fn insert_manifest(&mut self, manifest: AlgorithmManifest) {
        self.manifests.insert(manifest.alg_id.clone(), manifest);
    }

    pub fn manifests(&self) -> impl Iterator<Item = &AlgorithmManifest> {
        self.manifests.values()
    }

    pub fn set_consent(&mut self, record: ConsentRecord) {
        self.consent.insert((record.member_id.clone(), record.alg_id.clone()), record);
    }

    /// Latest-wins consent state; the default is not granted.
    pub fn consent_granted(&self, member_id: &str, alg_id: &str) -> bool {
        self.consent
            .get(&(member_id.to_string(), alg_id.to_string()))
            .is_some_and(|c| c.granted)
    }

    /// Owners whose latest consent for the algorithm is a grant.
    pub fn consenting_owners(&self, alg_id: &str) -> BTreeSet<String> {
        self.consent
            .values()
            .filter(|c| c.alg_id == alg_id && c.granted)
            .map(|c| c.member_id.clone())
            .collect()
    }

    /// Records persisted by the engine, for stores that mirror them to disk.
    pub fn records(&self) -> impl Iterator<Item = (&RecordId, &PersonalDataRecord)> {
        self.records.iter()
    }

    pub fn restore_record(&mut self, id: RecordId, record: PersonalDataRecord) {
        self.next_record = self.next_record.max(id.0 + 1);
        self.records.insert(id, record);
    }

    /// Runs an approved manifest over the consenting cohort and applies
    /// k-threshold suppression. Group keys are the `group_by` labels (one
    /// `"all"` group when ungrouped); the contributor count that gates
    /// suppression is the number of distinct owners in the group.
    pub fn aggregate(&self, manifest: &AlgorithmManifest, k: u64, executed_at: u64) -> AggregateResult {
        let consenting = self.consenting_owners(&manifest.alg_id);
        let cohort: Vec<&PersonalDataRecord> = self
            .records
            .values()
            .filter(|r| r.schema_id == manifest.params.schema_id && consenting.contains(&r.owner))
            .collect();

        let mut grouped: BTreeMap<String, Vec<&PersonalDataRecord>> = BTreeMap::new();
        for r in cohort {
            let label = match &manifest.params.group_by {
                Some(field) => match r.attributes.get(field) {
                    Some(v) => v.label(),
                    None => continue, // no group label, no contribution
                },
                None => "all".to_string(),
            };
            grouped.entry(label).or_default().push(r);
        }
        if manifest.params.group_by.is_none() {
            grouped.entry("all".to_string()).or_default();
        }

        let groups = grouped
            .into_iter()
            .map(|(label, records)| {
                let owners: BTreeSet<&str> =
                    records.iter().map(|r| r.owner.as_str()).collect();
                let contributor_count = owners.len() as u64;
                if contributor_count < k {
                    return GroupResult {
                        label,
                        contributors: Contributors::BelowThreshold { k },
                        value: GroupValue::Suppressed,
                    };
                }
                let value = compute_group_value(&manifest.params, &records);
                GroupResult { label, contributors: Contributors::Exact(contributor_count), value }
            })
            .collect();

        AggregateResult {
            alg_id: manifest.alg_id.clone(),
            groups,
            k_threshold: k,
            executed_at,
        }
    }

    /// Distinct owners contributing records to the algorithm's cohort.
    pub fn cohort_size(&self, manifest: &AlgorithmManifest) -> u64 {
        let consenting = self.consenting_owners(&manifest.alg_id);
        let owners: BTreeSet<&str> = self
            .records
            .values()
            .filter(|r| r.schema_id == manifest.params.schema_id && consenting.contains(&r.owner))
            .map(|r| r.owner.as_str())
            .collect();
        owners.len() as u64
    }
}

fn compute_group_value(params: &ManifestParams, records: &[&PersonalDataRecord]) -> GroupValue {
    match params.algorithm {
        AlgorithmKind::Count => {
            let owners: BTreeSet<&str> = records.iter().map(|r| r.owner.as_str()).collect();
            GroupValue::Count(owners.len() as u64)
        }
        AlgorithmKind::Sum => GroupValue::Sum(numeric_values(params, records).sum()),
        AlgorithmKind::Mean => {
            let values: Vec<f64> = numeric_values(params, records).collect();
            let mean =
                if values.is_empty() { 0.0 } else { values.iter().sum::<f64>() / values.len() as f64 };
            GroupValue::Mean(mean)
        }
        AlgorithmKind::Histogram => {
            let field = params.target_field.as_deref().unwrap_or_default();
            let mut buckets: BTreeMap<String, u64> = BTreeMap::new();
            for r in records {
                if let Some(v) = r.attributes.get(field) {
                    *buckets.entry(v.label()).or_insert(0) += 1;
                }
            }
            GroupValue::Histogram(buckets)
        }
    }
}

fn numeric_values<'a>(
    params: &'a ManifestParams,
    records: &'a [&PersonalDataRecord],
) -> impl Iterator<Item = f64> + 'a {
    let field = params.target_field.as_deref().unwrap_or_default();
    records.iter().filter_map(move |r| r.attributes.get(field).and_then(AttrValue::as_number))
}
