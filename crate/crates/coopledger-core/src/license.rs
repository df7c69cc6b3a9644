//! Ricardian license contracts as deterministic state machines.
//!
//! An offer binds a specific registered version of a work (by registry
//! transaction) to the digest of its legal prose and a splits table. A grant
//! is issued against payment evidence and the licensee's signature over the
//! prose binding. Status is a pure function of the grant record and a
//! logical time, so expiry needs no background process and replays exactly.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::{Digest32, SignatureBytes};
use crate::payments::SplitsTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LicenseKind {
    Mechanical,
    Performance,
}

impl LicenseKind {
    pub fn parse(s: &str) -> Option<LicenseKind> {
        match s {
            "Mechanical" | "mechanical" => Some(LicenseKind::Mechanical),
            "Performance" | "performance" => Some(LicenseKind::Performance),
            _ => None,
        }
    }
}

/// Offer terms as they travel in an OfferDeploy transaction. The licensor is
/// the transaction author; the offer id derives from the transaction id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OfferParams {
    pub work_id: String,
    pub registry_tx: Digest32,
    pub license_kind: LicenseKind,
    pub price_minor: u64,
    pub currency: String,
    pub prose_digest: Digest32,
    pub splits: SplitsTable,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub term_ticks: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OfferStatus {
    Open,
    Closed,
}

/// A deployed offer. Terms are immutable; changing anything means a new offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicenseOffer {
    pub offer_id: String,
    pub work_id: String,
    pub registry_tx: Digest32,
    pub licensor: String,
    pub license_kind: LicenseKind,
    pub price_minor: u64,
    pub currency: String,
    pub prose_digest: Digest32,
    pub splits: SplitsTable,
    pub term_ticks: Option<u64>,
    pub status: OfferStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LicenseStatus {
    Active,
    Expired,
    Revoked,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Revocation {
    pub at: u64,
    pub reason: String,
}

/// An issued grant. `revoked` is set at most once, and only while the grant
/// was still active; everything else is immutable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LicenseGrant {
    pub grant_id: String,
    pub offer_id: String,
    pub licensee: String,
    pub payment_ref: Option<String>,
    pub granted_at: u64,
    pub expires_at: Option<u64>,
    pub revoked: Option<Revocation>,
    pub licensee_signature: SignatureBytes,
}

impl LicenseGrant {
    /// Status as of logical time `at`, replayed from history: revocations or
    /// expiries later than `at` are invisible. Expiry is inclusive
    /// (`expires_at <= at` means expired).
    pub fn status_at(&self, at: u64) -> LicenseStatus {
        if at < self.granted_at {
            return LicenseStatus::Unknown;
        }
        if let Some(rev) = &self.revoked {
            if rev.at <= at {
                return LicenseStatus::Revoked;
            }
        }
        if let Some(exp) = self.expires_at {
            if exp <= at {
                return LicenseStatus::Expired;
            }
        }
        LicenseStatus::Active
    }
}

/// All offers and grants, keyed by id, mutated only in ledger apply order.
#[derive(Debug, Clone, Default)]
pub struct LicenseBook {
    offers: BTreeMap<String, LicenseOffer>,
    grants: BTreeMap<String, LicenseGrant>,
}

impl LicenseBook {
    pub fn offer(&self, offer_id: &str) -> Option<&LicenseOffer> {
        self.offers.get(offer_id)
    }

    pub fn grant(&self, grant_id: &str) -> Option<&LicenseGrant> {
        self.grants.get(grant_id)
    }

    pub fn insert_offer(&mut self, offer: LicenseOffer) {
        self.offers.insert(offer.offer_id.clone(), offer);
    }

    pub fn insert_grant(&mut self, grant: LicenseGrant) {
        self.grants.insert(grant.grant_id.clone(), grant);
    }

    pub fn revoke(&mut self, grant_id: &str, at: u64, reason: &str) {
        if let Some(g) = self.grants.get_mut(grant_id) {
            g.revoked = Some(Revocation { at, reason: String::from(reason) });
        }
    }

    /// Closes a departing member's open offers to new grants. Existing
    /// grants stay valid.
    pub fn close_offers_of(&mut self, licensor: &str) {
        for offer in self.offers.values_mut() {
            if offer.licensor == licensor {
                offer.status = OfferStatus::Closed;
            }
        }
    }

    pub fn verify_license(&self, grant_id: &str, at: u64) -> LicenseStatus {
        match self.grants.get(grant_id) {
            Some(g) => g.status_at(at),
            None => LicenseStatus::Unknown,
        }
    }

    /// Grants expired as of `now`, sorted by grant id. Pure and idempotent:
    /// status is computed, never stored, so sweeping twice changes nothing.
    pub fn sweep_expirations(&self, now: u64) -> Vec<String> {
        self.grants
            .values()
            .filter(|g| g.status_at(now) == LicenseStatus::Expired)
            .map(|g| g.grant_id.clone())
            .collect()
    }

    pub fn grants(&self) -> impl Iterator<Item = &LicenseGrant> {
        self.grants.values()
    }

    pub fn offers(&self) -> impl Iterator<Item = &LicenseOffer> {
        self.offers.values()
    }
}
