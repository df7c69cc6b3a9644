//! Signed transaction envelopes.
//!
//! A transaction body is (kind, payload, author, logical_time). The body's
//! canonical form is what gets digested into `tx_id` and signed by the
//! author's key, so envelopes are portable across implementations byte for
//! byte. The `kind` tag and the payload fields serialize flat alongside
//! `author` and `logical_time`.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::{Digest32, Keypair, PublicKey, SignatureBytes};
use crate::error::CoopError;
use crate::identity::Role;
use crate::license::OfferParams;
use crate::opal::{Approval, ManifestParams};
use crate::payments::SplitsTable;

/// Transaction kind discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxKind {
    MemberRegister,
    MemberDepart,
    WorkRegister,
    AlgApprove,
    ConsentSet,
    OfferDeploy,
    LicenseRequest,
    LicenseRevoke,
    PaymentRecord,
    DisburseExec,
}

/// Kind-specific payload, tagged by `kind` in the serialized form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TxPayload {
    MemberRegister {
        display_name: String,
        roles: Vec<Role>,
        public_key: PublicKey,
    },
    MemberDepart {
        member_id: String,
    },
    WorkRegister {
        work_id: String,
        version_label: String,
        metadata_digest: Digest32,
        pointer: String,
    },
    AlgApprove {
        manifest: ManifestParams,
        approvals: Vec<Approval>,
    },
    ConsentSet {
        alg_id: String,
        granted: bool,
    },
    OfferDeploy {
        offer: OfferParams,
    },
    LicenseRequest {
        offer_id: String,
        payment_ref: Option<String>,
        licensee_sig: SignatureBytes,
    },
    LicenseRevoke {
        grant_id: String,
        reason: String,
    },
    PaymentRecord {
        amount_minor: u64,
        currency: String,
        reference: String,
    },
    DisburseExec {
        receipt_id: String,
        splits: SplitsTable,
    },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::MemberRegister { .. } => TxKind::MemberRegister,
            TxPayload::MemberDepart { .. } => TxKind::MemberDepart,
            TxPayload::WorkRegister { .. } => TxKind::WorkRegister,
            TxPayload::AlgApprove { .. } => TxKind::AlgApprove,
            TxPayload::ConsentSet { .. } => TxKind::ConsentSet,
            TxPayload::OfferDeploy { .. } => TxKind::OfferDeploy,
            TxPayload::LicenseRequest { .. } => TxKind::LicenseRequest,
            TxPayload::LicenseRevoke { .. } => TxKind::LicenseRevoke,
            TxPayload::PaymentRecord { .. } => TxKind::PaymentRecord,
            TxPayload::DisburseExec { .. } => TxKind::DisburseExec,
        }
    }
}

/// The signed portion of a transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxBody {
    pub author: String,
    pub logical_time: u64,
    #[serde(flatten)]
    pub payload: TxPayload,
}

impl TxBody {
    /// Canonical bytes that `tx_id` digests and the author signs.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_bytes(self).expect("transaction bodies always serialize")
    }

    pub fn digest(&self) -> Digest32 {
        Digest32::of_bytes(&self.canonical_bytes())
    }
}

/// A transaction envelope: body plus its digest and detached signature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedTransaction {
    #[serde(flatten)]
    pub body: TxBody,
    pub tx_id: Digest32,
    pub signature: SignatureBytes,
}

impl SignedTransaction {
    /// Builds and signs an envelope. The caller supplies the author id the
    /// key claims to act for; verification against the registry happens at
    /// append time.
    pub fn build(author: &str, logical_time: u64, payload: TxPayload, key: &Keypair) -> Self {
        let body = TxBody { author: String::from(author), logical_time, payload };
        let bytes = body.canonical_bytes();
        let tx_id = Digest32::of_bytes(&bytes);
        let signature = key.sign(&bytes);
        SignedTransaction { body, tx_id, signature }
    }

    /// Builds an envelope with an all-zero signature, for structural chains
    /// that never check authorship (the replication simulator).
    pub fn build_unsigned(author: &str, logical_time: u64, payload: TxPayload) -> Self {
        let body = TxBody { author: String::from(author), logical_time, payload };
        let tx_id = body.digest();
        SignedTransaction { body, tx_id, signature: SignatureBytes::ZERO }
    }

    pub fn kind(&self) -> TxKind {
        self.body.payload.kind()
    }

    pub fn author(&self) -> &str {
        &self.body.author
    }

    pub fn logical_time(&self) -> u64 {
        self.body.logical_time
    }

    /// Checks the claimed `tx_id` against the body digest.
    pub fn check_tx_id(&self) -> Result<(), CoopError> {
        if self.body.digest() == self.tx_id {
            Ok(())
        } else {
            Err(CoopError::TxIdMismatch)
        }
    }

    /// Verifies the detached signature against `key`.
    pub fn check_signature(&self, key: &PublicKey) -> Result<(), CoopError> {
        if key.verify(&self.body.canonical_bytes(), &self.signature) {
            Ok(())
        } else {
            Err(CoopError::BadSignature)
        }
    }
}

/// Position of an appended transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxReceipt {
    pub tx_id: Digest32,
    pub block_seq: u64,
    pub index_in_block: u32,
    pub logical_time: u64,
}

/// The message a licensee signs when requesting a license: the Ricardian
/// binding of the offer to its legal prose digest.
pub fn ricardian_message(offer_id: &str, prose_digest: &Digest32) -> Vec<u8> {
    #[derive(Serialize)]
    struct Binding<'a> {
        offer_id: &'a str,
        prose_digest: &'a Digest32,
    }
    canonical::to_canonical_bytes(&Binding { offer_id, prose_digest })
        .expect("binding always serializes")
}
