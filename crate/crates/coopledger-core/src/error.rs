//! The shared error taxonomy.
//!
//! Every write path — direct calls, replay, and signed envelopes arriving
//! over the service — reports failures through the same set of variants, so
//! a rejected envelope and a rejected local call are indistinguishable.

use alloc::string::String;

use crate::registry::MetadataViolation;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CoopError {
    // ledger / envelope
    PermissionDenied(String),
    BadSignature,
    /// The envelope's claimed tx_id does not equal the digest of its body.
    TxIdMismatch,
    DuplicateTransaction,
    TimeRegression,
    EmptyBlock,
    NotFound(String),
    // identity
    DuplicateKey,
    EmptyRoles,
    AlreadyDeparted,
    // metadata registry
    InvalidMetadata(MetadataViolation),
    DuplicateWorkId,
    Dangling(String),
    // license contracts
    UnresolvableWork,
    MissingProse,
    InvalidSplits(String),
    InvalidOffer(String),
    OfferClosed,
    PaymentMissing,
    /// Payment evidence supplied for a free offer.
    PaymentNotRequired,
    PaymentInsufficient,
    PaymentWrongPayer,
    PaymentAlreadyConsumed,
    NotActive,
    // payments
    UnknownOffer,
    CurrencyMismatch,
    UnknownReceipt,
    NotConsumed,
    AlreadyDisbursed,
    SplitsMismatch,
    // opal
    EmptyRecord,
    InsufficientApprovals,
    InvalidManifest(String),
    UnknownAlgorithm,
    AlgorithmNotApproved,
    // simulation
    InvalidConfig(String),
}

impl CoopError {
    /// Stable machine-readable name, used in service responses and transcripts.
    pub fn name(&self) -> &'static str {
        match self {
            CoopError::PermissionDenied(_) => "PermissionDenied",
            CoopError::BadSignature => "BadSignature",
            CoopError::TxIdMismatch => "TxIdMismatch",
            CoopError::DuplicateTransaction => "DuplicateTransaction",
            CoopError::TimeRegression => "TimeRegression",
            CoopError::EmptyBlock => "EmptyBlock",
            CoopError::NotFound(_) => "NotFound",
            CoopError::DuplicateKey => "DuplicateKey",
            CoopError::EmptyRoles => "EmptyRoles",
            CoopError::AlreadyDeparted => "AlreadyDeparted",
            CoopError::InvalidMetadata(_) => "InvalidMetadata",
            CoopError::DuplicateWorkId => "DuplicateWorkId",
            CoopError::Dangling(_) => "Dangling",
            CoopError::UnresolvableWork => "UnresolvableWork",
            CoopError::MissingProse => "MissingProse",
            CoopError::InvalidSplits(_) => "InvalidSplits",
            CoopError::InvalidOffer(_) => "InvalidOffer",
            CoopError::OfferClosed => "OfferClosed",
            CoopError::PaymentMissing => "PaymentMissing",
            CoopError::PaymentNotRequired => "PaymentNotRequired",
            CoopError::PaymentInsufficient => "PaymentInsufficient",
            CoopError::PaymentWrongPayer => "PaymentWrongPayer",
            CoopError::PaymentAlreadyConsumed => "PaymentAlreadyConsumed",
            CoopError::NotActive => "NotActive",
            CoopError::UnknownOffer => "UnknownOffer",
            CoopError::CurrencyMismatch => "CurrencyMismatch",
            CoopError::UnknownReceipt => "UnknownReceipt",
            CoopError::NotConsumed => "NotConsumed",
            CoopError::AlreadyDisbursed => "AlreadyDisbursed",
            CoopError::SplitsMismatch => "SplitsMismatch",
            CoopError::EmptyRecord => "EmptyRecord",
            CoopError::InsufficientApprovals => "InsufficientApprovals",
            CoopError::InvalidManifest(_) => "InvalidManifest",
            CoopError::UnknownAlgorithm => "UnknownAlgorithm",
            CoopError::AlgorithmNotApproved => "AlgorithmNotApproved",
            CoopError::InvalidConfig(_) => "InvalidConfig",
        }
    }
}

impl core::fmt::Display for CoopError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            CoopError::PermissionDenied(who) => write!(f, "permission denied: {who}"),
            CoopError::BadSignature => write!(f, "signature does not verify"),
            CoopError::TxIdMismatch => write!(f, "tx_id does not match payload digest"),
            CoopError::DuplicateTransaction => write!(f, "transaction already appended"),
            CoopError::TimeRegression => write!(f, "logical_time below chain head"),
            CoopError::EmptyBlock => write!(f, "no pending transactions to seal"),
            CoopError::NotFound(what) => write!(f, "not found: {what}"),
            CoopError::DuplicateKey => write!(f, "public key already bound to an active member"),
            CoopError::EmptyRoles => write!(f, "member must hold at least one role"),
            CoopError::AlreadyDeparted => write!(f, "member already departed"),
            CoopError::InvalidMetadata(v) => write!(f, "invalid metadata: {v}"),
            CoopError::DuplicateWorkId => write!(f, "work id and version already registered"),
            CoopError::Dangling(what) => write!(f, "registry entry dangling: {what}"),
            CoopError::UnresolvableWork => write!(f, "work reference does not resolve"),
            CoopError::MissingProse => write!(f, "legal prose not found in repository"),
            CoopError::InvalidSplits(why) => write!(f, "invalid splits: {why}"),
            CoopError::InvalidOffer(why) => write!(f, "invalid offer: {why}"),
            CoopError::OfferClosed => write!(f, "offer is closed"),
            CoopError::PaymentMissing => write!(f, "no applicable payment receipt"),
            CoopError::PaymentNotRequired => write!(f, "offer is free; no payment reference allowed"),
            CoopError::PaymentInsufficient => write!(f, "payment below offer price"),
            CoopError::PaymentWrongPayer => write!(f, "payment made by another member"),
            CoopError::PaymentAlreadyConsumed => write!(f, "payment already consumed by a grant"),
            CoopError::NotActive => write!(f, "grant is not active"),
            CoopError::UnknownOffer => write!(f, "offer does not exist"),
            CoopError::CurrencyMismatch => write!(f, "payment currency differs from offer"),
            CoopError::UnknownReceipt => write!(f, "receipt does not exist"),
            CoopError::NotConsumed => write!(f, "receipt not consumed by any grant"),
            CoopError::AlreadyDisbursed => write!(f, "receipt already disbursed"),
            CoopError::SplitsMismatch => write!(f, "splits differ from the offer's table"),
            CoopError::EmptyRecord => write!(f, "record has no attributes"),
            CoopError::InsufficientApprovals => write!(f, "fewer distinct committee approvals than quorum"),
            CoopError::InvalidManifest(why) => write!(f, "invalid algorithm manifest: {why}"),
            CoopError::UnknownAlgorithm => write!(f, "algorithm not registered"),
            CoopError::AlgorithmNotApproved => write!(f, "algorithm not approved"),
            CoopError::InvalidConfig(why) => write!(f, "invalid simulation config: {why}"),
        }
    }
}

impl core::error::Error for CoopError {}
