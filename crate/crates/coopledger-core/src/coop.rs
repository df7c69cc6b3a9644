//! The cooperative node state: one sequencer, one ledger, and every module
//! state derived from it.
//!
//! All mutations travel as signed transactions through [`Coop::submit`],
//! which validates the envelope (author, signature, uniqueness, time), then
//! the kind-specific preconditions, and only then appends and applies. State
//! therefore reconstructs from the chain by replaying the same path, with
//! one exception: repository-presence checks are skipped during replay,
//! because repository objects may legitimately vanish later (departure
//! purges) without invalidating history that was valid when written.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde_json::Value;

use crate::canonical;
use crate::crypto::{Digest32, Keypair, PublicKey};
use crate::error::CoopError;
use crate::identity::{
    Action, DepartureReceipt, MemberRecord, MemberRegistry, MemberStatus, Role,
};
use crate::ids::{self, OPERATOR_ID};
use crate::ledger::{Block, ChainCheck, Ledger, DEFAULT_BLOCK_SIZE};
use crate::license::{
    LicenseBook, LicenseGrant, LicenseOffer, LicenseStatus, OfferParams, OfferStatus,
};
use crate::opal::{
    AggregateResult, AlgorithmManifest, Approval, AttrValue, AuditFilter, AuditLogEntry,
    ConsentRecord, ManifestParams, OpalEngine, PersonalDataRecord, RecordId,
};
use crate::payments::{
    largest_remainder, Disbursement, PaymentReceipt, PaymentsBook, Payout, SplitsTable,
};
use crate::registry::{
    self, RegistryEntry, Repository, ResolvedWork, WorkRegistry,
};
use crate::tx::{ricardian_message, SignedTransaction, TxPayload, TxReceipt};

pub const DEFAULT_K_THRESHOLD: u64 = 5;
pub const DEFAULT_QUORUM: usize = 1;

/// Node-level policy knobs plus the bootstrap operator key.
#[derive(Debug, Clone)]
pub struct CoopConfig {
    pub chain_id: String,
    pub operator_key: PublicKey,
    pub block_size: usize,
    pub k_threshold: u64,
    pub quorum: usize,
}

impl CoopConfig {
    pub fn new(chain_id: &str, operator_key: PublicKey) -> Self {
        CoopConfig {
            chain_id: chain_id.to_string(),
            operator_key,
            block_size: DEFAULT_BLOCK_SIZE,
            k_threshold: DEFAULT_K_THRESHOLD,
            quorum: DEFAULT_QUORUM,
        }
    }
}

/// Live submissions check repository presence; replay trusts that those
/// checks passed when the transaction was first appended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitMode {
    Live,
    Replay,
}

pub struct Coop {
    config: CoopConfig,
    ledger: Ledger,
    members: MemberRegistry,
    repo: Repository,
    works: WorkRegistry,
    licenses: LicenseBook,
    payments: PaymentsBook,
    opal: OpalEngine,
    clock: u64,
}

impl Coop {
    pub fn new(config: CoopConfig) -> Self {
        let ledger = Ledger::new(&config.chain_id, config.block_size);
        Coop {
            config,
            ledger,
            members: MemberRegistry::default(),
            repo: Repository::default(),
            works: WorkRegistry::default(),
            licenses: LicenseBook::default(),
            payments: PaymentsBook::default(),
            opal: OpalEngine::default(),
            clock: 0,
        }
    }

    pub fn config(&self) -> &CoopConfig {
        &self.config
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn members(&self) -> &MemberRegistry {
        &self.members
    }

    pub fn repository(&self) -> &Repository {
        &self.repo
    }

    pub fn works(&self) -> &WorkRegistry {
        &self.works
    }

    pub fn licenses(&self) -> &LicenseBook {
        &self.licenses
    }

    pub fn payments_book(&self) -> &PaymentsBook {
        &self.payments
    }

    pub fn opal(&self) -> &OpalEngine {
        &self.opal
    }

    /// The tick the next convenience-built transaction will carry.
    pub fn next_tick(&self) -> u64 {
        self.clock
    }

    /// Moves logical time forward without a transaction (expiries are a
    /// function of time, not of chain activity). Never moves backward.
    pub fn advance_clock(&mut self, to: u64) {
        self.clock = self.clock.max(to);
    }

    /// Resolves the author id a signing key may act for.
    pub fn author_for_key(&self, key: &PublicKey) -> Option<String> {
        if *key == self.config.operator_key {
            return Some(OPERATOR_ID.to_string());
        }
        self.members.member_by_key(key).map(|m| m.member_id.clone())
    }

    // ------------------------------------------------------------------
    // The single write path.
    // ------------------------------------------------------------------

    /// Validates, appends, and applies one signed transaction.
    pub fn submit(&mut self, tx: SignedTransaction) -> Result<TxReceipt, CoopError> {
        self.submit_mode(tx, SubmitMode::Live)
    }

    pub fn submit_mode(
        &mut self,
        tx: SignedTransaction,
        mode: SubmitMode,
    ) -> Result<TxReceipt, CoopError> {
        tx.check_tx_id()?;
        self.check_author(&tx)?;
        if self.ledger.contains(&tx.tx_id) {
            return Err(CoopError::DuplicateTransaction);
        }
        if tx.logical_time() < self.ledger.head_time() {
            return Err(CoopError::TimeRegression);
        }
        self.validate_kind(&tx, mode)?;
        let receipt = self.ledger.append(tx.clone())?;
        self.apply_kind(&tx, &receipt);
        self.clock = self.clock.max(tx.logical_time() + 1);
        Ok(receipt)
    }

    /// Seals the open block on explicit command.
    pub fn seal(&mut self) -> Result<Block, CoopError> {
        self.ledger.seal().cloned()
    }

    pub fn verify_chain(&self) -> ChainCheck {
        self.ledger.verify()
    }

    /// Public read with no credential.
    pub fn read_entry(&self, tx_id: &Digest32) -> Result<(SignedTransaction, TxReceipt), CoopError> {
        self.ledger
            .read(tx_id)
            .map(|(tx, r)| (tx.clone(), r))
            .ok_or_else(|| CoopError::NotFound(alloc::format!("tx {tx_id}")))
    }

    fn check_author(&self, tx: &SignedTransaction) -> Result<(), CoopError> {
        let author = tx.author();
        if author == OPERATOR_ID {
            return tx.check_signature(&self.config.operator_key);
        }
        match self.members.get(author) {
            None => Err(CoopError::PermissionDenied(alloc::format!("unknown author {author}"))),
            Some(m) if m.is_active() => tx.check_signature(&m.public_key),
            Some(m) => {
                // A departed member's own second depart reads better as
                // AlreadyDeparted than as a generic authorization failure.
                if let TxPayload::MemberDepart { member_id } = &tx.body.payload {
                    if member_id == author {
                        return Err(CoopError::AlreadyDeparted);
                    }
                }
                Err(CoopError::PermissionDenied(alloc::format!(
                    "departed author {}",
                    m.member_id
                )))
            }
        }
    }

    fn require_action(&self, author: &str, action: Action) -> Result<(), CoopError> {
        if self.members.authorize(author, action) {
            Ok(())
        } else {
            Err(CoopError::PermissionDenied(alloc::format!("{author} may not {action:?}")))
        }
    }

    fn validate_kind(&self, tx: &SignedTransaction, mode: SubmitMode) -> Result<(), CoopError> {
        let author = tx.author();
        let now = tx.logical_time();
        match &tx.body.payload {
            TxPayload::MemberRegister { roles, public_key, .. } => {
                if roles.is_empty() {
                    return Err(CoopError::EmptyRoles);
                }
                if self.members.key_is_bound(public_key) {
                    return Err(CoopError::DuplicateKey);
                }
                if author == OPERATOR_ID {
                    // Bootstrap only: the operator seats the first committee
                    // member; after that, admission needs a committee author.
                    if self.members.has_active_committee() {
                        return Err(CoopError::PermissionDenied(
                            "operator may not register members once a committee exists"
                                .to_string(),
                        ));
                    }
                    if !roles.contains(&Role::GovernanceCommittee) {
                        return Err(CoopError::PermissionDenied(
                            "bootstrap member must hold GovernanceCommittee".to_string(),
                        ));
                    }
                    Ok(())
                } else {
                    match self.members.active(author) {
                        Some(m) if m.has_role(Role::GovernanceCommittee) => Ok(()),
                        _ => Err(CoopError::PermissionDenied(
                            "member registration requires a committee signature".to_string(),
                        )),
                    }
                }
            }
            TxPayload::MemberDepart { member_id } => {
                if member_id != author {
                    return Err(CoopError::PermissionDenied(
                        "members depart only themselves".to_string(),
                    ));
                }
                Ok(())
            }
            TxPayload::WorkRegister { work_id, version_label, metadata_digest, .. } => {
                self.require_action(author, Action::RegisterWork)?;
                if !ids::is_valid_work_id(work_id) {
                    return Err(CoopError::InvalidMetadata(
                        registry::MetadataViolation::IdFormat(work_id.clone()),
                    ));
                }
                if self.works.version_exists(work_id, version_label) {
                    return Err(CoopError::DuplicateWorkId);
                }
                let is_new_version = self.works.latest(work_id).is_some();
                match self.repo.fetch(metadata_digest) {
                    Some(bytes) => {
                        let doc: Value = serde_json::from_slice(bytes).map_err(|_| {
                            CoopError::InvalidMetadata(registry::MetadataViolation::Shape(
                                "stored document is not valid JSON".to_string(),
                            ))
                        })?;
                        let meta = registry::parse_creation_metadata(&doc)
                            .map_err(CoopError::InvalidMetadata)?;
                        if meta.work_id != *work_id || meta.version_label != *version_label {
                            return Err(CoopError::InvalidMetadata(
                                registry::MetadataViolation::Shape(
                                    "document ids differ from transaction".to_string(),
                                ),
                            ));
                        }
                        for c in &meta.creators {
                            if self.members.get(&c.member_id).is_none() {
                                return Err(CoopError::InvalidMetadata(
                                    registry::MetadataViolation::CreatorsInvalid(
                                        alloc::format!("unknown member {}", c.member_id),
                                    ),
                                ));
                            }
                        }
                        let is_creator = meta.creators.iter().any(|c| c.member_id == author);
                        let is_publisher = self
                            .members
                            .active(author)
                            .is_some_and(|m| m.has_role(Role::Publisher));
                        if !is_creator && !is_publisher {
                            return Err(CoopError::PermissionDenied(
                                "registrant must be a creator or hold Publisher".to_string(),
                            ));
                        }
                        Ok(())
                    }
                    None if mode == SubmitMode::Replay => Ok(()),
                    None if is_new_version => {
                        // Appending a version to someone else's work needs
                        // the document on hand to prove creatorship.
                        Err(CoopError::Dangling(alloc::format!(
                            "document {metadata_digest} must be stored before re-registering"
                        )))
                    }
                    None => Ok(()),
                }
            }
            TxPayload::AlgApprove { manifest, approvals } => {
                self.require_action(author, Action::ApproveAlgorithm)?;
                manifest.check_shape()?;
                let digest = manifest.digest();
                let mut committee = alloc::collections::BTreeSet::new();
                for a in approvals {
                    let Some(m) = self.members.get(&a.member_id) else {
                        return Err(CoopError::BadSignature);
                    };
                    if !m.public_key.verify(&digest.0, &a.signature) {
                        return Err(CoopError::BadSignature);
                    }
                    if m.is_active() && m.has_role(Role::GovernanceCommittee) {
                        committee.insert(m.member_id.clone());
                    }
                }
                if committee.len() < self.config.quorum {
                    return Err(CoopError::InsufficientApprovals);
                }
                Ok(())
            }
            TxPayload::ConsentSet { alg_id, .. } => {
                self.require_action(author, Action::SetConsent)?;
                if self.opal.manifest(alg_id).is_none() {
                    return Err(CoopError::UnknownAlgorithm);
                }
                Ok(())
            }
            TxPayload::OfferDeploy { offer } => {
                self.require_action(author, Action::DeployOffer)?;
                check_offer_shape(offer)?;
                offer.splits.validate()?;
                let entry = self
                    .works
                    .by_ref(&offer.work_id, &offer.registry_tx)
                    .ok_or(CoopError::UnresolvableWork)?;
                if mode == SubmitMode::Live {
                    let bytes =
                        self.repo.fetch(&entry.metadata_digest).ok_or(CoopError::UnresolvableWork)?;
                    if Digest32::of_bytes(bytes) != entry.metadata_digest {
                        return Err(CoopError::UnresolvableWork);
                    }
                    let doc: Value = serde_json::from_slice(bytes)
                        .map_err(|_| CoopError::UnresolvableWork)?;
                    let meta = registry::parse_creation_metadata(&doc)
                        .map_err(|_| CoopError::UnresolvableWork)?;
                    let is_creator = meta.creators.iter().any(|c| c.member_id == author);
                    let is_publisher = self
                        .members
                        .active(author)
                        .is_some_and(|m| m.has_role(Role::Publisher));
                    if !is_creator && !is_publisher {
                        return Err(CoopError::PermissionDenied(
                            "licensor must be a creator or hold Publisher".to_string(),
                        ));
                    }
                    if !self.repo.contains(&offer.prose_digest) {
                        return Err(CoopError::MissingProse);
                    }
                }
                Ok(())
            }
            TxPayload::LicenseRequest { offer_id, payment_ref, licensee_sig } => {
                self.require_action(author, Action::RequestLicense)?;
                let offer = self
                    .licenses
                    .offer(offer_id)
                    .ok_or_else(|| CoopError::NotFound(alloc::format!("offer {offer_id}")))?;
                if offer.status != OfferStatus::Open {
                    return Err(CoopError::OfferClosed);
                }
                let licensee = self.members.active(author).expect("author checked active");
                let msg = ricardian_message(offer_id, &offer.prose_digest);
                if !licensee.public_key.verify(&msg, licensee_sig) {
                    return Err(CoopError::BadSignature);
                }
                if offer.price_minor == 0 {
                    if payment_ref.is_some() {
                        return Err(CoopError::PaymentNotRequired);
                    }
                    return Ok(());
                }
                let receipt_id = payment_ref.as_deref().ok_or(CoopError::PaymentMissing)?;
                let receipt =
                    self.payments.receipt(receipt_id).ok_or(CoopError::PaymentMissing)?;
                if receipt.reference != *offer_id {
                    return Err(CoopError::PaymentMissing);
                }
                if receipt.amount_minor < offer.price_minor {
                    return Err(CoopError::PaymentInsufficient);
                }
                if receipt.payer != author {
                    return Err(CoopError::PaymentWrongPayer);
                }
                if receipt.consumed_by.is_some() {
                    return Err(CoopError::PaymentAlreadyConsumed);
                }
                Ok(())
            }
            TxPayload::LicenseRevoke { grant_id, .. } => {
                let grant = self
                    .licenses
                    .grant(grant_id)
                    .ok_or_else(|| CoopError::NotFound(alloc::format!("grant {grant_id}")))?;
                let offer = self.licenses.offer(&grant.offer_id).expect("grants pin offers");
                if offer.licensor != author {
                    return Err(CoopError::PermissionDenied(
                        "only the offer's licensor may revoke".to_string(),
                    ));
                }
                if grant.status_at(now) != LicenseStatus::Active {
                    return Err(CoopError::NotActive);
                }
                Ok(())
            }
            TxPayload::PaymentRecord { currency, reference, .. } => {
                self.require_action(author, Action::RecordPayment)?;
                let offer =
                    self.licenses.offer(reference).ok_or(CoopError::UnknownOffer)?;
                if offer.currency != *currency {
                    return Err(CoopError::CurrencyMismatch);
                }
                Ok(())
            }
            TxPayload::DisburseExec { receipt_id, splits } => {
                let receipt =
                    self.payments.receipt(receipt_id).ok_or(CoopError::UnknownReceipt)?;
                let grant_id =
                    receipt.consumed_by.as_deref().ok_or(CoopError::NotConsumed)?;
                if self.payments.disbursement_for_receipt(receipt_id).is_some() {
                    return Err(CoopError::AlreadyDisbursed);
                }
                let grant = self.licenses.grant(grant_id).expect("consumption pins grant");
                let offer = self.licenses.offer(&grant.offer_id).expect("grants pin offers");
                if offer.licensor != author {
                    return Err(CoopError::PermissionDenied(
                        "only the offer's licensor may disburse".to_string(),
                    ));
                }
                if !splits.same_table(&offer.splits) {
                    return Err(CoopError::SplitsMismatch);
                }
                Ok(())
            }
        }
    }

    fn apply_kind(&mut self, tx: &SignedTransaction, receipt: &TxReceipt) {
        let author = tx.author().to_string();
        let t = tx.logical_time();
        match &tx.body.payload {
            TxPayload::MemberRegister { display_name, roles, public_key } => {
                self.members.insert(MemberRecord {
                    member_id: ids::member_id(&tx.tx_id),
                    display_name: display_name.clone(),
                    roles: roles.iter().copied().collect(),
                    public_key: *public_key,
                    status: MemberStatus::Active,
                    joined_at: t,
                    departed_at: None,
                });
            }
            TxPayload::MemberDepart { member_id } => {
                self.members.mark_departed(member_id, t);
                self.repo.purge_owner(member_id);
                self.opal.purge_owner(member_id);
                self.licenses.close_offers_of(member_id);
            }
            TxPayload::WorkRegister { work_id, version_label, metadata_digest, pointer } => {
                self.works.insert(RegistryEntry {
                    work_id: work_id.clone(),
                    version_label: version_label.clone(),
                    metadata_digest: *metadata_digest,
                    pointer: pointer.clone(),
                    registrant: author,
                    tx_id: tx.tx_id,
                    logical_time: t,
                });
            }
            TxPayload::AlgApprove { manifest, approvals } => {
                let alg_id = ids::algorithm_id(&manifest.digest());
                self.opal.insert_manifest(AlgorithmManifest {
                    alg_id,
                    params: manifest.clone(),
                    approved: true,
                    approvals: approvals.clone(),
                });
            }
            TxPayload::ConsentSet { alg_id, granted } => {
                self.opal.set_consent(ConsentRecord {
                    member_id: author,
                    alg_id: alg_id.clone(),
                    granted: *granted,
                    set_at: t,
                });
            }
            TxPayload::OfferDeploy { offer } => {
                self.licenses.insert_offer(LicenseOffer {
                    offer_id: ids::offer_id(&tx.tx_id),
                    work_id: offer.work_id.clone(),
                    registry_tx: offer.registry_tx,
                    licensor: author,
                    license_kind: offer.license_kind,
                    price_minor: offer.price_minor,
                    currency: offer.currency.clone(),
                    prose_digest: offer.prose_digest,
                    splits: offer.splits.clone(),
                    term_ticks: offer.term_ticks,
                    status: OfferStatus::Open,
                });
            }
            TxPayload::LicenseRequest { offer_id, payment_ref, licensee_sig } => {
                let grant_id = ids::grant_id(&tx.tx_id);
                let term = self
                    .licenses
                    .offer(offer_id)
                    .expect("validated")
                    .term_ticks;
                if let Some(receipt_id) = payment_ref {
                    self.payments.mark_consumed(receipt_id, &grant_id);
                }
                self.licenses.insert_grant(LicenseGrant {
                    grant_id,
                    offer_id: offer_id.clone(),
                    licensee: author,
                    payment_ref: payment_ref.clone(),
                    granted_at: t,
                    expires_at: term.map(|tt| t.saturating_add(tt)),
                    revoked: None,
                    licensee_signature: *licensee_sig,
                });
            }
            TxPayload::LicenseRevoke { grant_id, reason } => {
                self.licenses.revoke(grant_id, t, reason);
            }
            TxPayload::PaymentRecord { amount_minor, currency, reference } => {
                self.payments.insert_receipt(PaymentReceipt {
                    receipt_id: ids::receipt_id(&tx.tx_id),
                    payer: author,
                    amount_minor: *amount_minor,
                    currency: currency.clone(),
                    reference: reference.clone(),
                    recorded_at: t,
                    consumed_by: None,
                });
            }
            TxPayload::DisburseExec { receipt_id, splits } => {
                let amount = self.payments.receipt(receipt_id).expect("validated").amount_minor;
                let payouts = largest_remainder(amount, splits)
                    .into_iter()
                    .map(|(holder, amount_minor)| Payout { holder, amount_minor })
                    .collect();
                self.payments.insert_disbursement(Disbursement {
                    disbursement_id: ids::disbursement_id(&tx.tx_id),
                    receipt_id: receipt_id.clone(),
                    payouts,
                    executed_at: t,
                });
            }
        }
        let _ = receipt;
    }

    // ------------------------------------------------------------------
    // Convenience operations: build, sign, submit at the next tick.
    // ------------------------------------------------------------------

    fn signed(&self, key: &Keypair, payload: TxPayload) -> Result<SignedTransaction, CoopError> {
        let author = self.author_for_key(&key.public()).ok_or_else(|| {
            CoopError::PermissionDenied("key is not bound to an active member".to_string())
        })?;
        Ok(SignedTransaction::build(&author, self.clock, payload, key))
    }

    pub fn register_member(
        &mut self,
        sponsor: &Keypair,
        display_name: &str,
        roles: &[Role],
        public_key: PublicKey,
    ) -> Result<MemberRecord, CoopError> {
        let tx = self.signed(
            sponsor,
            TxPayload::MemberRegister {
                display_name: display_name.to_string(),
                roles: roles.to_vec(),
                public_key,
            },
        )?;
        let receipt = self.submit(tx)?;
        Ok(self.members.get(&ids::member_id(&receipt.tx_id)).expect("just applied").clone())
    }

    pub fn depart_member(
        &mut self,
        key: &Keypair,
        member_id: &str,
    ) -> Result<DepartureReceipt, CoopError> {
        let member = self
            .members
            .get(member_id)
            .ok_or_else(|| CoopError::NotFound(alloc::format!("member {member_id}")))?;
        if !member.is_active() {
            return Err(CoopError::AlreadyDeparted);
        }
        if member.public_key != key.public() {
            return Err(CoopError::PermissionDenied("departure must be self-signed".to_string()));
        }
        let purged_asset_count = self.repo.objects_owned_by(member_id);
        let tx = SignedTransaction::build(
            member_id,
            self.clock,
            TxPayload::MemberDepart { member_id: member_id.to_string() },
            key,
        );
        let receipt = self.submit(tx)?;
        let retained_tx_count =
            self.ledger.txs_in_order().filter(|t| t.author() == member_id).count() as u64;
        Ok(DepartureReceipt {
            member_id: member_id.to_string(),
            departed_at: receipt.logical_time,
            purged_asset_count,
            retained_tx_count,
        })
    }

    pub fn authorize(&self, member_id: &str, action: Action) -> bool {
        self.members.authorize(member_id, action)
    }

    /// Validates, stores, and notarizes a creation-metadata document.
    pub fn register_work(&mut self, key: &Keypair, doc: &Value) -> Result<RegistryEntry, CoopError> {
        let meta = registry::parse_creation_metadata(doc).map_err(CoopError::InvalidMetadata)?;
        let author = self.author_for_key(&key.public()).ok_or_else(|| {
            CoopError::PermissionDenied("key is not bound to an active member".to_string())
        })?;
        let bytes = canonical::to_canonical_bytes(doc)
            .map_err(|e| CoopError::InvalidMetadata(registry::MetadataViolation::Shape(e.0)))?;
        let digest = Digest32::of_bytes(&bytes);
        let fresh = !self.repo.contains(&digest);
        self.repo.store(bytes, &author);
        let pointer = alloc::format!("coop://{}/meta/{}", self.config.chain_id, meta.work_id);
        let tx = SignedTransaction::build(
            &author,
            self.clock,
            TxPayload::WorkRegister {
                work_id: meta.work_id.clone(),
                version_label: meta.version_label.clone(),
                metadata_digest: digest,
                pointer,
            },
            key,
        );
        match self.submit(tx) {
            Ok(receipt) => Ok(self
                .works
                .by_ref(&meta.work_id, &receipt.tx_id)
                .expect("just applied")
                .clone()),
            Err(e) => {
                if fresh {
                    self.repo.remove(&digest);
                }
                Err(e)
            }
        }
    }

    pub fn resolve_work(&self, work_id: &str) -> Result<ResolvedWork, CoopError> {
        self.works.resolve(work_id, &self.repo)
    }

    pub fn store_asset(&mut self, owner: &str, bytes: Vec<u8>) -> Result<Digest32, CoopError> {
        if self.members.active(owner).is_none() {
            return Err(CoopError::PermissionDenied(alloc::format!(
                "{owner} is not an active member"
            )));
        }
        Ok(self.repo.store(bytes, owner))
    }

    pub fn fetch_asset(&self, digest: &Digest32) -> Result<&[u8], CoopError> {
        self.repo
            .fetch(digest)
            .ok_or_else(|| CoopError::NotFound(alloc::format!("object {digest}")))
    }

    pub fn deploy_offer(
        &mut self,
        key: &Keypair,
        offer: OfferParams,
    ) -> Result<LicenseOffer, CoopError> {
        let tx = self.signed(key, TxPayload::OfferDeploy { offer })?;
        let receipt = self.submit(tx)?;
        Ok(self.licenses.offer(&ids::offer_id(&receipt.tx_id)).expect("just applied").clone())
    }

    pub fn request_license(
        &mut self,
        key: &Keypair,
        offer_id: &str,
        payment_ref: Option<String>,
    ) -> Result<LicenseGrant, CoopError> {
        let offer = self
            .licenses
            .offer(offer_id)
            .ok_or_else(|| CoopError::NotFound(alloc::format!("offer {offer_id}")))?;
        let licensee_sig = key.sign(&ricardian_message(offer_id, &offer.prose_digest));
        let tx = self.signed(
            key,
            TxPayload::LicenseRequest {
                offer_id: offer_id.to_string(),
                payment_ref,
                licensee_sig,
            },
        )?;
        let receipt = self.submit(tx)?;
        Ok(self.licenses.grant(&ids::grant_id(&receipt.tx_id)).expect("just applied").clone())
    }

    pub fn revoke_grant(
        &mut self,
        key: &Keypair,
        grant_id: &str,
        reason: &str,
    ) -> Result<LicenseGrant, CoopError> {
        let tx = self.signed(
            key,
            TxPayload::LicenseRevoke { grant_id: grant_id.to_string(), reason: reason.to_string() },
        )?;
        self.submit(tx)?;
        Ok(self.licenses.grant(grant_id).expect("validated").clone())
    }

    pub fn sweep_expirations(&self, now: u64) -> Vec<String> {
        self.licenses.sweep_expirations(now)
    }

    pub fn verify_license(&self, grant_id: &str, at: u64) -> LicenseStatus {
        self.licenses.verify_license(grant_id, at)
    }

    pub fn record_payment(
        &mut self,
        key: &Keypair,
        offer_id: &str,
        amount_minor: u64,
        currency: &str,
    ) -> Result<PaymentReceipt, CoopError> {
        let tx = self.signed(
            key,
            TxPayload::PaymentRecord {
                amount_minor,
                currency: currency.to_string(),
                reference: offer_id.to_string(),
            },
        )?;
        let receipt = self.submit(tx)?;
        Ok(self.payments.receipt(&ids::receipt_id(&receipt.tx_id)).expect("just applied").clone())
    }

    pub fn payments_for_offer(&self, offer_id: &str) -> Result<Vec<PaymentReceipt>, CoopError> {
        if self.licenses.offer(offer_id).is_none() {
            return Err(CoopError::UnknownOffer);
        }
        Ok(self.payments.receipts_for_offer(offer_id).into_iter().cloned().collect())
    }

    pub fn disburse(
        &mut self,
        key: &Keypair,
        receipt_id: &str,
        splits: Option<SplitsTable>,
    ) -> Result<Disbursement, CoopError> {
        let splits = match splits {
            Some(s) => s,
            None => {
                let receipt =
                    self.payments.receipt(receipt_id).ok_or(CoopError::UnknownReceipt)?;
                let grant_id =
                    receipt.consumed_by.as_deref().ok_or(CoopError::NotConsumed)?;
                let grant = self.licenses.grant(grant_id).expect("consumption pins grant");
                self.licenses.offer(&grant.offer_id).expect("grants pin offers").splits.clone()
            }
        };
        let tx = self.signed(
            key,
            TxPayload::DisburseExec { receipt_id: receipt_id.to_string(), splits },
        )?;
        self.submit(tx)?;
        Ok(self.payments.disbursement_for_receipt(receipt_id).expect("just applied").clone())
    }

    pub fn holder_statement(&self, member_id: &str) -> (Vec<(String, u64)>, u64) {
        self.payments.holder_statement(member_id)
    }

    pub fn ingest_record(
        &mut self,
        owner: &str,
        schema_id: &str,
        attributes: BTreeMap<String, AttrValue>,
    ) -> Result<RecordId, CoopError> {
        if self.members.active(owner).is_none() {
            return Err(CoopError::PermissionDenied(alloc::format!(
                "{owner} is not an active member"
            )));
        }
        self.opal.ingest(PersonalDataRecord {
            owner: owner.to_string(),
            schema_id: schema_id.to_string(),
            attributes,
            stored_at: self.clock,
        })
    }

    pub fn register_algorithm(
        &mut self,
        key: &Keypair,
        manifest: ManifestParams,
        approvals: Vec<Approval>,
    ) -> Result<AlgorithmManifest, CoopError> {
        let alg_id = ids::algorithm_id(&manifest.digest());
        let tx = self.signed(key, TxPayload::AlgApprove { manifest, approvals })?;
        self.submit(tx)?;
        Ok(self.opal.manifest(&alg_id).expect("just applied").clone())
    }

    pub fn set_consent(
        &mut self,
        key: &Keypair,
        alg_id: &str,
        granted: bool,
    ) -> Result<ConsentRecord, CoopError> {
        let tx = self
            .signed(key, TxPayload::ConsentSet { alg_id: alg_id.to_string(), granted })?;
        let author = tx.author().to_string();
        let receipt = self.submit(tx)?;
        Ok(ConsentRecord {
            member_id: author,
            alg_id: alg_id.to_string(),
            granted,
            set_at: receipt.logical_time,
        })
    }

    /// Runs an approved algorithm for an active requester. Every attempt,
    /// including refusals, lands in the audit log.
    pub fn execute_query(
        &mut self,
        alg_id: &str,
        requester: &str,
    ) -> Result<AggregateResult, CoopError> {
        let refusal = if self.opal.manifest(alg_id).is_none() {
            Some(CoopError::AlgorithmNotApproved)
        } else if self.members.active(requester).is_none() {
            Some(CoopError::PermissionDenied(alloc::format!(
                "{requester} is not an active member"
            )))
        } else {
            None
        };
        let now = self.clock;
        if let Some(err) = refusal {
            let digest = refusal_digest(&err);
            self.opal.audit.append(requester, alg_id, 0, 0, digest, now);
            return Err(err);
        }
        let manifest = self.opal.manifest(alg_id).expect("checked").clone();
        let result = self.opal.aggregate(&manifest, self.config.k_threshold, now);
        let cohort = self.opal.cohort_size(&manifest);
        let suppressed = result.groups.iter().filter(|g| g.is_suppressed()).count() as u64;
        let digest = canonical::digest(&result).expect("results serialize");
        self.opal.audit.append(requester, alg_id, cohort, suppressed, digest, now);
        Ok(result)
    }

    /// Committee members read everything; others only their own entries.
    pub fn read_audit_log(
        &self,
        caller: &str,
        filter: &AuditFilter,
    ) -> Result<Vec<AuditLogEntry>, CoopError> {
        let is_committee = self
            .members
            .active(caller)
            .is_some_and(|m| m.has_role(Role::GovernanceCommittee));
        let effective = if is_committee {
            filter.clone()
        } else {
            if self.members.get(caller).is_none() {
                return Err(CoopError::PermissionDenied(alloc::format!(
                    "{caller} is not a member"
                )));
            }
            match &filter.requester {
                Some(r) if r != caller => {
                    return Err(CoopError::PermissionDenied(
                        "non-committee callers read only their own entries".to_string(),
                    ))
                }
                _ => AuditFilter { requester: Some(caller.to_string()), ..filter.clone() },
            }
        };
        Ok(self
            .opal
            .audit
            .entries()
            .iter()
            .filter(|e| effective.matches(e))
            .cloned()
            .collect())
    }

    // ------------------------------------------------------------------
    // Persistence hooks for the node store.
    // ------------------------------------------------------------------

    pub fn restore_repo_object(&mut self, object: crate::registry::RepositoryObject) {
        self.repo.insert_object(object);
    }

    pub fn restore_opal_record(&mut self, id: RecordId, record: PersonalDataRecord) {
        self.opal.restore_record(id, record);
    }

    pub fn restore_audit_log(&mut self, entries: Vec<AuditLogEntry>) -> Result<(), u64> {
        self.opal.audit = crate::opal::AuditLog::from_entries(entries)?;
        Ok(())
    }

    /// Repository digests a member owns; the node uses this to mirror
    /// departure purges to disk.
    pub fn repo_digests_owned(&self, owner: &str) -> Vec<Digest32> {
        self.repo.iter().filter(|o| o.owner == owner).map(|o| o.content_digest).collect()
    }

    /// Test hook mirroring on-disk tampering of a stored document.
    pub fn tamper_repo_object(&mut self, digest: &Digest32, bytes: Vec<u8>) {
        self.repo.tamper(digest, bytes);
    }
}

fn check_offer_shape(offer: &OfferParams) -> Result<(), CoopError> {
    if offer.currency.len() != 3 || !offer.currency.bytes().all(|b| b.is_ascii_uppercase()) {
        return Err(CoopError::InvalidOffer(alloc::format!(
            "currency {:?} is not a 3-letter code",
            offer.currency
        )));
    }
    if offer.term_ticks == Some(0) {
        return Err(CoopError::InvalidOffer("term_ticks must be positive".to_string()));
    }
    Ok(())
}

fn refusal_digest(err: &CoopError) -> Digest32 {
    #[derive(serde::Serialize)]
    struct Refusal<'a> {
        refused: &'a str,
    }
    canonical::digest(&Refusal { refused: err.name() }).expect("refusals serialize")
}

/// Signs a manifest digest with each committee keypair, producing the
/// approvals list embedded in an AlgApprove transaction.
pub fn approve_manifest(manifest: &ManifestParams, approvers: &[(&str, &Keypair)]) -> Vec<Approval> {
    let digest = manifest.digest();
    approvers
        .iter()
        .map(|(member_id, key)| Approval {
            member_id: member_id.to_string(),
            signature: key.sign(&digest.0),
        })
        .collect()
}
