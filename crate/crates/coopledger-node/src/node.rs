//! The running node: core state plus the durable store, kept in lockstep.
//!
//! Every successful write lands in the chain log (plus repo / engine side
//! files) before the call returns, so stopping the process at any point and
//! reopening the data dir reconstructs the identical state.

use std::collections::BTreeMap;
use std::path::Path;

use coopledger_core::identity::{DepartureReceipt, MemberRecord, Role};
use coopledger_core::license::{LicenseGrant, LicenseOffer, LicenseStatus, OfferParams};
use coopledger_core::opal::{
    AggregateResult, AlgorithmManifest, Approval, AttrValue, AuditFilter, AuditLogEntry,
    ManifestParams, RecordId,
};
use coopledger_core::payments::{Disbursement, PaymentReceipt, SplitsTable};
use coopledger_core::registry::{RegistryEntry, ResolvedWork};
use coopledger_core::{
    Block, ChainCheck, Coop, CoopError, Digest32, Keypair, SignedTransaction, TxPayload, TxReceipt,
};
use serde_json::Value;

use crate::config::NodeConfig;
use crate::store::{NodeStore, StoreError};

#[derive(Debug)]
pub enum NodeError {
    Domain(CoopError),
    Store(StoreError),
}

impl std::fmt::Display for NodeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeError::Domain(e) => write!(f, "{e}"),
            NodeError::Store(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for NodeError {}

impl From<CoopError> for NodeError {
    fn from(e: CoopError) -> Self {
        NodeError::Domain(e)
    }
}

impl From<StoreError> for NodeError {
    fn from(e: StoreError) -> Self {
        NodeError::Store(e)
    }
}

pub struct Node {
    config: NodeConfig,
    store: NodeStore,
    coop: Coop,
}

impl Node {
    /// Opens a data dir: loads the config, replays the chain, restores the
    /// side stores. Fails with corruption errors naming the first bad block.
    pub fn open(data_dir: &Path) -> Result<Node, NodeError> {
        let config = NodeConfig::load(data_dir).map_err(|e| {
            NodeError::Store(StoreError::Io(std::io::Error::other(format!("{e:#}"))))
        })?;
        let store = NodeStore::new(data_dir);
        let coop = store.load(config.core_config())?;
        Ok(Node { config, store, coop })
    }

    pub fn config(&self) -> &NodeConfig {
        &self.config
    }

    pub fn coop(&self) -> &Coop {
        &self.coop
    }

    /// Persists the tx line plus seal checkpoints for any blocks the append
    /// sealed, in order.
    fn record_submit(
        &mut self,
        tx: SignedTransaction,
        blocks_before: usize,
    ) -> Result<(), StoreError> {
        self.store.append_tx(&tx)?;
        for block in &self.coop.ledger().blocks()[blocks_before..] {
            self.store.append_seal(&block.header())?;
        }
        Ok(())
    }

    /// Submits a foreign signed envelope (service write path). Departure
    /// envelopes also mirror the purge to disk.
    pub fn submit_envelope(&mut self, tx: SignedTransaction) -> Result<TxReceipt, NodeError> {
        let purge_owner = match &tx.body.payload {
            TxPayload::MemberDepart { member_id } => {
                Some((member_id.clone(), self.coop.repo_digests_owned(member_id)))
            }
            _ => None,
        };
        let blocks_before = self.coop.ledger().blocks().len();
        let receipt = self.coop.submit(tx.clone())?;
        self.record_submit(tx, blocks_before)?;
        if let Some((_, digests)) = purge_owner {
            for d in &digests {
                self.store.delete_repo_object(d)?;
            }
            self.store.rewrite_opal_records(&self.coop)?;
        }
        Ok(receipt)
    }

    /// Replays a foreign transaction (chain import): repository-presence
    /// checks are skipped exactly as in startup replay, everything else is
    /// validated in full.
    pub fn import_replay_tx(&mut self, tx: SignedTransaction) -> Result<TxReceipt, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let receipt = self.coop.submit_mode(tx.clone(), coopledger_core::SubmitMode::Replay)?;
        self.record_submit(tx, blocks_before)?;
        Ok(receipt)
    }

    pub fn seal(&mut self) -> Result<Block, NodeError> {
        let block = self.coop.seal()?;
        self.store.append_seal(&block.header())?;
        Ok(block)
    }

    pub fn verify_chain(&self) -> ChainCheck {
        self.coop.verify_chain()
    }

    pub fn read_entry(&self, tx_id: &Digest32) -> Result<(SignedTransaction, TxReceipt), CoopError> {
        self.coop.read_entry(tx_id)
    }

    pub fn export_chain(&self) -> Vec<String> {
        self.coop.ledger().export_lines()
    }

    // ---- write operations, each persisted before returning -------------

    pub fn register_member(
        &mut self,
        sponsor: &Keypair,
        display_name: &str,
        roles: &[Role],
        public_key: coopledger_core::PublicKey,
    ) -> Result<MemberRecord, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let record = self.coop.register_member(sponsor, display_name, roles, public_key)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(record)
    }

    pub fn depart_member(
        &mut self,
        key: &Keypair,
        member_id: &str,
    ) -> Result<DepartureReceipt, NodeError> {
        let digests = self.coop.repo_digests_owned(member_id);
        let blocks_before = self.coop.ledger().blocks().len();
        let receipt = self.coop.depart_member(key, member_id)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        for d in &digests {
            self.store.delete_repo_object(d)?;
        }
        self.store.rewrite_opal_records(&self.coop)?;
        Ok(receipt)
    }

    pub fn register_work(&mut self, key: &Keypair, doc: &Value) -> Result<RegistryEntry, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let entry = self.coop.register_work(key, doc)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        let object = self
            .coop
            .repository()
            .object(&entry.metadata_digest)
            .expect("document just stored")
            .clone();
        self.store.write_repo_object(&object)?;
        Ok(entry)
    }

    pub fn resolve_work(&self, work_id: &str) -> Result<ResolvedWork, CoopError> {
        self.coop.resolve_work(work_id)
    }

    pub fn store_asset(&mut self, owner: &str, bytes: Vec<u8>) -> Result<Digest32, NodeError> {
        let digest = self.coop.store_asset(owner, bytes)?;
        let object =
            self.coop.repository().object(&digest).expect("object just stored").clone();
        self.store.write_repo_object(&object)?;
        Ok(digest)
    }

    pub fn fetch_asset(&self, digest: &Digest32) -> Result<Vec<u8>, CoopError> {
        self.coop.fetch_asset(digest).map(|b| b.to_vec())
    }

    pub fn deploy_offer(
        &mut self,
        key: &Keypair,
        params: OfferParams,
    ) -> Result<LicenseOffer, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let offer = self.coop.deploy_offer(key, params)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(offer)
    }

    pub fn request_license(
        &mut self,
        key: &Keypair,
        offer_id: &str,
        payment_ref: Option<String>,
    ) -> Result<LicenseGrant, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let grant = self.coop.request_license(key, offer_id, payment_ref)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(grant)
    }

    pub fn revoke_grant(
        &mut self,
        key: &Keypair,
        grant_id: &str,
        reason: &str,
    ) -> Result<LicenseGrant, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let grant = self.coop.revoke_grant(key, grant_id, reason)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(grant)
    }

    pub fn sweep_expirations(&self, now: Option<u64>) -> Vec<String> {
        self.coop.sweep_expirations(now.unwrap_or_else(|| self.coop.next_tick()))
    }

    pub fn verify_license(&self, grant_id: &str, at: Option<u64>) -> LicenseStatus {
        self.coop.verify_license(grant_id, at.unwrap_or_else(|| self.coop.next_tick()))
    }

    pub fn record_payment(
        &mut self,
        key: &Keypair,
        offer_id: &str,
        amount_minor: u64,
        currency: &str,
    ) -> Result<PaymentReceipt, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let receipt = self.coop.record_payment(key, offer_id, amount_minor, currency)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(receipt)
    }

    pub fn payments_for_offer(&self, offer_id: &str) -> Result<Vec<PaymentReceipt>, CoopError> {
        self.coop.payments_for_offer(offer_id)
    }

    pub fn disburse(
        &mut self,
        key: &Keypair,
        receipt_id: &str,
        splits: Option<SplitsTable>,
    ) -> Result<Disbursement, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let d = self.coop.disburse(key, receipt_id, splits)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(d)
    }

    pub fn holder_statement(&self, member_id: &str) -> (Vec<(String, u64)>, u64) {
        self.coop.holder_statement(member_id)
    }

    pub fn ingest_record(
        &mut self,
        owner: &str,
        schema_id: &str,
        attributes: BTreeMap<String, AttrValue>,
    ) -> Result<RecordId, NodeError> {
        let id = self.coop.ingest_record(owner, schema_id, attributes)?;
        let record = self
            .coop
            .opal()
            .records()
            .find(|(rid, _)| **rid == id)
            .map(|(_, r)| r.clone())
            .expect("record just ingested");
        self.store.append_opal_record(id, &record)?;
        Ok(id)
    }

    pub fn register_algorithm(
        &mut self,
        key: &Keypair,
        manifest: ManifestParams,
        approvals: Vec<Approval>,
    ) -> Result<AlgorithmManifest, NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        let m = self.coop.register_algorithm(key, manifest, approvals)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(m)
    }

    pub fn set_consent(
        &mut self,
        key: &Keypair,
        alg_id: &str,
        granted: bool,
    ) -> Result<(), NodeError> {
        let blocks_before = self.coop.ledger().blocks().len();
        self.coop.set_consent(key, alg_id, granted)?;
        let tx = self.last_tx();
        self.record_submit(tx, blocks_before)?;
        Ok(())
    }

    /// Executes a query; the audit entry persists whether the query ran or
    /// was refused.
    pub fn execute_query(
        &mut self,
        alg_id: &str,
        requester: &str,
    ) -> Result<AggregateResult, NodeError> {
        let outcome = self.coop.execute_query(alg_id, requester);
        if let Some(entry) = self.coop.opal().audit.entries().last() {
            self.store.append_audit_entry(entry)?;
        }
        outcome.map_err(NodeError::Domain)
    }

    pub fn read_audit_log(
        &self,
        caller: &str,
        filter: &AuditFilter,
    ) -> Result<Vec<AuditLogEntry>, CoopError> {
        self.coop.read_audit_log(caller, filter)
    }

    pub fn advance_clock(&mut self, to: u64) {
        self.coop.advance_clock(to);
    }

    fn last_tx(&self) -> SignedTransaction {
        self.coop
            .ledger()
            .txs_in_order()
            .last()
            .expect("a transaction was just appended")
            .clone()
    }
}
