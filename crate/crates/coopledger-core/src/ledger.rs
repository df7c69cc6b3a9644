//! The append-only hash-chained transaction log.
//!
//! One sequencer assigns total order. Appended transactions accumulate in an
//! open block that seals automatically every `block_size` transactions or on
//! an explicit seal, whichever comes first. Anyone may read; the authorization
//! of writers is enforced a level up, where the member registry lives.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::crypto::Digest32;
use crate::error::CoopError;
use crate::tx::{SignedTransaction, TxReceipt};

use alloc::collections::BTreeMap;

pub const DEFAULT_BLOCK_SIZE: usize = 16;

/// A sealed block: ordered transactions plus the chain linkage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub seq: u64,
    pub prev_hash: Digest32,
    pub tx_list: Vec<SignedTransaction>,
    pub block_hash: Digest32,
}

impl Block {
    pub fn tx_ids(&self) -> Vec<Digest32> {
        self.tx_list.iter().map(|t| t.tx_id).collect()
    }

    /// Header view used by persistence and replication checkpoints.
    pub fn header(&self) -> BlockHeader {
        BlockHeader {
            seq: self.seq,
            prev_hash: self.prev_hash,
            tx_ids: self.tx_ids(),
            block_hash: self.block_hash,
        }
    }
}

/// The digested portion of a block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub seq: u64,
    pub prev_hash: Digest32,
    pub tx_ids: Vec<Digest32>,
    pub block_hash: Digest32,
}

/// `block_hash` = digest of the canonical (seq, prev_hash, tx_ids) record.
pub fn compute_block_hash(seq: u64, prev_hash: &Digest32, tx_ids: &[Digest32]) -> Digest32 {
    #[derive(Serialize)]
    struct Hashed<'a> {
        seq: u64,
        prev_hash: &'a Digest32,
        tx_ids: &'a [Digest32],
    }
    canonical::digest(&Hashed { seq, prev_hash, tx_ids }).expect("block header always serializes")
}

/// Outcome of a full-chain verification pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainCheck {
    Ok,
    /// Earliest block whose contents fail to recompute or link.
    Corruption { first_bad_seq: u64 },
}

impl ChainCheck {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainCheck::Ok)
    }
}

/// Structural verification of a sealed-block slice: per-transaction digests,
/// per-block hashes, prev linkage, and chain-wide tx_id uniqueness.
/// Signatures are checked at append time, not here.
pub fn verify_blocks(blocks: &[Block]) -> ChainCheck {
    let mut seen = alloc::collections::BTreeSet::new();
    let mut prev = Digest32::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        let seq = i as u64;
        if block.seq != seq || block.prev_hash != prev {
            return ChainCheck::Corruption { first_bad_seq: seq };
        }
        for tx in &block.tx_list {
            if tx.check_tx_id().is_err() || !seen.insert(tx.tx_id) {
                return ChainCheck::Corruption { first_bad_seq: seq };
            }
        }
        if compute_block_hash(seq, &block.prev_hash, &block.tx_ids()) != block.block_hash {
            return ChainCheck::Corruption { first_bad_seq: seq };
        }
        prev = block.block_hash;
    }
    ChainCheck::Ok
}

/// The sequencer's chain: sealed blocks plus the open block.
#[derive(Debug, Clone)]
pub struct Ledger {
    chain_id: String,
    blocks: Vec<Block>,
    open: Vec<SignedTransaction>,
    index: BTreeMap<Digest32, (u64, u32)>,
    head_time: u64,
    block_size: usize,
}

impl Ledger {
    pub fn new(chain_id: &str, block_size: usize) -> Self {
        Ledger {
            chain_id: String::from(chain_id),
            blocks: Vec::new(),
            open: Vec::new(),
            index: BTreeMap::new(),
            head_time: 0,
            block_size: block_size.max(1),
        }
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    /// Latest appended logical time (0 on an empty chain).
    pub fn head_time(&self) -> u64 {
        self.head_time
    }

    /// Hash of the newest sealed block; all-zero before the first seal.
    pub fn head_hash(&self) -> Digest32 {
        self.blocks.last().map(|b| b.block_hash).unwrap_or(Digest32::ZERO)
    }

    pub fn genesis_hash(&self) -> Digest32 {
        self.blocks.first().map(|b| b.block_hash).unwrap_or(Digest32::ZERO)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn open_txs(&self) -> &[SignedTransaction] {
        &self.open
    }

    pub fn tx_count(&self) -> u64 {
        self.index.len() as u64
    }

    pub fn contains(&self, tx_id: &Digest32) -> bool {
        self.index.contains_key(tx_id)
    }

    /// Appends a structurally valid transaction. Duplicate ids and time
    /// regressions are rejected; the block auto-seals when it fills.
    pub fn append(&mut self, tx: SignedTransaction) -> Result<TxReceipt, CoopError> {
        tx.check_tx_id()?;
        if self.index.contains_key(&tx.tx_id) {
            return Err(CoopError::DuplicateTransaction);
        }
        if tx.logical_time() < self.head_time {
            return Err(CoopError::TimeRegression);
        }
        let receipt = TxReceipt {
            tx_id: tx.tx_id,
            block_seq: self.blocks.len() as u64,
            index_in_block: self.open.len() as u32,
            logical_time: tx.logical_time(),
        };
        self.head_time = tx.logical_time();
        self.index.insert(tx.tx_id, (receipt.block_seq, receipt.index_in_block));
        self.open.push(tx);
        if self.open.len() >= self.block_size {
            self.seal().expect("open block is nonempty");
        }
        Ok(receipt)
    }

    /// Seals the open block. The sealed block is immutable from here on.
    pub fn seal(&mut self) -> Result<&Block, CoopError> {
        if self.open.is_empty() {
            return Err(CoopError::EmptyBlock);
        }
        let seq = self.blocks.len() as u64;
        let prev_hash = self.head_hash();
        let tx_list = core::mem::take(&mut self.open);
        let tx_ids: Vec<Digest32> = tx_list.iter().map(|t| t.tx_id).collect();
        let block_hash = compute_block_hash(seq, &prev_hash, &tx_ids);
        self.blocks.push(Block { seq, prev_hash, tx_list, block_hash });
        Ok(self.blocks.last().expect("just pushed"))
    }

    /// Public read: transaction plus its position. No credential required.
    pub fn read(&self, tx_id: &Digest32) -> Option<(&SignedTransaction, TxReceipt)> {
        let &(seq, idx) = self.index.get(tx_id)?;
        let tx = if (seq as usize) < self.blocks.len() {
            &self.blocks[seq as usize].tx_list[idx as usize]
        } else {
            &self.open[idx as usize]
        };
        let receipt = TxReceipt {
            tx_id: tx.tx_id,
            block_seq: seq,
            index_in_block: idx,
            logical_time: tx.logical_time(),
        };
        Some((tx, receipt))
    }

    /// All transactions in chain order (sealed blocks, then the open block).
    pub fn txs_in_order(&self) -> impl Iterator<Item = &SignedTransaction> {
        self.blocks.iter().flat_map(|b| b.tx_list.iter()).chain(self.open.iter())
    }

    /// Structural integrity of the whole chain; open transactions count
    /// toward the block sequence they will seal into.
    pub fn verify(&self) -> ChainCheck {
        let sealed = verify_blocks(&self.blocks);
        if !sealed.is_ok() {
            return sealed;
        }
        let mut seen: alloc::collections::BTreeSet<_> =
            self.blocks.iter().flat_map(|b| b.tx_list.iter().map(|t| t.tx_id)).collect();
        for tx in &self.open {
            if tx.check_tx_id().is_err() || !seen.insert(tx.tx_id) {
                return ChainCheck::Corruption { first_bad_seq: self.blocks.len() as u64 };
            }
        }
        ChainCheck::Ok
    }

    /// Test hook: silently mutates a transaction inside a sealed block,
    /// mimicking storage corruption.
    #[doc(hidden)]
    pub fn corrupt_block_for_tests(&mut self, seq: usize) {
        if let Some(block) = self.blocks.get_mut(seq) {
            if let Some(tx) = block.tx_list.first_mut() {
                tx.body.logical_time ^= 1;
            }
        }
    }

    /// Export lines: a header (chain id and genesis hash) followed by one
    /// canonical transaction per line in chain order.
    pub fn export_lines(&self) -> Vec<String> {
        #[derive(Serialize)]
        struct Header<'a> {
            chain_id: &'a str,
            genesis_hash: Digest32,
        }
        let mut out = Vec::with_capacity(self.index.len() + 1);
        out.push(
            canonical::to_canonical_string(&Header {
                chain_id: &self.chain_id,
                genesis_hash: self.genesis_hash(),
            })
            .expect("header serializes"),
        );
        for tx in self.txs_in_order() {
            out.push(canonical::to_canonical_string(tx).expect("tx serializes"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Keypair;
    use crate::tx::TxPayload;
    use alloc::format;
    use alloc::string::ToString;

    fn tx_at(i: u64, time: u64) -> SignedTransaction {
        let key = Keypair::from_label("seq");
        SignedTransaction::build(
            "mem:test",
            time,
            TxPayload::PaymentRecord {
                amount_minor: i,
                currency: "USD".to_string(),
                reference: format!("off:{i}"),
            },
            &key,
        )
    }

    #[test]
    fn first_tx_lands_at_block_zero_index_zero() {
        let mut l = Ledger::new("c", DEFAULT_BLOCK_SIZE);
        let r = l.append(tx_at(0, 1)).unwrap();
        assert_eq!((r.block_seq, r.index_in_block), (0, 0));
    }

    #[test]
    fn duplicate_append_rejected_and_oracle_agrees() {
        let mut l = Ledger::new("c", DEFAULT_BLOCK_SIZE);
        let tx = tx_at(1, 1);
        l.append(tx.clone()).unwrap();
        // Independent oracle: recompute the tx_id set over the whole chain.
        let ids: alloc::collections::BTreeSet<_> =
            l.txs_in_order().map(|t| t.body.digest()).collect();
        assert!(ids.contains(&tx.tx_id));
        assert_eq!(l.append(tx), Err(CoopError::DuplicateTransaction));
        assert_eq!(l.tx_count(), 1);
    }

    #[test]
    fn time_regression_rejected() {
        let mut l = Ledger::new("c", DEFAULT_BLOCK_SIZE);
        l.append(tx_at(0, 5)).unwrap();
        assert_eq!(l.append(tx_at(1, 4)), Err(CoopError::TimeRegression));
        l.append(tx_at(2, 5)).unwrap(); // ties allowed
    }

    #[test]
    fn seal_links_blocks_and_rejects_empty() {
        let mut l = Ledger::new("c", DEFAULT_BLOCK_SIZE);
        for i in 0..3 {
            l.append(tx_at(i, i)).unwrap();
        }
        let first = l.seal().unwrap().clone();
        assert_eq!(first.seq, 0);
        assert!(first.prev_hash.is_zero());
        assert_eq!(first.tx_list.len(), 3);
        assert_eq!(l.seal(), Err(CoopError::EmptyBlock));

        l.append(tx_at(9, 9)).unwrap();
        let second = l.seal().unwrap().clone();
        assert_eq!(second.prev_hash, first.block_hash);
        // Independent digest recomputation of the link target.
        let recomputed = compute_block_hash(0, &Digest32::ZERO, &first.tx_ids());
        assert_eq!(second.prev_hash, recomputed);
    }

    #[test]
    fn auto_seal_every_block_size() {
        let mut l = Ledger::new("c", 4);
        for i in 0..9 {
            l.append(tx_at(i, i)).unwrap();
        }
        assert_eq!(l.blocks().len(), 2);
        assert_eq!(l.open_txs().len(), 1);
    }

    #[test]
    fn verify_detects_earliest_tamper() {
        let mut l = Ledger::new("c", 2);
        for i in 0..12 {
            l.append(tx_at(i, i)).unwrap();
        }
        assert!(l.verify().is_ok());
        // Flip one payload byte inside block 5.
        let mut corrupt = l.clone();
        if let TxPayload::PaymentRecord { amount_minor, .. } =
            &mut corrupt.blocks[5].tx_list[0].body.payload
        {
            *amount_minor += 1;
        }
        assert_eq!(corrupt.verify(), ChainCheck::Corruption { first_bad_seq: 5 });
    }

    #[test]
    fn empty_chain_verifies() {
        let l = Ledger::new("c", DEFAULT_BLOCK_SIZE);
        assert!(l.verify().is_ok());
        assert!(l.head_hash().is_zero());
    }

    #[test]
    fn read_returns_position_and_unknown_is_none() {
        let mut l = Ledger::new("c", 2);
        let tx = tx_at(3, 3);
        let id = tx.tx_id;
        l.append(tx).unwrap();
        let (found, receipt) = l.read(&id).unwrap();
        assert_eq!(found.tx_id, id);
        assert_eq!(receipt.block_seq, 0);
        assert!(l.read(&Digest32::of_bytes(b"nope")).is_none());
    }

    #[test]
    fn sealed_blocks_stay_byte_identical_after_later_appends() {
        let mut l = Ledger::new("c", 2);
        for i in 0..4 {
            l.append(tx_at(i, i)).unwrap();
        }
        let snapshot = canonical::to_canonical_string(&l.blocks()[0]).unwrap();
        for i in 4..10 {
            l.append(tx_at(i, i)).unwrap();
        }
        l.seal().ok();
        assert_eq!(canonical::to_canonical_string(&l.blocks()[0]).unwrap(), snapshot);
    }
}
