//! coopledger-core: a music data-cooperative node in library form.
//!
//! A member-writable, publicly readable metadata-registry ledger; Ricardian
//! license contracts with payment tracking and exact splits disbursement; an
//! aggregate-only query engine with consent and a tamper-evident audit log;
//! and a deterministic replication simulator. Everything here is pure state
//! over `alloc` — IO, persistence, the CLI, and the service live in the
//! companion `coopledger-node` crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod canonical;
pub mod coop;
pub mod crypto;
pub mod error;
pub mod identity;
pub mod ids;
pub mod ledger;
pub mod license;
pub mod opal;
pub mod payments;
pub mod registry;
pub mod sim;
pub mod tx;

pub use coop::{approve_manifest, Coop, CoopConfig, SubmitMode};
pub use crypto::{Digest32, Keypair, PublicKey, SignatureBytes};
pub use error::CoopError;
pub use ledger::{Block, ChainCheck, Ledger};
pub use tx::{SignedTransaction, TxPayload, TxReceipt};
