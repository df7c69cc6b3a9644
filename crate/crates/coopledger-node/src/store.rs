//! Durable storage under the data dir.
//!
//! Layout:
//!   chain.log            one canonical line per event: {"tx":...} or {"seal":...}
//!   repo/<digest>.bin    repository object bytes
//!   repo/<digest>.owner  owning member id
//!   opal/records.jsonl   engine records, one {"id":..,"record":..} per line
//!   opal/audit.jsonl     audit entries in chain order
//!
//! The chain file is the single source of truth for module state; loading
//! replays every transaction through the same validation as the original
//! append, so any byte flip surfaces as corruption at a specific block.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use coopledger_core::ledger::BlockHeader;
use coopledger_core::opal::{AuditLogEntry, PersonalDataRecord, RecordId};
use coopledger_core::registry::RepositoryObject;
use coopledger_core::{canonical, Coop, Digest32, SignedTransaction, SubmitMode};
use serde::{Deserialize, Serialize};

pub const CHAIN_FILE: &str = "chain.log";

#[derive(Debug)]
pub enum StoreError {
    /// The persisted chain fails verification; earliest bad block named.
    CorruptChain { first_bad_seq: u64, detail: String },
    /// The audit log fails verification at this entry.
    CorruptAudit { entry: u64 },
    Io(std::io::Error),
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::CorruptChain { first_bad_seq, detail } => {
                write!(f, "corrupt store: block {first_bad_seq}: {detail}")
            }
            StoreError::CorruptAudit { entry } => {
                write!(f, "corrupt store: audit entry {entry}")
            }
            StoreError::Io(e) => write!(f, "store io: {e}"),
        }
    }
}

impl std::error::Error for StoreError {}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e)
    }
}

/// One line of the chain log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LogLine {
    #[serde(rename = "tx")]
    Tx(SignedTransaction),
    #[serde(rename = "seal")]
    Seal(BlockHeader),
}

pub struct NodeStore {
    data_dir: PathBuf,
}

impl NodeStore {
    pub fn new(data_dir: &Path) -> NodeStore {
        NodeStore { data_dir: data_dir.to_path_buf() }
    }

    pub fn chain_path(&self) -> PathBuf {
        self.data_dir.join(CHAIN_FILE)
    }

    fn repo_dir(&self) -> PathBuf {
        self.data_dir.join("repo")
    }

    fn records_path(&self) -> PathBuf {
        self.data_dir.join("opal/records.jsonl")
    }

    fn audit_path(&self) -> PathBuf {
        self.data_dir.join("opal/audit.jsonl")
    }

    fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = OpenOptions::new().create(true).append(true).open(path)?;
        writeln!(f, "{line}")?;
        f.sync_data()?;
        Ok(())
    }

    pub fn append_tx(&self, tx: &SignedTransaction) -> Result<(), StoreError> {
        let line = canonical::to_canonical_string(&LogLine::Tx(tx.clone()))
            .expect("transactions serialize");
        Self::append_line(&self.chain_path(), &line)
    }

    pub fn append_seal(&self, header: &BlockHeader) -> Result<(), StoreError> {
        let line = canonical::to_canonical_string(&LogLine::Seal(header.clone()))
            .expect("headers serialize");
        Self::append_line(&self.chain_path(), &line)
    }

    pub fn write_repo_object(&self, object: &RepositoryObject) -> Result<(), StoreError> {
        let dir = self.repo_dir();
        fs::create_dir_all(&dir)?;
        let hex = object.content_digest.to_hex();
        fs::write(dir.join(format!("{hex}.bin")), &object.bytes)?;
        fs::write(dir.join(format!("{hex}.owner")), &object.owner)?;
        Ok(())
    }

    pub fn delete_repo_object(&self, digest: &Digest32) -> Result<(), StoreError> {
        let dir = self.repo_dir();
        let hex = digest.to_hex();
        for suffix in ["bin", "owner"] {
            let path = dir.join(format!("{hex}.{suffix}"));
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        Ok(())
    }

    pub fn append_opal_record(&self, id: RecordId, record: &PersonalDataRecord) -> Result<(), StoreError> {
        #[derive(Serialize)]
        struct Line<'a> {
            id: u64,
            record: &'a PersonalDataRecord,
        }
        let line = canonical::to_canonical_string(&Line { id: id.0, record })
            .expect("records serialize");
        Self::append_line(&self.records_path(), &line)
    }

    /// Rewrites the records file from the engine's surviving records
    /// (after a departure purge).
    pub fn rewrite_opal_records(&self, coop: &Coop) -> Result<(), StoreError> {
        #[derive(Serialize)]
        struct Line<'a> {
            id: u64,
            record: &'a PersonalDataRecord,
        }
        let path = self.records_path();
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = File::create(&path)?;
        for (id, record) in coop.opal().records() {
            let line = canonical::to_canonical_string(&Line { id: id.0, record })
                .expect("records serialize");
            writeln!(f, "{line}")?;
        }
        f.sync_data()?;
        Ok(())
    }

    pub fn append_audit_entry(&self, entry: &AuditLogEntry) -> Result<(), StoreError> {
        let line = canonical::to_canonical_string(entry).expect("audit entries serialize");
        Self::append_line(&self.audit_path(), &line)
    }

    /// Loads everything into a fresh `Coop`, verifying as it goes.
    pub fn load(&self, config: coopledger_core::CoopConfig) -> Result<Coop, StoreError> {
        let mut coop = Coop::new(config);

        // Repository objects first: replay validation may consult them.
        let repo_dir = self.repo_dir();
        if repo_dir.is_dir() {
            let mut names: Vec<PathBuf> = fs::read_dir(&repo_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "bin"))
                .collect();
            names.sort();
            for bin in names {
                let hex = bin.file_stem().unwrap_or_default().to_string_lossy().to_string();
                let Some(digest) = Digest32::from_hex(&hex) else { continue };
                let bytes = fs::read(&bin)?;
                let owner = fs::read_to_string(repo_dir.join(format!("{hex}.owner")))
                    .unwrap_or_default();
                coop.restore_repo_object(RepositoryObject {
                    content_digest: digest,
                    bytes,
                    owner,
                });
            }
        }

        // Chain replay: every tx revalidated, every seal checkpointed.
        let chain_path = self.chain_path();
        if chain_path.is_file() {
            let reader = BufReader::new(File::open(&chain_path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let at_block = coop.ledger().blocks().len() as u64;
                let parsed: LogLine = serde_json::from_str(&line).map_err(|e| {
                    StoreError::CorruptChain {
                        first_bad_seq: at_block,
                        detail: format!("unreadable line: {e}"),
                    }
                })?;
                match parsed {
                    LogLine::Tx(tx) => {
                        coop.submit_mode(tx, SubmitMode::Replay).map_err(|e| {
                            StoreError::CorruptChain {
                                first_bad_seq: at_block,
                                detail: format!("replay rejected transaction: {e}"),
                            }
                        })?;
                    }
                    LogLine::Seal(header) => {
                        let sealed = coop.ledger().blocks().len() as u64;
                        if sealed == header.seq {
                            // An explicit seal: perform it now.
                            coop.seal().map_err(|e| StoreError::CorruptChain {
                                first_bad_seq: header.seq,
                                detail: format!("seal marker without open block: {e}"),
                            })?;
                        }
                        let block =
                            coop.ledger().blocks().get(header.seq as usize).ok_or_else(|| {
                                StoreError::CorruptChain {
                                    first_bad_seq: header.seq,
                                    detail: "seal marker out of order".into(),
                                }
                            })?;
                        if block.header() != header {
                            return Err(StoreError::CorruptChain {
                                first_bad_seq: header.seq,
                                detail: "sealed block differs from checkpoint".into(),
                            });
                        }
                    }
                }
            }
        }
        if let coopledger_core::ChainCheck::Corruption { first_bad_seq } = coop.verify_chain() {
            return Err(StoreError::CorruptChain {
                first_bad_seq,
                detail: "chain verification failed".into(),
            });
        }

        // Engine-side stores.
        let records_path = self.records_path();
        if records_path.is_file() {
            #[derive(Deserialize)]
            struct Line {
                id: u64,
                record: PersonalDataRecord,
            }
            let reader = BufReader::new(File::open(&records_path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: Line = serde_json::from_str(&line).map_err(|e| {
                    StoreError::Io(std::io::Error::other(format!("records file: {e}")))
                })?;
                coop.restore_opal_record(RecordId(parsed.id), parsed.record);
            }
        }

        let audit_path = self.audit_path();
        if audit_path.is_file() {
            let reader = BufReader::new(File::open(&audit_path)?);
            let mut entries = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: AuditLogEntry = serde_json::from_str(&line)
                    .map_err(|_| StoreError::CorruptAudit { entry: i as u64 })?;
                entries.push(entry);
            }
            coop.restore_audit_log(entries)
                .map_err(|entry| StoreError::CorruptAudit { entry })?;
        }
        Ok(coop)
    }
}
