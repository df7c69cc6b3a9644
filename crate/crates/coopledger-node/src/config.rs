//! Node configuration file and key material on disk.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use coopledger_core::{Keypair, PublicKey};
use serde::{Deserialize, Serialize};

pub const CONFIG_FILE: &str = "config.json";
pub const OPERATOR_KEY_FILE: &str = "operator.key";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NodeConfig {
    pub data_dir: PathBuf,
    pub chain_id: String,
    pub operator_key: PublicKey,
    #[serde(default = "default_k")]
    pub k_threshold: u64,
    #[serde(default = "default_quorum")]
    pub quorum: usize,
    #[serde(default = "default_block_size")]
    pub block_size: usize,
    #[serde(default = "default_listen")]
    pub listen_endpoint: String,
}

fn default_k() -> u64 {
    5
}

fn default_quorum() -> usize {
    1
}

fn default_block_size() -> usize {
    16
}

fn default_listen() -> String {
    "127.0.0.1:7341".to_string()
}

impl NodeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_threshold < 1 || self.quorum < 1 || self.block_size < 1 {
            bail!("k_threshold, quorum, and block_size must all be >= 1");
        }
        Ok(())
    }

    pub fn load(data_dir: &Path) -> Result<NodeConfig> {
        let path = data_dir.join(CONFIG_FILE);
        let raw = fs::read_to_string(&path)
            .with_context(|| format!("no node config at {}", path.display()))?;
        let mut config: NodeConfig = serde_json::from_str(&raw)
            .with_context(|| format!("malformed config {}", path.display()))?;
        config.data_dir = data_dir.to_path_buf();
        config.validate()?;
        Ok(config)
    }

    pub fn save(&self) -> Result<()> {
        fs::create_dir_all(&self.data_dir)?;
        let path = self.data_dir.join(CONFIG_FILE);
        fs::write(&path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn core_config(&self) -> coopledger_core::CoopConfig {
        coopledger_core::CoopConfig {
            chain_id: self.chain_id.clone(),
            operator_key: self.operator_key,
            block_size: self.block_size,
            k_threshold: self.k_threshold,
            quorum: self.quorum,
        }
    }
}

/// The data dir: --data flag, else COOPLEDGER_DATA, else ./coopledger-data.
pub fn resolve_data_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os("COOPLEDGER_DATA").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("coopledger-data"))
}

/// Writes a fresh keypair seed as hex; returns the keypair.
pub fn write_key_file(path: &Path) -> Result<Keypair> {
    use rand::RngCore;
    let mut seed = [0u8; 32];
    rand::rngs::OsRng.fill_bytes(&mut seed);
    let kp = Keypair::from_seed(seed);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, format!("{}\n", hex::encode(seed)))?;
    Ok(kp)
}

/// Reads a 32-byte hex seed file into a keypair.
pub fn read_key_file(path: &Path) -> Result<Keypair> {
    let raw = fs::read_to_string(path)
        .with_context(|| format!("cannot read key file {}", path.display()))?;
    let seed_bytes =
        hex::decode(raw.trim()).with_context(|| format!("key file {} is not hex", path.display()))?;
    let seed: [u8; 32] = seed_bytes
        .try_into()
        .map_err(|_| anyhow::anyhow!("key file {} must hold 32 hex-encoded bytes", path.display()))?;
    Ok(Keypair::from_seed(seed))
}
