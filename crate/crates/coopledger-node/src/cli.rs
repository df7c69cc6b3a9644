//! Command-line surface. Every write subcommand takes `--key <seed file>`
//! and signs client-side; the node applies the same validation it applies
//! to envelopes arriving over the service.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use coopledger_core::identity::Role;
use coopledger_core::license::{LicenseKind, OfferParams};
use coopledger_core::opal::{AlgorithmKind, AttrValue, AuditFilter, ManifestParams};
use coopledger_core::payments::{SplitEntry, SplitsTable};
use coopledger_core::{approve_manifest, canonical, ChainCheck, Digest32, Keypair, PublicKey};
use serde::Serialize;

use crate::config::{self, NodeConfig};
use crate::demo::{self, DemoParams};
use crate::node::Node;
use crate::store::{LogLine, NodeStore};

#[derive(Parser)]
#[command(name = "coopledger", version, about = "music data-cooperative node")]
pub struct Cli {
    /// Data directory (overrides COOPLEDGER_DATA).
    #[arg(long, global = true)]
    pub data: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Key material.
    Key {
        #[command(subcommand)]
        cmd: KeyCmd,
    },
    /// Node lifecycle.
    Node {
        #[command(subcommand)]
        cmd: NodeCmd,
    },
    /// Chain maintenance.
    Chain {
        #[command(subcommand)]
        cmd: ChainCmd,
    },
    /// Membership.
    Member {
        #[command(subcommand)]
        cmd: MemberCmd,
    },
    /// Works and the metadata registry.
    Work {
        #[command(subcommand)]
        cmd: WorkCmd,
    },
    /// Content-addressed repository objects.
    Asset {
        #[command(subcommand)]
        cmd: AssetCmd,
    },
    /// License offers.
    Offer {
        #[command(subcommand)]
        cmd: OfferCmd,
    },
    /// License grants.
    License {
        #[command(subcommand)]
        cmd: LicenseCmd,
    },
    /// Payments and disbursement.
    Pay {
        #[command(subcommand)]
        cmd: PayCmd,
    },
    /// The aggregate-only query engine.
    Opal {
        #[command(subcommand)]
        cmd: OpalCmd,
    },
    /// Replication simulation.
    Sim {
        #[command(subcommand)]
        cmd: SimCmd,
    },
}

#[derive(Subcommand)]
pub enum KeyCmd {
    /// Generate a signing key seed file; prints the public key.
    New {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum NodeCmd {
    /// Create a data dir with a config and an operator key.
    Init {
        #[arg(long, default_value = "coop-main")]
        chain_id: String,
        #[arg(long, default_value_t = 5)]
        k_threshold: u64,
        #[arg(long, default_value_t = 1)]
        quorum: usize,
        #[arg(long, default_value_t = 16)]
        block_size: usize,
        #[arg(long, default_value = "127.0.0.1:7341")]
        listen: String,
    },
    /// Serve the request/response endpoints.
    Serve,
    /// Run the scripted end-to-end workflow on a fresh dir.
    Demo {
        #[arg(long, default_value_t = 1000)]
        price: u64,
        #[arg(long, default_value_t = 1)]
        holders: usize,
    },
}

#[derive(Subcommand)]
pub enum ChainCmd {
    /// Verify the persisted chain; exit 2 names the first bad block.
    Verify,
    /// Write the headered one-tx-per-line export.
    Export {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rebuild a node from an export file.
    Import {
        #[arg(long)]
        input: PathBuf,
    },
}

#[derive(Args)]
pub struct KeyArg {
    /// Signing key seed file (hex).
    #[arg(long)]
    pub key: PathBuf,
}

#[derive(Subcommand)]
pub enum MemberCmd {
    Register {
        #[arg(long)]
        name: String,
        /// Comma-separated: composer,publisher,record-label,dsp,committee.
        #[arg(long)]
        roles: String,
        /// New member's public key (hex), or a seed file via --pubkey-file.
        #[arg(long)]
        pubkey: Option<String>,
        #[arg(long)]
        pubkey_file: Option<PathBuf>,
        #[command(flatten)]
        key: KeyArg,
    },
    Depart {
        #[arg(long)]
        id: String,
        #[command(flatten)]
        key: KeyArg,
    },
    Show {
        #[arg(long)]
        id: String,
    },
}

#[derive(Subcommand)]
pub enum WorkCmd {
    Register {
        /// Creation-metadata document (JSON).
        #[arg(long)]
        meta: PathBuf,
        #[command(flatten)]
        key: KeyArg,
    },
    Resolve {
        work_id: String,
    },
    /// Mint a fresh work id.
    Newid,
}

#[derive(Subcommand)]
pub enum AssetCmd {
    Put {
        #[arg(long)]
        file: PathBuf,
        #[command(flatten)]
        key: KeyArg,
    },
    Get {
        digest: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum OfferCmd {
    Deploy {
        #[arg(long)]
        work: String,
        /// Registry transaction pin; defaults to the newest version.
        #[arg(long)]
        registry_tx: Option<String>,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        price: u64,
        #[arg(long, default_value = "USD")]
        currency: String,
        /// Legal prose file; stored in the repository and digest-bound.
        #[arg(long)]
        prose_file: PathBuf,
        /// holder=num/den, comma-separated.
        #[arg(long)]
        splits: String,
        #[arg(long)]
        term: Option<u64>,
        #[command(flatten)]
        key: KeyArg,
    },
    Show {
        id: String,
    },
}

#[derive(Subcommand)]
pub enum LicenseCmd {
    Request {
        #[arg(long)]
        offer: String,
        #[arg(long)]
        payment: Option<String>,
        #[command(flatten)]
        key: KeyArg,
    },
    Revoke {
        #[arg(long)]
        grant: String,
        #[arg(long)]
        reason: String,
        #[command(flatten)]
        key: KeyArg,
    },
    Verify {
        #[arg(long)]
        grant: String,
        #[arg(long)]
        at: Option<u64>,
    },
    Sweep {
        #[arg(long)]
        now: Option<u64>,
    },
}

#[derive(Subcommand)]
pub enum PayCmd {
    Record {
        #[arg(long)]
        offer: String,
        #[arg(long)]
        amount: u64,
        #[arg(long, default_value = "USD")]
        currency: String,
        #[command(flatten)]
        key: KeyArg,
    },
    List {
        #[arg(long)]
        offer: String,
    },
    Disburse {
        #[arg(long)]
        receipt: String,
        /// holder=num/den, comma-separated; defaults to the offer's table.
        #[arg(long)]
        splits: Option<String>,
        #[command(flatten)]
        key: KeyArg,
    },
    Statement {
        #[arg(long)]
        member: String,
    },
}

#[derive(Subcommand)]
pub enum OpalCmd {
    Ingest {
        #[arg(long)]
        member: String,
        #[arg(long)]
        schema: String,
        /// Flat JSON object of attributes.
        #[arg(long)]
        json: String,
    },
    /// Register an approved algorithm manifest.
    AlgRegister {
        #[arg(long)]
        algorithm: String,
        #[arg(long)]
        schema: String,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        group_by: Option<String>,
        #[arg(long, default_value = "")]
        desc: String,
        /// Committee approver seed files; defaults to --key alone.
        #[arg(long)]
        approver_key: Vec<PathBuf>,
        #[command(flatten)]
        key: KeyArg,
    },
    Consent {
        #[arg(long)]
        alg: String,
        #[arg(long, conflicts_with = "revoke")]
        grant: bool,
        #[arg(long)]
        revoke: bool,
        #[command(flatten)]
        key: KeyArg,
    },
    Query {
        #[arg(long)]
        alg: String,
        #[arg(long)]
        requester: String,
    },
    Audit {
        #[arg(long = "as")]
        caller: String,
        #[arg(long)]
        requester: Option<String>,
        #[arg(long)]
        alg: Option<String>,
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
}

#[derive(Subcommand)]
pub enum SimCmd {
    /// Run a replication simulation from a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fault: Option<String>,
        /// Write the report here as well as stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", canonical::to_canonical_string(value).map_err(|e| anyhow!("{e}"))?);
    Ok(())
}

fn parse_roles(s: &str) -> Result<Vec<Role>> {
    s.split(',')
        .map(str::trim)
        .filter(|r| !r.is_empty())
        .map(|r| Role::parse(r).ok_or_else(|| anyhow!("unknown role {r}")))
        .collect()
}

fn parse_splits(s: &str) -> Result<SplitsTable> {
    let entries = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|pair| {
            let (holder, frac) = pair
                .split_once('=')
                .ok_or_else(|| anyhow!("splits entries look like holder=num/den"))?;
            let (num, den) = frac
                .split_once('/')
                .ok_or_else(|| anyhow!("share {frac} must be num/den"))?;
            Ok(SplitEntry {
                holder: holder.to_string(),
                num: num.parse().context("share numerator")?,
                den: den.parse().context("share denominator")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitsTable::new(entries))
}

fn open_node(data: &Path) -> Result<Node, crate::node::NodeError> {
    Node::open(data)
}

fn author_id(node: &Node, key: &Keypair) -> Result<String> {
    node.coop()
        .author_for_key(&key.public())
        .ok_or_else(|| anyhow!("key is not bound to an active member"))
}

/// Runs the CLI; the caller maps errors to exit codes.
pub fn run(cli: Cli) -> Result<(), crate::node::NodeError> {
    run_inner(cli).map_err(|e| {
        // Anyhow-wrapped node errors keep their classification for exit codes.
        match e.downcast::<crate::node::NodeError>() {
            Ok(ne) => ne,
            Err(other) => crate::node::NodeError::Store(crate::store::StoreError::Io(
                std::io::Error::other(format!("{other:#}")),
            )),
        }
    })
}

fn domainize(e: crate::node::NodeError) -> anyhow::Error {
    anyhow::Error::new(e)
}

fn run_inner(cli: Cli) -> Result<()> {
    let data = config::resolve_data_dir(cli.data.clone());
    match cli.command {
        Command::Key { cmd: KeyCmd::New { out } } => {
            let kp = config::write_key_file(&out)?;
            println!("{}", kp.public().to_hex());
            Ok(())
        }
        Command::Node { cmd } => match cmd {
            NodeCmd::Init { chain_id, k_threshold, quorum, block_size, listen } => {
                if data.join(config::CONFIG_FILE).exists() {
                    bail!("{} already initialized", data.display());
                }
                let operator = config::write_key_file(&data.join(config::OPERATOR_KEY_FILE))?;
                let cfg = NodeConfig {
                    data_dir: data.clone(),
                    chain_id,
                    operator_key: operator.public(),
                    k_threshold,
                    quorum,
                    block_size,
                    listen_endpoint: listen,
                };
                cfg.validate()?;
                cfg.save()?;
                println!("initialized {} (operator key in operator.key)", data.display());
                Ok(())
            }
            NodeCmd::Serve => {
                let node = open_node(&data).map_err(domainize)?;
                let endpoint = node.config().listen_endpoint.clone();
                crate::http::serve_forever(node, &endpoint)
            }
            NodeCmd::Demo { price, holders } => {
                if !(1..=3).contains(&holders) {
                    bail!("--holders must be 1, 2, or 3");
                }
                let mut node = demo::init_demo_node(&data)?;
                let transcript =
                    demo::run_demo(&mut node, &DemoParams { price_minor: price, holders })?;
                for line in transcript {
                    println!("{line}");
                }
                Ok(())
            }
        },
        Command::Chain { cmd } => match cmd {
            ChainCmd::Verify => {
                let node = open_node(&data).map_err(domainize)?;
                match node.verify_chain() {
                    ChainCheck::Ok => {
                        println!("ok");
                        Ok(())
                    }
                    ChainCheck::Corruption { first_bad_seq } => Err(domainize(
                        crate::node::NodeError::Store(crate::store::StoreError::CorruptChain {
                            first_bad_seq,
                            detail: "verification failed".into(),
                        }),
                    )),
                }
            }
            ChainCmd::Export { out } => {
                let node = open_node(&data).map_err(domainize)?;
                let text = node.export_chain().join("\n") + "\n";
                match out {
                    Some(path) => std::fs::write(path, text)?,
                    None => print!("{text}"),
                }
                Ok(())
            }
            ChainCmd::Import { input } => {
                let text = std::fs::read_to_string(&input)?;
                let mut lines = text.lines().filter(|l| !l.trim().is_empty());
                let header: serde_json::Value = serde_json::from_str(
                    lines.next().ok_or_else(|| anyhow!("empty export file"))?,
                )?;
                let mut node = open_node(&data).map_err(domainize)?;
                if node.coop().ledger().tx_count() > 0 {
                    bail!("import requires an empty chain");
                }
                let mut count = 0u64;
                for line in lines {
                    let tx: coopledger_core::SignedTransaction = serde_json::from_str(line)?;
                    node.import_replay_tx(tx).map_err(domainize)?;
                    count += 1;
                }
                let expect = header.get("genesis_hash").and_then(|v| v.as_str()).unwrap_or("");
                let got = node.coop().ledger().genesis_hash().to_hex();
                if !expect.is_empty() && expect != got && expect != Digest32::ZERO.to_hex() {
                    eprintln!("warning: genesis hash differs from header (seal boundaries are not part of the export format)");
                }
                println!("imported {count} transactions, head {}", node.coop().ledger().head_hash());
                Ok(())
            }
        },
        Command::Member { cmd } => match cmd {
            MemberCmd::Register { name, roles, pubkey, pubkey_file, key } => {
                let sponsor = config::read_key_file(&key.key)?;
                let new_key = match (pubkey, pubkey_file) {
                    (Some(hex), _) => PublicKey::from_hex(&hex)
                        .ok_or_else(|| anyhow!("--pubkey must be 64 hex chars"))?,
                    (None, Some(path)) => config::read_key_file(&path)?.public(),
                    (None, None) => bail!("one of --pubkey / --pubkey-file required"),
                };
                let mut node = open_node(&data).map_err(domainize)?;
                let record = node
                    .register_member(&sponsor, &name, &parse_roles(&roles)?, new_key)
                    .map_err(domainize)?;
                print_json(&record)
            }
            MemberCmd::Depart { id, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let receipt = node.depart_member(&kp, &id).map_err(domainize)?;
                print_json(&receipt)
            }
            MemberCmd::Show { id } => {
                let node = open_node(&data).map_err(domainize)?;
                match node.coop().members().get(&id) {
                    Some(m) => print_json(m),
                    None => Err(domainize(crate::node::NodeError::Domain(
                        coopledger_core::CoopError::NotFound(format!("member {id}")),
                    ))),
                }
            }
        },
        Command::Work { cmd } => match cmd {
            WorkCmd::Register { meta, key } => {
                let kp = config::read_key_file(&key.key)?;
                let doc: serde_json::Value =
                    serde_json::from_str(&std::fs::read_to_string(&meta)?)
                        .with_context(|| format!("parsing {}", meta.display()))?;
                let mut node = open_node(&data).map_err(domainize)?;
                let entry = node.register_work(&kp, &doc).map_err(domainize)?;
                print_json(&entry)
            }
            WorkCmd::Resolve { work_id } => {
                let node = open_node(&data).map_err(domainize)?;
                let resolved = node
                    .resolve_work(&work_id)
                    .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?;
                print_json(&resolved)
            }
            WorkCmd::Newid => {
                use rand::RngCore;
                let mut raw = [0u8; 16];
                rand::rngs::OsRng.fill_bytes(&mut raw);
                println!("{}", coopledger_core::ids::work_id_from_bytes(raw));
                Ok(())
            }
        },
        Command::Asset { cmd } => match cmd {
            AssetCmd::Put { file, key } => {
                let kp = config::read_key_file(&key.key)?;
                let bytes = std::fs::read(&file)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let owner = author_id(&node, &kp)?;
                let digest = node.store_asset(&owner, bytes).map_err(domainize)?;
                println!("{digest}");
                Ok(())
            }
            AssetCmd::Get { digest, out } => {
                let node = open_node(&data).map_err(domainize)?;
                let d = Digest32::from_hex(&digest)
                    .ok_or_else(|| anyhow!("digest must be 64 hex chars"))?;
                let bytes = node
                    .fetch_asset(&d)
                    .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?;
                match out {
                    Some(path) => std::fs::write(path, bytes)?,
                    None => {
                        use std::io::Write;
                        std::io::stdout().write_all(&bytes)?;
                    }
                }
                Ok(())
            }
        },
        Command::Offer { cmd } => match cmd {
            OfferCmd::Deploy {
                work,
                registry_tx,
                kind,
                price,
                currency,
                prose_file,
                splits,
                term,
                key,
            } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let registry_tx = match registry_tx {
                    Some(hex) => Digest32::from_hex(&hex)
                        .ok_or_else(|| anyhow!("--registry-tx must be 64 hex chars"))?,
                    None => {
                        node.resolve_work(&work)
                            .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?
                            .entry
                            .tx_id
                    }
                };
                let owner = author_id(&node, &kp)?;
                let prose = node
                    .store_asset(&owner, std::fs::read(&prose_file)?)
                    .map_err(domainize)?;
                let offer = node
                    .deploy_offer(
                        &kp,
                        OfferParams {
                            work_id: work,
                            registry_tx,
                            license_kind: LicenseKind::parse(&kind)
                                .ok_or_else(|| anyhow!("kind is mechanical or performance"))?,
                            price_minor: price,
                            currency,
                            prose_digest: prose,
                            splits: parse_splits(&splits)?,
                            term_ticks: term,
                        },
                    )
                    .map_err(domainize)?;
                print_json(&offer)
            }
            OfferCmd::Show { id } => {
                let node = open_node(&data).map_err(domainize)?;
                match node.coop().licenses().offer(&id) {
                    Some(o) => print_json(o),
                    None => Err(domainize(crate::node::NodeError::Domain(
                        coopledger_core::CoopError::NotFound(format!("offer {id}")),
                    ))),
                }
            }
        },
        Command::License { cmd } => match cmd {
            LicenseCmd::Request { offer, payment, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let grant = node.request_license(&kp, &offer, payment).map_err(domainize)?;
                print_json(&grant)
            }
            LicenseCmd::Revoke { grant, reason, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let g = node.revoke_grant(&kp, &grant, &reason).map_err(domainize)?;
                print_json(&g)
            }
            LicenseCmd::Verify { grant, at } => {
                let node = open_node(&data).map_err(domainize)?;
                print_json(&node.verify_license(&grant, at))
            }
            LicenseCmd::Sweep { now } => {
                let node = open_node(&data).map_err(domainize)?;
                print_json(&node.sweep_expirations(now))
            }
        },
        Command::Pay { cmd } => match cmd {
            PayCmd::Record { offer, amount, currency, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let receipt =
                    node.record_payment(&kp, &offer, amount, &currency).map_err(domainize)?;
                print_json(&receipt)
            }
            PayCmd::List { offer } => {
                let node = open_node(&data).map_err(domainize)?;
                let receipts = node
                    .payments_for_offer(&offer)
                    .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?;
                print_json(&receipts)
            }
            PayCmd::Disburse { receipt, splits, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let table = splits.map(|s| parse_splits(&s)).transpose()?;
                let d = node.disburse(&kp, &receipt, table).map_err(domainize)?;
                print_json(&d)
            }
            PayCmd::Statement { member } => {
                let node = open_node(&data).map_err(domainize)?;
                let (entries, total) = node.holder_statement(&member);
                let lines: Vec<serde_json::Value> = entries
                    .iter()
                    .map(|(d, amount)| {
                        serde_json::json!({"disbursement_id": d, "amount_minor": amount})
                    })
                    .collect();
                print_json(&serde_json::json!({"payouts": lines, "total": total}))
            }
        },
        Command::Opal { cmd } => match cmd {
            OpalCmd::Ingest { member, schema, json } => {
                let attrs: BTreeMap<String, AttrValue> =
                    serde_json::from_str(&json).context("attributes must be a flat JSON object")?;
                let mut node = open_node(&data).map_err(domainize)?;
                let id = node.ingest_record(&member, &schema, attrs).map_err(domainize)?;
                print_json(&serde_json::json!({"record": id.0}))
            }
            OpalCmd::AlgRegister { algorithm, schema, target, group_by, desc, approver_key, key } => {
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                let manifest = ManifestParams {
                    algorithm: AlgorithmKind::parse(&algorithm)
                        .ok_or_else(|| anyhow!("algorithm is count, sum, mean, or histogram"))?,
                    schema_id: schema,
                    target_field: target,
                    group_by,
                    description: desc,
                };
                let approver_files =
                    if approver_key.is_empty() { vec![key.key.clone()] } else { approver_key };
                let mut approvers = Vec::new();
                for path in &approver_files {
                    let akp = config::read_key_file(path)?;
                    let id = author_id(&node, &akp)?;
                    approvers.push((id, akp));
                }
                let refs: Vec<(&str, &Keypair)> =
                    approvers.iter().map(|(id, k)| (id.as_str(), k)).collect();
                let approvals = approve_manifest(&manifest, &refs);
                let m = node.register_algorithm(&kp, manifest, approvals).map_err(domainize)?;
                print_json(&m)
            }
            OpalCmd::Consent { alg, grant, revoke, key } => {
                if grant == revoke {
                    bail!("pass exactly one of --grant / --revoke");
                }
                let kp = config::read_key_file(&key.key)?;
                let mut node = open_node(&data).map_err(domainize)?;
                node.set_consent(&kp, &alg, grant).map_err(domainize)?;
                print_json(&serde_json::json!({"alg_id": alg, "granted": grant}))
            }
            OpalCmd::Query { alg, requester } => {
                let mut node = open_node(&data).map_err(domainize)?;
                let result = node.execute_query(&alg, &requester).map_err(domainize)?;
                print_json(&result)
            }
            OpalCmd::Audit { caller, requester, alg, from, to } => {
                let node = open_node(&data).map_err(domainize)?;
                let filter =
                    AuditFilter { requester, alg_id: alg, from_tick: from, to_tick: to };
                let entries = node
                    .read_audit_log(&caller, &filter)
                    .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?;
                print_json(&entries)
            }
        },
        Command::Sim { cmd } => match cmd {
            SimCmd::Run { config: path, fault, out } => {
                let raw = std::fs::read_to_string(&path)
                    .with_context(|| format!("reading {}", path.display()))?;
                let mut sim_config: coopledger_core::sim::SimConfig =
                    serde_json::from_str(&raw).context("parsing simulation config")?;
                if let Some(f) = fault {
                    sim_config.fault = Some(match f.as_str() {
                        "duplicate" => coopledger_core::sim::FaultKind::Duplicate,
                        "reorder" => coopledger_core::sim::FaultKind::Reorder,
                        other => bail!("unknown fault {other}"),
                    });
                }
                let report = coopledger_core::sim::run_simulation(&sim_config)
                    .map_err(|e| domainize(crate::node::NodeError::Domain(e)))?;
                let rendered =
                    canonical::to_canonical_string(&report).map_err(|e| anyhow!("{e}"))?;
                if let Some(out) = out {
                    std::fs::write(out, format!("{rendered}\n"))?;
                }
                println!("{rendered}");
                Ok(())
            }
        },
    }
}

/// Loads a raw chain log line (used by import tooling and tests).
pub fn parse_log_line(line: &str) -> Result<LogLine> {
    Ok(serde_json::from_str(line)?)
}

/// Convenience for tests: byte-level tampering of a persisted chain.
pub fn chain_file_path(data_dir: &Path) -> PathBuf {
    NodeStore::new(data_dir).chain_path()
}
