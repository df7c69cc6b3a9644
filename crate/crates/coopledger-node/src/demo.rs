//! The scripted end-to-end workflow: seat a committee, admit members,
//! notarize a work, deploy a priced offer, pay, license, verify, disburse,
//! and print statements. Nine steps, each resumable: a step locates what it
//! needs in node state, so the run survives a restart between any two steps.
//!
//! Keys derive from fixed labels and the work id from a fixed digest, so a
//! demo transcript is deterministic for a given (price, holders) pair.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use coopledger_core::identity::Role;
use coopledger_core::license::{LicenseKind, LicenseStatus, OfferParams};
use coopledger_core::payments::SplitsTable;
use coopledger_core::{ids, Digest32, Keypair};
use serde_json::json;

use crate::config::NodeConfig;
use crate::node::Node;

pub const DEMO_STEPS: usize = 9;
pub const DEMO_CHAIN_ID: &str = "coop-demo";

#[derive(Debug, Clone, Copy)]
pub struct DemoParams {
    pub price_minor: u64,
    pub holders: usize,
}

impl Default for DemoParams {
    fn default() -> Self {
        DemoParams { price_minor: 1000, holders: 1 }
    }
}

fn demo_key(label: &str) -> Keypair {
    Keypair::from_label(&format!("demo-{label}"))
}

fn holder_labels(params: &DemoParams) -> &'static [&'static str] {
    match params.holders {
        1 => &["ada"],
        2 => &["ada", "bob"],
        _ => &["ada", "bob", "cid"],
    }
}

fn demo_work_id() -> String {
    let digest = Digest32::of_bytes(b"coopledger demo work");
    let mut raw = [0u8; 16];
    raw.copy_from_slice(&digest.0[..16]);
    ids::work_id_from_bytes(raw)
}

/// Initializes a fresh demo node in `data_dir`. Refuses a dir that already
/// holds a chain.
pub fn init_demo_node(data_dir: &Path) -> Result<Node> {
    if data_dir.join(crate::store::CHAIN_FILE).exists() {
        bail!("demo needs a fresh data dir, found a chain in {}", data_dir.display());
    }
    let config = NodeConfig {
        data_dir: data_dir.to_path_buf(),
        chain_id: DEMO_CHAIN_ID.to_string(),
        operator_key: demo_key("operator").public(),
        k_threshold: 5,
        quorum: 1,
        block_size: 16,
        listen_endpoint: "127.0.0.1:7341".to_string(),
    };
    config.save()?;
    Node::open(data_dir).map_err(|e| anyhow!("{e}"))
}

fn member_id_for(node: &Node, label: &str) -> Result<String> {
    node.coop()
        .author_for_key(&demo_key(label).public())
        .ok_or_else(|| anyhow!("{label} is not yet a member"))
}

fn the_offer(node: &Node) -> Result<coopledger_core::license::LicenseOffer> {
    node.coop()
        .licenses()
        .offers()
        .next()
        .cloned()
        .ok_or_else(|| anyhow!("no offer deployed yet"))
}

/// Runs one demo step (1-based), returning its transcript lines.
pub fn run_demo_step(node: &mut Node, step: usize, params: &DemoParams) -> Result<Vec<String>> {
    let mut run = || -> Result<Vec<String>> {
        match step {
            1 => {
                let carol = node.register_member(
                    &demo_key("operator"),
                    "Carol",
                    &[Role::GovernanceCommittee],
                    demo_key("carol").public(),
                )?;
                Ok(vec![format!("step 1: committee member seated: {}", carol.member_id)])
            }
            2 => {
                let carol = demo_key("carol");
                let mut lines = Vec::new();
                for label in holder_labels(params) {
                    let m = node.register_member(
                        &carol,
                        label,
                        &[Role::Composer],
                        demo_key(label).public(),
                    )?;
                    lines.push(format!("step 2: composer admitted: {} ({})", m.member_id, label));
                }
                let pat =
                    node.register_member(&carol, "pat", &[Role::Publisher], demo_key("pat").public())?;
                lines.push(format!("step 2: publisher admitted: {} (pat)", pat.member_id));
                Ok(lines)
            }
            3 => {
                let creators: Vec<_> = holder_labels(params)
                    .iter()
                    .map(|l| {
                        member_id_for(node, l)
                            .map(|id| json!({"member_id": id, "role": "Composer"}))
                    })
                    .collect::<Result<_>>()?;
                let doc = json!({
                    "work_id": demo_work_id(),
                    "title": "Demo Song",
                    "creators": creators,
                    "version_label": "v1",
                    "created_note": "scripted demo"
                });
                let entry = node.register_work(&demo_key("ada"), &doc)?;
                Ok(vec![
                    format!("step 3: work notarized: {} tx {}", entry.work_id, entry.tx_id),
                    format!("step 3: pointer: {}", entry.pointer),
                ])
            }
            4 => {
                let ada_id = member_id_for(node, "ada")?;
                let prose = node.store_asset(
                    &ada_id,
                    b"LICENSE: the licensee may reproduce the work in a sound recording."
                        .to_vec(),
                )?;
                let entry = node
                    .resolve_work(&demo_work_id())
                    .map_err(|e| anyhow!("work not registered: {e}"))?
                    .entry;
                let holder_ids: Vec<String> = holder_labels(params)
                    .iter()
                    .map(|l| member_id_for(node, l))
                    .collect::<Result<_>>()?;
                let holder_refs: Vec<&str> = holder_ids.iter().map(String::as_str).collect();
                let offer = node.deploy_offer(
                    &demo_key("ada"),
                    OfferParams {
                        work_id: entry.work_id.clone(),
                        registry_tx: entry.tx_id,
                        license_kind: LicenseKind::Mechanical,
                        price_minor: params.price_minor,
                        currency: "USD".into(),
                        prose_digest: prose,
                        splits: SplitsTable::equal(&holder_refs),
                        term_ticks: None,
                    },
                )?;
                Ok(vec![format!(
                    "step 4: offer deployed: {} price {} USD, {} holder(s)",
                    offer.offer_id,
                    offer.price_minor,
                    offer.splits.entries.len()
                )])
            }
            5 => {
                if params.price_minor == 0 {
                    return Ok(vec!["step 5: offer is free; no payment recorded".into()]);
                }
                let offer = the_offer(node)?;
                let receipt = node.record_payment(
                    &demo_key("pat"),
                    &offer.offer_id,
                    params.price_minor,
                    "USD",
                )?;
                Ok(vec![format!(
                    "step 5: payment recorded: {} amount {}",
                    receipt.receipt_id, receipt.amount_minor
                )])
            }
            6 => {
                let offer = the_offer(node)?;
                let payment_ref = if params.price_minor == 0 {
                    None
                } else {
                    let receipts = node.payments_for_offer(&offer.offer_id)?;
                    Some(
                        receipts
                            .first()
                            .ok_or_else(|| anyhow!("no payment recorded"))?
                            .receipt_id
                            .clone(),
                    )
                };
                let grant = node.request_license(&demo_key("pat"), &offer.offer_id, payment_ref)?;
                Ok(vec![format!("step 6: license granted: {}", grant.grant_id)])
            }
            7 => {
                let grant = node
                    .coop()
                    .licenses()
                    .grants()
                    .next()
                    .cloned()
                    .ok_or_else(|| anyhow!("no grant issued"))?;
                let status = node.verify_license(&grant.grant_id, None);
                if status != LicenseStatus::Active {
                    bail!("grant {} is {:?}, expected Active", grant.grant_id, status);
                }
                Ok(vec![format!("step 7: license verified Active: {}", grant.grant_id)])
            }
            8 => {
                if params.price_minor == 0 {
                    return Ok(vec!["step 8: nothing to disburse on a free offer".into()]);
                }
                let offer = the_offer(node)?;
                let receipt = node
                    .payments_for_offer(&offer.offer_id)?
                    .into_iter()
                    .find(|r| r.consumed_by.is_some())
                    .ok_or_else(|| anyhow!("no consumed receipt"))?;
                let d = node.disburse(&demo_key("ada"), &receipt.receipt_id, None)?;
                let mut lines = vec![format!("step 8: splits disbursed: {}", d.disbursement_id)];
                for p in &d.payouts {
                    lines.push(format!("step 8: payout {} -> {}", p.holder, p.amount_minor));
                }
                Ok(lines)
            }
            9 => {
                let mut lines = Vec::new();
                let mut disbursed_total = 0u64;
                for label in holder_labels(params) {
                    let id = member_id_for(node, label)?;
                    let (entries, total) = node.holder_statement(&id);
                    disbursed_total += total;
                    lines.push(format!(
                        "step 9: statement {label}: {} payout(s), total {total}",
                        entries.len()
                    ));
                }
                let paid: u64 = if params.price_minor == 0 {
                    0
                } else {
                    let offer = the_offer(node)?;
                    node.payments_for_offer(&offer.offer_id)?
                        .iter()
                        .filter(|r| r.consumed_by.is_some())
                        .map(|r| r.amount_minor)
                        .sum()
                };
                if disbursed_total != paid {
                    bail!("conservation breach: disbursed {disbursed_total} != paid {paid}");
                }
                lines.push(format!("conservation: disbursed == paid ({disbursed_total} == {paid})"));
                if !node.coop().ledger().open_txs().is_empty() {
                    let block = node.seal()?;
                    lines.push(format!("step 9: chain sealed: {}", block.block_hash));
                }
                Ok(lines)
            }
            other => bail!("no such demo step {other}"),
        }
    };
    run().with_context(|| format!("demo aborted at step {step}"))
}

/// Full scripted run on a fresh node.
pub fn run_demo(node: &mut Node, params: &DemoParams) -> Result<Vec<String>> {
    let mut transcript = Vec::new();
    for step in 1..=DEMO_STEPS {
        transcript.extend(run_demo_step(node, step, params)?);
    }
    transcript.push(format!("head: {}", node.coop().ledger().head_hash()));
    Ok(transcript)
}
