//! The request/response service.
//!
//! Reads are open; writes demand a signed envelope (the transaction itself,
//! or one of the small signed request bodies for engine operations) and are
//! rejected with the same error taxonomy as a local append. Requests are
//! handled one at a time on the service thread, which is the node's single
//! writer path.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use anyhow::{Context, Result};
use coopledger_core::opal::{AttrValue, AuditFilter};
use coopledger_core::{canonical, ChainCheck, CoopError, Digest32, SignedTransaction};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tiny_http::{Header, Method, Request, Response, Server};

use crate::node::{Node, NodeError};

/// Signed engine-ingest request: the owner signs the canonical body.
#[derive(Debug, Serialize, Deserialize)]
pub struct IngestRequest {
    pub owner: String,
    pub schema_id: String,
    pub attributes: BTreeMap<String, AttrValue>,
    pub signature: coopledger_core::SignatureBytes,
}

/// Signed query request: the requester signs the canonical body.
#[derive(Debug, Serialize, Deserialize)]
pub struct QueryRequest {
    pub alg_id: String,
    pub requester: String,
    pub signature: coopledger_core::SignatureBytes,
}

/// Signed audit-read request: the caller signs the canonical body.
#[derive(Debug, Serialize, Deserialize)]
pub struct AuditRequest {
    pub caller: String,
    #[serde(default)]
    pub filter: AuditFilter,
    pub signature: coopledger_core::SignatureBytes,
}

fn status_for(err: &CoopError) -> u16 {
    match err {
        CoopError::NotFound(_)
        | CoopError::UnknownOffer
        | CoopError::UnknownReceipt
        | CoopError::UnknownAlgorithm
        | CoopError::Dangling(_) => 404,
        CoopError::PermissionDenied(_) => 403,
        CoopError::BadSignature | CoopError::TxIdMismatch => 401,
        CoopError::DuplicateTransaction
        | CoopError::DuplicateKey
        | CoopError::DuplicateWorkId
        | CoopError::AlreadyDeparted
        | CoopError::AlreadyDisbursed
        | CoopError::PaymentAlreadyConsumed
        | CoopError::OfferClosed => 409,
        _ => 422,
    }
}

fn json_response(status: u16, body: &impl Serialize) -> Response<std::io::Cursor<Vec<u8>>> {
    let text = canonical::to_canonical_string(body).unwrap_or_else(|_| "{}".to_string());
    Response::from_string(text)
        .with_status_code(status)
        .with_header(Header::from_bytes("Content-Type", "application/json").expect("static header"))
}

fn error_response(err: &CoopError) -> Response<std::io::Cursor<Vec<u8>>> {
    json_response(status_for(err), &json!({"error": err.name(), "detail": err.to_string()}))
}

fn node_error_response(err: &NodeError) -> Response<std::io::Cursor<Vec<u8>>> {
    match err {
        NodeError::Domain(e) => error_response(e),
        NodeError::Store(e) => {
            json_response(500, &json!({"error": "Store", "detail": e.to_string()}))
        }
    }
}

/// A running service; dropping the handle leaves the thread running, call
/// [`ServiceHandle::stop`] to shut it down.
pub struct ServiceHandle {
    stop: Arc<AtomicBool>,
    thread: Option<JoinHandle<()>>,
    pub addr: SocketAddr,
}

impl ServiceHandle {
    pub fn stop(mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Binds and serves on a background thread. `endpoint` may use port 0.
pub fn start(node: Node, endpoint: &str) -> Result<ServiceHandle> {
    let server = Server::http(endpoint)
        .map_err(|e| anyhow::anyhow!("endpoint unavailable: {e}"))
        .with_context(|| format!("binding {endpoint}"))?;
    let addr = match server.server_addr() {
        tiny_http::ListenAddr::IP(a) => a,
        other => anyhow::bail!("unsupported listen address {other:?}"),
    };
    let stop = Arc::new(AtomicBool::new(false));
    let stop_flag = stop.clone();
    let thread = std::thread::spawn(move || {
        let mut node = node;
        while !stop_flag.load(Ordering::SeqCst) {
            match server.recv_timeout(Duration::from_millis(50)) {
                Ok(Some(request)) => handle(&mut node, request),
                Ok(None) => {}
                Err(_) => break,
            }
        }
    });
    Ok(ServiceHandle { stop, thread: Some(thread), addr })
}

/// Serves forever on the calling thread.
pub fn serve_forever(node: Node, endpoint: &str) -> Result<()> {
    let handle = start(node, endpoint)?;
    eprintln!("serving on http://{}", handle.addr);
    loop {
        std::thread::sleep(Duration::from_secs(3600));
    }
}

fn read_body(request: &mut Request) -> Result<String, ()> {
    let mut body = String::new();
    use std::io::Read;
    request.as_reader().read_to_string(&mut body).map_err(|_| ())?;
    Ok(body)
}

fn query_param(url: &str, key: &str) -> Option<String> {
    let (_, qs) = url.split_once('?')?;
    qs.split('&').find_map(|pair| {
        let (k, v) = pair.split_once('=')?;
        (k == key).then(|| v.to_string())
    })
}

fn handle(node: &mut Node, mut request: Request) {
    let method = request.method().clone();
    let url = request.url().to_string();
    let path = url.split('?').next().unwrap_or("").to_string();
    let segments: Vec<&str> = path.trim_matches('/').split('/').collect();

    let response = match (&method, segments.as_slice()) {
        (Method::Get, ["health"]) => {
            let ledger = node.coop().ledger();
            json_response(
                200,
                &json!({
                    "chain_id": ledger.chain_id(),
                    "tx_count": ledger.tx_count(),
                    "blocks": ledger.blocks().len(),
                    "open_txs": ledger.open_txs().len(),
                    "head_hash": ledger.head_hash(),
                }),
            )
        }
        (Method::Post, ["tx"]) => match read_body(&mut request) {
            Ok(body) => match serde_json::from_str::<SignedTransaction>(&body) {
                Ok(tx) => match node.submit_envelope(tx) {
                    Ok(receipt) => json_response(200, &receipt),
                    Err(e) => node_error_response(&e),
                },
                Err(e) => json_response(400, &json!({"error": "Malformed", "detail": e.to_string()})),
            },
            Err(()) => json_response(400, &json!({"error": "Malformed", "detail": "unreadable body"})),
        },
        (Method::Post, ["seal"]) => match node.seal() {
            Ok(block) => json_response(200, &block.header()),
            Err(e) => node_error_response(&e),
        },
        (Method::Get, ["chain", "verify"]) => match node.verify_chain() {
            ChainCheck::Ok => json_response(200, &json!({"ok": true})),
            ChainCheck::Corruption { first_bad_seq } => {
                json_response(200, &json!({"ok": false, "first_bad_seq": first_bad_seq}))
            }
        },
        (Method::Get, ["chain", "export"]) => {
            Response::from_string(node.export_chain().join("\n") + "\n")
                .with_status_code(200)
                .with_header(
                    Header::from_bytes("Content-Type", "text/plain").expect("static header"),
                )
        }
        (Method::Get, ["tx", hex]) => match Digest32::from_hex(hex) {
            Some(id) => match node.read_entry(&id) {
                Ok((tx, receipt)) => json_response(200, &json!({"tx": tx, "receipt": receipt})),
                Err(e) => error_response(&e),
            },
            None => json_response(400, &json!({"error": "Malformed", "detail": "bad tx id"})),
        },
        (Method::Get, ["member", id]) => match node.coop().members().get(id) {
            Some(m) => json_response(200, m),
            None => error_response(&CoopError::NotFound(format!("member {id}"))),
        },
        (Method::Get, ["members"]) => json_response(200, &node.coop().members().records()),
        (Method::Get, ["work", work_id]) => match node.resolve_work(work_id) {
            Ok(resolved) => json_response(200, &resolved),
            Err(e) => error_response(&e),
        },
        (Method::Get, ["asset", hex]) => match Digest32::from_hex(hex) {
            Some(d) => match node.fetch_asset(&d) {
                Ok(bytes) => Response::from_data(bytes).with_status_code(200),
                Err(e) => error_response(&e),
            },
            None => json_response(400, &json!({"error": "Malformed", "detail": "bad digest"})),
        },
        (Method::Post, ["asset"]) => {
            let owner = query_param(&url, "owner");
            let signature = request
                .headers()
                .iter()
                .find(|h| h.field.as_str().as_str().eq_ignore_ascii_case("x-signature"))
                .and_then(|h| coopledger_core::SignatureBytes::from_hex(h.value.as_str()));
            let mut bytes = Vec::new();
            use std::io::Read;
            let _ = request.as_reader().read_to_end(&mut bytes);
            match (owner, signature) {
                (Some(owner), Some(sig)) => {
                    let digest = Digest32::of_bytes(&bytes);
                    let key = node.coop().members().active(&owner).map(|m| m.public_key);
                    match key {
                        Some(k) if k.verify(&digest.0, &sig) => {
                            match node.store_asset(&owner, bytes) {
                                Ok(d) => json_response(200, &json!({"content_digest": d})),
                                Err(e) => node_error_response(&e),
                            }
                        }
                        Some(_) => error_response(&CoopError::BadSignature),
                        None => error_response(&CoopError::PermissionDenied(owner)),
                    }
                }
                _ => json_response(
                    400,
                    &json!({"error": "Malformed", "detail": "owner query param and x-signature header required"}),
                ),
            }
        }
        (Method::Get, ["offer", id]) => match node.coop().licenses().offer(id) {
            Some(o) => json_response(200, o),
            None => error_response(&CoopError::NotFound(format!("offer {id}"))),
        },
        (Method::Get, ["grant", id]) => {
            let at = query_param(&url, "at").and_then(|v| v.parse().ok());
            match node.coop().licenses().grant(id) {
                Some(g) => json_response(
                    200,
                    &json!({"grant": g, "status": node.verify_license(id, at)}),
                ),
                None => json_response(200, &json!({"grant": null, "status": "Unknown"})),
            }
        }
        (Method::Get, ["license", "sweep"]) => {
            let now = query_param(&url, "now").and_then(|v| v.parse().ok());
            json_response(200, &node.sweep_expirations(now))
        }
        (Method::Get, ["payments"]) => match query_param(&url, "offer") {
            Some(offer_id) => match node.payments_for_offer(&offer_id) {
                Ok(receipts) => json_response(200, &receipts),
                Err(e) => error_response(&e),
            },
            None => json_response(400, &json!({"error": "Malformed", "detail": "offer param required"})),
        },
        (Method::Get, ["statement", member]) => {
            let (entries, total) = node.holder_statement(member);
            let lines: Vec<_> = entries
                .iter()
                .map(|(d, amount)| json!({"disbursement_id": d, "amount_minor": amount}))
                .collect();
            json_response(200, &json!({"payouts": lines, "total": total}))
        }
        (Method::Get, ["alg", id]) => match node.coop().opal().manifest(id) {
            Some(m) => json_response(200, m),
            None => error_response(&CoopError::NotFound(format!("algorithm {id}"))),
        },
        (Method::Post, ["opal", "ingest"]) => match read_body(&mut request) {
            Ok(body) => match serde_json::from_str::<IngestRequest>(&body) {
                Ok(req) => {
                    let signed = json!({
                        "attributes": req.attributes,
                        "owner": req.owner,
                        "schema_id": req.schema_id,
                    });
                    match verify_member_sig(node, &req.owner, &signed, &req.signature) {
                        Err(e) => error_response(&e),
                        Ok(()) => match node.ingest_record(&req.owner, &req.schema_id, req.attributes) {
                            Ok(id) => json_response(200, &json!({"record": id.0})),
                            Err(e) => node_error_response(&e),
                        },
                    }
                }
                Err(e) => json_response(400, &json!({"error": "Malformed", "detail": e.to_string()})),
            },
            Err(()) => json_response(400, &json!({"error": "Malformed", "detail": "unreadable body"})),
        },
        (Method::Post, ["opal", "query"]) => match read_body(&mut request) {
            Ok(body) => match serde_json::from_str::<QueryRequest>(&body) {
                Ok(req) => {
                    let signed = json!({"alg_id": req.alg_id, "requester": req.requester});
                    match verify_member_sig(node, &req.requester, &signed, &req.signature) {
                        Err(e) => error_response(&e),
                        Ok(()) => match node.execute_query(&req.alg_id, &req.requester) {
                            Ok(result) => json_response(200, &result),
                            Err(e) => node_error_response(&e),
                        },
                    }
                }
                Err(e) => json_response(400, &json!({"error": "Malformed", "detail": e.to_string()})),
            },
            Err(()) => json_response(400, &json!({"error": "Malformed", "detail": "unreadable body"})),
        },
        (Method::Post, ["opal", "audit"]) => match read_body(&mut request) {
            Ok(body) => match serde_json::from_str::<AuditRequest>(&body) {
                Ok(req) => {
                    let signed = json!({"caller": req.caller, "filter": req.filter});
                    match verify_member_sig(node, &req.caller, &signed, &req.signature) {
                        Err(e) => error_response(&e),
                        Ok(()) => match node.read_audit_log(&req.caller, &req.filter) {
                            Ok(entries) => json_response(200, &entries),
                            Err(e) => error_response(&e),
                        },
                    }
                }
                Err(e) => json_response(400, &json!({"error": "Malformed", "detail": e.to_string()})),
            },
            Err(()) => json_response(400, &json!({"error": "Malformed", "detail": "unreadable body"})),
        },
        _ => json_response(404, &json!({"error": "NotFound", "detail": format!("no route {path}")})),
    };
    let _ = request.respond(response);
}

/// Verifies a signed engine request against the member's registered key.
fn verify_member_sig(
    node: &Node,
    member_id: &str,
    signed_body: &serde_json::Value,
    signature: &coopledger_core::SignatureBytes,
) -> Result<(), CoopError> {
    let member = node
        .coop()
        .members()
        .get(member_id)
        .ok_or_else(|| CoopError::PermissionDenied(format!("unknown member {member_id}")))?;
    let bytes = canonical::to_canonical_bytes(signed_body)
        .map_err(|_| CoopError::BadSignature)?;
    if member.public_key.verify(&bytes, signature) {
        Ok(())
    } else {
        Err(CoopError::BadSignature)
    }
}
