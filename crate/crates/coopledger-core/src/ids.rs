//! Identifier formats.
//!
//! Entity ids other than work ids are derived from the transaction that
//! created the entity, so they are unique (tx ids are unique per chain) and
//! reproducible by replay. Work ids are minted from random bytes by the
//! registrant before registration.

use alloc::string::String;

use rand_core::RngCore;

use crate::crypto::Digest32;

pub const OPERATOR_ID: &str = "coop:operator";

const BASE32_ALPHABET: &[u8; 32] = b"abcdefghijklmnopqrstuvwxyz234567";
const WORK_ID_PREFIX: &str = "wrk:";
const WORK_ID_BODY_LEN: usize = 26;

/// `prefix` + first 10 bytes of `tx_id` as hex.
fn derive(prefix: &str, tx_id: &Digest32) -> String {
    let mut s = String::from(prefix);
    s.push_str(&hex::encode(&tx_id.0[..10]));
    s
}

pub fn member_id(tx_id: &Digest32) -> String {
    derive("mem:", tx_id)
}

pub fn offer_id(tx_id: &Digest32) -> String {
    derive("off:", tx_id)
}

pub fn grant_id(tx_id: &Digest32) -> String {
    derive("grt:", tx_id)
}

pub fn receipt_id(tx_id: &Digest32) -> String {
    derive("rcpt:", tx_id)
}

pub fn disbursement_id(tx_id: &Digest32) -> String {
    derive("dsb:", tx_id)
}

/// Algorithm ids are content-addressed from the manifest digest, so the
/// same manifest always resolves to the same id.
pub fn algorithm_id(manifest_digest: &Digest32) -> String {
    derive("alg:", manifest_digest)
}

/// Mints a fresh work id: `wrk:` + 26 base32 chars of 16 random bytes.
pub fn new_work_id<R: RngCore>(rng: &mut R) -> String {
    let mut raw = [0u8; 16];
    rng.fill_bytes(&mut raw);
    work_id_from_bytes(raw)
}

/// Encodes 16 given bytes as a work id (callers that need reproducible ids).
pub fn work_id_from_bytes(raw: [u8; 16]) -> String {
    let mut s = String::from(WORK_ID_PREFIX);
    // 16 bytes = 128 bits -> 26 five-bit groups (last group carries 3 bits).
    let mut acc: u32 = 0;
    let mut bits = 0;
    for &b in &raw {
        acc = (acc << 8) | b as u32;
        bits += 8;
        while bits >= 5 {
            bits -= 5;
            s.push(BASE32_ALPHABET[((acc >> bits) & 0x1f) as usize] as char);
        }
    }
    if bits > 0 {
        s.push(BASE32_ALPHABET[((acc << (5 - bits)) & 0x1f) as usize] as char);
    }
    s
}

/// True iff `id` has the `wrk:` + 26-char base32 shape.
pub fn is_valid_work_id(id: &str) -> bool {
    let Some(body) = id.strip_prefix(WORK_ID_PREFIX) else {
        return false;
    };
    body.len() == WORK_ID_BODY_LEN && body.bytes().all(|b| BASE32_ALPHABET.contains(&b))
}
