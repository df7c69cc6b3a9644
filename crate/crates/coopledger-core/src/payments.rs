//! The internal payment ledger: receipts as evidence, splits tables as
//! exact rationals, and largest-remainder disbursement.
//!
//! Money is integer minor units; shares are exact fractions. Nothing here
//! touches floating point, so a disbursement is a pure function of
//! (amount, splits) and conserves the amount to the last minor unit.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::CoopError;

/// One rights holder's exact share.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitEntry {
    pub holder: String,
    pub num: u64,
    pub den: u64,
}

/// Exact division of a payment among rights holders. Shares must be
/// positive and sum to exactly 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitsTable {
    pub entries: Vec<SplitEntry>,
}

impl SplitsTable {
    pub fn new(entries: Vec<SplitEntry>) -> Self {
        SplitsTable { entries }
    }

    /// Equal split among the given holders (1/n each).
    pub fn equal(holders: &[&str]) -> Self {
        let n = holders.len() as u64;
        SplitsTable {
            entries: holders
                .iter()
                .map(|h| SplitEntry { holder: String::from(*h), num: 1, den: n })
                .collect(),
        }
    }

    /// Checks nonemptiness, positivity, holder distinctness, and the exact
    /// rational sum: sum(p_i / q_i) == 1, computed over a common denominator
    /// in big integers so no legal table overflows.
    pub fn validate(&self) -> Result<(), CoopError> {
        if self.entries.is_empty() {
            return Err(CoopError::InvalidSplits(String::from("no entries")));
        }
        let mut seen = alloc::collections::BTreeSet::new();
        for e in &self.entries {
            if e.num == 0 || e.den == 0 {
                return Err(CoopError::InvalidSplits(alloc::format!(
                    "share {}/{} for {} is not a positive rational",
                    e.num, e.den, e.holder
                )));
            }
            if !seen.insert(e.holder.as_str()) {
                return Err(CoopError::InvalidSplits(alloc::format!(
                    "duplicate holder {}",
                    e.holder
                )));
            }
        }
        let common: BigUint =
            self.entries.iter().fold(BigUint::one(), |acc, e| acc * BigUint::from(e.den));
        let total: BigUint = self
            .entries
            .iter()
            .map(|e| BigUint::from(e.num) * &common / BigUint::from(e.den))
            .sum();
        if total != common {
            return Err(CoopError::InvalidSplits(String::from("shares do not sum to 1")));
        }
        Ok(())
    }

    /// Literal table equality modulo listing order.
    pub fn same_table(&self, other: &SplitsTable) -> bool {
        let norm = |t: &SplitsTable| {
            let mut v: Vec<(String, u64, u64)> =
                t.entries.iter().map(|e| (e.holder.clone(), e.num, e.den)).collect();
            v.sort();
            v
        };
        norm(self) == norm(other)
    }
}

/// Largest-remainder allocation of `amount` by a validated splits table.
///
/// base_i = floor(amount * p_i / q_i); the leftover units (fewer than the
/// number of holders, by exactness of the sum) go one each to the largest
/// fractional remainders, ties broken by ascending holder id. The result is
/// sorted by holder id, so it is independent of the table's listing order.
pub fn largest_remainder(amount: u64, splits: &SplitsTable) -> Vec<(String, u64)> {
    let amount_big = BigUint::from(amount);
    // (holder, base, remainder_num, den)
    let mut rows: Vec<(String, u64, BigUint, BigUint)> = splits
        .entries
        .iter()
        .map(|e| {
            let scaled = &amount_big * BigUint::from(e.num);
            let den = BigUint::from(e.den);
            let base = &scaled / &den;
            let rem = scaled % &den;
            let base_u64 = u64::try_from(base).expect("floor(amount * share) fits in u64");
            (e.holder.clone(), base_u64, rem, den)
        })
        .collect();
    rows.sort_by(|a, b| a.0.cmp(&b.0));

    let allocated: u64 = rows.iter().map(|r| r.1).sum();
    let mut leftover = amount - allocated;

    // Descending fractional remainder (rem_a/den_a vs rem_b/den_b via
    // cross-multiplication), ascending holder on ties.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let left = &rows[a].2 * &rows[b].3;
        let right = &rows[b].2 * &rows[a].3;
        right.cmp(&left).then_with(|| rows[a].0.cmp(&rows[b].0))
    });
    for idx in order {
        if leftover == 0 {
            break;
        }
        rows[idx].1 += 1;
        leftover -= 1;
    }
    rows.into_iter().map(|(holder, v, _, _)| (holder, v)).collect()
}

/// Evidence that a payer moved money against an offer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaymentReceipt {
    pub receipt_id: String,
    pub payer: String,
    pub amount_minor: u64,
    pub currency: String,
    pub reference: String,
    pub recorded_at: u64,
    pub consumed_by: Option<String>,
}

/// One payout row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Payout {
    pub holder: String,
    pub amount_minor: u64,
}

/// Exact division of one receipt among the offer's rights holders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disbursement {
    pub disbursement_id: String,
    pub receipt_id: String,
    pub payouts: Vec<Payout>,
    pub executed_at: u64,
}

/// Receipts and disbursements, in ledger order.
#[derive(Debug, Clone, Default)]
pub struct PaymentsBook {
    receipts: BTreeMap<String, PaymentReceipt>,
    receipt_order: Vec<String>,
    disbursements: BTreeMap<String, Disbursement>,
    disbursement_order: Vec<String>,
    by_receipt: BTreeMap<String, String>,
}

impl PaymentsBook {
    pub fn receipt(&self, receipt_id: &str) -> Option<&PaymentReceipt> {
        self.receipts.get(receipt_id)
    }

    pub fn insert_receipt(&mut self, receipt: PaymentReceipt) {
        self.receipt_order.push(receipt.receipt_id.clone());
        self.receipts.insert(receipt.receipt_id.clone(), receipt);
    }

    pub fn mark_consumed(&mut self, receipt_id: &str, grant_id: &str) {
        if let Some(r) = self.receipts.get_mut(receipt_id) {
            r.consumed_by = Some(String::from(grant_id));
        }
    }

    /// Receipts referencing an offer, in recording order.
    pub fn receipts_for_offer(&self, offer_id: &str) -> Vec<&PaymentReceipt> {
        self.receipt_order
            .iter()
            .filter_map(|id| self.receipts.get(id))
            .filter(|r| r.reference == offer_id)
            .collect()
    }

    pub fn disbursement_for_receipt(&self, receipt_id: &str) -> Option<&Disbursement> {
        self.by_receipt.get(receipt_id).and_then(|id| self.disbursements.get(id))
    }

    pub fn insert_disbursement(&mut self, d: Disbursement) {
        self.by_receipt.insert(d.receipt_id.clone(), d.disbursement_id.clone());
        self.disbursement_order.push(d.disbursement_id.clone());
        self.disbursements.insert(d.disbursement_id.clone(), d);
    }

    /// Every payout ever made to the member, in ledger order.
    pub fn holder_statement(&self, member_id: &str) -> (Vec<(String, u64)>, u64) {
        let mut lines = Vec::new();
        let mut total: u64 = 0;
        for id in &self.disbursement_order {
            let d = &self.disbursements[id];
            for p in &d.payouts {
                if p.holder == member_id {
                    lines.push((d.disbursement_id.clone(), p.amount_minor));
                    total += p.amount_minor;
                }
            }
        }
        (lines, total)
    }

    pub fn disbursements(&self) -> impl Iterator<Item = &Disbursement> {
        self.disbursement_order.iter().map(|id| &self.disbursements[id])
    }
}
