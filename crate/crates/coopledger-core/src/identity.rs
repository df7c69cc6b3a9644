//! Member registry: supply-chain roles, key bindings, and the
//! role-permission table that gates every write.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::crypto::PublicKey;

/// Supply-chain and governance roles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Role {
    Composer,
    Publisher,
    RecordLabel,
    #[serde(rename = "DSP")]
    Dsp,
    GovernanceCommittee,
}

impl Role {
    pub fn parse(s: &str) -> Option<Role> {
        match s {
            "Composer" | "composer" => Some(Role::Composer),
            "Publisher" | "publisher" => Some(Role::Publisher),
            "RecordLabel" | "record-label" | "recordlabel" => Some(Role::RecordLabel),
            "DSP" | "dsp" => Some(Role::Dsp),
            "GovernanceCommittee" | "governance" | "committee" => Some(Role::GovernanceCommittee),
            _ => None,
        }
    }
}

/// Actions gated by the role-permission table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    RegisterWork,
    DeployOffer,
    RequestLicense,
    RecordPayment,
    SetConsent,
    ApproveAlgorithm,
}

/// The fixed role-permission table. Supply-chain roles share the base write
/// actions; the governance committee alone approves algorithms. Revocation
/// is not here: only an offer's licensor may revoke its grants, which is
/// checked against the offer itself.
pub fn role_permits(role: Role, action: Action) -> bool {
    match role {
        Role::Composer | Role::Publisher | Role::RecordLabel | Role::Dsp => !matches!(
            action,
            Action::ApproveAlgorithm
        ),
        Role::GovernanceCommittee => matches!(action, Action::ApproveAlgorithm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MemberStatus {
    Active,
    Departed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub member_id: String,
    pub display_name: String,
    pub roles: BTreeSet<Role>,
    pub public_key: PublicKey,
    pub status: MemberStatus,
    pub joined_at: u64,
    pub departed_at: Option<u64>,
}

impl MemberRecord {
    pub fn is_active(&self) -> bool {
        self.status == MemberStatus::Active
    }

    pub fn has_role(&self, role: Role) -> bool {
        self.roles.contains(&role)
    }
}

/// What departure left behind: purged repository objects, retained ledger
/// evidence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepartureReceipt {
    pub member_id: String,
    pub departed_at: u64,
    pub purged_asset_count: u64,
    pub retained_tx_count: u64,
}

/// The member registry. Mutations arrive only through ledger apply order.
#[derive(Debug, Clone, Default)]
pub struct MemberRegistry {
    members: BTreeMap<String, MemberRecord>,
    active_keys: BTreeMap<PublicKey, String>,
}

impl MemberRegistry {
    pub fn get(&self, member_id: &str) -> Option<&MemberRecord> {
        self.members.get(member_id)
    }

    pub fn active(&self, member_id: &str) -> Option<&MemberRecord> {
        self.members.get(member_id).filter(|m| m.is_active())
    }

    /// Resolves an active member by verification key.
    pub fn member_by_key(&self, key: &PublicKey) -> Option<&MemberRecord> {
        self.active_keys.get(key).and_then(|id| self.members.get(id))
    }

    pub fn key_is_bound(&self, key: &PublicKey) -> bool {
        self.active_keys.contains_key(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MemberRecord> {
        self.members.values()
    }

    /// Any active member currently holding the committee role?
    pub fn has_active_committee(&self) -> bool {
        self.members.values().any(|m| m.is_active() && m.has_role(Role::GovernanceCommittee))
    }

    /// True iff the member is active and the table grants the action.
    pub fn authorize(&self, member_id: &str, action: Action) -> bool {
        match self.active(member_id) {
            Some(m) => m.roles.iter().any(|&r| role_permits(r, action)),
            None => false,
        }
    }

    pub fn insert(&mut self, record: MemberRecord) {
        self.active_keys.insert(record.public_key, record.member_id.clone());
        self.members.insert(record.member_id.clone(), record);
    }

    /// Marks the member departed and unbinds their key. Purging of
    /// repository objects and engine records happens in the owning stores.
    pub fn mark_departed(&mut self, member_id: &str, at: u64) {
        if let Some(m) = self.members.get_mut(member_id) {
            m.status = MemberStatus::Departed;
            m.departed_at = Some(at);
            self.active_keys.remove(&m.public_key);
        }
    }

    /// Registry export in canonical order.
    pub fn records(&self) -> Vec<&MemberRecord> {
        self.members.values().collect()
    }
}
