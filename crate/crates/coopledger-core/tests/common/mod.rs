//! Shared fixture: a bootstrapped cooperative with an operator, a committee
//! member, and a handful of supply-chain members.

use std::collections::BTreeMap;

use coopledger_core::identity::Role;
use coopledger_core::{Coop, CoopConfig, Keypair};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub struct Fixture {
    pub coop: Coop,
    pub keys: BTreeMap<&'static str, Keypair>,
    pub ids: BTreeMap<&'static str, String>,
    pub rng: ChaCha8Rng,
}

impl Fixture {
    pub fn key(&self, who: &str) -> &Keypair {
        &self.keys[who]
    }

    pub fn id(&self, who: &str) -> &str {
        &self.ids[who]
    }

    pub fn new_work_doc(&mut self, title: &str, creator_labels: &[&str]) -> Value {
        let work_id = coopledger_core::ids::new_work_id(&mut self.rng);
        let creators: Vec<Value> = creator_labels
            .iter()
            .map(|l| json!({"member_id": self.ids[l], "role": "Composer"}))
            .collect();
        json!({
            "work_id": work_id,
            "title": title,
            "creators": creators,
            "version_label": "v1",
            "created_note": "fixture"
        })
    }
}

/// Operator bootstraps the committee member, who admits the rest.
pub fn bootstrap() -> Fixture {
    let mut keys = BTreeMap::new();
    for label in ["operator", "carol", "ada", "bob", "cid", "pat", "dex"] {
        keys.insert(label, Keypair::from_label(label));
    }
    let config = CoopConfig::new("test-chain", keys["operator"].public());
    let mut coop = Coop::new(config);

    let carol = coop
        .register_member(&keys["operator"], "Carol", &[Role::GovernanceCommittee], keys["carol"].public())
        .expect("bootstrap committee");
    let mut ids = BTreeMap::new();
    ids.insert("carol", carol.member_id.clone());
    for (label, name, roles) in [
        ("ada", "Ada", vec![Role::Composer]),
        ("bob", "Bob", vec![Role::Composer]),
        ("cid", "Cid", vec![Role::Composer]),
        ("pat", "Pat", vec![Role::Publisher]),
        ("dex", "Dex", vec![Role::Dsp]),
    ] {
        let m = coop
            .register_member(&keys["carol"], name, &roles, keys[label].public())
            .expect("admit member");
        ids.insert(label, m.member_id);
    }
    Fixture { coop, keys, ids, rng: ChaCha8Rng::seed_from_u64(0xC00B) }
}
