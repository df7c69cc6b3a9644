//! Node test fixture: an initialized data dir with a seated committee and
//! a few members, mirroring the core fixture but through the durable node.

use std::collections::BTreeMap;
use std::path::Path;

use coopledger_core::identity::Role;
use coopledger_core::Keypair;
use coopledger_node::config::NodeConfig;
use coopledger_node::Node;
use serde_json::{json, Value};

pub struct NodeFixture {
    pub node: Node,
    pub keys: BTreeMap<&'static str, Keypair>,
    pub ids: BTreeMap<&'static str, String>,
}

pub fn init_dir(dir: &Path, chain_id: &str) -> NodeConfig {
    let config = NodeConfig {
        data_dir: dir.to_path_buf(),
        chain_id: chain_id.to_string(),
        operator_key: Keypair::from_label("operator").public(),
        k_threshold: 5,
        quorum: 1,
        block_size: 16,
        listen_endpoint: "127.0.0.1:0".to_string(),
    };
    config.save().expect("config saves");
    config
}

pub fn bootstrap(dir: &Path) -> NodeFixture {
    init_dir(dir, "node-test-chain");
    let mut node = Node::open(dir).expect("fresh node opens");
    let mut keys = BTreeMap::new();
    for label in ["operator", "carol", "ada", "bob", "pat", "dex"] {
        keys.insert(label, Keypair::from_label(label));
    }
    let mut ids = BTreeMap::new();
    let carol = node
        .register_member(&keys["operator"], "Carol", &[Role::GovernanceCommittee], keys["carol"].public())
        .expect("committee seated");
    ids.insert("carol", carol.member_id);
    for (label, roles) in [
        ("ada", vec![Role::Composer]),
        ("bob", vec![Role::Composer]),
        ("pat", vec![Role::Publisher]),
        ("dex", vec![Role::Dsp]),
    ] {
        let m = node
            .register_member(&keys["carol"], label, &roles, keys[label].public())
            .expect("member admitted");
        ids.insert(label, m.member_id);
    }
    NodeFixture { node, keys, ids }
}

pub fn work_doc(work_id: &str, creators: &[&str]) -> Value {
    json!({
        "work_id": work_id,
        "title": "Fixture Song",
        "creators": creators.iter().map(|id| json!({"member_id": id, "role": "Composer"})).collect::<Vec<_>>(),
        "version_label": "v1"
    })
}

pub fn fixed_work_id(tag: &str) -> String {
    let digest = coopledger_core::Digest32::of_bytes(tag.as_bytes());
    let mut raw = [0u8; 16];
    raw.copy_from_slice(&digest.0[..16]);
    coopledger_core::ids::work_id_from_bytes(raw)
}
