//! Governance, consent, query, and audit flows through the engine.

mod common;

use std::collections::BTreeMap;

use coopledger_core::approve_manifest;
use coopledger_core::identity::Role;
use coopledger_core::opal::{
    AlgorithmKind, AttrValue, AuditFilter, Contributors, GroupValue, ManifestParams,
};
use coopledger_core::{CoopError, Keypair};

use common::{bootstrap, Fixture};

fn mean_income_manifest() -> ManifestParams {
    ManifestParams {
        algorithm: AlgorithmKind::Mean,
        schema_id: "income.v1".into(),
        target_field: Some("income".into()),
        group_by: Some("region".into()),
        description: "mean income by region".into(),
    }
}

fn ingest_income(fx: &mut Fixture, label: &str, region: &str, income: f64) {
    let id = fx.ids[label].clone();
    let mut attrs = BTreeMap::new();
    attrs.insert("region".to_string(), AttrValue::Category(region.into()));
    attrs.insert("income".to_string(), AttrValue::Number(income));
    fx.coop.ingest_record(&id, "income.v1", attrs).unwrap();
}

#[test]
fn committee_quorum_gates_registration() {
    let mut fx = bootstrap();
    let manifest = mean_income_manifest();
    let carol_id = fx.ids["carol"].clone();
    let carol = fx.keys["carol"].clone();

    // No signatures at all.
    let err = fx.coop.register_algorithm(&carol, manifest.clone(), vec![]).unwrap_err();
    assert_eq!(err, CoopError::InsufficientApprovals);

    // One committee signature meets the default quorum of 1.
    let approvals = approve_manifest(&manifest, &[(&carol_id, &carol)]);
    let m = fx.coop.register_algorithm(&carol, manifest.clone(), approvals).unwrap();
    assert!(m.approved);
    assert!(m.alg_id.starts_with("alg:"));
}

#[test]
fn same_signer_twice_does_not_meet_quorum_two() {
    let mut fx = bootstrap();
    // A second cooperative with quorum 2.
    let operator = Keypair::from_label("operator");
    let mut config =
        coopledger_core::CoopConfig::new("quorum2-chain", operator.public());
    config.quorum = 2;
    let mut coop = coopledger_core::Coop::new(config);
    let carol = fx.keys["carol"].clone();
    let rec = coop
        .register_member(&operator, "Carol", &[Role::GovernanceCommittee], carol.public())
        .unwrap();

    let manifest = mean_income_manifest();
    let digest_signers = [(rec.member_id.as_str(), &carol), (rec.member_id.as_str(), &carol)];
    let approvals = approve_manifest(&manifest, &digest_signers);
    assert_eq!(approvals.len(), 2);
    let err = coop.register_algorithm(&carol, manifest.clone(), approvals).unwrap_err();
    assert_eq!(err, CoopError::InsufficientApprovals);

    // A second distinct committee member closes the gap.
    let dana = Keypair::from_label("dana");
    let dana_rec = coop
        .register_member(&carol, "Dana", &[Role::GovernanceCommittee], dana.public())
        .unwrap();
    let approvals = approve_manifest(
        &manifest,
        &[(rec.member_id.as_str(), &carol), (dana_rec.member_id.as_str(), &dana)],
    );
    coop.register_algorithm(&carol, manifest, approvals).unwrap();
    let _ = &mut fx;
}

#[test]
fn forged_approval_rejected() {
    let mut fx = bootstrap();
    let manifest = mean_income_manifest();
    let carol_id = fx.ids["carol"].clone();
    let forger = Keypair::from_label("forger");
    let approvals = approve_manifest(&manifest, &[(&carol_id, &forger)]);
    let err = fx
        .coop
        .register_algorithm(&fx.keys["carol"].clone(), manifest, approvals)
        .unwrap_err();
    assert_eq!(err, CoopError::BadSignature);
}

#[test]
fn non_committee_approvals_do_not_count() {
    let mut fx = bootstrap();
    let manifest = mean_income_manifest();
    let ada_id = fx.ids["ada"].clone();
    let approvals = approve_manifest(&manifest, &[(&ada_id, &fx.keys["ada"].clone())]);
    let err = fx
        .coop
        .register_algorithm(&fx.keys["carol"].clone(), manifest, approvals)
        .unwrap_err();
    assert_eq!(err, CoopError::InsufficientApprovals);
}

#[test]
fn manifest_shape_is_checked() {
    let mut fx = bootstrap();
    let carol_id = fx.ids["carol"].clone();
    let carol = fx.keys["carol"].clone();
    let bad = ManifestParams {
        algorithm: AlgorithmKind::Count,
        schema_id: "income.v1".into(),
        target_field: Some("income".into()),
        group_by: None,
        description: "count with a target".into(),
    };
    let approvals = approve_manifest(&bad, &[(&carol_id, &carol)]);
    let err = fx.coop.register_algorithm(&carol, bad, approvals).unwrap_err();
    assert!(matches!(err, CoopError::InvalidManifest(_)));
}

#[test]
fn consent_gates_cohort_membership() {
    let mut fx = bootstrap();
    // Ten members, seven consent: cohort size 7.
    let carol = fx.keys["carol"].clone();
    let carol_id = fx.ids["carol"].clone();
    let manifest = ManifestParams {
        algorithm: AlgorithmKind::Count,
        schema_id: "income.v1".into(),
        target_field: None,
        group_by: None,
        description: "cohort count".into(),
    };
    let approvals = approve_manifest(&manifest, &[(&carol_id, &carol)]);
    let alg = fx.coop.register_algorithm(&carol, manifest, approvals).unwrap();

    let mut keys = Vec::new();
    for i in 0..10 {
        let key = Keypair::from_label(&format!("m{i}"));
        let rec = fx
            .coop
            .register_member(&carol, &format!("M{i}"), &[Role::Composer], key.public())
            .unwrap();
        let mut attrs = BTreeMap::new();
        attrs.insert("income".into(), AttrValue::Number(10.0 * i as f64));
        fx.coop.ingest_record(&rec.member_id, "income.v1", attrs).unwrap();
        keys.push((rec.member_id, key));
    }
    for (_, key) in keys.iter().take(7) {
        fx.coop.set_consent(key, &alg.alg_id, true).unwrap();
    }
    let requester = keys[0].0.clone();
    let result = fx.coop.execute_query(&alg.alg_id, &requester).unwrap();
    assert_eq!(result.groups.len(), 1);
    assert_eq!(result.groups[0].contributors, Contributors::Exact(7));
    assert_eq!(result.groups[0].value, GroupValue::Count(7));

    // Grant-then-revoke excludes the member from later cohorts.
    fx.coop.set_consent(&keys[0].1, &alg.alg_id, false).unwrap();
    let result = fx.coop.execute_query(&alg.alg_id, &requester).unwrap();
    assert_eq!(result.groups[0].value, GroupValue::Count(6));
}

#[test]
fn consent_to_unknown_algorithm_rejected() {
    let mut fx = bootstrap();
    let err = fx
        .coop
        .set_consent(&fx.keys["ada"].clone(), "alg:0000000000000000dead", true)
        .unwrap_err();
    assert_eq!(err, CoopError::UnknownAlgorithm);
}

#[test]
fn departure_empties_cohorts_for_every_algorithm() {
    let mut fx = bootstrap();
    let carol = fx.keys["carol"].clone();
    let carol_id = fx.ids["carol"].clone();
    // One manifest per catalog algorithm over the same schema.
    let mut algs = Vec::new();
    for (kind, target) in [
        (AlgorithmKind::Count, None),
        (AlgorithmKind::Sum, Some("income")),
        (AlgorithmKind::Mean, Some("income")),
        (AlgorithmKind::Histogram, Some("region")),
    ] {
        let manifest = ManifestParams {
            algorithm: kind,
            schema_id: "income.v1".into(),
            target_field: target.map(String::from),
            group_by: None,
            description: format!("{kind:?}"),
        };
        let approvals = approve_manifest(&manifest, &[(&carol_id, &carol)]);
        algs.push(fx.coop.register_algorithm(&carol, manifest, approvals).unwrap());
    }
    ingest_income(&mut fx, "ada", "EU", 42000.0);
    ingest_income(&mut fx, "bob", "EU", 38000.0);
    for label in ["ada", "bob"] {
        for alg in &algs {
            fx.coop.set_consent(&fx.keys[label].clone(), &alg.alg_id, true).unwrap();
        }
    }
    let before: Vec<u64> =
        algs.iter().map(|a| fx.coop.opal().cohort_size(a)).collect();
    assert_eq!(before, vec![2, 2, 2, 2]);

    let ada_id = fx.ids["ada"].clone();
    fx.coop.depart_member(&fx.keys["ada"].clone(), &ada_id).unwrap();
    let after: Vec<u64> = algs.iter().map(|a| fx.coop.opal().cohort_size(a)).collect();
    assert_eq!(after, vec![1, 1, 1, 1]);

    // Departed members cannot ingest.
    let mut attrs = BTreeMap::new();
    attrs.insert("income".into(), AttrValue::Number(1.0));
    let err = fx.coop.ingest_record(&ada_id, "income.v1", attrs).unwrap_err();
    assert!(matches!(err, CoopError::PermissionDenied(_)));
}

#[test]
fn every_query_attempt_is_audited_and_chain_verifies() {
    let mut fx = bootstrap();
    let carol = fx.keys["carol"].clone();
    let carol_id = fx.ids["carol"].clone();
    let manifest = mean_income_manifest();
    let approvals = approve_manifest(&manifest, &[(&carol_id, &carol)]);
    let alg = fx.coop.register_algorithm(&carol, manifest, approvals).unwrap();

    let ada_id = fx.ids["ada"].clone();
    fx.coop.execute_query(&alg.alg_id, &ada_id).unwrap();
    fx.coop.execute_query(&alg.alg_id, &ada_id).unwrap();
    // Refusal: unapproved algorithm. Still audited.
    assert_eq!(
        fx.coop.execute_query("alg:ffffffffffffffffffff", &ada_id),
        Err(CoopError::AlgorithmNotApproved)
    );
    assert_eq!(fx.coop.opal().audit.len(), 3);
    assert_eq!(fx.coop.opal().audit.verify(), Ok(()));

    // Committee reads everything; a member reads only their own entries.
    let all = fx.coop.read_audit_log(&carol_id, &AuditFilter::default()).unwrap();
    assert_eq!(all.len(), 3);
    let own = fx.coop.read_audit_log(&ada_id, &AuditFilter::default()).unwrap();
    assert_eq!(own.len(), 3); // all three were Ada's
    let err = fx
        .coop
        .read_audit_log(
            &ada_id,
            &AuditFilter { requester: Some(carol_id.clone()), ..Default::default() },
        )
        .unwrap_err();
    assert!(matches!(err, CoopError::PermissionDenied(_)));
    let err = fx
        .coop
        .read_audit_log("mem:0000000000000000dead", &AuditFilter::default())
        .unwrap_err();
    assert!(matches!(err, CoopError::PermissionDenied(_)));

    let filtered = fx
        .coop
        .read_audit_log(
            &carol_id,
            &AuditFilter { alg_id: Some(alg.alg_id.clone()), ..Default::default() },
        )
        .unwrap();
    assert_eq!(filtered.len(), 2);
}

#[test]
fn no_raw_attribute_escapes_query_output() {
    let mut fx = bootstrap();
    let carol = fx.keys["carol"].clone();
    let carol_id = fx.ids["carol"].clone();
    let manifest = mean_income_manifest();
    let approvals = approve_manifest(&manifest, &[(&carol_id, &carol)]);
    let alg = fx.coop.register_algorithm(&carol, manifest, approvals).unwrap();

    // Distinctive values that must never appear verbatim in output (and
    // whose mean differs from each of them).
    let sentinel_incomes = [918273.0, 817263.0, 712459.0, 609241.0, 514233.0, 413223.0];
    for (i, label) in ["ada", "bob", "cid", "pat", "dex", "carol"].iter().enumerate() {
        let id = fx.ids[label].clone();
        let mut attrs = BTreeMap::new();
        attrs.insert("region".into(), AttrValue::Category("EU".into()));
        attrs.insert("income".into(), AttrValue::Number(sentinel_incomes[i]));
        fx.coop.ingest_record(&id, "income.v1", attrs).unwrap();
    }
    // Only five consent (below nothing: k = 5 exactly met).
    for label in ["ada", "bob", "cid", "pat", "dex"] {
        fx.coop.set_consent(&fx.keys[label].clone(), &alg.alg_id, true).unwrap();
    }
    let ada_id = fx.ids["ada"].clone();
    let result = fx.coop.execute_query(&alg.alg_id, &ada_id).unwrap();
    let rendered = coopledger_core::canonical::to_canonical_string(&result).unwrap();
    for income in sentinel_incomes {
        assert!(
            !rendered.contains(&format!("{income}")),
            "raw income leaked: {rendered}"
        );
    }
    assert_eq!(result.groups[0].contributors, Contributors::Exact(5));
}
