use intersnap::crypto::decrypt_archive_bytes;
use intersnap::ledger::NetworkId;
use intersnap::sim::presets::{fault_demo, two_networks};
use intersnap::sim::scenario::{FaultEvent, FaultKind};
use intersnap::sim::{run_scenario, run_to_dir};
use intersnap::snapshot::{parse_archive, SchedulerConfig};

#[test]
fn empty_workload_produces_nothing() {
    let mut cfg = two_networks(200);
    cfg.workload.clear();
    let a = run_scenario(cfg.clone(), 1).unwrap();
    let b = run_scenario(cfg, 1).unwrap();
    assert!(a.metrics.snapshots.is_empty());
    assert!(a.metrics.disputes.is_empty());
    assert_eq!(a.state_hash(), b.state_hash());
}

#[test]
fn snapshot_count_follows_threshold() {
    let mut cfg = two_networks(1300);
    cfg.kdf_iterations = 64;
    cfg.workload.truncate(2);
    for n in &mut cfg.networks {
        n.scheduler = SchedulerConfig {
            blocks_per_period: 10.0,
            window_periods: 24.0,
            poll_interval: 10,
        };
    }
    let w = run_scenario(cfg, 2).unwrap();
    for slot in &w.slots {
        let blocks = slot.network.ledger.height() + 1;
        let expected = blocks / 240;
        let got = slot.catalogue.len() as i64;
        assert!(
            (got - expected).abs() <= 1,
            "{}: {got} snapshots for {blocks} blocks",
            slot.network.id()
        );
        assert!(got >= 4);
    }
}

#[test]
fn fabricated_transaction_never_becomes_a_set() {
    let w = run_scenario(fault_demo(3).unwrap(), 5).unwrap();
    let fab = &w.fabricated[0];
    assert!(fab.committed);
    let n1 = w.slot(&NetworkId::new("n1"));
    let n2 = w.slot(&NetworkId::new("n2"));
    assert!(n1.network.ledger.contains(&fab.set_id));
    assert!(!n2.network.ledger.contains(&fab.set_id));
    let mentions = n2
        .network
        .ledger
        .blocks()
        .iter()
        .flat_map(|b| &b.transactions)
        .any(|e| e.tx.references == Some(fab.set_id));
    assert!(!mentions);
    for slot in &w.slots {
        for e in &slot.catalogue {
            let key = &slot.wallet.get(&e.cid.to_string()).unwrap().key;
            let bytes = w.store.get(&e.cid, &w.swarm_secret, slot.network.id()).unwrap();
            let archive = parse_archive(&decrypt_archive_bytes(&bytes, key).unwrap()).unwrap();
            for s in &archive.snapshots {
                assert!(s.completed_sets.iter().all(|c| c.set_id != fab.set_id));
            }
        }
    }
}

#[test]
fn crash_at_current_height_loses_nothing() {
    let mut cfg = two_networks(80);
    cfg.kdf_iterations = 64;
    cfg.faults.push(FaultEvent {
        at: 40,
        kind: FaultKind::NetworkCrashWithDataLoss {
            network: NetworkId::new("n2"),
            retain_height: 10_000,
            recover_after: 3,
        },
    });
    let w = run_scenario(cfg, 1).unwrap();
    assert_eq!(w.metrics.containment_violations, 0);
    let b = &w.metrics.bootstraps[0];
    assert!(b.error.is_none());
    assert!(b.prefix_identical);
    assert!(b.restored_height >= b.height_before);
}

#[test]
fn exported_files_match_report() {
    let mut cfg = two_networks(90);
    cfg.kdf_iterations = 64;
    let dir = tempfile::tempdir().unwrap();
    let w = run_to_dir(cfg, 4, dir.path()).unwrap();
    let rows = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
    assert_eq!(rows("snapshots.csv"), w.metrics.snapshots.len());
    assert_eq!(rows("latency.csv"), w.metrics.snapshots.len());
    assert_eq!(rows("stages.csv"), 5);
    let throughput = std::fs::read_to_string(dir.path().join("throughput.csv")).unwrap();
    assert!(throughput.starts_with("ledger_height,snapshots_per_min\n"));
    assert!(run_to_dir(two_networks(10), 4, dir.path()).is_err());
}
