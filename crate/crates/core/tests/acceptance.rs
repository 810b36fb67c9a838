//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ed25519_dalek::{Signature, Verifier, VerifyingKey};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use intersnap::cas::{CasError, CasStore, ContentId, SwarmKey, SwarmSecret};
use intersnap::crosschain::{SetBook, SetStatus, TransactionSet};
use intersnap::crypto::{
    decrypt_archive_bytes, derive_key, encrypt_archive, fresh_passphrase, Salt, DEFAULT_ITERATIONS,
};
use intersnap::ledger::{
    quorum_threshold, signing_message, Endorsement, EndorsementSet, Ledger, Network, NetworkConfig, NetworkId, PeerId,
    Transaction,
};
use intersnap::par::{run_batch, Execution};
use intersnap::sim::bootstrap::fetch_archive;
use intersnap::sim::bootstrap::{bootstrap_peer_from_archive, restore_local_replica, write_local_replica};
use intersnap::sim::presets::{fault_demo, fault_demo_expectation, random_scenario};
use intersnap::sim::{run_scenario, ScenarioConfig};
use intersnap::snapshot::{
    assemble_archive, capture_snapshot, process_snapshot, Decision, SchedulerConfig, SchedulerState,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

// ---------------------------------------------------------------- oracles

/// Smallest endorser count t with t >= 2n/3, by search.
fn oracle_quorum(n: usize) -> usize {
    (0..=n).find(|t| 3 * t >= 2 * n).expect("t = n always qualifies")
}

fn oracle_keys(config: &NetworkConfig) -> Vec<VerifyingKey> {
    (0..config.peer_count)
        .map(|i| config.peer_signing_key(i).verifying_key())
        .collect()
}

/// Counts distinct registered signers whose signature verifies; `None` if
/// any entry is unregistered, duplicated or does not verify.
fn oracle_count(set: &EndorsementSet, msg: &[u8], config: &NetworkConfig) -> Option<usize> {
    if set.signer_network != config.network_id {
        return None;
    }
    let keys = oracle_keys(config);
    let ids = config.peer_ids();
    let mut seen = BTreeSet::new();
    for e in &set.signatures {
        let idx = ids.iter().position(|p| p == &e.peer_id)?;
        if !seen.insert(idx) {
            return None;
        }
        let sig = Signature::from_slice(&e.signature).ok()?;
        keys[idx].verify(msg, &sig).ok()?;
    }
    Some(seen.len())
}

fn oracle_quorum_ok(set: &EndorsementSet, tx: &Transaction, config: &NetworkConfig) -> bool {
    let msg = signing_message(&tx.canonical_bytes(), set.attached.as_deref());
    set.subject_tx == tx.tx_id && oracle_count(set, &msg, config).is_some_and(|c| c >= oracle_quorum(config.peer_count))
}

/// A completed set carries a source-quorum invoke and a destination-quorum
/// receipt over the invoke's endorsements.
fn oracle_receipt_ok(set: &TransactionSet, configs: &[NetworkConfig]) -> bool {
    let cfg = |id| configs.iter().find(|c| &c.network_id == id);
    let (Some(src), Some(dst)) = (cfg(&set.source_network), cfg(&set.dest_network)) else {
        return false;
    };
    let Some(receipt) = &set.receipt else {
        return false;
    };
    receipt.tx.references == Some(set.invoke.tx.tx_id)
        && receipt.endorsements.attached.as_deref() == Some(&set.invoke.endorsements)
        && oracle_quorum_ok(&set.invoke.endorsements, &set.invoke.tx, src)
        && oracle_quorum_ok(&receipt.endorsements, &receipt.tx, dst)
}

fn oracle_cid(bytes: &[u8]) -> String {
    format!("cid1-{}", hex::encode(Sha256::digest(bytes)))
}

// ---------------------------------------------------------------- helpers

fn grow(net: &mut Network, blocks: usize, txs_per_block: usize, payload: usize, rng: &mut impl RngCore) {
    let start = net.ledger.blocks().last().map(|b| b.tick).unwrap_or(0) + 1;
    for t in start..start + blocks as u64 {
        for _ in 0..txs_per_block {
            let mut p = vec![0u8; payload];
            rng.fill_bytes(&mut p);
            let tx = Transaction::local(net.id().clone(), p, t);
            net.endorse_and_commit(tx, None).expect("all peers live");
        }
        net.seal(t);
    }
}

fn store_for(root: &Path, net: &Network, rng: &mut impl RngCore) -> (CasStore, SwarmSecret) {
    let secret = SwarmSecret::generate(rng);
    let store = CasStore::create(
        root,
        SwarmKey {
            secret,
            holders: [net.id().clone()].into_iter().collect(),
        },
    )
    .expect("store");
    (store, secret)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

// ---------------------------------------------------------------- criteria

fn c1_quorum() -> Outcome {
    let start = Instant::now();
    for n in 1..=32 {
        if quorum_threshold(n) != oracle_quorum(n) {
            return outcome(false, format!("quorum_threshold({n}) = {}", quorum_threshold(n)));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    let mut committed = 0;
    for case in 0..500u64 {
        let n = rng.gen_range(1..=10);
        let config = NetworkConfig::new(format!("q{case}"), n, case);
        let mut ledger = Ledger::new(&config);
        let tx = Transaction::local(config.network_id.clone(), format!("case-{case}").into_bytes(), case);
        let msg = signing_message(&tx.canonical_bytes(), None);
        let signers = rng.gen_range(0..=n);
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            idx.swap(i, rng.gen_range(0..=i));
        }
        let mut signatures: Vec<Endorsement> = idx[..signers]
            .iter()
            .map(|&i| Endorsement {
                peer_id: PeerId::new(&config.network_id, i),
                signature: {
                    use ed25519_dalek::Signer;
                    config.peer_signing_key(i).sign(&msg).to_bytes().to_vec()
                },
            })
            .collect();
        match rng.gen_range(0..10) {
            0 if !signatures.is_empty() => {
                let k = rng.gen_range(0..signatures.len());
                let b = rng.gen_range(0..64);
                signatures[k].signature[b] ^= 1 << rng.gen_range(0..8);
            }
            1 if !signatures.is_empty() => {
                let k = rng.gen_range(0..signatures.len());
                signatures.push(signatures[k].clone());
            }
            2 => {
                use ed25519_dalek::Signer;
                let stranger = NetworkConfig::new(format!("q{case}"), n + 3, case);
                signatures.push(Endorsement {
                    peer_id: PeerId::new(&config.network_id, n + 1),
                    signature: stranger.peer_signing_key(n + 1).sign(&msg).to_bytes().to_vec(),
                });
            }
            _ => {}
        }
        let set = EndorsementSet {
            subject_tx: tx.tx_id,
            signer_network: config.network_id.clone(),
            signatures,
            attached: None,
        };
        let expect = oracle_quorum_ok(&set, &tx, &config);
        let got = ledger.commit_transaction(tx, set).is_committed();
        committed += got as usize;
        mismatches += (expect != got) as usize;
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(5),
        format!(
            "n=1..32 exact; 500 sets, {committed} committed, {mismatches} mismatches; {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_atomicity() -> Outcome {
    let start = Instant::now();
    let jobs: Vec<_> = (0..100u64).map(|s| (random_scenario(s), s)).collect();
    let results = run_batch(jobs, Execution::default(), |w| {
        let configs: Vec<NetworkConfig> = w.slots.iter().map(|s| s.network.config.clone()).collect();
        let mut sets = 0usize;
        let mut bad = 0usize;
        let mut unreadable = 0usize;
        for slot in &w.slots {
            for e in &slot.catalogue {
                let key = &slot.wallet.get(&e.cid.to_string()).expect("wallet entry").key;
                match fetch_archive(&w.store, &w.swarm_secret, slot.network.id(), &e.cid, key) {
                    Ok(a) => {
                        for s in a.snapshots.iter().flat_map(|s| &s.completed_sets) {
                            sets += 1;
                            bad += !oracle_receipt_ok(s, &configs) as usize;
                        }
                    }
                    Err(_) => unreadable += 1,
                }
            }
        }
        let flips = w
            .slots
            .iter()
            .flat_map(|s| &s.book.transitions)
            .filter(|t| t.from == SetStatus::Incomplete && t.to == SetStatus::Complete)
            .count();
        let incomplete: usize = w.slots.iter().map(|s| s.book.count(SetStatus::Incomplete)).sum();
        (sets, bad, unreadable, flips, incomplete)
    });
    let (mut sets, mut bad, mut unreadable, mut flips, mut incomplete) = (0, 0, 0, 0, 0);
    for r in results {
        let Ok((s, b, u, f, i)) = r else {
            return outcome(false, "a randomized run failed to start");
        };
        sets += s;
        bad += b;
        unreadable += u;
        flips += f;
        incomplete += i;
    }
    let elapsed = start.elapsed();
    outcome(
        bad == 0 && unreadable == 0 && flips == 0 && sets > 0 && incomplete > 0 && elapsed < Duration::from_secs(60),
        format!(
            "100 runs: {sets} archived completed sets, {bad} without verifying receipt, {flips} incomplete->complete, {incomplete} expired sets exercised; {:.1}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn c3_disputes() -> Outcome {
    let mut lines = Vec::new();
    let mut pass = true;
    for case in 1..=3u8 {
        let expect = fault_demo_expectation(case).unwrap();
        for seed in [1u64, 2, 3] {
            let a = run_scenario(fault_demo(case).unwrap(), seed).unwrap();
            let b = run_scenario(fault_demo(case).unwrap(), seed).unwrap();
            let v = a.metrics.disputes.iter().find_map(|d| d.verdict.clone());
            let ok = v.as_ref().is_some_and(|v| (v.outcome, v.rationale) == expect)
                && a.state_hash() == b.state_hash()
                && a.metrics.disputes == b.metrics.disputes;
            pass &= ok;
            if !ok {
                lines.push(format!(
                    "case {case} seed {seed}: {:?}",
                    v.map(|v| (v.outcome, v.rationale))
                ));
            }
        }
    }
    // case 2 must cite the counterparty's archive
    let w = run_scenario(fault_demo(2).unwrap(), 1).unwrap();
    let cites_n1 = w
        .metrics
        .disputes
        .iter()
        .filter_map(|d| d.verdict.as_ref())
        .any(|v| v.evidence.iter().any(|c| c.network_id.as_str() == "n1"));
    pass &= cites_n1;
    outcome(
        pass,
        if lines.is_empty() {
            "3 cases x 3 seeds reproduce refuted/case1, upheld/case1 (counterparty evidence), refuted/case2".into()
        } else {
            lines.join("; ")
        },
    )
}

fn c4_scheduler() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // scripted: 10 blocks per tick from genesis, polled every tick
    let cfg = SchedulerConfig {
        blocks_per_period: 10.0,
        window_periods: 24.0,
        poll_interval: 1,
    };
    let mut st = SchedulerState::new(NetworkId::new("n"));
    let mut fired = Vec::new();
    for t in 0..100i64 {
        if let Decision::Trigger { to_height, .. } = process_snapshot(&mut st, t * 10, cfg.threshold()) {
            fired.push(to_height);
        }
    }
    let scripted_ok = fired == vec![240, 480, 720, 960];

    let mut false_triggers = 0u64;
    let mut late = 0u64;
    let mut missed = 0u64;
    let mut triggers = 0u64;
    for _ in 0..10_000 {
        let h = rng.gen_range(1..=20u64);
        let cfg = SchedulerConfig {
            blocks_per_period: 10.0,
            window_periods: 24.0,
            poll_interval: h,
        };
        let ticks = rng.gen_range(50..400u64);
        let burst = rng.gen_range(1..=60i64);
        let mut height = 0i64;
        let mut st = SchedulerState::new(NetworkId::new("n"));
        let mut last = -1i64;
        let mut crossed_at: Option<u64> = None;
        for t in 1..=ticks {
            height += rng.gen_range(0..=burst);
            if crossed_at.is_none() && height - last >= 240 {
                crossed_at = Some(t);
            }
            if !cfg.is_poll_tick(t) {
                continue;
            }
            let growth = height - last;
            match process_snapshot(&mut st, height, cfg.threshold()) {
                Decision::Trigger { from_height, to_height } => {
                    triggers += 1;
                    if growth < 240 || from_height != last || to_height != height {
                        false_triggers += 1;
                    }
                    if crossed_at.is_some_and(|c| t - c >= h) {
                        late += 1;
                    }
                    last = height;
                    crossed_at = None;
                }
                Decision::Skip => {
                    if growth >= 240 {
                        missed += 1;
                    }
                }
            }
        }
    }
    outcome(
        scripted_ok && false_triggers == 0 && late == 0 && missed == 0,
        format!("scripted triggers {fired:?}; 10000 fuzzed traces: {triggers} triggers, {false_triggers} false, {missed} missed, {late} late"),
    )
}

fn c5_cid() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut net = Network::new(NetworkConfig::new("c5", 4, 5));
    let (mut store, secret) = store_for(&dir.path().join("store"), &net, &mut rng);
    let book = SetBook::default();
    let caller = net.id().clone();
    let mut archives = Vec::new();
    let mut from = -1;
    for i in 0..1000u64 {
        grow(
            &mut net,
            1 + (i % 3) as usize,
            rng.gen_range(1..=3),
            rng.gen_range(16..256),
            &mut rng,
        );
        let peer = PeerId::new(net.id(), 0);
        let snap = capture_snapshot(&net, &book, &peer, from, i).unwrap();
        from = snap.to_height;
        let plain = assemble_archive(&[snap]).unwrap();
        let key = derive_key(&fresh_passphrase(&mut rng), Salt::generate(&mut rng), 8).unwrap();
        let bytes = encrypt_archive(&plain, &key, &mut rng).unwrap().to_bytes();
        let cid = store.put(&bytes, &secret, &caller).unwrap();
        if cid.to_string() != oracle_cid(&bytes) {
            return outcome(false, format!("cid {cid} differs from sha-256 oracle"));
        }
        archives.push((cid, bytes));
    }
    let mut silent = 0;
    let mut caught = 0;
    let mut exhaustive = 0;
    for (k, (cid, bytes)) in archives.iter().enumerate() {
        if k < 10 {
            for pos in 0..bytes.len() {
                let mut m = bytes.clone();
                m[pos] ^= 0x5a;
                exhaustive += 1;
                if ContentId::of(&m) == *cid {
                    silent += 1;
                }
            }
        }
        let path = store.object_path(cid).unwrap();
        let mut m = bytes.clone();
        let pos = rng.gen_range(0..m.len());
        m[pos] ^= rng.gen_range(1..=255u8);
        fs::write(&path, &m).unwrap();
        match store.get(cid, &secret, &caller) {
            Err(CasError::IntegrityMismatch(_)) => caught += 1,
            _ => silent += 1,
        }
        fs::write(&path, bytes).unwrap();
    }
    outcome(
        silent == 0 && caught == 1000,
        format!("1000 archives: {caught} on-disk mutations caught at get, {exhaustive} exhaustive byte mutations all change the CID, {silent} silent"),
    )
}

fn c6_crypto() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut round, mut flips, mut wrong) = (0, 0, 0);
    for i in 0..1000 {
        let len = rng.gen_range(1..4096);
        let mut plain = vec![0u8; len];
        rng.fill_bytes(&mut plain);
        let iterations = if i < 5 { DEFAULT_ITERATIONS } else { 16 };
        let key = derive_key(&fresh_passphrase(&mut rng), Salt::generate(&mut rng), iterations).unwrap();
        let bytes = encrypt_archive(&plain, &key, &mut rng).unwrap().to_bytes();
        if decrypt_archive_bytes(&bytes, &key.key).as_deref() == Ok(&plain[..]) {
            round += 1;
        }
        let mut t = bytes.clone();
        let bit = rng.gen_range(0..t.len() * 8);
        t[bit / 8] ^= 1 << (bit % 8);
        if decrypt_archive_bytes(&t, &key.key).is_err() {
            flips += 1;
        }
        let other = derive_key(&fresh_passphrase(&mut rng), key.salt, iterations).unwrap();
        if decrypt_archive_bytes(&bytes, &other.key).is_err() {
            wrong += 1;
        }
    }
    outcome(
        round == 1000 && flips == 1000 && wrong == 1000,
        format!("round trips {round}/1000, bit flips rejected {flips}/1000, wrong keys rejected {wrong}/1000"),
    )
}

fn c7_bootstrap() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut lines = Vec::new();
    let mut pass = true;
    for (k, blocks) in [100usize, 500, 1000, 2000].into_iter().enumerate() {
        let mut net = Network::new(NetworkConfig::new(format!("b{k}"), 4, 70 + k as u64));
        grow(&mut net, blocks, 2, 256, &mut rng);
        let reference: Vec<_> = net.ledger.blocks().iter().map(|b| b.block_hash).collect();
        let (mut store, secret) = store_for(&dir.path().join(format!("store{k}")), &net, &mut rng);
        let peer = PeerId::new(net.id(), 0);
        let snap = capture_snapshot(&net, &SetBook::default(), &peer, -1, 0).unwrap();
        let key = derive_key(
            &fresh_passphrase(&mut rng),
            Salt::generate(&mut rng),
            DEFAULT_ITERATIONS,
        )
        .unwrap();
        let bytes = encrypt_archive(&assemble_archive(&[snap]).unwrap(), &key, &mut rng)
            .unwrap()
            .to_bytes();
        let cid = store.put(&bytes, &secret, net.id()).unwrap();
        let replica = dir.path().join(format!("replica{k}.json"));
        write_local_replica(&net.ledger.to_record(), &replica).unwrap();

        let (mut t_store, mut t_local) = (Vec::new(), Vec::new());
        let mut identical = true;
        for _ in 0..5 {
            net.ledger.truncate(-1);
            let t = Instant::now();
            bootstrap_peer_from_archive(&mut net, &store, &secret, &cid, &key.key).unwrap();
            t_store.push(ms(t.elapsed()));
            identical &= net
                .ledger
                .blocks()
                .iter()
                .map(|b| b.block_hash)
                .eq(reference.iter().copied());
            identical &= net.ledger.verify_chain().is_ok();

            net.ledger.truncate(-1);
            let t = Instant::now();
            restore_local_replica(&mut net, &replica).unwrap();
            t_local.push(ms(t.elapsed()));
            identical &= net
                .ledger
                .blocks()
                .iter()
                .map(|b| b.block_hash)
                .eq(reference.iter().copied());
        }
        let (s, l) = (median(t_store), median(t_local));
        let ratio = s / l;
        pass &= identical && ratio <= 5.0;
        lines.push(format!(
            "{blocks} blocks: identical={identical} store {s:.1}ms local {l:.1}ms ({ratio:.2}x)"
        ));
    }
    outcome(pass, lines.join("; "))
}

fn pipeline(net: &Network, from: i64, store: &mut CasStore, secret: &SwarmSecret, rng: &mut ChaCha8Rng) -> Duration {
    let t = Instant::now();
    let peer = PeerId::new(net.id(), 0);
    let snap = capture_snapshot(net, &SetBook::default(), &peer, from, 0).unwrap();
    let plain = assemble_archive(&[snap]).unwrap();
    let key = derive_key(&fresh_passphrase(rng), Salt::generate(rng), DEFAULT_ITERATIONS).unwrap();
    let bytes = encrypt_archive(&plain, &key, rng).unwrap().to_bytes();
    store.put(&bytes, secret, net.id()).unwrap();
    t.elapsed()
}

fn c8_performance() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);

    let mut big = Network::new(NetworkConfig::new("p12k", 4, 81));
    grow(&mut big, 120, 100, 1024, &mut rng);
    let (mut store, secret) = store_for(&dir.path().join("big"), &big, &mut rng);
    let t12k = pipeline(&big, 0, &mut store, &secret, &mut rng);

    let mut net = Network::new(NetworkConfig::new("p20k", 4, 82));
    let (mut store, secret) = store_for(&dir.path().join("tput"), &net, &mut rng);
    let mut lat = Vec::new();
    for target in [1_000usize, 2_500, 5_000, 10_000, 20_000] {
        let h = net.ledger.height() as usize;
        grow(&mut net, target - h, 1, 1024, &mut rng);
        let samples: Vec<f64> = (0..3)
            .map(|_| ms(pipeline(&net, target as i64 - 240, &mut store, &secret, &mut rng)))
            .collect();
        lat.push((target, median(samples)));
    }
    let max = lat.iter().map(|x| x.1).fold(0.0, f64::max);
    let min = lat.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    let per_min = 60_000.0 / max;
    let spread = max / min;
    let pts: Vec<String> = lat.iter().map(|(h, l)| format!("{h}:{l:.0}ms")).collect();
    outcome(
        t12k < Duration::from_secs(5) && per_min >= 60.0 && spread < 3.0,
        format!(
            "12000-tx archive {:.2}s; per-snapshot latency {} -> >= {per_min:.0} snapshots/min, spread {spread:.2}x",
            t12k.as_secs_f64(),
            pts.join(" ")
        ),
    )
}

fn c9_stages() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/one-hour.json");
    let config = ScenarioConfig::from_json(&fs::read_to_string(path).unwrap()).unwrap();
    let w = run_scenario(config, 9).unwrap();
    let m = &w.metrics;
    let attempts: u64 = m.stages.values().map(|s| s.attempts).sum();
    outcome(
        m.stages_reconcile() && m.success_rate() >= 0.99 && attempts > 0,
        format!(
            "{} snapshots, {attempts} stage attempts, reconcile={}, success {:.2}%",
            m.snapshots.len(),
            m.stages_reconcile(),
            m.success_rate() * 100.0
        ),
    )
}

fn c10_determinism() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_intersnap");
    let scenario = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/two-networks.json");
    let dir = tempfile::tempdir().unwrap();
    for run in ["a", "b"] {
        let status = Command::new(bin)
            .args(["run", "--scenario"])
            .arg(&scenario)
            .args(["--seed", "42", "--out"])
            .arg(dir.path().join(run))
            .output()
            .unwrap();
        if !status.status.success() {
            return outcome(false, String::from_utf8_lossy(&status.stderr).into_owned());
        }
    }
    let mut differing = Vec::new();
    for f in [
        "summary.json",
        "state.json",
        "snapshots.csv",
        "stages.csv",
        "verdicts.json",
    ] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        if a != b {
            differing.push(f);
        }
    }
    let hash = |r: &str| -> String {
        let v: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(r).join("summary.json")).unwrap()).unwrap();
        v["state_hash"].as_str().unwrap_or_default().to_string()
    };
    let (ha, hb) = (hash("a"), hash("b"));
    outcome(
        differing.is_empty() && ha == hb && !ha.is_empty(),
        format!(
            "state hash {}.. both runs; differing files: {differing:?}",
            &ha[..ha.len().min(16)]
        ),
    )
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 10] = [
        ("quorum oracle equivalence", c1_quorum),
        ("receipt atomicity", c2_atomicity),
        ("non-repudiation scenarios", c3_disputes),
        ("scheduler triggers", c4_scheduler),
        ("cid integrity", c5_cid),
        ("crypto round trip and tamper", c6_crypto),
        ("bootstrap recovery", c7_bootstrap),
        ("desk-scale performance", c8_performance),
        ("stage reconciliation", c9_stages),
        ("determinism", c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty() && !filter.iter().any(|a| a == &n.to_string()) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        println!(
            "{} criterion {n:>2} {name}: {} [{:.1}s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        failed += !o.pass as usize;
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
