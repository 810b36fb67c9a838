use intersnap::sim::presets::random_scenario;
use intersnap::sim::{run_to_dir, verify::verify_run};

#[test]
fn randomized_runs_verify() {
    let n: u64 = std::env::var("ISNAP_BATTERY")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(24);
    let mut failed = Vec::new();
    for seed in 0..n {
        let dir = tempfile::tempdir().unwrap();
        run_to_dir(random_scenario(seed), seed, dir.path()).unwrap();
        let report = verify_run(dir.path()).unwrap();
        if !report.passed {
            failed.push((
                seed,
                report.checks.into_iter().filter(|c| !c.passed).collect::<Vec<_>>(),
            ));
        }
    }
    assert!(failed.is_empty(), "{failed:#?}");
}
