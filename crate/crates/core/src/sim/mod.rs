//! Deterministic discrete-event harness: scenarios, the world loop, fault
//! injection, bootstrap, metrics and run verification.

pub mod bootstrap;
pub mod metrics;
pub mod presets;
pub mod scenario;
pub mod verify;
pub mod world;

use std::fs;
use std::path::Path;

use crate::codec::canonical_json_pretty;

pub use metrics::{MetricsReport, RunSummary};
pub use scenario::ScenarioConfig;
pub use world::{World, WorldError};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Export(#[from] metrics::ExportError),
    #[error("{0} already holds a store; choose an empty output directory")]
    OutputExists(String),
}

/// Runs a scenario in memory and returns the finished world.
pub fn run_scenario(config: ScenarioConfig, seed: u64) -> Result<World, WorldError> {
    let mut world = World::new(config, seed, None)?;
    world.run();
    Ok(world)
}

/// Runs a scenario with its store under `out/store` and writes every metric
/// file plus `state.json` to `out`.
pub fn run_to_dir(config: ScenarioConfig, seed: u64, out: &Path) -> Result<World, RunError> {
    let store = out.join("store");
    if store.exists() {
        return Err(RunError::OutputExists(out.display().to_string()));
    }
    fs::create_dir_all(out).map_err(metrics::ExportError)?;
    let mut world = World::new(config, seed, Some(&store))?;
    world.run();
    export(&world, out)?;
    Ok(world)
}

pub fn export(world: &World, out: &Path) -> Result<(), metrics::ExportError> {
    metrics::export_metrics(&world.metrics, &world.summary(), out)?;
    fs::write(
        out.join("state.json"),
        canonical_json_pretty(&world.exported_state()).expect("serializable"),
    )?;
    Ok(())
}
