//! Batch execution of independent scenario runs. With the `parallel` feature
//! runs are spread over a rayon pool; without it, or with
//! [`Execution::Sequential`], they run in order. Results are returned in input
//! order either way, so both modes produce identical output.

use crate::sim::{ScenarioConfig, World, WorldError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Maps `f` over `items`, keeping input order.
pub fn map<T, R, F>(items: Vec<T>, mode: Execution, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match mode {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

/// Runs each `(config, seed)` pair in memory and hands the finished world to
/// `inspect`.
pub fn run_batch<R, F>(jobs: Vec<(ScenarioConfig, u64)>, mode: Execution, inspect: F) -> Vec<Result<R, WorldError>>
where
    R: Send,
    F: Fn(&World) -> R + Sync + Send,
{
    map(jobs, mode, |(config, seed)| {
        crate::sim::run_scenario(config, seed).map(|w| inspect(&w))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::presets::random_scenario;

    #[test]
    fn modes_agree() {
        let jobs: Vec<_> = (0..4).map(|s| (random_scenario(s), s)).collect();
        let a = run_batch(jobs.clone(), Execution::Sequential, |w| w.state_hash());
        let b = run_batch(jobs, Execution::Parallel, |w| w.state_hash());
        let a: Vec<_> = a.into_iter().map(Result::unwrap).collect();
        let b: Vec<_> = b.into_iter().map(Result::unwrap).collect();
        assert_eq!(a, b);
    }
}
