//! Fan-out of independent runs. Each job owns its own simulation and RNG, so
//! results do not depend on the execution strategy.

/// How independent jobs are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Rayon's global pool when the `parallel` feature is on, sequential
    /// otherwise.
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `jobs`, preserving order.
pub fn map_jobs<J, T, F>(jobs: &[J], execution: Execution, f: F) -> Vec<T>
where
    J: Sync,
    T: Send,
    F: Fn(&J) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if execution.is_parallel() {
        use rayon::prelude::*;
        return jobs.par_iter().map(f).collect();
    }
    let _ = execution;
    jobs.iter().map(f).collect()
}
