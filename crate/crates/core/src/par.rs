//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) independent jobs fan out over the
//! rayon pool; without it, or when [`Execution::Sequential`] is requested,
//! they run in order on the calling thread. Results are returned in input
//! order either way, so aggregates never depend on the execution mode.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Whether this build can actually run jobs concurrently.
    pub fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

pub fn map<T, R, F>(exec: Execution, items: Vec<T>, f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.into_par_iter().map(f).collect()
        }
        _ => items.into_iter().map(f).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..100).collect();
        let a = map(Execution::Sequential, xs.clone(), |x| x * x + 1);
        let b = map(Execution::Parallel, xs, |x| x * x + 1);
        assert_eq!(a, b);
    }
}
