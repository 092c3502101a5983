//! Trial-level execution: a rayon pool when the `parallel` feature is on,
//! a plain loop otherwise.
//!
//! Results always come back in input order, so any reduction done by the
//! caller over the returned vector is independent of scheduling.

use std::sync::atomic::{AtomicBool, Ordering};

static STOP: AtomicBool = AtomicBool::new(false);

/// Asks running experiment sweeps to stop starting new trials. Meant to be
/// called from a signal handler; trials already running finish normally.
pub fn request_stop() {
    STOP.store(true, Ordering::SeqCst);
}

pub fn stop_requested() -> bool {
    STOP.load(Ordering::SeqCst)
}

/// How a batch of independent jobs is executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    /// Parallel over at most `workers` threads; `0` means the rayon default.
    /// Falls back to sequential when built without the `parallel` feature.
    Parallel { workers: usize },
    #[default]
    Auto,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && !matches!(self, Execution::Sequential)
    }

    /// Maps `f` over `items`, preserving order.
    pub fn map<T, R, F>(self, items: Vec<T>, f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(T) -> R + Send + Sync,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            match self {
                Execution::Sequential => items.into_iter().map(f).collect(),
                Execution::Auto | Execution::Parallel { workers: 0 } => {
                    items.into_par_iter().map(f).collect()
                }
                Execution::Parallel { workers } => {
                    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
                        Ok(pool) => pool.install(|| items.into_par_iter().map(&f).collect()),
                        Err(_) => items.into_iter().map(f).collect(),
                    }
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            items.into_iter().map(f).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_every_mode() {
        let input: Vec<u64> = (0..257).collect();
        let expect: Vec<u64> = input.iter().map(|x| x * x + 1).collect();
        for mode in [
            Execution::Sequential,
            Execution::Auto,
            Execution::Parallel { workers: 3 },
        ] {
            assert_eq!(mode.map(input.clone(), |x| x * x + 1), expect);
        }
    }
}
