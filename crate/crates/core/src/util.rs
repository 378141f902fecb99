//! Concurrency plumbing shared by training and evaluation.

use std::sync::Once;

static POOL_INIT: Once = Once::new();

/// Installs the global rayon pool, honoring the `PWLEQ_THREADS` cap.
///
/// Called lazily before every parallel region; only the first call has any
/// effect. An unset or unparsable variable leaves rayon's default.
pub fn ensure_thread_pool() {
    POOL_INIT.call_once(|| {
        if let Ok(v) = std::env::var("PWLEQ_THREADS") {
            if let Ok(n) = v.trim().parse::<usize>() {
                if n >= 1 {
                    let _ = rayon::ThreadPoolBuilder::new()
                        .num_threads(n)
                        .build_global();
                }
            }
        }
    });
}

/// Parallel map that preserves input order, so any follow-up reduction is
/// deterministic regardless of thread count.
pub fn ordered_par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    ensure_thread_pool();
    items.par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_map_preserves_order() {
        let xs: Vec<usize> = (0..1000).collect();
        let ys = ordered_par_map(&xs, |x| x * 2);
        assert_eq!(ys, (0..1000).map(|x| x * 2).collect::<Vec<_>>());
    }
}
