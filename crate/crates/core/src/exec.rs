//! Execution strategy for the data-parallel batch loops.
//!
//! Every batch entry point takes an [`Execution`] so both paths stay
//! reachable from one build (the benches compare them). Without the
//! `parallel` feature, [`Execution::Parallel`] silently runs sequentially.
//! Results are always collected in input order, so output never depends on
//! scheduling.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(exec: Execution, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_range<R, F>(exec: Execution, n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Fallible variant of [`map`]; the first error in input order wins.
pub fn try_map<T, R, E, F>(exec: Execution, items: &[T], f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(usize, &T) -> Result<R, E> + Sync + Send,
{
    map(exec, items, f).into_iter().collect()
}

/// Runs `f` inside a pool limited to `jobs` threads (0 = rayon default).
pub fn with_jobs<R: Send>(jobs: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}

/// Counter-based seed expansion: one invocation seed fans out into
/// independent streams per stage and item.
pub fn derive_seed(seed: u64, stage: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stage.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order_in_both_modes() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = map(Execution::Sequential, &xs, |i, x| x * 3 + i as u64);
        let b = map(Execution::Parallel, &xs, |i, x| x * 3 + i as u64);
        assert_eq!(a, b);
    }

    #[test]
    fn try_map_reports_first_error() {
        let xs: Vec<i32> = (0..100).collect();
        let r: Result<Vec<i32>, i32> = try_map(
            Execution::Parallel,
            &xs,
            |_, &x| if x % 10 == 7 { Err(x) } else { Ok(x) },
        );
        assert_eq!(r, Err(7));
    }

    #[test]
    fn derived_seeds_differ_per_stage_and_index() {
        let a = derive_seed(42, 1, 0);
        assert_eq!(a, derive_seed(42, 1, 0));
        assert_ne!(a, derive_seed(42, 1, 1));
        assert_ne!(a, derive_seed(42, 2, 0));
        assert_ne!(a, derive_seed(43, 1, 0));
    }
}
