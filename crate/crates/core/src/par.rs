//! Data-parallel helpers. With the `parallel` feature (default) these fan out
//! over rayon's pool; without it they run sequentially. Either way results
//! come back in input order, so callers stay deterministic.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `true` when the crate was built with rayon support.
pub const PARALLEL: bool = cfg!(feature = "parallel");

/// Sizes the global pool. Without the `parallel` feature this is a no-op.
/// Fails if the pool was already built.
#[cfg(feature = "parallel")]
pub fn set_threads(n: usize) -> Result<(), String> {
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

#[cfg(not(feature = "parallel"))]
pub fn set_threads(_n: usize) -> Result<(), String> {
    Ok(())
}

/// Runs `f` on a private pool of `n` threads, so parallel sections inside it
/// use that many workers. Without the `parallel` feature this just calls `f`.
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(n: usize, f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_n: usize, f: impl FnOnce() -> R + Send) -> R {
    f()
}

#[cfg(feature = "parallel")]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_range<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preserves_order() {
        let v: Vec<usize> = (0..1000).collect();
        let out = map(&v, |x| x * 2);
        assert!(out.iter().enumerate().all(|(i, &y)| y == 2 * i));
        let r = map_range(17, |i| i as u64 * 3);
        assert_eq!(r[16], 48);
    }

    #[test]
    fn private_pool_gives_the_same_answer() {
        let want = map_range(50, |i| i * i);
        assert_eq!(with_threads(1, || map_range(50, |i| i * i)), want);
        assert_eq!(with_threads(3, || map_range(50, |i| i * i)), want);
    }
}
