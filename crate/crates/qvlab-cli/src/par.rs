//! Deterministic fan-out of replicates over the rayon pool.

use qvlab::rng::{self, StreamRng};
use rayon::prelude::*;

/// Runs `f` for replicates `0..reps`, replicate `r` on its own stream
/// `(seed, tag·2³² + r)`. Results come back in replicate order, so the output
/// does not depend on the number of workers.
pub fn replicates<T, F>(reps: usize, seed: u64, tag: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut StreamRng, usize) -> T + Sync + Send,
{
    (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut g = rng::stream(seed, (tag << 32) | r as u64);
            f(&mut g, r)
        })
        .collect()
}

/// Sizes the global pool from `QVLAB_THREADS` when it holds a positive
/// integer. Calling it again is harmless.
pub fn init_pool() {
    let threads = std::env::var("QVLAB_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).filter(|&t| t > 0);
    if let Some(t) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn independent_of_pool_size() {
        let draw = |g: &mut StreamRng, r: usize| (r, g.random::<u64>());
        let a = replicates(64, 5, 1, draw);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| replicates(64, 5, 1, draw));
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, x)| x.0 == i));
        assert_ne!(a[0].1, replicates(1, 5, 2, draw)[0].1);
    }
}
