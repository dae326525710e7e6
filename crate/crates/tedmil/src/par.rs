//! Data-parallel map helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) the maps fan out over rayon;
//! without it they run as plain loops. Results always come back in input
//! order, so downstream reductions see a fixed order and outputs are
//! identical under either build.

/// Map in input order, parallel when the feature allows it.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_parallel(items, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_sequential(items, f)
    }
}

/// Map over bounded chunks: each chunk completes (in parallel when
/// enabled) before the next starts, which caps how many expensive
/// intermediates are alive at once. Output order matches input order.
pub fn map_chunked<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let chunk = suggested_chunk_len();
    let mut out = Vec::with_capacity(items.len());
    for block in items.chunks(chunk.max(1)) {
        out.extend(map(block, &f));
    }
    out
}

pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(&T) -> R,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map_parallel<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

pub fn suggested_chunk_len() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads().max(1)
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_preserve_input_order() {
        let items: Vec<usize> = (0..100).collect();
        let expect: Vec<usize> = items.iter().map(|x| x * 3).collect();
        assert_eq!(map(&items, |x| x * 3), expect);
        assert_eq!(map_chunked(&items, |x| x * 3), expect);
        assert_eq!(map_sequential(&items, |x| x * 3), expect);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn parallel_and_sequential_agree() {
        let items: Vec<f64> = (0..1000).map(|i| i as f64 * 0.25).collect();
        let seq = map_sequential(&items, |x| x.sin() * x.cos());
        let par = map_parallel(&items, |x| x.sin() * x.cos());
        assert_eq!(seq, par);
    }
}
