//! Data-parallel helpers. With the `parallel` feature the loops run on the
//! rayon pool; without it they run in order on the calling thread. Results
//! are identical either way (outputs are index-ordered, reductions are sums).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// True when the crate was built with the `parallel` feature.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

/// Label used by benches and reports.
pub const fn backend_name() -> &'static str {
    if is_parallel() {
        "rayon"
    } else {
        "sequential"
    }
}

pub fn for_each_index<F>(len: usize, f: F)
where
    F: Fn(usize) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().for_each(f);
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).for_each(f);
    }
}

/// `f(i)` for `i in 0..len`, collected in index order.
pub fn map_indices<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

pub fn sum_indices<F>(len: usize, f: F) -> u64
where
    F: Fn(usize) -> u64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).sum()
    }
}

/// Maps over a slice in order.
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Counts `bin(item)` occurrences into `bins` buckets.
pub fn histogram<T, F>(items: &[T], bins: usize, bin: F) -> Vec<u32>
where
    T: Sync,
    F: Fn(&T) -> usize + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        const CHUNK: usize = 1 << 16;
        if items.len() > CHUNK {
            return items
                .par_chunks(CHUNK)
                .map(|chunk| {
                    let mut h = vec![0u32; bins];
                    for it in chunk {
                        h[bin(it)] += 1;
                    }
                    h
                })
                .reduce(
                    || vec![0u32; bins],
                    |mut a, b| {
                        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                        a
                    },
                );
        }
    }
    let mut h = vec![0u32; bins];
    for it in items {
        h[bin(it)] += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn helpers_are_order_preserving() {
        assert_eq!(map_indices(5, |i| i * i), vec![0, 1, 4, 9, 16]);
        assert_eq!(sum_indices(101, |i| i as u64), 5050);
        assert_eq!(map_slice(&[1, 2, 3], |x| x + 1), vec![2, 3, 4]);
    }

    #[test]
    fn histogram_counts_every_item() {
        let items: Vec<u32> = (0..200_000).collect();
        let h = histogram(&items, 7, |&x| (x % 7) as usize);
        assert_eq!(h.iter().map(|&c| c as usize).sum::<usize>(), items.len());
        assert_eq!(h[0], 28572);
    }

    #[test]
    fn for_each_visits_all() {
        use std::sync::atomic::{AtomicUsize, Ordering};
        let n = AtomicUsize::new(0);
        for_each_index(1000, |i| {
            n.fetch_add(i, Ordering::Relaxed);
        });
        assert_eq!(n.into_inner(), 499_500);
    }
}
