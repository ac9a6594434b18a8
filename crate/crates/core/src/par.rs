//! Data-parallel helpers.
//!
//! With the `parallel` feature (on by default) these run on the current rayon
//! pool; without it they are plain sequential loops. Every helper preserves
//! input order in its output, so results are identical either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many items the sequential loop wins.
#[cfg(feature = "parallel")]
const MIN_PARALLEL_LEN: usize = 64;

/// `(0..len).map(f).collect()`, possibly in parallel.
pub fn map_range<R, F>(len: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if len >= MIN_PARALLEL_LEN {
            return (0..len).into_par_iter().map(f).collect();
        }
    }
    (0..len).map(f).collect()
}

/// Like [`map_range`] but always fans out, for coarse work items (CV folds,
/// grid points, oracle instances) where even a handful justify threads.
pub fn map_items<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        return items.par_iter().map(f).collect();
    }
    #[allow(unreachable_code)]
    items.iter().map(f).collect()
}

/// Fill `out[i] = f(i)` in place.
pub fn fill_indexed<R, F>(out: &mut [R], f: F)
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if out.len() >= MIN_PARALLEL_LEN {
            out.par_iter_mut().enumerate().for_each(|(i, o)| *o = f(i));
            return;
        }
    }
    for (i, o) in out.iter_mut().enumerate() {
        *o = f(i);
    }
}

/// Number of worker threads the helpers will use.
pub fn current_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        return rayon::current_num_threads();
    }
    #[allow(unreachable_code)]
    1
}
