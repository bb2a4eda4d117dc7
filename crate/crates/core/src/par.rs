//! Data-parallel helpers. With the `parallel` feature the work is spread
//! over the rayon pool; without it, or through [`map_seq`], items are
//! processed in order on the calling thread. Results keep input order
//! either way.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub fn map_seq<T, R>(items: &[T], f: impl Fn(&T) -> R) -> Vec<R> {
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    map_seq(items, f)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
