//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature, [`ExecMode::Parallel`] runs large batches on
//! the rayon pool; without it (or in [`ExecMode::Sequential`]) everything runs
//! on the calling thread. Results are always in input order.

use serde::{Deserialize, Serialize};

use crate::error::Result;

/// Batches smaller than this stay on the calling thread.
pub const PAR_THRESHOLD: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    /// Whether work of `len` items is actually spread across threads.
    pub fn is_parallel(self, len: usize) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel && len >= PAR_THRESHOLD
    }
}

pub fn try_map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<U> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel(items.len()) {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = mode;
    items.iter().map(f).collect()
}

/// Maps every item to zero or more outputs, flattened in input order.
pub fn try_flat_map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<Vec<U>> + Sync + Send,
{
    let nested = try_map(mode, items, f)?;
    Ok(nested.into_iter().flatten().collect())
}

pub fn try_filter_map<T, U, F>(mode: ExecMode, items: &[T], f: F) -> Result<Vec<U>>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> Result<Option<U>> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel(items.len()) {
        use rayon::prelude::*;
        let v: Vec<Option<U>> = items.par_iter().map(f).collect::<Result<_>>()?;
        return Ok(v.into_iter().flatten().collect());
    }
    let _ = mode;
    let mut out = Vec::new();
    for it in items {
        if let Some(u) = f(it)? {
            out.push(u);
        }
    }
    Ok(out)
}

/// Runs `f` for each item regardless of batch size (used for coarse-grained
/// work such as whole histories).
pub fn map_each<T, U, F>(mode: ExecMode, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        use rayon::prelude::*;
        return items.into_par_iter().map(f).collect();
    }
    let _ = mode;
    items.into_iter().map(f).collect()
}

pub fn sort_by<T, F>(mode: ExecMode, items: &mut [T], cmp: F)
where
    T: Send,
    F: Fn(&T, &T) -> std::cmp::Ordering + Sync,
{
    #[cfg(feature = "parallel")]
    if mode.is_parallel(items.len()) {
        use rayon::prelude::*;
        items.par_sort_by(cmp);
        return;
    }
    let _ = mode;
    items.sort_by(cmp);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn modes_agree_and_keep_order() {
        let v: Vec<i64> = (0..10_000).collect();
        for mode in [ExecMode::Parallel, ExecMode::Sequential] {
            let m = try_map(mode, &v, |x| Ok(x * 2)).unwrap();
            assert_eq!(m[1234], 2468);
            let f = try_filter_map(mode, &v, |x| Ok((x % 3 == 0).then_some(*x))).unwrap();
            assert_eq!(f.len(), 3334);
            assert!(f.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn errors_propagate() {
        let v: Vec<i64> = (0..5000).collect();
        let r = try_map(ExecMode::Parallel, &v, |x| if *x == 4000 { Err(Error::DivisionByZero) } else { Ok(*x) });
        assert!(r.is_err());
    }
}
