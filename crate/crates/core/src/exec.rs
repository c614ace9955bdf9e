//! Sequential / rayon execution switch.
//!
//! Every data-parallel loop in the crate goes through [`ExecMode`]. Without the
//! `parallel` feature the parallel variant silently falls back to the
//! sequential path, so results never depend on the feature set.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecMode {
    Sequential,
    #[default]
    Parallel,
}

impl ExecMode {
    /// Whether this mode actually runs on the rayon pool in this build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == ExecMode::Parallel {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_range<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == ExecMode::Parallel {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Calls `f(chunk_index, chunk)` on consecutive `chunk_len`-sized pieces.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == ExecMode::Parallel {
            use rayon::prelude::*;
            data.par_chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c));
            return;
        }
        data.chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<u64> = (0..1000).collect();
        let a = ExecMode::Sequential.map(&xs, |x| x * x + 1);
        let b = ExecMode::Parallel.map(&xs, |x| x * x + 1);
        assert_eq!(a, b);
        assert_eq!(
            ExecMode::Sequential.map_range(17, |i| i * 3),
            ExecMode::Parallel.map_range(17, |i| i * 3)
        );
        let fill = |mode: ExecMode| {
            let mut v = vec![0usize; 103];
            mode.for_each_chunk_mut(&mut v, 10, |c, xs| {
                for (k, x) in xs.iter_mut().enumerate() {
                    *x = c * 100 + k;
                }
            });
            v
        };
        assert_eq!(fill(ExecMode::Sequential), fill(ExecMode::Parallel));
        assert_eq!(fill(ExecMode::Sequential)[102], 1002);
    }
}
