//! Replicate fan-out.
//!
//! Work is indexed by replicate number and results are always returned in
//! index order, so downstream reductions see the same sequence whatever the
//! execution mode or thread count.

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the ambient rayon pool. Falls back to sequential when the crate
    /// is built without the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    pub fn map_indexed<T, F>(self, n: u64, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        match self {
            Exec::Sequential => (0..n).map(f).collect(),
            Exec::Parallel => parallel_map(n, f),
        }
    }

    /// Like [`Exec::map_indexed`], but reports the error of the lowest failing
    /// index so that failures are as reproducible as successes.
    pub fn try_map_indexed<T, F>(self, n: u64, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.map_indexed(n, f).into_iter().collect()
    }
}

#[cfg(feature = "parallel")]
fn parallel_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn parallel_map<T, F>(n: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    #[test]
    fn modes_agree_and_keep_order() {
        let f = |i: u64| i * i + 1;
        assert_eq!(
            Exec::Sequential.map_indexed(1000, f),
            Exec::Parallel.map_indexed(1000, f)
        );
    }

    #[test]
    fn first_error_by_index_wins() {
        let r: Result<Vec<u64>> = Exec::Parallel.try_map_indexed(500, |i| {
            if i % 100 == 37 {
                Err(Error::BudgetExceeded { max_steps: i })
            } else {
                Ok(i)
            }
        });
        match r {
            Err(Error::BudgetExceeded { max_steps }) => assert_eq!(max_steps, 37),
            other => panic!("unexpected {other:?}"),
        }
    }
}
