//! Sequential or rayon-parallel execution of independent work items.
//!
//! Both modes produce identical results: work is split into disjoint output
//! chunks and every item is computed by the same closure.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Self::Parallel
        } else {
            Self::Sequential
        }
    }
}

impl Execution {
    /// `Parallel` degrades to `Sequential` without the `parallel` feature.
    pub fn effective(self) -> Self {
        if cfg!(feature = "parallel") {
            self
        } else {
            Self::Sequential
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self.effective() {
            Self::Sequential => items.iter().map(f).collect(),
            #[cfg(feature = "parallel")]
            Self::Parallel => items.par_iter().map(f).collect(),
            #[cfg(not(feature = "parallel"))]
            Self::Parallel => unreachable!(),
        }
    }

    /// Calls `f(index, chunk)` on consecutive chunks of `chunk` elements.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        match self.effective() {
            Self::Sequential => data.chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            #[cfg(feature = "parallel")]
            Self::Parallel => data.par_chunks_mut(chunk).enumerate().for_each(|(i, c)| f(i, c)),
            #[cfg(not(feature = "parallel"))]
            Self::Parallel => unreachable!(),
        }
    }
}

impl std::str::FromStr for Execution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sequential" | "seq" => Ok(Self::Sequential),
            "parallel" | "par" => Ok(Self::Parallel),
            other => Err(format!("unknown execution mode '{other}'")),
        }
    }
}
