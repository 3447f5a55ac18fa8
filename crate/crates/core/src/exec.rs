//! Execution strategy for the data-parallel loops in this crate.
//!
//! Every hot loop (dictionary atoms, dataset samples, surface nodes, cost and
//! Gram rows, batch synthesis) goes through [`Exec::map`]. With the
//! `parallel` feature the parallel strategy fans out over rayon's global
//! pool; without it both strategies run the same sequential loop. Results are
//! always collected in index order and reductions are done sequentially by
//! the caller, so the two strategies are bit-identical.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exec {
    Sequential,
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// Evaluates `f(0), .., f(n - 1)` and returns the results in index order.
    pub fn map<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => (0..n).into_par_iter().map(f).collect(),
            _ => (0..n).map(f).collect(),
        }
    }

    /// Applies `f` to each chunk of `data` (chunks of `chunk` elements) with its
    /// chunk index.
    pub fn for_each_chunk_mut<T, F>(self, data: &mut [T], chunk: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(chunk > 0);
        match self {
            #[cfg(feature = "parallel")]
            Exec::Parallel => data
                .par_chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
            _ => data
                .chunks_mut(chunk)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategies_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        assert_eq!(Exec::Sequential.map(1000, f), Exec::Parallel.map(1000, f));

        let mut a = vec![0usize; 103];
        let mut b = a.clone();
        let g = |ci: usize, c: &mut [usize]| c.iter_mut().for_each(|x| *x = ci);
        Exec::Sequential.for_each_chunk_mut(&mut a, 10, g);
        Exec::Parallel.for_each_chunk_mut(&mut b, 10, g);
        assert_eq!(a, b);
        assert_eq!(a[102], 10);
    }
}
