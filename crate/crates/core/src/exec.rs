//! Block-parallel execution with deterministic reductions.
//!
//! Work is split into a fixed number of blocks that does not depend on the worker
//! count. Each block draws from its own ChaCha8 stream (`seed`, stream = block index)
//! and results are reduced in block order, so sums are bitwise reproducible.

use crate::Result;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub trait Executor: Sync {
    /// `f(0), …, f(n-1)` in index order.
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs every block on the calling thread.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Block count used by the Monte-Carlo estimators.
pub const MC_BLOCKS: usize = 64;

pub fn block_rng(seed: u64, block: usize) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(block as u64);
    r
}

/// Sample statistics of a weighted Monte-Carlo sum.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct McSums {
    pub n: u64,
    pub sum: f64,
    pub sum_sq: f64,
}

impl McSums {
    pub fn push(&mut self, w: f64) {
        self.n += 1;
        self.sum += w;
        self.sum_sq += w * w;
    }

    pub fn merge(&mut self, o: &McSums) {
        self.n += o.n;
        self.sum += o.sum;
        self.sum_sq += o.sum_sq;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        if self.n < 2 {
            return f64::INFINITY;
        }
        let n = self.n as f64;
        let var = ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        num_traits::Float::sqrt(var / n)
    }
}

/// Draw `samples` values of `f` split over [`MC_BLOCKS`] streams.
///
/// The first error in block order is returned.
pub fn monte_carlo<E, F>(exec: &E, seed: u64, samples: u64, f: F) -> Result<McSums>
where
    E: Executor + ?Sized,
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync + Send,
{
    let per = samples.div_ceil(MC_BLOCKS as u64);
    let blocks = exec.map(MC_BLOCKS, |b| -> Result<McSums> {
        let mut rng = block_rng(seed, b);
        let mut s = McSums::default();
        let lo = per * b as u64;
        let hi = (per * (b as u64 + 1)).min(samples);
        for _ in lo..hi.max(lo) {
            s.push(f(&mut rng)?);
        }
        Ok(s)
    });
    let mut total = McSums::default();
    for b in blocks {
        total.merge(&b?);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn streams_differ_and_repeat() {
        let a: u64 = block_rng(7, 0).random();
        let b: u64 = block_rng(7, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, block_rng(7, 0).random::<u64>());
    }

    #[test]
    fn uniform_mean() {
        let s = monte_carlo(&Sequential, 1, 100_000, |r| Ok(r.random::<f64>())).unwrap();
        assert_eq!(s.n, 100_000);
        assert!((s.mean() - 0.5).abs() < 5.0 * s.std_error());
        assert!((s.std_error() - (1.0f64 / 12.0 / 1e5).sqrt()).abs() < 1e-5);
    }
}
