//! Rademacher sign vectors.
//!
//! Monte Carlo trials draw their signs from a counter-based stream: trial `t`
//! under seed `s` always sees the same vector, whichever worker evaluates it.
//! Aggregation goes through [`pairwise_sum`] over values kept in trial order,
//! so estimates are bit-identical for any thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

/// A vector of independent uniform ±1 entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaVector(Vec<f64>);

impl SigmaVector {
    pub fn new(signs: Vec<f64>) -> Result<Self> {
        if signs.is_empty() {
            return Err(Error::Input("sign vector is empty".into()));
        }
        if let Some((i, s)) = signs
            .iter()
            .enumerate()
            .find(|(_, &s)| s != 1.0 && s != -1.0)
        {
            return Err(Error::Input(format!("sign {i} is {s}, expected -1 or +1")));
        }
        Ok(Self(signs))
    }

    /// Bit `i` of `bits` set means `σ_i = -1`.
    pub fn from_bits(m: usize, bits: u64) -> Self {
        debug_assert!(m <= 64);
        Self(
            (0..m)
                .map(|i| if bits >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect(),
        )
    }

    /// The sign vector of trial `trial` under `seed`.
    pub fn from_counter(seed: u64, trial: u64, m: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        let mut signs = Vec::with_capacity(m);
        while signs.len() < m {
            let word = rng.next_u64();
            let take = (m - signs.len()).min(64);
            signs.extend((0..take).map(|i| if word >> i & 1 == 1 { -1.0 } else { 1.0 }));
        }
        Self(signs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }
}

/// Sums in a fixed pairwise tree. Depends only on the order of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Mean and standard error of the mean (sample standard deviation over `√n`).
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(xs) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let dev: Vec<f64> = xs.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Evaluates `f` on the sign vectors of trials `0..n` in parallel and returns
/// the results in trial order.
pub fn map_trials<T, F>(seed: u64, n: u64, m: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SigmaVector) -> T + Sync + Send,
{
    (0..n)
        .into_par_iter()
        .map(|t| f(&SigmaVector::from_counter(seed, t, m)))
        .collect()
}

/// Evaluates `f` on one representative of every `{σ, -σ}` pair (the last
/// coordinate fixed to +1), in enumeration order. There are `2^(m-1)` of them.
pub fn map_half_enumeration<T, F>(m: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SigmaVector) -> T + Sync + Send,
{
    debug_assert!((1..=63).contains(&m));
    let half = 1u64 << (m - 1);
    (0..half)
        .into_par_iter()
        .map(|bits| f(&SigmaVector::from_bits(m, bits)))
        .collect()
}

/// Evaluates `f` on all `2^m` sign vectors, in enumeration order.
pub fn map_full_enumeration<T, F>(m: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&SigmaVector) -> T + Sync + Send,
{
    debug_assert!(m <= 63);
    (0..1u64 << m)
        .into_par_iter()
        .map(|bits| f(&SigmaVector::from_bits(m, bits)))
        .collect()
}
