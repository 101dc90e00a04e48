//! Numerical checks of the inequalities behind the complexity bounds.
//!
//! * block Hölder: `|w·Φ(x)| ≤ (Σ_k ‖w_k‖^q)^{1/q} (Σ_k ‖Φ_k(x)‖^r)^{1/r}`;
//! * first factor: `(Σ_k ‖w_k‖^q)^{1/q} ≤ √(αᵀK_μα)` for `w_k = μ_k Σ_i α_i Φ_k(x_i)`,
//!   any `q > 1` on the simplex, `q ≥ 4/3` on the sphere;
//! * moment bound: `E_σ[(σᵀKσ)^{r/2}] ≤ (r Tr[K])^{r/2}` for even `r`;
//! * multinomial: `(2r')!/Π(2t_i)! ≤ (2r')^{r'} r'!/Π t_i!`;
//! * Rademacher moments: `E[Π σ_i^{s_i}]` is 1 when every `s_i` is even, else 0.
//!
//! Hilbert-space norms and inner products are evaluated through Gram
//! identities: a block is a coefficient vector `c` over the sample, standing
//! for `Σ_i c_i Φ_k(x_i)`, so `⟨c, d⟩_k = cᵀK_kd`.

use nalgebra::DVector;
use num_bigint::BigUint;
use rand::Rng;
use serde::Serialize;

use crate::kernel::{
    combine, quadratic_form, CombinationWeights, Constraint, GramMatrix, KernelDictionary,
};
use crate::sigma::{map_full_enumeration, map_half_enumeration, map_trials, mean_and_stderr};
use crate::synth;
use crate::{Error, Result};

/// Relative slack allowed on real-valued inequalities.
pub const INEQUALITY_TOLERANCE: f64 = 1e-9;

/// Largest sample size for exact moment enumeration.
pub const MOMENT_EXACT_CAP: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InequalityResult {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

impl InequalityResult {
    /// `lhs ≤ rhs` up to `1e-9 · max(1, rhs)`.
    pub fn new(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs <= rhs + INEQUALITY_TOLERANCE * rhs.max(1.0),
            slack: rhs - lhs,
        }
    }

    /// `lhs ≤ rhs` decided on exact integers.
    pub fn exact(lhs: &BigUint, rhs: &BigUint) -> Self {
        let (l, r) = (to_f64(lhs), to_f64(rhs));
        Self {
            lhs: l,
            rhs: r,
            holds: lhs <= rhs,
            slack: r - l,
        }
    }

    /// `lhs = rhs` exactly.
    pub fn equality(lhs: f64, rhs: f64) -> Self {
        Self {
            lhs,
            rhs,
            holds: lhs == rhs,
            slack: rhs - lhs,
        }
    }
}

fn to_f64(v: &BigUint) -> f64 {
    v.to_string().parse().expect("decimal digits parse as f64")
}

/// A vector in the product of the `p` feature spaces, held as one coefficient
/// vector over the sample per kernel.
#[derive(Debug, Clone)]
pub struct BlockVector<'a> {
    dict: &'a KernelDictionary,
    blocks: Vec<DVector<f64>>,
}

impl<'a> BlockVector<'a> {
    pub fn new(dict: &'a KernelDictionary, blocks: Vec<Vec<f64>>) -> Result<Self> {
        if blocks.len() != dict.p() {
            return Err(Error::Input(format!(
                "{} blocks for {} kernels",
                blocks.len(),
                dict.p()
            )));
        }
        if let Some(b) = blocks.iter().find(|b| b.len() != dict.m()) {
            return Err(Error::Input(format!(
                "block of length {} for a sample of size {}",
                b.len(),
                dict.m()
            )));
        }
        Ok(Self {
            dict,
            blocks: blocks.into_iter().map(DVector::from_vec).collect(),
        })
    }

    /// `w` with `w_k = μ_k Σ_i α_i Φ_k(x_i)`.
    pub fn from_weights(dict: &'a KernelDictionary, mu: &[f64], alpha: &[f64]) -> Result<Self> {
        if mu.len() != dict.p() {
            return Err(Error::Input(format!("{} weights for {} kernels", mu.len(), dict.p())));
        }
        Self::new(
            dict,
            mu.iter()
                .map(|&w| alpha.iter().map(|a| w * a).collect())
                .collect(),
        )
    }

    /// `Φ(x_j)`, i.e. the unit coefficient vector `e_j` in every block.
    pub fn feature_at(dict: &'a KernelDictionary, j: usize) -> Result<Self> {
        if j >= dict.m() {
            return Err(Error::Input(format!(
                "point index {j} out of range for a sample of size {}",
                dict.m()
            )));
        }
        let mut e = vec![0.0; dict.m()];
        e[j] = 1.0;
        Self::new(dict, vec![e; dict.p()])
    }

    pub fn p(&self) -> usize {
        self.blocks.len()
    }

    /// `‖b_k‖` in the feature space of kernel `k`.
    pub fn block_norm(&self, k: usize) -> Result<f64> {
        Ok(quadratic_form(self.dict.gram(k), self.blocks[k].as_slice())?.sqrt())
    }

    pub fn block_norms(&self) -> Result<Vec<f64>> {
        (0..self.p()).map(|k| self.block_norm(k)).collect()
    }

    /// `Σ_k ⟨a_k, b_k⟩_k`.
    pub fn dot(&self, other: &BlockVector<'_>) -> Result<f64> {
        if other.p() != self.p() || other.dict.m() != self.dict.m() {
            return Err(Error::Input("block vectors over different dictionaries".into()));
        }
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .zip(self.dict.grams())
            .map(|((a, b), g)| a.dot(&(g.entries() * b)))
            .sum())
    }

    /// `(Σ_k ‖b_k‖^q)^{1/q}`.
    pub fn mixed_norm(&self, q: f64) -> Result<f64> {
        Ok(lq_norm(&self.block_norms()?, q))
    }
}

/// `(Σ v_k^q)^{1/q}` for nonnegative `v`, scaled by the largest entry.
fn lq_norm(v: &[f64], q: f64) -> f64 {
    let largest = v.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0.0;
    }
    largest * v.iter().map(|x| (x / largest).powf(q)).sum::<f64>().powf(1.0 / q)
}

/// Block Hölder inequality at the sample point `x_index`, with `r = q/(q-1)`.
pub fn check_holder_block(w: &BlockVector<'_>, x_index: usize, q: f64) -> Result<InequalityResult> {
    if !(q.is_finite() && q > 1.0) {
        return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
    }
    let r = q / (q - 1.0);
    let phi = BlockVector::feature_at(w.dict, x_index)?;
    let lhs = w.dot(&phi)?.abs();
    let rhs = w.mixed_norm(q)? * phi.mixed_norm(r)?;
    Ok(InequalityResult::new(lhs, rhs))
}

/// First-factor bound: `lhs = (Σ_k (μ_k² αᵀK_kα)^{q/2})^{1/q}`, `rhs = √(αᵀK_μα)`.
pub fn check_first_factor(
    mu: &CombinationWeights,
    alpha: &[f64],
    dict: &KernelDictionary,
    q: f64,
) -> Result<InequalityResult> {
    match mu.constraint() {
        Constraint::L1Simplex if !(q.is_finite() && q > 1.0) => {
            return Err(Error::Parameter(format!("q must exceed 1, got {q}")));
        }
        Constraint::L2Sphere if !(q.is_finite() && q >= 4.0 / 3.0 - 1e-12) => {
            return Err(Error::Parameter(format!(
                "the sphere first-factor bound needs q >= 4/3, got {q}"
            )));
        }
        Constraint::L2SphereSigned => {
            return Err(Error::Parameter(
                "the first-factor bound is stated for nonnegative weights".into(),
            ));
        }
        _ => {}
    }
    let lhs = BlockVector::from_weights(dict, mu.values(), alpha)?.mixed_norm(q)?;
    let rhs = quadratic_form(&combine(dict, mu)?, alpha)?.sqrt();
    Ok(InequalityResult::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MomentMode {
    /// All `2^m` sign vectors; `m ≤ 12`.
    Exact,
    MonteCarlo { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentCheck {
    pub result: InequalityResult,
    /// Standard error of `lhs`; zero in exact mode.
    pub stderr: f64,
}

/// `E_σ[(σᵀgσ)^{r/2}] ≤ (r Tr[g])^{r/2}`.
pub fn check_moment_bound(g: &GramMatrix, r: u32, mode: MomentMode) -> Result<MomentCheck> {
    if r == 0 || r % 2 == 1 {
        return Err(Error::Parameter(format!("r must be a positive even integer, got {r}")));
    }
    let half = (r / 2) as i32;
    let m = g.m();
    let moment = |s: &crate::sigma::SigmaVector| {
        quadratic_form(g, s.as_slice()).map(|v| v.powi(half))
    };
    let (lhs, stderr) = match mode {
        MomentMode::Exact => {
            if m > MOMENT_EXACT_CAP {
                return Err(Error::Capacity {
                    m,
                    cap: MOMENT_EXACT_CAP,
                });
            }
            let values = map_half_enumeration(m, moment)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            (mean_and_stderr(&values).0, 0.0)
        }
        MomentMode::MonteCarlo { trials, seed } => {
            if trials == 0 {
                return Err(Error::Parameter("need at least one trial".into()));
            }
            let values = map_trials(seed, trials, m, moment)
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            mean_and_stderr(&values)
        }
    };
    let rhs = (r as f64 * g.trace()).powi(half);
    Ok(MomentCheck {
        result: InequalityResult::new(lhs, rhs),
        stderr,
    })
}

fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::from(1u32), |acc, k| acc * k)
}

/// `(2r')!/Π(2t_i)! ≤ (2r')^{r'} · r'!/Π t_i!`, in exact integer arithmetic.
pub fn check_multinomial_footnote(r_prime: u32, t: &[u32]) -> Result<InequalityResult> {
    if r_prime > 10 {
        return Err(Error::Parameter(format!("r' must be at most 10, got {r_prime}")));
    }
    let total: u64 = t.iter().map(|&v| v as u64).sum();
    if t.is_empty() || total != r_prime as u64 {
        return Err(Error::Parameter(format!(
            "parts {t:?} sum to {total}, expected r' = {r_prime}"
        )));
    }
    let rp = r_prime as u64;
    let even_parts = t
        .iter()
        .fold(BigUint::from(1u32), |acc, &v| acc * factorial(2 * v as u64));
    let parts = t
        .iter()
        .fold(BigUint::from(1u32), |acc, &v| acc * factorial(v as u64));
    let lhs = factorial(2 * rp) / even_parts;
    let rhs = BigUint::from(2 * rp).pow(r_prime) * factorial(rp) / parts;
    Ok(InequalityResult::exact(&lhs, &rhs))
}

/// `|E[σ_1^{s_1} ⋯ σ_m^{s_m}]|` by enumeration against 1 (all `s_i` even) or 0.
pub fn check_vanishing_odd_moments(m: usize, s: &[u32]) -> Result<InequalityResult> {
    if m == 0 || m > 10 {
        return Err(Error::Parameter(format!("m must lie in 1..=10, got {m}")));
    }
    if s.len() != m {
        return Err(Error::Input(format!("{} exponents for m = {m}", s.len())));
    }
    let products = map_full_enumeration(m, |sigma| {
        let odd_negatives = sigma
            .as_slice()
            .iter()
            .zip(s)
            .filter(|(&v, &e)| v < 0.0 && e % 2 == 1)
            .count();
        if odd_negatives % 2 == 0 {
            1i64
        } else {
            -1
        }
    });
    let sum: i64 = products.iter().sum();
    let lhs = sum.unsigned_abs() as f64 / (1u64 << m) as f64;
    let rhs = if s.iter().all(|e| e % 2 == 0) { 1.0 } else { 0.0 };
    Ok(InequalityResult::equality(lhs, rhs))
}

/// Sizes of the randomized sweeps in [`run_suite`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub seed: u64,
    pub holder_instances: usize,
    pub first_factor_instances: usize,
    pub first_factor_q: Vec<f64>,
    pub moment_matrices: usize,
    pub moment_max_m: usize,
    pub moment_r: Vec<u32>,
    pub footnote_max_r_prime: u32,
    pub footnote_max_parts: usize,
    pub odd_max_m: usize,
    pub odd_max_total: u32,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            holder_instances: 200,
            first_factor_instances: 200,
            first_factor_q: vec![4.0 / 3.0, 1.5, 2.0, 4.0],
            moment_matrices: 50,
            moment_max_m: 10,
            moment_r: vec![2, 4, 6],
            footnote_max_r_prime: 6,
            footnote_max_parts: 6,
            odd_max_m: 5,
            odd_max_total: 6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub instances: usize,
    pub holding: usize,
    pub min_slack: f64,
    /// The instance with the smallest slack.
    pub tightest: Option<InequalityResult>,
    pub pass: bool,
}

impl CheckSummary {
    fn from_results(name: &str, results: &[InequalityResult]) -> Self {
        let holding = results.iter().filter(|r| r.holds).count();
        let tightest = results
            .iter()
            .copied()
            .min_by(|a, b| a.slack.total_cmp(&b.slack));
        Self {
            name: name.to_string(),
            instances: results.len(),
            holding,
            min_slack: tightest.map_or(0.0, |r| r.slack),
            tightest,
            pass: holding == results.len(),
        }
    }
}

/// Runs every check over its seeded sweep.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<CheckSummary>> {
    let mut rng = synth::rng(cfg.seed);
    let mut summaries = Vec::new();

    let mut holder = Vec::with_capacity(cfg.holder_instances);
    for i in 0..cfg.holder_instances {
        let (m, p) = (rng.random_range(1..=8), rng.random_range(1..=5));
        let dict = synth::random_dictionary(&mut rng, m, p)?;
        let constraint = if i % 2 == 0 {
            Constraint::L1Simplex
        } else {
            Constraint::L2Sphere
        };
        let mu = synth::random_weights(&mut rng, p, constraint);
        let alpha = synth::random_vector(&mut rng, m);
        let w = BlockVector::from_weights(&dict, mu.values(), &alpha)?;
        let q = rng.random_range(1.1..10.0);
        holder.push(check_holder_block(&w, rng.random_range(0..m), q)?);
    }
    summaries.push(CheckSummary::from_results("holder_block", &holder));

    for (name, constraint) in [
        ("first_factor_l1", Constraint::L1Simplex),
        ("first_factor_l2", Constraint::L2Sphere),
    ] {
        let mut results = Vec::new();
        for _ in 0..cfg.first_factor_instances {
            let (m, p) = (rng.random_range(1..=8), rng.random_range(1..=5));
            let dict = synth::random_dictionary(&mut rng, m, p)?;
            let mu = synth::random_weights(&mut rng, p, constraint);
            let alpha = synth::random_vector(&mut rng, m);
            for &q in &cfg.first_factor_q {
                results.push(check_first_factor(&mu, &alpha, &dict, q)?);
            }
        }
        summaries.push(CheckSummary::from_results(name, &results));
    }

    let mut moments = Vec::new();
    for _ in 0..cfg.moment_matrices {
        let m = rng.random_range(1..=cfg.moment_max_m);
        let dict = synth::random_dictionary(&mut rng, m, 1)?;
        for &r in &cfg.moment_r {
            moments.push(check_moment_bound(dict.gram(0), r, MomentMode::Exact)?.result);
        }
    }
    summaries.push(CheckSummary::from_results("moment_bound", &moments));

    let mut footnote = Vec::new();
    for r_prime in 1..=cfg.footnote_max_r_prime {
        for parts in 1..=cfg.footnote_max_parts {
            for t in compositions(r_prime, parts) {
                footnote.push(check_multinomial_footnote(r_prime, &t)?);
            }
        }
    }
    summaries.push(CheckSummary::from_results("multinomial_footnote", &footnote));

    let mut odd = Vec::new();
    for m in 1..=cfg.odd_max_m {
        for total in 0..=cfg.odd_max_total {
            for s in compositions(total, m) {
                odd.push(check_vanishing_odd_moments(m, &s)?);
            }
        }
    }
    summaries.push(CheckSummary::from_results("vanishing_odd_moments", &odd));

    Ok(summaries)
}

/// Ordered ways of writing `total` as `parts` nonnegative integers.
pub fn compositions(total: u32, parts: usize) -> Vec<Vec<u32>> {
    fn go(total: u32, parts: usize, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if parts == 1 {
            prefix.push(total);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in 0..=total {
            prefix.push(first);
            go(total - first, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        go(total, parts, &mut Vec::with_capacity(parts), &mut out);
    }
    out
}
