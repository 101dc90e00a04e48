//! Empirical Rademacher complexity of the combined-kernel hypothesis sets.
//!
//! For a sign vector `σ`, the supremum over `h` of `Σ_i σ_i h(x_i)` has a
//! closed form. Over the ball `αᵀK_μα ≤ 1/ρ²` the inner supremum of `σᵀK_μα`
//! is `√(σᵀK_μσ)/ρ`, and `σᵀK_μσ = Σ_k μ_k u_k` with `u_k = σᵀK_kσ ≥ 0`.
//! Maximizing over `μ` then gives
//!
//! * simplex: `max_k √u_k / ρ`;
//! * unit sphere: `‖u‖₂^{1/2} / ρ`, with or without the sign constraint on `μ`
//!   (the maximizer `u/‖u‖` is already nonnegative).
//!
//! [`brute_force_sup`] checks this reduction against a grid search over `μ`.

use serde::{Serialize, Serializer};

use crate::bounds::Family;
use crate::kernel::{
    combine_unconstrained, quadratic_form, Constraint, GramMatrix, KernelDictionary,
};
use crate::sigma::{map_half_enumeration, map_trials, mean_and_stderr, SigmaVector};
use crate::{Error, Result};

pub const DEFAULT_EXACT_CAP: usize = 14;

/// Largest accepted exact enumeration cap.
pub const MAX_EXACT_CAP: usize = 24;

/// A hypothesis set: the constraint on `μ` and the margin `ρ` of the α-ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HypothesisFamily {
    pub constraint: Constraint,
    pub rho: f64,
}

impl HypothesisFamily {
    pub fn new(constraint: Constraint, rho: f64) -> Result<Self> {
        if !(rho.is_finite() && rho > 0.0) {
            return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
        }
        Ok(Self { constraint, rho })
    }

    pub fn l1(rho: f64) -> Result<Self> {
        Self::new(Constraint::L1Simplex, rho)
    }

    pub fn l2(rho: f64) -> Result<Self> {
        Self::new(Constraint::L2Sphere, rho)
    }

    pub fn l2_signed(rho: f64) -> Result<Self> {
        Self::new(Constraint::L2SphereSigned, rho)
    }

    /// The family whose closed-form bounds cover this set.
    pub fn bound_family(&self) -> Family {
        match self.constraint {
            Constraint::L1Simplex => Family::L1,
            Constraint::L2Sphere | Constraint::L2SphereSigned => Family::L2,
        }
    }

    fn tag(&self) -> &'static str {
        match self.constraint {
            Constraint::L1Simplex => "L1",
            Constraint::L2Sphere => "L2",
            Constraint::L2SphereSigned => "L2Signed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    MonteCarlo { seed: u64 },
    ExactEnumeration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RademacherEstimate {
    pub value: f64,
    /// Zero for exact enumeration.
    pub stderr: f64,
    pub trials: u64,
    pub method: Method,
    pub family: HypothesisFamily,
    pub m: usize,
    pub p: usize,
}

#[derive(Serialize)]
struct EstimateJson {
    value: f64,
    stderr: f64,
    trials: u64,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    family: &'static str,
    rho: f64,
    m: usize,
    p: usize,
}

impl Serialize for RademacherEstimate {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (method, seed) = match self.method {
            Method::MonteCarlo { seed } => ("monteCarlo", Some(seed)),
            Method::ExactEnumeration => ("exactEnumeration", None),
        };
        EstimateJson {
            value: self.value,
            stderr: self.stderr,
            trials: self.trials,
            method,
            seed,
            family: self.family.tag(),
            rho: self.family.rho,
            m: self.m,
            p: self.p,
        }
        .serialize(serializer)
    }
}

/// `u_k = σᵀK_kσ` for every base kernel.
pub fn kernel_quadratic_forms(dict: &KernelDictionary, sigma: &SigmaVector) -> Result<Vec<f64>> {
    dict.grams()
        .iter()
        .map(|g| quadratic_form(g, sigma.as_slice()))
        .collect()
}

/// The supremum from the per-kernel forms `u`.
pub fn sup_from_forms(u: &[f64], family: &HypothesisFamily) -> f64 {
    let largest = u.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return 0.0;
    }
    let root = match family.constraint {
        Constraint::L1Simplex => largest.sqrt(),
        Constraint::L2Sphere | Constraint::L2SphereSigned => {
            // (Σ u_k²)^{1/4}, scaled by the largest entry
            let s: f64 = u.iter().map(|v| (v / largest) * (v / largest)).sum();
            largest.sqrt() * s.sqrt().sqrt()
        }
    };
    root / family.rho
}

/// `sup_{h ∈ family} Σ_i σ_i h(x_i)`.
pub fn sup_closed_form(
    dict: &KernelDictionary,
    sigma: &SigmaVector,
    family: &HypothesisFamily,
) -> Result<f64> {
    check_sigma(dict, sigma)?;
    let u = kernel_quadratic_forms(dict, sigma)?;
    Ok(sup_from_forms(&u, family))
}

fn check_sigma(dict: &KernelDictionary, sigma: &SigmaVector) -> Result<()> {
    if sigma.len() != dict.m() {
        return Err(Error::Input(format!(
            "sign vector of length {} for a sample of size {}",
            sigma.len(),
            dict.m()
        )));
    }
    Ok(())
}

/// Monte Carlo estimate of the empirical Rademacher complexity.
pub fn estimate_mc(
    dict: &KernelDictionary,
    family: &HypothesisFamily,
    n_trials: u64,
    seed: u64,
) -> Result<RademacherEstimate> {
    Ok(estimate_mc_families(dict, std::slice::from_ref(family), n_trials, seed)?.remove(0))
}

/// Monte Carlo estimates for several families from the same trials; each
/// `σᵀK_kσ` is computed once per trial.
pub fn estimate_mc_families(
    dict: &KernelDictionary,
    families: &[HypothesisFamily],
    n_trials: u64,
    seed: u64,
) -> Result<Vec<RademacherEstimate>> {
    if n_trials == 0 {
        return Err(Error::Parameter("need at least one trial".into()));
    }
    let m = dict.m();
    let per_trial = map_trials(seed, n_trials, m, |sigma| {
        kernel_quadratic_forms(dict, sigma)
            .map(|u| families.iter().map(|f| sup_from_forms(&u, f)).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(families
        .iter()
        .enumerate()
        .map(|(i, family)| {
            let sups: Vec<f64> = per_trial.iter().map(|row| row[i]).collect();
            let (mean, se) = mean_and_stderr(&sups);
            RademacherEstimate {
                value: mean / m as f64,
                stderr: se / m as f64,
                trials: n_trials,
                method: Method::MonteCarlo { seed },
                family: *family,
                m,
                p: dict.p(),
            }
        })
        .collect())
}

/// Exact expectation over all `2^m` sign vectors, using `sup(σ) = sup(-σ)` to
/// enumerate only half of them.
pub fn estimate_exact(
    dict: &KernelDictionary,
    family: &HypothesisFamily,
    exact_cap: usize,
) -> Result<RademacherEstimate> {
    Ok(estimate_exact_families(dict, std::slice::from_ref(family), exact_cap)?.remove(0))
}

pub fn estimate_exact_families(
    dict: &KernelDictionary,
    families: &[HypothesisFamily],
    exact_cap: usize,
) -> Result<Vec<RademacherEstimate>> {
    if exact_cap > MAX_EXACT_CAP {
        return Err(Error::Parameter(format!(
            "exact cap {exact_cap} exceeds the hard maximum {MAX_EXACT_CAP}"
        )));
    }
    let m = dict.m();
    if m > exact_cap {
        return Err(Error::Capacity { m, cap: exact_cap });
    }
    let per_sigma = map_half_enumeration(m, |sigma| {
        kernel_quadratic_forms(dict, sigma)
            .map(|u| families.iter().map(|f| sup_from_forms(&u, f)).collect::<Vec<_>>())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(families
        .iter()
        .enumerate()
        .map(|(i, family)| {
            let sups: Vec<f64> = per_sigma.iter().map(|row| row[i]).collect();
            let (mean, _) = mean_and_stderr(&sups);
            RademacherEstimate {
                value: mean / m as f64,
                stderr: 0.0,
                trials: 1u64 << m,
                method: Method::ExactEnumeration,
                family: *family,
                m,
                p: dict.p(),
            }
        })
        .collect())
}

/// Result of [`brute_force_sup`].
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSup {
    /// Best `√(σᵀK_μσ)/ρ` over the grid.
    pub grid_max: f64,
    /// `Σ_i σ_i h*(x_i)` for the explicit maximizer at the grid-best `μ`.
    pub achiever_check: f64,
    pub best_mu: Vec<f64>,
    /// `|ρ² α*ᵀK_μα* - 1|`; zero when degenerate.
    pub ball_residual: f64,
    /// `σᵀK_μσ = 0` at the grid-best `μ`, so no maximizer was formed.
    pub degenerate: bool,
}

/// Grid search over `μ` of the α-supremum, used to validate [`sup_closed_form`].
///
/// The grid holds the simplex points with coordinates in multiples of
/// `grid_step`; for the sphere families those points are normalized to unit
/// length (and, for the signed family, taken with every sign pattern).
pub fn brute_force_sup(
    dict: &KernelDictionary,
    sigma: &SigmaVector,
    family: &HypothesisFamily,
    grid_step: f64,
) -> Result<BruteForceSup> {
    check_sigma(dict, sigma)?;
    if dict.p() > 3 || dict.m() > 6 {
        return Err(Error::Parameter(format!(
            "brute force is limited to p <= 3 and m <= 6, got p = {}, m = {}",
            dict.p(),
            dict.m()
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 0.25) {
        return Err(Error::Parameter(format!(
            "grid step must lie in (0, 0.25], got {grid_step}"
        )));
    }
    let divisions = (1.0 / grid_step).round() as usize;
    let mut best: Option<(f64, Vec<f64>, GramMatrix, f64)> = None;
    for mu in weight_grid(dict.p(), divisions, family.constraint) {
        let k_mu = combine_unconstrained(dict, &mu)?;
        let q = match family.constraint {
            Constraint::L2SphereSigned => raw_quadratic_form(&k_mu, sigma.as_slice()).max(0.0),
            _ => quadratic_form(&k_mu, sigma.as_slice())?,
        };
        let value = q.sqrt() / family.rho;
        if best.as_ref().is_none_or(|b| value > b.0) {
            best = Some((value, mu, k_mu, q));
        }
    }
    let (grid_max, best_mu, k_mu, q) = best.expect("grid is never empty");
    if q <= 0.0 {
        return Ok(BruteForceSup {
            grid_max,
            achiever_check: 0.0,
            best_mu,
            ball_residual: 0.0,
            degenerate: true,
        });
    }
    let scale = 1.0 / (family.rho * q.sqrt());
    let alpha: Vec<f64> = sigma.as_slice().iter().map(|s| s * scale).collect();
    let ball = raw_quadratic_form(&k_mu, &alpha);
    let h = k_mu.entries() * nalgebra::DVector::from_column_slice(&alpha);
    let achiever_check = sigma.as_slice().iter().zip(h.iter()).map(|(s, v)| s * v).sum();
    Ok(BruteForceSup {
        grid_max,
        achiever_check,
        best_mu,
        ball_residual: (ball * family.rho * family.rho - 1.0).abs(),
        degenerate: false,
    })
}

fn raw_quadratic_form(g: &GramMatrix, v: &[f64]) -> f64 {
    let m = g.m();
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            total += v[i] * g.get(i, j) * v[j];
        }
    }
    total
}

fn weight_grid(p: usize, divisions: usize, constraint: Constraint) -> Vec<Vec<f64>> {
    let mut counts = Vec::new();
    compositions(p, divisions, &mut Vec::with_capacity(p), &mut counts);
    let mut grid = Vec::new();
    for c in counts {
        let mu: Vec<f64> = c.iter().map(|&k| k as f64 / divisions as f64).collect();
        match constraint {
            Constraint::L1Simplex => grid.push(mu),
            Constraint::L2Sphere => grid.push(normalized(&mu)),
            Constraint::L2SphereSigned => {
                let unit = normalized(&mu);
                let support: Vec<usize> = (0..p).filter(|&k| c[k] > 0).collect();
                for pattern in 0..1u32 << support.len() {
                    let mut signed = unit.clone();
                    for (bit, &k) in support.iter().enumerate() {
                        if pattern >> bit & 1 == 1 {
                            signed[k] = -signed[k];
                        }
                    }
                    grid.push(signed);
                }
            }
        }
    }
    grid
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / norm).collect()
}

/// All ways of writing `total` as an ordered sum of `parts` nonnegative integers.
fn compositions(parts: usize, total: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in 0..=total {
        prefix.push(first);
        compositions(parts - 1, total - first, prefix, out);
        prefix.pop();
    }
}
