//! A minimal multiple-kernel classifier.
//!
//! Hypotheses have the form `h(x) = Σ_i α_i K_μ(x_i, x)` with no offset. The
//! trainer alternates between
//!
//! 1. fixed `μ`: projected gradient ascent on the soft-margin dual
//!    `D(β; μ) = Σ_i β_i - ½ Σ_ij β_i β_j y_i y_j K_μ(x_i, x_j)` over the box
//!    `[0, C]^m` (there is no equality constraint without an offset);
//! 2. fixed `β`: a projected gradient step on `J(μ) = max_β D(β; μ)` with
//!    backtracking, projected onto the simplex (L1) or the nonnegative unit
//!    sphere (L2).
//!
//! A `μ` step is accepted only if the recorded objective does not increase,
//! so the training log is nonincreasing.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::Family;
use crate::kernel::{
    combine, combine_unconstrained, cross_gram, CombinationWeights, Constraint, KernelDictionary,
    KernelSpec, Sample,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainerConfig {
    /// Box bound `C` on the dual variables.
    pub reg_c: f64,
    pub max_outer: usize,
    /// Stop when the relative objective decrease falls below this.
    pub tol: f64,
    pub inner_max: usize,
    pub inner_tol: f64,
    /// Largest per-coordinate move of the first trial `μ` step.
    pub mu_step: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            reg_c: 1.0,
            max_outer: 100,
            tol: 1e-6,
            inner_max: 20_000,
            inner_tol: 1e-10,
            mu_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrainerLog {
    /// `J(μ)` after each accepted outer iteration, starting at the initial `μ`.
    pub objectives: Vec<f64>,
    pub outer_iterations: usize,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// A trained hypothesis `h(x) = Σ_i α_i Σ_k μ_k K_k(x_i, x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", try_from = "ModelJson", into = "ModelJson")]
pub struct Model {
    pub family: Family,
    pub kernel_specs: Vec<KernelSpec>,
    pub mu: CombinationWeights,
    pub alpha: Vec<f64>,
    pub train_sample_hash: String,
    pub trainer_log: Option<TrainerLog>,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct ModelJson {
    family: Family,
    kernel_specs: Vec<KernelSpec>,
    mu: Vec<f64>,
    alpha: Vec<f64>,
    train_sample_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    trainer_log: Option<TrainerLog>,
}

impl TryFrom<ModelJson> for Model {
    type Error = Error;
    fn try_from(raw: ModelJson) -> Result<Self> {
        if let Some(a) = raw.alpha.iter().find(|a| !a.is_finite()) {
            return Err(Error::Data(format!("model has non-finite alpha {a}")));
        }
        Ok(Model {
            family: raw.family,
            kernel_specs: raw.kernel_specs,
            mu: CombinationWeights::new(raw.mu, family_constraint(raw.family))?,
            alpha: raw.alpha,
            train_sample_hash: raw.train_sample_hash,
            trainer_log: raw.trainer_log,
        })
    }
}

impl From<Model> for ModelJson {
    fn from(m: Model) -> Self {
        ModelJson {
            family: m.family,
            kernel_specs: m.kernel_specs,
            mu: m.mu.values().to_vec(),
            alpha: m.alpha,
            train_sample_hash: m.train_sample_hash,
            trainer_log: m.trainer_log,
        }
    }
}

/// The weight constraint of a bound family.
pub fn family_constraint(family: Family) -> Constraint {
    match family {
        Family::L1 => Constraint::L1Simplex,
        Family::L2 => Constraint::L2Sphere,
    }
}

/// Euclidean projection onto the probability simplex (sort-based).
pub fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            theta = t;
        }
    }
    v.iter().map(|x| (x - theta).max(0.0)).collect()
}

/// Clamps to the nonnegative orthant and normalizes; the zero vector maps to
/// the uniform point.
pub fn project_sphere(v: &[f64]) -> Vec<f64> {
    let clamped: Vec<f64> = v.iter().map(|x| x.max(0.0)).collect();
    let norm = clamped.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        vec![1.0 / (v.len() as f64).sqrt(); v.len()]
    } else {
        clamped.iter().map(|x| x / norm).collect()
    }
}

fn project(v: &[f64], family: Family) -> Vec<f64> {
    match family {
        Family::L1 => project_simplex(v),
        Family::L2 => project_sphere(v),
    }
}

struct DualProblem {
    /// `Q = diag(y) K_μ diag(y)`
    q: DMatrix<f64>,
    step: f64,
}

impl DualProblem {
    fn new(k_mu: &crate::kernel::GramMatrix, y: &DVector<f64>) -> Self {
        let m = y.len();
        let q = DMatrix::from_fn(m, m, |i, j| y[i] * k_mu.get(i, j) * y[j]);
        let largest = k_mu.spectrum().1;
        let step = if largest > 0.0 { 1.0 / largest } else { 1.0 };
        Self { q, step }
    }

    fn objective(&self, beta: &DVector<f64>) -> f64 {
        beta.sum() - 0.5 * beta.dot(&(&self.q * beta))
    }

    /// Projected gradient ascent from `beta` on the box `[0, c]^m`.
    fn solve(&self, mut beta: DVector<f64>, c: f64, max_iter: usize, tol: f64) -> DVector<f64> {
        for _ in 0..max_iter {
            let grad = DVector::from_element(beta.len(), 1.0) - &self.q * &beta;
            let next = (&beta + grad * self.step).map(|b| b.clamp(0.0, c));
            let moved = (&next - &beta).amax();
            beta = next;
            if moved <= tol * c.max(1.0) {
                break;
            }
        }
        beta
    }
}

/// Trains a combined-kernel classifier on a labelled sample.
pub fn train(
    sample: &Sample,
    dict: &KernelDictionary,
    family: Family,
    cfg: &TrainerConfig,
) -> Result<Model> {
    let labels = sample
        .labels()
        .ok_or_else(|| Error::Input("training needs a labelled sample".into()))?;
    if sample.len() != dict.m() {
        return Err(Error::Input(format!(
            "sample of size {} for a dictionary of size {}",
            sample.len(),
            dict.m()
        )));
    }
    if labels.iter().all(|&y| y == labels[0]) {
        return Err(Error::DegenerateData("all labels are identical".into()));
    }
    if !(cfg.reg_c.is_finite() && cfg.reg_c > 0.0) {
        return Err(Error::Parameter(format!("regC must be positive, got {}", cfg.reg_c)));
    }
    if cfg.max_outer == 0 || cfg.inner_max == 0 || !(cfg.tol >= 0.0) || !(cfg.mu_step > 0.0) {
        return Err(Error::Parameter("invalid trainer iteration settings".into()));
    }

    let p = dict.p();
    let y = DVector::from_column_slice(labels);
    let mut mu = CombinationWeights::uniform(p, family_constraint(family))?
        .values()
        .to_vec();
    let solve = |mu: &[f64], warm: DVector<f64>| -> Result<(DVector<f64>, f64)> {
        let dual = DualProblem::new(&combine_unconstrained(dict, mu)?, &y);
        let beta = dual.solve(warm, cfg.reg_c, cfg.inner_max, cfg.inner_tol);
        let objective = dual.objective(&beta);
        Ok((beta, objective))
    };
    let (mut beta, mut objective) = solve(&mu, DVector::zeros(dict.m()))?;
    let mut objectives = vec![objective];
    let mut converged = false;
    let mut outer = 0;

    while outer < cfg.max_outer {
        outer += 1;
        let yb = y.component_mul(&beta);
        // ∂J/∂μ_k = -½ (y∘β)ᵀ K_k (y∘β)
        let grad: Vec<f64> = dict
            .grams()
            .iter()
            .map(|g| -0.5 * yb.dot(&(g.entries() * &yb)))
            .collect();
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        if scale == 0.0 {
            converged = true;
            break;
        }
        let mut eta = cfg.mu_step / scale;
        let mut accepted = None;
        for _ in 0..40 {
            let proposal: Vec<f64> = mu.iter().zip(&grad).map(|(m, g)| m - eta * g).collect();
            let proposal = project(&proposal, family);
            let moved = proposal
                .iter()
                .zip(&mu)
                .fold(0.0f64, |a, (n, o)| a.max((n - o).abs()));
            if moved < 1e-14 {
                break;
            }
            let (next_beta, next_objective) = solve(&proposal, beta.clone())?;
            if next_objective <= objective {
                accepted = Some((proposal, next_beta, next_objective));
                break;
            }
            eta *= 0.5;
        }
        let Some((next_mu, next_beta, next_objective)) = accepted else {
            converged = true;
            break;
        };
        let decrease = (objective - next_objective) / objective.abs().max(1e-12);
        mu = next_mu;
        beta = next_beta;
        objective = next_objective;
        objectives.push(objective);
        if decrease < cfg.tol {
            converged = true;
            break;
        }
    }

    let warning = (!converged).then(|| {
        format!(
            "stopped after {} outer iterations without reaching tolerance {}",
            cfg.max_outer, cfg.tol
        )
    });
    let alpha: Vec<f64> = y.component_mul(&beta).iter().copied().collect();
    Ok(Model {
        family,
        kernel_specs: dict.specs().map(<[_]>::to_vec).unwrap_or_default(),
        mu: CombinationWeights::new(mu, family_constraint(family))?,
        alpha,
        train_sample_hash: sample.content_hash(),
        trainer_log: Some(TrainerLog {
            objectives,
            outer_iterations: outer,
            converged,
            warning,
        }),
    })
}

/// Scores from per-kernel cross-Gram matrices (query rows × training columns):
/// `score_j = Σ_k μ_k (K_k^cross α)_j`.
pub fn predict(model: &Model, cross_grams: &[DMatrix<f64>]) -> Result<Vec<f64>> {
    if cross_grams.len() != model.mu.len() {
        return Err(Error::Input(format!(
            "{} cross-Gram matrices for {} kernels",
            cross_grams.len(),
            model.mu.len()
        )));
    }
    let alpha = DVector::from_column_slice(&model.alpha);
    let rows = cross_grams.first().map_or(0, |g| g.nrows());
    let mut scores = DVector::zeros(rows);
    for (g, &w) in cross_grams.iter().zip(model.mu.values()) {
        if g.ncols() != alpha.len() || g.nrows() != rows {
            return Err(Error::Input(format!(
                "cross-Gram matrix is {}x{}, expected {rows}x{}",
                g.nrows(),
                g.ncols(),
                alpha.len()
            )));
        }
        scores += (g * &alpha) * w;
    }
    Ok(scores.iter().copied().collect())
}

/// Scores on new points, evaluating the model's kernel specs against the
/// training points.
pub fn predict_points(model: &Model, train: &Sample, query: &[Vec<f64>]) -> Result<Vec<f64>> {
    if model.kernel_specs.len() != model.mu.len() {
        return Err(Error::Input("model does not carry its kernel specs".into()));
    }
    if train.len() != model.alpha.len() {
        return Err(Error::Input(format!(
            "training sample of size {} for a model with {} coefficients",
            train.len(),
            model.alpha.len()
        )));
    }
    let grams = model
        .kernel_specs
        .iter()
        .map(|s| cross_gram(train.points(), query, s))
        .collect::<Result<Vec<_>>>()?;
    predict(model, &grams)
}

/// Scores on the training sample: `K_μ α`.
pub fn training_scores(model: &Model, dict: &KernelDictionary) -> Result<Vec<f64>> {
    if model.alpha.len() != dict.m() {
        return Err(Error::Input(format!(
            "model with {} coefficients for a dictionary of size {}",
            model.alpha.len(),
            dict.m()
        )));
    }
    let k = combine(dict, &model.mu)?;
    let scores = k.entries() * DVector::from_column_slice(&model.alpha);
    Ok(scores.iter().copied().collect())
}

/// Fraction of points with `y h(x) ≤ ρ`; the boundary counts as a violation.
pub fn margin_loss(scores: &[f64], labels: &[f64], rho: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Parameter("margin loss of an empty sample".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Parameter(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if !(rho.is_finite() && rho > 0.0) {
        return Err(Error::Parameter(format!("rho must be positive, got {rho}")));
    }
    let violations = scores
        .iter()
        .zip(labels)
        .filter(|(s, y)| *s * *y <= rho)
        .count();
    Ok(violations as f64 / scores.len() as f64)
}

/// Fraction of points with `y h(x) ≤ 0`.
pub fn error_rate(scores: &[f64], labels: &[f64]) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Parameter("scores and labels must be non-empty and aligned".into()));
    }
    let wrong = scores.iter().zip(labels).filter(|(s, y)| *s * *y <= 0.0).count();
    Ok(wrong as f64 / scores.len() as f64)
}
