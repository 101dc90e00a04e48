//! Samples, base kernels, Gram matrices and kernel dictionaries.
//!
//! A [`KernelDictionary`] holds the `p` Gram matrices of the base kernels on a
//! shared sample together with the kernel ceiling `R²`, an upper bound on
//! every diagonal entry `K_k(x, x)`. [`CombinationWeights`] carry the mixture
//! vector `μ` and the constraint set it is drawn from.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::sync::OnceLock;

use crate::{Error, Result};

/// Relative tolerance on the minimum eigenvalue used when validating Gram matrices.
pub const PSD_TOLERANCE: f64 = 1e-8;

/// Relative tolerance on `|K_ij - K_ji|`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Tolerance on the constraint satisfied by combination weights.
pub const FEASIBILITY_TOLERANCE: f64 = 1e-9;

/// Negative quadratic forms down to `-CLAMP_TOLERANCE * |v|² * maxEig` are
/// treated as round-off and clamped to zero.
pub const CLAMP_TOLERANCE: f64 = 1e-12;

/// A fixed sample `x_1, ..., x_m` with optional ±1 labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    points: Vec<Vec<f64>>,
    labels: Option<Vec<f64>>,
}

impl Sample {
    pub fn new(points: Vec<Vec<f64>>, labels: Option<Vec<f64>>) -> Result<Self> {
        let Some(first) = points.first() else {
            return Err(Error::Input("sample has no points".into()));
        };
        let dim = first.len();
        if dim == 0 {
            return Err(Error::Input("points must have dimension at least 1".into()));
        }
        for (i, x) in points.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::Input(format!(
                    "point {i} has dimension {} but point 0 has dimension {dim}",
                    x.len()
                )));
            }
            if let Some(v) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::Data(format!("point {i} has non-finite coordinate {v}")));
            }
        }
        if let Some(labels) = &labels {
            if labels.len() != points.len() {
                return Err(Error::Input(format!(
                    "{} labels for {} points",
                    labels.len(),
                    points.len()
                )));
            }
            if let Some((i, y)) = labels
                .iter()
                .enumerate()
                .find(|(_, &y)| y != 1.0 && y != -1.0)
            {
                return Err(Error::Input(format!("label {i} is {y}, expected -1 or +1")));
            }
        }
        Ok(Self { points, labels })
    }

    pub fn unlabeled(points: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(points, None)
    }

    /// Number of points `m`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    /// SHA-256 over the bit patterns of the points and labels.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.len() as u64).to_le_bytes());
        h.update((self.dim() as u64).to_le_bytes());
        for x in &self.points {
            for v in x {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        if let Some(labels) = &self.labels {
            for y in labels {
                h.update(y.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// The shipped kernel families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelKind {
    /// `k(x, y) = x·y`
    Linear,
    /// `k(x, y) = (x·y + offset)^degree`
    Polynomial { degree: u32, offset: f64 },
    /// `k(x, y) = exp(-gamma |x - y|²)`
    Gaussian { gamma: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: KernelKind,
}

impl KernelSpec {
    pub fn linear(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: KernelKind::Linear,
        }
    }

    pub fn polynomial(name: impl Into<String>, degree: u32, offset: f64) -> Self {
        Self {
            name: name.into(),
            kind: KernelKind::Polynomial { degree, offset },
        }
    }

    pub fn gaussian(name: impl Into<String>, gamma: f64) -> Self {
        Self {
            name: name.into(),
            kind: KernelKind::Gaussian { gamma },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Parameter("kernel name must not be empty".into()));
        }
        match self.kind {
            KernelKind::Linear => Ok(()),
            KernelKind::Polynomial { degree, offset } => {
                if degree == 0 {
                    Err(Error::Parameter(format!(
                        "kernel `{}`: polynomial degree must be positive",
                        self.name
                    )))
                } else if !(offset.is_finite() && offset >= 0.0) {
                    Err(Error::Parameter(format!(
                        "kernel `{}`: polynomial offset must be >= 0, got {offset}",
                        self.name
                    )))
                } else {
                    Ok(())
                }
            }
            KernelKind::Gaussian { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(Error::Parameter(format!(
                        "kernel `{}`: gaussian gamma must be > 0, got {gamma}",
                        self.name
                    )))
                }
            }
        }
    }

    /// Evaluates the kernel. Sums run in index order so results do not
    /// depend on how callers schedule the evaluations.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.kind {
            KernelKind::Linear => dot(x, y),
            KernelKind::Polynomial { degree, offset } => {
                (dot(x, y) + offset).powi(degree as i32)
            }
            KernelKind::Gaussian { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// An `m × m` kernel matrix with its cached trace.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: DMatrix<f64>,
    trace: f64,
    spectrum: OnceLock<(f64, f64)>,
}

impl GramMatrix {
    /// Wraps a square matrix. Symmetry and semi-definiteness are not checked
    /// here; see [`validate_psd`].
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::Input(format!(
                "Gram matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.nrows() == 0 {
            return Err(Error::Input("Gram matrix is empty".into()));
        }
        let trace = (0..entries.nrows()).map(|i| entries[(i, i)]).sum();
        Ok(Self {
            entries,
            trace,
            spectrum: OnceLock::new(),
        })
    }

    pub fn from_row_slice(m: usize, data: &[f64]) -> Result<Self> {
        if data.len() != m * m {
            return Err(Error::Input(format!(
                "expected {} entries for a {m}x{m} matrix, got {}",
                m * m,
                data.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(m, m, data))
    }

    pub fn identity(m: usize) -> Self {
        Self::from_matrix(DMatrix::identity(m, m)).expect("identity is square")
    }

    pub fn m(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.trace
    }

    pub fn max_diagonal(&self) -> f64 {
        (0..self.m())
            .map(|i| self.entries[(i, i)])
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Returns a copy with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self::from_matrix(&self.entries * c).expect("scaling keeps the shape")
    }

    /// `(min eigenvalue, max eigenvalue)` of the symmetric part, computed once.
    pub fn spectrum(&self) -> (f64, f64) {
        *self.spectrum.get_or_init(|| {
            let sym = (&self.entries + self.entries.transpose()) * 0.5;
            let eig = sym.symmetric_eigenvalues();
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min, max)
        })
    }

    fn symmetric_defect(&self) -> f64 {
        let m = self.m();
        let mut defect = 0.0f64;
        let mut scale = 1.0f64;
        for j in 0..m {
            for i in 0..m {
                scale = scale.max(self.entries[(i, j)].abs());
                if i < j {
                    defect = defect.max((self.entries[(i, j)] - self.entries[(j, i)]).abs());
                }
            }
        }
        defect / scale
    }
}

/// Outcome of [`validate_psd`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdDiagnostics {
    pub min_eig: f64,
    pub max_eig: f64,
    pub symmetric_defect: f64,
    pub pass: bool,
}

/// Checks that `g` is symmetric and positive semi-definite up to `tol`,
/// relative to `max(maxEig, 1)`.
pub fn validate_psd(g: &GramMatrix, tol: f64) -> Result<PsdDiagnostics> {
    if let Some(v) = g.entries.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!("Gram matrix has non-finite entry {v}")));
    }
    let (min_eig, max_eig) = g.spectrum();
    let symmetric_defect = g.symmetric_defect();
    let pass = min_eig >= -tol * max_eig.max(1.0) && symmetric_defect <= tol;
    Ok(PsdDiagnostics {
        min_eig,
        max_eig,
        symmetric_defect,
        pass,
    })
}

/// Evaluates `spec` on every pair of points. The upper triangle is computed
/// (rows in parallel) and mirrored, so the result is exactly symmetric.
pub fn compute_gram(sample: &Sample, spec: &KernelSpec) -> Result<GramMatrix> {
    spec.validate()?;
    let points = sample.points();
    let m = points.len();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| spec.eval(&points[i], &points[j])).collect())
        .collect();
    let mut entries = DMatrix::zeros(m, m);
    for (i, row) in rows.iter().enumerate() {
        for (offset, &v) in row.iter().enumerate() {
            let j = i + offset;
            entries[(i, j)] = v;
            entries[(j, i)] = v;
        }
    }
    if let Some(v) = entries.iter().find(|v| !v.is_finite()) {
        return Err(Error::Data(format!(
            "kernel `{}` produced non-finite value {v}",
            spec.name
        )));
    }
    GramMatrix::from_matrix(entries)
}

/// Kernel values between query points (rows) and training points (columns).
pub fn cross_gram(train: &[Vec<f64>], query: &[Vec<f64>], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let dim = train.first().map(Vec::len).unwrap_or(0);
    if let Some((i, q)) = query.iter().enumerate().find(|(_, q)| q.len() != dim) {
        return Err(Error::Input(format!(
            "query point {i} has dimension {} but training points have dimension {dim}",
            q.len()
        )));
    }
    let rows: Vec<Vec<f64>> = query
        .par_iter()
        .map(|q| train.iter().map(|x| spec.eval(q, x)).collect())
        .collect();
    Ok(DMatrix::from_fn(query.len(), train.len(), |i, j| rows[i][j]))
}

/// How the kernel ceiling `R²` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CeilingPolicy {
    /// Largest diagonal entry across all Gram matrices. This is a lower proxy
    /// for a bound that holds over the whole input space.
    FromSample,
    /// An analytic bound supplied by the caller (e.g. 1 for gaussian kernels).
    UserValue(f64),
}

/// The `p` base Gram matrices on one sample.
#[derive(Debug, Clone)]
pub struct KernelDictionary {
    names: Vec<String>,
    specs: Option<Vec<KernelSpec>>,
    grams: Vec<GramMatrix>,
    kernel_ceiling_r2: f64,
}

/// Computes the Gram matrix of every spec on `sample` and assembles a dictionary.
pub fn build_dictionary(
    sample: &Sample,
    specs: &[KernelSpec],
    ceiling: CeilingPolicy,
) -> Result<KernelDictionary> {
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|t| t.name == s.name) {
            return Err(Error::Parameter(format!("duplicate kernel name `{}`", s.name)));
        }
    }
    let grams = specs
        .iter()
        .map(|s| compute_gram(sample, s))
        .collect::<Result<Vec<_>>>()?;
    let names = specs.iter().map(|s| s.name.clone()).collect();
    let mut dict = KernelDictionary::from_grams(names, grams, ceiling)?;
    dict.specs = Some(specs.to_vec());
    Ok(dict)
}

impl KernelDictionary {
    /// Assembles a dictionary from precomputed Gram matrices. Every matrix
    /// must pass [`validate_psd`] at [`PSD_TOLERANCE`].
    pub fn from_grams(
        names: Vec<String>,
        grams: Vec<GramMatrix>,
        ceiling: CeilingPolicy,
    ) -> Result<Self> {
        if grams.is_empty() {
            return Err(Error::Parameter("a dictionary needs at least one kernel".into()));
        }
        if names.len() != grams.len() {
            return Err(Error::Input(format!(
                "{} names for {} Gram matrices",
                names.len(),
                grams.len()
            )));
        }
        let m = grams[0].m();
        for (name, g) in names.iter().zip(&grams) {
            if g.m() != m {
                return Err(Error::Input(format!(
                    "kernel `{name}` has size {} but the dictionary has size {m}",
                    g.m()
                )));
            }
            let diag = validate_psd(g, PSD_TOLERANCE)?;
            if !diag.pass {
                return Err(Error::NotPsd {
                    kernel: name.clone(),
                    min_eig: diag.min_eig,
                    max_eig: diag.max_eig,
                    symmetric_defect: diag.symmetric_defect,
                });
            }
        }
        let sample_max = grams
            .iter()
            .map(GramMatrix::max_diagonal)
            .fold(f64::NEG_INFINITY, f64::max);
        let kernel_ceiling_r2 = match ceiling {
            CeilingPolicy::FromSample => sample_max,
            CeilingPolicy::UserValue(v) => {
                if !(v >= sample_max) {
                    return Err(Error::Parameter(format!(
                        "kernel ceiling {v} is below the largest diagonal entry {sample_max}"
                    )));
                }
                v
            }
        };
        if !(kernel_ceiling_r2 > 0.0 && kernel_ceiling_r2.is_finite()) {
            return Err(Error::Parameter(format!(
                "kernel ceiling must be positive and finite, got {kernel_ceiling_r2}"
            )));
        }
        Ok(Self {
            names,
            specs: None,
            grams,
            kernel_ceiling_r2,
        })
    }

    /// Number of base kernels `p`.
    pub fn p(&self) -> usize {
        self.grams.len()
    }

    /// Sample size `m`.
    pub fn m(&self) -> usize {
        self.grams[0].m()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn specs(&self) -> Option<&[KernelSpec]> {
        self.specs.as_deref()
    }

    pub fn grams(&self) -> &[GramMatrix] {
        &self.grams
    }

    pub fn gram(&self, k: usize) -> &GramMatrix {
        &self.grams[k]
    }

    pub fn traces(&self) -> Vec<f64> {
        self.grams.iter().map(GramMatrix::trace).collect()
    }

    pub fn kernel_ceiling_r2(&self) -> f64 {
        self.kernel_ceiling_r2
    }

    /// The first `p` kernels, keeping the ceiling of the full dictionary.
    pub fn prefix(&self, p: usize) -> Result<Self> {
        if p == 0 || p > self.p() {
            return Err(Error::Parameter(format!(
                "cannot take {p} kernels from a dictionary of {}",
                self.p()
            )));
        }
        Ok(Self {
            names: self.names[..p].to_vec(),
            specs: self.specs.as_ref().map(|s| s[..p].to_vec()),
            grams: self.grams[..p].to_vec(),
            kernel_ceiling_r2: self.kernel_ceiling_r2,
        })
    }

    /// SHA-256 over names, ceiling and Gram entries.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.m() as u64).to_le_bytes());
        h.update((self.p() as u64).to_le_bytes());
        h.update(self.kernel_ceiling_r2.to_bits().to_le_bytes());
        for (name, g) in self.names.iter().zip(&self.grams) {
            h.update((name.len() as u64).to_le_bytes());
            h.update(name.as_bytes());
            for v in g.entries.iter() {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// `vᵀ g v`. Slightly negative values caused by round-off on PSD matrices are
/// clamped to zero; anything more negative is reported as a PSD violation.
pub fn quadratic_form(g: &GramMatrix, v: &[f64]) -> Result<f64> {
    let m = g.m();
    if v.len() != m {
        return Err(Error::Input(format!(
            "vector of length {} for a {m}x{m} Gram matrix",
            v.len()
        )));
    }
    let mut raw = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        let col = g.entries.column(j);
        let mut s = 0.0;
        for (i, &vi) in v.iter().enumerate() {
            s += col[i] * vi;
        }
        raw += vj * s;
    }
    if raw >= 0.0 {
        return Ok(raw);
    }
    if raw.is_nan() {
        return Err(Error::Data("quadratic form is NaN".into()));
    }
    let norm2: f64 = v.iter().map(|x| x * x).sum();
    let tolerance = CLAMP_TOLERANCE * norm2 * g.spectrum().1.max(0.0);
    if raw >= -tolerance {
        Ok(0.0)
    } else {
        Err(Error::PsdViolation {
            value: raw,
            tolerance,
        })
    }
}

/// The constraint set a mixture vector `μ` belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Constraint {
    /// `μ ≥ 0, Σ μ_k = 1`
    #[serde(rename = "l1-simplex")]
    L1Simplex,
    /// `μ ≥ 0, Σ μ_k² = 1`
    #[serde(rename = "l2-sphere")]
    L2Sphere,
    /// `Σ μ_k² = 1` with no sign constraint
    #[serde(rename = "l2-sphere-signed")]
    L2SphereSigned,
}

impl Constraint {
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::L1Simplex => "l1-simplex",
            Constraint::L2Sphere => "l2-sphere",
            Constraint::L2SphereSigned => "l2-sphere-signed",
        }
    }

    pub fn is_feasible(self, mu: &[f64]) -> bool {
        if mu.is_empty() || mu.iter().any(|v| !v.is_finite()) {
            return false;
        }
        let nonneg = mu.iter().all(|&v| v >= -FEASIBILITY_TOLERANCE);
        match self {
            Constraint::L1Simplex => {
                nonneg && (mu.iter().sum::<f64>() - 1.0).abs() <= FEASIBILITY_TOLERANCE
            }
            Constraint::L2Sphere => nonneg && (sum_sq(mu) - 1.0).abs() <= FEASIBILITY_TOLERANCE,
            Constraint::L2SphereSigned => (sum_sq(mu) - 1.0).abs() <= FEASIBILITY_TOLERANCE,
        }
    }
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Mixture weights `μ` tagged with their constraint. Always feasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWeights", into = "RawWeights")]
pub struct CombinationWeights {
    values: Vec<f64>,
    constraint: Constraint,
}

#[derive(Serialize, Deserialize)]
struct RawWeights {
    values: Vec<f64>,
    constraint: Constraint,
}

impl TryFrom<RawWeights> for CombinationWeights {
    type Error = Error;
    fn try_from(raw: RawWeights) -> Result<Self> {
        Self::new(raw.values, raw.constraint)
    }
}

impl From<CombinationWeights> for RawWeights {
    fn from(w: CombinationWeights) -> Self {
        RawWeights {
            values: w.values,
            constraint: w.constraint,
        }
    }
}

impl CombinationWeights {
    pub fn new(values: Vec<f64>, constraint: Constraint) -> Result<Self> {
        if !constraint.is_feasible(&values) {
            return Err(Error::Constraint(format!(
                "weights {values:?} are not feasible for {} (sum {}, sum of squares {})",
                constraint.as_str(),
                values.iter().sum::<f64>(),
                sum_sq(&values)
            )));
        }
        Ok(Self { values, constraint })
    }

    /// Equal weights: `1/p` on the simplex, `1/√p` on the sphere.
    pub fn uniform(p: usize, constraint: Constraint) -> Result<Self> {
        if p == 0 {
            return Err(Error::Parameter("need at least one kernel".into()));
        }
        let v = match constraint {
            Constraint::L1Simplex => 1.0 / p as f64,
            _ => 1.0 / (p as f64).sqrt(),
        };
        Self::new(vec![v; p], constraint)
    }

    /// The unit vector `e_k`, feasible for every constraint.
    pub fn vertex(p: usize, k: usize, constraint: Constraint) -> Result<Self> {
        if k >= p {
            return Err(Error::Parameter(format!("vertex {k} out of range for p = {p}")));
        }
        let mut values = vec![0.0; p];
        values[k] = 1.0;
        Self::new(values, constraint)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn constraint(&self) -> Constraint {
        self.constraint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `K_μ = Σ_k μ_k K_k`.
pub fn combine(dict: &KernelDictionary, mu: &CombinationWeights) -> Result<GramMatrix> {
    if mu.len() != dict.p() {
        return Err(Error::Constraint(format!(
            "{} weights for {} kernels",
            mu.len(),
            dict.p()
        )));
    }
    combine_unconstrained(dict, mu.values())
}

/// Entrywise `Σ_k weights_k K_k` with no constraint on the weights.
pub fn combine_unconstrained(dict: &KernelDictionary, weights: &[f64]) -> Result<GramMatrix> {
    if weights.len() != dict.p() {
        return Err(Error::Input(format!(
            "{} weights for {} kernels",
            weights.len(),
            dict.p()
        )));
    }
    let m = dict.m();
    let mut acc = DMatrix::zeros(m, m);
    for (w, g) in weights.iter().zip(dict.grams()) {
        if *w != 0.0 {
            acc += g.entries() * *w;
        }
    }
    GramMatrix::from_matrix(acc)
}
