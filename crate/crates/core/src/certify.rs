//! Margin-based generalization certificates.
//!
//! For a hypothesis in the class at margin `ρ`, with probability at least
//! `1 - δ`,
//!
//! ```text
//! R(h) ≤ R̂_ρ(h) + 2 R̂_S(H) + 2 √(ln(2/δ) / (2m))
//! ```
//!
//! where `R̂_S(H)` is replaced by one of the closed-form bounds or by an
//! empirical estimate. The margin must be fixed before looking at the data
//! for the statement to hold; certificates are only issued at the declared
//! `ρ`.

use serde::Serialize;

use crate::bounds::{ceiling_bound, trace_bound, BoundValue, Family, MarginConfig};
use crate::kernel::{combine, quadratic_form, KernelDictionary, Sample};
use crate::learner::{family_constraint, margin_loss, training_scores, Model};
use crate::rademacher::{estimate_exact, estimate_mc, HypothesisFamily};
use crate::{Error, Result};

/// Slack allowed in the membership test `ρ √(αᵀK_μα) ≤ 1`.
pub const MEMBERSHIP_TOLERANCE: f64 = 1e-9;

/// Source of the Rademacher complexity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum BoundChoice {
    TraceR { r: u32 },
    Ceiling,
    EmpiricalExact { cap: usize },
    #[serde(rename = "empiricalMC")]
    EmpiricalMc { trials: u64, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Provenance {
    pub dictionary_hash: String,
    pub train_sample_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Certificate {
    pub margin_loss: f64,
    pub complexity_term: f64,
    pub confidence_term: f64,
    pub total: f64,
    /// The choice that produced the complexity term. An L1 ceiling request at
    /// `p = 1` is recorded as the trace bound with `r = 2` it falls back to.
    pub bound_choice: BoundChoice,
    pub rademacher_bound: f64,
    pub family: Family,
    pub rho: f64,
    pub delta: f64,
    pub m: usize,
    pub p: usize,
    pub provenance: Provenance,
}

/// `2 √(ln(2/δ) / (2m))`
pub fn confidence_term(delta: f64, m: usize) -> f64 {
    2.0 * ((2.0 / delta).ln() / (2.0 * m as f64)).sqrt()
}

/// `(complexity, confidence, total)` for a margin loss and a Rademacher
/// complexity value.
pub fn assemble(margin_loss: f64, rademacher: f64, delta: f64, m: usize) -> (f64, f64, f64) {
    let complexity = 2.0 * rademacher;
    let confidence = confidence_term(delta, m);
    (complexity, confidence, margin_loss + complexity + confidence)
}

/// `1/√(αᵀK_μα)`, the largest margin at which `model` is in the class.
pub fn rho_max(model: &Model, dict: &KernelDictionary) -> Result<f64> {
    let norm2 = quadratic_form(&combine(dict, &model.mu)?, &model.alpha)?;
    Ok(if norm2 > 0.0 { 1.0 / norm2.sqrt() } else { f64::MAX })
}

pub fn certify(
    model: &Model,
    sample: &Sample,
    dict: &KernelDictionary,
    cfg: &MarginConfig,
    choice: BoundChoice,
) -> Result<Certificate> {
    let labels = sample
        .labels()
        .ok_or_else(|| Error::Input("certification needs a labelled sample".into()))?;
    if sample.len() != dict.m() || model.alpha.len() != dict.m() {
        return Err(Error::Input(format!(
            "sample size {}, dictionary size {} and model size {} differ",
            sample.len(),
            dict.m(),
            model.alpha.len()
        )));
    }
    if model.mu.len() != dict.p() {
        return Err(Error::Input(format!(
            "model has {} kernel weights for {} kernels",
            model.mu.len(),
            dict.p()
        )));
    }
    let MarginConfig { rho, delta } = MarginConfig::new(cfg.rho, cfg.delta)?;

    let norm2 = quadratic_form(&combine(dict, &model.mu)?, &model.alpha)?;
    let scaled_norm = rho * norm2.sqrt();
    if scaled_norm > 1.0 + MEMBERSHIP_TOLERANCE {
        return Err(Error::Membership {
            rho,
            scaled_norm,
            rho_max: 1.0 / norm2.sqrt(),
        });
    }

    let (m, p, family) = (dict.m(), dict.p(), model.family);
    let (choice, rademacher) = match choice {
        BoundChoice::TraceR { r } => (choice, trace_bound(&dict.traces(), m, rho, r, family)?),
        BoundChoice::Ceiling => {
            match ceiling_bound(p, dict.kernel_ceiling_r2(), rho, m, family)? {
                BoundValue::Value(v) => (choice, v),
                BoundValue::NotApplicable(_) => {
                    let fallback = BoundChoice::TraceR { r: 2 };
                    (fallback, trace_bound(&dict.traces(), m, rho, 2, family)?)
                }
            }
        }
        BoundChoice::EmpiricalExact { cap } => {
            let h = HypothesisFamily::new(family_constraint(family), rho)?;
            (choice, estimate_exact(dict, &h, cap)?.value)
        }
        BoundChoice::EmpiricalMc { trials, seed } => {
            let h = HypothesisFamily::new(family_constraint(family), rho)?;
            (choice, estimate_mc(dict, &h, trials, seed)?.value)
        }
    };

    let loss = margin_loss(&training_scores(model, dict)?, labels, rho)?;
    let (complexity_term, confidence_term, total) = assemble(loss, rademacher, delta, m);
    let seed = match choice {
        BoundChoice::EmpiricalMc { seed, .. } => Some(seed),
        _ => None,
    };
    Ok(Certificate {
        margin_loss: loss,
        complexity_term,
        confidence_term,
        total,
        bound_choice: choice,
        rademacher_bound: rademacher,
        family,
        rho,
        delta,
        m,
        p,
        provenance: Provenance {
            dictionary_hash: dict.content_hash(),
            train_sample_hash: model.train_sample_hash.clone(),
            seed,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_dictionary, CeilingPolicy, KernelSpec};
    use crate::learner::{train, TrainerConfig};
    use crate::synth;

    #[test]
    fn assembly_example() {
        let (complexity, confidence, total) = assemble(0.1, 0.1, 0.01, 100);
        assert_eq!(complexity, 0.2);
        assert!((confidence - 0.3255247261).abs() < 1e-9);
        assert!((total - 0.6255247261).abs() < 1e-9);
        assert_eq!(total, 0.1 + complexity + confidence);
    }

    #[test]
    fn confidence_limit() {
        let near = confidence_term(1.0 - 1e-12, 50);
        assert!((near - 2.0 * (2f64.ln() / 100.0).sqrt()).abs() < 1e-10);
    }

    fn fitted(m: usize, p_specs: &[KernelSpec], family: Family) -> (Sample, KernelDictionary, Model) {
        let s = synth::two_blobs(42, m).unwrap();
        let d = build_dictionary(&s, p_specs, CeilingPolicy::FromSample).unwrap();
        let model = train(&s, &d, family, &TrainerConfig::default()).unwrap();
        (s, d, model)
    }

    #[test]
    fn out_of_class_reports_rho_max() {
        let specs = [KernelSpec::gaussian("g1", 1.0), KernelSpec::gaussian("g2", 0.1)];
        let (s, d, model) = fitted(12, &specs, Family::L1);
        let limit = rho_max(&model, &d).unwrap();
        let cfg = MarginConfig::new(limit * 2.0, 0.05).unwrap();
        match certify(&model, &s, &d, &cfg, BoundChoice::Ceiling) {
            Err(Error::Membership { rho_max, .. }) => assert!((rho_max - limit).abs() < 1e-12 * limit),
            other => panic!("expected a membership error, got {other:?}"),
        }
        let cfg = MarginConfig::new(limit, 0.05).unwrap();
        assert!(certify(&model, &s, &d, &cfg, BoundChoice::Ceiling).is_ok());
    }

    #[test]
    fn ceiling_at_one_kernel_falls_back_to_trace() {
        let (s, d, model) = fitted(10, &[KernelSpec::gaussian("g", 1.0)], Family::L1);
        let cfg = MarginConfig::new(rho_max(&model, &d).unwrap(), 0.05).unwrap();
        let c = certify(&model, &s, &d, &cfg, BoundChoice::Ceiling).unwrap();
        assert_eq!(c.bound_choice, BoundChoice::TraceR { r: 2 });
    }

    #[test]
    fn l2_ceiling_term() {
        let specs = [
            KernelSpec::gaussian("a", 0.1),
            KernelSpec::gaussian("b", 1.0),
            KernelSpec::gaussian("c", 10.0),
        ];
        let (s, d, model) = fitted(14, &specs, Family::L2);
        let rho = rho_max(&model, &d).unwrap();
        let cfg = MarginConfig::new(rho, 0.05).unwrap();
        let c = certify(&model, &s, &d, &cfg, BoundChoice::Ceiling).unwrap();
        let expected = 4.0 * 3f64.powf(0.25) * (d.kernel_ceiling_r2() / (rho * rho) / 14.0).sqrt();
        assert!((c.complexity_term - expected).abs() < 1e-12 * expected);
        assert_eq!(c.total, c.margin_loss + c.complexity_term + c.confidence_term);
    }

    #[test]
    fn exact_estimate_is_dominated_by_bounds() {
        let specs = [KernelSpec::gaussian("a", 0.5), KernelSpec::linear("b")];
        let (s, d, model) = fitted(12, &specs, Family::L1);
        let cfg = MarginConfig::new(rho_max(&model, &d).unwrap(), 0.05).unwrap();
        let exact = certify(&model, &s, &d, &cfg, BoundChoice::EmpiricalExact { cap: 14 }).unwrap();
        for choice in [
            BoundChoice::Ceiling,
            BoundChoice::TraceR { r: 2 },
            BoundChoice::TraceR { r: 4 },
        ] {
            let c = certify(&model, &s, &d, &cfg, choice).unwrap();
            assert!(exact.complexity_term <= c.complexity_term * (1.0 + 1e-9));
        }
    }
}
