//! Generalization bounds for learning kernels.
//!
//! The crate computes the Rademacher complexity bounds for hypothesis sets
//! built from combinations of `p` base kernels, either convex combinations
//! (the simplex, "L1") or nonnegative combinations on the unit sphere ("L2"),
//! and checks those bounds against the empirical Rademacher complexity of
//! the same sets.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`kernel`] | samples, kernel specs, Gram matrices, dictionaries, combination weights |
//! | [`dataset`] | CSV / sparse dataset readers and the Gram cache format |
//! | [`bounds`] | closed-form trace, ceiling and comparison bounds |
//! | [`rademacher`] | exact and Monte Carlo empirical Rademacher complexity |
//! | [`proof_checks`] | numerical checks of every inequality the bounds rest on |
//! | [`learner`] | a small alternating multiple-kernel classifier |
//! | [`certify`] | margin-based generalization certificates |
//! | [`cli`] | the `kernbound` command line front end |
//!
//! Every Hilbert-space quantity is evaluated through Gram matrix identities;
//! feature maps are never materialized.

pub mod bounds;
pub mod certify;
pub mod cli;
pub mod dataset;
mod error;
pub mod kernel;
pub mod learner;
pub mod proof_checks;
pub mod rademacher;
pub mod sigma;
pub mod synth;

pub use error::{Error, Result};
pub use kernel::{
    build_dictionary, combine, compute_gram, quadratic_form, validate_psd, CeilingPolicy,
    CombinationWeights, Constraint, GramMatrix, KernelDictionary, KernelKind, KernelSpec,
    PsdDiagnostics, Sample,
};
