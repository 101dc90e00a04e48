//! Closed-form Rademacher complexity bounds for combinations of `p` kernels.
//!
//! * trace form: `‖τ‖_r / (mρ)` with `τ_k = √(r Tr[K_k])`, for even `r`
//!   (any even `r` for the simplex family, `r ∈ {2, 4}` for the sphere family);
//! * ceiling form: `√(2e⌈ln p⌉ R²/ρ² / m)` (simplex, `p ≥ 2`) and
//!   `2 p^{1/4} √(R²/ρ² / m)` (sphere), where `R²` bounds every `K_k(x, x)`;
//! * the discrete minimum over even `r` of `p^{1/r} √r √(R²/ρ²/m)`;
//! * the pseudo-dimension bound of Srebro and Ben-David, for comparison.
//!
//! All logarithms are natural.

use std::cmp::Ordering;
use std::f64::consts::E;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::kernel::KernelDictionary;
use crate::{Error, Result};

/// Which hypothesis set a bound applies to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Family {
    /// Convex combinations of the base kernels.
    L1,
    /// Nonnegative combinations with unit Euclidean norm.
    L2,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::L1 => "L1",
            Family::L2 => "L2",
        })
    }
}

/// Margin `ρ` and confidence `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    pub rho: f64,
    pub delta: f64,
}

impl MarginConfig {
    pub fn new(rho: f64, delta: f64) -> Result<Self> {
        check_rho(rho)?;
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::Parameter(format!("delta must lie in (0, 1), got {delta}")));
        }
        Ok(Self { rho, delta })
    }
}

/// A bound value, or the reason the bound does not apply.
#[derive(Debug, Clone, PartialEq)]
pub enum BoundValue {
    Value(f64),
    NotApplicable(String),
}

impl BoundValue {
    pub fn value(&self) -> Option<f64> {
        match self {
            BoundValue::Value(v) => Some(*v),
            BoundValue::NotApplicable(_) => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, BoundValue::Value(_))
    }
}

impl fmt::Display for BoundValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoundValue::Value(v) => write!(f, "{v}"),
            BoundValue::NotApplicable(_) => f.write_str("n/a"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundForm {
    Trace { r: u32 },
    Ceiling,
    EvenROptimized { r: u32 },
    ComparatorSB,
}

impl BoundForm {
    pub fn name(&self) -> &'static str {
        match self {
            BoundForm::Trace { .. } => "trace",
            BoundForm::Ceiling => "ceiling",
            BoundForm::EvenROptimized { .. } => "evenROptimized",
            BoundForm::ComparatorSB => "comparatorSB",
        }
    }

    pub fn r(&self) -> Option<u32> {
        match self {
            BoundForm::Trace { r } | BoundForm::EvenROptimized { r } => Some(*r),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            BoundForm::Trace { .. } => 0,
            BoundForm::Ceiling => 1,
            BoundForm::EvenROptimized { .. } => 2,
            BoundForm::ComparatorSB => 3,
        }
    }
}

/// One evaluated bound with the inputs it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub family: Family,
    pub form: BoundForm,
    pub value: BoundValue,
    pub p: usize,
    pub m: usize,
    pub rho: f64,
    pub kernel_ceiling_r2: Option<f64>,
    pub traces: Option<Vec<f64>>,
}

impl BoundReport {
    fn sort_key(&self) -> (usize, Family, u8, u32) {
        (self.p, self.family, self.form.rank(), self.form.r().unwrap_or(0))
    }

    /// One line of the sweep CSV.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.p,
            self.family,
            self.form.name(),
            self.form.r().map(|r| r.to_string()).unwrap_or_default(),
            self.value
        )
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum JsonNumber {
    Number(f64),
    Text(&'static str),
}

#[derive(Serialize)]
struct BoundReportJson<'a> {
    family: Family,
    form: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    r: Option<u32>,
    value: JsonNumber,
    #[serde(skip_serializing_if = "Option::is_none")]
    reason: Option<&'a str>,
    p: usize,
    m: usize,
    rho: f64,
    #[serde(rename = "R2", skip_serializing_if = "Option::is_none")]
    r2: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    traces: Option<&'a [f64]>,
}

impl Serialize for BoundReport {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let (value, reason) = match &self.value {
            BoundValue::Value(v) => (JsonNumber::Number(*v), None),
            BoundValue::NotApplicable(why) => (JsonNumber::Text("n/a"), Some(why.as_str())),
        };
        BoundReportJson {
            family: self.family,
            form: self.form.name(),
            r: self.form.r(),
            value,
            reason,
            p: self.p,
            m: self.m,
            rho: self.rho,
            r2: self.kernel_ceiling_r2,
            traces: self.traces.as_deref(),
        }
        .serialize(serializer)
    }
}

fn check_rho(rho: f64) -> Result<()> {
    if rho.is_finite() && rho > 0.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("rho must be positive, got {rho}")))
    }
}

fn check_common(p: usize, r2: f64, rho: f64, m: usize) -> Result<()> {
    check_rho(rho)?;
    if p == 0 {
        return Err(Error::Parameter("p must be at least 1".into()));
    }
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    if !(r2.is_finite() && r2 > 0.0) {
        return Err(Error::Parameter(format!("kernel ceiling must be positive, got {r2}")));
    }
    Ok(())
}

fn check_even_r(r: u32, family: Family) -> Result<()> {
    if r == 0 || r % 2 == 1 {
        return Err(Error::Parameter(format!("r must be a positive even integer, got {r}")));
    }
    if family == Family::L2 && r > 4 {
        return Err(Error::Parameter(format!(
            "the L2 family admits only r in {{2, 4}}, got {r}"
        )));
    }
    Ok(())
}

/// `⌈ln p⌉`, snapping `ln p` to an integer first when it is within 1e-12 of one.
pub fn ceil_ln(p: usize) -> f64 {
    let l = (p as f64).ln();
    let nearest = l.round();
    if (l - nearest).abs() < 1e-12 {
        nearest
    } else {
        l.ceil()
    }
}

/// `‖τ‖_r / (mρ)` with `τ_k = √(r·traces[k])`.
pub fn trace_bound(traces: &[f64], m: usize, rho: f64, r: u32, family: Family) -> Result<f64> {
    check_rho(rho)?;
    check_even_r(r, family)?;
    if traces.is_empty() {
        return Err(Error::Parameter("need at least one trace".into()));
    }
    if m == 0 {
        return Err(Error::Parameter("m must be at least 1".into()));
    }
    if let Some(t) = traces.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
        return Err(Error::Parameter(format!("traces must be finite and >= 0, got {t}")));
    }
    let rf = r as f64;
    let tau: Vec<f64> = traces.iter().map(|t| (rf * t).sqrt()).collect();
    let largest = tau.iter().copied().fold(0.0, f64::max);
    if largest == 0.0 {
        return Ok(0.0);
    }
    // scaled to avoid overflow of τ^r for large r
    let sum: f64 = tau.iter().map(|t| (t / largest).powi(r as i32)).sum();
    Ok(largest * sum.powf(1.0 / rf) / (m as f64 * rho))
}

fn unit_scale(r2: f64, rho: f64, m: usize) -> f64 {
    (r2 / (rho * rho) / m as f64).sqrt()
}

/// The ceiling closed forms. Under L1 with `p = 1` the bound is not
/// applicable; callers fall back to [`trace_bound`] with `r = 2`.
pub fn ceiling_bound(p: usize, r2: f64, rho: f64, m: usize, family: Family) -> Result<BoundValue> {
    check_common(p, r2, rho, m)?;
    let scale = unit_scale(r2, rho, m);
    Ok(match family {
        Family::L1 if p == 1 => BoundValue::NotApplicable(
            "the L1 ceiling bound needs p > 1; use the trace bound with r = 2".into(),
        ),
        Family::L1 => BoundValue::Value((2.0 * E * ceil_ln(p)).sqrt() * scale),
        Family::L2 => BoundValue::Value(2.0 * (p as f64).sqrt().sqrt() * scale),
    })
}

/// `p^{1/r} √r √(R²/ρ²/m)`: the trace bound when every trace equals `m R²`.
pub fn uniform_trace_form(p: usize, r2: f64, rho: f64, m: usize, r: u32) -> f64 {
    let rf = r as f64;
    (p as f64).powf(1.0 / rf) * rf.sqrt() * unit_scale(r2, rho, m)
}

/// Even `r` values searched by [`optimize_even_r`].
pub fn even_r_window(p: usize, family: Family) -> Vec<u32> {
    match family {
        Family::L2 => vec![2, 4],
        Family::L1 if p <= 1 => vec![2],
        Family::L1 => {
            let hi = 2 * (2.0 * (p as f64).ln()).ceil() as u32 + 4;
            (2..=hi).step_by(2).collect()
        }
    }
}

/// Minimizes [`uniform_trace_form`] over the even `r` of [`even_r_window`],
/// breaking ties toward the smaller `r`.
pub fn optimize_even_r(
    p: usize,
    r2: f64,
    rho: f64,
    m: usize,
    family: Family,
) -> Result<(u32, f64)> {
    check_common(p, r2, rho, m)?;
    let mut best = (2, uniform_trace_form(p, r2, rho, m, 2));
    for r in even_r_window(p, family).into_iter().skip(1) {
        let v = uniform_trace_form(p, r2, rho, m, r);
        if v < best.1 {
            best = (r, v);
        }
    }
    Ok(best)
}

/// The Srebro–Ben-David pseudo-dimension bound, evaluated with its displayed
/// constants and `R = √R²`. Not applicable when any logarithm argument is ≤ 1.
pub fn comparator_sb(p: usize, r2: f64, rho: f64, m: usize) -> Result<BoundValue> {
    check_common(p, r2, rho, m)?;
    let (pf, mf, r) = (p as f64, m as f64, r2.sqrt());
    let ratio = r2 / (rho * rho);
    let args = [
        ("128 e m^3 R^2 / (rho^2 p)", 128.0 * E * mf.powi(3) * ratio / pf),
        ("rho e m / (8 R)", rho * E * mf / (8.0 * r)),
        ("128 m R^2 / rho^2", 128.0 * mf * ratio),
    ];
    if let Some((name, v)) = args.iter().find(|(_, v)| !(*v > 1.0)) {
        return Ok(BoundValue::NotApplicable(format!(
            "log argument {name} = {v} is not greater than 1"
        )));
    }
    let inner = 2.0 + pf * args[0].1.ln() + 256.0 * ratio * args[1].1.ln() * args[2].1.ln();
    Ok(BoundValue::Value((8.0 * inner / mf).sqrt()))
}

/// Trace, ceiling, optimized and (for L1) comparison bounds on one dictionary.
pub fn dictionary_reports(
    dict: &KernelDictionary,
    rho: f64,
    family: Family,
    rs: &[u32],
) -> Result<Vec<BoundReport>> {
    let (p, m, r2) = (dict.p(), dict.m(), dict.kernel_ceiling_r2());
    let traces = dict.traces();
    let report = |form, value| BoundReport {
        family,
        form,
        value,
        p,
        m,
        rho,
        kernel_ceiling_r2: Some(r2),
        traces: Some(traces.clone()),
    };
    let mut rows = Vec::new();
    for &r in rs {
        let v = trace_bound(&traces, m, rho, r, family)?;
        rows.push(report(BoundForm::Trace { r }, BoundValue::Value(v)));
    }
    rows.push(report(BoundForm::Ceiling, ceiling_bound(p, r2, rho, m, family)?));
    let (r, v) = optimize_even_r(p, r2, rho, m, family)?;
    rows.push(report(BoundForm::EvenROptimized { r }, BoundValue::Value(v)));
    if family == Family::L1 {
        rows.push(report(BoundForm::ComparatorSB, comparator_sb(p, r2, rho, m)?));
    }
    rows.sort_by(cmp_rows);
    Ok(rows)
}

fn cmp_rows(a: &BoundReport, b: &BoundReport) -> Ordering {
    a.sort_key().cmp(&b.sort_key())
}

/// Bound table over several kernel counts from `(m, R², ρ)` alone.
///
/// Each `p` yields the L1 ceiling, L1 optimized-`r`, comparator and L2
/// ceiling rows. When the L1 ceiling does not apply (`p = 1`) an L1 trace row
/// with `r = 2` is added, computed from `traces[..p]` when given and from
/// uniform traces `m R²` otherwise.
pub fn sweep_bounds_params(
    m: usize,
    r2: f64,
    rho: f64,
    p_values: &[usize],
    traces: Option<&[f64]>,
) -> Result<Vec<BoundReport>> {
    if let Some(t) = traces {
        if let Some(p) = p_values.iter().find(|&&p| p > t.len()) {
            return Err(Error::Parameter(format!(
                "p = {p} exceeds the {} available kernels",
                t.len()
            )));
        }
    }
    let per_p: Vec<Vec<BoundReport>> = p_values
        .par_iter()
        .map(|&p| sweep_rows(m, r2, rho, p, traces))
        .collect::<Result<_>>()?;
    let mut rows: Vec<BoundReport> = per_p.into_iter().flatten().collect();
    rows.sort_by(cmp_rows);
    Ok(rows)
}

fn sweep_rows(
    m: usize,
    r2: f64,
    rho: f64,
    p: usize,
    traces: Option<&[f64]>,
) -> Result<Vec<BoundReport>> {
    let row = |family, form, value| BoundReport {
        family,
        form,
        value,
        p,
        m,
        rho,
        kernel_ceiling_r2: Some(r2),
        traces: None,
    };
    let l1 = ceiling_bound(p, r2, rho, m, Family::L1)?;
    let (r, opt) = optimize_even_r(p, r2, rho, m, Family::L1)?;
    let mut rows = Vec::with_capacity(5);
    if !l1.is_applicable() {
        let subset: Vec<f64> = match traces {
            Some(t) => t[..p].to_vec(),
            None => vec![m as f64 * r2; p],
        };
        let v = trace_bound(&subset, m, rho, 2, Family::L1)?;
        let mut fallback = row(Family::L1, BoundForm::Trace { r: 2 }, BoundValue::Value(v));
        fallback.traces = Some(subset);
        rows.push(fallback);
    }
    rows.push(row(Family::L1, BoundForm::Ceiling, l1));
    rows.push(row(Family::L1, BoundForm::EvenROptimized { r }, BoundValue::Value(opt)));
    rows.push(row(Family::L1, BoundForm::ComparatorSB, comparator_sb(p, r2, rho, m)?));
    rows.push(row(
        Family::L2,
        BoundForm::Ceiling,
        ceiling_bound(p, r2, rho, m, Family::L2)?,
    ));
    Ok(rows)
}

/// Sweep over the first `p` kernels of `dict` for each requested `p`.
pub fn sweep_bounds(dict: &KernelDictionary, rho: f64, p_values: &[usize]) -> Result<Vec<BoundReport>> {
    let traces = dict.traces();
    sweep_bounds_params(
        dict.m(),
        dict.kernel_ceiling_r2(),
        rho,
        p_values,
        Some(&traces),
    )
}

/// Plot-ready CSV with header `p,family,form,r,value`.
pub fn sweep_csv(rows: &[BoundReport]) -> String {
    let mut out = String::from("p,family,form,r,value\n");
    for row in rows {
        out.push_str(&row.csv_row());
        out.push('\n');
    }
    out
}
