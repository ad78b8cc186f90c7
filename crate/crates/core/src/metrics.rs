//! Per-class accuracy, the combined gain measurement and class-wise variance.

use serde::{Deserialize, Serialize};

use crate::adversary::{attack_batch, linear_worst_case_margin, AttackConfig};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::models::{predict, ModelParams};
use crate::rng::Tag;

/// What a prediction must survive to count as correct.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Evaluation {
    Natural,
    /// Projected gradient attack; `id` names it in reports (e.g. `pgd100`, `cw`).
    Pgd { id: String, attack: AttackConfig },
    /// Exact worst case over the `ℓ∞` ball, linear models only.
    ClosedForm { epsilon: f64 },
}

impl Evaluation {
    pub fn kind(&self) -> String {
        match self {
            Evaluation::Natural => "natural".into(),
            Evaluation::Pgd { id, .. } => id.clone(),
            Evaluation::ClosedForm { .. } => "exact".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccSummary {
    pub kind: String,
    pub per_class: Vec<f64>,
    /// Fraction of all test points classified correctly.
    pub average: f64,
    pub worst: f64,
    pub worst_class: usize,
}

/// Per-class accuracy under `eval`. A point counts as robustly correct only
/// if both its clean and its attacked versions are classified correctly.
pub fn class_accuracies(params: &ModelParams, test: &Dataset, eval: &Evaluation, seed: u64) -> Result<AccSummary> {
    test.require_all_classes()?;
    if test.classes != params.classes() {
        return Err(Error::DimensionMismatch {
            context: "test classes",
            expected: params.classes(),
            got: test.classes,
        });
    }
    let n = test.len();
    let mut correct = Vec::with_capacity(n);
    for i in 0..n {
        correct.push(predict(params, test.inputs.row(i))? == test.labels[i]);
    }
    match eval {
        Evaluation::Natural => {}
        Evaluation::Pgd { attack, .. } => {
            let adv = attack_batch(params, &test.inputs, &test.labels, attack, seed, Tag::EvalAttack, 0, 0)?;
            for (i, c) in correct.iter_mut().enumerate() {
                *c = *c && predict(params, adv.row(i))? == test.labels[i];
            }
        }
        Evaluation::ClosedForm { epsilon } => {
            let w = params
                .linear_weights()
                .ok_or_else(|| Error::InvalidParameter("closed-form evaluation needs a linear model".into()))?;
            for (i, c) in correct.iter_mut().enumerate() {
                *c = *c && linear_worst_case_margin(w, test.inputs.row(i), test.labels[i], *epsilon)?.worst > 0.0;
            }
        }
    }
    let k = test.classes;
    let mut hits = vec![0usize; k];
    for (i, &c) in correct.iter().enumerate() {
        if c {
            hits[test.labels[i]] += 1;
        }
    }
    let per_class: Vec<f64> = (0..k).map(|c| hits[c] as f64 / test.class_indices[c].len() as f64).collect();
    let average = hits.iter().sum::<usize>() as f64 / n as f64;
    let (worst_class, worst) = per_class
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (c, a)| if a < acc.1 { (c, a) } else { acc });
    Ok(AccSummary {
        kind: eval.kind(),
        per_class,
        average,
        worst,
        worst_class,
    })
}

/// Relative worst-class gain minus relative average loss of `treated` over `baseline`.
pub fn rho_values(baseline_avg: f64, baseline_worst: f64, treated_avg: f64, treated_worst: f64) -> Result<f64> {
    for (name, v) in [
        ("baseline average", baseline_avg),
        ("baseline worst", baseline_worst),
        ("treated average", treated_avg),
        ("treated worst", treated_worst),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(name.into()));
        }
    }
    if baseline_avg == 0.0 || baseline_worst == 0.0 {
        return Err(Error::InvalidParameter("rho needs non-zero baseline accuracies".into()));
    }
    Ok((treated_worst - baseline_worst) / baseline_worst - (baseline_avg - treated_avg) / baseline_avg)
}

pub fn rho(baseline: &AccSummary, treated: &AccSummary) -> Result<f64> {
    if baseline.kind != treated.kind {
        return Err(Error::InvalidParameter(format!(
            "rho compares {} against {}",
            treated.kind, baseline.kind
        )));
    }
    rho_values(baseline.average, baseline.worst, treated.average, treated.worst)
}

/// Class-wise variance `(1/K) Σ (a_c − ā)²`; exactly 0 when all entries agree to 1e-12.
pub fn cv(per_class: &[f64]) -> Result<f64> {
    if per_class.is_empty() {
        return Err(Error::Empty("cv input"));
    }
    crate::error::ensure_finite(per_class, "cv input")?;
    let (lo, hi) = per_class
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &a| (lo.min(a), hi.max(a)));
    if hi - lo <= 1e-12 {
        return Ok(0.0);
    }
    let k = per_class.len() as f64;
    let mean = per_class.iter().sum::<f64>() / k;
    Ok(per_class.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k)
}
