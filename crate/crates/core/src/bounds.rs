//! Generalisation-bound terms: Rademacher estimates, the class-wise uniform
//! bound and the explicit bound for linear scorers under `ℓ∞` attacks.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{linear_worst_case_margin, robust_error_indicator};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::matrix::{lq_norm, Matrix};
use crate::models::ramp_loss;
use crate::rng::{pair_index, substream, Tag};

const CHUNK: usize = 1024;
/// Enumeration is limited to `2^20` sign patterns.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub draws: usize,
}

fn check_evaluations(evaluations: &[Vec<f64>]) -> Result<usize> {
    let first = evaluations.first().ok_or(Error::Empty("function class"))?;
    let n = first.len();
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    for row in evaluations {
        if row.len() != n {
            return Err(Error::DimensionMismatch {
                context: "function evaluations",
                expected: n,
                got: row.len(),
            });
        }
        crate::error::ensure_finite(row, "function evaluations")?;
    }
    Ok(n)
}

fn sup_correlation(evaluations: &[Vec<f64>], sigma: &[f64]) -> f64 {
    let n = sigma.len() as f64;
    evaluations
        .iter()
        .map(|row| row.iter().zip(sigma).map(|(h, s)| h * s).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max)
        / n
}

fn mean_and_se(draws: &[f64]) -> RademacherEstimate {
    let m = draws.len() as f64;
    let mean = draws.iter().sum::<f64>() / m;
    let std_error = if draws.len() > 1 {
        let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    RademacherEstimate {
        mean,
        std_error,
        draws: draws.len(),
    }
}

fn sign_draws<F>(n: usize, draws: usize, seed: u64, stream: u64, f: F) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let chunks = draws.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = substream(seed, Tag::Rademacher, pair_index(stream, c as u64));
            let len = CHUNK.min(draws - c * CHUNK);
            let mut sigma = vec![0.0; n];
            (0..len)
                .map(|_| {
                    for s in sigma.iter_mut() {
                        *s = if rng.random::<bool>() { 1.0 } else { -1.0 };
                    }
                    f(&sigma)
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

/// Monte-Carlo estimate of `E_σ sup_f (1/n) Σ σ_i f(z_i)` for a finite class.
///
/// `evaluations[f][i]` is the value of function `f` at sample point `i`.
pub fn mc_rademacher(evaluations: &[Vec<f64>], draws: usize, seed: u64, stream: u64) -> Result<RademacherEstimate> {
    let n = check_evaluations(evaluations)?;
    if draws == 0 {
        return Err(Error::InvalidParameter("at least one draw is required".into()));
    }
    let values = sign_draws(n, draws, seed, stream, |sigma| sup_correlation(evaluations, sigma));
    Ok(mean_and_se(&values))
}

fn enumerate_signs<F: FnMut(&[f64])>(n: usize, mut f: F) -> Result<()> {
    if n > EXACT_LIMIT {
        return Err(Error::InvalidParameter(format!(
            "exact enumeration supports at most {EXACT_LIMIT} points, got {n}"
        )));
    }
    let mut sigma = vec![0.0; n];
    for mask in 0u64..(1 << n) {
        for (i, s) in sigma.iter_mut().enumerate() {
            *s = if mask >> i & 1 == 1 { 1.0 } else { -1.0 };
        }
        f(&sigma);
    }
    Ok(())
}

/// Exact empirical Rademacher complexity by enumerating all sign vectors.
pub fn exact_rademacher(evaluations: &[Vec<f64>]) -> Result<f64> {
    let n = check_evaluations(evaluations)?;
    let mut total = 0.0;
    enumerate_signs(n, |sigma| total += sup_correlation(evaluations, sigma))?;
    Ok(total / (1u64 << n) as f64)
}

fn signed_sum_norm(points: &Matrix, sigma: &[f64], q: f64) -> f64 {
    let mut acc = vec![0.0; points.cols()];
    for (row, s) in points.iter_rows().zip(sigma) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += s * x;
        }
    }
    lq_norm(&acc, q)
}

/// Monte-Carlo estimate of `E_σ ‖Σ_i σ_i x_i‖_q` over the rows of `points`.
pub fn mc_signed_sum_norm(points: &Matrix, q: f64, draws: usize, seed: u64, stream: u64) -> Result<RademacherEstimate> {
    if points.rows() == 0 {
        return Ok(RademacherEstimate {
            mean: 0.0,
            std_error: 0.0,
            draws,
        });
    }
    if draws == 0 {
        return Err(Error::InvalidParameter("at least one draw is required".into()));
    }
    let values = sign_draws(points.rows(), draws, seed, stream, |sigma| signed_sum_norm(points, sigma, q));
    Ok(mean_and_se(&values))
}

pub fn exact_signed_sum_norm(points: &Matrix, q: f64) -> Result<f64> {
    if points.rows() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    enumerate_signs(points.rows(), |sigma| total += signed_sum_norm(points, sigma, q))?;
    Ok(total / (1u64 << points.rows()) as f64)
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    Ok(())
}

/// Confidence term `3B √(K ln(2/δ) / (2n))`.
pub fn confidence_slack(loss_bound: f64, classes: usize, n: usize, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    Ok(3.0 * loss_bound * (classes as f64 * (2.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// `emp + 2B·rad + 3B √(K ln(2/δ) / (2n))`, where `rad` is the largest
/// per-class complexity.
pub fn worst_class_rhs(
    empirical: f64,
    complexity: f64,
    loss_bound: f64,
    classes: usize,
    n: usize,
    delta: f64,
) -> Result<f64> {
    Ok(empirical + 2.0 * loss_bound * complexity + confidence_slack(loss_bound, classes, n, delta)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub delta: f64,
    /// Upper end `B` of the loss range.
    pub loss_bound: f64,
    /// Ramp-loss width.
    pub gamma: f64,
    /// Cap on `max_k ‖w_k‖_p`.
    pub weight_norm: f64,
    /// Dual exponent `q` of the input norm; the weight norm uses its conjugate.
    pub q: f64,
    pub mc_draws: usize,
    pub seed: u64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self {
            delta: 0.05,
            loss_bound: 1.0,
            gamma: 1.0,
            weight_norm: 1.0,
            q: 1.0,
            mc_draws: 10_000,
            seed: 0,
        }
    }
}

impl BoundConfig {
    pub fn validate(&self) -> Result<()> {
        check_delta(self.delta)?;
        if !(self.loss_bound.is_finite() && self.loss_bound > 0.0) {
            return Err(Error::InvalidParameter("loss_bound must be positive".into()));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidParameter("gamma must be positive".into()));
        }
        if !(self.weight_norm.is_finite() && self.weight_norm > 0.0) {
            return Err(Error::InvalidParameter("weight_norm must be positive".into()));
        }
        if !(self.q >= 1.0) {
            return Err(Error::InvalidParameter(format!("q must be at least 1, got {}", self.q)));
        }
        if self.mc_draws == 0 {
            return Err(Error::InvalidParameter("mc_draws must be positive".into()));
        }
        Ok(())
    }

    /// Conjugate exponent `p` with `1/p + 1/q = 1`.
    pub fn p(&self) -> f64 {
        conjugate(self.q)
    }
}

pub fn conjugate(q: f64) -> f64 {
    if q == 1.0 {
        f64::INFINITY
    } else if q.is_infinite() {
        1.0
    } else {
        q / (q - 1.0)
    }
}

/// `max_k ‖w_k‖_p` over the class rows of `weights`.
pub fn weight_norm(weights: &Matrix, p: f64) -> f64 {
    weights.iter_rows().map(|r| lq_norm(r, p)).fold(0.0, f64::max)
}

/// Fraction of points whose adversarial ramp loss is counted, per class.
fn class_ramp_risks(weights: &Matrix, data: &Dataset, gamma: f64, epsilon: f64) -> Result<Vec<f64>> {
    let mut risk = vec![0.0; data.classes];
    for (i, &y) in data.labels.iter().enumerate() {
        let m = linear_worst_case_margin(weights, data.inputs.row(i), y, epsilon)?.worst;
        risk[y] += ramp_loss(m, gamma)?;
    }
    for (k, r) in risk.iter_mut().enumerate() {
        *r /= data.class_indices[k].len() as f64;
    }
    Ok(risk)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearBoundReport {
    /// `(K/|S|) Σ_i E_i` with `E_i` the `γ`-margin robust error indicator.
    pub e_mean: f64,
    /// `max_{y,k} E‖Σ_{i∈S_k} σ_i x_i 1(y_i = y)‖_q`.
    pub u: f64,
    pub u_std_error: f64,
    pub c: f64,
    pub rhs: f64,
    /// Actual `max_k ‖w_k‖_p` of the evaluated weights.
    pub norm: f64,
    pub exceeds_norm_cap: bool,
}

/// Constant term `2WK²ε d^{1/q} / (γ√|S|) + 3√(K ln(2/δ) / (2|S|))`.
pub fn linear_bound_constant(cfg: &BoundConfig, classes: usize, epsilon: f64, dim: usize, n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::Empty("sample"));
    }
    let k = classes as f64;
    let sn = n as f64;
    let d_term = if cfg.q.is_infinite() { 1.0 } else { (dim as f64).powf(1.0 / cfg.q) };
    Ok(2.0 * cfg.weight_norm * k * k * epsilon * d_term / (cfg.gamma * sn.sqrt()) + confidence_slack(1.0, classes, n, cfg.delta)?)
}

/// Evaluates every term of the linear-scorer bound on a balanced sample.
pub fn linear_bound_terms(weights: &Matrix, data: &Dataset, cfg: &BoundConfig, epsilon: f64) -> Result<LinearBoundReport> {
    cfg.validate()?;
    data.require_all_classes()?;
    if !data.is_balanced() {
        return Err(Error::Unbalanced(format!("class counts {:?}", data.class_counts())));
    }
    if weights.rows() != data.classes || weights.cols() != data.dim() {
        return Err(Error::DimensionMismatch {
            context: "bound weights",
            expected: data.classes * data.dim(),
            got: weights.rows() * weights.cols(),
        });
    }
    let k = data.classes;
    let n = data.len();
    let mut errors = 0usize;
    for (i, &y) in data.labels.iter().enumerate() {
        if robust_error_indicator(weights, data.inputs.row(i), y, cfg.gamma, epsilon)? {
            errors += 1;
        }
    }
    let e_mean = k as f64 * errors as f64 / n as f64;

    let mut u = 0.0;
    let mut u_std_error = 0.0;
    for (class, members) in data.class_indices.iter().enumerate() {
        // Within S_k every label equals k, so only y = k has a non-empty sum.
        let points = data.inputs.select_rows(members);
        let est = mc_signed_sum_norm(&points, cfg.q, cfg.mc_draws, cfg.seed, class as u64)?;
        if est.mean > u {
            u = est.mean;
            u_std_error = est.std_error;
        }
    }
    let kf = k as f64;
    let c = linear_bound_constant(cfg, k, epsilon, data.dim(), n)?;
    let rhs = e_mean + 2.0 * cfg.weight_norm * kf.powi(3) * u / (cfg.gamma * n as f64) + c;
    let norm = weight_norm(weights, cfg.p());
    Ok(LinearBoundReport {
        e_mean,
        u,
        u_std_error,
        c,
        rhs,
        norm,
        exceeds_norm_cap: norm > cfg.weight_norm * (1.0 + 1e-12),
    })
}

/// Bound for a finite dictionary of linear models with the adversarial ramp loss (`B = 1`).
///
/// The dictionary stands in for the hypothesis class, so `complexity` is a
/// lower bound on the true class complexity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryBound {
    /// `max_k` empirical adversarial ramp risk of the chosen model.
    pub empirical: f64,
    pub per_class_complexity: Vec<RademacherEstimate>,
    pub complexity: f64,
    pub slack: f64,
    pub rhs: f64,
    pub dictionary_size: usize,
}

pub fn dictionary_bound(
    dictionary: &[Matrix],
    chosen: &Matrix,
    data: &Dataset,
    cfg: &BoundConfig,
    epsilon: f64,
) -> Result<DictionaryBound> {
    cfg.validate()?;
    data.require_all_classes()?;
    if dictionary.is_empty() {
        return Err(Error::Empty("dictionary"));
    }
    let per_point: Vec<Vec<f64>> = dictionary
        .par_iter()
        .map(|w| {
            data.labels
                .iter()
                .enumerate()
                .map(|(i, &y)| ramp_loss(linear_worst_case_margin(w, data.inputs.row(i), y, epsilon)?.worst, cfg.gamma))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut per_class_complexity = Vec::with_capacity(data.classes);
    for (class, members) in data.class_indices.iter().enumerate() {
        let evals: Vec<Vec<f64>> = per_point
            .iter()
            .map(|row| members.iter().map(|&i| row[i]).collect())
            .collect();
        per_class_complexity.push(mc_rademacher(&evals, cfg.mc_draws, cfg.seed, class as u64)?);
    }
    let complexity = per_class_complexity.iter().map(|e| e.mean).fold(f64::NEG_INFINITY, f64::max);
    let empirical = class_ramp_risks(chosen, data, cfg.gamma, epsilon)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    let n = data.len();
    let slack = confidence_slack(1.0, data.classes, n, cfg.delta)?;
    Ok(DictionaryBound {
        empirical,
        per_class_complexity,
        complexity,
        slack,
        rhs: empirical + 2.0 * complexity + slack,
        dictionary_size: dictionary.len(),
    })
}

/// Largest per-class adversarial ramp risk of `weights` on `data`.
pub fn worst_class_ramp_risk(weights: &Matrix, data: &Dataset, gamma: f64, epsilon: f64) -> Result<f64> {
    data.require_all_classes()?;
    Ok(class_ramp_risks(weights, data, gamma, epsilon)?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max))
}
