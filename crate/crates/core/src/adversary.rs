//! Inner maximisation over the `ℓ∞` ball: signed-gradient PGD for any model,
//! and the exact worst case for linear scorers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::matrix::{dot, l1_norm, Matrix};
use crate::models::{self, forward, log_softmax, ModelParams};
use crate::rng::{pair_index, substream, Tag};

/// Radius used throughout the image-domain experiments.
pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;

/// Standard deviation of the Gaussian start used for the KL objective.
const KL_START_STD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InnerLoss {
    /// Maximise `CE(f(x'), y)`.
    Ce,
    /// Maximise `KL(f(x) ‖ f(x'))`.
    Kl,
    /// Maximise `max_{j≠y} f_j(x') − f_y(x')`.
    CwMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    pub epsilon: f64,
    pub steps: usize,
    pub step_size: f64,
    pub inner_loss: InnerLoss,
    /// Per-coordinate box `[lo, hi]` every iterate is clamped to.
    pub clip_domain: Option<(f64, f64)>,
    pub restarts: usize,
}

impl AttackConfig {
    /// 10 steps of 0.007 at `ε = 8/255`, maximising the TRADES KL term.
    pub fn training() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            steps: 10,
            step_size: 0.007,
            inner_loss: InnerLoss::Kl,
            clip_domain: Some((0.0, 1.0)),
            restarts: 0,
        }
    }

    /// PGD-100 with step 0.003 at `ε = 8/255`.
    pub fn evaluation() -> Self {
        Self {
            epsilon: DEFAULT_EPSILON,
            steps: 100,
            step_size: 0.003,
            inner_loss: InnerLoss::Ce,
            clip_domain: Some((0.0, 1.0)),
            restarts: 0,
        }
    }

    pub fn with_inner_loss(mut self, inner_loss: InnerLoss) -> Self {
        self.inner_loss = inner_loss;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::InvalidParameter(format!("epsilon must be ≥ 0, got {}", self.epsilon)));
        }
        if self.steps == 0 {
            return Err(Error::InvalidParameter("attack needs at least one step".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("step size must be > 0, got {}", self.step_size)));
        }
        if let Some((lo, hi)) = self.clip_domain {
            if !(lo <= hi) {
                return Err(Error::InvalidParameter(format!("domain box has lo {lo} > hi {hi}")));
            }
        }
        Ok(())
    }
}

/// Clamp `x` to `[center − ε, center + ε]`, then to the domain box.
pub fn project_linf(x: &[f64], center: &[f64], epsilon: f64, clip: Option<(f64, f64)>) -> Result<Vec<f64>> {
    if x.len() != center.len() {
        return Err(Error::DimensionMismatch {
            context: "projection",
            expected: center.len(),
            got: x.len(),
        });
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be ≥ 0, got {epsilon}")));
    }
    if let Some((lo, hi)) = clip {
        if !(lo <= hi) {
            return Err(Error::InvalidParameter(format!("domain box has lo {lo} > hi {hi}")));
        }
    }
    let mut out: Vec<f64> = x
        .iter()
        .zip(center)
        .map(|(&v, &c)| v.clamp(c - epsilon, c + epsilon))
        .collect();
    if let Some((lo, hi)) = clip {
        for v in &mut out {
            *v = v.clamp(lo, hi);
        }
    }
    Ok(out)
}

fn within_ball(x: &[f64], center: &[f64], epsilon: f64, clip: Option<(f64, f64)>) -> bool {
    x.iter().zip(center).all(|(&v, &c)| {
        (v - c).abs() <= epsilon + 1e-12 && clip.is_none_or(|(lo, hi)| v >= lo && v <= hi)
    })
}

struct Objective<'a> {
    params: &'a ModelParams,
    y: usize,
    kind: InnerLoss,
    /// Clean log-probabilities, for the KL objective.
    clean_log_probs: Option<Vec<f64>>,
}

impl Objective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let s = forward(self.params, x)?;
        match self.kind {
            InnerLoss::Ce => models::cross_entropy(&s, self.y),
            InnerLoss::Kl => {
                let lp = self.clean_log_probs.as_ref().expect("kl objective");
                let lq = log_softmax(&s)?;
                Ok(lp.iter().zip(&lq).map(|(&a, &b)| a.exp() * (a - b)).sum::<f64>().max(0.0))
            }
            InnerLoss::CwMargin => Ok(-models::margin(&s, self.y)?),
        }
    }

    fn input_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        let s = forward(self.params, x)?;
        let score_grad = match self.kind {
            InnerLoss::Ce => {
                let mut g = models::softmax(&s)?;
                g[self.y] -= 1.0;
                g
            }
            InnerLoss::Kl => {
                let lp = self.clean_log_probs.as_ref().expect("kl objective");
                let q = models::softmax(&s)?;
                q.iter().zip(lp).map(|(qj, lpj)| qj - lpj.exp()).collect()
            }
            InnerLoss::CwMargin => {
                let mut g = vec![0.0; s.len()];
                g[models::runner_up(&s, self.y)] += 1.0;
                g[self.y] -= 1.0;
                g
            }
        };
        Ok(self.params.input_gradient(x, &score_grad))
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Projected signed-gradient ascent on the configured inner loss.
///
/// Start 0 is the clean point (for the KL objective, the clean point plus
/// `N(0, 0.001²)` noise, since the KL gradient vanishes at `x' = x`); each
/// restart begins uniformly inside the ball. The clean point and the final
/// iterate of every start compete, and the one with the largest inner loss
/// is returned (earliest on ties).
pub fn pgd_attack<R: Rng>(params: &ModelParams, x: &[f64], y: usize, cfg: &AttackConfig, rng: &mut R) -> Result<Vec<f64>> {
    cfg.validate()?;
    if x.len() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "attack input",
            expected: params.input_dim(),
            got: x.len(),
        });
    }
    if y >= params.classes() {
        return Err(Error::LabelOutOfRange {
            label: y,
            classes: params.classes(),
        });
    }
    let clean_log_probs = match cfg.inner_loss {
        InnerLoss::Kl => Some(log_softmax(&forward(params, x)?)?),
        _ => None,
    };
    let objective = Objective {
        params,
        y,
        kind: cfg.inner_loss,
        clean_log_probs,
    };
    let (eps, clip) = (cfg.epsilon, cfg.clip_domain);

    let origin = project_linf(x, x, eps, clip)?;
    let mut best_value = objective.value(&origin)?;
    let mut best = origin;

    for start in 0..=cfg.restarts {
        let init: Vec<f64> = if start == 0 {
            match cfg.inner_loss {
                InnerLoss::Kl => x
                    .iter()
                    .map(|&v| {
                        let z: f64 = StandardNormal.sample(rng);
                        v + KL_START_STD * z
                    })
                    .collect(),
                _ => x.to_vec(),
            }
        } else {
            x.iter()
                .map(|&v| if eps > 0.0 { v + rng.random_range(-eps..=eps) } else { v })
                .collect()
        };
        let mut current = project_linf(&init, x, eps, clip)?;
        for _ in 0..cfg.steps {
            let g = objective.input_gradient(&current)?;
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("attack gradient".into()));
            }
            let stepped: Vec<f64> = current
                .iter()
                .zip(&g)
                .map(|(&c, &gi)| c + cfg.step_size * sign(gi))
                .collect();
            current = project_linf(&stepped, x, eps, clip)?;
            debug_assert!(within_ball(&current, x, eps, clip));
        }
        let value = objective.value(&current)?;
        if value > best_value {
            best_value = value;
            best = current;
        }
    }
    Ok(best)
}

/// Attacks every row of `inputs`. Row `i` draws from its own substream so the
/// result is independent of thread scheduling.
pub fn attack_batch(
    params: &ModelParams,
    inputs: &Matrix,
    labels: &[usize],
    cfg: &AttackConfig,
    seed: u64,
    tag: Tag,
    round: u64,
    stream_offset: u64,
) -> Result<Matrix> {
    if inputs.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "attack batch labels",
            expected: inputs.rows(),
            got: labels.len(),
        });
    }
    let rows: Vec<Vec<f64>> = (0..inputs.rows())
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, tag, pair_index(round, stream_offset + i as u64));
            pgd_attack(params, inputs.row(i), labels[i], cfg, &mut rng)
        })
        .collect::<Result<_>>()?;
    let mut data = Vec::with_capacity(inputs.rows() * inputs.cols());
    for r in rows {
        data.extend(r);
    }
    Matrix::from_vec(inputs.rows(), inputs.cols(), data)
}

/// Exact adversarial margins of a linear scorer over the `ℓ∞` ball (no domain box).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstCaseMargin {
    /// `⟨w_y − w_j, x⟩ − ε‖w_j − w_y‖₁` for `j ≠ y`; `+∞` at `j = y`.
    pub per_class: Vec<f64>,
    /// Minimum over `per_class`; robustly misclassified iff `≤ 0`.
    pub worst: f64,
}

pub fn linear_worst_case_margin(weights: &Matrix, x: &[f64], y: usize, epsilon: f64) -> Result<WorstCaseMargin> {
    let k = weights.rows();
    if y >= k {
        return Err(Error::LabelOutOfRange { label: y, classes: k });
    }
    if x.len() != weights.cols() {
        return Err(Error::DimensionMismatch {
            context: "linear margin input",
            expected: weights.cols(),
            got: x.len(),
        });
    }
    ensure_finite(x, "linear margin input")?;
    let wy = weights.row(y);
    let own = dot(wy, x);
    let mut per_class = Vec::with_capacity(k);
    let mut worst = f64::INFINITY;
    let mut diff = vec![0.0; x.len()];
    for j in 0..k {
        if j == y {
            per_class.push(f64::INFINITY);
            continue;
        }
        for ((d, a), b) in diff.iter_mut().zip(weights.row(j)).zip(wy) {
            *d = a - b;
        }
        let m = own - dot(weights.row(j), x) - epsilon * l1_norm(&diff);
        worst = worst.min(m);
        per_class.push(m);
    }
    Ok(WorstCaseMargin { per_class, worst })
}

/// `⟨w_y, x⟩ ≤ γ + max_{j≠y}(⟨w_j, x⟩ + ε‖w_j − w_y‖₁)`.
pub fn robust_error_indicator(weights: &Matrix, x: &[f64], y: usize, gamma: f64, epsilon: f64) -> Result<bool> {
    Ok(linear_worst_case_margin(weights, x, y, epsilon)?.worst <= gamma)
}
