//! Multi-class linear and two-layer ReLU models with the losses used in
//! adversarial training: cross-entropy, KL, the TRADES composite and the
//! ramp loss of the multi-class margin. Gradients are analytic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::hedge::WeightSimplex;
use crate::matrix::Matrix;

/// Parameters of a `K`-class scorer on `d`-dimensional inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    /// Scores `W x` with `W` of shape `K × d` (row `k` is `w_k`).
    Linear { weights: Matrix },
    /// Scores `W2 relu(W1 x + b1) + b2`.
    Mlp {
        w1: Matrix,
        b1: Vec<f64>,
        w2: Matrix,
        b2: Vec<f64>,
    },
}

impl ModelParams {
    pub fn linear_zeros(classes: usize, dim: usize) -> Self {
        ModelParams::Linear {
            weights: Matrix::zeros(classes, dim),
        }
    }

    pub fn linear(weights: Matrix) -> Result<Self> {
        let params = ModelParams::Linear { weights };
        params.validate()?;
        Ok(params)
    }

    /// He-uniform first layer, Glorot-uniform second layer, zero biases.
    pub fn mlp_init<R: Rng>(classes: usize, dim: usize, hidden: usize, rng: &mut R) -> Self {
        let a1 = (6.0 / dim as f64).sqrt();
        let a2 = (6.0 / (hidden + classes) as f64).sqrt();
        let w1: Vec<f64> = (0..hidden * dim).map(|_| rng.random_range(-a1..a1)).collect();
        let w2: Vec<f64> = (0..classes * hidden).map(|_| rng.random_range(-a2..a2)).collect();
        ModelParams::Mlp {
            w1: Matrix::from_vec(hidden, dim, w1).expect("shape"),
            b1: vec![0.0; hidden],
            w2: Matrix::from_vec(classes, hidden, w2).expect("shape"),
            b2: vec![0.0; classes],
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            ModelParams::Linear { weights } => weights.rows(),
            ModelParams::Mlp { w2, .. } => w2.rows(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            ModelParams::Linear { weights } => weights.cols(),
            ModelParams::Mlp { w1, .. } => w1.cols(),
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, ModelParams::Linear { .. })
    }

    pub fn linear_weights(&self) -> Option<&Matrix> {
        match self {
            ModelParams::Linear { weights } => Some(weights),
            ModelParams::Mlp { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes() < 2 {
            return Err(Error::InvalidParameter("a model needs at least 2 classes".into()));
        }
        if self.input_dim() < 1 {
            return Err(Error::InvalidParameter("input dimension must be at least 1".into()));
        }
        if let ModelParams::Mlp { w1, b1, w2, b2 } = self {
            let h = w1.rows();
            if h < 1 {
                return Err(Error::InvalidParameter("hidden width must be at least 1".into()));
            }
            for (context, expected, got) in [
                ("mlp layer-1 bias", h, b1.len()),
                ("mlp layer-2 width", h, w2.cols()),
                ("mlp layer-2 bias", w2.rows(), b2.len()),
            ] {
                if expected != got {
                    return Err(Error::DimensionMismatch { context, expected, got });
                }
            }
        }
        ensure_finite(&self.flat(), "model parameters")
    }

    pub fn param_count(&self) -> usize {
        match self {
            ModelParams::Linear { weights } => weights.as_slice().len(),
            ModelParams::Mlp { w1, b1, w2, b2 } => {
                w1.as_slice().len() + b1.len() + w2.as_slice().len() + b2.len()
            }
        }
    }

    /// Parameters concatenated in declaration order.
    pub fn flat(&self) -> Vec<f64> {
        match self {
            ModelParams::Linear { weights } => weights.as_slice().to_vec(),
            ModelParams::Mlp { w1, b1, w2, b2 } => {
                let mut v = Vec::with_capacity(self.param_count());
                v.extend_from_slice(w1.as_slice());
                v.extend_from_slice(b1);
                v.extend_from_slice(w2.as_slice());
                v.extend_from_slice(b2);
                v
            }
        }
    }

    pub fn set_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_count() {
            return Err(Error::DimensionMismatch {
                context: "flat parameters",
                expected: self.param_count(),
                got: values.len(),
            });
        }
        let mut rest = values;
        for slot in self.slots_mut() {
            let (head, tail) = rest.split_at(slot.len());
            slot.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Mutable views of every parameter block, in `flat` order.
    pub fn slots_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            ModelParams::Linear { weights } => vec![weights.as_mut_slice()],
            ModelParams::Mlp { w1, b1, w2, b2 } => vec![
                w1.as_mut_slice(),
                b1.as_mut_slice(),
                w2.as_mut_slice(),
                b2.as_mut_slice(),
            ],
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            ModelParams::Linear { weights } => ModelParams::linear_zeros(weights.rows(), weights.cols()),
            ModelParams::Mlp { w1, w2, .. } => ModelParams::Mlp {
                w1: Matrix::zeros(w1.rows(), w1.cols()),
                b1: vec![0.0; w1.rows()],
                w2: Matrix::zeros(w2.rows(), w2.cols()),
                b2: vec![0.0; w2.rows()],
            },
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "model input",
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        match self {
            ModelParams::Linear { weights } => weights.mul_vec(x),
            ModelParams::Mlp { w1, b1, w2, b2 } => {
                let hidden = hidden_activations(w1, b1, x);
                let mut s = w2.mul_vec(&hidden);
                for (si, bi) in s.iter_mut().zip(b2) {
                    *si += bi;
                }
                s
            }
        }
    }

    /// Gradient with respect to `x` of `⟨score_grad, f(x)⟩`.
    pub(crate) fn input_gradient(&self, x: &[f64], score_grad: &[f64]) -> Vec<f64> {
        match self {
            ModelParams::Linear { weights } => weights.tmul_vec(score_grad),
            ModelParams::Mlp { w1, b1, w2, .. } => {
                let pre = pre_activations(w1, b1, x);
                let mut dz = w2.tmul_vec(score_grad);
                for (d, z) in dz.iter_mut().zip(&pre) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                w1.tmul_vec(&dz)
            }
        }
    }

    /// `grad += scale · ∂⟨score_grad, f(x)⟩/∂θ`.
    fn accumulate_param_grad(&self, grad: &mut ModelParams, x: &[f64], score_grad: &[f64], scale: f64) {
        match (self, grad) {
            (ModelParams::Linear { .. }, ModelParams::Linear { weights: gw }) => {
                gw.add_outer(scale, score_grad, x);
            }
            (
                ModelParams::Mlp { w1, b1, w2, .. },
                ModelParams::Mlp {
                    w1: g1,
                    b1: gb1,
                    w2: g2,
                    b2: gb2,
                },
            ) => {
                let pre = pre_activations(w1, b1, x);
                let hidden: Vec<f64> = pre.iter().map(|&z| z.max(0.0)).collect();
                g2.add_outer(scale, score_grad, &hidden);
                for (g, s) in gb2.iter_mut().zip(score_grad) {
                    *g += scale * s;
                }
                let mut dz = w2.tmul_vec(score_grad);
                for (d, z) in dz.iter_mut().zip(&pre) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                g1.add_outer(scale, &dz, x);
                for (g, d) in gb1.iter_mut().zip(&dz) {
                    *g += scale * d;
                }
            }
            _ => unreachable!("gradient buffer built with zeros_like"),
        }
    }
}

fn pre_activations(w1: &Matrix, b1: &[f64], x: &[f64]) -> Vec<f64> {
    let mut z = w1.mul_vec(x);
    for (zi, bi) in z.iter_mut().zip(b1) {
        *zi += bi;
    }
    z
}

fn hidden_activations(w1: &Matrix, b1: &[f64], x: &[f64]) -> Vec<f64> {
    pre_activations(w1, b1, x).into_iter().map(|z| z.max(0.0)).collect()
}

/// Class scores `f(x; θ)`.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    ensure_finite(x, "model input")?;
    Ok(params.forward_unchecked(x))
}

/// Predicted class; ties go to the lowest index.
pub fn predict(params: &ModelParams, x: &[f64]) -> Result<usize> {
    Ok(argmax(&forward(params, x)?))
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn logsumexp(scores: &[f64]) -> f64 {
    let top = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    top + scores.iter().map(|&s| (s - top).exp()).sum::<f64>().ln()
}

pub fn log_softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    ensure_finite(scores, "scores")?;
    let lse = logsumexp(scores);
    Ok(scores.iter().map(|&s| s - lse).collect())
}

pub fn softmax(scores: &[f64]) -> Result<Vec<f64>> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    ensure_finite(scores, "scores")?;
    let top = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s));
    let raw: Vec<f64> = scores.iter().map(|&s| (s - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(raw.into_iter().map(|r| r / total).collect())
}

fn check_label(y: usize, classes: usize) -> Result<()> {
    if y >= classes {
        Err(Error::LabelOutOfRange { label: y, classes })
    } else {
        Ok(())
    }
}

/// `−log softmax(scores)_y`.
pub fn cross_entropy(scores: &[f64], y: usize) -> Result<f64> {
    check_label(y, scores.len())?;
    let lp = log_softmax(scores)?;
    Ok((-lp[y]).max(0.0))
}

/// `KL(softmax(p) ‖ softmax(q))`.
pub fn kl_divergence(scores_p: &[f64], scores_q: &[f64]) -> Result<f64> {
    if scores_p.len() != scores_q.len() {
        return Err(Error::DimensionMismatch {
            context: "kl scores",
            expected: scores_p.len(),
            got: scores_q.len(),
        });
    }
    let lp = log_softmax(scores_p)?;
    let lq = log_softmax(scores_q)?;
    Ok(kl_from_logs(&lp, &lq))
}

fn kl_from_logs(lp: &[f64], lq: &[f64]) -> f64 {
    lp.iter()
        .zip(lq)
        .map(|(&a, &b)| a.exp() * (a - b))
        .sum::<f64>()
        .max(0.0)
}

/// `CE(f(x), y) + β · KL(f(x) ‖ f(x_adv))` for a supplied adversarial point.
pub fn trades_loss(params: &ModelParams, x: &[f64], x_adv: &[f64], y: usize, beta: f64) -> Result<f64> {
    check_label(y, params.classes())?;
    let clean = forward(params, x)?;
    let adv = forward(params, x_adv)?;
    Ok(cross_entropy(&clean, y)? + beta * kl_divergence(&clean, &adv)?)
}

/// `scores_y − max_{j≠y} scores_j`.
pub fn margin(scores: &[f64], y: usize) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::InvalidParameter("margin needs at least 2 scores".into()));
    }
    check_label(y, scores.len())?;
    Ok(scores[y] - scores[runner_up(scores, y)])
}

/// Highest-scoring class other than `y` (lowest index on ties).
pub(crate) fn runner_up(scores: &[f64], y: usize) -> usize {
    let mut best = usize::MAX;
    for (j, &s) in scores.iter().enumerate() {
        if j != y && (best == usize::MAX || s > scores[best]) {
            best = j;
        }
    }
    best
}

/// Ramp loss: 1 for `t ≤ 0`, `1 − t/γ` on `(0, γ)`, 0 for `t ≥ γ`.
pub fn ramp_loss(t: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(format!("ramp margin must be > 0, got {gamma}")));
    }
    Ok(if t <= 0.0 {
        1.0
    } else if t < gamma {
        1.0 - t / gamma
    } else {
        0.0
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Cross-entropy at the adversarial point (clean point when none is given).
    CrossEntropy,
    /// `KL(f(x) ‖ f(x_adv))`.
    Kl,
    /// Clean cross-entropy plus `β` times the clean-to-adversarial KL.
    Trades,
    /// Ramp loss of the margin at the adversarial point.
    RampMargin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub beta: f64,
    pub gamma: f64,
}

impl LossSpec {
    pub fn trades(beta: f64) -> Self {
        Self {
            kind: LossKind::Trades,
            beta,
            gamma: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("beta must be ≥ 0, got {}", self.beta)));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!("gamma must be > 0, got {}", self.gamma)));
        }
        Ok(())
    }
}

/// Inputs, labels and (optionally) their adversarial counterparts.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledBatch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
    pub adversarial: Option<Matrix>,
}

impl LabeledBatch {
    pub fn new(inputs: Matrix, labels: Vec<usize>, adversarial: Option<Matrix>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: inputs.rows(),
                got: labels.len(),
            });
        }
        if let Some(adv) = &adversarial {
            if adv.rows() != inputs.rows() || adv.cols() != inputs.cols() {
                return Err(Error::DimensionMismatch {
                    context: "adversarial inputs",
                    expected: inputs.rows() * inputs.cols(),
                    got: adv.rows() * adv.cols(),
                });
            }
        }
        Ok(Self {
            inputs,
            labels,
            adversarial,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn adversarial_row(&self, i: usize) -> &[f64] {
        match &self.adversarial {
            Some(adv) => adv.row(i),
            None => self.inputs.row(i),
        }
    }
}

/// Loss of one example and its gradients with respect to the clean and adversarial scores.
pub(crate) struct ExampleLoss {
    pub loss: f64,
    pub clean_grad: Option<Vec<f64>>,
    pub adv_grad: Option<Vec<f64>>,
}

pub(crate) fn example_loss(
    params: &ModelParams,
    x: &[f64],
    x_adv: &[f64],
    y: usize,
    spec: &LossSpec,
    want_grad: bool,
) -> Result<ExampleLoss> {
    let k = params.classes();
    check_label(y, k)?;
    match spec.kind {
        LossKind::CrossEntropy => {
            let s = forward(params, x_adv)?;
            let q = softmax(&s)?;
            let loss = cross_entropy(&s, y)?;
            let adv_grad = want_grad.then(|| {
                let mut g = q;
                g[y] -= 1.0;
                g
            });
            Ok(ExampleLoss {
                loss,
                clean_grad: None,
                adv_grad,
            })
        }
        LossKind::Kl | LossKind::Trades => {
            let s = forward(params, x)?;
            let s_adv = forward(params, x_adv)?;
            let lp = log_softmax(&s)?;
            let lq = log_softmax(&s_adv)?;
            let kl = kl_from_logs(&lp, &lq);
            let beta = if spec.kind == LossKind::Kl { 1.0 } else { spec.beta };
            let ce = if spec.kind == LossKind::Trades { (-lp[y]).max(0.0) } else { 0.0 };
            let loss = ce + beta * kl;
            if !want_grad {
                return Ok(ExampleLoss {
                    loss,
                    clean_grad: None,
                    adv_grad: None,
                });
            }
            let p: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
            let q: Vec<f64> = lq.iter().map(|v| v.exp()).collect();
            let mut clean_grad: Vec<f64> = (0..k)
                .map(|j| beta * p[j] * ((lp[j] - lq[j]) - kl))
                .collect();
            if spec.kind == LossKind::Trades {
                for (j, g) in clean_grad.iter_mut().enumerate() {
                    *g += p[j] - if j == y { 1.0 } else { 0.0 };
                }
            }
            let adv_grad: Vec<f64> = q.iter().zip(&p).map(|(qj, pj)| beta * (qj - pj)).collect();
            Ok(ExampleLoss {
                loss,
                clean_grad: Some(clean_grad),
                adv_grad: Some(adv_grad),
            })
        }
        LossKind::RampMargin => {
            let s = forward(params, x_adv)?;
            let m = margin(&s, y)?;
            let loss = ramp_loss(m, spec.gamma)?;
            let adv_grad = want_grad.then(|| {
                let mut g = vec![0.0; k];
                if m > 0.0 && m < spec.gamma {
                    let slope = -1.0 / spec.gamma;
                    g[y] += slope;
                    g[runner_up(&s, y)] -= slope;
                }
                g
            });
            Ok(ExampleLoss {
                loss,
                clean_grad: None,
                adv_grad,
            })
        }
    }
}

/// Class-weighted batch loss `Σ_k w_k L_k` and its exact parameter gradient.
///
/// `L_0` is the batch mean and `L_k` the mean over the batch's class-`(k−1)`
/// members. A class absent from the batch contributes nothing. The
/// adversarial inputs are treated as constants.
pub fn loss_and_grad(
    params: &ModelParams,
    batch: &LabeledBatch,
    spec: &LossSpec,
    class_weights: &WeightSimplex,
) -> Result<(f64, ModelParams)> {
    if batch.is_empty() {
        return Err(Error::Empty("batch"));
    }
    spec.validate()?;
    let k = params.classes();
    if class_weights.len() != k + 1 {
        return Err(Error::DimensionMismatch {
            context: "class weights",
            expected: k + 1,
            got: class_weights.len(),
        });
    }
    WeightSimplex::new(class_weights.as_slice().to_vec())?;
    if batch.inputs.cols() != params.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "batch inputs",
            expected: params.input_dim(),
            got: batch.inputs.cols(),
        });
    }
    let coefficients = example_coefficients(&batch.labels, class_weights, k)?;

    let mut grad = params.zeros_like();
    let mut total = 0.0;
    for (i, &y) in batch.labels.iter().enumerate() {
        let c = coefficients[i];
        let x = batch.inputs.row(i);
        let x_adv = batch.adversarial_row(i);
        let ex = example_loss(params, x, x_adv, y, spec, c != 0.0)?;
        total += c * ex.loss;
        if let Some(g) = &ex.clean_grad {
            params.accumulate_param_grad(&mut grad, x, g, c);
        }
        if let Some(g) = &ex.adv_grad {
            params.accumulate_param_grad(&mut grad, x_adv, g, c);
        }
    }
    if !total.is_finite() {
        return Err(Error::NonFinite("batch loss".into()));
    }
    Ok((total, grad))
}

/// Per-example factor `(w_0 + w_{y+1} · n/n_y) / n` of the weighted batch objective.
pub(crate) fn example_coefficients(labels: &[usize], weights: &WeightSimplex, classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; classes];
    for &y in labels {
        check_label(y, classes)?;
        counts[y] += 1;
    }
    let n = labels.len() as f64;
    let w = weights.as_slice();
    Ok(labels
        .iter()
        .map(|&y| (w[0] + w[y + 1] * (n / counts[y] as f64)) / n)
        .collect())
}
