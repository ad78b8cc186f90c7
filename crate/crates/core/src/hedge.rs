//! Hedge (exponential multiplicative weights) over the `K + 1` decisions of
//! worst-class training, and audits of the no-regret guarantees.
//!
//! Decision 0 is the average loss; decision `k ≥ 1` is the loss of class
//! `k − 1`. Weights grow with cumulative loss, so the learner leans towards
//! whichever decision is currently hurting most:
//!
//! ```text
//! w_k = exp(η · s_k) / Σ_j exp(η · s_j),     s_k = Σ_{rounds so far} L_k
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// Nonnegative weights over the `K + 1` decisions, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WeightSimplex(Vec<f64>);

impl WeightSimplex {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::Empty("weight vector"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::NotOnSimplex(format!("entry {w} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::NotOnSimplex(format!("entries sum to {total}")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(len: usize) -> Self {
        Self(vec![1.0 / len as f64; len])
    }

    /// All mass on decision 0 (the plain average loss).
    pub fn average_only(classes: usize) -> Self {
        let mut w = vec![0.0; classes + 1];
        w[0] = 1.0;
        Self(w)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of classes represented (`len − 1`).
    pub fn classes(&self) -> usize {
        self.0.len() - 1
    }

    pub fn average_weight(&self) -> f64 {
        self.0[0]
    }

    pub fn class_weight(&self, class: usize) -> f64 {
        self.0[class + 1]
    }
}

impl TryFrom<Vec<f64>> for WeightSimplex {
    type Error = Error;
    fn try_from(value: Vec<f64>) -> Result<Self> {
        WeightSimplex::new(value)
    }
}

impl From<WeightSimplex> for Vec<f64> {
    fn from(value: WeightSimplex) -> Self {
        value.0
    }
}

/// Uniform `1/(K+1)` starting weights.
pub fn init_weights(classes: usize) -> Result<WeightSimplex> {
    if classes == 0 {
        return Err(Error::InvalidParameter("class count must be at least 1".into()));
    }
    Ok(WeightSimplex::uniform(classes + 1))
}

/// Hedge weights from cumulative losses. `eta = 0` yields exactly uniform weights.
pub fn hedge_weights(cumulative: &[f64], eta: f64) -> Result<WeightSimplex> {
    if cumulative.is_empty() {
        return Err(Error::Empty("cumulative losses"));
    }
    ensure_finite(cumulative, "cumulative losses")?;
    if !eta.is_finite() || eta < 0.0 {
        return Err(Error::InvalidParameter(format!("eta must be finite and ≥ 0, got {eta}")));
    }
    if eta == 0.0 {
        return Ok(WeightSimplex::uniform(cumulative.len()));
    }
    let top = cumulative.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(eta * s));
    let raw: Vec<f64> = cumulative.iter().map(|&s| (eta * s - top).exp()).collect();
    let total: f64 = raw.iter().sum();
    Ok(WeightSimplex(raw.into_iter().map(|r| r / total).collect()))
}

/// Running Hedge state; keeps cumulative sums so each round costs `O(K)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hedge {
    eta: f64,
    cumulative: Vec<f64>,
}

impl Hedge {
    pub fn new(decisions: usize, eta: f64) -> Result<Self> {
        if decisions == 0 {
            return Err(Error::Empty("decision set"));
        }
        if !eta.is_finite() || eta < 0.0 {
            return Err(Error::InvalidParameter(format!("eta must be finite and ≥ 0, got {eta}")));
        }
        Ok(Self {
            eta,
            cumulative: vec![0.0; decisions],
        })
    }

    pub fn weights(&self) -> Result<WeightSimplex> {
        hedge_weights(&self.cumulative, self.eta)
    }

    pub fn observe(&mut self, losses: &[f64]) -> Result<()> {
        if losses.len() != self.cumulative.len() {
            return Err(Error::DimensionMismatch {
                context: "hedge losses",
                expected: self.cumulative.len(),
                got: losses.len(),
            });
        }
        ensure_finite(losses, "hedge losses")?;
        for (s, l) in self.cumulative.iter_mut().zip(losses) {
            *s += l;
        }
        Ok(())
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }
}

/// Validation losses fed to Hedge, one `(K+1)`-vector per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub eta: f64,
    pub rounds: Vec<Vec<f64>>,
}

impl LossHistory {
    pub fn new(eta: f64) -> Self {
        Self {
            eta,
            rounds: Vec::new(),
        }
    }

    pub fn push(&mut self, losses: Vec<f64>) -> Result<()> {
        if let Some(bad) = losses.iter().find(|l| !l.is_finite() || **l < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "history losses must be finite and nonnegative, got {bad}"
            )));
        }
        if let Some(first) = self.rounds.first() {
            if first.len() != losses.len() {
                return Err(Error::DimensionMismatch {
                    context: "loss history round",
                    expected: first.len(),
                    got: losses.len(),
                });
            }
        }
        self.rounds.push(losses);
        Ok(())
    }
}

/// Outcome of checking the worst-class no-regret guarantee on a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `max_{k ≥ 1} min_t L_k^t`.
    pub lhs: f64,
    /// `(1/T) Σ_t ⟨w^t, L^t⟩ + ln(K+1)/(Tη)`.
    pub rhs: f64,
    /// Per class: `mean_t L_k^t ≥ min_t L_k^t / (1 − η)`.
    pub premise_holds: Vec<bool>,
    pub inequality_holds: bool,
    /// `η ≤ 1/2` and every loss in `[0, 1]`.
    pub in_regime: bool,
    pub rounds: usize,
    pub eta: f64,
}

impl AuditReport {
    pub fn premises_all_hold(&self) -> bool {
        self.premise_holds.iter().all(|&p| p)
    }

    /// The guarantee is violated only if its assumptions held and the bound did not.
    pub fn is_violation(&self) -> bool {
        self.in_regime && self.premises_all_hold() && !self.inequality_holds
    }
}

pub fn audit_no_regret(history: &LossHistory, weights_per_round: &[WeightSimplex]) -> Result<AuditReport> {
    let rounds = &history.rounds;
    if rounds.is_empty() {
        return Err(Error::Empty("loss history"));
    }
    if weights_per_round.len() != rounds.len() {
        return Err(Error::DimensionMismatch {
            context: "weights per round",
            expected: rounds.len(),
            got: weights_per_round.len(),
        });
    }
    let eta = history.eta;
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("audit requires eta > 0, got {eta}")));
    }
    let decisions = rounds[0].len();
    if decisions < 2 {
        return Err(Error::InvalidParameter("need the average decision plus at least one class".into()));
    }
    let t = rounds.len() as f64;

    let mut weighted = 0.0;
    for (losses, w) in rounds.iter().zip(weights_per_round) {
        if w.len() != decisions || losses.len() != decisions {
            return Err(Error::DimensionMismatch {
                context: "audit round",
                expected: decisions,
                got: w.len().min(losses.len()),
            });
        }
        weighted += losses.iter().zip(w.as_slice()).map(|(l, p)| l * p).sum::<f64>();
    }
    let rhs = weighted / t + ((decisions as f64).ln()) / (t * eta);

    let mut lhs = f64::NEG_INFINITY;
    let mut premise_holds = Vec::with_capacity(decisions - 1);
    for k in 1..decisions {
        let min = rounds.iter().map(|r| r[k]).fold(f64::INFINITY, f64::min);
        let mean = rounds.iter().map(|r| r[k]).sum::<f64>() / t;
        lhs = lhs.max(min);
        premise_holds.push(mean >= min / (1.0 - eta));
    }
    let bounded = rounds.iter().flatten().all(|&l| (0.0..=1.0).contains(&l));

    Ok(AuditReport {
        lhs,
        rhs,
        premise_holds,
        inequality_holds: lhs <= rhs,
        in_regime: eta <= 0.5 && bounded,
        rounds: rounds.len(),
        eta,
    })
}

/// Outcome of checking the multiplicative-weights regret inequality for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwRegretReport {
    pub decision: usize,
    /// `Σ_t ⟨C^t, p^t⟩`.
    pub lhs: f64,
    /// `Σ_t C_k^t − η Σ_t |C_k^t| − ln(n)/η`, `n` the number of decisions.
    pub rhs: f64,
    pub holds: bool,
    pub eta_in_regime: bool,
}

pub fn audit_mw_regret(
    cost_history: &[Vec<f64>],
    weights_per_round: &[WeightSimplex],
    eta: f64,
    decision: usize,
) -> Result<MwRegretReport> {
    if cost_history.is_empty() {
        return Err(Error::Empty("cost history"));
    }
    if weights_per_round.len() != cost_history.len() {
        return Err(Error::DimensionMismatch {
            context: "weights per round",
            expected: cost_history.len(),
            got: weights_per_round.len(),
        });
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("audit requires eta > 0, got {eta}")));
    }
    let n = cost_history[0].len();
    if decision >= n {
        return Err(Error::InvalidParameter(format!("decision {decision} out of range for {n} decisions")));
    }
    let mut lhs = 0.0;
    let mut own = 0.0;
    let mut own_abs = 0.0;
    for (costs, w) in cost_history.iter().zip(weights_per_round) {
        if costs.len() != n || w.len() != n {
            return Err(Error::DimensionMismatch {
                context: "regret audit round",
                expected: n,
                got: costs.len().min(w.len()),
            });
        }
        if let Some(c) = costs.iter().find(|c| !(-1.0..=1.0).contains(*c)) {
            return Err(Error::InvalidParameter(format!("cost {c} outside [-1, 1]")));
        }
        lhs += costs.iter().zip(w.as_slice()).map(|(c, p)| c * p).sum::<f64>();
        own += costs[decision];
        own_abs += costs[decision].abs();
    }
    let rhs = own - eta * own_abs - (n as f64).ln() / eta;
    Ok(MwRegretReport {
        decision,
        lhs,
        rhs,
        holds: lhs >= rhs,
        eta_in_regime: eta <= 0.5,
    })
}

/// Replays Hedge over a cost stream, returning the weights played each round.
pub fn hedge_trajectory(costs: &[Vec<f64>], eta: f64) -> Result<Vec<WeightSimplex>> {
    let first = costs.first().ok_or(Error::Empty("cost history"))?;
    let mut hedge = Hedge::new(first.len(), eta)?;
    let mut out = Vec::with_capacity(costs.len());
    for c in costs {
        out.push(hedge.weights()?);
        hedge.observe(c)?;
    }
    Ok(out)
}
