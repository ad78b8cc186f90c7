//! Adversarial training with class-reweighted objectives.
//!
//! Every strategy shares one loop: attack each minibatch, take an SGD step on
//! the weighted TRADES objective, then measure per-class adversarial losses on
//! the training and validation splits. Only the rule producing the class
//! weights differs.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::adversary::{attack_batch, AttackConfig};
use crate::datagen::Dataset;
use crate::error::{Error, Result};
use crate::hedge::{audit_mw_regret, audit_no_regret, AuditReport, Hedge, MwRegretReport, LossHistory, WeightSimplex};
use crate::matrix::Matrix;
use crate::models::{example_loss, loss_and_grad, LabeledBatch, LossSpec, ModelParams};
use crate::rng::{substream, Tag};

/// How the class weights of each epoch are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "weights", rename_all = "snake_case")]
pub enum Strategy {
    /// Hedge over the normalised validation losses of earlier epochs.
    Wat,
    /// All weight on the average loss (plain TRADES).
    Uniform,
    /// The same simplex point in every epoch.
    FixedWeights(Vec<f64>),
}

impl Strategy {
    pub fn label(&self) -> &'static str {
        match self {
            Strategy::Wat => "wat",
            Strategy::Uniform => "uniform",
            Strategy::FixedWeights(_) => "fixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    /// Bias-free linear scorer `x ↦ Wx`, initialised at zero.
    Linear,
    /// One ReLU hidden layer.
    Mlp { hidden: usize },
}

impl ModelSpec {
    pub fn init(&self, classes: usize, dim: usize, seed: u64) -> ModelParams {
        match self {
            ModelSpec::Linear => ModelParams::linear_zeros(classes, dim),
            ModelSpec::Mlp { hidden } => {
                let mut rng = substream(seed, Tag::Init, 0);
                ModelParams::mlp_init(classes, dim, *hidden, &mut rng)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub eta: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Attack used to build training minibatches and the training-loss report.
    pub attack: AttackConfig,
    /// Attack used for the validation losses that drive the weights.
    pub val_attack: AttackConfig,
    /// Losses are mapped to `min(L, clip) / clip` before entering the weight update.
    pub loss_clip: f64,
    pub seed: u64,
    pub strategy: Strategy,
    pub model: ModelSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 0.1,
            eta: 0.1,
            beta: 6.0,
            batch_size: 128,
            momentum: 0.9,
            weight_decay: 2e-4,
            attack: AttackConfig::training(),
            val_attack: AttackConfig::evaluation().with_inner_loss(crate::adversary::InnerLoss::Kl),
            loss_clip: 5.0,
            seed: 0,
            strategy: Strategy::Wat,
            model: ModelSpec::Linear,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidParameter("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidParameter("batch_size must be positive".into()));
        }
        let positive = [("learning_rate", self.learning_rate), ("loss_clip", self.loss_clip)];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("eta", self.eta),
            ("beta", self.beta),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.momentum >= 1.0 {
            return Err(Error::InvalidParameter("momentum must be below 1".into()));
        }
        self.attack.validate()?;
        self.val_attack.validate()?;
        if let Strategy::FixedWeights(w) = &self.strategy {
            if w.len() != classes + 1 {
                return Err(Error::DimensionMismatch {
                    context: "fixed class weights",
                    expected: classes + 1,
                    got: w.len(),
                });
            }
            WeightSimplex::new(w.clone())?;
        }
        if let ModelSpec::Mlp { hidden: 0 } = self.model {
            return Err(Error::InvalidParameter("hidden width must be positive".into()));
        }
        Ok(())
    }
}

/// Losses `[L_0, L_1, …, L_K]`: the overall mean followed by one mean per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassLossVector(pub Vec<f64>);

impl ClassLossVector {
    pub fn average(&self) -> f64 {
        self.0[0]
    }

    pub fn class(&self, k: usize) -> f64 {
        self.0[k + 1]
    }

    /// Largest per-class loss.
    pub fn worst(&self) -> f64 {
        self.0[1..].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn normalized(&self, clip: f64) -> Vec<f64> {
        self.0.iter().map(|&l| l.min(clip) / clip).collect()
    }
}

/// Adversarial TRADES losses of `params` on every example of `split`, reduced
/// to the overall and per-class means.
pub fn epoch_class_losses(
    params: &ModelParams,
    split: &Dataset,
    attack: &AttackConfig,
    beta: f64,
    seed: u64,
    tag: Tag,
    round: u64,
) -> Result<ClassLossVector> {
    split.require_all_classes()?;
    let adv = attack_batch(params, &split.inputs, &split.labels, attack, seed, tag, round, 0)?;
    let spec = LossSpec::trades(beta);
    let k = split.classes;
    let mut sums = vec![0.0; k];
    let mut total = 0.0;
    for (i, &y) in split.labels.iter().enumerate() {
        let l = example_loss(params, split.inputs.row(i), adv.row(i), y, &spec, false)?.loss;
        sums[y] += l;
        total += l;
    }
    let mut out = Vec::with_capacity(k + 1);
    out.push(total / split.len() as f64);
    for (c, s) in sums.iter().enumerate() {
        out.push(s / split.class_indices[c].len() as f64);
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("class losses at epoch {round}")));
    }
    Ok(ClassLossVector(out))
}

/// Splits the examples into `ceil(n / batch_size)` batches so that every
/// class is spread as evenly as possible: member `j` of a class with `n_k`
/// members lands in batch `⌊j·B/n_k⌋`.
pub fn stratified_batches(data: &Dataset, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    let n = data.len();
    let b = n.div_ceil(batch_size).max(1);
    let mut batches = vec![Vec::new(); b];
    for (k, members) in data.class_indices.iter().enumerate() {
        let mut order = members.clone();
        let mut rng = substream(seed, Tag::Batches, crate::rng::pair_index(epoch, k as u64));
        order.shuffle(&mut rng);
        let nk = order.len();
        for (j, idx) in order.into_iter().enumerate() {
            batches[j * b / nk].push(idx);
        }
    }
    batches.retain(|batch| !batch.is_empty());
    batches
}

/// Picks the epoch whose worst validation class loss is smallest (earliest on ties).
/// Returns a 1-based epoch number.
pub fn select_model(val_losses: &[ClassLossVector]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (t, l) in val_losses.iter().enumerate() {
        let w = l.worst();
        if !w.is_finite() {
            return Err(Error::NonFinite(format!("validation loss at epoch {}", t + 1)));
        }
        if best.is_none_or(|(_, b)| w < b) {
            best = Some((t, w));
        }
    }
    best.map(|(t, _)| t + 1).ok_or(Error::Empty("validation history"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Weights the epoch trained with.
    pub weights: WeightSimplex,
    pub train_losses: ClassLossVector,
    pub val_losses: ClassLossVector,
    /// Clipped and rescaled validation losses fed to the weight update.
    pub normalized_val: Vec<f64>,
    pub mean_batch_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightAudit {
    pub no_regret: AuditReport,
    pub mw_regret: Vec<MwRegretReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub strategy: Strategy,
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch chosen by [`select_model`].
    pub selected_epoch: usize,
    pub selected: ModelParams,
    pub final_params: ModelParams,
    /// Parameters after every epoch (linear models only; empty otherwise).
    pub snapshots: Vec<ModelParams>,
    pub audit: Option<WeightAudit>,
}

impl TrainRecord {
    pub fn val_history(&self) -> Vec<ClassLossVector> {
        self.epochs.iter().map(|e| e.val_losses.clone()).collect()
    }
}

struct Sgd {
    velocity: Vec<f64>,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    fn step(&mut self, params: &mut ModelParams, grad: &ModelParams) -> Result<()> {
        let mut theta = params.flat();
        let g = grad.flat();
        for ((t, v), gi) in theta.iter_mut().zip(self.velocity.iter_mut()).zip(&g) {
            let d = gi + self.weight_decay * *t;
            *v = self.momentum * *v + d;
            *t -= self.lr * *v;
        }
        params.set_flat(&theta)
    }
}

/// Runs the full training loop for one strategy.
pub fn train(train_set: &Dataset, val_set: &Dataset, cfg: &TrainConfig) -> Result<TrainRecord> {
    let k = train_set.classes;
    if val_set.classes != k {
        return Err(Error::DimensionMismatch {
            context: "validation classes",
            expected: k,
            got: val_set.classes,
        });
    }
    if val_set.dim() != train_set.dim() {
        return Err(Error::DimensionMismatch {
            context: "validation inputs",
            expected: train_set.dim(),
            got: val_set.dim(),
        });
    }
    cfg.validate(k)?;
    train_set.require_all_classes()?;
    val_set.require_all_classes()?;

    let mut params = cfg.model.init(k, train_set.dim(), cfg.seed);
    let mut opt = Sgd {
        velocity: vec![0.0; params.param_count()],
        lr: cfg.learning_rate,
        momentum: cfg.momentum,
        weight_decay: cfg.weight_decay,
    };
    let mut hedge = Hedge::new(k + 1, cfg.eta)?;
    let mut history = LossHistory::new(cfg.eta);
    let spec = LossSpec::trades(cfg.beta);
    let keep_all = matches!(cfg.model, ModelSpec::Linear);

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut snapshots = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;

    for epoch in 1..=cfg.epochs {
        let weights = match &cfg.strategy {
            Strategy::Wat => hedge.weights()?,
            Strategy::Uniform => WeightSimplex::average_only(k),
            Strategy::FixedWeights(w) => WeightSimplex::new(w.clone())?,
        };
        let round = epoch as u64;
        let batches = stratified_batches(train_set, cfg.batch_size, cfg.seed, round);
        let mut offset = 0u64;
        let mut loss_sum = 0.0;
        for (b, rows) in batches.iter().enumerate() {
            let inputs: Matrix = train_set.inputs.select_rows(rows);
            let labels: Vec<usize> = rows.iter().map(|&i| train_set.labels[i]).collect();
            let adv = attack_batch(&params, &inputs, &labels, &cfg.attack, cfg.seed, Tag::TrainAttack, round, offset)?;
            offset += rows.len() as u64;
            let batch = LabeledBatch::new(inputs, labels, Some(adv))?;
            let (loss, grad) = loss_and_grad(&params, &batch, &spec, &weights).map_err(|e| match e {
                Error::NonFinite(_) => Error::NonFinite(format!("loss at epoch {epoch}, batch {}", b + 1)),
                other => other,
            })?;
            loss_sum += loss;
            opt.step(&mut params, &grad)?;
            if params.flat().iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameters at epoch {epoch}, batch {}", b + 1)));
            }
        }

        let train_losses = epoch_class_losses(&params, train_set, &cfg.attack, cfg.beta, cfg.seed, Tag::TrainLoss, round)?;
        let val_losses = epoch_class_losses(&params, val_set, &cfg.val_attack, cfg.beta, cfg.seed, Tag::ValLoss, round)?;
        let normalized_val = val_losses.normalized(cfg.loss_clip);
        hedge.observe(&normalized_val)?;
        history.push(normalized_val.clone())?;

        let worst = val_losses.worst();
        if best.as_ref().is_none_or(|(_, b, _)| worst < *b) {
            best = Some((epoch, worst, params.clone()));
        }
        if keep_all {
            snapshots.push(params.clone());
        }
        epochs.push(EpochRecord {
            epoch,
            weights,
            train_losses,
            val_losses,
            normalized_val,
            mean_batch_loss: loss_sum / batches.len() as f64,
        });
    }

    let audit = if cfg.strategy == Strategy::Wat && cfg.eta > 0.0 {
        let weights: Vec<WeightSimplex> = epochs.iter().map(|e| e.weights.clone()).collect();
        let no_regret = audit_no_regret(&history, &weights)?;
        let mw_regret = (0..=k)
            .map(|d| audit_mw_regret(&history.rounds, &weights, cfg.eta, d))
            .collect::<Result<Vec<_>>>()?;
        Some(WeightAudit { no_regret, mw_regret })
    } else {
        None
    };

    let (selected_epoch, _, selected) = best.ok_or(Error::Empty("epochs"))?;
    Ok(TrainRecord {
        seed: cfg.seed,
        strategy: cfg.strategy.clone(),
        epochs,
        selected_epoch,
        selected,
        final_params: params,
        snapshots,
        audit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{gaussian_mixture, stratified_split, ClassSpec, MixtureSpec};

    fn small_data(seed: u64) -> (Dataset, Dataset) {
        let spec = MixtureSpec {
            classes: vec![
                ClassSpec { mean: vec![0.3, 0.7], std: 0.08, count: 60 },
                ClassSpec { mean: vec![0.5, 0.5], std: 0.15, count: 60 },
                ClassSpec { mean: vec![0.7, 0.3], std: 0.08, count: 60 },
            ],
            domain: (0.0, 1.0),
            seed,
        };
        let data = gaussian_mixture(&spec).unwrap();
        let (train, val) = stratified_split(&data, 20).unwrap();
        (train, val)
    }

    fn quick_cfg(strategy: Strategy) -> TrainConfig {
        let mut attack = AttackConfig::training();
        attack.steps = 3;
        attack.epsilon = 0.03;
        attack.step_size = 0.01;
        let mut val_attack = attack;
        val_attack.steps = 5;
        TrainConfig {
            epochs: 4,
            learning_rate: 0.5,
            eta: 0.0,
            batch_size: 30,
            attack,
            val_attack,
            strategy,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn selection_takes_minimax_epoch_earliest_on_ties() {
        let h = vec![
            ClassLossVector(vec![0.5, 0.9, 0.1]),
            ClassLossVector(vec![0.5, 0.4, 0.6]),
            ClassLossVector(vec![0.4, 0.6, 0.2]),
        ];
        assert_eq!(select_model(&h).unwrap(), 2);
        let tied = vec![ClassLossVector(vec![0.0, 0.5, 0.5]), ClassLossVector(vec![0.0, 0.5, 0.1])];
        assert_eq!(select_model(&tied).unwrap(), 1);
        assert!(select_model(&[]).is_err());
    }

    #[test]
    fn batches_partition_and_stratify() {
        let (train, _) = small_data(1);
        let batches = stratified_batches(&train, 30, 9, 1);
        assert_eq!(batches.len(), 4);
        let mut all: Vec<usize> = batches.concat();
        all.sort_unstable();
        assert_eq!(all, (0..train.len()).collect::<Vec<_>>());
        for b in &batches {
            let mut counts = [0usize; 3];
            for &i in b {
                counts[train.labels[i]] += 1;
            }
            assert_eq!(counts, [10, 10, 10]);
        }
    }

    #[test]
    fn first_epoch_is_uniform_and_weights_stay_on_simplex() {
        let (train, val) = small_data(2);
        let mut cfg = quick_cfg(Strategy::Wat);
        cfg.eta = 0.5;
        let rec = train_fn(&train, &val, &cfg);
        assert_eq!(rec.epochs.len(), 4);
        for w in rec.epochs[0].weights.as_slice() {
            assert!((w - 0.25).abs() < 1e-15);
        }
        for e in &rec.epochs {
            let s: f64 = e.weights.as_slice().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(e.normalized_val.iter().all(|v| (0.0..=1.0).contains(v)));
        }
        assert!(rec.audit.is_some());
        assert_eq!(rec.snapshots.len(), 4);
    }

    #[test]
    fn eta_zero_matches_uniform_losses() {
        let (train, val) = small_data(3);
        let wat = train_fn(&train, &val, &quick_cfg(Strategy::Wat));
        let uni = train_fn(&train, &val, &quick_cfg(Strategy::Uniform));
        assert!(wat.audit.is_none());
        for (a, b) in wat.epochs.iter().zip(&uni.epochs) {
            for (x, y) in a.val_losses.as_slice().iter().zip(b.val_losses.as_slice()) {
                assert!((x - y).abs() <= 1e-9, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (train, val) = small_data(4);
        let mut cfg = quick_cfg(Strategy::Wat);
        cfg.eta = 0.2;
        let a = train_fn(&train, &val, &cfg);
        let b = train_fn(&train, &val, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn missing_validation_class_is_reported() {
        let (train, val) = small_data(5);
        let keep: Vec<usize> = (0..val.len()).filter(|&i| val.labels[i] != 2).collect();
        let inputs = val.inputs.select_rows(&keep);
        let labels: Vec<usize> = keep.iter().map(|&i| val.labels[i]).collect();
        let partial = Dataset::new(inputs, labels, 3, "partial").unwrap();
        let err = super::train(&train, &partial, &quick_cfg(Strategy::Wat)).unwrap_err();
        assert_eq!(err, Error::MissingClass(2));
    }

    #[test]
    fn fixed_weights_are_validated() {
        let (train, val) = small_data(6);
        let cfg = quick_cfg(Strategy::FixedWeights(vec![0.5, 0.5]));
        assert!(super::train(&train, &val, &cfg).is_err());
        let cfg = quick_cfg(Strategy::FixedWeights(vec![0.0, 0.2, 0.6, 0.2]));
        let rec = train_fn(&train, &val, &cfg);
        assert!(rec.epochs.iter().all(|e| e.weights.as_slice() == [0.0, 0.2, 0.6, 0.2]));
    }

    fn train_fn(train_set: &Dataset, val: &Dataset, cfg: &TrainConfig) -> TrainRecord {
        train(train_set, val, cfg).unwrap()
    }
}
