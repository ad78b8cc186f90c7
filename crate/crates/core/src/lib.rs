//! Worst-class adversarial training.
//!
//! The crate trains classifiers against an `ℓ∞` adversary while a Hedge
//! learner shifts the objective toward the currently weakest class. It also
//! provides the evaluation metrics, the no-regret audits and the
//! generalisation-bound computations used to check the method.

pub mod adversary;
pub mod bounds;
pub mod datagen;
pub mod error;
pub mod hedge;
pub mod matrix;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod trainer;

pub use adversary::{
    attack_batch, linear_worst_case_margin, pgd_attack, project_linf, robust_error_indicator, AttackConfig, InnerLoss,
    WorstCaseMargin, DEFAULT_EPSILON,
};
pub use bounds::{
    exact_rademacher, mc_rademacher, dictionary_bound, worst_class_rhs, linear_bound_terms, BoundConfig, DictionaryBound,
    RademacherEstimate, LinearBoundReport,
};
pub use datagen::{
    gaussian_mixture, load_csv_dataset, load_csv_dataset_with_classes, stratified_split, write_csv_dataset, ClassSpec,
    Dataset, MixtureSpec,
};
pub use error::{Error, Result};
pub use hedge::{
    audit_mw_regret, audit_no_regret, hedge_trajectory, hedge_weights, init_weights, AuditReport, Hedge, MwRegretReport,
    LossHistory, WeightSimplex,
};
pub use matrix::Matrix;
pub use metrics::{class_accuracies, cv, rho, rho_values, AccSummary, Evaluation};
pub use models::{
    cross_entropy, forward, kl_divergence, loss_and_grad, margin, predict, ramp_loss, trades_loss, LabeledBatch,
    LossKind, LossSpec, ModelParams,
};
pub use trainer::{
    epoch_class_losses, select_model, train, ClassLossVector, EpochRecord, ModelSpec, Strategy, TrainConfig,
    TrainRecord, WeightAudit,
};
