//! Experiment configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wat_core::{AttackConfig, BoundConfig, ClassSpec, InnerLoss, ModelSpec, TrainConfig, DEFAULT_EPSILON};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub data: DataConfig,
    #[serde(default = "default_model")]
    pub model: ModelSpec,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub attack: AttackSection,
    #[serde(default)]
    pub methods: MethodsSection,
    #[serde(default)]
    pub bounds: BoundsSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}

fn default_model() -> ModelSpec {
    ModelSpec::Linear
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Class-conditional Gaussians, redrawn for every seed.
    Mixture {
        classes: Vec<ClassSpec>,
        #[serde(default = "unit_box")]
        domain: (f64, f64),
        /// Validation points split off each class's training draw.
        #[serde(default = "default_val")]
        val_per_class: usize,
        test_per_class: usize,
    },
    /// Fixed files; the training file is split per class into train/validation.
    Csv {
        train: PathBuf,
        test: PathBuf,
        #[serde(default = "default_val")]
        val_per_class: usize,
    },
}

fn unit_box() -> (f64, f64) {
    (0.0, 1.0)
}

fn default_val() -> usize {
    300
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub eta: f64,
    pub beta: f64,
    pub batch_size: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub loss_clip: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            eta: t.eta,
            beta: t.beta,
            batch_size: t.batch_size,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            loss_clip: t.loss_clip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Builds training minibatches.
    pub train: AttackConfig,
    /// Produces the validation losses that drive the weights.
    pub val: AttackConfig,
    /// PGD evaluation on the test split.
    pub eval: AttackConfig,
    /// Margin-loss PGD evaluation on the test split.
    pub cw: AttackConfig,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            train: AttackConfig::training(),
            val: AttackConfig::evaluation().with_inner_loss(InnerLoss::Kl),
            eval: AttackConfig::evaluation(),
            cw: AttackConfig::evaluation().with_inner_loss(InnerLoss::CwMargin),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MethodsSection {
    /// Any of `wat`, `uniform`, `fixed`.
    pub run: Vec<String>,
    /// Simplex point for the `fixed` method, `K + 1` entries.
    pub fixed_weights: Option<Vec<f64>>,
}

impl Default for MethodsSection {
    fn default() -> Self {
        Self {
            run: vec!["uniform".into(), "wat".into()],
            fixed_weights: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub enabled: bool,
    pub delta: f64,
    pub gamma: f64,
    pub weight_norm: f64,
    pub q: f64,
    pub mc_draws: usize,
}

impl Default for BoundsSection {
    fn default() -> Self {
        let b = BoundConfig::default();
        Self {
            enabled: true,
            delta: b.delta,
            gamma: b.gamma,
            weight_norm: b.weight_norm,
            q: b.q,
            mc_draws: b.mc_draws,
        }
    }
}

impl BoundsSection {
    pub fn to_core(&self, seed: u64) -> BoundConfig {
        BoundConfig {
            delta: self.delta,
            loss_bound: 1.0,
            gamma: self.gamma,
            weight_norm: self.weight_norm,
            q: self.q,
            mc_draws: self.mc_draws,
            seed,
        }
    }
}

pub const METHODS: [&str; 3] = ["uniform", "wat", "fixed"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // CSV paths are relative to the config file.
        if let DataConfig::Csv { train, test, .. } = &mut cfg.data {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [train, test] {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn classes(&self) -> Option<usize> {
        match &self.data {
            DataConfig::Mixture { classes, .. } => Some(classes.len()),
            DataConfig::Csv { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("name {:?} must be a non-empty single path component", self.name));
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.methods.run.is_empty() {
            return bad("methods.run must not be empty".into());
        }
        for m in &self.methods.run {
            if !METHODS.contains(&m.as_str()) {
                return bad(format!("unknown method {m:?}; expected one of {METHODS:?}"));
            }
        }
        if self.methods.run.iter().any(|m| m == "fixed") && self.methods.fixed_weights.is_none() {
            return bad("method \"fixed\" needs methods.fixed_weights".into());
        }
        if let DataConfig::Mixture {
            classes,
            domain,
            test_per_class,
            val_per_class,
        } = &self.data
        {
            if *test_per_class == 0 {
                return bad("data.test_per_class must be positive".into());
            }
            let spec = wat_core::MixtureSpec {
                classes: classes.clone(),
                domain: *domain,
                seed: 0,
            };
            spec.validate().map_err(|e| CliError::Config(format!("data: {e}")))?;
            if let Some(c) = classes.iter().find(|c| c.count <= *val_per_class) {
                return bad(format!(
                    "every class needs more than val_per_class = {val_per_class} points, found {}",
                    c.count
                ));
            }
        }
        let k = self.classes().unwrap_or(2);
        for strategy in self.strategies(k) {
            self.train_config(0, strategy.1)
                .validate(k)
                .map_err(|e| CliError::Config(format!("train: {e}")))?;
        }
        for (name, a) in [
            ("train", &self.attack.train),
            ("val", &self.attack.val),
            ("eval", &self.attack.eval),
            ("cw", &self.attack.cw),
        ] {
            a.validate().map_err(|e| CliError::Config(format!("attack.{name}: {e}")))?;
        }
        if self.bounds.enabled {
            self.bounds
                .to_core(0)
                .validate()
                .map_err(|e| CliError::Config(format!("bounds: {e}")))?;
        }
        Ok(())
    }

    /// The configured methods paired with their weight strategies.
    pub fn strategies(&self, classes: usize) -> Vec<(String, wat_core::Strategy)> {
        self.methods
            .run
            .iter()
            .map(|m| {
                let s = match m.as_str() {
                    "wat" => wat_core::Strategy::Wat,
                    "fixed" => wat_core::Strategy::FixedWeights(
                        self.methods.fixed_weights.clone().unwrap_or_else(|| vec![0.0; classes + 1]),
                    ),
                    _ => wat_core::Strategy::Uniform,
                };
                (m.clone(), s)
            })
            .collect()
    }

    pub fn train_config(&self, seed: u64, strategy: wat_core::Strategy) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            eta: t.eta,
            beta: t.beta,
            batch_size: t.batch_size,
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            attack: self.attack.train,
            val_attack: self.attack.val,
            loss_clip: t.loss_clip,
            seed,
            strategy,
            model: self.model.clone(),
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.attack.eval.epsilon
    }
}

/// Radius used when a config leaves the attacks at their defaults.
pub const EPSILON: f64 = DEFAULT_EPSILON;

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "tiny"
[data]
source = "mixture"
test_per_class = 10
val_per_class = 5
classes = [
  { mean = [0.3, 0.7], std = 0.05, count = 20 },
  { mean = [0.7, 0.3], std = 0.05, count = 20 },
]
"#;

    #[test]
    fn defaults_are_filled() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seeds, vec![0, 1, 2, 3, 4]);
        assert_eq!(cfg.train.momentum, 0.9);
        assert_eq!(cfg.train.weight_decay, 2e-4);
        assert_eq!(cfg.attack.train.steps, 10);
        assert_eq!(cfg.attack.train.step_size, 0.007);
        assert_eq!(cfg.attack.eval.steps, 100);
        assert_eq!(cfg.attack.eval.step_size, 0.003);
        assert_eq!(cfg.attack.eval.epsilon, EPSILON);
        assert_eq!(cfg.model, ModelSpec::Linear);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cases = [
            MINIMAL.replace("name = \"tiny\"", "name = \"\""),
            MINIMAL.replace("std = 0.05, count = 20 },\n]", "std = 0.05, count = 5 },\n]"),
            format!("{MINIMAL}\n[train]\neta = -1.0\n"),
            format!("{MINIMAL}\n[methods]\nrun = [\"fixed\"]\n"),
            format!("{MINIMAL}\n[methods]\nrun = [\"frl\"]\n"),
            format!("{MINIMAL}\n[bounds]\ndelta = 1.5\n"),
            format!("{MINIMAL}\nunknown = 3\n"),
        ];
        for c in cases {
            assert!(matches!(ExperimentConfig::from_toml(&c), Err(CliError::Config(_))), "{c}");
        }
    }
}
