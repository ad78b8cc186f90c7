//! Runs every configured method over every seed and assembles the record.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use rand::Rng;
use wat_core::rng::{substream, Tag};
use wat_core::{
    class_accuracies, cv, gaussian_mixture, load_csv_dataset, load_csv_dataset_with_classes, rho, stratified_split,
    dictionary_bound, linear_bound_terms, train, Dataset, Evaluation, MixtureSpec, Strategy,
};

use crate::config::{DataConfig, ExperimentConfig};
use crate::record::{Aggregate, BoundsRecord, ExperimentRecord, MethodRecord, SeedRecord, SCHEMA_VERSION};
use crate::{report, CliError};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const UNIFORM: &str = "uniform";

pub struct SeedData {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

/// Draws (or loads) the splits for one seed.
pub fn seed_data(cfg: &ExperimentConfig, seed: u64) -> wat_core::Result<SeedData> {
    match &cfg.data {
        DataConfig::Mixture {
            classes,
            domain,
            val_per_class,
            test_per_class,
        } => {
            let mut rng = substream(seed, Tag::Data, 0);
            let spec = MixtureSpec {
                classes: classes.clone(),
                domain: *domain,
                seed: rng.random(),
            };
            let full = gaussian_mixture(&spec)?;
            let (train, val) = stratified_split(&full, *val_per_class)?;
            let test = gaussian_mixture(&spec.resampled(*test_per_class, rng.random()))?;
            Ok(SeedData { train, val, test })
        }
        DataConfig::Csv {
            train,
            test,
            val_per_class,
        } => {
            let full = load_csv_dataset(train)?;
            let test = load_csv_dataset_with_classes(test, full.classes)?;
            let (train, val) = stratified_split(&full, *val_per_class)?;
            Ok(SeedData { train, val, test })
        }
    }
}

pub fn evaluations(cfg: &ExperimentConfig, linear: bool) -> Vec<Evaluation> {
    let mut out = vec![
        Evaluation::Natural,
        Evaluation::Pgd {
            id: "pgd".into(),
            attack: cfg.attack.eval,
        },
        Evaluation::Pgd {
            id: "cw".into(),
            attack: cfg.attack.cw,
        },
    ];
    if linear {
        out.push(Evaluation::ClosedForm {
            epsilon: cfg.epsilon(),
        });
    }
    out
}

/// Trains and evaluates one method on prepared data.
pub fn run_method(
    cfg: &ExperimentConfig,
    data: &SeedData,
    seed: u64,
    name: &str,
    strategy: Strategy,
    eta: f64,
) -> wat_core::Result<MethodRecord> {
    let mut tc = cfg.train_config(seed, strategy);
    tc.eta = eta;
    let record = train(&data.train, &data.val, &tc)?;
    let accuracies = evaluations(cfg, record.selected.is_linear())
        .iter()
        .map(|e| class_accuracies(&record.selected, &data.test, e, seed))
        .collect::<wat_core::Result<Vec<_>>>()?;
    let cv = accuracies
        .iter()
        .map(|a| Ok((a.kind.clone(), cv(&a.per_class)?)))
        .collect::<wat_core::Result<BTreeMap<_, _>>>()?;
    Ok(MethodRecord {
        method: name.to_string(),
        train: record,
        accuracies,
        rho: BTreeMap::new(),
        cv,
    })
}

/// Fills every method's ρ table against the uniform method, when present.
pub fn attach_rho(methods: &mut [MethodRecord]) {
    let Some(base) = methods.iter().find(|m| m.method == UNIFORM).cloned() else {
        return;
    };
    for m in methods.iter_mut() {
        m.rho = m
            .accuracies
            .iter()
            .map(|a| {
                let r = base.accuracy(&a.kind).and_then(|b| rho(b, a).ok());
                (a.kind.clone(), r)
            })
            .collect();
    }
}

fn bounds_for(cfg: &ExperimentConfig, data: &SeedData, methods: &[MethodRecord], seed: u64) -> Option<BoundsRecord> {
    if !cfg.bounds.enabled {
        return None;
    }
    let m = methods.iter().find(|m| m.method == "wat").or(methods.first())?;
    let w = m.train.selected.linear_weights()?;
    let bc = cfg.bounds.to_core(seed);
    let eps = cfg.epsilon();
    let linear = linear_bound_terms(w, &data.train, &bc, eps).ok()?;
    let exact = m.accuracy("exact")?;
    let dictionary: Vec<_> = m.train.snapshots.iter().filter_map(|p| p.linear_weights().cloned()).collect();
    let dictionary = dictionary_bound(&dictionary, w, &data.train, &bc, eps).ok()?;
    Some(BoundsRecord {
        method: m.method.clone(),
        epsilon: eps,
        linear,
        test_worst_class_error: 1.0 - exact.worst,
        dictionary,
        dictionary_note: "dictionary lower bound of the complexity term (per-epoch snapshots)".into(),
    })
}

pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> SeedRecord {
    let result = (|| -> wat_core::Result<(Vec<MethodRecord>, Option<BoundsRecord>)> {
        let data = seed_data(cfg, seed)?;
        let mut methods = Vec::new();
        for (name, strategy) in cfg.strategies(data.train.classes) {
            methods.push(run_method(cfg, &data, seed, &name, strategy, cfg.train.eta)?);
        }
        attach_rho(&mut methods);
        let bounds = bounds_for(cfg, &data, &methods, seed);
        Ok((methods, bounds))
    })();
    match result {
        Ok((methods, bounds)) => SeedRecord {
            seed,
            status: "ok".into(),
            error: None,
            methods,
            bounds,
        },
        Err(e) => SeedRecord {
            seed,
            status: "failed".into(),
            error: Some(e.to_string()),
            methods: Vec::new(),
            bounds: None,
        },
    }
}

pub fn aggregate(seeds: &[SeedRecord]) -> Aggregate {
    let mut agg = Aggregate::default();
    for s in seeds.iter().filter(|s| s.status == "ok") {
        agg.seeds_ok += 1;
        let base = s.methods.iter().find(|m| m.method == UNIFORM).and_then(|m| m.accuracy("pgd"));
        if let Some(b) = base {
            if b.average - b.worst >= 0.10 {
                agg.uniform_disparity += 1;
            }
        }
        for m in s.methods.iter().filter(|m| m.method != UNIFORM) {
            let improved = match (base, m.accuracy("pgd")) {
                (Some(b), Some(a)) => a.worst > b.worst,
                _ => false,
            };
            *agg.worst_improved.entry(m.method.clone()).or_default() += improved as usize;
            let positive = m.rho.get("pgd").copied().flatten().is_some_and(|r| r > 0.0);
            *agg.rho_pgd_positive.entry(m.method.clone()).or_default() += positive as usize;
        }
        if let Some(b) = &s.bounds {
            agg.bound_holds += (b.linear.rhs >= b.test_worst_class_error) as usize;
        }
        let violated = s
            .methods
            .iter()
            .filter_map(|m| m.train.audit.as_ref())
            .any(|a| a.no_regret.is_violation());
        agg.audit_violations += violated as usize;
    }
    agg
}

/// Runs the experiment and writes the record plus the rendered tables to `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentRecord, CliError> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let start = Instant::now();
    let seeds: Vec<SeedRecord> = cfg.seeds.iter().map(|&s| run_seed(cfg, s)).collect();
    let failed = seeds.iter().find(|s| s.status != "ok");
    let record = ExperimentRecord {
        schema_version: SCHEMA_VERSION.into(),
        tool_version: TOOL_VERSION.into(),
        config: cfg.clone(),
        status: if failed.is_some() { "failed" } else { "ok" }.into(),
        error: failed.and_then(|s| s.error.as_ref().map(|e| format!("seed {}: {e}", s.seed))),
        wall_clock_secs: start.elapsed().as_secs_f64(),
        aggregate: aggregate(&seeds),
        seeds,
    };
    record.save(out_dir)?;
    report::write_run_files(&record, out_dir)?;
    Ok(record)
}
