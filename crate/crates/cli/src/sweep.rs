//! WAT over a list of η values with shared data and seeds.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wat_core::{rho_values, Strategy};

use crate::config::ExperimentConfig;
use crate::experiment::{attach_rho, run_method, seed_data, UNIFORM};
use crate::record::MethodRecord;
use crate::CliError;

pub const DEFAULT_ETAS: [f64; 4] = [0.01, 0.05, 0.1, 0.5];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub natural_avg: f64,
    pub natural_worst: f64,
    pub robust_avg: f64,
    pub robust_worst: f64,
    pub rho_nat: Option<f64>,
    pub rho_pgd: Option<f64>,
    pub rho_cw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSeed {
    pub seed: u64,
    pub uniform: MethodRecord,
    /// One WAT run per η, in the order of `etas`.
    pub runs: Vec<MethodRecord>,
}

/// Seed counts comparing the smallest and the largest η.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeOff {
    pub low_eta: f64,
    pub high_eta: f64,
    pub worst_high_ge_low: usize,
    pub avg_low_ge_high: usize,
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub name: String,
    pub etas: Vec<f64>,
    pub rows: Vec<SweepRow>,
    pub seeds: Vec<SweepSeed>,
    pub trade_off: Option<TradeOff>,
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n.max(1) as f64
}

pub fn sweep_eta(cfg: &ExperimentConfig, etas: &[f64]) -> Result<SweepRecord, CliError> {
    if etas.is_empty() {
        return Err(CliError::Config("at least one η is required".into()));
    }
    if let Some(e) = etas.iter().find(|e| !(e.is_finite() && **e >= 0.0)) {
        return Err(CliError::Config(format!("η must be finite and ≥ 0, got {e}")));
    }
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let run = || -> wat_core::Result<SweepSeed> {
            let data = seed_data(cfg, seed)?;
            let uniform = run_method(cfg, &data, seed, UNIFORM, Strategy::Uniform, cfg.train.eta)?;
            let mut runs = Vec::with_capacity(etas.len());
            for &eta in etas {
                let mut pair = vec![uniform.clone(), run_method(cfg, &data, seed, "wat", Strategy::Wat, eta)?];
                attach_rho(&mut pair);
                runs.push(pair.pop().expect("two entries"));
            }
            Ok(SweepSeed { seed, uniform, runs })
        };
        seeds.push(run().map_err(|e| CliError::Runtime(format!("seed {seed}: {e}")))?);
    }

    let acc = |m: &MethodRecord, kind: &str| m.accuracy(kind).map(|a| (a.average, a.worst)).unwrap_or((0.0, 0.0));
    let base = |kind: &str| {
        (
            mean(seeds.iter().map(|s| acc(&s.uniform, kind).0)),
            mean(seeds.iter().map(|s| acc(&s.uniform, kind).1)),
        )
    };
    let rows = etas
        .iter()
        .enumerate()
        .map(|(j, &eta)| {
            let avg = |kind: &str| mean(seeds.iter().map(|s| acc(&s.runs[j], kind).0));
            let worst = |kind: &str| mean(seeds.iter().map(|s| acc(&s.runs[j], kind).1));
            let r = |kind: &str| {
                let (ba, bw) = base(kind);
                rho_values(ba, bw, avg(kind), worst(kind)).ok()
            };
            SweepRow {
                eta,
                natural_avg: avg("natural"),
                natural_worst: worst("natural"),
                robust_avg: avg("pgd"),
                robust_worst: worst("pgd"),
                rho_nat: r("natural"),
                rho_pgd: r("pgd"),
                rho_cw: r("cw"),
            }
        })
        .collect();

    let trade_off = (etas.len() >= 2).then(|| {
        let lo = (0..etas.len()).min_by(|&a, &b| etas[a].total_cmp(&etas[b])).expect("non-empty");
        let hi = (0..etas.len()).max_by(|&a, &b| etas[a].total_cmp(&etas[b])).expect("non-empty");
        let mut t = TradeOff {
            low_eta: etas[lo],
            high_eta: etas[hi],
            worst_high_ge_low: 0,
            avg_low_ge_high: 0,
            seeds: seeds.len(),
        };
        for s in &seeds {
            let (la, lw) = acc(&s.runs[lo], "pgd");
            let (ha, hw) = acc(&s.runs[hi], "pgd");
            t.worst_high_ge_low += (hw >= lw) as usize;
            t.avg_low_ge_high += (la >= ha) as usize;
        }
        t
    });

    Ok(SweepRecord {
        name: cfg.name.clone(),
        etas: etas.to_vec(),
        rows,
        seeds,
        trade_off,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_else(|| "n/a".into())
}

pub fn sweep_markdown(rec: &SweepRecord) -> String {
    let mut s = format!("# {} η sweep\n\n", rec.name);
    s.push_str("| η | Nat. avg | Nat. wst | Rob. avg | Rob. wst | ρ_nat | ρ_pgd | ρ_cw |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in &rec.rows {
        let _ = writeln!(
            s,
            "| {} | {:.1} | {:.1} | {:.1} | {:.1} | {} | {} | {} |",
            r.eta,
            100.0 * r.natural_avg,
            100.0 * r.natural_worst,
            100.0 * r.robust_avg,
            100.0 * r.robust_worst,
            cell(r.rho_nat),
            cell(r.rho_pgd),
            cell(r.rho_cw)
        );
    }
    if let Some(t) = &rec.trade_off {
        let _ = writeln!(
            s,
            "\nWorst-class robust accuracy at η={} ≥ at η={}: {}/{} seeds. Average robust accuracy at η={} ≥ at η={}: {}/{} seeds.",
            t.high_eta, t.low_eta, t.worst_high_ge_low, t.seeds, t.low_eta, t.high_eta, t.avg_low_ge_high, t.seeds
        );
    }
    s
}

pub fn sweep_csv(rec: &SweepRecord) -> String {
    let mut s = String::from("eta,natural_avg,natural_worst,robust_avg,robust_worst,rho_nat,rho_pgd,rho_cw\n");
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rec.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            r.eta,
            r.natural_avg,
            r.natural_worst,
            r.robust_avg,
            r.robust_worst,
            o(r.rho_nat),
            o(r.rho_pgd),
            o(r.rho_cw)
        );
    }
    s
}

pub fn write_sweep(rec: &SweepRecord, dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let json = serde_json::to_string_pretty(rec).map_err(|e| CliError::Runtime(e.to_string()))? + "\n";
    for (name, text) in [
        ("sweep.json", json),
        ("sweep.csv", sweep_csv(rec)),
        ("sweep.md", sweep_markdown(rec)),
    ] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| CliError::io(&p, e))?;
    }
    Ok(())
}
