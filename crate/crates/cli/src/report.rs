//! Pure renderers from a stored record to CSV, JSON and Markdown.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wat_core::rho_values;

use crate::experiment::UNIFORM;
use crate::record::ExperimentRecord;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Markdown,
}

/// One row of the summary table: seed-averaged accuracies of a method under one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub kind: String,
    pub average: f64,
    pub worst: f64,
    pub cv: f64,
    /// ρ of the averaged accuracies against the averaged uniform row.
    pub rho: Option<f64>,
    pub seeds: usize,
}

pub fn summary(record: &ExperimentRecord) -> Vec<SummaryRow> {
    let ok: Vec<_> = record.seeds.iter().filter(|s| s.status == "ok").collect();
    let mut rows: Vec<SummaryRow> = Vec::new();
    for method in record.method_names() {
        let Some(first) = ok.first().and_then(|s| s.methods.iter().find(|m| m.method == method)) else {
            continue;
        };
        for kind in first.accuracies.iter().map(|a| a.kind.clone()) {
            let (mut avg, mut worst, mut cv, mut n) = (0.0, 0.0, 0.0, 0usize);
            for s in &ok {
                if let Some(m) = s.methods.iter().find(|m| m.method == method) {
                    if let Some(a) = m.accuracy(&kind) {
                        avg += a.average;
                        worst += a.worst;
                        cv += m.cv.get(&kind).copied().unwrap_or(0.0);
                        n += 1;
                    }
                }
            }
            let n_f = n.max(1) as f64;
            rows.push(SummaryRow {
                method: method.clone(),
                kind,
                average: avg / n_f,
                worst: worst / n_f,
                cv: cv / n_f,
                rho: None,
                seeds: n,
            });
        }
    }
    let bases: Vec<(String, f64, f64)> = rows
        .iter()
        .filter(|r| r.method == UNIFORM)
        .map(|r| (r.kind.clone(), r.average, r.worst))
        .collect();
    for r in rows.iter_mut() {
        if let Some((_, ba, bw)) = bases.iter().find(|b| b.0 == r.kind) {
            r.rho = rho_values(*ba, *bw, r.average, r.worst).ok();
        }
    }
    rows
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_csv(record: &ExperimentRecord) -> String {
    let mut s = String::from("method,kind,average,worst,cv,rho,seeds\n");
    for r in summary(record) {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.method,
            r.kind,
            r.average,
            r.worst,
            r.cv,
            fmt_opt(r.rho),
            r.seeds
        );
    }
    s
}

pub fn summary_json(record: &ExperimentRecord) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(&summary(record)).map_err(|e| CliError::Runtime(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Class-wise accuracies of every seed, method and evaluation, for external plotting.
pub fn accuracy_csv(record: &ExperimentRecord) -> String {
    let k = record
        .seeds
        .iter()
        .flat_map(|s| s.methods.iter())
        .flat_map(|m| m.accuracies.iter())
        .map(|a| a.per_class.len())
        .max()
        .unwrap_or(0);
    let mut s = String::from("seed,method,kind");
    for c in 0..k {
        let _ = write!(s, ",class_{c}");
    }
    s.push_str(",average,worst\n");
    for seed in &record.seeds {
        for m in &seed.methods {
            for a in &m.accuracies {
                let _ = write!(s, "{},{},{}", seed.seed, m.method, a.kind);
                for v in &a.per_class {
                    let _ = write!(s, ",{v}");
                }
                let _ = writeln!(s, ",{},{}", a.average, a.worst);
            }
        }
    }
    s
}

/// Weights played in every epoch (decision 0 is the average loss).
pub fn weights_csv(record: &ExperimentRecord) -> String {
    let k = record
        .seeds
        .iter()
        .flat_map(|s| s.methods.iter())
        .flat_map(|m| m.train.epochs.first())
        .map(|e| e.weights.len())
        .max()
        .unwrap_or(0);
    let mut s = String::from("seed,method,epoch");
    for d in 0..k {
        let _ = write!(s, ",w_{d}");
    }
    s.push('\n');
    for seed in &record.seeds {
        for m in &seed.methods {
            for e in &m.train.epochs {
                let _ = write!(s, "{},{},{}", seed.seed, m.method, e.epoch);
                for w in e.weights.as_slice() {
                    let _ = write!(s, ",{w}");
                }
                s.push('\n');
            }
        }
    }
    s
}

fn pct(v: f64) -> String {
    format!("{:.1}", 100.0 * v)
}

pub fn markdown(record: &ExperimentRecord) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", record.config.name);
    let _ = writeln!(
        s,
        "Status: {} · seeds {:?} · tool {} · schema {}\n",
        record.status, record.config.seeds, record.tool_version, record.schema_version
    );
    if let Some(e) = &record.error {
        let _ = writeln!(s, "Error: {e}\n");
    }
    let _ = writeln!(s, "## Accuracy (%), mean over {} seeds\n", record.aggregate.seeds_ok);
    s.push_str("| Method | Evaluation | Avg. | Wst. | CV | ρ |\n|---|---|---|---|---|---|\n");
    for r in summary(record) {
        let rho = r.rho.map(|v| format!("{v:.3}")).unwrap_or_else(|| "n/a".into());
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {:.4} | {} |",
            r.method,
            r.kind,
            pct(r.average),
            pct(r.worst),
            r.cv,
            rho
        );
    }
    let a = &record.aggregate;
    s.push_str("\n## Seed counts\n\n");
    let _ = writeln!(s, "- seeds completed: {}", a.seeds_ok);
    let _ = writeln!(s, "- uniform worst-class PGD accuracy ≥ 10 points below average: {}", a.uniform_disparity);
    for (m, n) in &a.worst_improved {
        let _ = writeln!(s, "- {m}: worst-class PGD accuracy above uniform in {n} seeds");
    }
    for (m, n) in &a.rho_pgd_positive {
        let _ = writeln!(s, "- {m}: positive PGD ρ in {n} seeds");
    }
    let _ = writeln!(s, "- bound covers test worst-class error: {}", a.bound_holds);
    let _ = writeln!(s, "- no-regret violations with premises satisfied: {}", a.audit_violations);

    let with_bounds: Vec<_> = record.seeds.iter().filter_map(|sd| sd.bounds.as_ref().map(|b| (sd.seed, b))).collect();
    if !with_bounds.is_empty() {
        s.push_str("\n## Bounds\n\n");
        s.push_str("| Seed | Method | E_mean | U | c | rhs | test worst error | norm cap exceeded | dictionary rhs |\n");
        s.push_str("|---|---|---|---|---|---|---|---|---|\n");
        for (seed, b) in with_bounds {
            let _ = writeln!(
                s,
                "| {seed} | {} | {:.4} | {:.4} | {:.4} | {:.4} | {:.4} | {} | {:.4} |",
                b.method,
                b.linear.e_mean,
                b.linear.u,
                b.linear.c,
                b.linear.rhs,
                b.test_worst_class_error,
                b.linear.exceeds_norm_cap,
                b.dictionary.rhs
            );
        }
        s.push_str("\nThe dictionary rhs uses a dictionary lower bound of the complexity term.\n");
    }
    s
}

pub const ACCURACY_FILE: &str = "accuracy.csv";
pub const WEIGHTS_FILE: &str = "weights.csv";
pub const REPORT_FILE: &str = "report.md";

fn write(path: PathBuf, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn write_run_files(record: &ExperimentRecord, dir: &Path) -> Result<(), CliError> {
    write(dir.join(ACCURACY_FILE), &accuracy_csv(record))?;
    write(dir.join(WEIGHTS_FILE), &weights_csv(record))?;
    write(dir.join(REPORT_FILE), &markdown(record))?;
    Ok(())
}

/// Re-renders a stored run in `format`; returns the written file.
pub fn emit_report(dir: &Path, format: Format) -> Result<PathBuf, CliError> {
    let record = ExperimentRecord::load(dir)?;
    match format {
        Format::Csv => {
            write(dir.join(ACCURACY_FILE), &accuracy_csv(&record))?;
            write(dir.join("summary.csv"), &summary_csv(&record))
        }
        Format::Json => write(dir.join("summary.json"), &summary_json(&record)?),
        Format::Markdown => write(dir.join(REPORT_FILE), &markdown(&record)),
    }
}
