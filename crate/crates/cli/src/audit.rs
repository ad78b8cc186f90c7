//! Re-runs the no-regret auditors on a stored record.

use serde::Serialize;
use wat_core::{audit_mw_regret, audit_no_regret, hedge_trajectory, AuditReport, LossHistory, Strategy};

use crate::record::ExperimentRecord;
use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct AuditLine {
    pub seed: u64,
    pub method: String,
    pub no_regret: AuditReport,
    pub mw_regret_all_hold: bool,
    /// Largest gap between stored weights and weights replayed from the stored losses.
    pub replay_gap: f64,
    pub matches_stored: bool,
}

impl AuditLine {
    pub fn ok(&self) -> bool {
        !self.no_regret.is_violation() && self.replay_gap <= 1e-12 && self.matches_stored
    }
}

pub fn audit_record(record: &ExperimentRecord) -> Result<Vec<AuditLine>, CliError> {
    let eta = record.config.train.eta;
    let mut out = Vec::new();
    for seed in &record.seeds {
        for m in &seed.methods {
            if m.train.strategy != Strategy::Wat || eta <= 0.0 || m.train.epochs.is_empty() {
                continue;
            }
            let rt = |e: wat_core::Error| CliError::Runtime(format!("seed {} {}: {e}", seed.seed, m.method));
            let mut history = LossHistory::new(eta);
            for e in &m.train.epochs {
                history.push(e.normalized_val.clone()).map_err(rt)?;
            }
            let stored: Vec<_> = m.train.epochs.iter().map(|e| e.weights.clone()).collect();
            let replay = hedge_trajectory(&history.rounds, eta).map_err(rt)?;
            let replay_gap = stored
                .iter()
                .zip(&replay)
                .flat_map(|(a, b)| a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            let no_regret = audit_no_regret(&history, &stored).map_err(rt)?;
            let decisions = stored[0].len();
            let mut mw_regret_all_hold = true;
            for d in 0..decisions {
                mw_regret_all_hold &= audit_mw_regret(&history.rounds, &stored, eta, d).map_err(rt)?.holds;
            }
            let matches_stored = m.train.audit.as_ref().is_none_or(|a| a.no_regret == no_regret);
            out.push(AuditLine {
                seed: seed.seed,
                method: m.method.clone(),
                no_regret,
                mw_regret_all_hold,
                replay_gap,
                matches_stored,
            });
        }
    }
    Ok(out)
}

pub fn render(lines: &[AuditLine]) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(&format!(
            "seed {} {}: lhs {:.6} rhs {:.6} inequality {} premises {} in-regime {} weight regret {} replay gap {:.1e} {}\n",
            l.seed,
            l.method,
            l.no_regret.lhs,
            l.no_regret.rhs,
            if l.no_regret.inequality_holds { "holds" } else { "fails" },
            if l.no_regret.premises_all_hold() { "hold" } else { "not all hold" },
            l.no_regret.in_regime,
            if l.mw_regret_all_hold { "holds" } else { "fails" },
            l.replay_gap,
            if l.ok() { "ok" } else { "VIOLATION" }
        ));
    }
    if lines.is_empty() {
        s.push_str("no WAT records with η > 0 to audit\n");
    }
    s
}
