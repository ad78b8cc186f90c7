//! Printed accuracy tables and the ρ values reported next to them.

use serde::Serialize;
use wat_core::rho_values;

/// One accuracy/ρ triple: average and worst-class accuracy (percent) and the printed ρ.
#[derive(Debug, Clone, Copy)]
pub struct Cell {
    pub avg: f64,
    pub worst: f64,
    pub rho: f64,
}

const fn c(avg: f64, worst: f64, rho: f64) -> Cell {
    Cell { avg, worst, rho }
}

#[derive(Debug, Clone, Copy)]
pub struct Row {
    pub method: &'static str,
    pub cells: &'static [Cell],
}

#[derive(Debug, Clone, Copy)]
pub struct Table {
    pub name: &'static str,
    pub columns: &'static [&'static str],
    /// First row is the baseline every ρ is measured against.
    pub rows: &'static [Row],
}

const FOUR: &[&str] = &["nat", "pgd", "cw", "aa"];

pub const TABLES: &[Table] = &[
    Table {
        name: "resnet18-cifar10",
        columns: FOUR,
        rows: &[
            Row { method: "TRADES", cells: &[c(82.11, 64.6, 0.0), c(51.69, 25.2, 0.0), c(50.38, 24.1, 0.0), c(48.64, 21.7, 0.0)] },
            Row { method: "FRL-RW", cells: &[c(81.75, 69.2, 0.067), c(49.02, 30.8, 0.171), c(47.80, 27.8, 0.102), c(46.08, 25.4, 0.118)] },
            Row { method: "FRL-RWRM", cells: &[c(80.69, 71.4, 0.088), c(49.16, 32.0, 0.221), c(47.45, 28.1, 0.108), c(45.94, 26.1, 0.147)] },
            Row { method: "CSL", cells: &[c(76.29, 67.1, -0.032), c(43.30, 33.8, 0.179), c(41.60, 31.3, 0.124), c(40.32, 29.2, 0.175)] },
            Row { method: "WAT", cells: &[c(80.98, 69.5, 0.062), c(49.13, 36.6, 0.403), c(47.57, 33.3, 0.326), c(46.04, 30.1, 0.334)] },
        ],
    },
    Table {
        name: "resnet18-cifar100",
        columns: FOUR,
        rows: &[
            Row { method: "TRADES", cells: &[c(54.57, 19.00, 0.0), c(27.39, 3.00, 0.0), c(24.87, 1.00, 0.0), c(23.57, 1.00, 0.0)] },
            Row { method: "FRL-RW", cells: &[c(53.08, 24.00, 0.236), c(25.76, 3.00, -0.060), c(22.39, 2.00, 0.900), c(21.09, 1.00, -0.105)] },
            Row { method: "FRL-RWRM", cells: &[c(52.55, 22.00, 0.121), c(26.04, 4.00, 0.284), c(22.33, 2.00, 0.898), c(21.11, 2.00, 0.896)] },
            Row { method: "CSL", cells: &[c(53.83, 21.00, 0.092), c(26.19, 4.00, 0.290), c(22.35, 2.00, 0.899), c(22.25, 2.00, 0.944)] },
            Row { method: "WAT", cells: &[c(53.99, 19.00, -0.020), c(26.91, 5.00, 0.643), c(24.26, 3.00, 1.945), c(22.89, 3.00, 1.971)] },
        ],
    },
    Table {
        name: "wrn34-cifar10",
        columns: FOUR,
        rows: &[
            Row { method: "TRADES", cells: &[c(84.51, 64.7, 0.0), c(53.68, 23.3, 0.0), c(53.18, 22.8, 0.0), c(51.22, 20.9, 0.0)] },
            Row { method: "FRL-RW", cells: &[c(83.93, 74.5, 0.145), c(50.59, 30.0, 0.230), c(50.58, 29.1, 0.227), c(48.36, 27.1, 0.241)] },
            Row { method: "FRL-RWRM", cells: &[c(83.86, 72.1, 0.107), c(51.25, 32.9, 0.367), c(51.08, 32.2, 0.373), c(48.98, 28.6, 0.325)] },
            Row { method: "CSL", cells: &[c(79.78, 75.1, 0.105), c(45.7, 32.2, 0.233), c(44.74, 30.8, 0.192), c(43.10, 29.4, 0.248)] },
            Row { method: "WAT", cells: &[c(83.71, 74.0, 0.062), c(51.53, 34.9, 0.458), c(50.89, 33.4, 0.422), c(49.12, 30.7, 0.428)] },
        ],
    },
    Table {
        name: "eta-sweep-cifar10",
        columns: FOUR,
        rows: &[
            Row { method: "TRADES", cells: &[c(82.11, 64.6, 0.0), c(51.69, 25.2, 0.0), c(50.38, 24.1, 0.0), c(48.64, 21.7, 0.0)] },
            Row { method: "WAT eta=0.01", cells: &[c(81.54, 68.0, 0.046), c(50.50, 26.6, 0.033), c(49.86, 25.0, 0.027), c(47.65, 22.6, 0.021)] },
            Row { method: "WAT eta=0.05", cells: &[c(81.76, 69.3, 0.068), c(50.06, 34.2, 0.326), c(49.53, 31.7, 0.298), c(47.05, 28.1, 0.262)] },
            Row { method: "WAT eta=0.1", cells: &[c(80.98, 69.5, 0.062), c(49.13, 36.6, 0.403), c(47.57, 33.3, 0.326), c(46.04, 30.1, 0.334)] },
            Row { method: "WAT eta=0.5", cells: &[c(79.30, 67.3, 0.008), c(48.09, 37.5, 0.418), c(45.42, 32.5, 0.250), c(43.98, 31.1, 0.337)] },
        ],
    },
    Table {
        name: "cv-cifar10",
        columns: &["cw"],
        rows: &[
            Row { method: "TRADES", cells: &[c(50.38, 24.1, 0.0)] },
            Row { method: "FRL-RW", cells: &[c(47.80, 27.8, 0.102)] },
            Row { method: "FRL-RWRM", cells: &[c(47.45, 28.1, 0.108)] },
            Row { method: "CSL", cells: &[c(41.60, 31.3, 0.124)] },
            Row { method: "WAT", cells: &[c(47.57, 33.3, 0.326)] },
        ],
    },
    Table {
        name: "cv-cifar10-extra",
        columns: &["nat", "pgd", "aa"],
        rows: &[
            Row { method: "TRADES", cells: &[c(82.11, 64.6, 0.0), c(51.69, 25.2, 0.0), c(48.64, 21.7, 0.0)] },
            Row { method: "FRL-RW", cells: &[c(81.75, 69.2, 0.067), c(49.02, 30.8, 0.171), c(46.08, 25.4, 0.118)] },
            Row { method: "FRL-RWRM", cells: &[c(80.69, 71.4, 0.088), c(49.16, 32.0, 0.221), c(45.94, 26.1, 0.147)] },
            Row { method: "CSL", cells: &[c(76.29, 67.1, -0.032), c(43.30, 33.8, 0.179), c(40.32, 29.2, 0.175)] },
            Row { method: "WAT", cells: &[c(80.98, 69.5, 0.062), c(49.13, 36.6, 0.403), c(46.04, 30.1, 0.334)] },
        ],
    },
];

pub const TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GoldenCheck {
    pub table: &'static str,
    pub method: &'static str,
    pub column: &'static str,
    pub printed: f64,
    pub recomputed: f64,
    pub matches: bool,
}

/// Recomputes every ρ from the accuracies beside it, baseline excluded.
pub fn golden_rho() -> Vec<GoldenCheck> {
    let mut out = Vec::new();
    for table in TABLES {
        let base = table.rows[0];
        for row in &table.rows[1..] {
            for (j, col) in table.columns.iter().enumerate() {
                let (b, t) = (base.cells[j], row.cells[j]);
                let recomputed = rho_values(b.avg / 100.0, b.worst / 100.0, t.avg / 100.0, t.worst / 100.0)
                    .expect("printed baselines are non-zero");
                out.push(GoldenCheck {
                    table: table.name,
                    method: row.method,
                    column: col,
                    printed: t.rho,
                    recomputed,
                    matches: (recomputed - t.rho).abs() <= TOLERANCE,
                });
            }
        }
    }
    out
}

pub fn render_diff(checks: &[GoldenCheck]) -> String {
    let mut s = String::new();
    for ch in checks {
        s.push_str(&format!(
            "{:<20} {:<14} {:<4} printed {:>7.3} recomputed {:>8.4} {}\n",
            ch.table,
            ch.method,
            ch.column,
            ch.printed,
            ch.recomputed,
            if ch.matches { "ok" } else { "MISMATCH" }
        ));
    }
    let bad = checks.iter().filter(|c| !c.matches).count();
    s.push_str(&format!("{} cells, {} mismatches (tolerance {TOLERANCE})\n", checks.len(), bad));
    s
}
