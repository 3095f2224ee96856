//! Side-by-side comparison of aggregates, one block per scenario.
//!
//! Cells are printed with [`format_metric`], the same formatter used for
//! `aggregates.csv`, and the best cell in each column of a block carries a
//! `*`. Best means lowest rebuffering and instability, highest SSIM and
//! bitrate. Cells that tie after formatting are all marked.

use std::fmt::Write as _;

use crate::abr::PolicyId;
use crate::metrics::AggregateReport;

pub const COLUMNS: [&str; 4] = ["Rebuffering", "Instability", "SSIM", "BitRate"];

/// Shared 3-decimal rendering for table cells and aggregate CSV values.
pub fn format_metric(value: f64) -> String {
    format!("{value:.3}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub policy: PolicyId,
    pub cells: [String; 4],
    pub best: [bool; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioBlock {
    pub buffer_capacity_s: f64,
    pub critical_threshold_s: f64,
    pub rows: Vec<TableRow>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub blocks: Vec<ScenarioBlock>,
}

fn metric_values(a: &AggregateReport) -> [f64; 4] {
    [a.rebuffering_s, a.instability, a.mean_ssim, a.mean_bitrate_kbps]
}

const HIGHER_IS_BETTER: [bool; 4] = [false, false, true, true];

impl ComparisonTable {
    /// Blocks appear in order of first occurrence, rows in input order.
    pub fn build(aggregates: &[AggregateReport]) -> Self {
        let mut blocks: Vec<ScenarioBlock> = Vec::new();
        for a in aggregates {
            let cells = metric_values(a).map(format_metric);
            let row = TableRow {
                policy: a.policy,
                cells,
                best: [false; 4],
            };
            match blocks.iter_mut().find(|b| {
                b.buffer_capacity_s == a.buffer_capacity_s
                    && b.critical_threshold_s == a.critical_threshold_s
            }) {
                Some(block) => block.rows.push(row),
                None => blocks.push(ScenarioBlock {
                    buffer_capacity_s: a.buffer_capacity_s,
                    critical_threshold_s: a.critical_threshold_s,
                    rows: vec![row],
                }),
            }
        }
        for block in &mut blocks {
            for col in 0..4 {
                let shown: Vec<f64> = block
                    .rows
                    .iter()
                    .map(|r| r.cells[col].parse().expect("formatted number"))
                    .collect();
                let best = if HIGHER_IS_BETTER[col] {
                    shown.iter().copied().fold(f64::NEG_INFINITY, f64::max)
                } else {
                    shown.iter().copied().fold(f64::INFINITY, f64::min)
                };
                for (row, v) in block.rows.iter_mut().zip(&shown) {
                    row.best[col] = *v == best;
                }
            }
        }
        Self { blocks }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (i, block) in self.blocks.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            let _ = writeln!(
                out,
                "BS = {} s, Lc = {} s",
                block.buffer_capacity_s, block.critical_threshold_s
            );
            let _ = write!(out, "{:<10}", "Algorithm");
            for c in COLUMNS {
                let _ = write!(out, " {c:>13}");
            }
            out.push('\n');
            for row in &block.rows {
                let _ = write!(out, "{:<10}", row.policy.display_name());
                for (cell, best) in row.cells.iter().zip(row.best) {
                    let marked = format!("{cell}{}", if best { "*" } else { " " });
                    let _ = write!(out, " {marked:>13}");
                }
                out.push('\n');
            }
        }
        out
    }
}

pub fn emit_comparison_table(aggregates: &[AggregateReport]) -> String {
    ComparisonTable::build(aggregates).render()
}
