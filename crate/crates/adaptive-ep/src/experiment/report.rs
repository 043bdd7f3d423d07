//! Cross-run comparison tables.
//!
//! One column per run, metric rows in the conventional order (accuracy,
//! precision, recall, F1, early-EP rate, then relative changes), with the
//! always-standard run as the baseline for every ± column.

use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

use super::RunResult;

struct Grid {
    /// Row label plus one formatted value per run.
    rows: Vec<(&'static str, Vec<String>)>,
    columns: Vec<String>,
}

fn fmt_opt(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{x:.2}"),
        None => "NA".to_string(),
    }
}

fn fmt_delta(value: f64, base: f64, is_baseline: bool) -> String {
    if is_baseline {
        "-".to_string()
    } else if base == 0.0 {
        "NA".to_string()
    } else {
        format!("{:+.2}%", 100.0 * (value - base) / base)
    }
}

fn fmt_delta_opt(value: Option<f64>, base: Option<f64>, is_baseline: bool) -> String {
    match (value, base) {
        (Some(v), Some(b)) => fmt_delta(v, b, is_baseline),
        _ if is_baseline => "-".to_string(),
        _ => "NA".to_string(),
    }
}

fn build_grid(results: &[RunResult]) -> Result<Grid> {
    if results.is_empty() {
        return Err(Error::Validation(
            "report needs at least one run result".into(),
        ));
    }
    let baseline_idx = results
        .iter()
        .position(|r| r.primary_report().policy == "standard_only")
        .ok_or_else(|| {
            Error::Validation("missing baseline: no run with a standard_only primary report".into())
        })?;
    let reports: Vec<&MetricsReport> = results.iter().map(|r| r.primary_report()).collect();
    let base = reports[baseline_idx];

    let mut rows: Vec<(&'static str, Vec<String>)> = Vec::new();
    let mut push_row = |label: &'static str, f: &dyn Fn(usize, &MetricsReport) -> String| {
        rows.push((
            label,
            reports.iter().enumerate().map(|(i, r)| f(i, r)).collect(),
        ));
    };

    push_row("Accuracy (%)", &|_, r| format!("{:.2}", r.accuracy));
    push_row("Precision (%)", &|_, r| fmt_opt(r.precision));
    push_row("Recall (%)", &|_, r| fmt_opt(r.recall));
    push_row("F1 score", &|_, r| fmt_opt(r.f1));
    push_row("Early EP rate", &|_, r| format!("{:.4}", r.early_ep_rate));
    push_row("Early EP rate change", &|i, r| {
        fmt_delta(r.early_ep_rate, base.early_ep_rate, i == baseline_idx)
    });
    push_row("Latency (TM95)", &|i, r| {
        fmt_delta(r.tm95, base.tm95, i == baseline_idx)
    });
    push_row("Latency (DTM95:99)", &|i, r| {
        fmt_delta_opt(r.dtm95_99, base.dtm95_99, i == baseline_idx)
    });

    Ok(Grid {
        rows,
        columns: results.iter().map(|r| r.name.clone()).collect(),
    })
}

/// Fixed-column CSV: `metric` then one column per run.
pub fn comparison_csv(results: &[RunResult]) -> Result<String> {
    let grid = build_grid(results)?;
    let mut out = String::from("metric");
    for c in &grid.columns {
        out.push(',');
        out.push_str(c);
    }
    out.push('\n');
    for (label, values) in &grid.rows {
        out.push_str(label);
        for v in values {
            out.push(',');
            out.push_str(v);
        }
        out.push('\n');
    }
    Ok(out)
}

/// Aligned human-readable table.
pub fn comparison_table(results: &[RunResult]) -> Result<String> {
    let grid = build_grid(results)?;
    let label_width = grid
        .rows
        .iter()
        .map(|(l, _)| l.len())
        .max()
        .unwrap_or(0)
        .max("Metrics / Model".len());
    let mut widths: Vec<usize> = grid.columns.iter().map(|c| c.len()).collect();
    for (_, values) in &grid.rows {
        for (w, v) in widths.iter_mut().zip(values.iter()) {
            *w = (*w).max(v.len());
        }
    }

    let mut out = format!("{:<label_width$}", "Metrics / Model");
    for (c, w) in grid.columns.iter().zip(widths.iter()) {
        out.push_str(&format!("  {c:>w$}"));
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_width + widths.iter().map(|w| w + 2).sum::<usize>()));
    out.push('\n');
    for (label, values) in &grid.rows {
        out.push_str(&format!("{label:<label_width$}"));
        for (v, w) in values.iter().zip(widths.iter()) {
            out.push_str(&format!("  {v:>w$}"));
        }
        out.push('\n');
    }
    Ok(out)
}
