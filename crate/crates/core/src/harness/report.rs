//! Human-readable rendering of experiment summaries.

use std::fmt::Write as _;

use super::logs::SummaryDoc;

fn opt(v: Option<f64>, width: usize, prec: usize) -> String {
    match v {
        Some(x) => format!("{x:>width$.prec$}"),
        None => format!("{:>width$}", "-"),
    }
}

/// Render one experiment's metric tables.
pub fn format_summary(doc: &SummaryDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "method {}  seed {}  course {:.1} m ({} vertices, {})",
        doc.method,
        doc.master_seed,
        doc.course.total_length,
        doc.course.vertices,
        if doc.course.closed { "closed" } else { "open" },
    );
    let _ = writeln!(
        out,
        "{:>4} {:<10} {:<10} {:>5} {:>7} {:>8} {:>8} {:>10} {:>8} {:>6}",
        "run", "label", "status", "steps", "speed", "m_rmse", "m_rmsz", "cost", "maxlat", "none"
    );
    for r in &doc.runs {
        let _ = writeln!(
            out,
            "{:>4} {:<10} {:<10} {:>5} {:>7.3} {} {} {:>10.1} {:>8.3} {}",
            r.run,
            r.label,
            r.status,
            r.steps,
            r.average_speed,
            opt(r.m_rmse, 8, 4),
            opt(r.m_rmsz, 8, 3),
            r.cumulative_cost,
            r.max_abs_lateral,
            opt(r.none_fraction, 6, 2),
        );
    }
    let a = &doc.aggregate;
    let _ = writeln!(
        out,
        "totals: {} completed, {} failed, cumulative cost {:.1}, mean m_rmse {}, mean m_rmsz {}",
        a.completed_runs,
        a.failed_runs,
        a.total_cumulative_cost,
        opt(a.mean_m_rmse, 0, 4).trim(),
        opt(a.mean_m_rmsz, 0, 3).trim(),
    );
    if !a.confusion.is_empty() {
        let _ = writeln!(out, "recommendation sources (row: live mode, column: chosen label):");
        let mut cols: Vec<&String> =
            a.confusion.values().flat_map(|row| row.keys()).collect();
        cols.sort();
        cols.dedup();
        let _ = write!(out, "{:>10}", "");
        for c in &cols {
            let _ = write!(out, " {c:>10}");
        }
        let _ = writeln!(out);
        for (live, row) in &a.confusion {
            let _ = write!(out, "{live:>10}");
            for c in &cols {
                match row.get(*c) {
                    Some(f) => {
                        let _ = write!(out, " {f:>10.3}");
                    }
                    None => {
                        let _ = write!(out, " {:>10}", "-");
                    }
                }
            }
            let _ = writeln!(out);
        }
    }
    out
}

/// Render paired per-run deltas between two experiments (same schedule,
/// same seed, different methods is the intended pairing).
pub fn format_compare(a: &SummaryDoc, b: &SummaryDoc) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "A: method {} seed {}   B: method {} seed {}",
        a.method, a.master_seed, b.method, b.master_seed
    );
    if a.master_seed != b.master_seed {
        let _ = writeln!(out, "warning: seeds differ; deltas are not noise-paired");
    }
    let _ = writeln!(
        out,
        "{:>4} {:<10} {:>9} {:>9} {:>7} {:>11} {:>11} {:>7}",
        "run", "label", "rmse_A", "rmse_B", "ratio", "cost_A", "cost_B", "ratio"
    );
    let n = a.runs.len().min(b.runs.len());
    for i in 0..n {
        let ra = &a.runs[i];
        let rb = &b.runs[i];
        let label = if ra.label == rb.label {
            ra.label.clone()
        } else {
            format!("{}!={}", ra.label, rb.label)
        };
        let rmse_ratio = match (ra.m_rmse, rb.m_rmse) {
            (Some(x), Some(y)) if y > 0.0 => Some(x / y),
            _ => None,
        };
        let cost_ratio = if rb.cumulative_cost > 0.0 {
            Some(ra.cumulative_cost / rb.cumulative_cost)
        } else {
            None
        };
        let _ = writeln!(
            out,
            "{:>4} {:<10} {} {} {} {:>11.1} {:>11.1} {}",
            ra.run,
            label,
            opt(ra.m_rmse, 9, 4),
            opt(rb.m_rmse, 9, 4),
            opt(rmse_ratio, 7, 3),
            ra.cumulative_cost,
            rb.cumulative_cost,
            opt(cost_ratio, 7, 3),
        );
    }
    if a.runs.len() != b.runs.len() {
        let _ = writeln!(
            out,
            "note: run counts differ ({} vs {}); extra runs omitted",
            a.runs.len(),
            b.runs.len()
        );
    }
    let (ca, cb) =
        (a.aggregate.total_cumulative_cost, b.aggregate.total_cumulative_cost);
    let _ = writeln!(
        out,
        "total cost A/B: {:.1}/{:.1} = {}",
        ca,
        cb,
        if cb > 0.0 { format!("{:.3}", ca / cb) } else { "-".to_string() }
    );
    out
}
