//! Human-readable tables.

use std::fmt::Write;

use mtmc_core::MetricsReport;

pub fn metrics_table(m: &MetricsReport) -> String {
    let rows = [
        ("IDP", format!("{:.2}", m.idp)),
        ("IDR", format!("{:.2}", m.idr)),
        ("IDF1", format!("{:.2}", m.idf1)),
        ("IDTP frames", m.idtp.to_string()),
        ("pred frames", m.pred_frames.to_string()),
        ("gt frames", m.gt_frames.to_string()),
    ];
    let mut out = String::new();
    for (name, value) in rows {
        writeln!(out, "{name:<12} {value:>10}").unwrap();
    }
    out
}

/// Left-aligns the first column and right-aligns the rest.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &mut dyn Iterator<Item = &str>| {
        let mut s = String::new();
        for (k, (cell, w)) in cells.zip(&widths).enumerate() {
            if k == 0 {
                write!(s, "{cell:<w$}").unwrap();
            } else {
                write!(s, "  {cell:>w$}").unwrap();
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(&mut header.iter().copied());
    out.push('\n');
    for row in rows {
        out.push_str(&line(&mut row.iter().map(String::as_str)));
        out.push('\n');
    }
    out
}
