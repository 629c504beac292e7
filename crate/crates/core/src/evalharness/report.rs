use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub const OPERATIONALIZATION_NOTE: &str = "Relevance, Coherence and SemSim are cosine similarities of mean-pooled \
text encodings mapped to [0,1]; Readability is Flesch Reading Ease clamped to [0,100] and divided by 100. \
These automatic operationalizations are not calibrated against human ratings.";

/// Rounds half upward at `decimals` places, treating values within
/// `1e-9` of a half step as exact halves so that `0.895` becomes `0.90`.
pub fn round_half_up(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    let s = x * scale;
    let floor = s.floor();
    let r = if s - floor >= 0.5 - 1e-9 { floor + 1.0 } else { floor };
    r / scale
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mmc_f1: f64,
    pub macro_f1: f64,
    pub relevance: f64,
    pub coherence: f64,
    pub readability: f64,
    pub semsim: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub setup: String,
    pub model: String,
    pub metrics: MetricReport,
}

fn two(x: f64) -> String {
    format!("{:.2}", round_half_up(x, 2))
}

impl MetricReport {
    fn columns(&self) -> [f64; 5] {
        [self.mmc_f1, self.relevance, self.coherence, self.readability, self.semsim]
    }

    pub fn all_in_unit_interval(&self) -> bool {
        self.columns().iter().chain(std::iter::once(&self.macro_f1)).all(|v| (0.0..=1.0).contains(v))
    }
}

/// Setups in order of first appearance, each with its rows.
fn grouped(rows: &[ReportRow]) -> Vec<(&str, Vec<&ReportRow>)> {
    let mut groups: Vec<(&str, Vec<&ReportRow>)> = Vec::new();
    for r in rows {
        match groups.iter_mut().find(|(s, _)| *s == r.setup) {
            Some((_, v)) => v.push(r),
            None => groups.push((&r.setup, vec![r])),
        }
    }
    groups
}

pub fn render_table(rows: &[ReportRow]) -> String {
    const HEADER: [&str; 6] = ["Model", "MMC (F1)", "Relevance", "Coherence", "Readability", "SemSim"];
    let width = rows.iter().map(|r| r.model.len()).max().unwrap_or(0).max(HEADER[0].len());
    let mut out = format!("{:<width$}", HEADER[0]);
    for h in &HEADER[1..] {
        write!(out, " | {h:>11}").unwrap();
    }
    out.push('\n');
    let rule = "-".repeat(width + 5 * 14);
    for (setup, members) in grouped(rows) {
        writeln!(out, "{rule}\n{setup}\n{rule}").unwrap();
        for r in members {
            write!(out, "{:<width$}", r.model).unwrap();
            for v in r.metrics.columns() {
                write!(out, " | {:>11}", two(v)).unwrap();
            }
            out.push('\n');
        }
    }
    writeln!(out, "{rule}").unwrap();
    for r in rows {
        writeln!(out, "macro-F1 (categories) {} / {}: {}", r.setup, r.model, two(r.metrics.macro_f1)).unwrap();
    }
    writeln!(out, "Note: {OPERATIONALIZATION_NOTE}").unwrap();
    out
}

pub fn render_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("setup,model,mmc_f1,relevance,coherence,readability,semsim\n");
    for (_, members) in grouped(rows) {
        for r in members {
            write!(out, "{},{}", r.setup, r.model).unwrap();
            for v in r.metrics.columns() {
                write!(out, ",{}", two(v)).unwrap();
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(setup: &str, model: &str, v: f64) -> ReportRow {
        let m = MetricReport { mmc_f1: v, macro_f1: v / 2.0, relevance: 0.5, coherence: 1.0, readability: 0.0, semsim: 0.333 };
        ReportRow { setup: setup.into(), model: model.into(), metrics: m }
    }

    #[test]
    fn rounding() {
        assert_eq!(round_half_up(0.895, 2), 0.90);
        assert_eq!(round_half_up(0.894999, 2), 0.89);
        assert_eq!(round_half_up(0.505, 2), 0.51);
        assert_eq!(round_half_up(1076.0 / 2130.0, 2), 0.51);
        assert_eq!(round_half_up(199.0 / 2130.0, 2), 0.09);
        assert_eq!(two(0.895), "0.90");
    }

    #[test]
    fn one_row_table() {
        let t = render_table(&[row("Zero-shot", "mmfuse", 0.895)]);
        let lines: Vec<&str> = t.lines().collect();
        assert!(lines[0].starts_with("Model  | "));
        assert!(lines[0].contains("MMC (F1) |   Relevance |   Coherence | Readability |      SemSim"));
        assert_eq!(t.lines().filter(|l| l.starts_with("mmfuse ")).count(), 1);
        assert!(t.contains("0.90"));
        assert!(t.contains("Note: "));
    }

    #[test]
    fn csv_round_trip() {
        let rows = [row("Zero-shot", "a", 0.12345), row("2-shot", "b", 0.895), row("Zero-shot", "c", 1.0)];
        let csv = render_csv(&rows);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "setup,model,mmc_f1,relevance,coherence,readability,semsim");
        // grouped by setup in first-appearance order
        assert!(lines[1].starts_with("Zero-shot,a,") && lines[2].starts_with("Zero-shot,c,") && lines[3].starts_with("2-shot,b,"));
        for (line, r) in lines[1..].iter().zip([&rows[0], &rows[2], &rows[1]]) {
            let vals: Vec<f64> = line.split(',').skip(2).map(|v| v.parse().unwrap()).collect();
            for (v, want) in vals.iter().zip(r.metrics.columns()) {
                assert_eq!(*v, round_half_up(want, 2));
            }
        }
    }
}
