use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Block of the results table a row belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    Original,
    Sample,
    Class,
}

impl Section {
    pub fn name(self) -> &'static str {
        match self {
            Section::Original => "original",
            Section::Sample => "sample",
            Section::Class => "class",
        }
    }
}

/// Metrics of one run. Accuracies and the MIA score are percentages.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedMetrics {
    pub seed: u64,
    pub acc_test: f64,
    pub acc_forget: f64,
    pub acc_retain: f64,
    pub mia: f64,
    pub wall_time: f64,
    /// Class mode: accuracy on test samples of the forgotten class.
    pub acc_forget_test: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub section: Section,
    pub method: String,
    pub metrics: SeedMetrics,
}

/// One table row: seed means plus the values they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub section: Section,
    pub method: String,
    pub acc_test: f64,
    pub acc_forget: f64,
    pub acc_retain: f64,
    pub mia_score: f64,
    pub wall_time: f64,
    pub acc_forget_test: Option<f64>,
    pub seeds_used: usize,
    pub raw: Vec<SeedMetrics>,
}

impl EvalReport {
    /// Row label: the method name, qualified by section for unlearning rows.
    pub fn label(&self) -> String {
        match self.section {
            Section::Original => self.method.clone(),
            s => format!("{} ({})", self.method, s.name()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Report {
    pub rows: Vec<EvalReport>,
    pub warnings: Vec<String>,
}

pub const COLUMNS: [&str; 6] = ["Method", "D_t", "D_f", "D_r", "MIA", "Time"];

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn check_percentage(name: &'static str, v: f64) -> Result<()> {
    if (0.0..=100.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{v} is not a percentage")))
    }
}

/// Groups per-seed records into rows (Original, then sample-mode methods,
/// then class-mode methods; first-appearance order within a section) and
/// averages over seeds. Rows whose seed count differs from the most common
/// count in their section are kept and reported in `warnings`.
pub fn assemble_report(records: &[RunRecord]) -> Result<Report> {
    if records.is_empty() {
        return Err(Error::EmptySet("result records"));
    }
    let mut groups: Vec<(Section, &str, Vec<&SeedMetrics>)> = Vec::new();
    for r in records {
        let m = &r.metrics;
        check_percentage("acc_test", m.acc_test)?;
        check_percentage("acc_forget", m.acc_forget)?;
        check_percentage("acc_retain", m.acc_retain)?;
        check_percentage("mia", m.mia)?;
        if let Some(v) = m.acc_forget_test {
            check_percentage("acc_forget_test", v)?;
        }
        match groups.iter_mut().find(|g| g.0 == r.section && g.1 == r.method) {
            Some(g) => g.2.push(m),
            None => groups.push((r.section, &r.method, vec![m])),
        }
    }
    groups.sort_by_key(|g| g.0);

    // the expected seed count is the most common one within each section
    let typical = |section: Section| -> usize {
        let mut freq: Vec<(usize, usize)> = Vec::new();
        for g in groups.iter().filter(|g| g.0 == section) {
            match freq.iter_mut().find(|c| c.0 == g.2.len()) {
                Some(c) => c.1 += 1,
                None => freq.push((g.2.len(), 1)),
            }
        }
        freq.iter().max_by_key(|c| (c.1, c.0)).map_or(0, |c| c.0)
    };
    let expected: Vec<usize> = groups.iter().map(|g| typical(g.0)).collect();
    let mut warnings = Vec::new();

    let rows = groups
        .into_iter()
        .zip(expected)
        .map(|((section, method, raw), typical)| {
            if raw.len() != typical {
                warnings.push(format!(
                    "{} ({}) has {} seeds, expected {typical}; averaging the available ones",
                    method,
                    section.name(),
                    raw.len()
                ));
            }
            let forget_test: Vec<f64> = raw.iter().filter_map(|m| m.acc_forget_test).collect();
            EvalReport {
                section,
                method: method.to_string(),
                acc_test: mean(raw.iter().map(|m| m.acc_test)),
                acc_forget: mean(raw.iter().map(|m| m.acc_forget)),
                acc_retain: mean(raw.iter().map(|m| m.acc_retain)),
                mia_score: mean(raw.iter().map(|m| m.mia)),
                wall_time: mean(raw.iter().map(|m| m.wall_time)),
                acc_forget_test: (!forget_test.is_empty()).then(|| mean(forget_test.into_iter())),
                seeds_used: raw.len(),
                raw: raw.into_iter().cloned().collect(),
            }
        })
        .collect();
    Ok(Report { rows, warnings })
}

fn cells(row: &EvalReport) -> [String; 6] {
    [
        row.label(),
        format!("{:.2}", row.acc_test),
        format!("{:.2}", row.acc_forget),
        format!("{:.2}", row.acc_retain),
        format!("{:.2}", row.mia_score),
        format!("{:.3}", row.wall_time),
    ]
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn aligned(header: &[&str], body: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| body.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap())
        .collect();
    let line = |cells: Vec<String>| {
        let padded: Vec<String> = cells
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (s, &w))| if i == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
            .collect();
        format!("| {} |\n", padded.join(" | "))
    };
    let mut out = line(header.iter().map(|s| s.to_string()).collect());
    let rule: Vec<String> = widths
        .iter()
        .enumerate()
        .map(|(i, &w)| if i == 0 { format!(":{}", "-".repeat(w - 1)) } else { format!("{}:", "-".repeat(w - 1)) })
        .collect();
    out.push_str(&format!("| {} |\n", rule.join(" | ")));
    for r in body {
        out.push_str(&line(r.clone()));
    }
    out
}

impl Report {
    /// Comma-separated table with the six standard columns. Time is in
    /// seconds.
    pub fn to_csv(&self) -> String {
        let mut out = COLUMNS.join(",") + "\n";
        for row in &self.rows {
            let c = cells(row);
            let fields: Vec<String> = c.iter().map(|s| csv_field(s)).collect();
            out.push_str(&fields.join(","));
            out.push('\n');
        }
        out
    }

    /// Human-readable report: the main table, the chance level for D_f
    /// (`100/num_classes`), the class-mode test-side D_f column and any
    /// warnings.
    pub fn to_markdown(&self, title: &str, num_classes: usize) -> String {
        let mut out = format!("## {title}\n\n");
        out.push_str("Accuracies and MIA in percent, Time in seconds (mean over seeds).\n\n");
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| cells(r).to_vec()).collect();
        out.push_str(&aligned(&COLUMNS, &body));
        if num_classes > 0 {
            writeln!(out, "\nChance level on D_f: {:.2}% (100/{num_classes}).", 100.0 / num_classes as f64).unwrap();
        }
        let class_rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .filter_map(|r| r.acc_forget_test.map(|v| vec![r.label(), format!("{v:.2}")]))
            .collect();
        if !class_rows.is_empty() {
            out.push_str("\nClass unlearning, accuracy on test samples of the forgotten class:\n\n");
            out.push_str(&aligned(&["Method", "D_f (test)"], &class_rows));
        }
        if !self.warnings.is_empty() {
            out.push_str("\nWarnings:\n\n");
            for w in &self.warnings {
                writeln!(out, "- {w}").unwrap();
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(section: Section, method: &str, seed: u64, v: f64) -> RunRecord {
        RunRecord {
            section,
            method: method.into(),
            metrics: SeedMetrics {
                seed,
                acc_test: v,
                acc_forget: v,
                acc_retain: v,
                mia: v,
                wall_time: 1.0,
                acc_forget_test: (section == Section::Class).then_some(v / 2.0),
            },
        }
    }

    #[test]
    fn single_seed_row_equals_raw_values() {
        let r = assemble_report(&[record(Section::Sample, "GradAscent", 1, 42.5)]).unwrap();
        assert_eq!(r.rows[0].acc_forget, 42.5);
        assert_eq!(r.rows[0].seeds_used, 1);
    }

    #[test]
    fn seed_mean() {
        let r = assemble_report(&[
            record(Section::Sample, "GradAscent", 1, 10.0),
            record(Section::Sample, "GradAscent", 2, 20.0),
        ])
        .unwrap();
        assert_eq!(r.rows[0].mia_score, 15.0);
        assert_eq!(r.rows[0].raw.len(), 2);
    }

    #[test]
    fn rows_ordered_by_section() {
        let r = assemble_report(&[
            record(Section::Class, "SalUn", 1, 1.0),
            record(Section::Sample, "SCRUB", 1, 1.0),
            record(Section::Original, "Original", 1, 1.0),
            record(Section::Sample, "Bad-T", 1, 1.0),
        ])
        .unwrap();
        let labels: Vec<String> = r.rows.iter().map(EvalReport::label).collect();
        assert_eq!(labels, ["Original", "SCRUB (sample)", "Bad-T (sample)", "SalUn (class)"]);
    }

    #[test]
    fn inconsistent_seed_counts_warn() {
        let r = assemble_report(&[
            record(Section::Sample, "A", 1, 1.0),
            record(Section::Sample, "A", 2, 1.0),
            record(Section::Sample, "B", 1, 1.0),
            record(Section::Sample, "B", 2, 1.0),
            record(Section::Sample, "C", 1, 1.0),
        ])
        .unwrap();
        assert_eq!(r.rows.len(), 3);
        assert_eq!(r.warnings.len(), 1);
        assert!(r.warnings[0].starts_with("C (sample)"));
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(assemble_report(&[]).is_err());
        assert!(assemble_report(&[record(Section::Sample, "A", 1, 101.0)]).is_err());
    }

    #[test]
    fn output_formats() {
        let r = assemble_report(&[
            record(Section::Original, "Original", 1, 99.0),
            record(Section::Class, "Retrain", 1, 50.0),
        ])
        .unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("Method,D_t,D_f,D_r,MIA,Time\n"));
        assert_eq!(csv.lines().count(), 3);
        let md = r.to_markdown("Keyword spotting", 12);
        assert!(md.contains("| Method "));
        for c in COLUMNS {
            assert!(md.lines().any(|l| l.starts_with("| Method") && l.contains(c)));
        }
        assert!(md.contains("8.33%"));
        assert!(md.contains("Retrain (class)") && md.contains("25.00"));
    }

    proptest! {
        #[test]
        fn aggregate_matches_recomputation(values in proptest::collection::vec(0.0f64..100.0, 1..8)) {
            let records: Vec<RunRecord> = values
                .iter()
                .enumerate()
                .map(|(i, &v)| record(Section::Sample, "M", i as u64, v))
                .collect();
            let r = assemble_report(&records).unwrap();
            let mut kahan = (0.0f64, 0.0f64);
            for &v in &values {
                let y = v - kahan.1;
                let t = kahan.0 + y;
                kahan.1 = (t - kahan.0) - y;
                kahan.0 = t;
            }
            prop_assert!((r.rows[0].acc_test - kahan.0 / values.len() as f64).abs() <= 1e-9);
            prop_assert_eq!(r.rows[0].seeds_used, r.rows[0].raw.len());
        }
    }
}
