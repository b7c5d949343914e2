//! Fold aggregation (mean ± population std) and text-table rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::MetricsReport;

pub const UNDEFINED: &str = "—";

/// Mean and population standard deviation of a metric across folds.
/// Undefined when any fold's value is undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: Option<f64>,
    pub std: Option<f64>,
}

impl MetricSummary {
    pub fn from_values(values: &[Option<f64>]) -> Self {
        let defined: Option<Vec<f64>> = values.iter().copied().collect();
        match defined {
            Some(v) if !v.is_empty() => {
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
                Self {
                    mean: Some(mean),
                    std: Some(var.sqrt()),
                }
            }
            _ => Self { mean: None, std: None },
        }
    }

    /// `mean±std` in percent with two decimals.
    pub fn render_percent(&self) -> String {
        match (self.mean, self.std) {
            (Some(m), Some(s)) => format!("{:.2}±{:.2}", 100.0 * m, 100.0 * s),
            _ => UNDEFINED.to_string(),
        }
    }
}

pub fn render_percent(value: Option<f64>) -> String {
    value.map_or_else(|| UNDEFINED.to_string(), |v| format!("{:.2}", 100.0 * v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub auc: MetricSummary,
    pub accuracy: MetricSummary,
    pub sensitivity: MetricSummary,
    pub specificity: MetricSummary,
    pub f1: MetricSummary,
    pub ppv: MetricSummary,
    pub npv: MetricSummary,
    pub folds: usize,
}

impl AggregateMetrics {
    pub fn from_reports(reports: &[MetricsReport]) -> Self {
        let collect = |f: fn(&MetricsReport) -> Option<f64>| {
            MetricSummary::from_values(&reports.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            auc: collect(|r| r.auc),
            accuracy: collect(|r| r.accuracy),
            sensitivity: collect(|r| r.sensitivity),
            specificity: collect(|r| r.specificity),
            f1: collect(|r| r.f1),
            ppv: collect(|r| r.ppv),
            npv: collect(|r| r.npv),
            folds: reports.len(),
        }
    }
}

/// Left-aligned columns separated by two spaces, with a rule under the header.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut out = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                out.push_str("  ");
            }
            out.push_str(cell);
            out.extend(std::iter::repeat_n(' ', w - cell.chars().count()));
        }
        out.trim_end().to_string()
    };
    let mut out = String::new();
    let _ = writeln!(out, "{}", line(header.to_vec()));
    let _ = writeln!(out, "{}", "-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in rows {
        let _ = writeln!(out, "{}", line(row.iter().map(String::as_str).collect()));
    }
    out
}

pub const CV_COLUMNS: [&str; 6] = ["Model", "AUC(%)", "Accuracy(%)", "Sensitivity(%)", "Specificity(%)", "F1(%)"];

pub fn cv_row(model: &str, agg: &AggregateMetrics) -> Vec<String> {
    vec![
        model.to_string(),
        agg.auc.render_percent(),
        agg.accuracy.render_percent(),
        agg.sensitivity.render_percent(),
        agg.specificity.render_percent(),
        agg.f1.render_percent(),
    ]
}

/// Cross-validation table: AUC, accuracy, sensitivity, specificity and F1 as mean±std.
pub fn render_cv_table(rows: &[(String, AggregateMetrics)]) -> String {
    let body: Vec<Vec<String>> = rows.iter().map(|(name, agg)| cv_row(name, agg)).collect();
    let folds = rows.first().map_or(0, |(_, a)| a.folds);
    format!(
        "{}Mean±Std over {folds} fold(s); Std is the population standard deviation. {UNDEFINED} marks an undefined metric.\n",
        render_table(&CV_COLUMNS, &body)
    )
}

/// Held-out comparison table: accuracy, PPV and NPV.
pub fn render_test_table(rows: &[(String, MetricsReport)]) -> String {
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|(name, m)| vec![name.clone(), render_percent(m.accuracy), render_percent(m.ppv), render_percent(m.npv)])
        .collect();
    render_table(&["Model", "Accuracy(%)", "PPV(%)", "NPV(%)"], &body)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_accuracy_aggregate() {
        let s = MetricSummary::from_values(&[0.80, 0.82, 0.84, 0.86, 0.88].map(Some));
        assert!((s.mean.unwrap() - 0.84).abs() < 1e-12);
        assert!((s.std.unwrap() - 0.0008f64.sqrt()).abs() < 1e-12);
        assert_eq!(s.render_percent(), "84.00±2.83");
    }

    #[test]
    fn undefined_fold_poisons_aggregate() {
        let s = MetricSummary::from_values(&[Some(0.5), None]);
        assert_eq!(s.render_percent(), UNDEFINED);
        assert_eq!(render_percent(None), UNDEFINED);
    }

    #[test]
    fn table_alignment() {
        let t = render_table(&["a", "bb"], &[vec!["xyz".into(), "1".into()]]);
        assert_eq!(t, "a    bb\n-------\nxyz  1\n");
    }
}
