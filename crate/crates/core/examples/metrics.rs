//! Confusion-matrix metrics, AUC, and a cross-validation style summary table.

use echomil::dataset::Label;
use echomil::evaluation::{auc, confusion_matrix, derive_metrics, render_cv_table, AggregateMetrics};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    use Label::{Negative as N, Positive as P};
    let truths = [P, P, P, P, N, N, N, N, N, P];
    let scores = [0.91, 0.75, 0.62, 0.40, 0.55, 0.30, 0.12, 0.08, 0.45, 0.71];
    let predictions: Vec<Label> = scores.iter().map(|&s| Label::from_score(s as f32, 0.5)).collect();

    let cm = confusion_matrix(&predictions, &truths)?;
    let mut report = derive_metrics(&cm)?;
    report.auc = Some(auc(&scores, &truths)?);
    println!("{cm:?}");
    println!("{}", serde_json::to_string_pretty(&report)?);

    // Five folds whose accuracies are 80, 82, 84, 86 and 88 percent.
    let folds: Vec<_> = (0..5)
        .map(|i| {
            let mut r = report.clone();
            r.accuracy = Some(0.80 + 0.02 * i as f64);
            r
        })
        .collect();
    print!("{}", render_cv_table(&[("Example".to_string(), AggregateMetrics::from_reports(&folds))]));
    Ok(())
}
