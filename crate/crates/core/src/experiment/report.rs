//! Plain-text tables for experiment results.

use std::fmt::Write;

use super::{AttributeSet, ConfusionMatrix, CrossMatrix, CvReport, IndoorInfluence, MeanStd};

fn pm(v: MeanStd) -> String {
    format!("{:.2} ± {:.2}", v.mean, v.std)
}

fn confusion_table(out: &mut String, cm: &ConfusionMatrix) {
    let _ = write!(out, "{:<12}", "true\\pred");
    for l in &cm.predicted_labels {
        let _ = write!(out, "{:>10}", l.as_str());
    }
    out.push('\n');
    for (l, row) in cm.true_labels.iter().zip(&cm.counts) {
        let _ = write!(out, "{:<12}", l.as_str());
        for c in row {
            let _ = write!(out, "{c:>10}");
        }
        out.push('\n');
    }
}

/// Per-fold accuracy and F-score, their mean ± std, and the pooled
/// confusion matrix.
pub fn render_cv(title: &str, report: &CvReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {title}");
    let _ = writeln!(
        out,
        "attributes: {} ({})",
        report.attrs,
        report.attrs.describe()
    );
    let _ = writeln!(
        out,
        "{:<6}{:>12}{:>12}{:>8}",
        "fold", "accuracy", "F-score", "test"
    );
    for f in &report.folds {
        let _ = writeln!(
            out,
            "{:<6}{:>12.2}{:>12.2}{:>8}",
            f.fold + 1,
            f.report.accuracy,
            f.report.macro_f1,
            f.test_ids.len()
        );
    }
    let _ = writeln!(out, "accuracy: {}", pm(report.accuracy));
    let _ = writeln!(out, "F-score:  {}", pm(report.macro_f1));
    let _ = writeln!(out, "\npooled confusion matrix:");
    confusion_table(&mut out, &report.pooled.confusion);
    out
}

/// Rows are attribute settings, columns datasets (or consensus subsets);
/// cells are mean accuracy ± std.
pub fn render_ablation(columns: &[String], rows: &[(AttributeSet, Vec<CvReport>)]) -> String {
    let mut out = String::new();
    let _ = write!(out, "{:<24}", "attributes");
    for c in columns {
        let _ = write!(out, "{c:>18}");
    }
    out.push('\n');
    for (attrs, reports) in rows {
        let _ = write!(out, "{:<24}", attrs.describe());
        for r in reports {
            let _ = write!(out, "{:>18}", pm(r.accuracy));
        }
        out.push('\n');
    }
    out
}

pub fn render_indoor(result: &IndoorInfluence) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<20}{:>18}{:>18}",
        "training set", "accuracy", "F-score"
    );
    for (name, r) in [
        ("outdoor only", &result.outdoor_only),
        ("outdoor + indoor", &result.with_indoor),
    ] {
        let _ = writeln!(
            out,
            "{:<20}{:>18}{:>18}",
            name,
            pm(r.accuracy),
            pm(r.macro_f1)
        );
    }
    out
}

/// Accuracy and F-score matrices; diagonal cells (own cross-validation)
/// are marked with †.
pub fn render_cross_matrix(matrix: &CrossMatrix) -> String {
    let mut out = String::new();
    for (heading, pick) in [
        (
            "accuracy",
            (|c: &super::CrossMatrixCell| c.accuracy) as fn(&_) -> f64,
        ),
        ("F-score", |c| c.macro_f1),
    ] {
        let _ = writeln!(out, "{heading} (rows = train, columns = test)");
        let _ = write!(out, "{:<16}", "");
        for n in &matrix.names {
            let _ = write!(out, "{n:>16}");
        }
        out.push('\n');
        for (i, row) in matrix.cells.iter().enumerate() {
            let _ = write!(out, "{:<16}", matrix.names[i]);
            for (j, cell) in row.iter().enumerate() {
                let mark = if i == j { "†" } else { "" };
                let _ = write!(out, "{:>16}", format!("{:.2}{mark}", pick(cell)));
            }
            out.push('\n');
        }
        out.push('\n');
    }
    out
}
