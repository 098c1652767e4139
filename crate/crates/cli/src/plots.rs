//! Plot-ready tables derived from an evaluation report. All test-set scores.
//!
//! * `box_accuracy.csv`, `bar_mcc.csv`, `line_f1.csv`: header
//!   `family,<strategy>...`, one row per family, one column per strategy;
//!   an empty cell marks a failed evaluation.
//! * `heatmap_nemenyi.csv`: header `strategy,<strategy>...`, the symmetric
//!   matrix of pairwise Nemenyi p-values (unit diagonal). Only written when
//!   the report carries test results.

use irt_partition::evaluation::{EvaluationReport, Metric};
use irt_partition::stats::write_nemenyi_csv;

pub const PLOTS_DIR: &str = "plots";
pub const BOX_ACCURACY_FILE: &str = "box_accuracy.csv";
pub const BAR_MCC_FILE: &str = "bar_mcc.csv";
pub const LINE_F1_FILE: &str = "line_f1.csv";
pub const HEATMAP_FILE: &str = "heatmap_nemenyi.csv";

/// Family x strategy table of one test metric.
pub fn metric_table(report: &EvaluationReport, metric: Metric) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["family".to_string()];
    header.extend(report.strategies.iter().map(|s| s.to_string()));
    w.write_record(&header).expect("in-memory write");
    for &family in &report.families {
        let mut row = vec![family.to_string()];
        row.extend(report.strategies.iter().map(|&s| {
            report
                .entry(s, family)
                .and_then(|e| e.test)
                .map_or_else(String::new, |m| m.get(metric).to_string())
        }));
        w.write_record(&row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// `(file name, contents)` for every plot table the report supports.
pub fn render(report: &EvaluationReport) -> Vec<(&'static str, Vec<u8>)> {
    let mut out = vec![
        (BOX_ACCURACY_FILE, metric_table(report, Metric::Accuracy)),
        (BAR_MCC_FILE, metric_table(report, Metric::Mcc)),
        (LINE_F1_FILE, metric_table(report, Metric::F1)),
    ];
    if let Some(t) = report.tests.as_ref().filter(|t| !t.nemenyi_p.is_empty()) {
        let mut buf = Vec::new();
        write_nemenyi_csv(&t.treatments, &t.nemenyi_p, &mut buf).expect("in-memory write");
        out.push((HEATMAP_FILE, buf));
    }
    out
}
