//! ROC-AUC, average precision, and min(recall, precision) on a small scored
//! set, including tied scores, and the resulting JSON report.
//!
//! cargo run --release --example metrics

use emit::eval::{min_recall_precision, pr_auc, roc_auc, scored, MetricReport};

fn main() -> emit::Result<()> {
    let scores = [0.9, 0.8, 0.3, 0.1];
    let labels = [1, 0, 1, 0];
    let ex = scored(&scores, &labels)?;
    println!("ROC-AUC    {}", roc_auc(&ex)?);
    println!("PR-AUC     {}", pr_auc(&ex)?);
    println!("min(Re,Pr) {}", min_recall_precision(&ex)?);

    let tied = scored(&[0.5, 0.5, 0.5, 0.2], &[1, 0, 1, 0])?;
    println!("with ties: ROC-AUC {}  PR-AUC {}", roc_auc(&tied)?, pr_auc(&tied)?);

    let report = MetricReport::compute(&scores, &labels, "example", 0)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
