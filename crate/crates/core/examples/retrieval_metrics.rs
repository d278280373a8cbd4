//! Retrieval metrics on hand-written relevance lists, then a full report on
//! a tiny code table written to a directory.
//!
//! ```bash
//! cargo run --example retrieval_metrics -- [report_dir]
//! ```

use semhash::eval::{
    average_precision, evaluate, mean_average_precision, precision_at_k, recall_at_k, Query,
    RelevanceList,
};
use semhash::index::CodeTable;
use semhash::HashCode;

fn main() -> semhash::Result<()> {
    // Relevant, irrelevant, relevant: AP = (1/1 + 2/3) / 2 = 0.8333...
    let a = RelevanceList::full(vec![true, false, true]);
    let b = RelevanceList::full(vec![false, true, false, false]);
    println!("AP(1,0,1)   = {:.6}", average_precision(&a));
    println!("AP(0,1,0,0) = {:.6}", average_precision(&b));
    println!(
        "MAP         = {:.6}",
        mean_average_precision(&[a.clone(), b])?
    );
    println!(
        "P@2 = {:.3}  R@2 = {:.3}",
        precision_at_k(&a, 2)?,
        recall_at_k(&a, 2)?
    );

    let mut table = CodeTable::new(4);
    for (i, (signs, label)) in [
        ([1, 1, 1, 1], 0),
        ([1, 1, 1, -1], 0),
        ([-1, -1, -1, -1], 1),
        ([-1, -1, 1, 1], 1),
    ]
    .iter()
    .enumerate()
    {
        table.push(&HashCode::pack(signs), i as u32, Some(*label), *label)?;
    }
    let queries = vec![
        Query {
            code: HashCode::pack(&[1, 1, -1, 1]),
            label: 0,
            predicted: 0,
            exclude: None,
        },
        Query {
            code: HashCode::pack(&[-1, -1, -1, 1]),
            label: 1,
            predicted: 0,
            exclude: None,
        },
    ];
    let report = evaluate(&queries, &table, &[1, 2, 4])?;
    println!("\nreport: MAP={:.4} OA={:.2}", report.map, report.oa);
    for (k, (p, r)) in report
        .ks
        .iter()
        .zip(report.precision_at.iter().zip(&report.recall_at))
    {
        println!("  k={k}: P={p:.3} R={r:.3}");
    }
    for p in &report.pr_points {
        println!(
            "  radius {}: P={:.3} R={:.3}",
            p.radius, p.precision, p.recall
        );
    }

    if let Some(dir) = std::env::args().nth(1) {
        report.write_files(dir.as_ref())?;
        println!("wrote report.json, at_k.csv, pr_radius.csv to {dir}");
    }
    Ok(())
}
