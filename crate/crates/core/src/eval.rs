//! Retrieval and classification metrics.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::CodeTable;
use crate::model::HashCode;

/// Ranked relevance flags for one query, plus the number of relevant items in
/// the whole database.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelevanceList {
    flags: Vec<bool>,
    total_relevant: usize,
}

impl RelevanceList {
    pub fn new(flags: Vec<bool>, total_relevant: usize) -> Result<Self> {
        let hits = flags.iter().filter(|&&f| f).count();
        if hits > total_relevant {
            return Err(Error::Data(format!(
                "relevance list has {hits} hits but only {total_relevant} relevant items exist"
            )));
        }
        Ok(RelevanceList {
            flags,
            total_relevant,
        })
    }

    /// Relevant count taken from the list itself (full-depth ranking).
    pub fn full(flags: Vec<bool>) -> Self {
        let total_relevant = flags.iter().filter(|&&f| f).count();
        RelevanceList {
            flags,
            total_relevant,
        }
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn total_relevant(&self) -> usize {
        self.total_relevant
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    fn hits_in_top(&self, k: usize) -> usize {
        self.flags[..k].iter().filter(|&&f| f).count()
    }
}

/// Mean of precision@j over the ranks j holding a relevant item. A list with
/// no relevant items scores 0.
pub fn average_precision(rel: &RelevanceList) -> f64 {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, _) in rel.flags.iter().enumerate().filter(|(_, &f)| f) {
        hits += 1;
        sum += hits as f64 / (rank + 1) as f64;
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn mean_average_precision(queries: &[RelevanceList]) -> Result<f64> {
    if queries.is_empty() {
        return Err(Error::Data("MAP needs at least one query".into()));
    }
    Ok(queries.iter().map(average_precision).sum::<f64>() / queries.len() as f64)
}

pub fn precision_at_k(rel: &RelevanceList, k: usize) -> Result<f64> {
    if k == 0 || k > rel.len() {
        return Err(Error::Data(format!(
            "precision@k needs 1 <= k <= {}, got {k}",
            rel.len()
        )));
    }
    Ok(rel.hits_in_top(k) as f64 / k as f64)
}

pub fn recall_at_k(rel: &RelevanceList, k: usize) -> Result<f64> {
    if rel.total_relevant == 0 {
        return Err(Error::Data(
            "recall@k needs at least one relevant item".into(),
        ));
    }
    if k == 0 || k > rel.len() {
        return Err(Error::Data(format!(
            "recall@k needs 1 <= k <= {}, got {k}",
            rel.len()
        )));
    }
    Ok(rel.hits_in_top(k) as f64 / rel.total_relevant as f64)
}

/// Precision and recall of the items within one Hamming radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub radius: u32,
    pub precision: f64,
    pub recall: f64,
    /// Nothing fell within the radius; precision is then 1 by convention.
    pub empty: bool,
}

/// One point per radius 0..=K. `exclude` drops the query's own row when it is
/// part of the table.
pub fn precision_recall_curve(
    query: &HashCode,
    query_label: u32,
    table: &CodeTable,
    exclude: Option<usize>,
) -> Result<Vec<PrPoint>> {
    if table.is_empty() {
        return Err(Error::Data(
            "precision-recall curve needs a nonempty table".into(),
        ));
    }
    let dists = table.distances(query)?;
    let k = table.bits();
    let mut in_bucket = vec![0usize; k + 1];
    let mut relevant_in_bucket = vec![0usize; k + 1];
    for (i, &d) in dists.iter().enumerate() {
        if Some(i) == exclude {
            continue;
        }
        in_bucket[d as usize] += 1;
        if table.label(i) == Some(query_label) {
            relevant_in_bucket[d as usize] += 1;
        }
    }
    let total_relevant: usize = relevant_in_bucket.iter().sum();
    let (mut retrieved, mut hits) = (0usize, 0usize);
    let mut points = Vec::with_capacity(k + 1);
    for radius in 0..=k {
        retrieved += in_bucket[radius];
        hits += relevant_in_bucket[radius];
        let empty = retrieved == 0;
        points.push(PrPoint {
            radius: radius as u32,
            precision: if empty {
                1.0
            } else {
                hits as f64 / retrieved as f64
            },
            recall: if total_relevant == 0 {
                0.0
            } else {
                hits as f64 / total_relevant as f64
            },
            empty,
        });
    }
    Ok(points)
}

pub fn overall_accuracy(predicted: &[u32], truth: &[u32]) -> Result<f64> {
    if predicted.len() != truth.len() || predicted.is_empty() {
        return Err(Error::Data(format!(
            "overall accuracy needs equal nonempty inputs, got {} and {}",
            predicted.len(),
            truth.len()
        )));
    }
    let correct = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / predicted.len() as f64)
}

/// A query code together with its ground truth and predicted label.
#[derive(Debug, Clone)]
pub struct Query {
    pub code: HashCode,
    pub label: u32,
    pub predicted: u32,
    /// Row of the query inside the database, if it is one.
    pub exclude: Option<usize>,
}

/// Relevance of the full ranking of `query` against `table`.
pub fn relevance_for(query: &Query, table: &CodeTable) -> Result<RelevanceList> {
    let ranked = table.rank_excluding(&query.code, query.exclude)?;
    Ok(RelevanceList::full(
        ranked
            .iter()
            .map(|h| table.label(h.index) == Some(query.label))
            .collect(),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub map: f64,
    pub ks: Vec<usize>,
    pub precision_at: Vec<f64>,
    pub recall_at: Vec<f64>,
    /// Averaged over queries, one entry per radius 0..=K.
    pub pr_points: Vec<PrPoint>,
    pub oa: f64,
    pub queries: usize,
    /// Queries with no relevant item in the database (AP counted as 0).
    pub zero_relevant_queries: usize,
    /// Per radius, how many queries had an empty result set.
    pub empty_radius_queries: Vec<usize>,
}

/// Cutoffs used for precision@k / recall@k when none are given.
pub fn default_ks(database_size: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [1, 5, 10, 20, 50, 100, 200, 500, 1000, 2000, 5000]
        .into_iter()
        .filter(|&k| k <= database_size)
        .collect();
    if ks.last() != Some(&database_size) && database_size > 0 {
        ks.push(database_size);
    }
    ks
}

/// Scores every query against the table. Precision/recall curves are averaged
/// over all queries.
pub fn evaluate(queries: &[Query], table: &CodeTable, ks: &[usize]) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Data("evaluation needs at least one query".into()));
    }
    let bits = table.bits();
    let mut ap_sum = 0.0;
    let mut zero_relevant = 0usize;
    let mut precision_at = vec![0.0; ks.len()];
    let mut recall_at = vec![0.0; ks.len()];
    let mut pr_precision = vec![0.0; bits + 1];
    let mut pr_recall = vec![0.0; bits + 1];
    let mut empty = vec![0usize; bits + 1];

    for q in queries {
        let rel = relevance_for(q, table)?;
        if rel.total_relevant() == 0 {
            zero_relevant += 1;
        }
        ap_sum += average_precision(&rel);
        for (slot, &k) in ks.iter().enumerate() {
            precision_at[slot] += precision_at_k(&rel, k)?;
            if rel.total_relevant() > 0 {
                recall_at[slot] += recall_at_k(&rel, k)?;
            }
        }
        for p in precision_recall_curve(&q.code, q.label, table, q.exclude)? {
            let r = p.radius as usize;
            pr_precision[r] += p.precision;
            pr_recall[r] += p.recall;
            empty[r] += usize::from(p.empty);
        }
    }
    if zero_relevant > 0 {
        warn!("{zero_relevant} queries have no relevant database items; their AP counts as 0");
    }

    let n = queries.len() as f64;
    let predicted: Vec<u32> = queries.iter().map(|q| q.predicted).collect();
    let truth: Vec<u32> = queries.iter().map(|q| q.label).collect();
    Ok(EvalReport {
        map: ap_sum / n,
        ks: ks.to_vec(),
        precision_at: precision_at.into_iter().map(|v| v / n).collect(),
        recall_at: recall_at.into_iter().map(|v| v / n).collect(),
        pr_points: (0..=bits)
            .map(|r| PrPoint {
                radius: r as u32,
                precision: pr_precision[r] / n,
                recall: pr_recall[r] / n,
                empty: empty[r] > 0,
            })
            .collect(),
        oa: overall_accuracy(&predicted, &truth)?,
        queries: queries.len(),
        zero_relevant_queries: zero_relevant,
        empty_radius_queries: empty,
    })
}

#[derive(Serialize)]
struct AtKRow {
    k: usize,
    precision: f64,
    recall: f64,
}

#[derive(Serialize)]
struct RadiusRow {
    radius: u32,
    precision: f64,
    recall: f64,
    empty_queries: usize,
}

impl EvalReport {
    /// Writes `report.json`, `at_k.csv`, and `pr_radius.csv` into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join("report.json");
        let file = File::create(&json_path).map_err(|e| Error::io(&json_path, e))?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)
            .map_err(|e| Error::io(&json_path, e.into()))?;

        let at_k = self.ks.iter().enumerate().map(|(i, &k)| AtKRow {
            k,
            precision: self.precision_at[i],
            recall: self.recall_at[i],
        });
        write_csv(&dir.join("at_k.csv"), at_k)?;
        let radius = self.pr_points.iter().map(|p| RadiusRow {
            radius: p.radius,
            precision: p.precision,
            recall: p.recall,
            empty_queries: self.empty_radius_queries[p.radius as usize],
        });
        write_csv(&dir.join("pr_radius.csv"), radius)
    }
}

pub(crate) fn write_csv<T: Serialize>(
    path: &Path,
    rows: impl IntoIterator<Item = T>,
) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io(path, e.into());
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(flags: &[u8]) -> RelevanceList {
        RelevanceList::full(flags.iter().map(|&f| f == 1).collect())
    }

    /// The MAP double sum evaluated literally: for the j-th relevant item,
    /// P(i, j) is the precision of the ranked prefix ending at that item.
    fn map_oracle(lists: &[Vec<bool>]) -> f64 {
        let mut total = 0.0;
        for flags in lists {
            let n: usize = flags.iter().filter(|&&f| f).count();
            if n == 0 {
                continue;
            }
            let mut inner = 0.0;
            for j in 1..=n {
                let mut seen = 0;
                let mut depth = 0;
                while seen < j {
                    if flags[depth] {
                        seen += 1;
                    }
                    depth += 1;
                }
                let prefix_hits = flags[..depth].iter().filter(|&&f| f).count();
                inner += prefix_hits as f64 / depth as f64;
            }
            total += inner / n as f64;
        }
        total / lists.len() as f64
    }

    #[test]
    fn ap_examples() {
        assert!((average_precision(&rel(&[1, 0, 1])) - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&rel(&[1, 1, 1])), 1.0);
        assert!((average_precision(&rel(&[0, 0, 1])) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(average_precision(&rel(&[0, 0, 0])), 0.0);
    }

    #[test]
    fn map_examples() {
        let one = rel(&[1, 0, 1]);
        assert_eq!(
            mean_average_precision(std::slice::from_ref(&one)).unwrap(),
            average_precision(&one)
        );
        let half = rel(&[0, 1]);
        assert_eq!(mean_average_precision(&[rel(&[1]), half]).unwrap(), 0.75);
        assert!(mean_average_precision(&[]).is_err());
    }

    #[test]
    fn precision_recall_at_k_examples() {
        let r = rel(&[1, 0, 1, 1, 0]);
        assert!((precision_at_k(&r, 5).unwrap() - 0.6).abs() < 1e-15);
        assert_eq!(precision_at_k(&r, 1).unwrap(), 1.0);
        assert!(precision_at_k(&r, 0).is_err());
        assert!(precision_at_k(&r, 6).is_err());

        let r = RelevanceList::new(vec![true, true, false, true, false], 4).unwrap();
        assert_eq!(recall_at_k(&r, 5).unwrap(), 0.75);
        let r = rel(&[0, 1, 0, 1]);
        assert_eq!(recall_at_k(&r, 4).unwrap(), 1.0);
        assert!(recall_at_k(&rel(&[0, 0]), 1).is_err());
        assert!(RelevanceList::new(vec![true, true], 1).is_err());
    }

    #[test]
    fn overall_accuracy_examples() {
        assert_eq!(overall_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        let p: Vec<u32> = (0..10).collect();
        let t: Vec<u32> = (0..10).map(|i| if i < 5 { i } else { 99 }).collect();
        assert_eq!(overall_accuracy(&p, &t).unwrap(), 0.5);
        assert!(overall_accuracy(&[], &[]).is_err());
    }

    fn table_from(codes: &[&[i8]], labels: &[u32]) -> CodeTable {
        let mut t = CodeTable::new(codes[0].len());
        for (i, (c, &l)) in codes.iter().zip(labels).enumerate() {
            t.push(&HashCode::pack(c), i as u32, Some(l), l).unwrap();
        }
        t
    }

    #[test]
    fn pr_curve_endpoints() {
        let t = table_from(
            &[
                &[1, 1, 1, 1],
                &[1, 1, 1, -1],
                &[-1, -1, 1, 1],
                &[-1, -1, -1, -1],
            ],
            &[0, 1, 0, 1],
        );
        let q = HashCode::pack(&[1, 1, 1, 1]);
        let pts = precision_recall_curve(&q, 0, &t, None).unwrap();
        assert_eq!(pts.len(), 5);
        // one exact same-class match at radius 0, two relevant overall
        assert_eq!((pts[0].precision, pts[0].recall), (1.0, 0.5));
        assert_eq!((pts[4].precision, pts[4].recall), (0.5, 1.0));
        assert!(pts.windows(2).all(|w| w[0].recall <= w[1].recall));

        let far = HashCode::pack(&[-1, -1, -1, 1]);
        let pts = precision_recall_curve(&far, 0, &t, None).unwrap();
        assert!(pts[0].empty && pts[0].precision == 1.0 && pts[0].recall == 0.0);
        assert!(!pts[1].empty);
        // leaving out the exact match empties radius 0
        let pts = precision_recall_curve(&q, 0, &t, Some(0)).unwrap();
        assert!(pts[0].empty);
        assert_eq!(pts[4].recall, 1.0);
    }

    #[test]
    fn hand_built_five_item_report() {
        // Query code ++++ with label 0 against five items; distances 0,1,2,3,4.
        let t = table_from(
            &[
                &[1, 1, 1, 1],
                &[1, 1, 1, -1],
                &[1, 1, -1, -1],
                &[1, -1, -1, -1],
                &[-1, -1, -1, -1],
            ],
            &[0, 1, 0, 0, 1],
        );
        let q = Query {
            code: HashCode::pack(&[1, 1, 1, 1]),
            label: 0,
            predicted: 1,
            exclude: None,
        };
        let report = evaluate(&[q], &t, &[1, 2, 5]).unwrap();
        // relevance 1,0,1,1,0 → AP = (1 + 2/3 + 3/4) / 3
        assert!((report.map - (1.0 + 2.0 / 3.0 + 0.75) / 3.0).abs() < 1e-15);
        assert_eq!(report.precision_at, vec![1.0, 0.5, 0.6]);
        assert_eq!(report.recall_at, vec![1.0 / 3.0, 1.0 / 3.0, 1.0]);
        assert_eq!(report.oa, 0.0);
        assert_eq!(report.pr_points[2].precision, 2.0 / 3.0);
    }

    #[test]
    fn default_ks_cover_database() {
        assert_eq!(default_ks(7), vec![1, 5, 7]);
        assert_eq!(default_ks(10), vec![1, 5, 10]);
    }

    proptest! {
        #[test]
        fn map_matches_double_sum(lists in prop::collection::vec(prop::collection::vec(any::<bool>(), 1..30), 1..8)) {
            let rels: Vec<RelevanceList> = lists.iter().cloned().map(RelevanceList::full).collect();
            let got = mean_average_precision(&rels).unwrap();
            prop_assert!((got - map_oracle(&lists)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&got));
        }

        #[test]
        fn recall_non_decreasing_in_k(flags in prop::collection::vec(any::<bool>(), 1..40)) {
            let r = RelevanceList::full(flags);
            if r.total_relevant() > 0 {
                let rec: Vec<f64> = (1..=r.len()).map(|k| recall_at_k(&r, k).unwrap()).collect();
                prop_assert!(rec.windows(2).all(|w| w[0] <= w[1]));
                prop_assert_eq!(*rec.last().unwrap(), 1.0);
            }
        }

        #[test]
        fn ap_ignores_irrelevant_tail_order(
            head in prop::collection::vec(any::<bool>(), 1..20),
            tail in 0usize..10,
        ) {
            let mut a = head.clone();
            a.push(true);
            let base = average_precision(&RelevanceList::full(a.clone()));
            // relevant-first ranking scores 1
            let mut sorted = a.clone();
            sorted.sort_by(|x, y| y.cmp(x));
            prop_assert_eq!(average_precision(&RelevanceList::full(sorted)), 1.0);
            // irrelevant items below the last relevant rank do not matter
            a.extend(std::iter::repeat_n(false, tail));
            prop_assert_eq!(average_precision(&RelevanceList::full(a)), base);
        }
    }
}
