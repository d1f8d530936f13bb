//! Precision-recall evaluation of sparse similarity matrices.
//!
//! Two conventions:
//! - single matching: only the best evaluated pair of every query counts;
//! - multi matching: every evaluated pair counts, and hard matches that
//!   were never evaluated stay false negatives at every threshold.
//!
//! A retrieved pair is a true positive if it is in the soft (allowed)
//! ground truth. Recall only counts hard (required) matches, so soft-only
//! pairs raise precision without entering the recall denominator.
//!
//! Thresholds sweep the distinct similarity values from high to low; equal
//! values enter together. The AUC is the trapezoidal integral over the
//! operating points, with the first point extended flat to recall 0.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::dataset::GroundTruth;
use crate::engine::SparseSimilarityMatrix;
use crate::error::{EprError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingMode {
    Single,
    Multi,
}

impl fmt::Display for MatchingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchingMode::Single => "single",
            MatchingMode::Multi => "multi",
        })
    }
}

impl FromStr for MatchingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "single" => Ok(MatchingMode::Single),
            "multi" => Ok(MatchingMode::Multi),
            other => Err(format!(
                "unknown matching mode {other:?} (expected single or multi)"
            )),
        }
    }
}

/// Operating points `(recall, precision)` in order of decreasing threshold.
#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl PrCurve {
    pub fn from_points(points: Vec<(f64, f64)>) -> Self {
        let auc = trapezoid_auc(&points);
        Self { points, auc }
    }
}

fn trapezoid_auc(points: &[(f64, f64)]) -> f64 {
    let Some(&(r0, p0)) = points.first() else {
        return 0.0;
    };
    let mut area = r0 * p0;
    for w in points.windows(2) {
        let ((ra, pa), (rb, pb)) = (w[0], w[1]);
        area += (rb - ra) * 0.5 * (pa + pb);
    }
    area
}

/// One retrieved pair reduced to what the sweep needs.
struct Scored {
    similarity: f64,
    /// In the soft ground truth.
    positive: bool,
    /// Counts towards the recall numerator.
    recalled: bool,
}

fn sweep(mut scored: Vec<Scored>, recall_denominator: usize) -> PrCurve {
    scored.sort_by(|a, b| b.similarity.total_cmp(&a.similarity));
    let denom = recall_denominator as f64;
    let (mut tp, mut fp, mut hits) = (0usize, 0usize, 0usize);
    let mut points = Vec::new();
    let mut i = 0;
    while i < scored.len() {
        let threshold = scored[i].similarity;
        while i < scored.len() && scored[i].similarity == threshold {
            let s = &scored[i];
            if s.positive {
                tp += 1;
            } else {
                fp += 1;
            }
            if s.recalled {
                hits += 1;
            }
            i += 1;
        }
        points.push((hits as f64 / denom, tp as f64 / (tp + fp) as f64));
    }
    PrCurve::from_points(points)
}

fn check_shape(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> Result<()> {
    if s.db_count() != gt.db_count() || s.q_count() != gt.q_count() {
        return Err(EprError::Range(format!(
            "similarity matrix is {}x{} but ground truth is {}x{}",
            s.db_count(),
            s.q_count(),
            gt.db_count(),
            gt.q_count()
        )));
    }
    Ok(())
}

/// Curve over the best evaluated pair of every query.
///
/// Recall counts queries that have at least one hard match and whose best
/// pair is allowed; queries without hard matches can still add false
/// positives.
pub fn single_matching_curve(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> Result<PrCurve> {
    check_shape(s, gt)?;
    let has_hard = gt.queries_with_hard_match();
    let denominator = has_hard.iter().filter(|&&h| h).count();
    if denominator == 0 {
        return Err(EprError::Domain(
            "no query has a hard match; recall is undefined".into(),
        ));
    }
    let scored = s
        .columns()
        .iter()
        .enumerate()
        .filter_map(|(q, col)| {
            col.best().map(|(db, similarity)| {
                let positive = gt.is_soft(db, q);
                Scored {
                    similarity,
                    positive,
                    recalled: positive && has_hard[q],
                }
            })
        })
        .collect();
    Ok(sweep(scored, denominator))
}

/// Curve over every evaluated pair; the recall denominator is the number
/// of hard pairs.
pub fn multi_matching_curve(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> Result<PrCurve> {
    check_shape(s, gt)?;
    let denominator = gt.hard().len();
    if denominator == 0 {
        return Err(EprError::Domain("ground truth has no hard matches".into()));
    }
    let scored = s
        .iter()
        .map(|(db, q, similarity)| Scored {
            similarity,
            positive: gt.is_soft(db, q),
            recalled: gt.is_hard(db, q),
        })
        .collect();
    Ok(sweep(scored, denominator))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityReport {
    pub evaluated_pair_percentage: f64,
    pub gt_min_percentage: f64,
    pub gt_max_percentage: f64,
}

/// Evaluated pairs and hard/soft ground truth as percentages of |DB|x|Q|.
pub fn density_report(s: &SparseSimilarityMatrix, gt: &GroundTruth) -> DensityReport {
    let total = (s.db_count() * s.q_count()) as f64;
    let pct = |n: usize| {
        if total > 0.0 {
            100.0 * n as f64 / total
        } else {
            0.0
        }
    };
    DensityReport {
        evaluated_pair_percentage: pct(s.entry_count()),
        gt_min_percentage: pct(gt.hard().len()),
        gt_max_percentage: pct(gt.soft().len()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub mode: MatchingMode,
    pub auc: f64,
    pub evaluated_pair_percentage: f64,
    pub gt_min_percentage: f64,
    pub gt_max_percentage: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "method,mode,auc,density_pct,gt_min_pct,gt_max_pct";

    pub fn to_csv_row(&self, method: &str) -> String {
        format!(
            "{method},{},{:.6},{:.6},{:.6},{:.6}",
            self.mode,
            self.auc,
            self.evaluated_pair_percentage,
            self.gt_min_percentage,
            self.gt_max_percentage
        )
    }

    /// Parses a row written by [`EvalReport::to_csv_row`]; returns the
    /// method name and the report.
    pub fn from_csv_row(line: &str) -> Result<(String, Self)> {
        let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(EprError::Format(format!(
                "expected 6 report fields, got {line:?}"
            )));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| EprError::Format(format!("invalid number {s:?} in report")))
        };
        let mode = fields[1].parse().map_err(EprError::Format)?;
        Ok((
            fields[0].to_string(),
            Self {
                mode,
                auc: num(fields[2])?,
                evaluated_pair_percentage: num(fields[3])?,
                gt_min_percentage: num(fields[4])?,
                gt_max_percentage: num(fields[5])?,
            },
        ))
    }
}

/// Curve plus density figures for one run.
pub fn evaluate(
    s: &SparseSimilarityMatrix,
    gt: &GroundTruth,
    mode: MatchingMode,
) -> Result<EvalReport> {
    if s.entry_count() == 0 {
        return Err(EprError::Domain(
            "similarity matrix has no evaluated entries".into(),
        ));
    }
    let curve = match mode {
        MatchingMode::Single => single_matching_curve(s, gt)?,
        MatchingMode::Multi => multi_matching_curve(s, gt)?,
    };
    let density = density_report(s, gt);
    Ok(EvalReport {
        mode,
        auc: curve.auc,
        evaluated_pair_percentage: density.evaluated_pair_percentage,
        gt_min_percentage: density.gt_min_percentage,
        gt_max_percentage: density.gt_max_percentage,
    })
}

/// One line of the performance/density trade-off table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TradeoffRow {
    pub method: String,
    pub mode: MatchingMode,
    pub auc: f64,
    pub density_pct: f64,
    pub rel_auc_vs_full: f64,
}

impl TradeoffRow {
    pub const CSV_HEADER: &'static str = "method,mode,auc,density_pct,rel_auc_vs_full";

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{:.6},{:.6}",
            self.method, self.mode, self.auc, self.density_pct, self.rel_auc_vs_full
        )
    }
}

/// Relative AUC change of every report against the full-comparison
/// baseline (`auc / baseline.auc - 1`).
pub fn compare_runs(
    reports: &[(String, EvalReport)],
    baseline: &EvalReport,
) -> Result<Vec<TradeoffRow>> {
    if baseline.auc == 0.0 {
        return Err(EprError::Domain(
            "baseline AUC is 0; relative change undefined".into(),
        ));
    }
    reports
        .iter()
        .map(|(method, r)| {
            if r.mode != baseline.mode {
                return Err(EprError::Domain(format!(
                    "report {method:?} uses {} matching, baseline uses {}",
                    r.mode, baseline.mode
                )));
            }
            Ok(TradeoffRow {
                method: method.clone(),
                mode: r.mode,
                auc: r.auc,
                density_pct: r.evaluated_pair_percentage,
                rel_auc_vs_full: r.auc / baseline.auc - 1.0,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::SparseColumn;

    fn matrix(
        db_count: usize,
        q_count: usize,
        entries: &[(usize, usize, f64)],
    ) -> SparseSimilarityMatrix {
        let mut cols = vec![Vec::new(); q_count];
        for &(db, q, s) in entries {
            cols[q].push((db, s));
        }
        let mut m = SparseSimilarityMatrix::new(db_count, q_count);
        for (q, mut c) in cols.into_iter().enumerate() {
            c.sort_by_key(|e| e.0);
            m.set_column(q, SparseColumn::from_sorted(c));
        }
        m
    }

    fn report(mode: MatchingMode, auc: f64) -> EvalReport {
        EvalReport {
            mode,
            auc,
            evaluated_pair_percentage: 10.0,
            gt_min_percentage: 1.0,
            gt_max_percentage: 2.0,
        }
    }

    #[test]
    fn perfect_single_matcher() {
        let mut gt = GroundTruth::new(3, 3);
        for i in 0..3 {
            gt.insert_hard(i, i).unwrap();
        }
        let s = matrix(
            3,
            3,
            &[
                (0, 0, 0.9),
                (1, 0, 0.1),
                (1, 1, 0.7),
                (2, 2, 0.8),
                (0, 2, 0.3),
            ],
        );
        let c = single_matching_curve(&s, &gt).unwrap();
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn wrong_single_matcher() {
        let mut gt = GroundTruth::new(4, 2);
        gt.insert_hard(0, 0).unwrap();
        gt.insert_hard(0, 1).unwrap();
        let s = matrix(4, 2, &[(3, 0, 0.9), (2, 1, 0.8)]);
        let c = single_matching_curve(&s, &gt).unwrap();
        assert!(c.points.iter().all(|&(_, p)| p == 0.0));
        assert_eq!(c.auc, 0.0);
    }

    #[test]
    fn two_query_hand_enumeration() {
        let mut gt = GroundTruth::new(2, 2);
        gt.insert_hard(0, 0).unwrap();
        gt.insert_hard(0, 1).unwrap();
        let s = matrix(2, 2, &[(0, 0, 0.9), (1, 1, 0.8)]);
        let c = single_matching_curve(&s, &gt).unwrap();
        assert_eq!(c.points, vec![(0.5, 1.0), (0.5, 0.5)]);
        assert_eq!(c.auc, 0.5);
    }

    #[test]
    fn single_needs_hard_matches() {
        let gt = GroundTruth::new(2, 2);
        let s = matrix(2, 2, &[(0, 0, 0.9)]);
        assert!(matches!(
            single_matching_curve(&s, &gt),
            Err(EprError::Domain(_))
        ));
        assert!(matches!(
            multi_matching_curve(&s, &gt),
            Err(EprError::Domain(_))
        ));
    }

    #[test]
    fn multi_single_hard_entry() {
        let mut gt = GroundTruth::new(4, 1);
        for i in 0..4 {
            gt.insert_hard(i, 0).unwrap();
        }
        let s = matrix(4, 1, &[(2, 0, 0.7)]);
        let c = multi_matching_curve(&s, &gt).unwrap();
        assert_eq!(c.points, vec![(0.25, 1.0)]);
        assert_eq!(c.auc, 0.25);
    }

    #[test]
    fn multi_no_soft_entries() {
        let mut gt = GroundTruth::new(4, 1);
        gt.insert_hard(0, 0).unwrap();
        let s = matrix(4, 1, &[(2, 0, 0.7), (3, 0, 0.2)]);
        assert_eq!(multi_matching_curve(&s, &gt).unwrap().auc, 0.0);
    }

    #[test]
    fn soft_pairs_are_positive_but_not_recalled() {
        let mut gt = GroundTruth::new(3, 1);
        gt.insert_hard(0, 0).unwrap();
        gt.insert_soft(1, 0).unwrap();
        let s = matrix(3, 1, &[(1, 0, 0.9), (0, 0, 0.8), (2, 0, 0.1)]);
        let c = multi_matching_curve(&s, &gt).unwrap();
        assert_eq!(c.points, vec![(0.0, 1.0), (1.0, 1.0), (1.0, 2.0 / 3.0)]);
        assert_eq!(c.auc, 1.0);
    }

    #[test]
    fn ties_enter_together() {
        let mut gt = GroundTruth::new(2, 1);
        gt.insert_hard(0, 0).unwrap();
        let s = matrix(2, 1, &[(0, 0, 0.5), (1, 0, 0.5)]);
        let c = multi_matching_curve(&s, &gt).unwrap();
        assert_eq!(c.points, vec![(1.0, 0.5)]);
    }

    #[test]
    fn density_examples() {
        let mut gt = GroundTruth::new(2, 2);
        gt.insert_hard(0, 0).unwrap();
        gt.insert_soft(1, 0).unwrap();
        let full = matrix(2, 2, &[(0, 0, 0.1), (1, 0, 0.1), (0, 1, 0.1), (1, 1, 0.1)]);
        let d = density_report(&full, &gt);
        assert_eq!(d.evaluated_pair_percentage, 100.0);
        assert_eq!(d.gt_min_percentage, 25.0);
        assert_eq!(d.gt_max_percentage, 50.0);
        assert_eq!(
            density_report(&matrix(2, 2, &[]), &gt).evaluated_pair_percentage,
            0.0
        );
    }

    #[test]
    fn evaluate_rejects_empty_matrix() {
        let mut gt = GroundTruth::new(2, 2);
        gt.insert_hard(0, 0).unwrap();
        assert!(matches!(
            evaluate(&matrix(2, 2, &[]), &gt, MatchingMode::Single),
            Err(EprError::Domain(_))
        ));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut gt = GroundTruth::new(3, 2);
        gt.insert_hard(0, 0).unwrap();
        assert!(matches!(
            multi_matching_curve(&matrix(2, 2, &[(0, 0, 0.5)]), &gt),
            Err(EprError::Range(_))
        ));
    }

    #[test]
    fn compare_runs_examples() {
        let base = report(MatchingMode::Single, 0.75);
        let rows = compare_runs(
            &[
                ("full".into(), base),
                ("pr".into(), report(MatchingMode::Single, 0.9)),
            ],
            &base,
        )
        .unwrap();
        assert_eq!(rows[0].rel_auc_vs_full, 0.0);
        assert!((rows[1].rel_auc_vs_full - 0.2).abs() < 1e-12);
        assert!(compare_runs(&[], &base).unwrap().is_empty());
        assert!(compare_runs(&[], &report(MatchingMode::Single, 0.0)).is_err());
        assert!(compare_runs(&[("m".into(), report(MatchingMode::Multi, 0.5))], &base).is_err());
    }

    #[test]
    fn report_csv_round_trip() {
        let r = EvalReport {
            mode: MatchingMode::Multi,
            auc: 0.5,
            evaluated_pair_percentage: 5.11,
            gt_min_percentage: 1.27,
            gt_max_percentage: 2.11,
        };
        let (method, back) = EvalReport::from_csv_row(&r.to_csv_row("pr")).unwrap();
        assert_eq!(method, "pr");
        assert_eq!(back, r);
    }
}
