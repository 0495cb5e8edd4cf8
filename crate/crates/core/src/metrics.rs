//! Support-recovery statistics and aggregate summaries.

use crate::error::{ensure, Result};
use crate::problem::Position;
use crate::simulation::distance;

/// δ-precision and δ-recall of an estimated source set.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RecoveryStats {
    pub delta_mm: f64,
    pub precision: f64,
    pub recall: f64,
    pub n_estimated: usize,
    pub n_true: usize,
}

/// Matching radius used for the simulated experiments.
pub const DEFAULT_DELTA_MM: f64 = 7.0;

fn fraction_matched(from: &[Position], to: &[Position], delta_mm: f64) -> f64 {
    let hits = from.iter().filter(|p| to.iter().any(|q| distance(p, q) <= delta_mm)).count();
    hits as f64 / from.len() as f64
}

/// Precision: share of estimated positions within `delta_mm` of some true
/// position. Recall: share of true positions within `delta_mm` of some
/// estimated one. An empty estimate has precision 1 (nothing wrong was
/// reported); an empty truth has recall 1.
pub fn delta_stats(est_positions: &[Position], true_positions: &[Position], delta_mm: f64) -> Result<RecoveryStats> {
    ensure!(delta_mm >= 0.0 && delta_mm.is_finite(), InvalidInput, "delta must be >= 0, got {delta_mm}");
    let (precision, recall) = match (est_positions.is_empty(), true_positions.is_empty()) {
        (true, true) => (1.0, 1.0),
        (true, false) => (1.0, 0.0),
        (false, true) => (0.0, 1.0),
        (false, false) => (
            fraction_matched(est_positions, true_positions, delta_mm),
            fraction_matched(true_positions, est_positions, delta_mm),
        ),
    };
    Ok(RecoveryStats {
        delta_mm,
        precision,
        recall,
        n_estimated: est_positions.len(),
        n_true: true_positions.len(),
    })
}

/// Per-run quantities entering [`summarize`].
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunSummary {
    /// `λ / λ_max`
    pub lambda_ratio: f64,
    pub explained_variance: f64,
    /// Size of the active set.
    pub n_sources: usize,
}

/// Means over runs and the distribution of recovered source counts.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AggregateSummary {
    pub n_runs: usize,
    pub mean_lambda_ratio: f64,
    pub mean_explained_variance: f64,
    pub mean_n_sources: f64,
    pub pct_zero_sources: f64,
    pub pct_one_source: f64,
    pub pct_two_sources: f64,
    pub pct_more_sources: f64,
}

pub fn summarize(runs: &[RunSummary]) -> Result<AggregateSummary> {
    ensure!(!runs.is_empty(), InvalidInput, "cannot summarize zero runs");
    let n = runs.len() as f64;
    let mean = |f: &dyn Fn(&RunSummary) -> f64| runs.iter().map(f).sum::<f64>() / n;
    let mut buckets = [0usize; 4];
    for r in runs {
        buckets[r.n_sources.min(3)] += 1;
    }
    let pct = |k: usize| 100.0 * buckets[k] as f64 / n;
    Ok(AggregateSummary {
        n_runs: runs.len(),
        mean_lambda_ratio: mean(&|r| r.lambda_ratio),
        mean_explained_variance: mean(&|r| r.explained_variance),
        mean_n_sources: mean(&|r| r.n_sources as f64),
        pct_zero_sources: pct(0),
        pct_one_source: pct(1),
        pct_two_sources: pct(2),
        pct_more_sources: pct(3),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;
    use proptest::prelude::*;

    const A: Position = [-50.0, 10.0, 0.0];
    const B: Position = [50.0, 10.0, 0.0];

    #[test]
    fn identical_sets() {
        let s = delta_stats(&[A, B], &[A, B], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn one_of_two_found() {
        let s = delta_stats(&[A], &[A, B], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.5));
    }

    #[test]
    fn just_outside_radius() {
        let s = delta_stats(&[[8.0, 0.0, 0.0]], &[[0.0; 3]], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (0.0, 0.0));
        let s = delta_stats(&[[7.0, 0.0, 0.0]], &[[0.0; 3]], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
    }

    #[test]
    fn empty_conventions() {
        let s = delta_stats(&[], &[A], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 0.0));
        let s = delta_stats(&[A], &[], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (0.0, 1.0));
        let s = delta_stats(&[], &[], 7.0).unwrap();
        assert_eq!((s.precision, s.recall), (1.0, 1.0));
        assert!(delta_stats(&[A], &[A], -1.0).is_err());
    }

    #[test]
    fn summary_buckets() {
        let one = RunSummary { lambda_ratio: 0.5, explained_variance: 0.3, n_sources: 1 };
        let s = summarize(&[one]).unwrap();
        assert_eq!(
            (s.pct_zero_sources, s.pct_one_source, s.pct_two_sources, s.pct_more_sources),
            (0.0, 100.0, 0.0, 0.0)
        );
        let two = RunSummary { n_sources: 2, ..one };
        let s = summarize(&[one, two]).unwrap();
        assert_eq!(s.mean_n_sources, 1.5);
        assert_eq!(
            (s.pct_zero_sources, s.pct_one_source, s.pct_two_sources, s.pct_more_sources),
            (0.0, 50.0, 50.0, 0.0)
        );
        assert!(summarize(&[]).is_err());
    }

    fn point() -> impl Strategy<Value = Position> {
        (-50.0f64..50.0, -50.0f64..50.0, -50.0f64..50.0).prop_map(|(x, y, z)| [x, y, z])
    }

    proptest! {
        #[test]
        fn percentages_sum_to_hundred(counts in proptest::collection::vec(0usize..6, 1..40)) {
            let runs: Vec<RunSummary> = counts.iter().map(|&c| RunSummary {
                lambda_ratio: 0.5, explained_variance: 0.1, n_sources: c }).collect();
            let s = summarize(&runs).unwrap();
            let total = s.pct_zero_sources + s.pct_one_source + s.pct_two_sources + s.pct_more_sources;
            prop_assert!((total - 100.0).abs() <= 1e-9);
        }

        #[test]
        fn monotone_in_delta(est in proptest::collection::vec(point(), 0..6),
                             truth in proptest::collection::vec(point(), 0..6),
                             d1 in 0.0f64..60.0, extra in 0.0f64..60.0) {
            let a = delta_stats(&est, &truth, d1).unwrap();
            let b = delta_stats(&est, &truth, d1 + extra).unwrap();
            prop_assert!(b.precision >= a.precision && b.recall >= a.recall);
        }

        #[test]
        fn permutation_symmetric(est in proptest::collection::vec(point(), 0..6),
                                 truth in proptest::collection::vec(point(), 0..6)) {
            let a = delta_stats(&est, &truth, 30.0).unwrap();
            let mut est_r = est.clone();
            est_r.reverse();
            let mut truth_r = truth.clone();
            truth_r.rotate_left(truth.len().min(1));
            let b = delta_stats(&est_r, &truth_r, 30.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
