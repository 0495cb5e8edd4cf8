//! Spatial cross-validation: folds partition the sensors (rows of `G` and
//! `M`), each fold is fitted on the remaining sensors along the λ grid and
//! scored on its own rows.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{ensure, Result};
use crate::irmxne::ReweightConfig;
use crate::lambda_grid::{argmin_prefer_first, no_valid_point, solve_path_warm, LambdaGrid};
use crate::problem::{lambda_max, BlockDesign, Measurements};

/// Assignment of every sensor to one of `n_folds` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FoldPlan {
    n_folds: usize,
    assignment: Vec<usize>,
    seed: u64,
}

impl FoldPlan {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Sorted `(train, validation)` sensor indices of `fold`.
    pub fn split(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        (0..self.assignment.len()).partition(|&i| self.assignment[i] != fold)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        self.assignment.iter().for_each(|&f| sizes[f] += 1);
        sizes
    }

    /// Same partition with fold ids renamed by `perm` (`new = perm[old]`).
    pub fn relabeled(&self, perm: &[usize]) -> Result<FoldPlan> {
        let mut seen = vec![false; self.n_folds];
        ensure!(perm.len() == self.n_folds, InvalidInput, "relabeling needs {} ids", self.n_folds);
        for &p in perm {
            ensure!(p < self.n_folds && !seen[p], InvalidInput, "relabeling is not a permutation");
            seen[p] = true;
        }
        Ok(FoldPlan {
            n_folds: self.n_folds,
            assignment: self.assignment.iter().map(|&f| perm[f]).collect(),
            seed: self.seed,
        })
    }
}

/// Seeded random permutation of `0..n` cut into `n_folds` folds whose sizes
/// differ by at most one (the first `n mod V` folds get the extra sensor).
pub fn make_folds(n: usize, n_folds: usize, seed: u64) -> Result<FoldPlan> {
    ensure!(n_folds >= 2, InvalidInput, "need at least 2 folds, got {n_folds}");
    ensure!(n_folds <= n, InvalidInput, "{n_folds} folds for {n} sensors");
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (q, r) = (n / n_folds, n % n_folds);
    let mut assignment = vec![0; n];
    let mut start = 0;
    for fold in 0..n_folds {
        let size = q + usize::from(fold < r);
        for &i in &perm[start..start + size] {
            assignment[i] = fold;
        }
        start += size;
    }
    Ok(FoldPlan { n_folds, assignment, seed })
}

/// Training problem of `fold`: the design and measurements without its rows.
pub fn training_problem(
    design: &BlockDesign,
    meas: &Measurements,
    plan: &FoldPlan,
    fold: usize,
) -> (BlockDesign, Measurements) {
    let (train, _) = plan.split(fold);
    (design.select_sensors(&train), meas.select_sensors(&train))
}

/// Outcome of cross-validated grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSelection {
    pub lambda: f64,
    pub index: usize,
    /// Mean per-entry validation error for each λ; `None` where no fold
    /// produced a valid fit.
    pub mean_errors: Vec<Option<f64>>,
    /// `fold_errors[v][i]`: per-entry validation error of fold `v` at λ_i.
    pub fold_errors: Vec<Vec<Option<f64>>>,
    /// Folds left out because their training data has `λ_max = 0`.
    pub skipped_folds: Vec<usize>,
}

/// Picks the λ minimizing the validation error averaged over folds. Fold
/// errors are normalized by the number of validation entries. Exact ties go
/// to the larger λ.
pub fn select_lambda_cv(
    design: &BlockDesign,
    meas: &Measurements,
    grid: &LambdaGrid,
    plan: &FoldPlan,
    config: &ReweightConfig,
) -> Result<CvSelection> {
    ensure!(
        plan.assignment().len() == design.n_sensors() && design.n_sensors() == meas.m().rows(),
        Dimension,
        "fold plan covers {} sensors, design has {}, measurements have {}",
        plan.assignment().len(),
        design.n_sensors(),
        meas.m().rows()
    );
    let t = meas.n_times();
    let mut fold_errors = Vec::with_capacity(plan.n_folds());
    let mut skipped_folds = Vec::new();
    for fold in 0..plan.n_folds() {
        let (train, val) = plan.split(fold);
        let (g_train, m_train) = (design.select_sensors(&train), meas.select_sensors(&train));
        if lambda_max(&g_train, &m_train)? == 0.0 {
            log::warn!("cv: fold {fold} has lambda_max = 0 on its training rows, skipped");
            skipped_folds.push(fold);
            continue;
        }
        let g_val = design.g().select_rows(&val);
        let m_val = meas.m().select_rows(&val);
        let n_entries = (val.len() * t) as f64;
        let path = solve_path_warm(&g_train, &m_train, grid, config)?;
        let errors = path
            .into_iter()
            .map(|rep| match rep {
                Ok(rep) if rep.converged => {
                    let pred = g_val.matmul(rep.estimate.x()).ok()?;
                    Some(m_val.sub(&pred).ok()?.frobenius_sq() / n_entries)
                }
                Ok(_) => None,
                Err(e) => {
                    log::warn!("cv: fold {fold} solve failed: {e}");
                    None
                }
            })
            .collect::<Vec<_>>();
        fold_errors.push(errors);
    }
    ensure!(!fold_errors.is_empty(), Selection, "cross-validation: every fold was skipped");

    let mean_errors: Vec<Option<f64>> = (0..grid.len())
        .map(|i| {
            let vals: Vec<f64> = fold_errors.iter().filter_map(|f| f[i]).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        })
        .collect();
    let best = argmin_prefer_first(mean_errors.iter().copied()).ok_or_else(|| no_valid_point("cross-validation"))?;
    Ok(CvSelection { lambda: grid.values()[best], index: best, mean_errors, fold_errors, skipped_folds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lambda_grid::make_grid;
    use crate::simulation::random_problem;

    #[test]
    fn fold_sizes() {
        let even = make_folds(4, 2, 0).unwrap();
        assert_eq!(even.fold_sizes(), vec![2, 2]);
        let odd = make_folds(5, 2, 0).unwrap();
        assert_eq!(odd.fold_sizes(), vec![3, 2]);
        let many = make_folds(23, 5, 9).unwrap();
        let sizes = many.fold_sizes();
        assert!(sizes.iter().all(|&s| s == 4 || s == 5));
        assert_eq!(sizes.iter().sum::<usize>(), 23);
        assert!(make_folds(3, 4, 0).is_err());
        assert!(make_folds(3, 1, 0).is_err());
    }

    #[test]
    fn folds_are_seeded() {
        assert_eq!(make_folds(30, 5, 3).unwrap(), make_folds(30, 5, 3).unwrap());
        assert_ne!(make_folds(30, 5, 3).unwrap(), make_folds(30, 5, 4).unwrap());
    }

    #[test]
    fn split_partitions_sensors() {
        let plan = make_folds(11, 3, 1).unwrap();
        let (train, val) = plan.split(1);
        assert_eq!(train.len() + val.len(), 11);
        assert!(val.iter().all(|&i| plan.assignment()[i] == 1));
        assert!(train.iter().all(|&i| plan.assignment()[i] != 1));
    }

    #[test]
    fn errors_non_negative_and_single_point() {
        let (design, meas, _) = random_problem(2, 25, 20, 3, 4, 2, 1.0).unwrap();
        let lmax = lambda_max(&design, &meas).unwrap();
        let plan = make_folds(25, 5, 0).unwrap();
        let cfg = ReweightConfig::default();
        let grid = make_grid(lmax, 5, 0.1).unwrap();
        let sel = select_lambda_cv(&design, &meas, &grid, &plan, &cfg).unwrap();
        assert!(sel.fold_errors.iter().flatten().flatten().all(|&e| e >= 0.0));
        let min = sel.mean_errors.iter().flatten().fold(f64::INFINITY, |a, &b| a.min(b));
        assert_eq!(sel.mean_errors[sel.index], Some(min));
        let single = LambdaGrid::new(vec![0.4 * lmax]).unwrap();
        assert_eq!(select_lambda_cv(&design, &meas, &single, &plan, &cfg).unwrap().lambda, 0.4 * lmax);
    }
}
