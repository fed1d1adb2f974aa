//! Iterative hard-thresholded SVD matrix completion with cross-validated
//! threshold selection.
//!
//! The loop factorizes the current matrix, zeroes every singular value at or
//! below a threshold lambda, reconstructs, copies the reconstruction into the
//! missing cells, and keeps every observed cell at its known value. The
//! threshold is chosen by K-fold cross-validation over observed matrix
//! entries: hide a fold, impute, score the squared error on the hidden
//! entries, and keep the lambda with the smallest mean error.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hard_threshold_reconstruct, svd_with_guess, SvdFactors};
use crate::rng::{self, tag};
use crate::tabular::{decode, encode, ColumnRole, MixedTable};

/// Tuning knobs for [`impute`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImputeConfig {
    /// Number of candidate thresholds on the geometric grid.
    pub grid_size: usize,
    /// Cross-validation folds over observed entries.
    pub folds: usize,
    /// Stop once the RMS change of imputed entries falls to this level.
    pub tolerance: f64,
    /// Hard cap on loop passes.
    pub max_iterations: usize,
    /// Master seed for the fold partition.
    pub seed: u64,
    /// Let the target column participate in the completion matrix.
    pub include_target: bool,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        ImputeConfig {
            grid_size: 20,
            folds: 5,
            tolerance: 1e-4,
            max_iterations: 200,
            seed: 0,
            include_target: false,
        }
    }
}

impl ImputeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 2 {
            return Err(Error::Config("grid_size must be at least 2".into()));
        }
        if self.folds < 2 {
            return Err(Error::Config("folds must be at least 2".into()));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Config("tolerance must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

/// Per-iteration diagnostics of the completion loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationStat {
    /// RMSE between the thresholded reconstruction and the observed entries.
    pub fit_rmse: f64,
    /// RMS change of the imputed entries since the previous iteration.
    pub delta: f64,
}

/// One row of the cross-validation table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub lambda: f64,
    pub mean_mse: f64,
}

/// Output of [`impute`].
#[derive(Debug, Clone)]
pub struct ImputeResult {
    /// The input table with every missing cell filled in.
    pub completed: MixedTable,
    /// Threshold selected by cross-validation.
    pub lambda_star: f64,
    /// Outer-loop passes of the final run (= trace length).
    pub iterations: usize,
    pub trace: Vec<IterationStat>,
    /// Mean validation MSE per candidate threshold, ascending in lambda.
    pub cv_table: Vec<CvEntry>,
}

/// Run the completion loop at a fixed threshold.
///
/// `values` must hold 0.0 at every masked-false cell (the encoder's warm
/// start). Observed cells are never modified. Terminates when the RMS change
/// of the imputed cells is at most `tolerance` — checked from the second
/// iteration on, so the first reconstruction always happens — or after
/// `max_iterations` passes. A fully observed matrix returns unchanged after
/// one pass.
pub fn impute_once(
    values: &Array2<f64>,
    mask: &Array2<bool>,
    lambda: f64,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Array2<f64>, Vec<IterationStat>)> {
    if values.dim() != mask.dim() {
        return Err(Error::ShapeMismatch(format!(
            "values {:?} vs mask {:?}",
            values.dim(),
            mask.dim()
        )));
    }
    let missing: Vec<(usize, usize)> = mask
        .indexed_iter()
        .filter_map(|(ij, &m)| (!m).then_some(ij))
        .collect();
    let n_observed = values.len() - missing.len();

    let mut current = values.clone();
    let mut trace: Vec<IterationStat> = Vec::new();
    let mut guess: Option<SvdFactors> = None;
    for iteration in 1..=max_iterations {
        let factors = svd_with_guess(&current, guess.as_ref())?;
        let recon = hard_threshold_reconstruct(&factors, lambda);

        let mut fit_se = 0.0;
        for (ij, &m) in mask.indexed_iter() {
            if m {
                let e = recon[ij] - values[ij];
                fit_se += e * e;
            }
        }
        let fit_rmse = if n_observed > 0 {
            (fit_se / n_observed as f64).sqrt()
        } else {
            0.0
        };

        // Change of the imputed entries relative to the previous iterate,
        // measured before writing the update.
        let mut delta_se = 0.0;
        for &ij in &missing {
            let e = recon[ij] - current[ij];
            delta_se += e * e;
        }
        let delta = if missing.is_empty() {
            0.0
        } else {
            (delta_se / missing.len() as f64).sqrt()
        };

        for &ij in &missing {
            current[ij] = recon[ij];
        }
        trace.push(IterationStat { fit_rmse, delta });
        guess = Some(factors);

        // With no missing cells one pass settles everything; otherwise the
        // delta test only applies once the cells have been updated at least
        // once before this pass.
        if missing.is_empty() || (iteration >= 2 && delta <= tolerance) {
            break;
        }
    }
    Ok((current, trace))
}

/// Candidate thresholds: `grid_size` geometrically spaced points from
/// sigma_1/1000 up to sigma_1 of the zero-filled matrix.
fn lambda_grid(sigma1: f64, grid_size: usize) -> Vec<f64> {
    (0..grid_size)
        .map(|i| sigma1 / 1000.0 * 1000f64.powf(i as f64 / (grid_size - 1) as f64))
        .collect()
}

/// Choose the completion threshold by K-fold cross-validation over observed
/// entries.
///
/// Observed entries are shuffled with the seed and split into `folds` nearly
/// equal parts. For each fold and each candidate, the fold's entries are
/// hidden (zeroed, mask false), the completion loop runs, and the squared
/// error on the hidden entries is recorded. Returns the candidate with the
/// smallest mean MSE, ties resolved toward the larger threshold, along with
/// the full CV table.
pub fn select_lambda(
    values: &Array2<f64>,
    mask: &Array2<bool>,
    config: &ImputeConfig,
) -> Result<(f64, Vec<CvEntry>)> {
    config.validate()?;
    let observed: Vec<(usize, usize)> = mask
        .indexed_iter()
        .filter_map(|(ij, &m)| m.then_some(ij))
        .collect();
    if observed.len() < config.folds * 10 {
        return Err(Error::InsufficientData(format!(
            "{} observed entries; cross-validation needs at least {}",
            observed.len(),
            config.folds * 10
        )));
    }

    let sigma1 = svd_with_guess(values, None)?.s[0];
    let grid = lambda_grid(sigma1, config.grid_size);

    // Entrywise fold partition: shuffle observed-entry indices, then slice
    // into contiguous chunks of near-equal size.
    let mut order: Vec<usize> = (0..observed.len()).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(config.seed, tag::CV_FOLDS, 0));
    let fold_of = |f: usize| {
        let lo = f * observed.len() / config.folds;
        let hi = (f + 1) * observed.len() / config.folds;
        &order[lo..hi]
    };

    // The (fold x candidate) grid is embarrassingly parallel; every cell is
    // deterministic, so the schedule cannot affect results.
    let jobs: Vec<(usize, usize)> = (0..config.folds)
        .flat_map(|f| (0..grid.len()).map(move |g| (f, g)))
        .collect();
    let cell_mse: Vec<f64> = jobs
        .par_iter()
        .map(|&(f, g)| -> Result<f64> {
            let hidden = fold_of(f);
            let mut train = values.clone();
            let mut train_mask = mask.clone();
            for &e in hidden {
                train[observed[e]] = 0.0;
                train_mask[observed[e]] = false;
            }
            let (completed, _) = impute_once(
                &train,
                &train_mask,
                grid[g],
                config.tolerance,
                config.max_iterations,
            )?;
            let mut se = 0.0;
            for &e in hidden {
                let err = completed[observed[e]] - values[observed[e]];
                se += err * err;
            }
            Ok(se / hidden.len() as f64)
        })
        .collect::<Result<Vec<_>>>()?;

    let cv_table: Vec<CvEntry> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let mean_mse = (0..config.folds)
                .map(|f| cell_mse[f * grid.len() + g])
                .sum::<f64>()
                / config.folds as f64;
            CvEntry { lambda, mean_mse }
        })
        .collect();

    // Smallest mean MSE; ties go to the larger lambda (stronger truncation).
    let mut best = 0usize;
    for g in 1..cv_table.len() {
        if cv_table[g].mean_mse <= cv_table[best].mean_mse {
            best = g;
        }
    }
    Ok((cv_table[best].lambda, cv_table))
}

/// End-to-end mixed-table imputation: encode, select the threshold by CV,
/// complete at the selected threshold, decode.
///
/// Unless `include_target` is set, the target column stays out of the
/// completion matrix entirely and is copied through unchanged — it must then
/// be fully observed, since the result guarantees a table with no missing
/// cells.
pub fn impute(table: &MixedTable, config: &ImputeConfig) -> Result<ImputeResult> {
    config.validate()?;
    let target = table.role_index(ColumnRole::Target);
    let drop: Vec<usize> = match target {
        Some(t) if !config.include_target => {
            let target_missing = table.rows.iter().filter(|r| r[t].is_missing()).count();
            if target_missing > 0 {
                return Err(Error::Degenerate(format!(
                    "target column '{}' has {target_missing} missing cells but is excluded \
                     from imputation; set include_target to fill it",
                    table.schema[t].name
                )));
            }
            vec![t]
        }
        _ => vec![],
    };
    let sub = table.without_columns(&drop);
    if sub.n_cols() == 0 {
        return Err(Error::InsufficientData(
            "no columns left to impute after excluding the target".into(),
        ));
    }

    let enc = encode(&sub)?;
    let (lambda_star, cv_table) = select_lambda(&enc.values, &enc.mask, config)?;
    let (final_values, trace) = impute_once(
        &enc.values,
        &enc.mask,
        lambda_star,
        config.tolerance,
        config.max_iterations,
    )?;
    let enc_completed = crate::tabular::EncodedMatrix {
        values: final_values,
        ..enc
    };
    let sub_completed = decode(&enc_completed, &sub)?;

    // Re-insert any excluded column at its original position.
    let completed = if drop.is_empty() {
        sub_completed
    } else {
        let mut rows = Vec::with_capacity(table.n_rows());
        for (i, orig_row) in table.rows.iter().enumerate() {
            let mut row = Vec::with_capacity(table.n_cols());
            let mut sub_j = 0;
            for (j, cell) in orig_row.iter().enumerate() {
                if drop.contains(&j) {
                    row.push(*cell);
                } else {
                    row.push(sub_completed.rows[i][sub_j]);
                    sub_j += 1;
                }
            }
            rows.push(row);
        }
        MixedTable::new(table.schema.clone(), rows)?
    };

    Ok(ImputeResult {
        completed,
        lambda_star,
        iterations: trace.len(),
        trace,
        cv_table,
    })
}
