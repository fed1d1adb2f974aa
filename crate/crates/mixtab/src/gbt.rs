//! Gradient-boosted regression trees with squared-error loss.
//!
//! Stagewise boosting: each tree fits the current residuals with exact greedy
//! split search (midpoints of sorted unique values), L2-damped leaf weights
//! w = sum(r) / (count + l2_leaf), shrinkage, and per-tree column subsampling.
//!
//! Sums over training rows (base score, node totals, prefix scans) are always
//! computed in a value-sorted canonical order, so the fitted model is
//! bit-identical under any permutation of the training rows.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, tag};

/// Boosting hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    /// Shrinkage applied to every tree's output, in (0, 1].
    pub learning_rate: f64,
    /// L2 penalty on leaf weights, >= 0.
    pub l2_leaf: f64,
    /// Fraction of columns drawn per tree, in (0, 1].
    pub colsample: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbtParams {
    fn default() -> Self {
        GbtParams {
            n_trees: 300,
            max_depth: 4,
            learning_rate: 0.1,
            l2_leaf: 1.0,
            colsample: 0.8,
            min_samples_leaf: 5,
            seed: 0,
        }
    }
}

impl GbtParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("n_trees must be positive".into()));
        }
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must be in (0, 1]".into()));
        }
        if !(self.l2_leaf >= 0.0) {
            return Err(Error::Config("l2_leaf must be non-negative".into()));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return Err(Error::Config("colsample must be in (0, 1]".into()));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be positive".into()));
        }
        Ok(())
    }
}

/// Regression-tree node. Prediction walks left when `row[feat] < thr`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        feat: usize,
        thr: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { leaf: f64 },
}

impl TreeNode {
    pub fn eval(&self, row: ArrayView1<f64>) -> f64 {
        match self {
            TreeNode::Leaf { leaf } => *leaf,
            TreeNode::Split { feat, thr, left, right } => {
                if row[*feat] < *thr {
                    left.eval(row)
                } else {
                    right.eval(row)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split { feat, left, right, .. } => {
                let mut m = *feat;
                if let Some(f) = left.max_feature() {
                    m = m.max(f);
                }
                if let Some(f) = right.max_feature() {
                    m = m.max(f);
                }
                Some(m)
            }
        }
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    /// Mean of the training targets; the ensemble's starting prediction.
    pub base_score: f64,
    pub params: GbtParams,
    pub feature_names: Vec<String>,
    pub trees: Vec<TreeNode>,
}

impl GbtModel {
    /// Number of input features the model expects.
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    /// Replace the synthetic f0..fm names with caller-supplied ones.
    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.feature_names.len() {
            return Err(Error::Length(format!(
                "{} feature names for a model with {} features",
                names.len(),
                self.feature_names.len()
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Predict one row: base_score + learning_rate * sum of leaf weights.
    pub fn predict_row(&self, row: ArrayView1<f64>) -> f64 {
        let mut p = self.base_score;
        for tree in &self.trees {
            p += self.params.learning_rate * tree.eval(row);
        }
        p
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::ShapeMismatch(format!(
                "{} columns, model expects {}",
                x.ncols(),
                self.n_features()
            )));
        }
        Ok((0..x.nrows()).map(|i| self.predict_row(x.row(i))).collect())
    }

    /// Serialize to JSON. Thresholds and weights use shortest-round-trip
    /// decimals, so a load/save cycle is bit-exact.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<GbtModel> {
        let model: GbtModel =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("model JSON: {e}")))?;
        model.params.validate()?;
        let m = model.n_features();
        for tree in &model.trees {
            if let Some(f) = tree.max_feature() {
                if f >= m {
                    return Err(Error::Parse(format!(
                        "model JSON: tree references feature {f}, but only {m} are declared"
                    )));
                }
            }
            if tree.depth() > model.params.max_depth {
                return Err(Error::Parse(format!(
                    "model JSON: tree depth {} exceeds max_depth {}",
                    tree.depth(),
                    model.params.max_depth
                )));
            }
        }
        Ok(model)
    }
}

/// Sum in ascending value order: invariant under input permutation.
fn sorted_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    values.iter().sum()
}

struct TreeBuilder<'a> {
    x: &'a Array2<f64>,
    residuals: &'a [f64],
    features: &'a [usize],
    max_depth: usize,
    min_samples_leaf: usize,
    l2_leaf: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&self, rows: &[usize]) -> TreeNode {
        let sum = sorted_sum(rows.iter().map(|&i| self.residuals[i]).collect());
        TreeNode::Leaf {
            leaf: sum / (rows.len() as f64 + self.l2_leaf),
        }
    }

    fn build(&self, rows: Vec<usize>, depth: usize) -> TreeNode {
        if depth >= self.max_depth || rows.len() < 2 * self.min_samples_leaf {
            return self.leaf(&rows);
        }
        let total = sorted_sum(rows.iter().map(|&i| self.residuals[i]).collect());
        let n = rows.len() as f64;
        let parent_score = total * total / (n + self.l2_leaf);

        // Exact greedy search. Features ascend and thresholds ascend within a
        // feature; only a strictly larger gain replaces the incumbent, so
        // equal gains resolve to the lowest feature, then lowest threshold.
        let mut best: Option<(usize, f64, f64)> = None; // (feat, thr, gain)
        for &f in self.features {
            let mut pairs: Vec<(f64, f64)> = rows
                .iter()
                .map(|&i| (self.x[[i, f]], self.residuals[i]))
                .collect();
            pairs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut left_sum = 0.0;
            for k in 0..pairs.len() - 1 {
                left_sum += pairs[k].1;
                if pairs[k].0 == pairs[k + 1].0 {
                    continue; // not a boundary between distinct values
                }
                let n_left = k + 1;
                let n_right = pairs.len() - n_left;
                if n_left < self.min_samples_leaf || n_right < self.min_samples_leaf {
                    continue;
                }
                let (a, b) = (pairs[k].0, pairs[k + 1].0);
                let mut thr = a + (b - a) * 0.5;
                if thr <= a {
                    thr = b; // adjacent floats: midpoint rounded down
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / (n_left as f64 + self.l2_leaf)
                    + right_sum * right_sum / (n_right as f64 + self.l2_leaf)
                    - parent_score;
                if gain > best.map_or(0.0, |(_, _, g)| g) {
                    best = Some((f, thr, gain));
                }
            }
        }

        match best {
            None => self.leaf(&rows),
            Some((feat, thr, _)) => {
                let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                    rows.into_iter().partition(|&i| self.x[[i, feat]] < thr);
                TreeNode::Split {
                    feat,
                    thr,
                    left: Box::new(self.build(left_rows, depth + 1)),
                    right: Box::new(self.build(right_rows, depth + 1)),
                }
            }
        }
    }
}

/// Fit a boosted ensemble; see the module docs for the algorithm.
pub fn fit(x: &Array2<f64>, y: &[f64], params: &GbtParams) -> Result<GbtModel> {
    fit_traced(x, y, params).map(|(model, _)| model)
}

/// Like [`fit`], also returning the final training predictions exactly as
/// accumulated during boosting (used to verify fit/predict consistency).
pub(crate) fn fit_traced(
    x: &Array2<f64>,
    y: &[f64],
    params: &GbtParams,
) -> Result<(GbtModel, Vec<f64>)> {
    params.validate()?;
    let n = x.nrows();
    let m = x.ncols();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} rows of X but {} targets",
            y.len()
        )));
    }
    if n < 2 * params.min_samples_leaf {
        return Err(Error::InsufficientData(format!(
            "{n} rows; need at least 2 * min_samples_leaf = {}",
            2 * params.min_samples_leaf
        )));
    }
    debug_assert!(x.iter().all(|v| v.is_finite()) && y.iter().all(|v| v.is_finite()));

    let base_score = sorted_sum(y.to_vec()) / n as f64;
    let mut preds = vec![base_score; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let k = ((params.colsample * m as f64).ceil() as usize).clamp(usize::from(m > 0), m);

    for t in 0..params.n_trees {
        let residuals: Vec<f64> = y.iter().zip(&preds).map(|(yi, pi)| yi - pi).collect();
        // Per-tree column subset from a stream keyed only by (seed, tree
        // index) — never by the data — so row order cannot influence it.
        let mut features = rand::seq::index::sample(
            &mut rng::stream(params.seed, tag::GBT_TREE, t as u64),
            m.max(1),
            k.min(m),
        )
        .into_vec();
        features.sort_unstable();
        let builder = TreeBuilder {
            x,
            residuals: &residuals,
            features: &features,
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            l2_leaf: params.l2_leaf,
        };
        let tree = builder.build((0..n).collect(), 0);
        for i in 0..n {
            preds[i] += params.learning_rate * tree.eval(x.row(i));
        }
        trees.push(tree);
    }

    let model = GbtModel {
        base_score,
        params: params.clone(),
        feature_names: (0..m).map(|j| format!("f{j}")).collect(),
        trees,
    };
    Ok((model, preds))
}

/// Cross-validation detail: per-fold RMSE plus, for every input row, the
/// fold it sat out in and the prediction it received from the one model that
/// never trained on it.
#[derive(Debug, Clone, PartialEq)]
pub struct CvDetail {
    pub fold_rmse: Vec<f64>,
    pub oof_predictions: Vec<f64>,
    pub fold_of_row: Vec<usize>,
}

/// K-fold cross-validation: shuffle rows with `seed`, split into near-equal
/// folds, fit on each complement, and return the per-fold test RMSE.
pub fn cross_validate(
    x: &Array2<f64>,
    y: &[f64],
    params: &GbtParams,
    folds: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    cross_validate_detail(x, y, params, folds, seed).map(|d| d.fold_rmse)
}

/// [`cross_validate`] keeping the out-of-fold predictions and the fold map.
pub fn cross_validate_detail(
    x: &Array2<f64>,
    y: &[f64],
    params: &GbtParams,
    folds: usize,
    seed: u64,
) -> Result<CvDetail> {
    params.validate()?;
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} rows of X but {} targets",
            y.len()
        )));
    }
    if folds < 2 {
        return Err(Error::Config("folds must be at least 2".into()));
    }
    if n < folds {
        return Err(Error::InsufficientData(format!(
            "{n} rows cannot form {folds} folds"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut rng::stream(seed, tag::GBT_FOLDS, 0));

    let assignments: Vec<&[usize]> = (0..folds)
        .map(|f| &order[f * n / folds..(f + 1) * n / folds])
        .collect();

    let per_fold: Vec<(f64, Vec<(usize, f64)>)> = assignments
        .par_iter()
        .map(|test_rows| {
            let mut train_rows: Vec<usize> = Vec::with_capacity(n - test_rows.len());
            for i in 0..n {
                if !test_rows.contains(&i) {
                    train_rows.push(i);
                }
            }
            let x_train = select_rows(x, &train_rows);
            let y_train: Vec<f64> = train_rows.iter().map(|&i| y[i]).collect();
            let model = fit(&x_train, &y_train, params)?;
            let mut se = 0.0;
            let mut preds = Vec::with_capacity(test_rows.len());
            for &i in *test_rows {
                let p = model.predict_row(x.row(i));
                let e = p - y[i];
                se += e * e;
                preds.push((i, p));
            }
            Ok(((se / test_rows.len() as f64).sqrt(), preds))
        })
        .collect::<Result<_>>()?;

    let mut detail = CvDetail {
        fold_rmse: Vec::with_capacity(folds),
        oof_predictions: vec![0.0; n],
        fold_of_row: vec![0; n],
    };
    for (f, (rmse, preds)) in per_fold.into_iter().enumerate() {
        detail.fold_rmse.push(rmse);
        for (i, p) in preds {
            detail.oof_predictions[i] = p;
            detail.fold_of_row[i] = f;
        }
    }
    Ok(detail)
}

pub(crate) fn select_rows(x: &Array2<f64>, rows: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), x.ncols()), |(i, j)| x[[rows[i], j]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::stream(seed, 0x6B7, 0);
        Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal))
    }

    /// Exhaustive single-stump oracle: tries every (feature, midpoint)
    /// candidate, scoring by the summed squared error around each side's
    /// mean, with the same support and tie rules as the learner.
    fn oracle_stump(x: &Array2<f64>, y: &[f64], min_leaf: usize) -> Box<dyn Fn(ArrayView1<f64>) -> f64> {
        let n = x.nrows();
        let mean = y.iter().sum::<f64>() / n as f64;
        let sse = |rows: &[usize]| -> (f64, f64) {
            let mu = rows.iter().map(|&i| y[i]).sum::<f64>() / rows.len() as f64;
            (mu, rows.iter().map(|&i| (y[i] - mu) * (y[i] - mu)).sum())
        };
        let mut best: Option<(usize, f64, f64, f64, f64)> = None; // feat, thr, sse, mu_l, mu_r
        for f in 0..x.ncols() {
            let mut vals: Vec<f64> = (0..n).map(|i| x[[i, f]]).collect();
            vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
            vals.dedup();
            for w in vals.windows(2) {
                let mut thr = w[0] + (w[1] - w[0]) * 0.5;
                if thr <= w[0] {
                    thr = w[1];
                }
                let left: Vec<usize> = (0..n).filter(|&i| x[[i, f]] < thr).collect();
                let right: Vec<usize> = (0..n).filter(|&i| x[[i, f]] >= thr).collect();
                if left.len() < min_leaf || right.len() < min_leaf {
                    continue;
                }
                let (mu_l, sse_l) = sse(&left);
                let (mu_r, sse_r) = sse(&right);
                let total = sse_l + sse_r;
                let improves = match best {
                    None => total < y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() - 1e-12,
                    Some((_, _, s, _, _)) => total < s - 1e-12,
                };
                if improves {
                    best = Some((f, thr, total, mu_l, mu_r));
                }
            }
        }
        match best {
            None => Box::new(move |_| mean),
            Some((f, thr, _, mu_l, mu_r)) => {
                Box::new(move |row: ArrayView1<f64>| if row[f] < thr { mu_l } else { mu_r })
            }
        }
    }

    #[test]
    fn constant_target_predicts_exactly() {
        let x = gaussian(40, 3, 1);
        let y = vec![3.7; 40];
        let model = fit(&x, &y, &GbtParams::default()).unwrap();
        for p in model.predict(&x).unwrap() {
            assert_eq!(p, 3.7);
        }
    }

    #[test]
    fn learns_a_threshold_function() {
        let x = gaussian(500, 3, 2);
        let y: Vec<f64> = (0..500).map(|i| if x[[i, 0]] > 0.0 { 1.0 } else { 0.0 }).collect();
        let params = GbtParams {
            n_trees: 100,
            max_depth: 2,
            colsample: 1.0,
            ..Default::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let preds = model.predict(&x).unwrap();
        let rmse = (preds
            .iter()
            .zip(&y)
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / 500.0)
            .sqrt();
        assert!(rmse < 0.05, "training RMSE {rmse}");
    }

    #[test]
    fn single_stump_matches_exhaustive_oracle() {
        let params = GbtParams {
            n_trees: 1,
            max_depth: 1,
            learning_rate: 1.0,
            l2_leaf: 0.0,
            colsample: 1.0,
            min_samples_leaf: 1,
            seed: 0,
        };
        for seed in 0..50u64 {
            let n = 20 + (seed as usize % 5) * 8;
            let m = 1 + (seed as usize % 4);
            let x = gaussian(n, m, 100 + seed);
            let mut rng = crate::rng::stream(200 + seed, 0x57, 0);
            let y: Vec<f64> = (0..n)
                .map(|i| x[[i, seed as usize % m]] * 2.0 + rng.sample::<f64, _>(StandardNormal))
                .collect();
            let model = fit(&x, &y, &params).unwrap();
            let oracle = oracle_stump(&x, &y, 1);
            for i in 0..n {
                let got = model.predict_row(x.row(i));
                let want = oracle(x.row(i));
                assert!(
                    (got - want).abs() < 1e-9,
                    "seed {seed} row {i}: model {got} vs oracle {want}"
                );
            }
        }
    }

    #[test]
    fn predict_with_no_trees_is_base_score() {
        let model = GbtModel {
            base_score: 4.25,
            params: GbtParams::default(),
            feature_names: vec!["f0".into()],
            trees: vec![],
        };
        let x = gaussian(5, 1, 3);
        assert!(model.predict(&x).unwrap().iter().all(|&p| p == 4.25));
    }

    #[test]
    fn hand_evaluated_stump() {
        // x0 < 2 ? -1 : +1, shrinkage 0.5, base 10.
        let model = GbtModel {
            base_score: 10.0,
            params: GbtParams { learning_rate: 0.5, ..Default::default() },
            feature_names: vec!["f0".into()],
            trees: vec![TreeNode::Split {
                feat: 0,
                thr: 2.0,
                left: Box::new(TreeNode::Leaf { leaf: -1.0 }),
                right: Box::new(TreeNode::Leaf { leaf: 1.0 }),
            }],
        };
        let x = ndarray::array![[1.0], [3.0]];
        assert_eq!(model.predict(&x).unwrap(), vec![9.5, 10.5]);
    }

    #[test]
    fn predict_reproduces_training_predictions_bit_exact() {
        let x = gaussian(60, 4, 4);
        let mut rng = crate::rng::stream(5, 0x57, 0);
        let y: Vec<f64> = (0..60)
            .map(|i| x[[i, 0]] - 2.0 * x[[i, 2]] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let (model, train_preds) = fit_traced(&x, &y, &GbtParams::default()).unwrap();
        let replayed = model.predict(&x).unwrap();
        for (a, b) in replayed.iter().zip(&train_preds) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn l2_damping_closed_form_and_limit() {
        // Constant features admit no split candidates: every tree is a
        // single leaf, whose weight must match the closed form exactly.
        let x = Array2::from_elem((30, 2), 1.0);
        let mut rng = crate::rng::stream(7, 0x57, 0);
        let y: Vec<f64> = (0..30).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let params = GbtParams {
            n_trees: 1,
            learning_rate: 1.0,
            l2_leaf: 3.5,
            colsample: 1.0,
            ..Default::default()
        };
        let model = fit(&x, &y, &params).unwrap();
        let base = model.base_score;
        let mut residuals: Vec<f64> = y.iter().map(|v| v - base).collect();
        residuals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let expect = residuals.iter().sum::<f64>() / (30.0 + 3.5);
        match &model.trees[0] {
            TreeNode::Leaf { leaf } => assert!((leaf - expect).abs() <= 1e-15),
            other => panic!("expected a single leaf, got {other:?}"),
        }
        // Huge penalty pins predictions at the base score.
        let heavy = GbtParams { l2_leaf: 1e12, ..GbtParams::default() };
        let model = fit(&x, &y, &heavy).unwrap();
        for p in model.predict(&x).unwrap() {
            assert!((p - base).abs() < 1e-9);
        }
    }

    #[test]
    fn full_shrinkage_fits_first_stage_at_least_as_fast() {
        let x = gaussian(80, 3, 8);
        let mut rng = crate::rng::stream(9, 0x57, 0);
        let y: Vec<f64> = (0..80)
            .map(|i| x[[i, 1]] * 3.0 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rmse_at = |lr: f64| {
            let params = GbtParams { n_trees: 1, learning_rate: lr, ..Default::default() };
            let (_, preds) = fit_traced(&x, &y, &params).unwrap();
            (preds.iter().zip(&y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / 80.0).sqrt()
        };
        assert!(rmse_at(1.0) <= rmse_at(0.1));
    }

    #[test]
    fn model_is_invariant_to_row_permutation() {
        let x = gaussian(50, 3, 10);
        let mut rng = crate::rng::stream(11, 0x57, 0);
        let y: Vec<f64> = (0..50)
            .map(|i| x[[i, 0]] + 0.5 * x[[i, 2]] + 0.2 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let params = GbtParams { n_trees: 12, colsample: 1.0, ..Default::default() };

        let mut perm: Vec<usize> = (0..50).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut crate::rng::stream(12, 0x57, 0));
        let x_perm = select_rows(&x, &perm);
        let y_perm: Vec<f64> = perm.iter().map(|&i| y[i]).collect();

        let a = fit(&x, &y, &params).unwrap();
        let b = fit(&x_perm, &y_perm, &params).unwrap();
        let queries = gaussian(7, 3, 13);
        for i in 0..7 {
            let pa = a.predict_row(queries.row(i));
            let pb = b.predict_row(queries.row(i));
            assert_eq!(pa.to_bits(), pb.to_bits(), "query {i}: {pa} vs {pb}");
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let x = gaussian(40, 4, 14);
        let y: Vec<f64> = (0..40).map(|i| x[[i, 3]]).collect();
        let params = GbtParams { n_trees: 20, ..Default::default() };
        let a = fit(&x, &y, &params).unwrap();
        let b = fit(&x, &y, &params).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn depth_and_support_limits_hold() {
        let x = gaussian(60, 3, 15);
        let mut rng = crate::rng::stream(16, 0x57, 0);
        let y: Vec<f64> = (0..60)
            .map(|i| (x[[i, 0]] * 5.0).sin() + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let params = GbtParams {
            n_trees: 10,
            max_depth: 3,
            min_samples_leaf: 7,
            colsample: 1.0,
            ..Default::default()
        };
        let model = fit(&x, &y, &params).unwrap();

        fn check_supports(node: &TreeNode, rows: Vec<usize>, x: &Array2<f64>, min_leaf: usize) {
            match node {
                TreeNode::Leaf { .. } => {
                    assert!(rows.len() >= min_leaf, "leaf support {}", rows.len())
                }
                TreeNode::Split { feat, thr, left, right } => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| x[[i, *feat]] < *thr);
                    check_supports(left, l, x, min_leaf);
                    check_supports(right, r, x, min_leaf);
                }
            }
        }
        for tree in &model.trees {
            assert!(tree.depth() <= 3);
            check_supports(tree, (0..60).collect(), &x, 7);
        }
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let x = gaussian(50, 3, 17);
        let mut rng = crate::rng::stream(18, 0x57, 0);
        let y: Vec<f64> = (0..50)
            .map(|i| x[[i, 1]] / 3.0 + rng.sample::<f64, _>(StandardNormal) * 0.7)
            .collect();
        let model = fit(&x, &y, &GbtParams { n_trees: 15, ..Default::default() }).unwrap();
        let json = model.to_json();
        let loaded = GbtModel::from_json(&json).unwrap();
        assert_eq!(loaded, model);
        assert_eq!(loaded.to_json(), json);
        let queries = gaussian(5, 3, 19);
        for i in 0..5 {
            assert_eq!(
                model.predict_row(queries.row(i)).to_bits(),
                loaded.predict_row(queries.row(i)).to_bits()
            );
        }
    }

    #[test]
    fn json_rejects_out_of_range_features() {
        let text = r#"{
            "base_score": 0.0,
            "params": {},
            "feature_names": ["f0"],
            "trees": [{"feat": 3, "thr": 1.0, "left": {"leaf": 0.0}, "right": {"leaf": 1.0}}]
        }"#;
        assert!(matches!(GbtModel::from_json(text), Err(Error::Parse(_))));
    }

    #[test]
    fn cross_validate_constant_target_is_zero() {
        let x = gaussian(40, 2, 20);
        let y = vec![1.25; 40];
        let rmses = cross_validate(&x, &y, &GbtParams::default(), 5, 99).unwrap();
        assert_eq!(rmses.len(), 5);
        assert!(rmses.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn cross_validate_beats_the_mean_on_linear_data() {
        let x = gaussian(200, 3, 21);
        let mut rng = crate::rng::stream(22, 0x57, 0);
        let y: Vec<f64> = (0..200)
            .map(|i| 2.0 * x[[i, 0]] - x[[i, 1]] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let rmses = cross_validate(&x, &y, &GbtParams::default(), 10, 23).unwrap();
        let mean_rmse = rmses.iter().sum::<f64>() / rmses.len() as f64;
        let y_mean = y.iter().sum::<f64>() / y.len() as f64;
        let y_std =
            (y.iter().map(|v| (v - y_mean) * (v - y_mean)).sum::<f64>() / (y.len() - 1) as f64).sqrt();
        assert!(mean_rmse < y_std, "CV RMSE {mean_rmse} vs target std {y_std}");
    }

    #[test]
    fn leave_one_out_returns_finite_values() {
        let x = gaussian(20, 2, 24);
        let y: Vec<f64> = (0..20).map(|i| x[[i, 0]]).collect();
        let rmses = cross_validate(&x, &y, &GbtParams::default(), 20, 25).unwrap();
        assert_eq!(rmses.len(), 20);
        assert!(rmses.iter().all(|r| r.is_finite()));
    }

    #[test]
    fn shape_and_parameter_errors() {
        let x = gaussian(20, 2, 26);
        let y = vec![0.0; 19];
        assert!(matches!(
            fit(&x, &y, &GbtParams::default()),
            Err(Error::ShapeMismatch(_))
        ));
        let y = vec![0.0; 20];
        assert!(matches!(
            fit(&x, &y, &GbtParams { min_samples_leaf: 11, ..Default::default() }),
            Err(Error::InsufficientData(_))
        ));
        for bad in [
            GbtParams { n_trees: 0, ..Default::default() },
            GbtParams { learning_rate: 0.0, ..Default::default() },
            GbtParams { learning_rate: 1.5, ..Default::default() },
            GbtParams { colsample: 0.0, ..Default::default() },
            GbtParams { l2_leaf: -1.0, ..Default::default() },
        ] {
            assert!(matches!(fit(&x, &y, &bad), Err(Error::Config(_))));
        }
        assert!(matches!(
            cross_validate(&x, &y, &GbtParams::default(), 21, 0),
            Err(Error::InsufficientData(_))
        ));
        let model = fit(&x, &y, &GbtParams::default()).unwrap();
        let wrong = gaussian(5, 3, 27);
        assert!(matches!(model.predict(&wrong), Err(Error::ShapeMismatch(_))));
    }
}
