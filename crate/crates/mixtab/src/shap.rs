//! Exact Shapley-value attribution for the boosted-tree model.
//!
//! The value function is the interventional expectation: v(S) is the mean
//! model output over background rows with the explained instance's values
//! spliced in at the coalition's coordinates. Attributions enumerate all 2^M
//! coalitions, so the feature count is capped. Subset sums use compensated
//! (Neumaier) summation and a fixed order, making results bit-stable at any
//! thread count.

use ndarray::{Array2, ArrayView1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::gbt::GbtModel;

/// Hard cap on the feature count for exact enumeration (2^M subsets).
pub const FEATURE_BUDGET: usize = 20;

/// Attribution of one model prediction to the individual features.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapExplanation {
    pub feature_names: Vec<String>,
    /// Value of the empty coalition: expected model output over the background.
    pub baseline: f64,
    /// Per-feature Shapley value, aligned with `feature_names`.
    pub values: Vec<f64>,
    /// Model output on the explained instance.
    pub prediction: f64,
}

/// One feature's aggregate importance.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceEntry {
    pub feature: String,
    pub mean_abs_shap: f64,
    /// 1-based; 1 is the most important feature.
    pub rank: usize,
}

/// Features ranked by mean absolute Shapley value.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalImportance {
    /// Sorted by rank ascending.
    pub entries: Vec<ImportanceEntry>,
}

/// Compensated accumulator: adds in a fixed order with error recovery, so
/// totals are reproducible and accurate to ~1 ulp of the running sum.
#[derive(Default, Clone, Copy)]
struct Neumaier {
    sum: f64,
    comp: f64,
}

impl Neumaier {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn total(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Exact Shapley attribution of `model`'s prediction on `x` against a
/// background sample.
///
/// For every coalition S the value v(S) is the mean prediction over
/// background rows with x spliced in at S's coordinates; the attribution of
/// feature i sums w(|S|) * (v(S + i) - v(S)) over all S not containing i,
/// with the standard combinatorial weight w(s) = s! (M-s-1)! / M!.
pub fn shapley_exact(
    model: &GbtModel,
    x: ArrayView1<f64>,
    background: &Array2<f64>,
) -> Result<ShapExplanation> {
    let m = model.n_features();
    if m > FEATURE_BUDGET {
        return Err(Error::FeatureBudget { count: m, budget: FEATURE_BUDGET });
    }
    if x.len() != m {
        return Err(Error::ShapeMismatch(format!(
            "instance has {} values, model expects {m}",
            x.len()
        )));
    }
    if background.ncols() != m {
        return Err(Error::ShapeMismatch(format!(
            "background has {} columns, model expects {m}",
            background.ncols()
        )));
    }
    if background.nrows() == 0 {
        return Err(Error::EmptyInput("background must have at least one row".into()));
    }

    let prediction = model.predict_row(x);
    if m == 0 {
        return Ok(ShapExplanation {
            feature_names: vec![],
            baseline: prediction,
            values: vec![],
            prediction,
        });
    }

    // v(S) for every coalition, indexed by bitmask. Each entry is
    // independent, so the table parallelizes freely without affecting bits.
    let n_back = background.nrows();
    let v: Vec<f64> = (0u32..1u32 << m)
        .into_par_iter()
        .map(|mask| {
            let mut z = vec![0.0; m];
            let mut acc = Neumaier::default();
            for b in background.rows() {
                for i in 0..m {
                    z[i] = if mask >> i & 1 == 1 { x[i] } else { b[i] };
                }
                acc.add(model.predict_row(ArrayView1::from(&z[..])));
            }
            acc.total() / n_back as f64
        })
        .collect();

    // w(s) by the recurrence w(0) = 1/M, w(s) = w(s-1) * s / (M - s): exact
    // ratios of factorials without overflowing intermediates.
    let mut weights = vec![0.0; m];
    weights[0] = 1.0 / m as f64;
    for s in 1..m {
        weights[s] = weights[s - 1] * s as f64 / (m - s) as f64;
    }

    let values: Vec<f64> = (0..m)
        .map(|i| {
            let bit = 1u32 << i;
            let mut phi = Neumaier::default();
            for mask in 0u32..1u32 << m {
                if mask & bit != 0 {
                    continue;
                }
                let s = mask.count_ones() as usize;
                phi.add(weights[s] * (v[(mask | bit) as usize] - v[mask as usize]));
            }
            phi.total()
        })
        .collect();

    Ok(ShapExplanation {
        feature_names: model.feature_names.clone(),
        baseline: v[0],
        values,
        prediction,
    })
}

/// Aggregate per-instance explanations into a mean-|SHAP| ranking.
pub fn global_importance(explanations: &[ShapExplanation]) -> Result<GlobalImportance> {
    let first = explanations
        .first()
        .ok_or_else(|| Error::EmptyInput("no explanations to aggregate".into()))?;
    let names = &first.feature_names;
    for e in explanations {
        if e.feature_names != *names {
            return Err(Error::ShapeMismatch(
                "explanations disagree on feature names".into(),
            ));
        }
    }
    let m = names.len();
    let mean_abs: Vec<f64> = (0..m)
        .map(|i| {
            explanations.iter().map(|e| e.values[i].abs()).sum::<f64>() / explanations.len() as f64
        })
        .collect();

    // Rank by descending magnitude; equal magnitudes fall back to name order.
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        mean_abs[b]
            .partial_cmp(&mean_abs[a])
            .unwrap()
            .then_with(|| names[a].cmp(&names[b]))
    });
    let entries = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| ImportanceEntry {
            feature: names[i].clone(),
            mean_abs_shap: mean_abs[i],
            rank: pos + 1,
        })
        .collect();
    Ok(GlobalImportance { entries })
}

/// Render explanations as the flat CSV behind a summary plot: one row per
/// (instance, feature), with the instance's raw feature values alongside.
pub fn explanations_to_csv(
    explanations: &[ShapExplanation],
    instances: &Array2<f64>,
) -> Result<String> {
    if explanations.is_empty() {
        return Err(Error::EmptyInput("no explanations to export".into()));
    }
    let m = explanations[0].feature_names.len();
    if instances.dim() != (explanations.len(), m) {
        return Err(Error::ShapeMismatch(format!(
            "{} explanations with {m} features need an instance matrix of that shape, got {:?}",
            explanations.len(),
            instances.dim()
        )));
    }
    let mut out = String::from("instance_id,feature,feature_value,shap_value,baseline,prediction\n");
    for (id, e) in explanations.iter().enumerate() {
        for (j, name) in e.feature_names.iter().enumerate() {
            use std::fmt::Write as _;
            let _ = writeln!(
                out,
                "{id},{name},{},{},{},{}",
                instances[[id, j]],
                e.values[j],
                e.baseline,
                e.prediction
            );
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::{fit, GbtParams, TreeNode};
    use ndarray::array;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn gaussian(n: usize, m: usize, seed: u64) -> Array2<f64> {
        let mut rng = crate::rng::stream(seed, 0x5A9, 0);
        Array2::from_shape_fn((n, m), |_| rng.sample::<f64, _>(StandardNormal))
    }

    fn stump(feat: usize, thr: f64, left: f64, right: f64) -> TreeNode {
        TreeNode::Split {
            feat,
            thr,
            left: Box::new(TreeNode::Leaf { leaf: left }),
            right: Box::new(TreeNode::Leaf { leaf: right }),
        }
    }

    fn model_with(trees: Vec<TreeNode>, m: usize, base: f64, lr: f64) -> GbtModel {
        GbtModel {
            base_score: base,
            params: GbtParams { learning_rate: lr, ..Default::default() },
            feature_names: (0..m).map(|j| format!("f{j}")).collect(),
            trees,
        }
    }

    /// Independent oracle: Shapley values via the permutation-sum definition.
    /// phi_i = mean over all M! orderings of the marginal contribution of i
    /// at its insertion point. Written against the definition, sharing only
    /// the model's predict with the implementation under test.
    fn oracle_permutation_shap(
        model: &GbtModel,
        x: ArrayView1<f64>,
        background: &Array2<f64>,
    ) -> Vec<f64> {
        let m = model.n_features();
        assert!(m <= 6, "oracle enumerates M! orderings");
        let value = |coalition: &[bool]| -> f64 {
            let mut total = 0.0;
            for b in background.rows() {
                let z: Vec<f64> = (0..m)
                    .map(|i| if coalition[i] { x[i] } else { b[i] })
                    .collect();
                total += model.predict_row(ArrayView1::from(&z[..]));
            }
            total / background.nrows() as f64
        };

        let mut phi = vec![0.0; m];
        let mut perm: Vec<usize> = (0..m).collect();
        let mut count = 0usize;
        // Heap's algorithm, iterative.
        let mut c = vec![0usize; m];
        let process = |perm: &[usize], phi: &mut [f64]| {
            let mut coalition = vec![false; m];
            let mut prev = value(&coalition);
            for &i in perm {
                coalition[i] = true;
                let next = value(&coalition);
                phi[i] += next - prev;
                prev = next;
            }
        };
        process(&perm, &mut phi);
        count += 1;
        let mut i = 0;
        while i < m {
            if c[i] < i {
                if i % 2 == 0 {
                    perm.swap(0, i);
                } else {
                    perm.swap(c[i], i);
                }
                process(&perm, &mut phi);
                count += 1;
                c[i] += 1;
                i = 0;
            } else {
                c[i] = 0;
                i += 1;
            }
        }
        for p in phi.iter_mut() {
            *p /= count as f64;
        }
        phi
    }

    #[test]
    fn matches_permutation_oracle_on_hand_built_tree() {
        // Depth-2 tree over features {0, 1} and a 4-row background.
        let tree = TreeNode::Split {
            feat: 0,
            thr: 0.0,
            left: Box::new(stump(1, -0.5, -2.0, 1.0)),
            right: Box::new(stump(1, 0.5, 0.5, 3.0)),
        };
        let model = model_with(vec![tree], 2, 1.0, 1.0);
        let background = array![[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]];
        let x = array![0.3, 0.6];
        let got = shapley_exact(&model, x.view(), &background).unwrap();
        let want = oracle_permutation_shap(&model, x.view(), &background);
        for i in 0..2 {
            assert!(
                (got.values[i] - want[i]).abs() < 1e-9,
                "phi_{i}: {} vs oracle {}",
                got.values[i],
                want[i]
            );
        }
        assert!((got.baseline + got.values.iter().sum::<f64>() - got.prediction).abs() < 1e-9);
    }

    #[test]
    fn matches_permutation_oracle_on_fitted_models() {
        for seed in 0..6u64 {
            let m = 3 + (seed as usize % 3);
            let x_train = gaussian(40, m, 100 + seed);
            let mut rng = crate::rng::stream(200 + seed, 0x5A9, 1);
            let y: Vec<f64> = (0..40)
                .map(|i| {
                    2.0 * x_train[[i, 0]] - x_train[[i, m - 1]]
                        + 0.3 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let params = GbtParams { n_trees: 8, max_depth: 3, ..Default::default() };
            let model = fit(&x_train, &y, &params).unwrap();
            let background = gaussian(5, m, 300 + seed);
            let x = gaussian(1, m, 400 + seed);
            let got = shapley_exact(&model, x.row(0), &background).unwrap();
            let want = oracle_permutation_shap(&model, x.row(0), &background);
            for i in 0..m {
                assert!(
                    (got.values[i] - want[i]).abs() < 1e-9,
                    "seed {seed} phi_{i}: {} vs oracle {}",
                    got.values[i],
                    want[i]
                );
            }
        }
    }

    #[test]
    fn constant_model_attributes_nothing() {
        let model = model_with(vec![], 3, 7.25, 0.1);
        let background = gaussian(4, 3, 1);
        let x = array![1.0, 2.0, 3.0];
        let e = shapley_exact(&model, x.view(), &background).unwrap();
        assert_eq!(e.baseline, 7.25);
        assert_eq!(e.prediction, 7.25);
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_relevant_feature_takes_the_whole_gap() {
        // Stump on x0; background differs from x only at x0.
        let model = model_with(vec![stump(0, 0.0, -1.0, 1.0)], 3, 0.5, 1.0);
        let background = array![[-1.0, 5.0, 6.0]];
        let x = array![1.0, 5.0, 6.0];
        let e = shapley_exact(&model, x.view(), &background).unwrap();
        assert_eq!(e.values[0], e.prediction - e.baseline);
        assert_eq!(e.values[1], 0.0);
        assert_eq!(e.values[2], 0.0);
    }

    #[test]
    fn dummy_feature_is_exactly_zero() {
        // Feature 2 appears in no tree: its attribution must be exactly 0.
        let model = model_with(
            vec![stump(0, 0.1, -1.0, 2.0), stump(1, -0.3, 0.5, -0.5)],
            3,
            0.0,
            0.7,
        );
        let background = gaussian(6, 3, 2);
        let x = array![0.4, -0.9, 100.0];
        let e = shapley_exact(&model, x.view(), &background).unwrap();
        assert_eq!(e.values[2], 0.0);
    }

    #[test]
    fn symmetric_features_get_equal_attribution() {
        // Two features used identically by the model, identical in the
        // instance and in every background row.
        let model = model_with(
            vec![stump(0, 0.0, -1.0, 1.0), stump(1, 0.0, -1.0, 1.0)],
            2,
            0.0,
            1.0,
        );
        let background = array![[-0.7, -0.7], [0.2, 0.2], [1.5, 1.5]];
        let x = array![0.9, 0.9];
        let e = shapley_exact(&model, x.view(), &background).unwrap();
        assert!((e.values[0] - e.values[1]).abs() < 1e-9);
    }

    #[test]
    fn attribution_is_linear_over_trees() {
        let x_train = gaussian(50, 4, 3);
        let y: Vec<f64> = (0..50).map(|i| x_train[[i, 1]] - x_train[[i, 3]]).collect();
        let params = GbtParams { n_trees: 3, max_depth: 2, colsample: 1.0, ..Default::default() };
        let model = fit(&x_train, &y, &params).unwrap();
        assert_eq!(model.trees.len(), 3);
        let background = gaussian(8, 4, 4);
        let x = gaussian(1, 4, 5);

        let full = shapley_exact(&model, x.row(0), &background).unwrap();
        let mut summed = vec![0.0; 4];
        for tree in &model.trees {
            let single = GbtModel {
                trees: vec![tree.clone()],
                ..model.clone()
            };
            let e = shapley_exact(&single, x.row(0), &background).unwrap();
            for i in 0..4 {
                summed[i] += e.values[i];
            }
        }
        for i in 0..4 {
            assert!(
                (full.values[i] - summed[i]).abs() < 1e-9,
                "phi_{i}: full {} vs per-tree sum {}",
                full.values[i],
                summed[i]
            );
        }
    }

    #[test]
    fn efficiency_axiom_on_fitted_models() {
        for seed in 0..10u64 {
            let m = 6;
            let x_train = gaussian(60, m, 500 + seed);
            let mut rng = crate::rng::stream(600 + seed, 0x5A9, 2);
            let y: Vec<f64> = (0..60)
                .map(|i| {
                    (x_train[[i, 0]] * 2.0).tanh() + x_train[[i, 4]]
                        + 0.2 * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            let model = fit(&x_train, &y, &GbtParams { n_trees: 25, ..Default::default() }).unwrap();
            let background = gaussian(16, m, 700 + seed);
            let x = gaussian(1, m, 800 + seed);
            let e = shapley_exact(&model, x.row(0), &background).unwrap();
            let gap = (e.baseline + e.values.iter().sum::<f64>() - e.prediction).abs();
            assert!(gap <= 1e-9, "seed {seed}: efficiency gap {gap}");
        }
    }

    #[test]
    fn repeated_calls_are_bit_identical() {
        let x_train = gaussian(40, 5, 6);
        let y: Vec<f64> = (0..40).map(|i| x_train[[i, 2]]).collect();
        let model = fit(&x_train, &y, &GbtParams::default()).unwrap();
        let background = gaussian(32, 5, 7);
        let x = gaussian(1, 5, 8);
        let a = shapley_exact(&model, x.row(0), &background).unwrap();
        let b = shapley_exact(&model, x.row(0), &background).unwrap();
        for (va, vb) in a.values.iter().zip(&b.values) {
            assert_eq!(va.to_bits(), vb.to_bits());
        }
    }

    #[test]
    fn budget_and_shape_errors() {
        let model = model_with(vec![], 21, 0.0, 0.1);
        let x = Array2::zeros((1, 21));
        let background = Array2::zeros((2, 21));
        assert!(matches!(
            shapley_exact(&model, x.row(0), &background),
            Err(Error::FeatureBudget { count: 21, budget: 20 })
        ));

        let model = model_with(vec![], 3, 0.0, 0.1);
        let background = Array2::zeros((2, 3));
        let short = array![1.0, 2.0];
        assert!(matches!(
            shapley_exact(&model, short.view(), &background),
            Err(Error::ShapeMismatch(_))
        ));
        let x = array![1.0, 2.0, 3.0];
        let empty = Array2::zeros((0, 3));
        assert!(matches!(
            shapley_exact(&model, x.view(), &empty),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn global_importance_ranks_by_magnitude() {
        let e = ShapExplanation {
            feature_names: vec!["a".into(), "b".into()],
            baseline: 0.0,
            values: vec![0.5, -2.0],
            prediction: -1.5,
        };
        let g = global_importance(&[e]).unwrap();
        assert_eq!(g.entries[0].feature, "b");
        assert_eq!(g.entries[0].rank, 1);
        assert!((g.entries[0].mean_abs_shap - 2.0).abs() < 1e-15);
        assert_eq!(g.entries[1].feature, "a");
        assert_eq!(g.entries[1].rank, 2);
    }

    #[test]
    fn global_importance_ties_break_by_name() {
        let zeros = |names: &[&str]| ShapExplanation {
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            baseline: 0.0,
            values: vec![0.0; names.len()],
            prediction: 0.0,
        };
        let g = global_importance(&[zeros(&["zeta", "alpha", "mid"])]).unwrap();
        let order: Vec<&str> = g.entries.iter().map(|e| e.feature.as_str()).collect();
        assert_eq!(order, vec!["alpha", "mid", "zeta"]);
        assert_eq!(
            g.entries.iter().map(|e| e.rank).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
    }

    #[test]
    fn global_importance_input_validation() {
        assert!(matches!(global_importance(&[]), Err(Error::EmptyInput(_))));
        let a = ShapExplanation {
            feature_names: vec!["x".into()],
            baseline: 0.0,
            values: vec![0.0],
            prediction: 0.0,
        };
        let b = ShapExplanation {
            feature_names: vec!["y".into()],
            baseline: 0.0,
            values: vec![0.0],
            prediction: 0.0,
        };
        assert!(matches!(
            global_importance(&[a, b]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn csv_export_has_one_row_per_instance_feature() {
        let model = model_with(vec![stump(0, 0.0, -1.0, 1.0)], 2, 0.5, 1.0);
        let instances = array![[0.25, -1.0], [-0.75, 2.0]];
        let background = array![[0.0, 0.0], [1.0, -1.0]];
        let explanations: Vec<ShapExplanation> = (0..2)
            .map(|i| shapley_exact(&model, instances.row(i), &background).unwrap())
            .collect();
        let csv = explanations_to_csv(&explanations, &instances).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(
            lines[0],
            "instance_id,feature,feature_value,shap_value,baseline,prediction"
        );
        assert_eq!(lines.len(), 1 + 2 * 2);
        assert!(lines[1].starts_with("0,f0,0.25,"));
        assert!(lines[3].starts_with("1,f0,-0.75,"));
        // Every numeric field parses back.
        for line in &lines[1..] {
            let fields: Vec<&str> = line.split(',').collect();
            assert_eq!(fields.len(), 6);
            for f in [&fields[2], &fields[3], &fields[4], &fields[5]] {
                f.parse::<f64>().unwrap();
            }
        }
    }
}
