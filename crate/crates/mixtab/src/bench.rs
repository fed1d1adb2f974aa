//! Synthetic benchmark harness: low-rank data generation, random masking,
//! a median/mode baseline imputer, paired strategy comparison, and
//! group-stratified error analysis.
//!
//! Comparisons are paired by construction: both imputation strategies see
//! the same generated table, the same mask, and the same fold partition, so
//! metric differences come from the strategies alone.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::completion::{impute, ImputeConfig};
use crate::error::{Error, Result};
use crate::gbt::{cross_validate_detail, GbtParams};
use crate::rng::{stream, tag};
use crate::tabular::{Cell, ColumnKind, ColumnRole, ColumnSchema, MixedTable};

/// Shape and randomness of one synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub n_continuous: usize,
    pub n_categorical: usize,
    pub levels_per_cat: usize,
    /// Rank of the latent factor matrix every feature is built from.
    pub latent_rank: usize,
    pub noise_sd: f64,
    /// Probability that each feature cell is hidden.
    pub missing_fraction: f64,
    pub seed: u64,
    /// Duplicate every feature across two waves and add an elapsed-time
    /// column plus an age-band group key.
    pub panel_mode: bool,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_rows: 200,
            n_continuous: 8,
            n_categorical: 4,
            levels_per_cat: 3,
            latent_rank: 3,
            noise_sd: 0.1,
            missing_fraction: 0.3,
            seed: 0,
            panel_mode: false,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_rows == 0 {
            return Err(Error::Config("n_rows must be positive".into()));
        }
        if self.n_continuous + self.n_categorical == 0 {
            return Err(Error::Config("need at least one feature column".into()));
        }
        if self.n_categorical > 0 && self.levels_per_cat < 2 {
            return Err(Error::Config("levels_per_cat must be at least 2".into()));
        }
        if self.latent_rank == 0 || self.latent_rank > self.n_continuous + self.n_categorical {
            return Err(Error::Config(
                "latent_rank must be in 1..=n_continuous + n_categorical".into(),
            ));
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return Err(Error::Config("noise_sd must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.missing_fraction) {
            return Err(Error::Config("missing_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// One (strategy, metric) summary across CV folds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub strategy: String,
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

/// Per-group out-of-fold RMSE summary for one strategy.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StratifiedRow {
    pub strategy: String,
    pub group: String,
    /// Absent when the group had no members in any fold.
    pub rmse_mean: Option<f64>,
    pub rmse_std: Option<f64>,
    pub n: usize,
}

/// Output of [`compare_strategies`], stamped with the full configuration
/// that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkReport {
    pub spec: SyntheticSpec,
    pub impute_config: ImputeConfig,
    pub gbt_params: GbtParams,
    pub folds: usize,
    pub metrics: Vec<MetricRow>,
    pub stratified: Vec<StratifiedRow>,
}

/// RMSE of one group in one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupStat {
    pub group: String,
    /// Absent (never NaN) for an empty group.
    pub rmse: Option<f64>,
    pub n: usize,
}

/// Per-group and overall RMSE of one prediction set.
#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedRmse {
    /// Sorted by group label.
    pub groups: Vec<GroupStat>,
    pub overall: f64,
}

/// Random low-rank matrix: returns (noisy observation, noiseless product).
///
/// Both factors and the additive noise are drawn from one generator keyed by
/// `seed`, so equal seeds give bit-identical matrices.
pub fn gen_low_rank(
    n: usize,
    m: usize,
    rank: usize,
    noise_sd: f64,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    if rank == 0 || rank > n.min(m) {
        return Err(Error::Rank { rank, max_rank: n.min(m) });
    }
    let mut rng = stream(seed, tag::GEN_LOW_RANK, 0);
    let left = Array2::from_shape_fn((n, rank), |_| rng.sample::<f64, _>(StandardNormal));
    let right = Array2::from_shape_fn((m, rank), |_| rng.sample::<f64, _>(StandardNormal));
    let truth = left.dot(&right.t());
    let noisy = Array2::from_shape_fn((n, m), |(i, j)| {
        truth[[i, j]] + noise_sd * rng.sample::<f64, _>(StandardNormal)
    });
    Ok((noisy, truth))
}

/// Age-band labels used as the default group key in panel mode.
pub const AGE_BANDS: [&str; 5] = ["below_49", "50_59", "60_69", "70_79", "above_80"];

fn age_band(age: f64) -> usize {
    if age < 50.0 {
        0
    } else if age < 60.0 {
        1
    } else if age < 70.0 {
        2
    } else if age < 80.0 {
        3
    } else {
        4
    }
}

/// Names of the feature columns built directly from the target-driving
/// latent factors of [`gen_mixed_synthetic`] under `spec`.
pub fn planted_feature_names(spec: &SyntheticSpec) -> Vec<String> {
    let planted = spec.latent_rank.min(3).min(spec.n_continuous);
    (0..planted)
        .flat_map(|j| {
            if spec.panel_mode {
                vec![format!("cont_{j}_w1"), format!("cont_{j}_w2")]
            } else {
                vec![format!("cont_{j}")]
            }
        })
        .collect()
}

/// Generate a mixed-type table over a low-rank latent factor matrix, then
/// hide feature cells at `missing_fraction`. Returns (masked, ground truth).
///
/// The target is a fixed sparse combination of the first up-to-3 latent
/// factors, and the first up-to-3 continuous columns are noisy copies of
/// exactly those factors — the planted features
/// ([`planted_feature_names`]). Categorical columns are equal-width binnings
/// of further latent combinations, so they carry the same low-rank
/// structure. Panel mode measures every feature at two waves, appends an
/// elapsed-time column with two distinct values, and adds an age-band group
/// key that is never masked.
pub fn gen_mixed_synthetic(spec: &SyntheticSpec) -> Result<(MixedTable, MixedTable)> {
    spec.validate()?;
    let n = spec.n_rows;
    let r = spec.latent_rank;
    let waves = if spec.panel_mode { 2 } else { 1 };
    let planted = spec.latent_rank.min(3).min(spec.n_continuous);
    let mut rng = stream(spec.seed, tag::GEN_MIXED, 0);

    let factors = Array2::from_shape_fn((n, r), |_| rng.sample::<f64, _>(StandardNormal));

    // Noiseless per-column signals: planted columns mirror one factor each,
    // the rest mix all factors with random loadings.
    let mut cont_raw: Vec<Vec<f64>> = Vec::with_capacity(spec.n_continuous);
    for j in 0..spec.n_continuous {
        if j < planted {
            cont_raw.push(factors.column(j).to_vec());
        } else {
            let w: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            cont_raw.push((0..n).map(|i| (0..r).map(|k| factors[[i, k]] * w[k]).sum()).collect());
        }
    }
    let mut cat_raw: Vec<Vec<f64>> = Vec::with_capacity(spec.n_categorical);
    for _ in 0..spec.n_categorical {
        let w: Vec<f64> = (0..r).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        cat_raw.push((0..n).map(|i| (0..r).map(|k| factors[[i, k]] * w[k]).sum()).collect());
    }

    let mut schema: Vec<ColumnSchema> = Vec::new();
    let mut columns: Vec<Vec<Cell>> = Vec::new();
    let wave_name = |base: &str, w: usize| {
        if waves == 2 {
            format!("{base}_w{}", w + 1)
        } else {
            base.to_string()
        }
    };

    for (j, raw) in cont_raw.iter().enumerate() {
        for w in 0..waves {
            let _ = w;
            let vals: Vec<f64> = raw
                .iter()
                .map(|&v| v + spec.noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            schema.push(ColumnSchema {
                name: wave_name(&format!("cont_{j}"), w),
                kind: ColumnKind::Continuous,
                role: ColumnRole::Feature,
            });
            columns.push(vals.into_iter().map(Cell::Number).collect());
        }
    }

    let levels: Vec<String> = (0..spec.levels_per_cat).map(|l| format!("l{l}")).collect();
    for (j, raw) in cat_raw.iter().enumerate() {
        for w in 0..waves {
            let vals: Vec<f64> = raw
                .iter()
                .map(|&v| v + spec.noise_sd * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let width = (hi - lo) / spec.levels_per_cat as f64;
            let cells: Vec<Cell> = vals
                .iter()
                .map(|&v| {
                    let idx = if width > 0.0 {
                        (((v - lo) / width) as usize).min(spec.levels_per_cat - 1)
                    } else {
                        0
                    };
                    Cell::Level(idx)
                })
                .collect();
            schema.push(ColumnSchema {
                name: wave_name(&format!("cat_{j}"), w),
                kind: ColumnKind::Categorical(levels.clone()),
                role: ColumnRole::Feature,
            });
            columns.push(cells);
        }
    }

    if spec.panel_mode {
        schema.push(ColumnSchema {
            name: "elapsed_time".into(),
            kind: ColumnKind::Continuous,
            role: ColumnRole::Feature,
        });
        columns.push((0..n).map(|i| Cell::Number(if i % 2 == 0 { 1.0 } else { 2.0 })).collect());

        schema.push(ColumnSchema {
            name: "age_group".into(),
            kind: ColumnKind::Categorical(AGE_BANDS.iter().map(|s| s.to_string()).collect()),
            role: ColumnRole::GroupKey,
        });
        columns.push(
            (0..n)
                .map(|_| Cell::Level(age_band(65.0 + 12.0 * rng.sample::<f64, _>(StandardNormal))))
                .collect(),
        );
    }

    // Sparse latent target over the designated factors.
    const TARGET_COEFS: [f64; 3] = [2.0, -1.5, 1.0];
    let driving = spec.latent_rank.min(3);
    schema.push(ColumnSchema {
        name: "target".into(),
        kind: ColumnKind::Continuous,
        role: ColumnRole::Target,
    });
    columns.push(
        (0..n)
            .map(|i| {
                let signal: f64 =
                    (0..driving).map(|k| TARGET_COEFS[k] * factors[[i, k]]).sum();
                Cell::Number(signal + spec.noise_sd * rng.sample::<f64, _>(StandardNormal))
            })
            .collect(),
    );

    let rows: Vec<Vec<Cell>> = (0..n)
        .map(|i| columns.iter().map(|col| col[i]).collect())
        .collect();
    let truth = MixedTable::new(schema, rows)?;
    let masked = mask_random(&truth, spec.missing_fraction, spec.seed)?;
    Ok((masked, truth))
}

/// Hide each feature cell independently with probability `fraction`.
/// Target and group-key columns are never touched. A column that would end
/// up with no observed cell has its mask redrawn, up to 100 times.
pub fn mask_random(table: &MixedTable, fraction: f64, seed: u64) -> Result<MixedTable> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config("mask fraction must be in [0, 1)".into()));
    }
    let mut rng = stream(seed, tag::MASK, 0);
    let n = table.n_rows();
    let mut rows = table.rows.clone();
    for (j, schema) in table.schema.iter().enumerate() {
        if schema.role != ColumnRole::Feature {
            continue;
        }
        let mut accepted = false;
        for _ in 0..100 {
            let mask: Vec<bool> = (0..n).map(|_| rng.gen_bool(fraction)).collect();
            let survives = (0..n).any(|i| !mask[i] && !table.rows[i][j].is_missing());
            if survives || n == 0 {
                for i in 0..n {
                    rows[i][j] = if mask[i] { Cell::Missing } else { table.rows[i][j] };
                }
                accepted = true;
                break;
            }
        }
        if !accepted {
            return Err(Error::Masking(format!(
                "column {:?} had no observed cells after 100 mask redraws",
                schema.name
            )));
        }
    }
    MixedTable::new(table.schema.clone(), rows)
}

/// Fill missing cells per column: continuous by the column median of
/// observed values (lower middle on even counts), categorical by the modal
/// level (ties to the lowest level index).
pub fn baseline_impute(table: &MixedTable) -> Result<MixedTable> {
    let mut fills: Vec<Cell> = Vec::with_capacity(table.n_cols());
    for (j, schema) in table.schema.iter().enumerate() {
        let fill = match &schema.kind {
            ColumnKind::Continuous => {
                let mut observed: Vec<f64> = table
                    .rows
                    .iter()
                    .filter_map(|row| match row[j] {
                        Cell::Number(v) => Some(v),
                        _ => None,
                    })
                    .collect();
                if observed.is_empty() {
                    return Err(Error::DegenerateColumn(schema.name.clone()));
                }
                observed.sort_by(f64::total_cmp);
                Cell::Number(observed[(observed.len() - 1) / 2])
            }
            ColumnKind::Categorical(levels) => {
                let mut counts = vec![0usize; levels.len()];
                for row in &table.rows {
                    if let Cell::Level(l) = row[j] {
                        counts[l] += 1;
                    }
                }
                let (mode, &count) =
                    counts.iter().enumerate().max_by_key(|&(i, &c)| (c, usize::MAX - i)).unwrap();
                if count == 0 {
                    return Err(Error::DegenerateColumn(schema.name.clone()));
                }
                Cell::Level(mode)
            }
        };
        fills.push(fill);
    }
    let rows: Vec<Vec<Cell>> = table
        .rows
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(j, &cell)| if cell.is_missing() { fills[j] } else { cell })
                .collect()
        })
        .collect();
    MixedTable::new(table.schema.clone(), rows)
}

/// RMSE per group and overall. `labels` is the full label universe: labels
/// with no members are reported with n = 0 and no RMSE. Groups observed in
/// `groups` but absent from `labels` are included too. Output is sorted by
/// group label.
pub fn stratified_rmse(
    predictions: &[f64],
    truths: &[f64],
    groups: &[String],
    labels: &[String],
) -> Result<StratifiedRmse> {
    if predictions.len() != truths.len() || predictions.len() != groups.len() {
        return Err(Error::Length(format!(
            "{} predictions, {} truths, {} group labels",
            predictions.len(),
            truths.len(),
            groups.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput("no predictions to stratify".into()));
    }
    let mut by_group: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for label in labels {
        by_group.entry(label).or_insert((0.0, 0));
    }
    let mut total_se = 0.0;
    for i in 0..predictions.len() {
        let e = predictions[i] - truths[i];
        total_se += e * e;
        let entry = by_group.entry(&groups[i]).or_insert((0.0, 0));
        entry.0 += e * e;
        entry.1 += 1;
    }
    let groups_out = by_group
        .into_iter()
        .map(|(label, (se, count))| GroupStat {
            group: label.to_string(),
            rmse: (count > 0).then(|| (se / count as f64).sqrt()),
            n: count,
        })
        .collect();
    Ok(StratifiedRmse {
        groups: groups_out,
        overall: (total_se / predictions.len() as f64).sqrt(),
    })
}

/// Generate one synthetic instance and run both imputation strategies
/// through the same downstream model evaluation.
///
/// Metrics per strategy: `cv_rmse` (per-fold model RMSE, mean ± std),
/// `oof_rmse` (pooled out-of-fold RMSE), `imp_rmse_cont` (RMSE of imputed
/// continuous cells against ground truth; 0 when nothing was hidden), and
/// `imp_acc_cat` (level accuracy of imputed categorical cells; 1 when
/// nothing was hidden). Stratified rows summarize per-fold group RMSEs over
/// the group-key column, or a single "all" group without one.
pub fn compare_strategies(
    spec: &SyntheticSpec,
    impute_config: &ImputeConfig,
    gbt_params: &GbtParams,
    folds: usize,
) -> Result<BenchmarkReport> {
    spec.validate()?;
    impute_config.validate()?;
    gbt_params.validate()?;
    if folds < 2 {
        return Err(Error::Config("folds must be at least 2".into()));
    }

    let (masked, truth) = gen_mixed_synthetic(spec)?;
    let svd_table = impute(&masked, impute_config)?.completed;
    let base_table = baseline_impute(&masked)?;

    let (group_of_row, label_universe) = group_labels(&truth);

    let mut metrics = Vec::new();
    let mut stratified = Vec::new();
    for (strategy, table) in [("svd", &svd_table), ("baseline", &base_table)] {
        let (imp_rmse_cont, imp_acc_cat) = imputation_quality(&masked, table, &truth);
        let (x, y) = feature_matrix(table)?;
        let detail = cross_validate_detail(&x, &y, gbt_params, folds, gbt_params.seed)?;

        let (cv_mean, cv_std) = mean_std(&detail.fold_rmse);
        let mut oof_se = 0.0;
        for (p, t) in detail.oof_predictions.iter().zip(&y) {
            oof_se += (p - t) * (p - t);
        }
        let oof_rmse = (oof_se / y.len() as f64).sqrt();

        let push = |metrics: &mut Vec<MetricRow>, metric: &str, mean: f64, std: f64| {
            metrics.push(MetricRow {
                strategy: strategy.to_string(),
                metric: metric.to_string(),
                mean,
                std,
            });
        };
        push(&mut metrics, "cv_rmse", cv_mean, cv_std);
        push(&mut metrics, "oof_rmse", oof_rmse, 0.0);
        push(&mut metrics, "imp_rmse_cont", imp_rmse_cont, 0.0);
        push(&mut metrics, "imp_acc_cat", imp_acc_cat, 0.0);

        // Per-fold stratified RMSE, summarized per group across folds.
        let mut per_group: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut group_n: BTreeMap<String, usize> = BTreeMap::new();
        for label in &label_universe {
            per_group.insert(label.clone(), Vec::new());
            group_n.insert(label.clone(), 0);
        }
        for g in &group_of_row {
            *group_n.get_mut(g).unwrap() += 1;
        }
        for f in 0..folds {
            let idx: Vec<usize> =
                (0..y.len()).filter(|&i| detail.fold_of_row[i] == f).collect();
            if idx.is_empty() {
                continue;
            }
            let p: Vec<f64> = idx.iter().map(|&i| detail.oof_predictions[i]).collect();
            let t: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let g: Vec<String> = idx.iter().map(|&i| group_of_row[i].clone()).collect();
            let strat = stratified_rmse(&p, &t, &g, &label_universe)?;
            for gs in strat.groups {
                if let Some(rmse) = gs.rmse {
                    per_group.get_mut(&gs.group).unwrap().push(rmse);
                }
            }
        }
        for label in &label_universe {
            let vals = &per_group[label];
            let (mean, std) = if vals.is_empty() {
                (None, None)
            } else {
                let (m, s) = mean_std(vals);
                (Some(m), Some(s))
            };
            stratified.push(StratifiedRow {
                strategy: strategy.to_string(),
                group: label.clone(),
                rmse_mean: mean,
                rmse_std: std,
                n: group_n[label],
            });
        }
    }

    Ok(BenchmarkReport {
        spec: spec.clone(),
        impute_config: impute_config.clone(),
        gbt_params: gbt_params.clone(),
        folds,
        metrics,
        stratified,
    })
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Group label per row from the group-key column, or a single "all" group.
fn group_labels(table: &MixedTable) -> (Vec<String>, Vec<String>) {
    match table.role_index(ColumnRole::GroupKey) {
        Some(j) => {
            let levels = match &table.schema[j].kind {
                ColumnKind::Categorical(levels) => levels.clone(),
                ColumnKind::Continuous => vec![],
            };
            let labels = table
                .rows
                .iter()
                .map(|row| match row[j] {
                    Cell::Level(l) => levels[l].clone(),
                    Cell::Number(v) => v.to_string(),
                    Cell::Missing => "(missing)".to_string(),
                })
                .collect();
            (labels, levels)
        }
        None => (
            vec!["all".to_string(); table.n_rows()],
            vec!["all".to_string()],
        ),
    }
}

/// RMSE over hidden continuous cells and accuracy over hidden categorical
/// cells, comparing an imputed table to ground truth.
pub fn imputation_quality(
    masked: &MixedTable,
    imputed: &MixedTable,
    truth: &MixedTable,
) -> (f64, f64) {
    let mut se = 0.0;
    let mut n_cont = 0usize;
    let mut hits = 0usize;
    let mut n_cat = 0usize;
    for i in 0..masked.n_rows() {
        for j in 0..masked.n_cols() {
            if !masked.rows[i][j].is_missing() {
                continue;
            }
            match (imputed.rows[i][j], truth.rows[i][j]) {
                (Cell::Number(a), Cell::Number(b)) => {
                    se += (a - b) * (a - b);
                    n_cont += 1;
                }
                (Cell::Level(a), Cell::Level(b)) => {
                    hits += usize::from(a == b);
                    n_cat += 1;
                }
                _ => {}
            }
        }
    }
    let rmse = if n_cont > 0 { (se / n_cont as f64).sqrt() } else { 0.0 };
    let acc = if n_cat > 0 { hits as f64 / n_cat as f64 } else { 1.0 };
    (rmse, acc)
}

/// Model matrix for the downstream learner: feature columns only,
/// continuous as-is and categoricals by level index, plus the continuous
/// target vector. The table must be fully observed (post-imputation).
pub(crate) fn feature_matrix(table: &MixedTable) -> Result<(Array2<f64>, Vec<f64>)> {
    let target = table
        .role_index(ColumnRole::Target)
        .ok_or_else(|| Error::Schema("table has no target column".into()))?;
    let feats: Vec<usize> = (0..table.n_cols())
        .filter(|&j| table.schema[j].role == ColumnRole::Feature)
        .collect();
    let mut x = Array2::zeros((table.n_rows(), feats.len()));
    for (c, &j) in feats.iter().enumerate() {
        for i in 0..table.n_rows() {
            x[[i, c]] = match table.rows[i][j] {
                Cell::Number(v) => v,
                Cell::Level(l) => l as f64,
                Cell::Missing => {
                    return Err(Error::Degenerate(format!(
                        "feature column {:?} still has missing cells",
                        table.schema[j].name
                    )))
                }
            };
        }
    }
    let y = table
        .rows
        .iter()
        .map(|row| match row[target] {
            Cell::Number(v) => Ok(v),
            _ => Err(Error::Degenerate(
                "target column must be fully observed and continuous".into(),
            )),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((x, y))
}

/// Feature names matching [`feature_matrix`]'s column order.
pub(crate) fn feature_names(table: &MixedTable) -> Vec<String> {
    table
        .schema
        .iter()
        .filter(|s| s.role == ColumnRole::Feature)
        .map(|s| s.name.clone())
        .collect()
}

/// Metric rows as CSV.
pub fn metrics_to_csv(report: &BenchmarkReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("strategy,metric,mean,std\n");
    for row in &report.metrics {
        let _ = writeln!(out, "{},{},{},{}", row.strategy, row.metric, row.mean, row.std);
    }
    out
}

/// Stratified rows as CSV; absent RMSEs are empty fields.
pub fn stratified_to_csv(report: &BenchmarkReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("strategy,group,rmse_mean,rmse_std,n\n");
    for row in &report.stratified {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.strategy,
            row.group,
            row.rmse_mean.map(|v| v.to_string()).unwrap_or_default(),
            row.rmse_std.map(|v| v.to_string()).unwrap_or_default(),
            row.n
        );
    }
    out
}

/// Human-readable report: configuration stamp plus aligned tables.
pub fn render_text(report: &BenchmarkReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    let _ = writeln!(out, "spec:   {}", serde_json::to_string(&report.spec).unwrap());
    let _ = writeln!(out, "impute: {}", serde_json::to_string(&report.impute_config).unwrap());
    let _ = writeln!(out, "gbt:    {}", serde_json::to_string(&report.gbt_params).unwrap());
    let _ = writeln!(out, "folds:  {}", report.folds);
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<10} {:<14} {:>12} {:>12}", "strategy", "metric", "mean", "std");
    for row in &report.metrics {
        let _ = writeln!(
            out,
            "{:<10} {:<14} {:>12.6} {:>12.6}",
            row.strategy, row.metric, row.mean, row.std
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "{:<10} {:<12} {:>12} {:>12} {:>6}",
        "strategy", "group", "rmse_mean", "rmse_std", "n"
    );
    for row in &report.stratified {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<10} {:<12} {:>12} {:>12} {:>6}",
            row.strategy,
            row.group,
            fmt(row.rmse_mean),
            fmt(row.rmse_std),
            row.n
        );
    }
    out
}
