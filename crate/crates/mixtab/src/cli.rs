//! Command-line surface: schema-typed CSV in, imputation / benchmarking /
//! attribution / association analysis out, every run stamped with a replayable
//! manifest.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or schema
//! error, 3 numerical failure. Each failure prints one diagnostic line on
//! standard error. All file outputs are deterministic functions of the
//! inputs, flags, and seed — thread count never changes them.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{
    self, compare_strategies, metrics_to_csv, render_text, stratified_to_csv, SyntheticSpec,
};
use crate::completion::{impute, ImputeConfig};
use crate::error::Error;
use crate::gbt::{fit, GbtModel, GbtParams};
use crate::rng::{stream, tag};
use crate::shap::{explanations_to_csv, global_importance, shapley_exact, ShapExplanation};
use crate::tabular::{load_csv, load_schema, MixedTable};
use crate::{assoc, Result};

/// Record of one CLI run: enough to verify inputs and reproduce every
/// output file bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Argument vector of the run (program name excluded).
    pub command: Vec<String>,
    /// Every effective setting, after defaults and overrides.
    pub config_snapshot: serde_json::Value,
    pub seed: u64,
    /// SHA-256 of each input file, keyed by path as given.
    pub input_hashes: BTreeMap<String, String>,
    /// Files the run wrote (the manifest itself excluded).
    pub artifact_paths: Vec<String>,
}

#[derive(Parser)]
#[command(
    name = "mixtab",
    version,
    about = "Mixed-type tabular imputation, boosted-tree modeling, exact Shapley attribution, association statistics, and synthetic benchmarks"
)]
struct Cli {
    /// Worker threads (default: MIXTAB_THREADS, then all cores). Outputs do
    /// not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Complete a CSV's missing cells by cross-validated low-rank
    /// reconstruction.
    Impute(ImputeArgs),
    /// Generate synthetic data and compare imputation strategies end to end.
    Bench(BenchArgs),
    /// Attribute model predictions to features with exact Shapley values.
    Explain(ExplainArgs),
    /// Rank every column's association with an anchor column.
    Assoc(AssocArgs),
    /// Re-run a recorded manifest and reproduce its outputs bit-exact.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct ImputeArgs {
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Column schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Completed CSV (same header and column order as the input).
    #[arg(long, default_value = "completed.csv")]
    out: PathBuf,
    /// Threshold grid size.
    #[arg(long, default_value_t = 20)]
    grid: usize,
    /// Cross-validation folds for threshold selection.
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Convergence tolerance on the missing-cell update delta.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Iteration budget per threshold.
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Let the target column participate in the reconstruction.
    #[arg(long)]
    include_target: bool,
    /// Token marking a missing cell in the CSV.
    #[arg(long, default_value = "")]
    missing_token: String,
    /// Per-iteration trace CSV.
    #[arg(long, default_value = "trace.csv")]
    trace: PathBuf,
    /// Threshold cross-validation table CSV.
    #[arg(long, default_value = "lambda_cv.csv")]
    cv_table: PathBuf,
    #[arg(long, default_value = "manifest.json")]
    manifest: PathBuf,
    /// Ground-truth CSV; when given, held-out imputation quality is printed.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Synthetic dataset spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Boosting parameters JSON (defaults apply when omitted).
    #[arg(long)]
    gbt: Option<PathBuf>,
    /// Imputation config JSON (defaults apply when omitted).
    #[arg(long)]
    impute: Option<PathBuf>,
    /// Cross-validation folds for model evaluation.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Overrides every configured seed (spec, imputation, boosting).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ExplainArgs {
    /// Input CSV; feature cells must be complete (impute first if needed).
    #[arg(long)]
    data: PathBuf,
    /// Column schema JSON.
    #[arg(long)]
    schema: PathBuf,
    /// Model JSON path, or "train" to fit one on the data.
    #[arg(long)]
    model: String,
    /// Background sample size (capped at 128 rows).
    #[arg(long, default_value_t = 128)]
    background: usize,
    /// Emit one importance ranking per value of this column.
    #[arg(long)]
    group_by: Option<String>,
    /// Per-instance attribution CSV.
    #[arg(long, default_value = "shap.csv")]
    out: PathBuf,
    /// Global importance ranking CSV.
    #[arg(long, default_value = "global_importance.csv")]
    global: PathBuf,
    /// Boosting parameters JSON for --model train.
    #[arg(long)]
    gbt: Option<PathBuf>,
    /// Seed for the background subsample (and training when --model train).
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "")]
    missing_token: String,
    #[arg(long, default_value = "manifest.json")]
    manifest: PathBuf,
}

#[derive(Args)]
struct AssocArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    schema: PathBuf,
    /// Column every other column is scored against.
    #[arg(long)]
    anchor: String,
    #[arg(long, default_value = "assoc.csv")]
    out: PathBuf,
    #[arg(long, default_value = "")]
    missing_token: String,
    #[arg(long, default_value = "manifest.json")]
    manifest: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

/// One CLI failure: exit code plus a one-line diagnostic.
struct Failure {
    code: i32,
    msg: String,
}

type CliResult = std::result::Result<(), Failure>;

fn fail(code: i32, msg: impl Display) -> Failure {
    Failure { code, msg: msg.to_string() }
}

/// Library errors mapped onto the exit-code taxonomy: configuration → 1,
/// numerical non-convergence → 3, everything else (data/schema) → 2.
fn classify(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 1,
        Error::Convergence { .. } | Error::Rank { .. } => 3,
        _ => 2,
    }
}

fn lib(e: Error) -> Failure {
    fail(classify(&e), e)
}

/// Entry point behind `main`: parse, set up threads, dispatch. Returns the
/// process exit code.
pub fn run<I>(argv: I) -> i32
where
    I: IntoIterator<Item = String>,
{
    let args: Vec<String> = argv.into_iter().collect();
    let cli = match Cli::try_parse_from(std::iter::once("mixtab".to_string()).chain(args.iter().cloned())) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    init_threads(cli.threads);
    match dispatch(&cli.command, &args) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var("MIXTAB_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // Ignore the error from a pool that already exists (e.g. replay).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn dispatch(cmd: &Cmd, argv: &[String]) -> CliResult {
    match cmd {
        Cmd::Impute(a) => cmd_impute(a, argv),
        Cmd::Bench(a) => cmd_bench(a, argv),
        Cmd::Explain(a) => cmd_explain(a, argv),
        Cmd::Assoc(a) => cmd_assoc(a, argv),
        Cmd::Replay(a) => cmd_replay(a),
    }
}

// --- shared plumbing ---

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn write_file(path: &Path, content: &str) -> CliResult {
    fs::write(path, content).map_err(|e| fail(2, format!("writing {}: {e}", path.display())))
}

fn write_manifest(
    path: &Path,
    argv: &[String],
    config_snapshot: serde_json::Value,
    seed: u64,
    inputs: &[&Path],
    artifacts: &[&Path],
) -> CliResult {
    let mut input_hashes = BTreeMap::new();
    for input in inputs {
        let hash = sha256_hex(input).map_err(lib)?;
        input_hashes.insert(input.display().to_string(), hash);
    }
    let manifest = RunManifest {
        command: argv.to_vec(),
        config_snapshot,
        seed,
        input_hashes,
        artifact_paths: artifacts.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialization cannot fail");
    write_file(path, &(text + "\n"))
}

fn load_table(data: &Path, schema_path: &Path, missing_token: &str) -> std::result::Result<MixedTable, Failure> {
    let schema = load_schema(schema_path).map_err(|e| fail(2, format!("schema: {e}")))?;
    load_csv(data, &schema, missing_token).map_err(|e| fail(2, format!("data: {e}")))
}

/// The input file's header, as schema column indices. Lets outputs keep the
/// input's column order even though tables store schema order.
fn input_column_order(data: &Path, table: &MixedTable) -> std::result::Result<Vec<usize>, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(data)
        .map_err(|e| fail(2, format!("data: {e}")))?;
    let headers = rdr.headers().map_err(|e| fail(2, format!("data: {e}")))?;
    headers
        .iter()
        .map(|name| table.column_index(name).map_err(|e| fail(2, format!("data: {e}"))))
        .collect()
}

fn write_table_ordered(
    table: &MixedTable,
    order: &[usize],
    path: &Path,
    missing_token: &str,
) -> CliResult {
    let mut wtr = csv::Writer::from_path(path)
        .map_err(|e| fail(2, format!("writing {}: {e}", path.display())))?;
    let io_err = |e: csv::Error| fail(2, format!("writing {}: {e}", path.display()));
    wtr.write_record(order.iter().map(|&j| table.schema[j].name.as_str()))
        .map_err(io_err)?;
    for i in 0..table.n_rows() {
        wtr.write_record(order.iter().map(|&j| table.cell_text(i, j, missing_token)))
            .map_err(io_err)?;
    }
    wtr.flush().map_err(|e| fail(2, format!("writing {}: {e}", path.display())))
}

fn read_json_config<T: serde::de::DeserializeOwned>(
    path: &Path,
    what: &str,
) -> std::result::Result<T, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| fail(2, format!("{what} {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail(1, format!("{what} {}: {e}", path.display())))
}

// --- impute ---

fn cmd_impute(a: &ImputeArgs, argv: &[String]) -> CliResult {
    let table = load_table(&a.data, &a.schema, &a.missing_token)?;
    let order = input_column_order(&a.data, &table)?;
    let config = ImputeConfig {
        grid_size: a.grid,
        folds: a.folds,
        tolerance: a.tol,
        max_iterations: a.max_iter,
        seed: a.seed,
        include_target: a.include_target,
    };
    config.validate().map_err(lib)?;

    let started = Instant::now();
    let result = impute(&table, &config).map_err(lib)?;
    let elapsed = started.elapsed();

    write_table_ordered(&result.completed, &order, &a.out, &a.missing_token)?;

    let mut trace_csv = String::from("iteration,fit_rmse,delta\n");
    for (i, stat) in result.trace.iter().enumerate() {
        use std::fmt::Write as _;
        let _ = writeln!(trace_csv, "{},{},{}", i + 1, stat.fit_rmse, stat.delta);
    }
    write_file(&a.trace, &trace_csv)?;

    let mut cv_csv = String::from("lambda,mean_mse\n");
    for entry in &result.cv_table {
        use std::fmt::Write as _;
        let _ = writeln!(cv_csv, "{},{}", entry.lambda, entry.mean_mse);
    }
    write_file(&a.cv_table, &cv_csv)?;

    let mut inputs: Vec<&Path> = vec![&a.data, &a.schema];
    if let Some(truth_path) = &a.truth {
        inputs.push(truth_path);
    }
    write_manifest(
        &a.manifest,
        argv,
        serde_json::json!({
            "impute": config,
            "data": a.data.display().to_string(),
            "schema": a.schema.display().to_string(),
            "missing_token": a.missing_token,
            "truth": a.truth.as_ref().map(|p| p.display().to_string()),
        }),
        a.seed,
        &inputs,
        &[&a.out, &a.trace, &a.cv_table],
    )?;

    println!("lambda_star: {}", result.lambda_star);
    println!("iterations: {}", result.iterations);
    if let Some(truth_path) = &a.truth {
        let truth = load_table(truth_path, &a.schema, &a.missing_token)?;
        if truth.n_rows() != table.n_rows() {
            return Err(fail(2, "data: truth table has a different row count"));
        }
        let (rmse_cont, acc_cat) = bench::imputation_quality(&table, &result.completed, &truth);
        println!("heldout_rmse_cont: {rmse_cont}");
        println!("heldout_acc_cat: {acc_cat}");
    }
    println!("elapsed_ms: {}", elapsed.as_millis());
    Ok(())
}

// --- bench ---

fn cmd_bench(a: &BenchArgs, argv: &[String]) -> CliResult {
    let mut spec: SyntheticSpec = read_json_config(&a.spec, "spec")?;
    let mut impute_config: ImputeConfig = match &a.impute {
        Some(path) => read_json_config(path, "impute config")?,
        None => ImputeConfig::default(),
    };
    let mut gbt_params: GbtParams = match &a.gbt {
        Some(path) => read_json_config(path, "gbt config")?,
        None => GbtParams::default(),
    };
    if let Some(seed) = a.seed {
        spec.seed = seed;
        impute_config.seed = seed;
        gbt_params.seed = seed;
    }

    let report = compare_strategies(&spec, &impute_config, &gbt_params, a.folds).map_err(lib)?;

    fs::create_dir_all(&a.out_dir)
        .map_err(|e| fail(2, format!("creating {}: {e}", a.out_dir.display())))?;
    let metrics_path = a.out_dir.join("bench_metrics.csv");
    let strat_path = a.out_dir.join("bench_stratified.csv");
    let text_path = a.out_dir.join("bench_report.txt");
    let manifest_path = a.out_dir.join("manifest.json");
    write_file(&metrics_path, &metrics_to_csv(&report))?;
    write_file(&strat_path, &stratified_to_csv(&report))?;
    let text = render_text(&report);
    write_file(&text_path, &text)?;

    let mut inputs: Vec<&Path> = vec![&a.spec];
    if let Some(p) = &a.gbt {
        inputs.push(p);
    }
    if let Some(p) = &a.impute {
        inputs.push(p);
    }
    write_manifest(
        &manifest_path,
        argv,
        serde_json::json!({
            "spec": spec,
            "impute": impute_config,
            "gbt": gbt_params,
            "folds": a.folds,
            "out_dir": a.out_dir.display().to_string(),
        }),
        spec.seed,
        &inputs,
        &[&metrics_path, &strat_path, &text_path],
    )?;

    print!("{text}");
    Ok(())
}

// --- explain ---

/// Feature columns as a dense matrix: continuous values as-is, categorical
/// cells by level index. Missing cells are a hard error.
fn features_only(table: &MixedTable) -> std::result::Result<ndarray::Array2<f64>, Failure> {
    use crate::tabular::{Cell, ColumnRole};
    let feats: Vec<usize> = (0..table.n_cols())
        .filter(|&j| table.schema[j].role == ColumnRole::Feature)
        .collect();
    let mut x = ndarray::Array2::zeros((table.n_rows(), feats.len()));
    for (c, &j) in feats.iter().enumerate() {
        for i in 0..table.n_rows() {
            x[[i, c]] = match table.rows[i][j] {
                Cell::Number(v) => v,
                Cell::Level(l) => l as f64,
                Cell::Missing => {
                    return Err(fail(
                        2,
                        format!(
                            "data: feature column {:?} has missing cells; impute first",
                            table.schema[j].name
                        ),
                    ))
                }
            };
        }
    }
    Ok(x)
}

fn target_vector(table: &MixedTable) -> std::result::Result<Vec<f64>, Failure> {
    use crate::tabular::{Cell, ColumnRole};
    let t = table
        .role_index(ColumnRole::Target)
        .ok_or_else(|| fail(2, "data: table has no target column to train on"))?;
    table
        .rows
        .iter()
        .map(|row| match row[t] {
            Cell::Number(v) => Ok(v),
            Cell::Level(_) => Err(fail(2, "data: target column must be continuous")),
            Cell::Missing => Err(fail(2, "data: target column has missing cells; impute first")),
        })
        .collect()
}

fn cmd_explain(a: &ExplainArgs, argv: &[String]) -> CliResult {
    let table = load_table(&a.data, &a.schema, &a.missing_token)?;
    if table.n_rows() == 0 {
        return Err(fail(2, "data: table has no rows"));
    }
    let names = bench::feature_names(&table);
    let x = features_only(&table)?;

    let seed = a.seed.unwrap_or(0);
    let trained;
    let model: GbtModel = if a.model == "train" {
        let y = target_vector(&table)?;
        let mut params: GbtParams = match &a.gbt {
            Some(path) => read_json_config(path, "gbt config")?,
            None => GbtParams::default(),
        };
        if let Some(s) = a.seed {
            params.seed = s;
        }
        trained = true;
        fit(&x, &y, &params)
            .map_err(lib)?
            .with_feature_names(names.clone())
            .map_err(lib)?
    } else {
        let text = fs::read_to_string(&a.model)
            .map_err(|e| fail(2, format!("model {}: {e}", a.model)))?;
        let model = GbtModel::from_json(&text).map_err(|e| fail(2, format!("model: {e}")))?;
        if model.feature_names != names {
            return Err(fail(
                2,
                format!(
                    "model: feature names {:?} do not match the table's feature columns {:?}",
                    model.feature_names, names
                ),
            ));
        }
        trained = false;
        model
    };

    // Seeded background subsample of at most 128 training rows.
    let cap = a.background.min(128).min(x.nrows()).max(1);
    let mut picks =
        rand::seq::index::sample(&mut stream(seed, tag::BACKGROUND, 0), x.nrows(), cap).into_vec();
    picks.sort_unstable();
    let background = bench_rows(&x, &picks);

    let explanations: Vec<ShapExplanation> = (0..x.nrows())
        .map(|i| shapley_exact(&model, x.row(i), &background))
        .collect::<Result<_>>()
        .map_err(|e| match e {
            Error::FeatureBudget { .. } => {
                fail(2, format!("{e}; drop feature columns or train on fewer"))
            }
            other => lib(other),
        })?;

    write_file(&a.out, &explanations_to_csv(&explanations, &x).map_err(lib)?)?;

    let global_csv = match &a.group_by {
        None => {
            let g = global_importance(&explanations).map_err(lib)?;
            let mut out = String::from("rank,feature,mean_abs_shap\n");
            for e in &g.entries {
                use std::fmt::Write as _;
                let _ = writeln!(out, "{},{},{}", e.rank, e.feature, e.mean_abs_shap);
            }
            out
        }
        Some(col) => {
            let j = table.column_index(col).map_err(|e| fail(2, format!("group-by: {e}")))?;
            let mut by_group: BTreeMap<String, Vec<ShapExplanation>> = BTreeMap::new();
            for (i, e) in explanations.iter().enumerate() {
                by_group
                    .entry(table.cell_text(i, j, "(missing)"))
                    .or_default()
                    .push(e.clone());
            }
            let mut out = String::from("group,rank,feature,mean_abs_shap\n");
            for (group, members) in &by_group {
                let g = global_importance(members).map_err(lib)?;
                for e in &g.entries {
                    use std::fmt::Write as _;
                    let _ = writeln!(out, "{},{},{},{}", group, e.rank, e.feature, e.mean_abs_shap);
                }
            }
            out
        }
    };
    write_file(&a.global, &global_csv)?;

    let mut inputs: Vec<&Path> = vec![&a.data, &a.schema];
    let model_path = PathBuf::from(&a.model);
    if !trained {
        inputs.push(&model_path);
    }
    let gbt_path = a.gbt.clone();
    if let Some(p) = &gbt_path {
        if trained {
            inputs.push(p);
        }
    }
    write_manifest(
        &a.manifest,
        argv,
        serde_json::json!({
            "model": a.model,
            "gbt": if trained { Some(model_gbt_snapshot(&model)) } else { None },
            "background": cap,
            "group_by": a.group_by,
            "missing_token": a.missing_token,
        }),
        seed,
        &inputs,
        &[&a.out, &a.global],
    )?;

    println!(
        "explained {} instances over {} features (background {})",
        x.nrows(),
        names.len(),
        cap
    );
    Ok(())
}

fn model_gbt_snapshot(model: &GbtModel) -> serde_json::Value {
    serde_json::to_value(&model.params).expect("params serialization cannot fail")
}

fn bench_rows(x: &ndarray::Array2<f64>, rows: &[usize]) -> ndarray::Array2<f64> {
    ndarray::Array2::from_shape_fn((rows.len(), x.ncols()), |(i, j)| x[[rows[i], j]])
}

// --- assoc ---

fn cmd_assoc(a: &AssocArgs, argv: &[String]) -> CliResult {
    let table = load_table(&a.data, &a.schema, &a.missing_token)?;
    let report = assoc::association_report(&table, &a.anchor)
        .map_err(|e| fail(2, format!("anchor: {e}")))?;
    write_file(&a.out, &assoc::report_to_csv(&report))?;
    write_manifest(
        &a.manifest,
        argv,
        serde_json::json!({
            "anchor": a.anchor,
            "missing_token": a.missing_token,
        }),
        0,
        &[&a.data, &a.schema],
        &[&a.out],
    )?;
    println!("scored {} columns against {:?}", report.rows.len(), a.anchor);
    if let Some(top) = report.rows.first() {
        println!(
            "strongest: {} ({} = {})",
            top.other_column,
            top.kind.as_str(),
            top.value
        );
    }
    Ok(())
}

// --- replay ---

fn cmd_replay(a: &ReplayArgs) -> CliResult {
    let text = fs::read_to_string(&a.manifest)
        .map_err(|e| fail(2, format!("manifest {}: {e}", a.manifest.display())))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| fail(2, format!("manifest: {e}")))?;
    if manifest.command.first().map(String::as_str) == Some("replay") {
        return Err(fail(1, "cannot replay a replay run"));
    }
    for (path, want) in &manifest.input_hashes {
        let got = sha256_hex(Path::new(path)).map_err(lib)?;
        if got != *want {
            return Err(fail(
                2,
                format!("input {path} changed since the recorded run"),
            ));
        }
    }
    let cli = Cli::try_parse_from(
        std::iter::once("mixtab".to_string()).chain(manifest.command.iter().cloned()),
    )
    .map_err(|e| fail(1, format!("manifest command: {e}")))?;
    dispatch(&cli.command, &manifest.command)
}
