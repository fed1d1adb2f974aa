//! Mixed-type tables: schema, CSV ingestion, and the encode/decode
//! transforms between labelled cells and a dense numeric matrix.
//!
//! Continuous columns are z-scored over their observed entries (sample
//! standard deviation, n-1 denominator); categorical columns become one-hot
//! blocks. Missing cells encode to 0.0 with a false mask, which in z-scored
//! space equals the column mean — the imputation loop's warm start.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Value domain of a column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    /// Ordered list of distinct level labels, fixed at schema load.
    Categorical(Vec<String>),
}

impl ColumnKind {
    pub fn is_continuous(&self) -> bool {
        matches!(self, ColumnKind::Continuous)
    }

    /// Number of encoded columns this kind occupies.
    pub fn encoded_width(&self) -> usize {
        match self {
            ColumnKind::Continuous => 1,
            ColumnKind::Categorical(levels) => levels.len(),
        }
    }
}

/// How a column participates in modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    #[default]
    Feature,
    Target,
    GroupKey,
}

/// One column's declaration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default)]
    pub role: ColumnRole,
}

/// A single table cell. Categorical cells store the index into the column's
/// level list; labels are resolved through the schema.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Missing,
    Number(f64),
    Level(usize),
}

impl Cell {
    pub fn is_missing(&self) -> bool {
        matches!(self, Cell::Missing)
    }
}

/// Rectangular grid of cells under a validated schema.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedTable {
    pub schema: Vec<ColumnSchema>,
    pub rows: Vec<Vec<Cell>>,
}

impl MixedTable {
    /// Build a table, checking rectangularity and cell/kind agreement.
    pub fn new(schema: Vec<ColumnSchema>, rows: Vec<Vec<Cell>>) -> Result<Self> {
        validate_schema(&schema)?;
        for (i, row) in rows.iter().enumerate() {
            if row.len() != schema.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} cells, schema has {} columns",
                    row.len(),
                    schema.len()
                )));
            }
            for (cell, col) in row.iter().zip(&schema) {
                match (cell, &col.kind) {
                    (Cell::Missing, _) => {}
                    (Cell::Number(x), ColumnKind::Continuous) => {
                        if !x.is_finite() {
                            return Err(Error::Schema(format!(
                                "non-finite value in column '{}' row {i}",
                                col.name
                            )));
                        }
                    }
                    (Cell::Level(l), ColumnKind::Categorical(levels)) => {
                        if *l >= levels.len() {
                            return Err(Error::Schema(format!(
                                "level index {l} out of range for column '{}'",
                                col.name
                            )));
                        }
                    }
                    _ => {
                        return Err(Error::Schema(format!(
                            "cell type does not match kind of column '{}' in row {i}",
                            col.name
                        )));
                    }
                }
            }
        }
        Ok(MixedTable { schema, rows })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.schema.len()
    }

    /// Index of the unique column with the given role, if declared.
    pub fn role_index(&self, role: ColumnRole) -> Option<usize> {
        self.schema.iter().position(|c| c.role == role)
    }

    /// Index of a column by name.
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    }

    pub fn missing_count(&self) -> usize {
        self.rows
            .iter()
            .map(|r| r.iter().filter(|c| c.is_missing()).count())
            .sum()
    }

    /// Label text for a cell, for display and CSV output.
    pub fn cell_text(&self, row: usize, col: usize, missing_token: &str) -> String {
        match &self.rows[row][col] {
            Cell::Missing => missing_token.to_string(),
            Cell::Number(x) => format!("{x}"),
            Cell::Level(l) => match &self.schema[col].kind {
                ColumnKind::Categorical(levels) => levels[*l].clone(),
                ColumnKind::Continuous => unreachable!("level cell in continuous column"),
            },
        }
    }

    /// Table with the given columns removed, preserving order of the rest.
    pub fn without_columns(&self, drop: &[usize]) -> MixedTable {
        let keep: Vec<usize> = (0..self.n_cols()).filter(|j| !drop.contains(j)).collect();
        MixedTable {
            schema: keep.iter().map(|&j| self.schema[j].clone()).collect(),
            rows: self
                .rows
                .iter()
                .map(|r| keep.iter().map(|&j| r[j]).collect())
                .collect(),
        }
    }
}

/// Maps one table column to its contiguous range of encoded columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    /// Index of the source column in the encoded table's schema.
    pub column: usize,
    /// First encoded column of the block.
    pub start: usize,
    /// 1 for continuous, level count for categorical.
    pub width: usize,
}

/// Dense numeric view of a table: z-scored continuous columns, one-hot
/// categorical blocks, and an observedness mask.
#[derive(Debug, Clone)]
pub struct EncodedMatrix {
    pub values: Array2<f64>,
    /// true = observed; false entries are the imputation targets.
    pub mask: Array2<bool>,
    pub blocks: Vec<Block>,
    /// Per block: (mean, std) for continuous columns, None for categorical.
    pub norm_stats: Vec<Option<(f64, f64)>>,
}

fn validate_schema(schema: &[ColumnSchema]) -> Result<()> {
    if schema.is_empty() {
        return Err(Error::Schema("schema declares no columns".into()));
    }
    let mut names = HashSet::new();
    let mut targets = 0usize;
    let mut group_keys = 0usize;
    for col in schema {
        if !names.insert(col.name.as_str()) {
            return Err(Error::Schema(format!("duplicate column name '{}'", col.name)));
        }
        if let ColumnKind::Categorical(levels) = &col.kind {
            if levels.is_empty() {
                return Err(Error::Schema(format!(
                    "column '{}' has an empty level list",
                    col.name
                )));
            }
            let mut seen = HashSet::new();
            for l in levels {
                if !seen.insert(l.as_str()) {
                    return Err(Error::Schema(format!(
                        "column '{}' has duplicate level '{l}'",
                        col.name
                    )));
                }
            }
        }
        match col.role {
            ColumnRole::Target => targets += 1,
            ColumnRole::GroupKey => group_keys += 1,
            ColumnRole::Feature => {}
        }
    }
    if targets > 1 {
        return Err(Error::Schema("more than one column has role 'target'".into()));
    }
    if group_keys > 1 {
        return Err(Error::Schema(
            "more than one column has role 'group_key'".into(),
        ));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct SchemaFile {
    columns: Vec<ColumnSchema>,
}

/// Load and validate a schema from its JSON file format.
pub fn load_schema(path: &Path) -> Result<Vec<ColumnSchema>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_schema(&text)
}

/// Parse the schema JSON format from a string.
pub fn parse_schema(text: &str) -> Result<Vec<ColumnSchema>> {
    let file: SchemaFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("schema JSON: {e}")))?;
    validate_schema(&file.columns)?;
    Ok(file.columns)
}

/// Serialize a schema back to its JSON file format.
pub fn schema_to_json(schema: &[ColumnSchema]) -> String {
    serde_json::to_string_pretty(&SchemaFile {
        columns: schema.to_vec(),
    })
    .expect("schema serialization cannot fail")
}

/// Read a CSV file against a schema. The header must contain exactly the
/// schema's column names (any order); cells equal to `missing_token` become
/// Missing.
pub fn load_csv(path: &Path, schema: &[ColumnSchema], missing_token: &str) -> Result<MixedTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, schema, missing_token)
}

/// Parse CSV text against a schema; see [`load_csv`].
pub fn parse_csv(text: &str, schema: &[ColumnSchema], missing_token: &str) -> Result<MixedTable> {
    validate_schema(schema)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse(format!("CSV header: {e}")))?
        .clone();
    if headers.len() != schema.len() {
        return Err(Error::HeaderMismatch(format!(
            "header has {} columns, schema has {}",
            headers.len(),
            schema.len()
        )));
    }
    // Column j of the file feeds schema column file_to_schema[j].
    let mut file_to_schema = Vec::with_capacity(headers.len());
    let mut used = vec![false; schema.len()];
    for name in headers.iter() {
        match schema.iter().position(|c| c.name == name) {
            Some(idx) if !used[idx] => {
                used[idx] = true;
                file_to_schema.push(idx);
            }
            Some(_) => {
                return Err(Error::HeaderMismatch(format!("duplicate header column '{name}'")))
            }
            None => {
                return Err(Error::HeaderMismatch(format!(
                    "header column '{name}' is not in the schema"
                )))
            }
        }
    }

    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("CSV row {}: {e}", line + 1)))?;
        let mut row = vec![Cell::Missing; schema.len()];
        for (j, field) in record.iter().enumerate() {
            let sj = file_to_schema[j];
            let col = &schema[sj];
            row[sj] = if field == missing_token {
                Cell::Missing
            } else {
                match &col.kind {
                    ColumnKind::Continuous => {
                        let x: f64 = field.parse().map_err(|_| {
                            Error::Parse(format!(
                                "row {}, column '{}': '{field}' is not a number",
                                line + 1,
                                col.name
                            ))
                        })?;
                        if !x.is_finite() {
                            return Err(Error::Parse(format!(
                                "row {}, column '{}': non-finite value '{field}'",
                                line + 1,
                                col.name
                            )));
                        }
                        Cell::Number(x)
                    }
                    ColumnKind::Categorical(levels) => {
                        match levels.iter().position(|l| l == field) {
                            Some(idx) => Cell::Level(idx),
                            None => {
                                return Err(Error::UnknownLevel {
                                    column: col.name.clone(),
                                    level: field.to_string(),
                                })
                            }
                        }
                    }
                }
            };
        }
        rows.push(row);
    }
    MixedTable::new(schema.to_vec(), rows)
}

/// Render a table as CSV text in schema column order.
pub fn to_csv_string(table: &MixedTable, missing_token: &str) -> String {
    let mut out = String::new();
    let names: Vec<&str> = table.schema.iter().map(|c| c.name.as_str()).collect();
    writeln_csv_row(&mut out, names.iter().map(|s| s.to_string()));
    for i in 0..table.n_rows() {
        let cells = (0..table.n_cols()).map(|j| table.cell_text(i, j, missing_token));
        writeln_csv_row(&mut out, cells);
    }
    out
}

/// Write a table to a CSV file; see [`to_csv_string`].
pub fn write_csv(table: &MixedTable, path: &Path, missing_token: &str) -> Result<()> {
    std::fs::write(path, to_csv_string(table, missing_token)).map_err(|e| Error::io(path, e))
}

fn writeln_csv_row(out: &mut String, fields: impl Iterator<Item = String>) {
    let mut first = true;
    for field in fields {
        if !first {
            out.push(',');
        }
        first = false;
        if field.contains([',', '"', '\n', '\r']) {
            let _ = write!(out, "\"{}\"", field.replace('"', "\"\""));
        } else {
            out.push_str(&field);
        }
    }
    out.push('\n');
}

/// Encode a table as a dense matrix with an observedness mask.
///
/// Continuous columns are z-scored over observed entries (sample std; a
/// zero-variance or single-observation column keeps std = 1.0 so its encoding
/// is the constant 0). Categorical columns become one-hot blocks. Missing
/// cells encode to 0.0 with mask false.
pub fn encode(table: &MixedTable) -> Result<EncodedMatrix> {
    let n = table.n_rows();
    let mut blocks = Vec::with_capacity(table.n_cols());
    let mut norm_stats = Vec::with_capacity(table.n_cols());
    let mut start = 0usize;
    for (j, col) in table.schema.iter().enumerate() {
        let observed = table.rows.iter().filter(|r| !r[j].is_missing()).count();
        if observed == 0 {
            return Err(Error::DegenerateColumn(col.name.clone()));
        }
        let width = col.kind.encoded_width();
        blocks.push(Block { column: j, start, width });
        start += width;
        norm_stats.push(match &col.kind {
            ColumnKind::Continuous => {
                let xs: Vec<f64> = table
                    .rows
                    .iter()
                    .filter_map(|r| match r[j] {
                        Cell::Number(x) => Some(x),
                        _ => None,
                    })
                    .collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                let std = if xs.len() < 2 {
                    1.0
                } else {
                    let var =
                        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
                    if var == 0.0 {
                        1.0
                    } else {
                        var.sqrt()
                    }
                };
                Some((mean, std))
            }
            ColumnKind::Categorical(_) => None,
        });
    }
    let d = start;

    let mut values = Array2::zeros((n, d));
    let mut mask = Array2::from_elem((n, d), false);
    for (block, stats) in blocks.iter().zip(&norm_stats) {
        for i in 0..n {
            match table.rows[i][block.column] {
                Cell::Missing => {} // 0.0, mask false for the whole block
                Cell::Number(x) => {
                    let (mean, std) = stats.expect("continuous block has stats");
                    values[[i, block.start]] = (x - mean) / std;
                    mask[[i, block.start]] = true;
                }
                Cell::Level(l) => {
                    for w in 0..block.width {
                        values[[i, block.start + w]] = if w == l { 1.0 } else { 0.0 };
                        mask[[i, block.start + w]] = true;
                    }
                }
            }
        }
    }
    Ok(EncodedMatrix {
        values,
        mask,
        blocks,
        norm_stats,
    })
}

/// Invert [`encode`]: observed cells are copied verbatim from `original`;
/// missing continuous cells de-normalize through the stored (mean, std);
/// missing categorical cells take the block's argmax level, ties to the
/// lowest level index.
pub fn decode(matrix: &EncodedMatrix, original: &MixedTable) -> Result<MixedTable> {
    let n = original.n_rows();
    let width: usize = original.schema.iter().map(|c| c.kind.encoded_width()).sum();
    if matrix.values.dim() != (n, width) || matrix.blocks.len() != original.n_cols() {
        return Err(Error::ShapeMismatch(format!(
            "encoded matrix is {:?} with {} blocks; table needs ({n}, {width}) with {} blocks",
            matrix.values.dim(),
            matrix.blocks.len(),
            original.n_cols()
        )));
    }
    for (block, col) in matrix.blocks.iter().zip(&original.schema) {
        if block.width != col.kind.encoded_width() {
            return Err(Error::ShapeMismatch(format!(
                "block width {} does not match column '{}'",
                block.width, col.name
            )));
        }
    }

    let mut rows = original.rows.clone();
    for (block, stats) in matrix.blocks.iter().zip(&matrix.norm_stats) {
        let j = block.column;
        for (i, row) in rows.iter_mut().enumerate() {
            if !row[j].is_missing() {
                continue; // observed cells pass through untouched
            }
            row[j] = match &original.schema[j].kind {
                ColumnKind::Continuous => {
                    let (mean, std) = stats.ok_or_else(|| {
                        Error::ShapeMismatch(format!(
                            "missing norm stats for continuous column '{}'",
                            original.schema[j].name
                        ))
                    })?;
                    Cell::Number(matrix.values[[i, block.start]] * std + mean)
                }
                ColumnKind::Categorical(_) => {
                    let mut arg = 0usize;
                    for w in 1..block.width {
                        if matrix.values[[i, block.start + w]] > matrix.values[[i, block.start + arg]]
                        {
                            arg = w;
                        }
                    }
                    Cell::Level(arg)
                }
            };
        }
    }
    MixedTable::new(original.schema.clone(), rows)
}
