//! Bivariate association statistics: Pearson correlation for numeric pairs,
//! chi-square independence tests and Cramér's V for categorical pairs, and a
//! whole-table report ranking every column's association with one anchor
//! column. All pair statistics are complete-case: rows missing either value
//! drop out before anything is computed.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tabular::{Cell, ColumnKind, MixedTable};

/// Cross-tabulation of two categorical variables.
#[derive(Debug, Clone, PartialEq)]
pub struct ContingencyTable {
    pub row_levels: Vec<String>,
    pub col_levels: Vec<String>,
    /// counts[[i, j]] = number of complete pairs at (row level i, col level j).
    pub counts: Array2<u64>,
    /// Total count; always the sum of `counts`.
    pub n: u64,
}

impl ContingencyTable {
    pub fn new(
        row_levels: Vec<String>,
        col_levels: Vec<String>,
        counts: Array2<u64>,
    ) -> Result<Self> {
        if counts.dim() != (row_levels.len(), col_levels.len()) {
            return Err(Error::ShapeMismatch(format!(
                "counts are {:?} but there are {} row and {} col levels",
                counts.dim(),
                row_levels.len(),
                col_levels.len()
            )));
        }
        let n = counts.iter().sum();
        Ok(ContingencyTable { row_levels, col_levels, counts, n })
    }
}

/// Chi-square test of independence on a contingency table.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
    /// True when the exact tail mass is below 1e-300 and `p_value` was
    /// reported as 0.
    pub underflow: bool,
}

/// Which statistic a report row carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatKind {
    PearsonR,
    CramersV,
}

impl StatKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            StatKind::PearsonR => "pearson_r",
            StatKind::CramersV => "cramers_v",
        }
    }
}

/// One anchor-vs-other-column association.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationRow {
    pub other_column: String,
    pub kind: StatKind,
    pub value: f64,
    pub chi_sq: Option<f64>,
    pub dof: Option<usize>,
    pub p_value: Option<f64>,
    /// True when a categorical side was coded by level index to allow a
    /// correlation against a continuous side.
    pub ordinal_coded: bool,
}

/// All pairwise associations against one anchor column, strongest first.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationReport {
    pub anchor: String,
    pub rows: Vec<AssociationRow>,
}

/// Product-moment correlation of two paired samples. Pairs where either
/// value is NaN (the missing marker) are dropped first.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Length(format!(
            "pearson inputs have lengths {} and {}",
            x.len(),
            y.len()
        )));
    }
    let pairs: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| !a.is_nan() && !b.is_nan())
        .map(|(&a, &b)| (a, b))
        .collect();
    if pairs.len() < 2 {
        return Err(Error::Length(format!(
            "pearson needs at least 2 complete pairs, got {}",
            pairs.len()
        )));
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &(a, b) in &pairs {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("pearson input has zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Cross-tabulate two level-index vectors. `None` marks a missing value;
/// incomplete pairs are dropped. The table keeps only levels that survive
/// filtering, in their original level-list order.
pub fn crosstab(
    a: &[Option<usize>],
    b: &[Option<usize>],
    a_levels: &[String],
    b_levels: &[String],
) -> Result<ContingencyTable> {
    if a.len() != b.len() {
        return Err(Error::Length(format!(
            "crosstab inputs have lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let mut full = Array2::<u64>::zeros((a_levels.len(), b_levels.len()));
    for (va, vb) in a.iter().zip(b) {
        if let (Some(i), Some(j)) = (va, vb) {
            if *i >= a_levels.len() || *j >= b_levels.len() {
                return Err(Error::Schema(format!(
                    "level index ({i}, {j}) out of range for a {}x{} level grid",
                    a_levels.len(),
                    b_levels.len()
                )));
            }
            full[[*i, *j]] += 1;
        }
    }
    let live_rows: Vec<usize> = (0..a_levels.len())
        .filter(|&i| full.row(i).iter().any(|&c| c > 0))
        .collect();
    let live_cols: Vec<usize> = (0..b_levels.len())
        .filter(|&j| full.column(j).iter().any(|&c| c > 0))
        .collect();
    if live_rows.len() < 2 || live_cols.len() < 2 {
        return Err(Error::Degenerate(format!(
            "crosstab needs at least 2 surviving levels per side, got {}x{}",
            live_rows.len(),
            live_cols.len()
        )));
    }
    let counts = Array2::from_shape_fn((live_rows.len(), live_cols.len()), |(i, j)| {
        full[[live_rows[i], live_cols[j]]]
    });
    ContingencyTable::new(
        live_rows.iter().map(|&i| a_levels[i].clone()).collect(),
        live_cols.iter().map(|&j| b_levels[j].clone()).collect(),
        counts,
    )
}

/// Pearson chi-square test of independence with exact upper-tail p-value.
pub fn chi_square(t: &ContingencyTable) -> Result<ChiSquareTest> {
    let (r, c) = t.counts.dim();
    if r < 2 || c < 2 {
        return Err(Error::Degenerate(format!(
            "chi-square needs a table of at least 2x2, got {r}x{c}"
        )));
    }
    let total: u64 = t.counts.iter().sum();
    if total != t.n {
        return Err(Error::ShapeMismatch(format!(
            "table claims n = {} but counts sum to {total}",
            t.n
        )));
    }
    let row_sums: Vec<u64> = (0..r).map(|i| t.counts.row(i).iter().sum()).collect();
    let col_sums: Vec<u64> = (0..c).map(|j| t.counts.column(j).iter().sum()).collect();
    if row_sums.iter().chain(&col_sums).any(|&s| s == 0) {
        return Err(Error::Degenerate("chi-square table has a zero marginal".into()));
    }
    let n = total as f64;
    let mut statistic = 0.0;
    for i in 0..r {
        for j in 0..c {
            let expected = row_sums[i] as f64 * col_sums[j] as f64 / n;
            let diff = t.counts[[i, j]] as f64 - expected;
            statistic += diff * diff / expected;
        }
    }
    let dof = (r - 1) * (c - 1);
    let (p_value, underflow) = chi_square_tail(statistic, dof)?;
    Ok(ChiSquareTest { statistic, dof, p_value, underflow })
}

/// Upper-tail probability of the chi-square distribution: P(X >= statistic)
/// with `dof` degrees of freedom. The flag reports underflow to exact 0.
pub fn chi_square_tail(statistic: f64, dof: usize) -> Result<(f64, bool)> {
    if dof == 0 || !statistic.is_finite() || statistic < 0.0 {
        return Err(Error::Config(format!(
            "chi-square tail needs dof >= 1 and a finite non-negative statistic, got dof {dof}, statistic {statistic}"
        )));
    }
    reg_gamma_q(dof as f64 / 2.0, statistic / 2.0)
}

/// Cramér's V: chi-square normalized into [0, 1].
///
/// Perfect association — every row, or every column, concentrated in a
/// single cell — yields exactly 1.0; the chi-square route would land within
/// rounding of it, but the equality case is structural, so it is detected
/// directly.
pub fn cramers_v(t: &ContingencyTable) -> Result<f64> {
    let test = chi_square(t)?;
    let (r, c) = t.counts.dim();
    let rows_single = (0..r).all(|i| (0..c).filter(|&j| t.counts[[i, j]] > 0).count() == 1);
    let cols_single = (0..c).all(|j| (0..r).filter(|&i| t.counts[[i, j]] > 0).count() == 1);
    if rows_single || cols_single {
        return Ok(1.0);
    }
    let k = r.min(c) - 1;
    Ok((test.statistic / (t.n as f64 * k as f64)).sqrt().clamp(0.0, 1.0))
}

const GAMMA_MAX_ITER: usize = 500;
const GAMMA_TOL: f64 = 1e-12;
/// Tail masses below this are reported as exactly 0 with an underflow flag.
const P_UNDERFLOW: f64 = 1e-300;

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-15 for x > 0.
fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    let pi = std::f64::consts::PI;
    if x < 0.5 {
        // Reflection onto the stable half-line.
        pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, &c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * pi).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// Regularized upper incomplete gamma Q(a, x) for a > 0, x >= 0, to 1e-12
/// relative: power series on x < a + 1, Lentz continued fraction otherwise.
/// Returns (value, underflow).
fn reg_gamma_q(a: f64, x: f64) -> Result<(f64, bool)> {
    if x == 0.0 {
        return Ok((1.0, false));
    }
    let prefactor = (a * x.ln() - x - ln_gamma(a)).exp();
    if x < a + 1.0 {
        // Series for the lower tail P(a, x); Q = 1 - P.
        let mut denom = a;
        let mut term = 1.0 / a;
        let mut sum = term;
        for _ in 0..GAMMA_MAX_ITER {
            denom += 1.0;
            term *= x / denom;
            sum += term;
            if term.abs() < sum.abs() * GAMMA_TOL {
                return Ok(finish_q(1.0 - prefactor * sum));
            }
        }
        Err(Error::Convergence { sweeps: GAMMA_MAX_ITER })
    } else {
        // Lentz-style continued fraction evaluates Q directly.
        const FPMIN: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / FPMIN;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=GAMMA_MAX_ITER {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < FPMIN {
                d = FPMIN;
            }
            c = b + an / c;
            if c.abs() < FPMIN {
                c = FPMIN;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < GAMMA_TOL {
                return Ok(finish_q(prefactor * h));
            }
        }
        Err(Error::Convergence { sweeps: GAMMA_MAX_ITER })
    }
}

fn finish_q(q: f64) -> (f64, bool) {
    if q < P_UNDERFLOW {
        (0.0, true)
    } else {
        (q.clamp(0.0, 1.0), false)
    }
}

/// Associate every other column with `anchor`, picking the statistic by type
/// pairing: Pearson for two continuous columns, Cramér's V plus chi-square
/// for two categorical ones, and ordinal-coded Pearson for mixed pairs.
/// Pairs too degenerate to score (constant, or too few complete cases) are
/// omitted. Rows come back sorted by |value| descending.
pub fn association_report(table: &MixedTable, anchor: &str) -> Result<AssociationReport> {
    let ai = table.column_index(anchor)?;
    let others: Vec<usize> = (0..table.n_cols()).filter(|&j| j != ai).collect();
    let mut rows: Vec<AssociationRow> = others
        .par_iter()
        .map(|&j| pair_stat(table, ai, j))
        .collect::<Vec<Option<AssociationRow>>>()
        .into_iter()
        .flatten()
        .collect();
    rows.sort_by(|a, b| {
        b.value
            .abs()
            .partial_cmp(&a.value.abs())
            .unwrap()
            .then_with(|| a.other_column.cmp(&b.other_column))
    });
    Ok(AssociationReport { anchor: anchor.to_string(), rows })
}

/// Numeric view of a column: values as-is, level indices as ordinal codes,
/// NaN for missing.
fn numeric_column(table: &MixedTable, j: usize) -> Vec<f64> {
    table
        .rows
        .iter()
        .map(|row| match row[j] {
            Cell::Number(v) => v,
            Cell::Level(i) => i as f64,
            Cell::Missing => f64::NAN,
        })
        .collect()
}

fn level_column(table: &MixedTable, j: usize) -> Vec<Option<usize>> {
    table
        .rows
        .iter()
        .map(|row| match row[j] {
            Cell::Level(i) => Some(i),
            _ => None,
        })
        .collect()
}

fn pair_stat(table: &MixedTable, ai: usize, j: usize) -> Option<AssociationRow> {
    let name = table.schema[j].name.clone();
    let a_kind = &table.schema[ai].kind;
    let b_kind = &table.schema[j].kind;
    match (a_kind, b_kind) {
        (ColumnKind::Categorical(la), ColumnKind::Categorical(lb)) => {
            let t = crosstab(&level_column(table, ai), &level_column(table, j), la, lb).ok()?;
            let test = chi_square(&t).ok()?;
            let v = cramers_v(&t).ok()?;
            Some(AssociationRow {
                other_column: name,
                kind: StatKind::CramersV,
                value: v,
                chi_sq: Some(test.statistic),
                dof: Some(test.dof),
                p_value: Some(test.p_value),
                ordinal_coded: false,
            })
        }
        (a, b) => {
            let r = pearson(&numeric_column(table, ai), &numeric_column(table, j)).ok()?;
            Some(AssociationRow {
                other_column: name,
                kind: StatKind::PearsonR,
                value: r,
                chi_sq: None,
                dof: None,
                p_value: None,
                ordinal_coded: !a.is_continuous() || !b.is_continuous(),
            })
        }
    }
}

/// Render a report as CSV. Absent test fields are left empty.
pub fn report_to_csv(report: &AssociationReport) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("other_column,statistic_kind,value,chi_sq,dof,p_value,ordinal_coded\n");
    for row in &report.rows {
        let opt_f = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_u = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.other_column,
            row.kind.as_str(),
            row.value,
            opt_f(row.chi_sq),
            opt_u(row.dof),
            opt_f(row.p_value),
            row.ordinal_coded
        );
    }
    out
}
