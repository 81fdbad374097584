//! Columnar inventory dataset: schema, CSV loading, train/test splitting,
//! and a synthetic generator for desk-scale experiments.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How a column is interpreted during loading and modelling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    /// Categorical yes/no flag, encoded as 1/0.
    YesNo,
    /// The binary outcome column (1 = went on backorder).
    Target,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl ColumnSchema {
    pub fn new(name: &str, kind: ColumnKind, unit: Option<&str>) -> Self {
        ColumnSchema {
            name: name.to_string(),
            kind,
            unit: unit.map(str::to_string),
        }
    }
}

/// Columns whose -99.0 entries are sentinel values for "missing".
const SENTINEL_COLUMNS: [&str; 2] = ["perf6MonthAvg", "perf12MonthAvg"];
const MISSING_SENTINEL: f64 = -99.0;

/// The inventory dataset schema: 15 numeric attributes, 6 yes/no risk flags,
/// and the backorder outcome. An `sku` identifier column, if present in a
/// CSV, is dropped at load time.
pub fn inventory_schema() -> Vec<ColumnSchema> {
    use ColumnKind::*;
    vec![
        ColumnSchema::new("nationalInv", Numeric, Some("unit")),
        ColumnSchema::new("leadTime", Numeric, Some("weeks")),
        ColumnSchema::new("inTransitQty", Numeric, Some("unit")),
        ColumnSchema::new("forecast3Month", Numeric, Some("unit")),
        ColumnSchema::new("forecast6Month", Numeric, Some("unit")),
        ColumnSchema::new("forecast9Month", Numeric, Some("unit")),
        ColumnSchema::new("sales1Month", Numeric, Some("unit")),
        ColumnSchema::new("sales3Month", Numeric, Some("unit")),
        ColumnSchema::new("sales6Month", Numeric, Some("unit")),
        ColumnSchema::new("sales9Month", Numeric, Some("unit")),
        ColumnSchema::new("minBank", Numeric, Some("unit")),
        ColumnSchema::new("potentialIssue", YesNo, None),
        ColumnSchema::new("piecesPastDue", Numeric, Some("unit")),
        ColumnSchema::new("perf6MonthAvg", Numeric, None),
        ColumnSchema::new("perf12MonthAvg", Numeric, None),
        ColumnSchema::new("localBoQty", Numeric, Some("unit")),
        ColumnSchema::new("deckRisk", YesNo, None),
        ColumnSchema::new("oeConstraint", YesNo, None),
        ColumnSchema::new("ppapRisk", YesNo, None),
        ColumnSchema::new("stopAutoBuy", YesNo, None),
        ColumnSchema::new("revStop", YesNo, None),
        ColumnSchema::new("wentOnBackorder", ColumnKind::Target, None),
    ]
}

/// Immutable columnar table with a per-cell missing mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub schema: Vec<ColumnSchema>,
    /// Column-major values; missing cells hold 0.0 and are masked.
    columns: Vec<Vec<f64>>,
    missing: Vec<Vec<bool>>,
    row_count: usize,
}

impl DataTable {
    pub fn new(
        schema: Vec<ColumnSchema>,
        columns: Vec<Vec<f64>>,
        missing: Vec<Vec<bool>>,
    ) -> Result<Self> {
        let row_count = columns.first().map_or(0, Vec::len);
        let table = DataTable {
            schema,
            columns,
            missing,
            row_count,
        };
        table.validate()?;
        Ok(table)
    }

    fn validate(&self) -> Result<()> {
        let mut names: Vec<&str> = self.schema.iter().map(|c| c.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.schema.len() {
            return Err(Error::Schema("duplicate column names".into()));
        }
        let n_targets = self
            .schema
            .iter()
            .filter(|c| c.kind == ColumnKind::Target)
            .count();
        if n_targets != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one target column, found {n_targets}"
            )));
        }
        if self.columns.len() != self.schema.len() || self.missing.len() != self.schema.len() {
            return Err(Error::Schema("column count does not match schema".into()));
        }
        for (j, col) in self.columns.iter().enumerate() {
            if col.len() != self.row_count || self.missing[j].len() != self.row_count {
                return Err(Error::Schema(format!(
                    "column {} has length {}, expected {}",
                    self.schema[j].name,
                    col.len(),
                    self.row_count
                )));
            }
            match self.schema[j].kind {
                ColumnKind::Target => {
                    for (i, (&v, &m)) in col.iter().zip(&self.missing[j]).enumerate() {
                        if m {
                            return Err(Error::MissingValue {
                                column: self.schema[j].name.clone(),
                                row: i,
                            });
                        }
                        if v != 0.0 && v != 1.0 {
                            return Err(Error::Schema(format!(
                                "target value {v} at row {i} is not 0/1"
                            )));
                        }
                    }
                }
                ColumnKind::YesNo => {
                    for (i, (&v, &m)) in col.iter().zip(&self.missing[j]).enumerate() {
                        if !m && v != 0.0 && v != 1.0 {
                            return Err(Error::Schema(format!(
                                "yes/no column {} holds {v} at row {i}",
                                self.schema[j].name
                            )));
                        }
                    }
                }
                ColumnKind::Numeric => {}
            }
        }
        Ok(())
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.schema
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    pub fn target_index(&self) -> usize {
        self.schema
            .iter()
            .position(|c| c.kind == ColumnKind::Target)
            .expect("validated: exactly one target")
    }

    pub fn numeric_indices(&self) -> Vec<usize> {
        (0..self.schema.len())
            .filter(|&j| self.schema[j].kind == ColumnKind::Numeric)
            .collect()
    }

    pub fn yes_no_indices(&self) -> Vec<usize> {
        (0..self.schema.len())
            .filter(|&j| self.schema[j].kind == ColumnKind::YesNo)
            .collect()
    }

    /// Raw column values; missing cells hold 0.0 (consult [`Self::is_missing`]).
    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[col][row]
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        if self.missing[col][row] {
            None
        } else {
            Some(self.columns[col][row])
        }
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|m| m.iter().any(|&b| b))
    }

    /// Observed (non-missing) values of a column, in row order.
    pub fn observed(&self, col: usize) -> Vec<f64> {
        self.columns[col]
            .iter()
            .zip(&self.missing[col])
            .filter(|(_, &m)| !m)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Observed values of a column restricted to a row subset.
    pub fn observed_in(&self, col: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .filter(|&&i| !self.missing[col][i])
            .map(|&i| self.columns[col][i])
            .collect()
    }

    /// Target labels as 0/1.
    pub fn labels(&self) -> Vec<u8> {
        let t = self.target_index();
        self.columns[t].iter().map(|&v| v as u8).collect()
    }

    /// A new table holding the given rows (in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> DataTable {
        let columns = self
            .columns
            .iter()
            .map(|col| rows.iter().map(|&i| col[i]).collect())
            .collect();
        let missing = self
            .missing
            .iter()
            .map(|m| rows.iter().map(|&i| m[i]).collect())
            .collect();
        DataTable {
            schema: self.schema.clone(),
            columns,
            missing,
            row_count: rows.len(),
        }
    }

    /// Replaces a column's values/mask. Internal helper for imputation and scaling.
    pub(crate) fn set_column(&mut self, j: usize, values: Vec<f64>, missing: Vec<bool>) {
        assert_eq!(values.len(), self.row_count);
        assert_eq!(missing.len(), self.row_count);
        self.columns[j] = values;
        self.missing[j] = missing;
    }

    pub(crate) fn set_cell(&mut self, row: usize, col: usize, value: f64) {
        self.columns[col][row] = value;
        self.missing[col][row] = false;
    }

    pub(crate) fn push_row(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.schema.len());
        for (j, &v) in values.iter().enumerate() {
            self.columns[j].push(v);
            self.missing[j].push(false);
        }
        self.row_count += 1;
    }

    /// All non-target columns as a dense feature matrix. Errors if any
    /// feature cell is missing (impute first).
    pub fn to_features(&self) -> Result<FeatureMatrix> {
        let target = self.target_index();
        let mut names = Vec::new();
        let mut columns = Vec::new();
        for j in 0..self.schema.len() {
            if j == target {
                continue;
            }
            if let Some(row) = self.missing[j].iter().position(|&m| m) {
                return Err(Error::MissingValue {
                    column: self.schema[j].name.clone(),
                    row,
                });
            }
            names.push(self.schema[j].name.clone());
            columns.push(self.columns[j].clone());
        }
        Ok(FeatureMatrix {
            names,
            columns,
            n_rows: self.row_count,
        })
    }
}

/// Dense column-major feature matrix used by every model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl FeatureMatrix {
    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n_rows) {
            return Err(Error::Argument("ragged feature columns".into()));
        }
        if names.len() != columns.len() {
            return Err(Error::DimensionMismatch {
                expected: columns.len(),
                actual: names.len(),
            });
        }
        Ok(FeatureMatrix {
            names,
            columns,
            n_rows,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.columns[col][row]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).collect())
                .collect(),
            n_rows: rows.len(),
        }
    }

    /// Returns a copy with one column's values replaced.
    pub fn with_column(&self, j: usize, values: Vec<f64>) -> FeatureMatrix {
        assert_eq!(values.len(), self.n_rows);
        let mut out = self.clone();
        out.columns[j] = values;
        out
    }

    /// Appends extra columns (e.g. latent encodings), returning a wider matrix.
    pub fn append_columns(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<FeatureMatrix> {
        if columns.iter().any(|c| c.len() != self.n_rows) {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                actual: columns.iter().map(Vec::len).find(|&l| l != self.n_rows).unwrap_or(0),
            });
        }
        let mut out = self.clone();
        out.names.extend(names);
        out.columns.extend(columns);
        Ok(out)
    }
}

/// Disjoint, exhaustive train/test row indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffle-splits rows into train/test with `fraction` of rows in train.
/// With `stratify`, class proportions in each partition stay within one row
/// of the global proportion.
pub fn split(table: &DataTable, fraction: f64, seed: u64, stratify: bool) -> Result<SplitIndices> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Argument(format!(
            "split fraction must lie in (0,1), got {fraction}"
        )));
    }
    let n = table.row_count();
    if n < 2 {
        return Err(Error::Argument(format!("need at least 2 rows, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train: Vec<usize>;
    let mut test: Vec<usize>;
    if stratify {
        let labels = table.labels();
        let mut groups: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, &y) in labels.iter().enumerate() {
            groups[y as usize].push(i);
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::Argument(
                "stratified split requires at least one row of each class".into(),
            ));
        }
        train = Vec::new();
        test = Vec::new();
        for group in &mut groups {
            group.shuffle(&mut rng);
            let k = ((fraction * group.len() as f64).round() as usize).min(group.len());
            train.extend_from_slice(&group[..k]);
            test.extend_from_slice(&group[k..]);
        }
        // Rounding within each class can empty a partition; move one row back.
        if test.is_empty() {
            test.push(train.pop().expect("n >= 2"));
        }
        if train.is_empty() {
            train.push(test.pop().expect("n >= 2"));
        }
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let k = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        train = order[..k].to_vec();
        test = order[k..].to_vec();
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test, seed })
}

/// Loads a CSV file against a schema. Header order is irrelevant; an `sku`
/// column is dropped; yes/no strings map to 1/0; blank cells and the -99.0
/// sentinel in the performance columns become missing.
pub fn load_csv(path: impl AsRef<Path>, schema: &[ColumnSchema]) -> Result<DataTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = reader.headers()?.clone();
    // header cell -> schema column, None for dropped sku
    let mut mapping: Vec<Option<usize>> = Vec::with_capacity(headers.len());
    let mut seen = vec![false; schema.len()];
    for h in headers.iter() {
        if h == "sku" {
            mapping.push(None);
            continue;
        }
        match schema.iter().position(|c| c.name == h) {
            Some(j) => {
                if seen[j] {
                    return Err(Error::Schema(format!("duplicate header column {h}")));
                }
                seen[j] = true;
                mapping.push(Some(j));
            }
            None => return Err(Error::Schema(format!("unknown column {h}"))),
        }
    }
    if let Some(j) = seen.iter().position(|&s| !s) {
        return Err(Error::Schema(format!(
            "header is missing column {}",
            schema[j].name
        )));
    }

    let sentinel_cols: Vec<bool> = schema
        .iter()
        .map(|c| SENTINEL_COLUMNS.contains(&c.name.as_str()))
        .collect();

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); schema.len()];
    let mut missing: Vec<Vec<bool>> = vec![Vec::new(); schema.len()];
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != mapping.len() {
            return Err(Error::Parse {
                row: row_idx,
                column: "<record>".into(),
                message: format!("expected {} fields, got {}", mapping.len(), record.len()),
            });
        }
        for (cell, target) in record.iter().zip(&mapping) {
            let Some(j) = *target else { continue };
            let col = &schema[j];
            let is_blank = cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell.eq_ignore_ascii_case("nan");
            let (value, is_missing) = match col.kind {
                ColumnKind::Numeric => {
                    if is_blank {
                        (0.0, true)
                    } else {
                        let v: f64 = cell.parse().map_err(|_| Error::Parse {
                            row: row_idx,
                            column: col.name.clone(),
                            message: format!("non-numeric cell {cell:?}"),
                        })?;
                        if sentinel_cols[j] && v == MISSING_SENTINEL {
                            (0.0, true)
                        } else {
                            (v, false)
                        }
                    }
                }
                ColumnKind::YesNo => {
                    if is_blank {
                        (0.0, true)
                    } else {
                        (parse_yes_no(cell, row_idx, &col.name)?, false)
                    }
                }
                ColumnKind::Target => {
                    if is_blank {
                        return Err(Error::Parse {
                            row: row_idx,
                            column: col.name.clone(),
                            message: "missing target value".into(),
                        });
                    }
                    (parse_yes_no(cell, row_idx, &col.name)?, false)
                }
            };
            columns[j].push(value);
            missing[j].push(is_missing);
        }
    }
    DataTable::new(schema.to_vec(), columns, missing)
}

fn parse_yes_no(cell: &str, row: usize, column: &str) -> Result<f64> {
    if cell.eq_ignore_ascii_case("yes") || cell == "1" {
        Ok(1.0)
    } else if cell.eq_ignore_ascii_case("no") || cell == "0" {
        Ok(0.0)
    } else {
        Err(Error::Parse {
            row,
            column: column.to_string(),
            message: format!("expected Yes/No, got {cell:?}"),
        })
    }
}

/// Writes a table back to CSV; reloading reproduces values, the missing
/// mask, and the 0/1 encoding exactly.
pub fn write_csv(table: &DataTable, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(file);
    let names: Vec<&str> = table.schema.iter().map(|c| c.name.as_str()).collect();
    writer.write_record(&names)?;
    let mut cell = String::new();
    for i in 0..table.row_count() {
        let mut record = Vec::with_capacity(table.schema.len());
        for (j, col) in table.schema.iter().enumerate() {
            cell.clear();
            match table.value(i, j) {
                None => {}
                Some(v) => match col.kind {
                    ColumnKind::Numeric => {
                        let _ = write!(cell, "{v}");
                    }
                    ColumnKind::YesNo | ColumnKind::Target => {
                        cell.push_str(if v == 1.0 { "Yes" } else { "No" });
                    }
                },
            }
            record.push(cell.clone());
        }
        writer.write_record(&record)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Parameters for [`generate_synthetic`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub n_rows: usize,
    pub positive_rate: f64,
    pub n_informative: usize,
    pub seed: u64,
}

const N_NUMERIC: usize = 15;
/// Location shift (in log space) applied to informative columns for the
/// positive class.
const CLASS_SHIFT: f64 = 1.2;
const MISSING_RATE: f64 = 0.03;

/// Generates a severely imbalanced table with the full inventory schema.
/// Informative numeric columns are lognormal with a class-shifted location;
/// everything else is class-independent noise. A few cells in `leadTime` and
/// the performance columns are marked missing to exercise imputation.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DataTable> {
    let SyntheticSpec {
        n_rows,
        positive_rate,
        n_informative,
        seed,
    } = *spec;
    if n_rows < 10 {
        return Err(Error::Argument(format!("n_rows must be >= 10, got {n_rows}")));
    }
    if !(positive_rate > 0.0 && positive_rate < 0.5) {
        return Err(Error::Argument(format!(
            "positive_rate must lie in (0, 0.5), got {positive_rate}"
        )));
    }
    if n_informative > N_NUMERIC {
        return Err(Error::Argument(format!(
            "n_informative must be <= {N_NUMERIC}, got {n_informative}"
        )));
    }

    let schema = inventory_schema();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).expect("valid");

    let n_pos = (n_rows as f64 * positive_rate).round() as usize;
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut rng);
    let mut is_positive = vec![false; n_rows];
    for &i in order.iter().take(n_pos) {
        is_positive[i] = true;
    }

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(schema.len());
    let mut missing: Vec<Vec<bool>> = Vec::with_capacity(schema.len());
    let mut numeric_seen = 0usize;
    for col in &schema {
        match col.kind {
            ColumnKind::Numeric => {
                let informative = numeric_seen < n_informative;
                let base_mu = 0.5 + 0.2 * numeric_seen as f64;
                let is_perf = SENTINEL_COLUMNS.contains(&col.name.as_str());
                let mut values = Vec::with_capacity(n_rows);
                for &positive in &is_positive {
                    let v = if is_perf && !informative {
                        // performance ratios live in [0, 1]
                        rng.random::<f64>()
                    } else {
                        let shift = if informative && positive {
                            CLASS_SHIFT
                        } else {
                            0.0
                        };
                        (base_mu + shift + normal.sample(&mut rng)).exp()
                    };
                    values.push(v);
                }
                numeric_seen += 1;
                columns.push(values);
                missing.push(vec![false; n_rows]);
            }
            ColumnKind::YesNo => {
                let rate = flag_rate(&col.name);
                let values = (0..n_rows)
                    .map(|_| if rng.random::<f64>() < rate { 1.0 } else { 0.0 })
                    .collect();
                columns.push(values);
                missing.push(vec![false; n_rows]);
            }
            ColumnKind::Target => {
                let values = is_positive.iter().map(|&p| if p { 1.0 } else { 0.0 }).collect();
                columns.push(values);
                missing.push(vec![false; n_rows]);
            }
        }
    }

    // Knock out ~3% of cells in leadTime and the performance columns.
    for name in ["leadTime", "perf6MonthAvg", "perf12MonthAvg"] {
        let j = schema.iter().position(|c| c.name == name).expect("schema");
        for i in 0..n_rows {
            if rng.random::<f64>() < MISSING_RATE {
                columns[j][i] = 0.0;
                missing[j][i] = true;
            }
        }
    }

    DataTable::new(schema, columns, missing)
}

fn flag_rate(name: &str) -> f64 {
    match name {
        "potentialIssue" => 0.05,
        "deckRisk" => 0.20,
        "oeConstraint" => 0.02,
        "ppapRisk" => 0.12,
        "stopAutoBuy" => 0.60,
        "revStop" => 0.01,
        _ => 0.10,
    }
}
