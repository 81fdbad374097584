//! Train-fitted preprocessing: the three scaling regimes plus standard
//! scaling, iterative imputation, SMOTE oversampling, and PCA feature
//! analysis. Everything here fits on train rows only and applies to any
//! table with the same columns.

mod imputer;
mod pca;
mod smote;

pub use imputer::{fit_iterative_imputer, ImputerModel, ImputerSettings};
pub use pca::{fit_pca, PcaModel};
pub use smote::smote;

use serde::{Deserialize, Serialize};

use crate::dataset::{ColumnKind, DataTable};
use crate::error::{Error, Result};

pub const TRANSFORM_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    /// (x - median) / (q75 - q25)
    #[default]
    Robust,
    /// log(1+x) then standard scaling of the logs
    LogStandard,
    /// rank-based map onto [0,1] through the train empirical CDF
    Quantile,
    /// (x - mean) / std
    Standard,
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Robust => "robust",
            TransformKind::LogStandard => "log-standard",
            TransformKind::Quantile => "quantile",
            TransformKind::Standard => "standard",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ColumnTransform {
    /// x -> (maybe_log1p(x) - center) / scale
    Affine {
        center: f64,
        scale: f64,
        log1p: bool,
    },
    /// piecewise-linear interpolation through (value, cdf) knots
    Quantile { values: Vec<f64>, cdf: Vec<f64> },
}

impl ColumnTransform {
    fn apply(&self, x: f64) -> f64 {
        match self {
            ColumnTransform::Affine {
                center,
                scale,
                log1p,
            } => {
                let v = if *log1p { x.ln_1p() } else { x };
                (v - center) / scale
            }
            ColumnTransform::Quantile { values, cdf } => {
                if x <= values[0] {
                    return cdf[0];
                }
                if x >= values[values.len() - 1] {
                    return cdf[cdf.len() - 1];
                }
                // first index with values[i] >= x
                let i = values.partition_point(|&v| v < x);
                let (v0, v1) = (values[i - 1], values[i]);
                let (c0, c1) = (cdf[i - 1], cdf[i]);
                c0 + (c1 - c0) * (x - v0) / (v1 - v0)
            }
        }
    }
}

/// A scaling transform fitted on train rows, applicable to any table that
/// carries the fitted columns. Serialises to a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform {
    pub version: u32,
    pub kind: TransformKind,
    /// Column names the transform was fitted on, in fit order.
    pub fitted_on: Vec<String>,
    params: Vec<ColumnTransform>,
    /// Columns whose scale divisor degenerated to 1 (constant columns).
    pub degenerate_columns: Vec<String>,
}

/// Fits a transform of the given kind over `columns` using only `train_idx`
/// rows (missing cells skipped). A degenerate scale (q75 = q25 or std = 0)
/// falls back to a unit divisor and is recorded in `degenerate_columns`.
pub fn fit_transform(
    kind: TransformKind,
    table: &DataTable,
    train_idx: &[usize],
    columns: &[usize],
) -> Result<FittedTransform> {
    let mut fitted_on = Vec::with_capacity(columns.len());
    let mut params = Vec::with_capacity(columns.len());
    let mut degenerate_columns = Vec::new();
    for &j in columns {
        let schema = &table.schema[j];
        if schema.kind != ColumnKind::Numeric {
            return Err(Error::Argument(format!(
                "column {} is not numeric",
                schema.name
            )));
        }
        let observed = table.observed_in(j, train_idx);
        if observed.is_empty() {
            return Err(Error::Degenerate(format!(
                "column {} has no observed train values",
                schema.name
            )));
        }
        let (param, degenerate) = fit_column(kind, &schema.name, &observed)?;
        if degenerate {
            degenerate_columns.push(schema.name.clone());
        }
        fitted_on.push(schema.name.clone());
        params.push(param);
    }
    Ok(FittedTransform {
        version: TRANSFORM_FORMAT_VERSION,
        kind,
        fitted_on,
        params,
        degenerate_columns,
    })
}

fn fit_column(kind: TransformKind, name: &str, observed: &[f64]) -> Result<(ColumnTransform, bool)> {
    match kind {
        TransformKind::Robust => {
            let mut sorted = observed.to_vec();
            sorted.sort_by(f64::total_cmp);
            let median = quantile_sorted(&sorted, 0.5);
            let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
            let degenerate = iqr == 0.0;
            let scale = if degenerate { 1.0 } else { iqr };
            Ok((
                ColumnTransform::Affine {
                    center: median,
                    scale,
                    log1p: false,
                },
                degenerate,
            ))
        }
        TransformKind::Standard => {
            let (mean, std) = mean_std(observed);
            let degenerate = std == 0.0;
            Ok((
                ColumnTransform::Affine {
                    center: mean,
                    scale: if degenerate { 1.0 } else { std },
                    log1p: false,
                },
                degenerate,
            ))
        }
        TransformKind::LogStandard => {
            let min = observed.iter().copied().fold(f64::INFINITY, f64::min);
            if min < 0.0 {
                return Err(Error::Argument(format!(
                    "log-standard requires non-negative column, {name} has minimum {min}"
                )));
            }
            let logs: Vec<f64> = observed.iter().map(|&v| v.ln_1p()).collect();
            let (mean, std) = mean_std(&logs);
            let degenerate = std == 0.0;
            Ok((
                ColumnTransform::Affine {
                    center: mean,
                    scale: if degenerate { 1.0 } else { std },
                    log1p: true,
                },
                degenerate,
            ))
        }
        TransformKind::Quantile => {
            let mut sorted = observed.to_vec();
            sorted.sort_by(f64::total_cmp);
            let m = sorted.len();
            if sorted[0] == sorted[m - 1] {
                // single distinct value: centered pass-through
                return Ok((
                    ColumnTransform::Affine {
                        center: sorted[0],
                        scale: 1.0,
                        log1p: false,
                    },
                    true,
                ));
            }
            // unique values with cdf = (midrank - 1) / (m - 1): the train
            // minimum maps to 0 and the maximum to 1
            let mut values = Vec::new();
            let mut cdf = Vec::new();
            let mut i = 0;
            while i < m {
                let mut j = i;
                while j + 1 < m && sorted[j + 1] == sorted[i] {
                    j += 1;
                }
                let midrank = (i + j) as f64 / 2.0 + 1.0;
                values.push(sorted[i]);
                cdf.push((midrank - 1.0) / (m - 1) as f64);
                i = j + 1;
            }
            Ok((ColumnTransform::Quantile { values, cdf }, false))
        }
    }
}

/// Population mean and standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear-interpolation quantile on a sorted slice (position q*(n-1)).
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if lo + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
    }
}

impl FittedTransform {
    /// Applies the fitted parameters to every fitted column of `table`.
    /// Missing cells stay missing; other columns pass through untouched.
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        let mut out = table.clone();
        for (name, param) in self.fitted_on.iter().zip(&self.params) {
            let j = table.column_index(name)?;
            let n = table.row_count();
            let mut values = Vec::with_capacity(n);
            let mut missing = Vec::with_capacity(n);
            for i in 0..n {
                match table.value(i, j) {
                    Some(v) => {
                        values.push(param.apply(v));
                        missing.push(false);
                    }
                    None => {
                        values.push(0.0);
                        missing.push(true);
                    }
                }
            }
            out.set_column(j, values, missing);
        }
        Ok(out)
    }

    /// Transforms a single value of a fitted column (by position in
    /// `fitted_on`).
    pub fn apply_value(&self, column: usize, x: f64) -> f64 {
        self.params[column].apply(x)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: FittedTransform = serde_json::from_str(text)?;
        if t.version != TRANSFORM_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: TRANSFORM_FORMAT_VERSION,
                found: t.version,
            });
        }
        Ok(t)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?)
            .map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, ColumnSchema, SyntheticSpec};

    fn numeric_table(columns: Vec<(&str, Vec<f64>)>) -> DataTable {
        let n = columns[0].1.len();
        let mut schema: Vec<ColumnSchema> = columns
            .iter()
            .map(|(name, _)| ColumnSchema::new(name, ColumnKind::Numeric, None))
            .collect();
        schema.push(ColumnSchema::new("t", ColumnKind::Target, None));
        let mut cols: Vec<Vec<f64>> = columns.into_iter().map(|(_, v)| v).collect();
        cols.push((0..n).map(|i| f64::from(i % 2 == 0)).collect());
        let missing = vec![vec![false; n]; cols.len()];
        DataTable::new(schema, cols, missing).unwrap()
    }

    #[test]
    fn robust_scaling_hand_arithmetic() {
        let t = numeric_table(vec![("a", vec![1.0, 2.0, 3.0, 4.0, 5.0])]);
        let idx: Vec<usize> = (0..5).collect();
        let f = fit_transform(TransformKind::Robust, &t, &idx, &[0]).unwrap();
        let out = f.apply(&t).unwrap();
        // median 3, IQR 2: value 5 -> 1.0
        assert_eq!(out.value(4, 0), Some(1.0));
        assert_eq!(out.value(2, 0), Some(0.0));
    }

    #[test]
    fn constant_column_centers_with_unit_divisor() {
        let t = numeric_table(vec![("c", vec![7.0; 6])]);
        let idx: Vec<usize> = (0..6).collect();
        for kind in [
            TransformKind::Robust,
            TransformKind::Standard,
            TransformKind::LogStandard,
            TransformKind::Quantile,
        ] {
            let f = fit_transform(kind, &t, &idx, &[0]).unwrap();
            let out = f.apply(&t).unwrap();
            for i in 0..6 {
                assert_eq!(out.value(i, 0), Some(0.0), "kind {kind:?}");
            }
            assert_eq!(f.degenerate_columns, vec!["c".to_string()], "kind {kind:?}");
        }
    }

    #[test]
    fn log_standard_two_point_closed_form() {
        let t = numeric_table(vec![("a", vec![0.0, std::f64::consts::E - 1.0])]);
        let idx = vec![0, 1];
        let f = fit_transform(TransformKind::LogStandard, &t, &idx, &[0]).unwrap();
        let out = f.apply(&t).unwrap();
        // logs are [0, 1]; population mean 0.5, std 0.5 -> values -1 and +1
        assert!((out.value(0, 0).unwrap() + 1.0).abs() < 1e-12);
        assert!((out.value(1, 0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_standard_rejects_negative_columns() {
        let t = numeric_table(vec![("a", vec![-1.0, 2.0, 3.0])]);
        let idx = vec![0, 1, 2];
        assert!(fit_transform(TransformKind::LogStandard, &t, &idx, &[0]).is_err());
    }

    #[test]
    fn quantile_train_output_is_uniform() {
        let spec = SyntheticSpec {
            n_rows: 6000,
            positive_rate: 0.1,
            n_informative: 2,
            seed: 13,
        };
        let t = generate_synthetic(&spec).unwrap();
        let j = t.column_index("nationalInv").unwrap();
        let idx: Vec<usize> = (0..t.row_count()).collect();
        let f = fit_transform(TransformKind::Quantile, &t, &idx, &[j]).unwrap();
        let out = f.apply(&t).unwrap();
        let mut vals: Vec<f64> = (0..out.row_count())
            .map(|i| out.value(i, j).unwrap())
            .collect();
        vals.sort_by(f64::total_cmp);
        assert!(*vals.first().unwrap() >= 0.0 && *vals.last().unwrap() <= 1.0);
        // Kolmogorov-Smirnov statistic against uniform [0,1]
        let n = vals.len() as f64;
        let mut ks: f64 = 0.0;
        for (i, &v) in vals.iter().enumerate() {
            ks = ks.max((((i + 1) as f64) / n - v).abs());
            ks = ks.max((v - (i as f64) / n).abs());
        }
        assert!(ks < 0.02, "KS statistic {ks}");
    }

    #[test]
    fn quantile_interpolates_between_train_values() {
        let t = numeric_table(vec![("a", vec![0.0, 10.0])]);
        let f = fit_transform(TransformKind::Quantile, &t, &[0, 1], &[0]).unwrap();
        assert_eq!(f.apply_value(0, 5.0), 0.5);
        assert_eq!(f.apply_value(0, -3.0), 0.0);
        assert_eq!(f.apply_value(0, 99.0), 1.0);
    }

    #[test]
    fn fitting_ignores_rows_outside_train_set() {
        let spec = SyntheticSpec {
            n_rows: 400,
            positive_rate: 0.1,
            n_informative: 2,
            seed: 21,
        };
        let t = generate_synthetic(&spec).unwrap();
        let train: Vec<usize> = (0..200).collect();
        let numeric = t.numeric_indices();
        for kind in [
            TransformKind::Robust,
            TransformKind::Standard,
            TransformKind::LogStandard,
            TransformKind::Quantile,
        ] {
            let a = fit_transform(kind, &t, &train, &numeric).unwrap();
            // permute the test rows: train-fitted parameters must not move
            let mut rows: Vec<usize> = (0..400).collect();
            rows[200..].reverse();
            let permuted = t.select_rows(&rows);
            let b = fit_transform(kind, &permuted, &train, &numeric).unwrap();
            assert_eq!(a, b, "kind {kind:?}");
        }
    }

    #[test]
    fn transform_round_trips_through_json() {
        let t = numeric_table(vec![("a", vec![1.0, 4.0, 9.0, 16.0])]);
        let idx = vec![0, 1, 2, 3];
        let f = fit_transform(TransformKind::Quantile, &t, &idx, &[0]).unwrap();
        let json = f.to_json().unwrap();
        let g = FittedTransform::from_json(&json).unwrap();
        assert_eq!(f, g);
        // version guard
        let bad = json.replace("\"version\": 1", "\"version\": 99");
        assert!(FittedTransform::from_json(&bad).is_err());
    }

    #[test]
    fn missing_cells_stay_missing() {
        let spec = SyntheticSpec {
            n_rows: 100,
            positive_rate: 0.1,
            n_informative: 1,
            seed: 2,
        };
        let t = generate_synthetic(&spec).unwrap();
        let j = t.column_index("leadTime").unwrap();
        let idx: Vec<usize> = (0..t.row_count()).collect();
        let f = fit_transform(TransformKind::Robust, &t, &idx, &[j]).unwrap();
        let out = f.apply(&t).unwrap();
        for i in 0..t.row_count() {
            assert_eq!(t.is_missing(i, j), out.is_missing(i, j));
        }
    }
}
