//! Round-robin iterative imputation: initialise missing cells with column
//! means, then repeatedly regress each incomplete column on the others with
//! a ridge penalty until the imputed values stabilise.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::DataTable;
use crate::error::{Error, Result};

pub const IMPUTER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImputerSettings {
    pub max_rounds: usize,
    pub tol: f64,
    pub ridge: f64,
}

impl Default for ImputerSettings {
    fn default() -> Self {
        ImputerSettings {
            max_rounds: 10,
            tol: 1e-3,
            ridge: 1e-3,
        }
    }
}

/// Per-column linear model: value ~ intercept + coefficients . other columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ColumnModel {
    intercept: f64,
    /// One coefficient per numeric column; the column's own slot is 0.
    coefficients: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputerModel {
    pub version: u32,
    /// Numeric columns in fit order; the regression feature space.
    pub columns: Vec<String>,
    /// Train-observed means, the initial fill.
    pub means: Vec<f64>,
    /// Imputed values are clipped to the train-observed range per column.
    pub clip_min: Vec<f64>,
    pub clip_max: Vec<f64>,
    models: Vec<ColumnModel>,
    pub rounds_used: usize,
    pub tol: f64,
    /// Max absolute change of any imputed cell, per fit round.
    pub round_changes: Vec<f64>,
    /// True when the per-round change failed to be non-increasing over the
    /// last three rounds (diagnostic only).
    pub contraction_violation: bool,
}

/// Fits the imputer on the train rows of `table`. Every numeric column gets
/// a ridge model (penalty from `settings`) so that unseen tables can be
/// imputed in any column; a column with no observed train cell is an error.
pub fn fit_iterative_imputer(
    table: &DataTable,
    train_idx: &[usize],
    settings: &ImputerSettings,
) -> Result<ImputerModel> {
    if settings.max_rounds == 0 {
        return Err(Error::Argument("max_rounds must be at least 1".into()));
    }
    if train_idx.is_empty() {
        return Err(Error::Argument("empty train index set".into()));
    }
    let numeric = table.numeric_indices();
    let k = numeric.len();
    if k < 2 {
        return Err(Error::Argument(
            "iterative imputation needs at least two numeric columns".into(),
        ));
    }
    let columns: Vec<String> = numeric
        .iter()
        .map(|&j| table.schema[j].name.clone())
        .collect();

    // Train-observed statistics; dense working matrix with mean fill.
    let n = train_idx.len();
    let mut means = Vec::with_capacity(k);
    let mut clip_min = Vec::with_capacity(k);
    let mut clip_max = Vec::with_capacity(k);
    let mut observed_mask = vec![vec![false; n]; k];
    let mut data = vec![vec![0.0f64; n]; k];
    let mut any_observed_everywhere = false;
    for (c, &j) in numeric.iter().enumerate() {
        let mut sum = 0.0;
        let mut count = 0usize;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (r, &i) in train_idx.iter().enumerate() {
            if let Some(v) = table.value(i, j) {
                observed_mask[c][r] = true;
                data[c][r] = v;
                sum += v;
                count += 1;
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if count == 0 {
            return Err(Error::Degenerate(format!(
                "column {} is entirely missing in the train rows",
                columns[c]
            )));
        }
        if count == n {
            any_observed_everywhere = true;
        }
        let mean = sum / count as f64;
        means.push(mean);
        clip_min.push(lo);
        clip_max.push(hi);
        for r in 0..n {
            if !observed_mask[c][r] {
                data[c][r] = mean;
            }
        }
    }
    if !any_observed_everywhere {
        return Err(Error::Degenerate(
            "no fully-observed numeric column in the train rows".into(),
        ));
    }

    let incomplete: Vec<usize> = (0..k)
        .filter(|&c| observed_mask[c].iter().any(|&o| !o))
        .collect();

    let mut rounds_used = 0;
    let mut round_changes = Vec::new();
    for _ in 0..settings.max_rounds {
        if incomplete.is_empty() {
            break;
        }
        rounds_used += 1;
        let mut max_change = 0.0f64;
        for &c in &incomplete {
            let model = fit_ridge(&data, &observed_mask[c], c, settings.ridge)?;
            for r in 0..n {
                if observed_mask[c][r] {
                    continue;
                }
                let predicted = model
                    .predict(&data, r)
                    .clamp(clip_min[c], clip_max[c]);
                max_change = max_change.max((predicted - data[c][r]).abs());
                data[c][r] = predicted;
            }
        }
        round_changes.push(max_change);
        if max_change < settings.tol {
            break;
        }
    }

    // Final models for every column, fitted on the converged fill.
    let mut models = Vec::with_capacity(k);
    for (c, mask) in observed_mask.iter().enumerate() {
        models.push(fit_ridge(&data, mask, c, settings.ridge)?);
    }

    let contraction_violation = round_changes
        .windows(2)
        .rev()
        .take(2)
        .any(|w| w[1] > w[0]);

    Ok(ImputerModel {
        version: IMPUTER_FORMAT_VERSION,
        columns,
        means,
        clip_min,
        clip_max,
        models,
        rounds_used: rounds_used.max(1),
        tol: settings.tol,
        round_changes,
        contraction_violation,
    })
}

/// Ridge regression of column `target` on all other columns, restricted to
/// rows where the target is observed. Regressors are standardised
/// internally; coefficients come back in the original scale.
fn fit_ridge(
    data: &[Vec<f64>],
    target_observed: &[bool],
    target: usize,
    ridge: f64,
) -> Result<ColumnModel> {
    let k = data.len();
    let rows: Vec<usize> = (0..target_observed.len())
        .filter(|&r| target_observed[r])
        .collect();
    let m = rows.len();
    let regressors: Vec<usize> = (0..k).filter(|&c| c != target).collect();
    let p = regressors.len();

    // standardise regressors over the fit rows
    let mut centers = vec![0.0; p];
    let mut scales = vec![1.0; p];
    for (a, &c) in regressors.iter().enumerate() {
        let mean = rows.iter().map(|&r| data[c][r]).sum::<f64>() / m as f64;
        let var = rows
            .iter()
            .map(|&r| (data[c][r] - mean) * (data[c][r] - mean))
            .sum::<f64>()
            / m as f64;
        centers[a] = mean;
        scales[a] = if var > 0.0 { var.sqrt() } else { 1.0 };
    }
    let y_mean = rows.iter().map(|&r| data[target][r]).sum::<f64>() / m as f64;

    // normal equations on the standardised design
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for &r in &rows {
        let z: Vec<f64> = regressors
            .iter()
            .enumerate()
            .map(|(a, &c)| (data[c][r] - centers[a]) / scales[a])
            .collect();
        let dy = data[target][r] - y_mean;
        for a in 0..p {
            xty[a] += z[a] * dy;
            for b in a..p {
                xtx[(a, b)] += z[a] * z[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(a, b)] = xtx[(b, a)];
        }
        xtx[(a, a)] += ridge;
    }

    let mut jitter = ridge;
    let beta = loop {
        match Cholesky::new(xtx.clone()) {
            Some(chol) => break chol.solve(&xty),
            None => {
                jitter *= 10.0;
                if jitter > 1e6 {
                    return Err(Error::Degenerate(
                        "ridge system not positive definite".into(),
                    ));
                }
                for a in 0..p {
                    xtx[(a, a)] += jitter;
                }
            }
        }
    };

    let mut coefficients = vec![0.0; k];
    let mut intercept = y_mean;
    for (a, &c) in regressors.iter().enumerate() {
        let b = beta[a] / scales[a];
        coefficients[c] = b;
        intercept -= b * centers[a];
    }
    Ok(ColumnModel {
        intercept,
        coefficients,
    })
}

impl ColumnModel {
    fn predict(&self, data: &[Vec<f64>], row: usize) -> f64 {
        let mut v = self.intercept;
        for (c, &b) in self.coefficients.iter().enumerate() {
            if b != 0.0 {
                v += b * data[c][row];
            }
        }
        v
    }
}

impl ImputerModel {
    /// Fills every missing numeric cell of `table`. A table with no missing
    /// cells comes back unchanged. Runs the stored models round-robin for
    /// the same number of rounds used at fit time (stopping early once the
    /// largest change drops below `tol`), then clips to the train range.
    pub fn apply(&self, table: &DataTable) -> Result<DataTable> {
        let numeric: Vec<usize> = self
            .columns
            .iter()
            .map(|name| table.column_index(name))
            .collect::<Result<_>>()?;
        let k = numeric.len();
        let n = table.row_count();

        let mut holes: Vec<(usize, usize)> = Vec::new(); // (column slot, row)
        for (c, &j) in numeric.iter().enumerate() {
            for i in 0..n {
                if table.is_missing(i, j) {
                    holes.push((c, i));
                }
            }
        }
        if holes.is_empty() {
            return Ok(table.clone());
        }

        let mut data: Vec<Vec<f64>> = numeric
            .iter()
            .enumerate()
            .map(|(c, &j)| {
                (0..n)
                    .map(|i| table.value(i, j).unwrap_or(self.means[c]))
                    .collect()
            })
            .collect();

        for _ in 0..self.rounds_used {
            let mut max_change = 0.0f64;
            for &(c, i) in &holes {
                let predicted = self.models[c]
                    .predict(&data, i)
                    .clamp(self.clip_min[c], self.clip_max[c]);
                max_change = max_change.max((predicted - data[c][i]).abs());
                data[c][i] = predicted;
            }
            if max_change < self.tol {
                break;
            }
        }

        let mut out = table.clone();
        for &(c, i) in &holes {
            out.set_cell(i, numeric[c], data[c][i]);
        }
        let _ = k;
        Ok(out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: ImputerModel = serde_json::from_str(text)?;
        if m.version != IMPUTER_FORMAT_VERSION {
            return Err(Error::FormatVersion {
                expected: IMPUTER_FORMAT_VERSION,
                found: m.version,
            });
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path.as_ref(), self.to_json()?).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Self::from_json(&text)
    }
}
