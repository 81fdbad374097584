//! SMOTE oversampling: synthetic minority rows interpolated between a
//! minority row and one of its k nearest minority neighbours.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{ColumnKind, DataTable};
use crate::error::{Error, Result};
use crate::preprocess::quantile_sorted;

/// Oversamples the minority class of the train rows. Returns a new table
/// holding the train rows (in the given order) followed by the synthetic
/// rows; original rows are copied unchanged. Synthetic numeric values are
/// convex combinations p + lambda (q - p) of two real minority rows;
/// categorical columns are copied from p. Generation stops once
/// minority/majority reaches `target_ratio`.
///
/// Neighbour distances are Euclidean over robust-scaled numeric columns
/// only; binary flags do not enter the distance.
pub fn smote(
    table: &DataTable,
    train_idx: &[usize],
    k_neighbors: usize,
    target_ratio: f64,
    seed: u64,
) -> Result<DataTable> {
    if k_neighbors == 0 {
        return Err(Error::Argument("k_neighbors must be at least 1".into()));
    }
    if !(target_ratio > 0.0 && target_ratio <= 1.0) {
        return Err(Error::Argument(format!(
            "target_ratio must lie in (0,1], got {target_ratio}"
        )));
    }
    let target_col = table.target_index();
    let labels = table.labels();
    let mut minority_rows: Vec<usize> = Vec::new();
    let mut majority_count = 0usize;
    let minority_class = minority_class(&labels, train_idx);
    for &i in train_idx {
        if labels[i] == minority_class {
            minority_rows.push(i);
        } else {
            majority_count += 1;
        }
    }
    let n_min = minority_rows.len();
    if n_min <= k_neighbors {
        return Err(Error::Argument(format!(
            "minority class has {n_min} train rows but k_neighbors = {k_neighbors}; \
             use a smaller k (at most {})",
            n_min.saturating_sub(1)
        )));
    }

    let needed = (target_ratio * majority_count as f64).ceil() as usize;
    let n_synthetic = needed.saturating_sub(n_min);

    let mut out = table.select_rows(train_idx);
    if n_synthetic == 0 {
        return Ok(out);
    }

    // robust scaling of numeric columns for the distance metric
    let numeric = table.numeric_indices();
    let mut scaled: Vec<Vec<f64>> = vec![Vec::with_capacity(numeric.len()); n_min];
    for &j in &numeric {
        let mut observed = table.observed_in(j, train_idx);
        if observed.is_empty() {
            return Err(Error::Degenerate(format!(
                "column {} has no observed train values",
                table.schema[j].name
            )));
        }
        observed.sort_by(f64::total_cmp);
        let median = quantile_sorted(&observed, 0.5);
        let iqr = quantile_sorted(&observed, 0.75) - quantile_sorted(&observed, 0.25);
        let scale = if iqr == 0.0 { 1.0 } else { iqr };
        for (slot, &row) in minority_rows.iter().enumerate() {
            let v = table.value(row, j).ok_or_else(|| Error::MissingValue {
                column: table.schema[j].name.clone(),
                row,
            })?;
            scaled[slot].push((v - median) / scale);
        }
    }

    // k nearest minority neighbours per minority row, ties by index
    let neighbours: Vec<Vec<usize>> = (0..n_min)
        .map(|a| {
            let mut dist: Vec<(f64, usize)> = (0..n_min)
                .filter(|&b| b != a)
                .map(|b| {
                    let d: f64 = scaled[a]
                        .iter()
                        .zip(&scaled[b])
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum();
                    (d, b)
                })
                .collect();
            dist.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
            dist.into_iter().take(k_neighbors).map(|(_, b)| b).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_buf = vec![0.0; table.schema.len()];
    for _ in 0..n_synthetic {
        let a = rng.random_range(0..n_min);
        let b = neighbours[a][rng.random_range(0..k_neighbors)];
        let lambda: f64 = rng.random();
        let (p, q) = (minority_rows[a], minority_rows[b]);
        for (j, slot) in row_buf.iter_mut().enumerate() {
            *slot = match table.schema[j].kind {
                ColumnKind::Numeric => {
                    let pv = table.value(p, j).ok_or_else(|| Error::MissingValue {
                        column: table.schema[j].name.clone(),
                        row: p,
                    })?;
                    let qv = table.value(q, j).ok_or_else(|| Error::MissingValue {
                        column: table.schema[j].name.clone(),
                        row: q,
                    })?;
                    pv + lambda * (qv - pv)
                }
                ColumnKind::YesNo => table.value(p, j).unwrap_or(0.0),
                ColumnKind::Target => f64::from(minority_class),
            };
        }
        let _ = target_col;
        out.push_row(&row_buf);
    }
    Ok(out)
}

/// The less frequent label among the train rows; ties resolve to class 1.
fn minority_class(labels: &[u8], train_idx: &[usize]) -> u8 {
    let pos = train_idx.iter().filter(|&&i| labels[i] == 1).count();
    let neg = train_idx.len() - pos;
    if pos <= neg {
        1
    } else {
        0
    }
}
