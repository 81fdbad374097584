//! PCA feature analysis: eigendecomposition of the train covariance matrix
//! (after internal standardisation), retaining enough components to explain
//! the requested variance, with per-feature importance scores.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataset::DataTable;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub feature_names: Vec<String>,
    /// Retained components x features; rows are orthonormal.
    pub component_loadings: Vec<Vec<f64>>,
    /// Non-increasing, one entry per retained component.
    pub explained_variance_ratio: Vec<f64>,
    pub n_components: usize,
    /// importance(f) = sum over retained components of ratio * |loading|,
    /// normalised to sum to 1.
    pub feature_importance: Vec<f64>,
}

/// Fits PCA on the numeric columns over the train rows. Columns are
/// standardised internally; missing cells are an error (impute first).
pub fn fit_pca(table: &DataTable, train_idx: &[usize], variance_target: f64) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::Argument(format!(
            "variance_target must lie in (0,1], got {variance_target}"
        )));
    }
    if train_idx.len() < 2 {
        return Err(Error::Argument(format!(
            "pca needs at least 2 rows, got {}",
            train_idx.len()
        )));
    }
    let numeric = table.numeric_indices();
    let f = numeric.len();
    if f == 0 {
        return Err(Error::Argument("no numeric columns".into()));
    }
    let n = train_idx.len();
    let feature_names: Vec<String> = numeric
        .iter()
        .map(|&j| table.schema[j].name.clone())
        .collect();

    // standardised train matrix (population mean/std, unit divisor for
    // constant columns)
    let mut z = DMatrix::<f64>::zeros(n, f);
    for (c, &j) in numeric.iter().enumerate() {
        let mut values = Vec::with_capacity(n);
        for &i in train_idx {
            match table.value(i, j) {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::MissingValue {
                        column: table.schema[j].name.clone(),
                        row: i,
                    })
                }
            }
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = values.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let std = if var > 0.0 { var.sqrt() } else { 1.0 };
        for (r, &v) in values.iter().enumerate() {
            z[(r, c)] = (v - mean) / std;
        }
    }

    let cov = z.transpose() * &z / n as f64;
    let eigen = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let eigenvalues: Vec<f64> = order
        .iter()
        .map(|&i| eigen.eigenvalues[i].max(0.0))
        .collect();
    let total: f64 = eigenvalues.iter().sum();
    if total <= 0.0 {
        return Err(Error::Degenerate("all numeric columns constant".into()));
    }

    let mut n_components = f;
    let mut cumulative = 0.0;
    for (k, &ev) in eigenvalues.iter().enumerate() {
        cumulative += ev / total;
        if cumulative >= variance_target - 1e-12 {
            n_components = k + 1;
            break;
        }
    }

    let explained_variance_ratio: Vec<f64> = eigenvalues[..n_components]
        .iter()
        .map(|&ev| ev / total)
        .collect();
    let component_loadings: Vec<Vec<f64>> = order[..n_components]
        .iter()
        .map(|&i| eigen.eigenvectors.column(i).iter().copied().collect())
        .collect();

    let mut feature_importance = vec![0.0; f];
    for (ratio, loadings) in explained_variance_ratio.iter().zip(&component_loadings) {
        for (imp, &l) in feature_importance.iter_mut().zip(loadings) {
            *imp += ratio * l.abs();
        }
    }
    let norm: f64 = feature_importance.iter().sum();
    if norm > 0.0 {
        for imp in &mut feature_importance {
            *imp /= norm;
        }
    }

    Ok(PcaModel {
        feature_names,
        component_loadings,
        explained_variance_ratio,
        n_components,
        feature_importance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ColumnKind, ColumnSchema};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_from_columns(cols: Vec<Vec<f64>>) -> DataTable {
        let n = cols[0].len();
        let mut schema: Vec<ColumnSchema> = (0..cols.len())
            .map(|i| ColumnSchema::new(&format!("c{i}"), ColumnKind::Numeric, None))
            .collect();
        schema.push(ColumnSchema::new("t", ColumnKind::Target, None));
        let mut all = cols;
        all.push((0..n).map(|i| f64::from(i % 2 == 0)).collect());
        let missing = vec![vec![false; n]; all.len()];
        DataTable::new(schema, all, missing).unwrap()
    }

    #[test]
    fn collinear_data_needs_one_component() {
        let base: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let t = table_from_columns(vec![
            base.clone(),
            base.iter().map(|v| 2.0 * v + 1.0).collect(),
            base.iter().map(|v| -0.5 * v + 3.0).collect(),
        ]);
        let idx: Vec<usize> = (0..100).collect();
        let model = fit_pca(&t, &idx, 0.99).unwrap();
        assert_eq!(model.n_components, 1);
        assert!(model.explained_variance_ratio[0] >= 0.99);
    }

    #[test]
    fn isotropic_gaussian_needs_all_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..2000)
                    .map(|_| {
                        // Box-Muller pair, first element
                        let u1: f64 = rng.random::<f64>().max(1e-12);
                        let u2: f64 = rng.random();
                        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
                    })
                    .collect()
            })
            .collect();
        let t = table_from_columns(cols);
        let idx: Vec<usize> = (0..2000).collect();
        let model = fit_pca(&t, &idx, 0.99).unwrap();
        assert_eq!(model.n_components, 5, "ratios {:?}", model.explained_variance_ratio);
    }

    #[test]
    fn loadings_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let shared: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|c| {
                shared
                    .iter()
                    .map(|&s| s * (c as f64 + 1.0) + rng.random::<f64>() * 0.3)
                    .collect()
            })
            .collect();
        let t = table_from_columns(cols);
        let idx: Vec<usize> = (0..300).collect();
        let model = fit_pca(&t, &idx, 1.0).unwrap();
        let k = model.component_loadings.len();
        for a in 0..k {
            for b in 0..k {
                let dot: f64 = model.component_loadings[a]
                    .iter()
                    .zip(&model.component_loadings[b])
                    .map(|(x, y)| x * y)
                    .sum();
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot - expected).abs() < 1e-8, "L[{a}].L[{b}] = {dot}");
            }
        }
    }

    #[test]
    fn ratios_non_increasing_and_importance_sums_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cols: Vec<Vec<f64>> = (0..6)
            .map(|c| {
                (0..500)
                    .map(|_| rng.random::<f64>() * (1.0 + c as f64))
                    .collect()
            })
            .collect();
        let t = table_from_columns(cols);
        let idx: Vec<usize> = (0..500).collect();
        let model = fit_pca(&t, &idx, 0.99).unwrap();
        for w in model.explained_variance_ratio.windows(2) {
            assert!(w[0] >= w[1]);
        }
        let sum: f64 = model.feature_importance.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
        assert!(model.feature_importance.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn too_few_rows_error() {
        let t = table_from_columns(vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
        assert!(fit_pca(&t, &[0], 0.99).is_err());
    }
}
