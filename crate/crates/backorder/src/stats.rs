//! Statistical screening of attributes against the target: Mann-Whitney U,
//! chi-square independence on 2x2 tables, and Spearman correlation matrices.

use itertools::Itertools;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::dataset::DataTable;
use crate::error::{Error, Result};
use crate::evaluate::midranks;

/// Reports below this are displayed as exactly 0.
const P_FLOOR: f64 = 1e-300;
/// Exact Mann-Whitney enumeration is used when n1 * n2 is at most this.
const EXACT_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestMethod {
    MannWhitneyU,
    ChiSquare,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Sample sizes for Mann-Whitney; table dimensions (2, 2) for chi-square.
    pub n1: usize,
    pub n2: usize,
    pub method: TestMethod,
}

/// Two-sided Mann-Whitney U test. The statistic is U of `x`, computed from
/// midrank sums over the pooled sample (U = R1 - n1(n1+1)/2). Small inputs
/// (n1*n2 <= 64) take an exact enumeration path; otherwise the normal
/// approximation with tie and continuity corrections applies.
pub fn mann_whitney_u(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::Argument("mann_whitney_u requires non-empty samples".into()));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Argument("non-finite sample value".into()));
    }
    let n1 = x.len();
    let n2 = y.len();
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let ranks = midranks(&pooled);
    let r1: f64 = ranks[..n1].iter().sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;

    let p_value = if n1 * n2 <= EXACT_LIMIT {
        exact_p(&ranks, n1, u)
    } else {
        normal_approx_p(&pooled, &ranks, n1, n2, u)
    };
    Ok(TestResult {
        statistic: u,
        p_value: floor_p(p_value),
        n1,
        n2,
        method: TestMethod::MannWhitneyU,
    })
}

/// Exact two-sided p: enumerate every assignment of n1 pooled ranks and
/// count U values at least as extreme (about the center n1*n2/2) as observed.
fn exact_p(ranks: &[f64], n1: usize, u_observed: f64) -> f64 {
    let n = ranks.len();
    let n2 = n - n1;
    let center = (n1 * n2) as f64 / 2.0;
    let lo = u_observed.min((n1 * n2) as f64 - u_observed);
    let hi = u_observed.max((n1 * n2) as f64 - u_observed);
    let offset = (n1 * (n1 + 1)) as f64 / 2.0;
    let mut extreme = 0usize;
    let mut total = 0usize;
    for combo in (0..n).combinations(n1) {
        let r: f64 = combo.iter().map(|&i| ranks[i]).sum();
        let u = r - offset;
        // tolerate float slack from midranks (values are multiples of 0.5)
        if u <= lo + 1e-9 || u >= hi - 1e-9 {
            extreme += 1;
        }
        total += 1;
    }
    let _ = center;
    (extreme as f64 / total as f64).min(1.0)
}

/// Normal approximation with tie correction and continuity correction.
fn normal_approx_p(pooled: &[f64], ranks: &[f64], n1: usize, n2: usize, u: f64) -> f64 {
    let n = pooled.len() as f64;
    let (n1f, n2f) = (n1 as f64, n2 as f64);
    let mean = n1f * n2f / 2.0;
    // tie correction: sum of t^3 - t over tie groups
    let mut tie_term = 0.0;
    let mut sorted = ranks.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n1f * n2f / 12.0 * ((n + 1.0) - tie_term / (n * (n - 1.0)));
    if var <= 0.0 {
        return 1.0; // all pooled values tied: no evidence either way
    }
    let z = ((u - mean).abs() - 0.5).max(0.0) / var.sqrt();
    erfc(z / std::f64::consts::SQRT_2)
}

/// Pearson chi-square independence test (no Yates correction) for two 0/1
/// columns, with the p-value from the 1-degree-of-freedom distribution.
pub fn chi_square(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Argument("chi_square requires non-empty columns".into()));
    }
    let mut counts = [[0i128; 2]; 2];
    for (&av, &bv) in a.iter().zip(b) {
        let ai = binary_level(av)?;
        let bi = binary_level(bv)?;
        counts[ai][bi] += 1;
    }
    chi_square_counts(counts)
}

fn binary_level(v: f64) -> Result<usize> {
    if v == 0.0 {
        Ok(0)
    } else if v == 1.0 {
        Ok(1)
    } else {
        Err(Error::Argument(format!("chi_square needs 0/1 columns, saw {v}")))
    }
}

/// Chi-square on explicit 2x2 counts [[n00, n01], [n10, n11]].
pub fn chi_square_counts(counts: [[i128; 2]; 2]) -> Result<TestResult> {
    let [[n00, n01], [n10, n11]] = counts;
    let rows = [n00 + n01, n10 + n11];
    let cols = [n00 + n10, n01 + n11];
    let n = rows[0] + rows[1];
    for (label, margin) in [("row 0", rows[0]), ("row 1", rows[1]), ("column 0", cols[0]), ("column 1", cols[1])] {
        if margin == 0 {
            return Err(Error::Degenerate(format!(
                "chi_square margin {label} is empty (expected count 0)"
            )));
        }
    }
    // Closed form n(ad - bc)^2 / (r0 r1 c0 c1), evaluated in integers with
    // sorted margin factors so transposed inputs give bit-identical output.
    let det = n00 * n11 - n01 * n10;
    let mut margins = [rows[0], rows[1], cols[0], cols[1]];
    margins.sort_unstable();
    let statistic = (n as f64) * (det as f64) * (det as f64)
        / (margins[0] as f64 * margins[1] as f64 * margins[2] as f64 * margins[3] as f64);
    let p_value = chi2_sf_1df(statistic);
    Ok(TestResult {
        statistic,
        p_value: floor_p(p_value),
        n1: 2,
        n2: 2,
        method: TestMethod::ChiSquare,
    })
}

/// Survival function of the chi-square distribution with 1 degree of freedom.
fn chi2_sf_1df(x: f64) -> f64 {
    erfc((x / 2.0).sqrt())
}

fn floor_p(p: f64) -> f64 {
    if p < P_FLOOR {
        0.0
    } else {
        p.min(1.0)
    }
}

/// Symmetric matrix of Spearman rank correlations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Column pairs whose correlation was reported as 0 because one side was
    /// constant over the jointly observed rows.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub degenerate_pairs: Vec<(String, String)>,
}

/// Spearman correlation of every column pair: midranks per column, Pearson
/// on the ranks, missing cells excluded pairwise.
pub fn spearman_matrix(table: &DataTable, columns: &[usize]) -> Result<CorrelationMatrix> {
    if table.row_count() < 2 {
        return Err(Error::Argument("spearman_matrix needs at least 2 rows".into()));
    }
    let k = columns.len();
    let labels: Vec<String> = columns
        .iter()
        .map(|&j| table.schema[j].name.clone())
        .collect();
    let mut values = vec![vec![0.0; k]; k];
    let mut degenerate_pairs = Vec::new();
    for a in 0..k {
        values[a][a] = 1.0;
        for b in (a + 1)..k {
            let (ja, jb) = (columns[a], columns[b]);
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..table.row_count() {
                if let (Some(x), Some(y)) = (table.value(i, ja), table.value(i, jb)) {
                    xs.push(x);
                    ys.push(y);
                }
            }
            let rho = if xs.len() < 2 {
                degenerate_pairs.push((labels[a].clone(), labels[b].clone()));
                0.0
            } else {
                match pearson(&midranks(&xs), &midranks(&ys)) {
                    Some(r) => r,
                    None => {
                        degenerate_pairs.push((labels[a].clone(), labels[b].clone()));
                        0.0
                    }
                }
            };
            values[a][b] = rho;
            values[b][a] = rho;
        }
    }
    Ok(CorrelationMatrix {
        labels,
        values,
        degenerate_pairs,
    })
}

/// Pearson correlation; `None` when either side is constant.
fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}
