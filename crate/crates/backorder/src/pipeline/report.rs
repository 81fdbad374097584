//! Experiment report shapes and their CSV renderings: a metrics comparison
//! table, an economics table, the screening table, and importance rows.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{MetricsReport, PrPoint, RocPoint};
use crate::interpret::ImportanceReport;

pub const REPORT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub seed: u64,
    pub started_unix_ms: u64,
    pub artifact_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningRow {
    pub attribute: String,
    pub method: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EconomicsRow {
    pub optimal_profit: f64,
    pub misclassification_cost: f64,
    pub revenue: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub model: String,
    pub transform: String,
    pub metrics: Option<MetricsReport>,
    pub economics: Option<EconomicsRow>,
    pub cost_optimal_threshold: Option<f64>,
    pub cost_at_optimal_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u32,
    pub provenance: Provenance,
    pub rows: Vec<ModelRow>,
    pub screening: Vec<ScreeningRow>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub importance: Option<ImportanceReport>,
}

fn write_file(path: impl AsRef<Path>, contents: &str) -> Result<()> {
    std::fs::write(path.as_ref(), contents).map_err(|e| Error::io(path.as_ref(), e))
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

/// Metrics comparison CSV: one row per model, metric columns rounded to 4
/// decimal places, confusion counts exact.
pub fn write_metrics_csv(rows: &[ModelRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(
        "model,transform,roc_auc,pr_auc,macro_f1,precision,recall,mcc,brier,tp,fp,fn,tn,threshold,error\n",
    );
    for row in rows {
        match &row.metrics {
            Some(m) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},",
                    row.model,
                    row.transform,
                    fmt4(m.roc_auc),
                    fmt4(m.pr_auc),
                    fmt4(m.macro_f1),
                    fmt4(m.precision),
                    fmt4(m.recall),
                    fmt4(m.mcc),
                    fmt4(m.brier),
                    m.confusion.tp,
                    m.confusion.fp,
                    m.confusion.fn_,
                    m.confusion.tn,
                    m.threshold,
                );
            }
            None => {
                let _ = writeln!(
                    out,
                    "{},{},,,,,,,,,,,,,{}",
                    row.model,
                    row.transform,
                    row.error.as_deref().unwrap_or("failed").replace(',', ";"),
                );
            }
        }
    }
    write_file(path, &out)
}

/// Economics CSV: classifier, optimal profit, misclassification cost.
pub fn write_economics_csv(rows: &[ModelRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from(
        "classifier,transform,optimal_profit,misclassification_cost,revenue,converged\n",
    );
    for row in rows {
        match &row.economics {
            Some(e) => {
                let _ = writeln!(
                    out,
                    "{},{},{:.2},{:.2},{:.2},{}",
                    row.model,
                    row.transform,
                    e.optimal_profit,
                    e.misclassification_cost,
                    e.revenue,
                    e.converged,
                );
            }
            None => {
                let _ = writeln!(out, "{},{},,,,", row.model, row.transform);
            }
        }
    }
    write_file(path, &out)
}

/// Screening CSV: attribute, test, statistic, p-value.
pub fn write_screening_csv(rows: &[ScreeningRow], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("attribute,method,statistic,p_value,note\n");
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.attribute,
            row.method,
            row.statistic.map(|v| v.to_string()).unwrap_or_default(),
            row.p_value.map(|v| v.to_string()).unwrap_or_default(),
            row.note.as_deref().unwrap_or("").replace(',', ";"),
        );
    }
    write_file(path, &out)
}

/// Importance CSV, sorted by mean drop descending (bar-chart ready).
pub fn write_importance_csv(report: &ImportanceReport, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("feature,mean_drop,std_dev,repeats\n");
    for f in &report.features {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            f.feature,
            f.mean_drop,
            f.std_dev.map(|v| v.to_string()).unwrap_or_default(),
            f.repeats,
        );
    }
    write_file(path, &out)
}

/// Labeled correlation matrix, one row per attribute.
pub fn write_correlation_csv(
    matrix: &crate::stats::CorrelationMatrix,
    path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = String::from("attribute");
    for label in &matrix.labels {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for (label, row) in matrix.labels.iter().zip(&matrix.values) {
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, ",{v:.4}");
        }
        out.push('\n');
    }
    write_file(path, &out)
}

pub fn write_roc_csv(points: &[RocPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("threshold,fpr,tpr\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fpr, p.tpr);
    }
    write_file(path, &out)
}

pub fn write_pr_csv(points: &[PrPoint], path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::from("threshold,recall,precision\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.recall, p.precision);
    }
    write_file(path, &out)
}
