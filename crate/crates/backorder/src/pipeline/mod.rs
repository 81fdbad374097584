//! Configuration-driven experiment orchestration: load or synthesise data,
//! split, impute, scale, optionally oversample, train a model, evaluate it
//! on the held-out rows, score the economics, and rank feature importance.
//! Every stage draws from its own seed stream, so one (config, seed) pair
//! reproduces every number regardless of thread count.

mod report;

pub use report::{
    EconomicsRow, ExperimentReport, ModelRow, Provenance, ScreeningRow, REPORT_FORMAT_VERSION,
};

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    self, generate_synthetic, inventory_schema, load_csv, DataTable, FeatureMatrix, SplitIndices,
    SyntheticSpec,
};
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::evaluate::{
    confusion, optimize_threshold, pr_curve, roc_curve, summary_metrics, PrPoint, RocPoint,
    ThresholdObjective,
};
use crate::interpret::{permutation_importance, ImportanceMetric, ImportanceReport};
use crate::model::{predict_labels, Classifier, DummyClassifier};
use crate::neural::{
    encode_and_augment, train_mlp_classifier, train_vae, MlpClassifier, MlpTrainOptions, VaeModel,
    VaeTrainOptions,
};
use crate::preprocess::{
    fit_iterative_imputer, fit_transform, smote, FittedTransform, ImputerModel, ImputerSettings,
    TransformKind,
};
use crate::stats::{chi_square, mann_whitney_u};
use crate::tree::{
    fit_balanced_bagging, fit_random_forest, grid_search_cv, BaggedEnsemble, EnsembleConfig,
    ParamGrid,
};

/// Where the rows come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Csv { path: PathBuf },
    Synthetic(SyntheticDataSpec),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticDataSpec {
    pub n_rows: usize,
    pub positive_rate: f64,
    pub n_informative: usize,
}

impl Default for SyntheticDataSpec {
    fn default() -> Self {
        SyntheticDataSpec {
            n_rows: 20_000,
            positive_rate: 0.01,
            n_informative: 6,
        }
    }
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic(SyntheticDataSpec::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub fraction: f64,
    pub stratify: bool,
}

impl Default for SplitSettings {
    fn default() -> Self {
        SplitSettings {
            fraction: 0.8,
            stratify: true,
        }
    }
}

/// Train-set resampling ahead of model fitting. Balanced bagging
/// undersamples internally per bag, so `balanced-bagging-internal` is a
/// documentation marker that behaves like `none` at this stage.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Resampling {
    #[default]
    None,
    Smote(SmoteSettings),
    BalancedBaggingInternal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSettings {
    pub k_neighbors: usize,
    pub target_ratio: f64,
}

impl Default for SmoteSettings {
    fn default() -> Self {
        SmoteSettings {
            k_neighbors: 5,
            target_ratio: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BbcSettings {
    pub n_estimators: usize,
    pub max_features: f64,
    pub bootstrap: bool,
    pub bootstrap_features: bool,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Run grid-search cross-validation before the final fit.
    pub tune: bool,
    /// Search the full lattice instead of the desk-scale sub-lattice.
    pub full_grid: bool,
    pub folds: usize,
}

impl Default for BbcSettings {
    fn default() -> Self {
        BbcSettings {
            n_estimators: 200,
            max_features: 1.0,
            bootstrap: true,
            bootstrap_features: false,
            max_depth: None,
            min_leaf: 1,
            tune: false,
            full_grid: false,
            folds: 5,
        }
    }
}

impl BbcSettings {
    fn ensemble_config(&self, balanced: bool, seed: u64) -> EnsembleConfig {
        EnsembleConfig {
            n_estimators: self.n_estimators,
            max_features: self.max_features,
            bootstrap: self.bootstrap,
            bootstrap_features: self.bootstrap_features,
            balanced,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for VaeSettings {
    fn default() -> Self {
        VaeSettings {
            latent_dim: 10,
            hidden_dim: 32,
            epochs: 20,
            batch_size: 32,
            learning_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden_sizes: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub class_weight: Option<f64>,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings {
            hidden_sizes: vec![32],
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            class_weight: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    Dummy {
        /// Emit this constant probability instead of seeded uniform draws.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        constant: Option<f64>,
    },
    Bbc(BbcSettings),
    VaeBbc {
        #[serde(default)]
        vae: VaeSettings,
        #[serde(default)]
        bbc: BbcSettings,
    },
    RandomForest(BbcSettings),
    Mlp(MlpSettings),
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec::Bbc(BbcSettings::default())
    }
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Dummy { .. } => "dummy",
            ModelSpec::Bbc(_) => "bbc",
            ModelSpec::VaeBbc { .. } => "vae_bbc",
            ModelSpec::RandomForest(_) => "random_forest",
            ModelSpec::Mlp(_) => "mlp",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Decision threshold for the reported confusion matrix.
    pub threshold: f64,
    pub fp_cost: f64,
    pub fn_cost: f64,
    /// Also compute permutation importance on the test rows.
    pub importance: bool,
    pub importance_repeats: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings {
            threshold: 0.5,
            fp_cost: 10.0,
            fn_cost: 1.0,
            importance: true,
            importance_repeats: 10,
        }
    }
}

/// One experiment: every field has a default, unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitSettings,
    pub imputer: ImputerSettings,
    pub transform: TransformKind,
    pub resampling: Resampling,
    pub model: ModelSpec,
    pub evaluation: EvalSettings,
    pub seed: u64,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            data: DataSource::default(),
            split: SplitSettings::default(),
            imputer: ImputerSettings::default(),
            transform: TransformKind::default(),
            resampling: Resampling::default(),
            model: ModelSpec::default(),
            evaluation: EvalSettings::default(),
            seed: 0,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let mut config = Self::from_json(&text)?;
        if config.output_dir.as_os_str().is_empty() {
            config.output_dir = PathBuf::from("out");
        }
        Ok(config)
    }

    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).unwrap_or_default();
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for b in text.as_bytes() {
            h ^= u64::from(*b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// A multi-model comparison: the cartesian product of models x transforms
/// over one base configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatrixConfig {
    pub base: RunConfig,
    pub models: Vec<ModelSpec>,
    pub transforms: Vec<TransformKind>,
}

impl Default for MatrixConfig {
    fn default() -> Self {
        MatrixConfig {
            base: RunConfig::default(),
            models: vec![
                ModelSpec::Dummy { constant: None },
                ModelSpec::Bbc(BbcSettings::default()),
            ],
            transforms: vec![TransformKind::Robust, TransformKind::LogStandard],
        }
    }
}

impl MatrixConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Row order is models-major, transforms-minor, matching config order.
    pub fn expand(&self) -> Vec<RunConfig> {
        let mut out = Vec::with_capacity(self.models.len() * self.transforms.len());
        for model in &self.models {
            for &transform in &self.transforms {
                out.push(RunConfig {
                    model: model.clone(),
                    transform,
                    ..self.base.clone()
                });
            }
        }
        out
    }
}

/// Everything the data stages produce, reused by every entry point.
pub struct PreparedData {
    /// Imputed table in original units (economics runs on this).
    pub imputed: DataTable,
    /// Imputed and scaled table (models run on this).
    pub transformed: DataTable,
    pub x: FeatureMatrix,
    pub y: Vec<u8>,
    pub split: SplitIndices,
    pub screening: Vec<ScreeningRow>,
    pub transform: FittedTransform,
    pub imputer: ImputerModel,
}

fn stage<T>(name: &'static str, result: Result<T>) -> Result<T> {
    result.map_err(|e| e.in_stage(name))
}

fn load_table(config: &RunConfig) -> Result<DataTable> {
    match &config.data {
        DataSource::Csv { path } => load_csv(path, &inventory_schema()),
        DataSource::Synthetic(spec) => generate_synthetic(&SyntheticSpec {
            n_rows: spec.n_rows,
            positive_rate: spec.positive_rate,
            n_informative: spec.n_informative,
            seed: derive_seed(config.seed, "data"),
        }),
    }
}

/// Runs load, split, screening, imputation, and scaling.
pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let table = stage("load", load_table(config))?;
    let split = stage(
        "split",
        dataset::split(&table, config.split.fraction, config.seed, config.split.stratify),
    )?;
    let screening = stage("screen", screening_rows(&table, &split.train))?;
    let imputer = stage(
        "impute",
        fit_iterative_imputer(&table, &split.train, &config.imputer),
    )?;
    let imputed = stage("impute", imputer.apply(&table))?;
    let transform = stage(
        "transform",
        fit_transform(
            config.transform,
            &imputed,
            &split.train,
            &imputed.numeric_indices(),
        ),
    )?;
    let transformed = stage("transform", transform.apply(&imputed))?;
    let x = stage("transform", transformed.to_features())?;
    let y = transformed.labels();
    Ok(PreparedData {
        imputed,
        transformed,
        x,
        y,
        split,
        screening,
        transform,
        imputer,
    })
}

/// Mann-Whitney per numeric attribute (positive vs negative rows) and
/// chi-square per risk flag against the target, over the train rows only.
/// Missing cells are excluded; degenerate tests carry a note instead of a
/// statistic.
pub fn screening_rows(table: &DataTable, train_idx: &[usize]) -> Result<Vec<ScreeningRow>> {
    let labels = table.labels();
    let mut rows = Vec::new();
    for &j in &table.numeric_indices() {
        let name = table.schema[j].name.clone();
        let mut positive = Vec::new();
        let mut negative = Vec::new();
        for &i in train_idx {
            if let Some(v) = table.value(i, j) {
                if labels[i] == 1 {
                    positive.push(v);
                } else {
                    negative.push(v);
                }
            }
        }
        let row = match mann_whitney_u(&positive, &negative) {
            Ok(r) => ScreeningRow {
                attribute: name,
                method: "mann-whitney-u".into(),
                statistic: Some(r.statistic),
                p_value: Some(r.p_value),
                note: None,
            },
            Err(e) => ScreeningRow {
                attribute: name,
                method: "mann-whitney-u".into(),
                statistic: None,
                p_value: None,
                note: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    let target = table.target_index();
    for &j in &table.yes_no_indices() {
        let name = table.schema[j].name.clone();
        let a: Vec<f64> = train_idx.iter().map(|&i| table.column(j)[i]).collect();
        let b: Vec<f64> = train_idx.iter().map(|&i| table.column(target)[i]).collect();
        let row = match chi_square(&a, &b) {
            Ok(r) => ScreeningRow {
                attribute: name,
                method: "chi-square".into(),
                statistic: Some(r.statistic),
                p_value: Some(r.p_value),
                note: None,
            },
            Err(e) => ScreeningRow {
                attribute: name,
                method: "chi-square".into(),
                statistic: None,
                p_value: None,
                note: Some(e.to_string()),
            },
        };
        rows.push(row);
    }
    Ok(rows)
}

/// A trained model of any supported kind, serialisable for standalone
/// prediction. The VAE+BBC hybrid augments raw features internally, so its
/// input space stays the original feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum TrainedModel {
    Dummy(DummyClassifier),
    Bbc(BaggedEnsemble),
    RandomForest(BaggedEnsemble),
    VaeBbc { vae: VaeModel, bbc: BaggedEnsemble },
    Mlp(MlpClassifier),
}

impl Classifier for TrainedModel {
    fn predict_proba(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        match self {
            TrainedModel::Dummy(m) => m.predict_proba(x),
            TrainedModel::Bbc(m) | TrainedModel::RandomForest(m) => m.predict_proba(x),
            TrainedModel::VaeBbc { vae, bbc } => {
                let augmented = encode_and_augment(vae, x)?;
                bbc.predict_proba(&augmented)
            }
            TrainedModel::Mlp(m) => m.predict_proba(x),
        }
    }

    fn input_dim(&self) -> Option<usize> {
        match self {
            TrainedModel::Dummy(m) => m.input_dim(),
            TrainedModel::Bbc(m) | TrainedModel::RandomForest(m) => m.input_dim(),
            TrainedModel::VaeBbc { vae, .. } => Some(vae.input_dim),
            TrainedModel::Mlp(m) => m.input_dim(),
        }
    }
}

/// model.json format: a version field wrapping the tagged model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedModel {
    pub version: u32,
    pub model: TrainedModel,
}

pub const SAVED_MODEL_VERSION: u32 = 1;

impl SavedModel {
    pub fn save(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
        let saved = SavedModel {
            version: SAVED_MODEL_VERSION,
            model: model.clone(),
        };
        std::fs::write(path.as_ref(), serde_json::to_string(&saved)?)
            .map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainedModel> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        let saved: SavedModel = serde_json::from_str(&text)?;
        if saved.version != SAVED_MODEL_VERSION {
            return Err(Error::FormatVersion {
                expected: SAVED_MODEL_VERSION,
                found: saved.version,
            });
        }
        Ok(saved.model)
    }
}

/// The training rows a model consumes: either indices into the shared
/// matrix or a freshly resampled matrix of its own.
enum TrainSet {
    Shared(Vec<usize>),
    Resampled { x: FeatureMatrix, y: Vec<u8> },
}

fn resample(config: &RunConfig, prep: &PreparedData) -> Result<TrainSet> {
    match config.resampling {
        Resampling::None | Resampling::BalancedBaggingInternal => {
            Ok(TrainSet::Shared(prep.split.train.clone()))
        }
        Resampling::Smote(settings) => {
            let oversampled = smote(
                &prep.transformed,
                &prep.split.train,
                settings.k_neighbors,
                settings.target_ratio,
                derive_seed(config.seed, "smote"),
            )?;
            let x = oversampled.to_features()?;
            let y = oversampled.labels();
            Ok(TrainSet::Resampled { x, y })
        }
    }
}

pub fn train_model(config: &RunConfig, prep: &PreparedData) -> Result<TrainedModel> {
    let train_set = stage("resample", resample(config, prep))?;
    let (x, y, rows): (&FeatureMatrix, &[u8], Vec<usize>) = match &train_set {
        TrainSet::Shared(rows) => (&prep.x, &prep.y, rows.clone()),
        TrainSet::Resampled { x, y } => (x, y, (0..x.n_rows()).collect()),
    };
    let model_seed = derive_seed(config.seed, "model");
    let trained = match &config.model {
        ModelSpec::Dummy { constant } => {
            let dummy = match constant {
                Some(p) => DummyClassifier::constant(*p)?,
                None => DummyClassifier::uniform(derive_seed(config.seed, "dummy")),
            };
            TrainedModel::Dummy(dummy)
        }
        ModelSpec::Bbc(settings) => {
            let fitted = fit_bbc_with_optional_tuning(settings, x, y, &rows, config.seed, model_seed)?;
            TrainedModel::Bbc(fitted)
        }
        ModelSpec::RandomForest(settings) => {
            let cfg = settings.ensemble_config(false, model_seed);
            TrainedModel::RandomForest(fit_random_forest(x, y, &rows, &cfg)?)
        }
        ModelSpec::VaeBbc { vae, bbc } => {
            let opts = VaeTrainOptions {
                latent_dim: vae.latent_dim,
                hidden_dim: vae.hidden_dim,
                epochs: vae.epochs,
                batch_size: vae.batch_size,
                learning_rate: vae.learning_rate,
                seed: derive_seed(config.seed, "vae"),
            };
            let (vae_model, _report) = train_vae(x, &rows, &opts)?;
            let augmented = encode_and_augment(&vae_model, x)?;
            let fitted =
                fit_bbc_with_optional_tuning(bbc, &augmented, y, &rows, config.seed, model_seed)?;
            TrainedModel::VaeBbc {
                vae: vae_model,
                bbc: fitted,
            }
        }
        ModelSpec::Mlp(settings) => {
            let opts = MlpTrainOptions {
                hidden_sizes: settings.hidden_sizes.clone(),
                epochs: settings.epochs,
                batch_size: settings.batch_size,
                learning_rate: settings.learning_rate,
                class_weight: settings.class_weight,
                seed: model_seed,
            };
            let (mlp, _report) = train_mlp_classifier(x, y, &rows, &opts)?;
            TrainedModel::Mlp(mlp)
        }
    };
    Ok(trained)
}

fn fit_bbc_with_optional_tuning(
    settings: &BbcSettings,
    x: &FeatureMatrix,
    y: &[u8],
    rows: &[usize],
    master_seed: u64,
    model_seed: u64,
) -> Result<BaggedEnsemble> {
    let mut cfg = settings.ensemble_config(true, model_seed);
    if settings.tune {
        let grid = if settings.full_grid {
            ParamGrid::full()
        } else {
            ParamGrid::desk_default()
        };
        let search = grid_search_cv(
            x,
            y,
            rows,
            &grid,
            &cfg,
            settings.folds,
            derive_seed(master_seed, "grid"),
        )?;
        cfg = EnsembleConfig {
            seed: model_seed,
            ..search.best
        };
    }
    fit_balanced_bagging(x, y, rows, &cfg)
}

/// Scores a trained model on the test rows: metric bundle, cost-optimal
/// threshold, economics, and the curve point lists.
pub struct Evaluation {
    pub row: ModelRow,
    pub roc_points: Vec<RocPoint>,
    pub pr_points: Vec<PrPoint>,
}

pub fn evaluate_model(
    config: &RunConfig,
    prep: &PreparedData,
    model: &TrainedModel,
) -> Result<Evaluation> {
    let test = &prep.split.test;
    let x_test = prep.x.select_rows(test);
    let y_test: Vec<u8> = test.iter().map(|&i| prep.y[i]).collect();
    let probs = stage("evaluate", model.predict_proba(&x_test))?;
    let threshold = config.evaluation.threshold;
    let cm = stage("evaluate", confusion(&y_test, &probs, threshold))?;
    let metrics = stage("evaluate", summary_metrics(cm, &y_test, &probs, threshold))?;
    let roc_points = stage("evaluate", roc_curve(&y_test, &probs))?;
    let pr_points = stage("evaluate", pr_curve(&y_test, &probs))?;
    let objective = ThresholdObjective::MinCost {
        fp_cost: config.evaluation.fp_cost,
        fn_cost: config.evaluation.fn_cost,
    };
    let (optimal_threshold, optimal_cost) =
        stage("evaluate", optimize_threshold(&y_test, &probs, objective))?;

    let economics = stage("economics", economics_row(config, prep, &y_test, &probs, cm))?;

    Ok(Evaluation {
        row: ModelRow {
            model: config.model.name().to_string(),
            transform: config.transform.name().to_string(),
            metrics: Some(metrics),
            economics: Some(economics),
            cost_optimal_threshold: Some(optimal_threshold),
            cost_at_optimal_threshold: Some(optimal_cost),
            error: None,
        },
        roc_points,
        pr_points,
    })
}

fn economics_row(
    config: &RunConfig,
    prep: &PreparedData,
    y_test: &[u8],
    probs: &[f64],
    cm: crate::evaluate::ConfusionMatrix,
) -> Result<EconomicsRow> {
    use crate::economics::{
        maximize_profit, misclassification_cost, Bounds, CostParams,
    };
    let _ = y_test;
    let predicted = predict_labels(probs, config.evaluation.threshold);
    let profit = maximize_profit(
        &prep.imputed,
        &prep.split.test,
        &predicted,
        &CostParams::uniform(1.0),
        &[Bounds::nonnegative(); 5],
        &[],
    )?;
    let cost = misclassification_cost(&cm, config.evaluation.fp_cost, config.evaluation.fn_cost)?;
    Ok(EconomicsRow {
        optimal_profit: profit.profit,
        misclassification_cost: cost.total,
        revenue: profit.revenue,
        iterations: profit.iterations,
        converged: profit.converged,
    })
}

pub fn importance_report(
    config: &RunConfig,
    prep: &PreparedData,
    model: &TrainedModel,
) -> Result<ImportanceReport> {
    stage(
        "importance",
        permutation_importance(
            model,
            &prep.x,
            &prep.y,
            &prep.split.test,
            ImportanceMetric::RocAuc,
            config.evaluation.importance_repeats,
            derive_seed(config.seed, "importance"),
        ),
    )
}

fn provenance(config: &RunConfig) -> Provenance {
    Provenance {
        config_hash: config.hash(),
        seed: config.seed,
        started_unix_ms: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

/// In-memory single run: everything except file output.
pub fn run_experiment_in_memory(
    config: &RunConfig,
) -> Result<(ExperimentReport, TrainedModel, PreparedData, Evaluation)> {
    let prep = prepare_data(config)?;
    let model = stage("train", train_model(config, &prep))?;
    let evaluation = evaluate_model(config, &prep, &model)?;
    let importance = if config.evaluation.importance {
        Some(importance_report(config, &prep, &model)?)
    } else {
        None
    };
    let report = ExperimentReport {
        version: REPORT_FORMAT_VERSION,
        provenance: provenance(config),
        rows: vec![evaluation.row.clone()],
        screening: prep.screening.clone(),
        importance,
    };
    Ok((report, model, prep, evaluation))
}

/// Full single run: executes the stages and writes every report and
/// serialized artifact into the configured output directory. Deterministic
/// for a fixed (config, seed) up to the provenance timestamp.
pub fn run_experiment(config: &RunConfig) -> Result<ExperimentReport> {
    let (report, model, prep, evaluation) = run_experiment_in_memory(config)?;
    let out = &config.output_dir;
    stage("write", write_dir(out))?;
    stage("write", write_json(out.join("config.json"), config))?;
    stage("write", write_json(out.join("report.json"), &report))?;
    stage("write", report::write_metrics_csv(&report.rows, out.join("metrics.csv")))?;
    stage("write", report::write_economics_csv(&report.rows, out.join("economics.csv")))?;
    stage(
        "write",
        report::write_screening_csv(&report.screening, out.join("screening.csv")),
    )?;
    stage(
        "write",
        write_json(out.join("screening.json"), &report.screening),
    )?;
    if let Some(importance) = &report.importance {
        stage(
            "write",
            report::write_importance_csv(importance, out.join("importance.csv")),
        )?;
        stage("write", write_json(out.join("importance.json"), importance))?;
    }
    stage(
        "write",
        report::write_roc_csv(&evaluation.roc_points, out.join("roc_curve.csv")),
    )?;
    stage(
        "write",
        report::write_pr_csv(&evaluation.pr_points, out.join("pr_curve.csv")),
    )?;
    stage("write", SavedModel::save(&model, out.join("model.json")))?;
    stage("write", prep.transform.save(out.join("transform.json")))?;
    stage("write", prep.imputer.save(out.join("imputer.json")))?;
    stage("write", write_json(out.join("split.json"), &prep.split))?;
    Ok(report)
}

/// Runs every config, merging rows into one comparison report (config
/// order). Per-row failures are recorded and the matrix keeps going.
/// Screening comes from the first successful run.
pub fn run_model_matrix(configs: &[RunConfig]) -> Result<ExperimentReport> {
    if configs.is_empty() {
        return Err(Error::Argument("empty config list".into()));
    }
    let results: Vec<(ModelRow, Option<Vec<ScreeningRow>>)> = configs
        .par_iter()
        .map(|config| match run_experiment_in_memory(config) {
            Ok((_report, _, prep, evaluation)) => (evaluation.row, Some(prep.screening)),
            Err(e) => (
                ModelRow {
                    model: config.model.name().to_string(),
                    transform: config.transform.name().to_string(),
                    metrics: None,
                    economics: None,
                    cost_optimal_threshold: None,
                    cost_at_optimal_threshold: None,
                    error: Some(e.to_string()),
                },
                None,
            ),
        })
        .collect();
    let screening = results
        .iter()
        .find_map(|(_, s)| s.clone())
        .unwrap_or_default();
    let rows: Vec<ModelRow> = results.into_iter().map(|(row, _)| row).collect();
    Ok(ExperimentReport {
        version: REPORT_FORMAT_VERSION,
        provenance: provenance(&configs[0]),
        rows,
        screening,
        importance: None,
    })
}

/// Runs the matrix and writes the merged comparison into `out`.
pub fn run_matrix_to_dir(matrix: &MatrixConfig, out: &Path) -> Result<ExperimentReport> {
    let configs = matrix.expand();
    let report = run_model_matrix(&configs)?;
    write_dir(out)?;
    write_json(out.join("matrix_config.json"), matrix)?;
    write_json(out.join("report.json"), &report)?;
    report::write_metrics_csv(&report.rows, out.join("metrics.csv"))?;
    report::write_economics_csv(&report.rows, out.join("economics.csv"))?;
    report::write_screening_csv(&report.screening, out.join("screening.csv"))?;
    Ok(report)
}

/// The `prepare` entry point: processes the data and writes the processed
/// train/test tables plus the fitted transform artifacts.
pub fn prepare_to_dir(config: &RunConfig) -> Result<()> {
    let prep = prepare_data(config)?;
    let out = &config.output_dir;
    write_dir(out)?;
    let train_table = prep.transformed.select_rows(&prep.split.train);
    let test_table = prep.transformed.select_rows(&prep.split.test);
    dataset::write_csv(&train_table, out.join("processed_train.csv"))?;
    dataset::write_csv(&test_table, out.join("processed_test.csv"))?;
    prep.transform.save(out.join("transform.json"))?;
    prep.imputer.save(out.join("imputer.json"))?;
    write_json(out.join("split.json"), &prep.split)?;
    report::write_screening_csv(&prep.screening, out.join("screening.csv"))?;
    write_json(out.join("screening.json"), &prep.screening)?;
    write_json(out.join("config.json"), config)?;
    Ok(())
}

/// Loads a saved model plus its preprocessing artifacts from a run
/// directory and rebuilds the prepared data for the config's split.
pub fn load_saved_run(model_dir: &Path, config: &RunConfig) -> Result<(TrainedModel, PreparedData)> {
    let model = stage("load-model", SavedModel::load(model_dir.join("model.json")))?;
    let imputer = stage(
        "load-model",
        ImputerModel::load(model_dir.join("imputer.json")),
    )?;
    let transform = stage(
        "load-model",
        FittedTransform::load(model_dir.join("transform.json")),
    )?;
    let table = stage("load", load_table(config))?;
    let split = stage(
        "split",
        dataset::split(&table, config.split.fraction, config.seed, config.split.stratify),
    )?;
    let imputed = stage("impute", imputer.apply(&table))?;
    let transformed = stage("transform", transform.apply(&imputed))?;
    let x = stage("transform", transformed.to_features())?;
    let y = transformed.labels();
    Ok((
        model,
        PreparedData {
            imputed,
            transformed,
            x,
            y,
            split,
            screening: Vec::new(),
            transform,
            imputer,
        },
    ))
}

/// Scores a saved model on the config's test split and writes the metric
/// and economics reports.
pub fn evaluate_saved(model_dir: &Path, config: &RunConfig) -> Result<ExperimentReport> {
    let (model, prep) = load_saved_run(model_dir, config)?;
    let evaluation = evaluate_model(config, &prep, &model)?;
    let importance = if config.evaluation.importance {
        Some(importance_report(config, &prep, &model)?)
    } else {
        None
    };
    let report = ExperimentReport {
        version: REPORT_FORMAT_VERSION,
        provenance: provenance(config),
        rows: vec![evaluation.row],
        screening: Vec::new(),
        importance,
    };
    let out = &config.output_dir;
    write_dir(out)?;
    write_json(out.join("report.json"), &report)?;
    report::write_metrics_csv(&report.rows, out.join("metrics.csv"))?;
    report::write_economics_csv(&report.rows, out.join("economics.csv"))?;
    report::write_roc_csv(&evaluation.roc_points, out.join("roc_curve.csv"))?;
    report::write_pr_csv(&evaluation.pr_points, out.join("pr_curve.csv"))?;
    if let Some(importance) = &report.importance {
        report::write_importance_csv(importance, out.join("importance.csv"))?;
        write_json(out.join("importance.json"), importance)?;
    }
    Ok(report)
}

/// Permutation importance for a saved model, written to the output dir.
pub fn importance_saved(model_dir: &Path, config: &RunConfig) -> Result<ImportanceReport> {
    let (model, prep) = load_saved_run(model_dir, config)?;
    let importance = importance_report(config, &prep, &model)?;
    let out = &config.output_dir;
    write_dir(out)?;
    report::write_importance_csv(&importance, out.join("importance.csv"))?;
    write_json(out.join("importance.json"), &importance)?;
    Ok(importance)
}

/// Economics report for a saved model, written to the output dir.
pub fn economics_saved(model_dir: &Path, config: &RunConfig) -> Result<ExperimentReport> {
    let (model, prep) = load_saved_run(model_dir, config)?;
    let evaluation = evaluate_model(config, &prep, &model)?;
    let report = ExperimentReport {
        version: REPORT_FORMAT_VERSION,
        provenance: provenance(config),
        rows: vec![evaluation.row],
        screening: Vec::new(),
        importance: None,
    };
    let out = &config.output_dir;
    write_dir(out)?;
    report::write_economics_csv(&report.rows, out.join("economics.csv"))?;
    write_json(out.join("economics.json"), &report.rows)?;
    Ok(report)
}

/// The `screen` entry point: statistical screening plus the Spearman
/// correlation matrix of the numeric attributes (heatmap-ready CSV).
pub fn screen_to_dir(config: &RunConfig) -> Result<Vec<ScreeningRow>> {
    let table = stage("load", load_table(config))?;
    let split = stage(
        "split",
        dataset::split(&table, config.split.fraction, config.seed, config.split.stratify),
    )?;
    let screening = stage("screen", screening_rows(&table, &split.train))?;
    let correlation = stage(
        "screen",
        crate::stats::spearman_matrix(&table.select_rows(&split.train), &table.numeric_indices()),
    )?;
    let out = &config.output_dir;
    write_dir(out)?;
    report::write_screening_csv(&screening, out.join("screening.csv"))?;
    write_json(out.join("screening.json"), &screening)?;
    report::write_correlation_csv(&correlation, out.join("correlation.csv"))?;
    Ok(screening)
}

fn write_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: PathBuf, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}
