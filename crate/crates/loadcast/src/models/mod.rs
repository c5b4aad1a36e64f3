//! Forecasting kernels behind one fit/predict contract: the persistence
//! benchmark, classifiers over a K-Means-discretized target (Gaussian naive
//! Bayes, decision tree, linear SVC), and real-valued regressors (decision
//! tree, linear SVR).
//!
//! Classifier families first cluster the kWh targets into a codebook, train
//! on the cluster labels, and predict the chosen cluster's centroid.
//! Regressor output is clamped to zero from below; consumption is never
//! negative. Every fit is a full retrain.

pub mod gnb;
pub mod kmeans;
pub mod svm;
pub mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use gnb::GaussianNb;
use kmeans::KMeansCodebook;
use svm::{LinearSvc, LinearSvr, SvmParams};
use tree::{ClassificationTree, RegressionTree, TreeParams};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot fit on an empty training matrix")]
    EmptyTraining,
    #[error("training matrix has {rows} rows but {targets} targets")]
    ShapeMismatch { rows: usize, targets: usize },
    #[error("model was trained on {expected} features, input has {got}")]
    LayoutMismatch { expected: usize, got: usize },
    #[error("unknown model name `{0}`")]
    UnknownModel(String),
    #[error("unknown hyperparameter `{0}`")]
    UnknownHyperParam(String),
    #[error("invalid value for hyperparameter `{key}`: {value}")]
    InvalidHyperParam { key: String, value: String },
}

/// The six trainable forecasting families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelFamily {
    Persistence,
    GnbCls,
    TreeCls,
    SvmCls,
    TreeReg,
    SvmReg,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 6] = [
        ModelFamily::Persistence,
        ModelFamily::GnbCls,
        ModelFamily::TreeCls,
        ModelFamily::SvmCls,
        ModelFamily::TreeReg,
        ModelFamily::SvmReg,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ModelFamily::Persistence => "persistence",
            ModelFamily::GnbCls => "gnb-cls",
            ModelFamily::TreeCls => "tree-cls",
            ModelFamily::SvmCls => "svm-cls",
            ModelFamily::TreeReg => "tree-reg",
            ModelFamily::SvmReg => "svm-reg",
        }
    }

    pub fn is_classifier(&self) -> bool {
        matches!(self, ModelFamily::GnbCls | ModelFamily::TreeCls | ModelFamily::SvmCls)
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "persistence" => ModelFamily::Persistence,
            "gnb-cls" | "gnb" => ModelFamily::GnbCls,
            "tree-cls" => ModelFamily::TreeCls,
            "svm-cls" => ModelFamily::SvmCls,
            "tree-reg" | "tree" => ModelFamily::TreeReg,
            "svm-reg" | "svm" => ModelFamily::SvmReg,
            other => return Err(ModelError::UnknownModel(other.to_string())),
        })
    }
}

/// Validated hyperparameters for every family; unused knobs are ignored by
/// families that do not consume them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HyperParams {
    pub kmeans_k: usize,
    pub kmeans_max_iter: usize,
    pub tree_max_depth: Option<usize>,
    pub tree_min_samples_split: usize,
    pub svm_epsilon: f64,
    pub svm_learning_rate: f64,
    pub svm_epochs: usize,
    pub svm_regularization: f64,
    pub seed: u64,
}

impl Default for HyperParams {
    fn default() -> Self {
        let svm = SvmParams::default();
        let tree = TreeParams::default();
        Self {
            kmeans_k: 8,
            kmeans_max_iter: 100,
            tree_max_depth: tree.max_depth,
            tree_min_samples_split: tree.min_samples_split,
            svm_epsilon: svm.epsilon,
            svm_learning_rate: svm.learning_rate,
            svm_epochs: svm.epochs,
            svm_regularization: svm.regularization,
            seed: 0,
        }
    }
}

impl HyperParams {
    /// Apply a `key=value` override as given on the command line.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ModelError> {
        let invalid = || ModelError::InvalidHyperParam {
            key: key.to_string(),
            value: value.to_string(),
        };
        match key {
            "kmeans_k" | "k" => {
                self.kmeans_k = value.parse().map_err(|_| invalid())?;
                if self.kmeans_k == 0 {
                    return Err(invalid());
                }
            }
            "kmeans_max_iter" => {
                self.kmeans_max_iter = value.parse().map_err(|_| invalid())?;
                if self.kmeans_max_iter == 0 {
                    return Err(invalid());
                }
            }
            "max_depth" => {
                self.tree_max_depth = match value {
                    "none" | "unlimited" => None,
                    v => Some(v.parse().map_err(|_| invalid())?),
                };
            }
            "min_samples_split" => {
                self.tree_min_samples_split = value.parse().map_err(|_| invalid())?;
                if self.tree_min_samples_split < 2 {
                    return Err(invalid());
                }
            }
            "epsilon" => {
                self.svm_epsilon = value.parse().map_err(|_| invalid())?;
                if self.svm_epsilon < 0.0 {
                    return Err(invalid());
                }
            }
            "learning_rate" => {
                self.svm_learning_rate = value.parse().map_err(|_| invalid())?;
                if self.svm_learning_rate <= 0.0 {
                    return Err(invalid());
                }
            }
            "epochs" => {
                self.svm_epochs = value.parse().map_err(|_| invalid())?;
                if self.svm_epochs == 0 {
                    return Err(invalid());
                }
            }
            "regularization" => {
                self.svm_regularization = value.parse().map_err(|_| invalid())?;
                if self.svm_regularization < 0.0 {
                    return Err(invalid());
                }
            }
            "seed" => self.seed = value.parse().map_err(|_| invalid())?,
            other => return Err(ModelError::UnknownHyperParam(other.to_string())),
        }
        Ok(())
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.tree_max_depth,
            min_samples_split: self.tree_min_samples_split,
        }
    }

    fn svm_params(&self) -> SvmParams {
        SvmParams {
            epsilon: self.svm_epsilon,
            learning_rate: self.svm_learning_rate,
            epochs: self.svm_epochs,
            regularization: self.svm_regularization,
            seed: self.seed,
        }
    }
}

/// A family plus its hyperparameters; the unit of model configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: ModelFamily,
    #[serde(default)]
    pub hyperparams: HyperParams,
}

impl ModelSpec {
    pub fn new(family: ModelFamily) -> Self {
        Self { family, hyperparams: HyperParams::default() }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.hyperparams.seed = seed;
        self
    }
}

/// Live-interval context a prediction runs against: persistence scales the
/// current consumption by the horizon/base length ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictContext {
    pub current_consum_kwh: f64,
    pub horizon_base_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
enum Learned {
    Persistence,
    Gnb { codebook: KMeansCodebook, classifier: GaussianNb },
    TreeCls { codebook: KMeansCodebook, classifier: ClassificationTree },
    SvmCls { codebook: KMeansCodebook, classifier: LinearSvc },
    TreeReg { regressor: RegressionTree },
    SvmReg { regressor: LinearSvr },
}

/// Frozen result of one full retrain; predictions are deterministic.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FittedModel {
    family: ModelFamily,
    n_features: Option<usize>,
    learned: Learned,
}

/// Schema marker embedded in serialized model blobs.
pub const MODEL_BLOB_VERSION: u32 = 1;

#[derive(Serialize)]
struct ModelBlob<'a> {
    version: u32,
    model: &'a FittedModel,
}

impl FittedModel {
    pub fn family(&self) -> ModelFamily {
        self.family
    }

    /// JSON dump for offline inspection, tagged with a schema version.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelBlob { version: MODEL_BLOB_VERSION, model: self })
            .expect("model serializes")
    }

    pub fn codebook(&self) -> Option<&KMeansCodebook> {
        match &self.learned {
            Learned::Gnb { codebook, .. }
            | Learned::TreeCls { codebook, .. }
            | Learned::SvmCls { codebook, .. } => Some(codebook),
            _ => None,
        }
    }
}

/// Full retrain of the requested family on one training matrix.
pub fn fit(spec: &ModelSpec, x: &[Vec<f64>], y: &[f64]) -> Result<FittedModel, ModelError> {
    if x.len() != y.len() {
        return Err(ModelError::ShapeMismatch { rows: x.len(), targets: y.len() });
    }
    if spec.family != ModelFamily::Persistence && x.is_empty() {
        return Err(ModelError::EmptyTraining);
    }
    let hp = &spec.hyperparams;
    let fit_codebook =
        || KMeansCodebook::fit(y, hp.kmeans_k, hp.kmeans_max_iter, hp.seed);
    let learned = match spec.family {
        ModelFamily::Persistence => Learned::Persistence,
        ModelFamily::GnbCls => {
            let codebook = fit_codebook();
            let labels = codebook.labels(y);
            let classifier = GaussianNb::fit(x, &labels, codebook.len());
            Learned::Gnb { codebook, classifier }
        }
        ModelFamily::TreeCls => {
            let codebook = fit_codebook();
            let labels = codebook.labels(y);
            let classifier = ClassificationTree::fit(x, &labels, codebook.len(), hp.tree_params());
            Learned::TreeCls { codebook, classifier }
        }
        ModelFamily::SvmCls => {
            let codebook = fit_codebook();
            let labels = codebook.labels(y);
            let classifier = LinearSvc::fit(x, &labels, codebook.len(), &hp.svm_params());
            Learned::SvmCls { codebook, classifier }
        }
        ModelFamily::TreeReg => {
            Learned::TreeReg { regressor: RegressionTree::fit(x, y, hp.tree_params()) }
        }
        ModelFamily::SvmReg => {
            Learned::SvmReg { regressor: LinearSvr::fit(x, y, &hp.svm_params()) }
        }
    };
    Ok(FittedModel {
        family: spec.family,
        n_features: x.first().map(Vec::len),
        learned,
    })
}

/// kWh forecast for one feature row. Classifier forecasts are codebook
/// centroids; regressor forecasts are clamped to be non-negative.
pub fn predict(model: &FittedModel, x: &[f64], ctx: &PredictContext) -> Result<f64, ModelError> {
    if let Some(expected) = model.n_features {
        if model.family != ModelFamily::Persistence && x.len() != expected {
            return Err(ModelError::LayoutMismatch { expected, got: x.len() });
        }
    }
    let forecast = match &model.learned {
        Learned::Persistence => ctx.current_consum_kwh * ctx.horizon_base_ratio,
        Learned::Gnb { codebook, classifier } => codebook.centroid(classifier.predict(x)),
        Learned::TreeCls { codebook, classifier } => codebook.centroid(classifier.predict(x)),
        Learned::SvmCls { codebook, classifier } => codebook.centroid(classifier.predict(x)),
        Learned::TreeReg { regressor } => regressor.predict(x).max(0.0),
        Learned::SvmReg { regressor } => regressor.predict(x).max(0.0),
    };
    Ok(forecast)
}
