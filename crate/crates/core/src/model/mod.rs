//! Modality extractors, the fusion prediction head, the composite training
//! loss, evaluation metrics and the logistic baseline.

mod baseline;
mod extractors;
mod fusion;
mod head;
pub mod layers;
mod metrics;
mod params;
mod stroke;

pub use baseline::{
    cohort_z_scores, composite_risk_index, logistic_baseline_fit, logistic_baseline_predict, BaselineOptions,
    FeatureVector, LogisticBaseline, RiskIndex, Standardizer,
};
pub use extractors::{ExtractorSpec, Extractors};
pub use fusion::{train_head, FusionGradient, FusionInput, FusionModel, TrainConfig, TrainOutcome};
pub use head::{bce, composite_loss, predict, probability, EntropySign, LossWeights, PredictionHead, PROB_FLOOR};
pub use layers::{attention_pool, bilstm_forward, conv1d_forward, maxpool_forward, BiLstm, Conv1d, LstmWeights};
pub use metrics::{auc, metrics, MetricsReport};
pub use params::{MatrixJson, ProjectionJson, SavedModel};
pub use stroke::{stroke_residual, StrokeSurrogate};
