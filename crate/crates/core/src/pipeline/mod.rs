//! Model composition, evaluation, whole-page spotting and model files.

mod cascade;
mod metrics;
mod model;
mod persist;
mod spot;

pub use cascade::{cascade_evaluate_oracle, cascade_predict, CascadeMode, CascadeModel, CascadeOutcome};
pub use metrics::{evaluate, predict_all, Confusion, Metrics};
pub use model::{train_encoder_model, train_knn, train_svm, ClassifierModel, FeatureSpec, KnnConfig, SvmConfig};
pub use persist::{load_model, model_from_bytes, model_id, model_to_bytes, save_model, MODEL_FORMAT, MODEL_VERSION};
pub use spot::{
    extract_page, label_from_truth, overlay_png, score_spotting, spot, ScoredBox, SpotConfig, SpotReport, SpotScore,
};
