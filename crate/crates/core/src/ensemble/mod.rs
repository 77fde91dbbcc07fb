//! Stacking of base-model predictions with gradient boosted regression trees.
//!
//! Base models exchange [`PredictionSet`]s. Their predictions are laid out as
//! [`MetaFeatures`] with columns `model.lat, model.lon` per model (models
//! sorted by name), and one booster per coordinate is trained on all columns.

mod gbt;
mod kfold;
mod meta;
mod prediction;
mod stacking;

pub use gbt::{
    predict_gbt, train_gbt, train_gbt_traced, BoostTrace, GbtModel, GbtParams, RegressionTree,
    TreeNode,
};
pub use kfold::{
    fold_assignment, kfold_base_predictions, BaseTrainer, CentroidTrainer, SvrBaseTrainer,
};
pub use meta::{assemble_meta_features, MetaFeatures};
pub use prediction::{validate_model_name, PredictionSet};
pub use stacking::{predict_stacking, train_stacking, StackingModel, ENSEMBLE_MODEL_NAME};
